#ifndef IFSL_UNKNOWN_MIXED_HPP
#define IFSL_UNKNOWN_MIXED_HPP

#include <torch/torch.h>

#include <cstdint>

#include "../classifier/prototype.hpp"
#include "../error.hpp"

namespace ifsl {

    // concat(s, u * 1): weights of the mixed space, human-friendly coordinates first.
    [[nodiscard]] inline torch::Tensor mixed_mask(const torch::Tensor& selection, const torch::Tensor& gate, std::int64_t unknown_width)
    {
        if (selection.dim() != 1 || gate.numel() != 1) {
            throw ValidationError("mixed mask needs a selection vector and a scalar gate");
        }
        return torch::cat({selection, gate.reshape({1}).to(selection.scalar_type()).expand({unknown_width})});
    }

    [[nodiscard]] inline torch::Tensor mixed_mask(const torch::Tensor& selection, double gate, std::int64_t unknown_width)
    {
        return mixed_mask(selection, torch::tensor(gate, selection.options()), unknown_width);
    }

    // Row-wise concat(known, unknown); prototypes are means, so concatenating per-space
    // prototypes equals prototyping the concatenated vectors.
    [[nodiscard]] inline torch::Tensor mixed_vectors(const torch::Tensor& known, const torch::Tensor& unknown)
    {
        if (known.dim() != 2 || unknown.dim() != 2 || known.size(0) != unknown.size(0)) {
            throw ValidationError("known and unknown attribute tables must have matching rows");
        }
        return torch::cat({known, unknown.to(known.scalar_type())}, 1);
    }

    // Classification in the space concat(s * a_hat, u * a_bar).
    [[nodiscard]] inline EpisodeProbabilities mixed_classify(const torch::Tensor& known_queries, const torch::Tensor& known_prototypes,
                                                             const torch::Tensor& unknown_queries,
                                                             const torch::Tensor& unknown_prototypes, const torch::Tensor& selection,
                                                             double gate, Distance distance = Distance::squared_euclidean)
    {
        if (selection.numel() != known_queries.size(1)) {
            throw ValidationError("selection mask length differs from the known attribute width");
        }
        const auto mask = mixed_mask(selection.to(known_queries.scalar_type()), gate, unknown_queries.size(1));
        return classify(mixed_vectors(known_queries, unknown_queries), mixed_vectors(known_prototypes, unknown_prototypes), mask,
                        distance);
    }

}

#endif // IFSL_UNKNOWN_MIXED_HPP
