#ifndef IFSL_CLASSIFIER_EPISODIC_HPP
#define IFSL_CLASSIFIER_EPISODIC_HPP

#include <torch/torch.h>

#include <cstdint>
#include <vector>

#include "../data/episode.hpp"
#include "../error.hpp"
#include "prototype.hpp"

namespace ifsl {

    // Feature rows of one episode gathered from a table indexed by dataset image index.
    struct EpisodeTensors {
        torch::Tensor support;     // [N*K, D], class-major
        torch::Tensor query;       // [N*Q, D], class-major
        torch::Tensor prototypes;  // [N, D]
        std::vector<std::int64_t> labels;
    };

    [[nodiscard]] inline torch::Tensor gather_rows(const torch::Tensor& table, const std::vector<std::int64_t>& rows)
    {
        return table.index_select(0, torch::tensor(rows, torch::kLong));
    }

    [[nodiscard]] inline EpisodeTensors episode_tensors(const torch::Tensor& features, const Episode& episode)
    {
        if (!features.defined() || features.dim() != 2) {
            throw ValidationError("episode features must be a [images, D] table");
        }
        EpisodeTensors out;
        out.support = gather_rows(features, episode.support);
        out.query = gather_rows(features, episode.query);
        out.prototypes = compute_prototypes(out.support, episode.way);
        out.labels = episode.query_labels();
        return out;
    }

}

#endif // IFSL_CLASSIFIER_EPISODIC_HPP
