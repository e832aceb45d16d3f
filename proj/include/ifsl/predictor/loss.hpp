#ifndef IFSL_PREDICTOR_LOSS_HPP
#define IFSL_PREDICTOR_LOSS_HPP

#include <torch/torch.h>

#include "../error.hpp"

namespace ifsl {

    inline constexpr double kBceEpsilon = 1e-7;

    namespace detail {

        inline void require_binary(const torch::Tensor& a, const char* what)
        {
            if (!a.defined() || a.numel() == 0) {
                throw ValidationError(std::string(what) + ": empty attribute tensor");
            }
            const auto as_double = a.to(torch::kDouble);
            if (as_double.ne(0.0).logical_and(as_double.ne(1.0)).any().item<bool>()) {
                throw ValidationError(std::string(what) + ": attribute vector must be binary");
            }
        }

    }

    // Per-attribute weights 1/n where n counts the attributes sharing this attribute's value
    // in the same sample. Works on a single vector [A] or a batch [B, A].
    [[nodiscard]] inline torch::Tensor sample_weights(const torch::Tensor& a)
    {
        detail::require_binary(a, "sample_weights");
        const auto values = a.to(torch::kDouble);
        const auto width = static_cast<double>(values.size(-1));
        const auto present = values.sum(-1, true);
        const auto absent = width - present;
        // clamp only guards the branch that torch::where discards
        return torch::where(values.gt(0.5), 1.0 / present.clamp_min(1.0), 1.0 / absent.clamp_min(1.0));
    }

    // Sample-wise weighted binary cross entropy, summed over samples and attributes.
    [[nodiscard]] inline torch::Tensor weighted_bce(const torch::Tensor& predicted, const torch::Tensor& target)
    {
        if (!predicted.defined() || !target.defined() || predicted.sizes() != target.sizes()) {
            throw ValidationError("weighted_bce: prediction and target shapes differ");
        }
        const auto weights = sample_weights(target).to(predicted.scalar_type());
        const auto a = target.to(predicted.scalar_type());
        const auto clamped = predicted.clamp(kBceEpsilon, 1.0 - kBceEpsilon);
        const auto terms = a * clamped.log() + (1.0 - a) * (1.0 - clamped).log();
        return -(weights * terms).sum();
    }

}

#endif // IFSL_PREDICTOR_LOSS_HPP
