#ifndef IFSL_DATA_PREPROCESS_HPP
#define IFSL_DATA_PREPROCESS_HPP

#include <torch/torch.h>

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "dataset.hpp"
#include "episode.hpp"

namespace ifsl {

    // Training-time augmentation: horizontal flip and colour jitter.
    struct Augmentation {
        bool enabled{true};
        double flip_probability{0.5};
        double brightness{0.4};
        double contrast{0.4};
        double saturation{0.4};
    };

    namespace detail {

        inline void jitter_in_place(torch::Tensor image, const Augmentation& augment, Rng& rng)
        {
            // image: float [3, H, W] in [0, 1]
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            const auto factor = [&](double strength) { return 1.0 - strength + 2.0 * strength * unit(rng); };
            if (unit(rng) < augment.flip_probability) {
                image.copy_(image.flip({2}));
            }
            const double brightness = factor(augment.brightness);
            const double contrast = factor(augment.contrast);
            const double saturation = factor(augment.saturation);
            image.mul_(brightness);
            const auto gray = (0.299 * image[0] + 0.587 * image[1] + 0.114 * image[2]).unsqueeze(0);
            image.sub_(gray.mean()).mul_(contrast).add_(gray.mean());
            const auto gray_after = (0.299 * image[0] + 0.587 * image[1] + 0.114 * image[2]).unsqueeze(0);
            image.sub_(gray_after).mul_(saturation).add_(gray_after);
            image.clamp_(0.0, 1.0);
        }

    }

    // Float [B, 3, 84, 84] batch standardised with the dataset's channel statistics.
    [[nodiscard]] inline torch::Tensor prepare_batch(const AttributeDataset& dataset, std::span<const std::int64_t> indices,
                                                     const Augmentation* augment = nullptr, Rng* rng = nullptr)
    {
        const auto index = torch::tensor(std::vector<std::int64_t>(indices.begin(), indices.end()), torch::kLong);
        auto batch = dataset.images().index_select(0, index).permute({0, 3, 1, 2}).to(torch::kFloat).div_(255.0).contiguous();
        if (augment != nullptr && augment->enabled && rng != nullptr) {
            for (std::int64_t i = 0; i < batch.size(0); ++i) {
                detail::jitter_in_place(batch[i], *augment, *rng);
            }
        }
        const auto& stats = dataset.stats();
        const auto mean = torch::tensor({stats.mean[0], stats.mean[1], stats.mean[2]}).view({1, 3, 1, 1});
        const auto stddev = torch::tensor({stats.stddev[0], stats.stddev[1], stats.stddev[2]}).view({1, 3, 1, 1});
        return batch.sub_(mean).div_(stddev);
    }

}

#endif // IFSL_DATA_PREPROCESS_HPP
