#ifndef IFSL_SELECTOR_TRAINER_HPP
#define IFSL_SELECTOR_TRAINER_HPP

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "../classifier/episodic.hpp"
#include "../classifier/prototype.hpp"
#include "../data/dataset.hpp"
#include "../data/episode.hpp"
#include "../error.hpp"
#include "../hashing.hpp"
#include "../nn_state.hpp"
#include "encoder.hpp"
#include "gumbel.hpp"

namespace ifsl {

    struct SelectorConfig {
        std::int64_t hidden_size{100};
        double learning_rate{1e-3};
        std::int64_t episodes{200000};
        std::int64_t validate_every{500};
        std::int64_t validation_episodes{600};
        std::uint64_t validation_seed{2021};
        double alpha{1.0};
        double eta{0.0};
        TemperatureSchedule temperature{};
        std::int64_t way{5};
        std::int64_t shot{1};
        std::int64_t queries{16};
        Distance distance{Distance::squared_euclidean};

        [[nodiscard]] EpisodeShape shape() const { return {way, shot, queries}; }
    };

    NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SelectorConfig, hidden_size, learning_rate, episodes, validate_every,
                                                    validation_episodes, validation_seed, alpha, eta, temperature, way, shot,
                                                    queries, distance)

    struct ValidationPoint {
        std::int64_t episode{0};
        double accuracy{0.0};        // fraction in [0, 1]
        double selected{0.0};        // mean hard-selected attribute count
    };

    NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ValidationPoint, episode, accuracy, selected)

    struct SelectorCheckpoint {
        SelectorConfig config;
        EpisodeEncoder net{nullptr};
        std::uint64_t seed{0};
        std::string upstream_hash;     // f_h weights the selector was trained on
        ValidationPoint best;
        std::vector<ValidationPoint> curve;

        [[nodiscard]] std::string hash() const { return weights_hash(*net); }
    };

    // Hard-selection episodic accuracy and selected count over a fixed episode list.
    [[nodiscard]] inline ValidationPoint evaluate_selector(EpisodeEncoder& selector, const torch::Tensor& features,
                                                           const std::vector<Episode>& episodes, Distance distance)
    {
        torch::NoGradGuard no_grad;
        selector->eval();
        ValidationPoint point;
        for (const auto& episode : episodes) {
            const auto tensors = episode_tensors(features, episode);
            const auto mask = hard_select(selector->forward(tensors.prototypes));
            const auto result = classify(tensors.query, tensors.prototypes, mask, distance);
            point.accuracy += episode_accuracy(result.predicted, tensors.labels);
            point.selected += mask.sum().item<double>();
        }
        const auto count = static_cast<double>(std::max<std::size_t>(1, episodes.size()));
        point.accuracy /= count;
        point.selected /= count;
        return point;
    }

    // Episodic training of g_h on frozen attribute predictions. `features` holds one f_h output
    // row per dataset image.
    [[nodiscard]] inline SelectorCheckpoint train_selector(const torch::Tensor& features, const DatasetView& base,
                                                           const DatasetView& validation, const SelectorConfig& config,
                                                           std::uint64_t seed, std::string upstream_hash = {},
                                                           const ProgressFn& progress = {})
    {
        if (base.empty() || validation.empty()) {
            throw ConfigError("selector training needs non-empty base and validation splits");
        }
        if (!features.defined() || features.dim() != 2 || features.size(0) != base.dataset()->num_images()) {
            throw ConfigError("selector features must hold one row per dataset image");
        }
        if (features.size(1) != base.dataset()->num_attributes()) {
            throw ConfigError("f_h predicts " + std::to_string(features.size(1)) + " attributes, dataset has " +
                              std::to_string(base.dataset()->num_attributes()));
        }
        if (config.episodes < 1 || config.validate_every < 1 || config.validation_episodes < 1) {
            throw ConfigError("selector config needs positive episode counts");
        }
        if (config.alpha < 0.0 || config.eta < 0.0) {
            throw ConfigError("selector loss weights must be non-negative");
        }

        torch::manual_seed(seed);
        Rng rng(seed);
        SelectorCheckpoint result;
        result.config = config;
        result.seed = seed;
        result.upstream_hash = std::move(upstream_hash);
        result.net = EpisodeEncoder(features.size(1), features.size(1), config.hidden_size);
        auto& net = result.net;
        torch::optim::Adam optimizer(net->parameters(), torch::optim::AdamOptions(config.learning_rate));

        const auto shape = config.shape();
        const auto pool = base.pool();
        const auto validation_set = sample_episodes(validation.pool(), shape, config.validation_episodes, config.validation_seed);
        const auto table = features.detach().to(torch::kFloat);

        ModuleSnapshot best;
        result.best.accuracy = -1.0;
        for (std::int64_t e = 0; e < config.episodes; ++e) {
            net->train();
            const auto episode = sample_episode(pool, shape, rng);
            const auto tensors = episode_tensors(table, episode);
            const auto pi = clamp_probabilities(net->forward(tensors.prototypes));
            const auto states = gumbel_sample(pi, temperature_schedule(e, config.temperature), rng);
            const auto probabilities = classify(tensors.query, tensors.prototypes, states, config.distance).probabilities;
            const auto loss = selector_loss(episode_loss(probabilities, tensors.labels), states, config.alpha, config.eta);
            optimizer.zero_grad();
            loss.backward();
            optimizer.step();

            const auto done = e + 1;
            if (done % config.validate_every == 0 || done == config.episodes) {
                auto point = evaluate_selector(net, table, validation_set, config.distance);
                point.episode = done;
                result.curve.push_back(point);
                if (point.accuracy > result.best.accuracy) {
                    result.best = point;
                    best = ModuleSnapshot(*net);
                }
                if (progress) {
                    std::ostringstream line;
                    line << "g_h episode " << done << "/" << config.episodes << " val acc " << 100.0 * point.accuracy
                         << " selected " << point.selected;
                    progress(line.str());
                }
            }
        }
        best.restore(*net);
        net->eval();
        return result;
    }

}

#endif // IFSL_SELECTOR_TRAINER_HPP
