#ifndef IFSL_UNKNOWN_GATE_HPP
#define IFSL_UNKNOWN_GATE_HPP

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
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
#include "../selector/encoder.hpp"
#include "../selector/gumbel.hpp"
#include "mixed.hpp"

namespace ifsl {

    struct GateConfig {
        std::int64_t hidden_size{100};
        double learning_rate{1e-3};
        double alpha{1.0};
        double beta{0.0};
        std::int64_t episodes{200000};
        std::int64_t validate_every{500};
        std::int64_t validation_episodes{600};
        std::uint64_t validation_seed{2021};
        std::int64_t way{5};
        std::int64_t shot{1};
        std::int64_t queries{16};
        Distance distance{Distance::squared_euclidean};

        [[nodiscard]] EpisodeShape shape() const { return {way, shot, queries}; }
    };

    NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GateConfig, hidden_size, learning_rate, alpha, beta, episodes, validate_every,
                                                    validation_episodes, validation_seed, way, shot, queries, distance)

    struct GatePoint {
        std::int64_t episode{0};
        double accuracy{0.0};
        double human_friendly{0.0};   // fraction of episodes with gate < 0.5
    };

    NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GatePoint, episode, accuracy, human_friendly)

    struct GateCheckpoint {
        GateConfig config;
        EpisodeEncoder net{nullptr};
        std::uint64_t seed{0};
        std::vector<std::string> upstream_hashes;   // f_h, g_h, f_u
        GatePoint best;
        std::vector<GatePoint> curve;

        [[nodiscard]] std::string hash() const { return weights_hash(*net); }
    };

    // Everything about one episode in both spaces, with g_h's hard mask applied.
    struct MixedEpisode {
        EpisodeTensors known;
        EpisodeTensors unknown;
        torch::Tensor pi;          // g_h probabilities, or ones when no selector is used
        torch::Tensor selection;   // hard mask s
        torch::Tensor gate_input;  // [N, A + A_u] = concat(s * c_hat, c_bar)
    };

    [[nodiscard]] inline MixedEpisode mixed_episode(const torch::Tensor& known, const torch::Tensor& unknown,
                                                    EpisodeEncoder* selector, const Episode& episode)
    {
        torch::NoGradGuard no_grad;
        MixedEpisode out;
        out.known = episode_tensors(known, episode);
        out.unknown = episode_tensors(unknown, episode);
        if (selector != nullptr) {
            (*selector)->eval();
            out.pi = (*selector)->forward(out.known.prototypes);
            out.selection = hard_select(out.pi);
        } else {
            out.pi = torch::ones({known.size(1)});
            out.selection = torch::ones({known.size(1)});
        }
        out.gate_input = mixed_vectors(out.known.prototypes * out.selection, out.unknown.prototypes);
        return out;
    }

    // Soft gate value for one episode's mixed prototypes.
    [[nodiscard]] inline double gate_value(EpisodeEncoder& gate, const torch::Tensor& mixed_prototypes)
    {
        torch::NoGradGuard no_grad;
        gate->eval();
        if (gate->output_width() != 1) {
            throw ValidationError("gate network must have a scalar output");
        }
        return gate->forward(mixed_prototypes).item<double>();
    }

    [[nodiscard]] inline bool participates(double gate) noexcept
    {
        return gate >= 0.5;
    }

    // Accuracy with the binarised gate and the fraction of human-friendly episodes.
    [[nodiscard]] inline GatePoint evaluate_gate(EpisodeEncoder& gate, EpisodeEncoder& selector, const torch::Tensor& known,
                                                 const torch::Tensor& unknown, const std::vector<Episode>& episodes, Distance distance)
    {
        GatePoint point;
        for (const auto& episode : episodes) {
            const auto mixed = mixed_episode(known, unknown, &selector, episode);
            const double u = participates(gate_value(gate, mixed.gate_input)) ? 1.0 : 0.0;
            const auto result = mixed_classify(mixed.known.query, mixed.known.prototypes, mixed.unknown.query, mixed.unknown.prototypes,
                                               mixed.selection, u, distance);
            point.accuracy += episode_accuracy(result.predicted, mixed.known.labels);
            point.human_friendly += u == 0.0 ? 1.0 : 0.0;
        }
        const auto count = static_cast<double>(std::max<std::size_t>(1, episodes.size()));
        point.accuracy /= count;
        point.human_friendly /= count;
        return point;
    }

    // Trains g_u with alpha * l_cls(mixed space, soft u) + beta * u; f_h, g_h and f_u stay frozen
    // (their outputs arrive as the `known` / `unknown` tables and the selector's hard masks).
    [[nodiscard]] inline GateCheckpoint train_gate(const torch::Tensor& known, const torch::Tensor& unknown, EpisodeEncoder& selector,
                                                   const DatasetView& base, const DatasetView& validation, const GateConfig& config,
                                                   std::uint64_t seed, std::vector<std::string> upstream_hashes = {},
                                                   const ProgressFn& progress = {})
    {
        if (config.beta < 0.0 || config.alpha < 0.0) {
            throw ConfigError("gate loss weights alpha and beta must be non-negative");
        }
        if (base.empty() || validation.empty()) {
            throw ConfigError("gate training needs non-empty base and validation splits");
        }
        if (config.episodes < 1 || config.validate_every < 1 || config.validation_episodes < 1) {
            throw ConfigError("gate config needs positive episode counts");
        }
        const auto images = base.dataset()->num_images();
        if (known.size(0) != images || unknown.size(0) != images) {
            throw ConfigError("feature tables must hold one row per dataset image");
        }
        if (selector->input_width() != known.size(1)) {
            throw ConfigError("selector width differs from the f_h output width");
        }

        torch::manual_seed(seed);
        Rng rng(seed);
        GateCheckpoint result;
        result.config = config;
        result.seed = seed;
        result.upstream_hashes = std::move(upstream_hashes);
        const auto known_table = known.detach().to(torch::kFloat);
        const auto unknown_table = unknown.detach().to(torch::kFloat);
        result.net = EpisodeEncoder(known.size(1) + unknown.size(1), 1, config.hidden_size);
        auto& net = result.net;
        torch::optim::Adam optimizer(net->parameters(), torch::optim::AdamOptions(config.learning_rate));

        const auto shape = config.shape();
        const auto pool = base.pool();
        const auto validation_set = sample_episodes(validation.pool(), shape, config.validation_episodes, config.validation_seed);

        ModuleSnapshot best;
        result.best.accuracy = -1.0;
        for (std::int64_t e = 0; e < config.episodes; ++e) {
            const auto mixed = mixed_episode(known_table, unknown_table, &selector, sample_episode(pool, shape, rng));
            net->train();
            const auto u = net->forward(mixed.gate_input);
            const auto mask = mixed_mask(mixed.selection, u, unknown.size(1));
            const auto probabilities = classify(mixed_vectors(mixed.known.query, mixed.unknown.query),
                                                mixed_vectors(mixed.known.prototypes, mixed.unknown.prototypes), mask, config.distance)
                                           .probabilities;
            const auto loss = config.alpha * episode_loss(probabilities, mixed.known.labels) + config.beta * u.sum();
            optimizer.zero_grad();
            loss.backward();
            optimizer.step();

            const auto done = e + 1;
            if (done % config.validate_every == 0 || done == config.episodes) {
                auto point = evaluate_gate(net, selector, known_table, unknown_table, validation_set, config.distance);
                point.episode = done;
                result.curve.push_back(point);
                if (point.accuracy > result.best.accuracy) {
                    result.best = point;
                    best = ModuleSnapshot(*net);
                }
                if (progress) {
                    std::ostringstream line;
                    line << "g_u episode " << done << "/" << config.episodes << " val acc " << 100.0 * point.accuracy
                         << " human-friendly " << 100.0 * point.human_friendly << "%";
                    progress(line.str());
                }
            }
        }
        best.restore(*net);
        net->eval();
        return result;
    }

}

#endif // IFSL_UNKNOWN_GATE_HPP
