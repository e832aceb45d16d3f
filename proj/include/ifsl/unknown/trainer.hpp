#ifndef IFSL_UNKNOWN_TRAINER_HPP
#define IFSL_UNKNOWN_TRAINER_HPP

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
#include "../data/preprocess.hpp"
#include "../error.hpp"
#include "../hashing.hpp"
#include "../nn_state.hpp"
#include "../predictor/network.hpp"
#include "../selector/trainer.hpp"
#include "mine.hpp"

namespace ifsl {

    struct UnknownConfig {
        std::int64_t hidden_channels{64};
        double lambda{2.0};
        double learning_rate{1e-2};      // f_u and f_I
        std::int64_t episodes{200000};   // outer steps E1
        std::int64_t critic_steps{10};   // inner steps E2
        std::int64_t mine_batch{64};     // samples per MINE batch
        std::int64_t critic_hidden{50};
        std::int64_t validate_every{500};
        std::int64_t validation_episodes{600};
        std::uint64_t validation_seed{2021};
        std::int64_t way{5};
        std::int64_t shot{1};
        std::int64_t queries{16};
        Distance distance{Distance::squared_euclidean};

        [[nodiscard]] EpisodeShape shape() const { return {way, shot, queries}; }
    };

    NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(UnknownConfig, hidden_channels, lambda, learning_rate, episodes, critic_steps,
                                                    mine_batch, critic_hidden, validate_every, validation_episodes, validation_seed,
                                                    way, shot, queries, distance)

    struct UnknownCheckpoint {
        UnknownConfig config;
        AttributeNet net{nullptr};     // f_u
        Critic critic{nullptr};        // f_I
        std::uint64_t seed{0};
        std::string upstream_hash;     // f_h
        ValidationPoint best;          // `selected` holds the unknown width
        std::vector<ValidationPoint> curve;
        std::vector<double> mine_bounds;  // l_MI of every outer step

        [[nodiscard]] std::string hash() const { return weights_hash(*net); }
    };

    // Unmasked episodic accuracy in one feature space.
    [[nodiscard]] inline double evaluate_space(const torch::Tensor& features, const std::vector<Episode>& episodes, Distance distance)
    {
        torch::NoGradGuard no_grad;
        double total = 0.0;
        for (const auto& episode : episodes) {
            const auto tensors = episode_tensors(features, episode);
            total += episode_accuracy(classify(tensors.query, tensors.prototypes, std::nullopt, distance).predicted, tensors.labels);
        }
        return episodes.empty() ? 0.0 : total / static_cast<double>(episodes.size());
    }

    namespace detail {

        [[nodiscard]] inline std::vector<std::int64_t> draw_batch(const std::vector<std::int64_t>& pool, std::int64_t count, Rng& rng)
        {
            return draw_without_replacement(pool, static_cast<std::size_t>(count), rng);
        }

    }

    // Algorithm 1. `known` holds the frozen f_h output for every dataset image.
    // Each outer step draws one episode for l_cls (unmasked, in the unknown space) and one
    // batch S for the MI term; the critic takes E2 ascent steps against fresh batches S',
    // then f_u takes one descent step on l_cls + lambda * l_MI with a fresh batch S''.
    [[nodiscard]] inline UnknownCheckpoint train_unknown_predictor(const torch::Tensor& known, const DatasetView& base,
                                                                   const DatasetView& validation, const UnknownConfig& config,
                                                                   std::uint64_t seed, std::string upstream_hash = {},
                                                                   const ProgressFn& progress = {})
    {
        if (base.empty() || validation.empty()) {
            throw ConfigError("unknown-attribute training needs non-empty base and validation splits");
        }
        const auto& dataset = *base.dataset();
        if (!known.defined() || known.dim() != 2 || known.size(0) != dataset.num_images() ||
            known.size(1) != dataset.num_attributes()) {
            throw ConfigError("f_h features must be [num_images, A] for this dataset");
        }
        if (config.episodes < 1 || config.critic_steps < 0 || config.mine_batch < 2 || config.validate_every < 1 ||
            config.validation_episodes < 1) {
            throw ConfigError("unknown config needs positive episode counts and MINE batches of at least 2");
        }
        if (config.lambda < 0.0 || !(config.learning_rate > 0.0)) {
            throw ConfigError("lambda must be non-negative and the learning rate positive");
        }
        const auto base_images = base.image_indices();
        if (static_cast<std::int64_t>(base_images.size()) < config.mine_batch) {
            throw ConfigError("base split has fewer images than one MINE batch");
        }

        torch::manual_seed(seed);
        Rng rng(seed);
        const auto width = dataset.num_attributes();
        UnknownCheckpoint result;
        result.config = config;
        result.seed = seed;
        result.upstream_hash = std::move(upstream_hash);
        result.net = AttributeNet(width, config.hidden_channels);
        result.critic = Critic(width, width, config.critic_hidden);
        auto& net = result.net;
        auto& critic = result.critic;
        torch::optim::Adam net_optimizer(net->parameters(), torch::optim::AdamOptions(config.learning_rate));
        torch::optim::Adam critic_optimizer(critic->parameters(), torch::optim::AdamOptions(config.learning_rate));

        const auto shape = config.shape();
        const auto pool = base.pool();
        const auto validation_set = sample_episodes(validation.pool(), shape, config.validation_episodes, config.validation_seed);
        const auto known_table = known.detach().to(torch::kFloat);

        ModuleSnapshot best;
        result.best.accuracy = -1.0;
        for (std::int64_t e = 0; e < config.episodes; ++e) {
            net->train();
            critic->train();

            const auto episode = sample_episode(pool, shape, rng);
            std::vector<std::int64_t> members(episode.support);
            members.insert(members.end(), episode.query.begin(), episode.query.end());
            const auto unknown = net->forward(prepare_batch(dataset, members));
            const auto support_count = static_cast<std::int64_t>(episode.support.size());
            const auto prototypes = compute_prototypes(unknown.slice(0, 0, support_count), episode.way);
            const auto probabilities = classify(unknown.slice(0, support_count), prototypes, std::nullopt, config.distance).probabilities;
            const auto l_cls = episode_loss(probabilities, episode.query_labels());

            const auto batch = detail::draw_batch(base_images, config.mine_batch, rng);
            const auto known_batch = gather_rows(known_table, batch);
            const auto batch_images = prepare_batch(dataset, batch);
            torch::Tensor held;
            {
                torch::NoGradGuard no_grad;
                held = net->forward(batch_images);
            }
            for (std::int64_t k = 0; k < config.critic_steps; ++k) {
                torch::Tensor marginal;
                {
                    torch::NoGradGuard no_grad;
                    marginal = net->forward(prepare_batch(dataset, detail::draw_batch(base_images, config.mine_batch, rng)));
                }
                critic_optimizer.zero_grad();
                const auto ascent = -mine_lower_bound(critic, held, known_batch, marginal);
                ascent.backward();
                critic_optimizer.step();
            }

            const auto marginal = net->forward(prepare_batch(dataset, detail::draw_batch(base_images, config.mine_batch, rng)));
            const auto l_mi = mine_lower_bound(critic, net->forward(batch_images), known_batch, marginal);
            const auto loss = l_cls + config.lambda * l_mi;
            net_optimizer.zero_grad();
            loss.backward();
            net_optimizer.step();
            result.mine_bounds.push_back(l_mi.item<double>());

            const auto done = e + 1;
            if (done % config.validate_every == 0 || done == config.episodes) {
                ValidationPoint point;
                point.episode = done;
                point.accuracy = evaluate_space(predict_view(net, validation), validation_set, config.distance);
                point.selected = static_cast<double>(width);
                result.curve.push_back(point);
                if (point.accuracy > result.best.accuracy) {
                    result.best = point;
                    best = ModuleSnapshot(*net);
                }
                if (progress) {
                    std::ostringstream line;
                    line << "f_u episode " << done << "/" << config.episodes << " l_cls " << l_cls.item<double>() << " l_MI "
                         << result.mine_bounds.back() << " val acc " << 100.0 * point.accuracy;
                    progress(line.str());
                }
            }
        }
        best.restore(*net);
        net->eval();
        critic->eval();
        return result;
    }

}

#endif // IFSL_UNKNOWN_TRAINER_HPP
