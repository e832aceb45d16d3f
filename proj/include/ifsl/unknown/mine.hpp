#ifndef IFSL_UNKNOWN_MINE_HPP
#define IFSL_UNKNOWN_MINE_HPP

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>

#include "../data/episode.hpp"
#include "../error.hpp"

namespace ifsl {

    // f_I: MLP on the concatenated pair (first, second) -> scalar score.
    class CriticImpl : public torch::nn::Module {
    public:
        CriticImpl(std::int64_t first_width, std::int64_t second_width, std::int64_t hidden = 50)
            : first_width_(first_width), second_width_(second_width)
        {
            if (first_width < 1 || second_width < 1 || hidden < 1) {
                throw ConfigError("critic widths must be positive");
            }
            layers_ = register_module("layers", torch::nn::Sequential(torch::nn::Linear(first_width + second_width, hidden),
                                                                      torch::nn::ReLU(), torch::nn::Linear(hidden, hidden),
                                                                      torch::nn::ReLU(), torch::nn::Linear(hidden, 1)));
        }

        // [N, first] x [N, second] -> [N]
        torch::Tensor forward(const torch::Tensor& first, const torch::Tensor& second)
        {
            if (first.dim() != 2 || second.dim() != 2 || first.size(0) != second.size(0) || first.size(1) != first_width_ ||
                second.size(1) != second_width_) {
                throw ValidationError("critic expects [N, " + std::to_string(first_width_) + "] and [N, " +
                                      std::to_string(second_width_) + "] inputs");
            }
            const auto pair = torch::cat({first, second}, 1).to(layers_->parameters().front().scalar_type());
            return layers_->forward(pair).squeeze(1);
        }

    private:
        std::int64_t first_width_;
        std::int64_t second_width_;
        torch::nn::Sequential layers_{nullptr};
    };
    TORCH_MODULE(Critic);

    // mean(joint) - log(mean(exp(marginal))), the exponential term evaluated with a max shift.
    [[nodiscard]] inline torch::Tensor mine_bound_from_scores(const torch::Tensor& joint, const torch::Tensor& marginal)
    {
        if (joint.dim() != 1 || marginal.dim() != 1 || joint.size(0) < 2 || marginal.size(0) < 2) {
            throw ValidationError("MINE needs at least two joint and two marginal scores");
        }
        if (!torch::isfinite(joint).all().item<bool>() || !torch::isfinite(marginal).all().item<bool>()) {
            throw NumericError("critic produced a non-finite score");
        }
        const auto shift = marginal.max().detach();
        const auto log_mean_exp = shift + (marginal - shift).exp().mean().log();
        return joint.mean() - log_mean_exp;
    }

    // Joint pairs (first_i, second_i); marginal pairs (marginal_first_i, second_i) with
    // marginal_first drawn independently of second.
    [[nodiscard]] inline torch::Tensor mine_lower_bound(Critic& critic, const torch::Tensor& first, const torch::Tensor& second,
                                                        const torch::Tensor& marginal_first)
    {
        if (first.size(0) < 2 || marginal_first.size(0) != first.size(0)) {
            throw ValidationError("MINE needs N >= 2 joint pairs and as many marginal pairs");
        }
        return mine_bound_from_scores(critic->forward(first, second), critic->forward(marginal_first, second));
    }

    struct MineConfig {
        std::int64_t hidden{50};
        double learning_rate{1e-3};
        std::int64_t batch_size{512};
        std::int64_t steps{3000};
        std::int64_t evaluation_samples{10000};
    };

    NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(MineConfig, hidden, learning_rate, batch_size, steps, evaluation_samples)

    // Returns `count` joint pairs (first, second) drawn from the distribution under study.
    using PairSampler = std::function<std::pair<torch::Tensor, torch::Tensor>(std::int64_t count, Rng& rng)>;

    // Trains a fresh critic by ascending the bound on sampled batches, then evaluates the bound on
    // fresh evaluation_samples pairs. Marginal pairs take `first` from an independent draw.
    [[nodiscard]] inline double estimate_mutual_information(const PairSampler& sample, std::int64_t first_width,
                                                            std::int64_t second_width, const MineConfig& config, std::uint64_t seed)
    {
        if (config.batch_size < 2 || config.evaluation_samples < 2 || config.steps < 0) {
            throw ConfigError("MINE estimation needs batches of at least two pairs");
        }
        torch::manual_seed(seed);
        Rng rng(seed);
        Critic critic(first_width, second_width, config.hidden);
        torch::optim::Adam optimizer(critic->parameters(), torch::optim::AdamOptions(config.learning_rate));
        for (std::int64_t step = 0; step < config.steps; ++step) {
            const auto [first, second] = sample(config.batch_size, rng);
            const auto independent = sample(config.batch_size, rng).first;
            optimizer.zero_grad();
            const auto loss = -mine_lower_bound(critic, first, second, independent);
            loss.backward();
            optimizer.step();
        }
        torch::NoGradGuard no_grad;
        const auto [first, second] = sample(config.evaluation_samples, rng);
        const auto independent = sample(config.evaluation_samples, rng).first;
        return mine_lower_bound(critic, first, second, independent).item<double>();
    }

    // PairSampler over two aligned feature tables (rows are samples).
    [[nodiscard]] inline PairSampler table_sampler(torch::Tensor first, torch::Tensor second)
    {
        if (first.size(0) != second.size(0) || first.size(0) < 2) {
            throw ValidationError("paired tables must have the same row count (at least two)");
        }
        return [first = std::move(first), second = std::move(second)](std::int64_t count, Rng& rng) {
            std::uniform_int_distribution<std::int64_t> pick(0, first.size(0) - 1);
            std::vector<std::int64_t> rows(static_cast<std::size_t>(count));
            for (auto& r : rows) {
                r = pick(rng);
            }
            const auto index = torch::tensor(rows, torch::kLong);
            return std::make_pair(first.index_select(0, index), second.index_select(0, index));
        };
    }

}

#endif // IFSL_UNKNOWN_MINE_HPP
