#ifndef IFSL_SELECTOR_GUMBEL_HPP
#define IFSL_SELECTOR_GUMBEL_HPP

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "../data/episode.hpp"
#include "../error.hpp"

namespace ifsl {

    inline constexpr double kProbabilityFloor = 1e-6;

    // tau = max(initial * 2^-floor(episode / halve_every), floor)
    struct TemperatureSchedule {
        double initial{4.0};
        std::int64_t halve_every{12500};
        double floor{0.5};
    };

    NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TemperatureSchedule, initial, halve_every, floor)

    [[nodiscard]] inline double temperature_schedule(std::int64_t episode, const TemperatureSchedule& schedule = {})
    {
        if (episode < 0) {
            throw ConfigError("temperature_schedule: episode index must be non-negative");
        }
        const auto halvings = static_cast<double>(episode / std::max<std::int64_t>(1, schedule.halve_every));
        return std::max(schedule.initial * std::exp2(-halvings), schedule.floor);
    }

    [[nodiscard]] inline torch::Tensor clamp_probabilities(const torch::Tensor& pi)
    {
        return pi.clamp(kProbabilityFloor, 1.0 - kProbabilityFloor);
    }

    // Two independent standard Gumbel draws per attribute: one for "keep", one for "drop".
    struct GumbelNoise {
        torch::Tensor keep;
        torch::Tensor drop;
    };

    [[nodiscard]] inline GumbelNoise draw_gumbel_noise(std::int64_t count, Rng& rng, torch::Dtype dtype = torch::kFloat)
    {
        std::uniform_real_distribution<double> uniform(0.0, 1.0);
        const auto draw = [&]() {
            double u = 0.0;
            while (u <= 0.0) {
                u = uniform(rng);
            }
            return -std::log(-std::log(u));
        };
        std::vector<double> keep(static_cast<std::size_t>(count));
        std::vector<double> drop(static_cast<std::size_t>(count));
        for (std::size_t i = 0; i < keep.size(); ++i) {
            keep[i] = draw();
            drop[i] = draw();
        }
        return GumbelNoise{torch::tensor(keep, torch::kDouble).to(dtype), torch::tensor(drop, torch::kDouble).to(dtype)};
    }

    namespace detail {

        inline void require_open_unit(const torch::Tensor& pi)
        {
            if (!pi.defined() || pi.numel() == 0) {
                throw DomainError("selection probabilities are empty");
            }
            if (pi.le(0.0).any().item<bool>() || pi.ge(1.0).any().item<bool>()) {
                throw DomainError("selection probabilities must lie strictly inside (0, 1); clamp to [1e-6, 1-1e-6] first");
            }
        }

    }

    // Softmax weights of the keep/drop branches, [..., 2]; column 0 is the relaxed state s.
    [[nodiscard]] inline torch::Tensor gumbel_branches(const torch::Tensor& pi, const GumbelNoise& noise, double tau)
    {
        if (!(tau > 0.0)) {
            throw DomainError("Gumbel temperature must be positive");
        }
        detail::require_open_unit(pi);
        const auto keep = (pi.log() + noise.keep.to(pi.scalar_type())) / tau;
        const auto drop = ((1.0 - pi).log() + noise.drop.to(pi.scalar_type())) / tau;
        return torch::softmax(torch::stack({keep, drop}, -1), -1);
    }

    // Relaxed binary state for fixed noise; differentiable in pi.
    [[nodiscard]] inline torch::Tensor gumbel_relax(const torch::Tensor& pi, const GumbelNoise& noise, double tau)
    {
        return gumbel_branches(pi, noise, tau).select(-1, 0);
    }

    [[nodiscard]] inline torch::Tensor gumbel_sample(const torch::Tensor& pi, double tau, Rng& rng)
    {
        detail::require_open_unit(pi);
        return gumbel_relax(pi, draw_gumbel_noise(pi.numel(), rng, pi.scalar_type()), tau);
    }

    // Inference-time selection: s_i = 1 iff pi_i >= 0.5.
    [[nodiscard]] inline torch::Tensor hard_select(const torch::Tensor& pi)
    {
        return pi.detach().ge(0.5).to(pi.scalar_type());
    }

    // alpha * l_cls + eta * ||s||_1; states are non-negative so the norm is their sum.
    [[nodiscard]] inline torch::Tensor selector_loss(const torch::Tensor& classification_loss, const torch::Tensor& states,
                                                     double alpha, double eta)
    {
        if (alpha < 0.0 || eta < 0.0) {
            throw ConfigError("selector_loss: alpha and eta must be non-negative");
        }
        return alpha * classification_loss + eta * states.sum();
    }

}

#endif // IFSL_SELECTOR_GUMBEL_HPP
