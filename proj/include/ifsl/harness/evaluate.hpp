#ifndef IFSL_HARNESS_EVALUATE_HPP
#define IFSL_HARNESS_EVALUATE_HPP

#include <torch/torch.h>

#include <optional>
#include <string>
#include <vector>

#include "../classifier/prototype.hpp"
#include "../data/dataset.hpp"
#include "../data/episode.hpp"
#include "../error.hpp"
#include "../selector/encoder.hpp"
#include "../stats.hpp"
#include "../unknown/gate.hpp"
#include "../unknown/mixed.hpp"
#include "report.hpp"

namespace ifsl {

    // Frozen models as feature tables (one row per dataset image) plus episode-level networks.
    struct EvalModels {
        const torch::Tensor* known{nullptr};     // f_h outputs, required
        EpisodeEncoder* selector{nullptr};       // g_h; null keeps every attribute
        const torch::Tensor* unknown{nullptr};   // f_u outputs
        EpisodeEncoder* gate{nullptr};           // g_u; null with unknown set means u = 1
    };

    [[nodiscard]] inline std::string evaluation_space(const EvalModels& models)
    {
        if (models.unknown == nullptr) {
            return "human-friendly";
        }
        return models.gate == nullptr ? "mixed" : "gated";
    }

    // Evaluates a fixed episode list. Order of episodes does not affect the result.
    [[nodiscard]] inline EvalReport evaluate_episodes(const EvalModels& models, const std::vector<Episode>& episodes,
                                                      const Protocol& protocol)
    {
        if (models.known == nullptr) {
            throw ConfigError("evaluation needs f_h features");
        }
        if (models.gate != nullptr && models.unknown == nullptr) {
            throw ConfigError("a gate without unknown attributes cannot be evaluated");
        }
        EvalReport report;
        report.protocol = protocol;
        report.space = evaluation_space(models);
        report.num_attributes = models.known->size(1);
        std::int64_t human_friendly = 0;
        for (const auto& episode : episodes) {
            const auto& unknown = models.unknown != nullptr ? *models.unknown : *models.known;
            const auto mixed = mixed_episode(*models.known, unknown, models.selector, episode);
            const auto selected = static_cast<std::int64_t>(mixed.selection.sum().item<double>());
            EpisodeProbabilities result;
            if (models.unknown == nullptr) {
                result = classify(mixed.known.query, mixed.known.prototypes, mixed.selection, protocol.distance);
                ++human_friendly;
            } else {
                double u = 1.0;
                if (models.gate != nullptr) {
                    const double value = gate_value(*models.gate, mixed.gate_input);
                    report.episode_gate.push_back(value);
                    u = participates(value) ? 1.0 : 0.0;
                }
                human_friendly += u == 0.0 ? 1 : 0;
                result = mixed_classify(mixed.known.query, mixed.known.prototypes, mixed.unknown.query, mixed.unknown.prototypes,
                                        mixed.selection, u, protocol.distance);
            }
            report.empty_mask_episodes += selected == 0 ? 1 : 0;
            report.episode_selected.push_back(selected);
            report.episode_accuracy.push_back(episode_accuracy(result.predicted, mixed.known.labels));
        }
        report.accuracy = confidence_interval(report.episode_accuracy);
        double selected_sum = 0.0;
        for (const auto s : report.episode_selected) {
            selected_sum += static_cast<double>(s);
        }
        const auto count = static_cast<double>(episodes.size());
        report.avg_selected_attributes = selected_sum / count;
        report.pct_human_friendly_episodes = 100.0 * static_cast<double>(human_friendly) / count;
        return report;
    }

    // Samples protocol.episodes episodes from the novel pool with protocol.seed and evaluates them.
    [[nodiscard]] inline EvalReport evaluate(const EvalModels& models, const DatasetView& novel, const Protocol& protocol)
    {
        if (protocol.episodes < 2) {
            throw ConfigError("evaluation needs at least two episodes");
        }
        const auto episodes = sample_episodes(novel.pool(), protocol.shape(), protocol.episodes, protocol.seed);
        return evaluate_episodes(models, episodes, protocol);
    }

}

#endif // IFSL_HARNESS_EVALUATE_HPP
