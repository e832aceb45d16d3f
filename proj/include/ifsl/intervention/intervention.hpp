#ifndef IFSL_INTERVENTION_INTERVENTION_HPP
#define IFSL_INTERVENTION_INTERVENTION_HPP

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "../classifier/episodic.hpp"
#include "../classifier/prototype.hpp"
#include "../data/dataset.hpp"
#include "../data/episode.hpp"
#include "../error.hpp"
#include "../selector/encoder.hpp"
#include "../stats.hpp"
#include "../unknown/gate.hpp"
#include "../unknown/mixed.hpp"

namespace ifsl {

    enum class Space { human_friendly, mixed };

    NLOHMANN_JSON_SERIALIZE_ENUM(Space, {{Space::human_friendly, "human-friendly"}, {Space::mixed, "mixed"}})

    [[nodiscard]] inline std::string to_string(Space space)
    {
        return space == Space::mixed ? "mixed" : "human-friendly";
    }

    [[nodiscard]] inline Space parse_space(std::string_view name)
    {
        if (name == "human-friendly" || name == "human") {
            return Space::human_friendly;
        }
        if (name == "mixed") {
            return Space::mixed;
        }
        throw ConfigError("unknown space '" + std::string(name) + "' (expected human-friendly or mixed)");
    }

    // Classifier state of one episode as seen by the intervention step. The first
    // `human_width` coordinates are human-friendly attributes; any further ones are unknown.
    struct InterventionState {
        torch::Tensor prototypes;   // [N, D]
        torch::Tensor queries;      // [Q, D]
        torch::Tensor mask;         // [D] weights; concat(s, u * 1) in the mixed space
        std::int64_t human_width{0};
        Distance distance{Distance::squared_euclidean};

        [[nodiscard]] EpisodeProbabilities classify_all() const { return classify(queries, prototypes, mask, distance); }
    };

    struct InterventionOutcome {
        std::int64_t query{0};
        std::int64_t attribute{0};
        std::vector<std::int64_t> targets;
        double value_before{0.0};
        double value_after{0.0};
        torch::Tensor vector;                  // updated query vector
        torch::Tensor probabilities_before;    // [N]
        torch::Tensor probabilities_after;     // [N]
        std::int64_t predicted_before{0};
        std::int64_t predicted_after{0};
    };

    // Sets coordinate `attribute` of query `query` to the mean of the target prototypes' values
    // there and re-classifies that query. Nothing else in `state` changes.
    inline InterventionOutcome intervene(InterventionState& state, std::int64_t query, std::int64_t attribute,
                                         const std::vector<std::int64_t>& targets)
    {
        if (query < 0 || query >= state.queries.size(0)) {
            throw InterventionRejected("query index " + std::to_string(query) + " is not part of this episode");
        }
        if (attribute < 0 || attribute >= state.human_width) {
            throw InterventionRejected("attribute " + std::to_string(attribute) + " is not a human-friendly attribute");
        }
        if (state.mask[attribute].item<double>() == 0.0) {
            throw InterventionRejected("attribute " + std::to_string(attribute) + " was not selected for this episode");
        }
        if (targets.empty()) {
            throw InterventionRejected("no prototype shares the query's value of attribute " + std::to_string(attribute));
        }
        for (const auto t : targets) {
            if (t < 0 || t >= state.prototypes.size(0)) {
                throw InterventionRejected("prototype " + std::to_string(t) + " is not part of this episode");
            }
        }
        torch::NoGradGuard no_grad;
        InterventionOutcome out;
        out.query = query;
        out.attribute = attribute;
        out.targets = targets;
        const auto row = state.queries.slice(0, query, query + 1);
        const auto before = classify(row, state.prototypes, state.mask, state.distance);
        out.probabilities_before = before.probabilities[0];
        out.predicted_before = before.predicted.front();
        out.value_before = state.queries[query][attribute].item<double>();

        const auto value = gather_rows(state.prototypes, targets).select(1, attribute).mean();
        state.queries[query][attribute] = value;
        out.value_after = state.queries[query][attribute].item<double>();
        out.vector = state.queries[query].clone();
        const auto after = classify(row, state.prototypes, state.mask, state.distance);
        out.probabilities_after = after.probabilities[0];
        out.predicted_after = after.predicted.front();
        return out;
    }

    // Binary ground truth of each prototype: the class row for per-class annotations,
    // the rounded support mean for per-image annotations.
    [[nodiscard]] inline torch::Tensor prototype_truth(const AttributeDataset& dataset, const Episode& episode)
    {
        const auto support = dataset.image_attributes(episode.support).to(torch::kDouble);
        return compute_prototypes(support, episode.way).ge(0.5).to(torch::kUInt8);
    }

    // Prototypes whose ground truth at `attribute` equals `value`.
    [[nodiscard]] inline std::vector<std::int64_t> matching_prototypes(const torch::Tensor& truth, std::int64_t attribute, int value)
    {
        std::vector<std::int64_t> out;
        for (std::int64_t n = 0; n < truth.size(0); ++n) {
            if (truth[n][attribute].item<int>() == value) {
                out.push_back(n);
            }
        }
        return out;
    }

    // Builds the intervention state of an episode from feature tables. In the mixed space the
    // unknown coordinates carry weight u (1 unless a gate value is given).
    [[nodiscard]] inline InterventionState intervention_state(const torch::Tensor& known, const torch::Tensor* unknown,
                                                              EpisodeEncoder* selector, const Episode& episode, Space space,
                                                              Distance distance, std::optional<double> gate = std::nullopt)
    {
        if (space == Space::mixed && unknown == nullptr) {
            throw ConfigError("mixed-space intervention needs unknown attributes");
        }
        const auto mixed = mixed_episode(known, space == Space::mixed ? *unknown : known, selector, episode);
        InterventionState state;
        state.human_width = known.size(1);
        state.distance = distance;
        if (space == Space::mixed) {
            state.prototypes = mixed_vectors(mixed.known.prototypes, mixed.unknown.prototypes).to(torch::kDouble);
            state.queries = mixed_vectors(mixed.known.query, mixed.unknown.query).to(torch::kDouble);
            state.mask = mixed_mask(mixed.selection.to(torch::kDouble), gate.value_or(1.0), unknown->size(1));
        } else {
            state.prototypes = mixed.known.prototypes.to(torch::kDouble);
            state.queries = mixed.known.query.to(torch::kDouble).clone();
            state.mask = mixed.selection.to(torch::kDouble);
        }
        return state;
    }

    // One episode of the simulation: every misclassified query gets ceil(ratio * |selected|)
    // selected attributes, drawn uniformly without replacement, moved toward the prototypes that
    // share its ground-truth value. Attributes with no matching prototype are skipped.
    inline std::vector<InterventionOutcome> intervene_misclassified(InterventionState& state, const std::vector<std::int64_t>& labels,
                                                                    const std::vector<std::int64_t>& predicted,
                                                                    const torch::Tensor& truth, const torch::Tensor& query_truth,
                                                                    double ratio, Rng& rng)
    {
        std::vector<std::int64_t> selected;
        for (std::int64_t j = 0; j < state.human_width; ++j) {
            if (state.mask[j].item<double>() != 0.0) {
                selected.push_back(j);
            }
        }
        std::vector<InterventionOutcome> outcomes;
        const auto count = std::min(selected.size(),
                                    static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(selected.size()) - 1e-12)));
        if (count == 0) {
            return outcomes;
        }
        for (std::size_t q = 0; q < labels.size(); ++q) {
            if (predicted[q] == labels[q]) {
                continue;
            }
            for (const auto j : detail::draw_without_replacement(selected, count, rng)) {
                const auto targets = matching_prototypes(truth, j, query_truth[static_cast<std::int64_t>(q)][j].item<int>());
                if (!targets.empty()) {
                    outcomes.push_back(intervene(state, static_cast<std::int64_t>(q), j, targets));
                }
            }
        }
        return outcomes;
    }

    struct InterventionReport {
        double ratio{0.0};
        Space space{Space::human_friendly};
        std::uint64_t seed{0};
        std::int64_t episodes{0};
        Interval before;
        Interval after;
        Interval gain;                       // paired per-episode difference after - before
        std::int64_t interventions{0};       // coordinates changed
        std::int64_t corrected{0};           // misclassified queries that became correct
    };

    inline void to_json(nlohmann::json& j, const InterventionReport& r)
    {
        j = nlohmann::json{{"ratio", r.ratio},
                           {"space", r.space},
                           {"seed", r.seed},
                           {"episodes", r.episodes},
                           {"before", r.before.mean},
                           {"after", r.after.mean},
                           {"ci95", {{"before", r.before.ci95}, {"after", r.after.ci95}, {"gain", r.gain.ci95}}},
                           {"gain", r.gain.mean},
                           {"interventions", r.interventions},
                           {"corrected", r.corrected}};
    }

    struct SimulationInputs {
        const AttributeDataset* dataset{nullptr};
        const torch::Tensor* known{nullptr};
        const torch::Tensor* unknown{nullptr};   // mixed space only
        EpisodeEncoder* selector{nullptr};       // null selects every attribute
        Distance distance{Distance::squared_euclidean};
    };

    // For every misclassified query, intervenes ceil(ratio * |selected|) selected attributes
    // drawn uniformly without replacement, each toward the prototypes sharing the query's
    // ground-truth value, then re-classifies.
    [[nodiscard]] inline InterventionReport simulate_intervention(const SimulationInputs& inputs, const std::vector<Episode>& episodes,
                                                                  double ratio, Space space, std::uint64_t seed)
    {
        if (inputs.dataset == nullptr || inputs.known == nullptr) {
            throw ConfigError("intervention simulation needs a dataset and f_h features");
        }
        if (!(ratio >= 0.0 && ratio <= 1.0)) {
            throw ConfigError("intervention ratio must lie in [0, 1]");
        }
        const auto& dataset = *inputs.dataset;
        if (dataset.num_attributes() != inputs.known->size(1)) {
            throw ConfigError("ground-truth attributes do not match the f_h width");
        }
        Rng rng(seed);
        InterventionReport report;
        report.ratio = ratio;
        report.space = space;
        report.seed = seed;
        report.episodes = static_cast<std::int64_t>(episodes.size());
        std::vector<double> before_scores;
        std::vector<double> after_scores;
        std::vector<double> gains;
        for (const auto& episode : episodes) {
            for (const auto id : episode.class_ids) {
                if (!dataset.has_class(id)) {
                    throw ValidationError("no ground-truth attributes for class " + std::to_string(id));
                }
            }
            auto state = intervention_state(*inputs.known, inputs.unknown, inputs.selector, episode, space, inputs.distance);
            const auto labels = episode.query_labels();
            const auto before = state.classify_all();
            const auto truth = prototype_truth(dataset, episode);
            const auto query_truth = dataset.image_attributes(episode.query);

            const auto outcomes = intervene_misclassified(state, labels, before.predicted, truth, query_truth, ratio, rng);
            report.interventions += static_cast<std::int64_t>(outcomes.size());
            const auto after = state.classify_all();
            const double b = episode_accuracy(before.predicted, labels);
            const double a = episode_accuracy(after.predicted, labels);
            for (std::size_t q = 0; q < labels.size(); ++q) {
                report.corrected += (before.predicted[q] != labels[q] && after.predicted[q] == labels[q]) ? 1 : 0;
            }
            before_scores.push_back(b);
            after_scores.push_back(a);
            gains.push_back(a - b);
        }
        report.before = confidence_interval(before_scores);
        report.after = confidence_interval(after_scores);
        report.gain = confidence_interval(gains);
        return report;
    }

}

#endif // IFSL_INTERVENTION_INTERVENTION_HPP
