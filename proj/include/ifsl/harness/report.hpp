#ifndef IFSL_HARNESS_REPORT_HPP
#define IFSL_HARNESS_REPORT_HPP

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "../classifier/prototype.hpp"
#include "../data/episode.hpp"
#include "../error.hpp"
#include "../stats.hpp"

namespace ifsl {

    inline constexpr std::string_view kReportSchema = "ifsl.eval-report";
    inline constexpr int kReportVersion = 1;

    struct Protocol {
        std::int64_t way{5};
        std::int64_t shot{1};
        std::int64_t queries{16};
        std::int64_t episodes{600};
        std::uint64_t seed{600};
        Distance distance{Distance::squared_euclidean};

        [[nodiscard]] EpisodeShape shape() const { return {way, shot, queries}; }
        bool operator==(const Protocol&) const = default;
    };

    NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Protocol, way, shot, queries, episodes, seed, distance)

    // Report of one evaluation run. Accuracies are percentages.
    struct EvalReport {
        Protocol protocol;
        std::string space;                 // human-friendly | mixed | gated
        Interval accuracy;
        std::int64_t num_attributes{0};
        double avg_selected_attributes{0.0};
        double pct_human_friendly_episodes{100.0};
        std::int64_t empty_mask_episodes{0};   // hard selection kept no attribute
        std::string config_hash;
        std::map<std::string, std::string> checkpoints;   // stage -> weights hash
        nlohmann::json settings;           // eta, beta, lambda and seeds of the producing run
        std::vector<double> episode_accuracy;
        std::vector<std::int64_t> episode_selected;
        std::vector<double> episode_gate;  // soft gate values; empty without g_u
    };

    inline void to_json(nlohmann::json& j, const EvalReport& r)
    {
        j = nlohmann::json{{"schema", kReportSchema},
                           {"version", kReportVersion},
                           {"protocol", r.protocol},
                           {"space", r.space},
                           {"accuracy", {{"mean", r.accuracy.mean}, {"ci95", r.accuracy.ci95}}},
                           {"num_attributes", r.num_attributes},
                           {"avg_selected_attributes", r.avg_selected_attributes},
                           {"pct_human_friendly_episodes", r.pct_human_friendly_episodes},
                           {"empty_mask_episodes", r.empty_mask_episodes},
                           {"config_hash", r.config_hash},
                           {"checkpoints", r.checkpoints},
                           {"settings", r.settings.is_null() ? nlohmann::json::object() : r.settings},
                           {"episodes",
                            {{"accuracy", r.episode_accuracy}, {"selected", r.episode_selected}, {"gate", r.episode_gate}}}};
    }

    inline void from_json(const nlohmann::json& j, EvalReport& r)
    {
        if (j.value("schema", std::string{}) != kReportSchema) {
            throw ValidationError("not an evaluation report");
        }
        if (j.value("version", 0) != kReportVersion) {
            throw ValidationError("evaluation report version " + j.value("version", nlohmann::json()).dump() +
                                  " is not supported (expected " + std::to_string(kReportVersion) + ")");
        }
        j.at("protocol").get_to(r.protocol);
        j.at("space").get_to(r.space);
        j.at("accuracy").at("mean").get_to(r.accuracy.mean);
        j.at("accuracy").at("ci95").get_to(r.accuracy.ci95);
        j.at("num_attributes").get_to(r.num_attributes);
        j.at("avg_selected_attributes").get_to(r.avg_selected_attributes);
        j.at("pct_human_friendly_episodes").get_to(r.pct_human_friendly_episodes);
        j.at("empty_mask_episodes").get_to(r.empty_mask_episodes);
        j.at("config_hash").get_to(r.config_hash);
        j.at("checkpoints").get_to(r.checkpoints);
        r.settings = j.at("settings");
        j.at("episodes").at("accuracy").get_to(r.episode_accuracy);
        j.at("episodes").at("selected").get_to(r.episode_selected);
        j.at("episodes").at("gate").get_to(r.episode_gate);
    }

    struct ReportComparison {
        double accuracy_difference{0.0};          // b - a, percentage points
        double selected_difference{0.0};
        double human_friendly_difference{0.0};
    };

    // Refuses to compare reports produced under different protocols.
    [[nodiscard]] inline ReportComparison compare_reports(const EvalReport& a, const EvalReport& b)
    {
        if (!(a.protocol == b.protocol)) {
            throw ConfigError("reports use different protocols: " + nlohmann::json(a.protocol).dump() + " vs " +
                              nlohmann::json(b.protocol).dump());
        }
        return {b.accuracy.mean - a.accuracy.mean, b.avg_selected_attributes - a.avg_selected_attributes,
                b.pct_human_friendly_episodes - a.pct_human_friendly_episodes};
    }

}

#endif // IFSL_HARNESS_REPORT_HPP
