#ifndef IFSL_HARNESS_CONFIG_HPP
#define IFSL_HARNESS_CONFIG_HPP

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "../data/synthetic.hpp"
#include "../error.hpp"
#include "../intervention/intervention.hpp"
#include "../predictor/network.hpp"
#include "../selector/trainer.hpp"
#include "../unknown/gate.hpp"
#include "../unknown/trainer.hpp"
#include "checkpoint.hpp"
#include "report.hpp"

namespace ifsl {

    struct InterventionConfig {
        std::vector<double> ratios{0.0, 0.05, 0.10};
        Space space{Space::human_friendly};
        std::uint64_t seed{11};
    };

    NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(InterventionConfig, ratios, space, seed)

    // Everything one run needs. An empty `dataset` path selects the synthetic generator.
    struct ExperimentConfig {
        std::string dataset;
        std::string format{"auto"};
        std::string split;          // defaults to <dataset>/splits.json
        SyntheticSpec synthetic{};
        std::string output{"runs/default"};
        std::uint64_t seed{1};
        PredictorConfig predictor{};
        SelectorConfig selector{};
        UnknownConfig unknown{};
        GateConfig gate{};
        Protocol evaluation{};
        InterventionConfig intervention{};
    };

    NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ExperimentConfig, dataset, format, split, synthetic, output, seed, predictor,
                                                    selector, unknown, gate, evaluation, intervention)

    // The output directory is not part of a run's identity.
    [[nodiscard]] inline std::string config_hash(const ExperimentConfig& config)
    {
        auto json = nlohmann::json(config);
        json.erase("output");
        return json_hash(json);
    }

    [[nodiscard]] inline ExperimentConfig load_experiment_config(const std::filesystem::path& path)
    {
        const auto json = read_json_file(path);
        try {
            return json.get<ExperimentConfig>();
        } catch (const nlohmann::json::exception& error) {
            throw ConfigError(path.string() + ": " + error.what());
        }
    }

    // Desk-scale settings: narrow Conv-4, short schedules. Used by the synthetic benchmark.
    [[nodiscard]] inline ExperimentConfig desk_profile()
    {
        ExperimentConfig config;
        config.synthetic.num_classes = 30;
        config.synthetic.num_attributes = 8;
        config.synthetic.samples_per_class = 40;
        config.synthetic.noise_level = 0.1;
        config.synthetic.base_classes = 20;
        config.synthetic.validation_classes = 5;
        config.predictor.hidden_channels = 16;
        config.predictor.epochs = 20;
        config.predictor.batch_size = 64;
        config.selector.episodes = 2000;
        config.selector.validate_every = 500;
        config.selector.validation_episodes = 200;
        config.selector.temperature.halve_every = 250;
        config.unknown.hidden_channels = 8;
        config.unknown.episodes = 150;
        config.unknown.mine_batch = 32;
        config.unknown.validate_every = 50;
        config.unknown.validation_episodes = 100;
        config.gate.episodes = 1500;
        config.gate.validate_every = 500;
        config.gate.validation_episodes = 200;
        return config;
    }

}

#endif // IFSL_HARNESS_CONFIG_HPP
