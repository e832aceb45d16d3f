#ifndef IFSL_HARNESS_PIPELINE_HPP
#define IFSL_HARNESS_PIPELINE_HPP

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "../data/dataset.hpp"
#include "../data/synthetic.hpp"
#include "../error.hpp"
#include "../intervention/intervention.hpp"
#include "../nn_state.hpp"
#include "../predictor/network.hpp"
#include "../predictor/trainer.hpp"
#include "../selector/trainer.hpp"
#include "../unknown/gate.hpp"
#include "../unknown/trainer.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "evaluate.hpp"
#include "report.hpp"

namespace ifsl {

    inline const std::vector<std::string>& pipeline_stages()
    {
        static const std::vector<std::string> stages{"f_h", "g_h", "f_u", "g_u", "evaluate", "intervene"};
        return stages;
    }

    struct LoadedData {
        DatasetPtr dataset;
        SplitSpec split;
        DatasetSplits views;
    };

    // Loads the configured dataset, or generates the synthetic one when no path is set.
    [[nodiscard]] inline LoadedData load_experiment_data(const ExperimentConfig& config)
    {
        LoadedData data;
        if (config.dataset.empty()) {
            auto synthetic = generate_synthetic(config.synthetic);
            data.dataset = synthetic.dataset;
            data.split = synthetic.split;
        } else {
            data.dataset = load_dataset(config.dataset, parse_dataset_format(config.format));
            const auto split_path = config.split.empty() ? std::filesystem::path(config.dataset) / "splits.json"
                                                         : std::filesystem::path(config.split);
            data.split = load_split(split_path);
        }
        data.views = split_dataset(data.dataset, data.split);
        return data;
    }

    struct PipelineResult {
        std::filesystem::path directory;
        std::vector<std::string> trained;
        std::vector<std::string> reused;
        std::optional<EvalReport> report;
        std::vector<InterventionReport> interventions;
    };

    // Runs stages in the order f_h -> g_h -> f_u -> g_u -> evaluate -> intervene. A training stage
    // whose checkpoint already exists with the same stage hash is loaded instead of retrained.
    class Pipeline {
    public:
        explicit Pipeline(ExperimentConfig config, ProgressFn progress = {})
            : config_(std::move(config)), directory_(config_.output), progress_(std::move(progress))
        {
        }

        [[nodiscard]] const ExperimentConfig& config() const noexcept { return config_; }
        [[nodiscard]] const std::filesystem::path& directory() const noexcept { return directory_; }

        const LoadedData& data()
        {
            if (!data_) {
                data_ = load_experiment_data(config_);
            }
            return *data_;
        }

        PipelineResult run(std::vector<std::string> stages)
        {
            for (const auto& stage : stages) {
                if (std::find(pipeline_stages().begin(), pipeline_stages().end(), stage) == pipeline_stages().end()) {
                    throw ConfigError("unknown pipeline stage '" + stage + "'");
                }
            }
            std::filesystem::create_directories(directory_);
            write_json_file(directory_ / "config.json", nlohmann::json(config_));
            PipelineResult result;
            result.directory = directory_;
            for (const auto& stage : pipeline_stages()) {
                if (std::find(stages.begin(), stages.end(), stage) == stages.end()) {
                    continue;
                }
                if (stage == "evaluate") {
                    result.report = run_evaluation();
                } else if (stage == "intervene") {
                    result.interventions = run_intervention();
                } else {
                    (train_stage(stage) ? result.trained : result.reused).push_back(stage);
                }
            }
            return result;
        }

        // Stage hash of a training stage given the current upstream checkpoints.
        [[nodiscard]] std::string stage_hash(std::string_view stage)
        {
            nlohmann::json key{{"stage", stage}, {"seed", config_.seed}};
            if (stage == "f_h") {
                key["data"] = data_identity();
                key["config"] = config_.predictor;
            } else if (stage == "g_h") {
                key["upstream"] = {upstream_hash("f_h")};
                key["config"] = config_.selector;
            } else if (stage == "f_u") {
                key["upstream"] = {upstream_hash("f_h")};
                key["config"] = config_.unknown;
            } else if (stage == "g_u") {
                key["upstream"] = {upstream_hash("f_h"), upstream_hash("g_h"), upstream_hash("f_u")};
                key["config"] = config_.gate;
            }
            return json_hash(key);
        }

        // f_h outputs for every dataset image, cached per f_h weights.
        const torch::Tensor& known_features()
        {
            auto checkpoint = load_predictor_checkpoint(directory_, "f_h");
            if (known_hash_ != checkpoint.hash()) {
                known_ = predict_all(checkpoint.net, *data().dataset);
                known_hash_ = checkpoint.hash();
            }
            return known_;
        }

        const torch::Tensor& unknown_features()
        {
            auto checkpoint = load_unknown_checkpoint(directory_);
            if (unknown_hash_ != checkpoint.hash()) {
                unknown_ = predict_all(checkpoint.net, *data().dataset);
                unknown_hash_ = checkpoint.hash();
            }
            return unknown_;
        }

    private:
        [[nodiscard]] nlohmann::json data_identity() const
        {
            if (config_.dataset.empty()) {
                return nlohmann::json{{"synthetic", config_.synthetic}};
            }
            return nlohmann::json{{"path", std::filesystem::absolute(config_.dataset).lexically_normal().string()},
                                  {"split", config_.split},
                                  {"format", config_.format}};
        }

        [[nodiscard]] std::string upstream_hash(std::string_view kind) const
        {
            const auto sidecar = read_sidecar(directory_, kind);
            if (!sidecar) {
                throw DependencyError("stage needs the " + std::string(kind) + " checkpoint, which is missing: " +
                                      weights_path(directory_, kind).string());
            }
            return sidecar->at("weights_hash").get<std::string>();
        }

        void log(const std::string& line)
        {
            std::ofstream(directory_ / "pipeline.log", std::ios::app) << line << '\n';
            if (progress_) {
                progress_(line);
            }
        }

        [[nodiscard]] std::uint64_t stage_seed(std::string_view stage) const
        {
            const auto& stages = pipeline_stages();
            return config_.seed + static_cast<std::uint64_t>(std::find(stages.begin(), stages.end(), stage) - stages.begin());
        }

        // Returns true when the stage trained, false when an existing checkpoint was reused.
        bool train_stage(const std::string& stage)
        {
            const auto hash = stage_hash(stage);
            if (const auto existing = read_sidecar(directory_, stage); existing && existing->value("config_hash", "") == hash) {
                log(stage + ": checkpoint up to date, reusing");
                return false;
            }
            log(stage + ": training");
            const auto progress = [this](std::string_view line) { log(std::string(line)); };
            const auto& views = data().views;
            const auto seed = stage_seed(stage);
            if (stage == "f_h") {
                const auto checkpoint = train_attribute_predictor(views.base, views.validation, config_.predictor, seed, progress);
                save_checkpoint(checkpoint, directory_, hash);
            } else if (stage == "g_h") {
                const auto checkpoint = train_selector(known_features(), views.base, views.validation, config_.selector, seed,
                                                       upstream_hash("f_h"), progress);
                save_checkpoint(checkpoint, directory_, hash);
            } else if (stage == "f_u") {
                const auto checkpoint = train_unknown_predictor(known_features(), views.base, views.validation, config_.unknown, seed,
                                                                upstream_hash("f_h"), progress);
                save_checkpoint(checkpoint, directory_, hash);
            } else if (stage == "g_u") {
                auto selector = load_selector_checkpoint(directory_);
                const auto checkpoint = train_gate(known_features(), unknown_features(), selector.net, views.base, views.validation,
                                                   config_.gate, seed,
                                                   {upstream_hash("f_h"), upstream_hash("g_h"), upstream_hash("f_u")}, progress);
                save_checkpoint(checkpoint, directory_, hash);
            }
            return true;
        }

        EvalReport run_evaluation()
        {
            log("evaluate: " + std::to_string(config_.evaluation.episodes) + " episodes");
            const auto& known = known_features();
            EvalModels models;
            models.known = &known;
            EvalReport report;
            std::optional<SelectorCheckpoint> selector;
            std::optional<GateCheckpoint> gate;
            report.checkpoints["f_h"] = upstream_hash("f_h");
            if (read_sidecar(directory_, "g_h")) {
                selector = load_selector_checkpoint(directory_);
                models.selector = &selector->net;
                report.checkpoints["g_h"] = selector->hash();
            }
            const torch::Tensor* unknown = nullptr;
            if (read_sidecar(directory_, "f_u")) {
                unknown = &unknown_features();
                models.unknown = unknown;
                report.checkpoints["f_u"] = upstream_hash("f_u");
                if (read_sidecar(directory_, "g_u")) {
                    gate = load_gate_checkpoint(directory_);
                    models.gate = &gate->net;
                    report.checkpoints["g_u"] = gate->hash();
                }
            }
            auto evaluated = evaluate(models, data().views.novel, config_.evaluation);
            evaluated.checkpoints = report.checkpoints;
            evaluated.config_hash = config_hash(config_);
            evaluated.settings = {{"eta", config_.selector.eta},
                                  {"alpha", config_.selector.alpha},
                                  {"beta", config_.gate.beta},
                                  {"lambda", config_.unknown.lambda},
                                  {"seed", config_.seed}};
            write_json_file(directory_ / "eval_report.json", nlohmann::json(evaluated));
            std::ostringstream line;
            line << "evaluate: accuracy " << evaluated.accuracy.mean << " +- " << evaluated.accuracy.ci95 << " ("
                 << evaluated.space << ")";
            log(line.str());
            return evaluated;
        }

        std::vector<InterventionReport> run_intervention()
        {
            const auto& known = known_features();
            std::optional<SelectorCheckpoint> selector;
            SimulationInputs inputs;
            inputs.dataset = data().dataset.get();
            inputs.known = &known;
            inputs.distance = config_.evaluation.distance;
            if (read_sidecar(directory_, "g_h")) {
                selector = load_selector_checkpoint(directory_);
                inputs.selector = &selector->net;
            }
            if (config_.intervention.space == Space::mixed) {
                inputs.unknown = &unknown_features();
            }
            const auto episodes = sample_episodes(data().views.novel.pool(), config_.evaluation.shape(), config_.evaluation.episodes,
                                                  config_.evaluation.seed);
            std::vector<InterventionReport> reports;
            nlohmann::json out = nlohmann::json::array();
            for (const double ratio : config_.intervention.ratios) {
                reports.push_back(simulate_intervention(inputs, episodes, ratio, config_.intervention.space, config_.intervention.seed));
                out.push_back(reports.back());
                std::ostringstream line;
                line << "intervene: ratio " << ratio << " before " << reports.back().before.mean << " after "
                     << reports.back().after.mean;
                log(line.str());
            }
            write_json_file(directory_ / "intervention_report.json",
                            nlohmann::json{{"config_hash", config_hash(config_)}, {"reports", out}});
            return reports;
        }

        ExperimentConfig config_;
        std::filesystem::path directory_;
        ProgressFn progress_;
        std::optional<LoadedData> data_;
        torch::Tensor known_;
        std::string known_hash_;
        torch::Tensor unknown_;
        std::string unknown_hash_;
    };

    // One sub-run per value of `parameter` ("eta" or "beta"); upstream checkpoints are copied
    // from the base run so each sub-run only trains the swept stage.
    inline std::vector<EvalReport> run_sweep(const ExperimentConfig& base, const std::string& parameter, const std::vector<double>& values,
                                             const ProgressFn& progress = {})
    {
        if (parameter != "eta" && parameter != "beta") {
            throw ConfigError("sweeps support eta or beta, not '" + parameter + "'");
        }
        const std::vector<std::string> upstream = parameter == "eta" ? std::vector<std::string>{"f_h"}
                                                                     : std::vector<std::string>{"f_h", "g_h", "f_u"};
        std::vector<EvalReport> reports;
        for (const double value : values) {
            auto config = base;
            std::ostringstream name;
            name << parameter << "_" << value;
            config.output = (std::filesystem::path(base.output) / name.str()).string();
            std::filesystem::create_directories(config.output);
            for (const auto& kind : upstream) {
                for (const auto& file : {weights_path(base.output, kind), sidecar_path(base.output, kind)}) {
                    if (!std::filesystem::exists(file)) {
                        throw DependencyError("sweep needs the base run's " + kind + " checkpoint: " + file.string());
                    }
                    std::filesystem::copy_file(file, std::filesystem::path(config.output) / file.filename(),
                                               std::filesystem::copy_options::overwrite_existing);
                }
                if (kind == "f_u") {
                    const auto critic = weights_path(base.output, "f_I");
                    std::filesystem::copy_file(critic, std::filesystem::path(config.output) / critic.filename(),
                                               std::filesystem::copy_options::overwrite_existing);
                }
            }
            std::vector<std::string> stages;
            if (parameter == "eta") {
                config.selector.eta = value;
                stages = {"g_h", "evaluate"};
            } else {
                config.gate.beta = value;
                stages = {"g_u", "evaluate"};
            }
            Pipeline pipeline(config, progress);
            reports.push_back(*pipeline.run(stages).report);
        }
        return reports;
    }

}

#endif // IFSL_HARNESS_PIPELINE_HPP
