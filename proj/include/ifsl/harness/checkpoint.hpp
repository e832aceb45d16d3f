#ifndef IFSL_HARNESS_CHECKPOINT_HPP
#define IFSL_HARNESS_CHECKPOINT_HPP

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>

#include "../error.hpp"
#include "../predictor/accuracy.hpp"
#include "../predictor/trainer.hpp"
#include "../selector/trainer.hpp"
#include "../unknown/gate.hpp"
#include "../unknown/trainer.hpp"

namespace ifsl {

    inline constexpr std::string_view kCheckpointFormat = "ifsl-checkpoint";
    inline constexpr int kCheckpointVersion = 1;

    inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& json)
    {
        if (path.has_parent_path()) {
            std::filesystem::create_directories(path.parent_path());
        }
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IngestionError("cannot write " + path.string());
        }
        out << json.dump(2) << '\n';
    }

    [[nodiscard]] inline nlohmann::json read_json_file(const std::filesystem::path& path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw IngestionError("cannot read " + path.string());
        }
        try {
            return nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& error) {
            throw IngestionError(path.string() + ": " + error.what());
        }
    }

    // Canonical hash of a JSON value (object keys are ordered, so equal values hash equally).
    [[nodiscard]] inline std::string json_hash(const nlohmann::json& json)
    {
        return sha256_hex(json.dump());
    }

    [[nodiscard]] inline std::filesystem::path weights_path(const std::filesystem::path& dir, std::string_view kind)
    {
        return dir / (std::string(kind) + ".pt");
    }

    [[nodiscard]] inline std::filesystem::path sidecar_path(const std::filesystem::path& dir, std::string_view kind)
    {
        return dir / (std::string(kind) + ".json");
    }

    // Sidecar of `kind` in `dir`, or nullopt when absent. A present sidecar with another
    // format version is an error.
    [[nodiscard]] inline std::optional<nlohmann::json> read_sidecar(const std::filesystem::path& dir, std::string_view kind)
    {
        const auto path = sidecar_path(dir, kind);
        if (!std::filesystem::exists(path) || !std::filesystem::exists(weights_path(dir, kind))) {
            return std::nullopt;
        }
        auto json = read_json_file(path);
        if (json.value("format", std::string{}) != kCheckpointFormat) {
            throw ValidationError(path.string() + " is not a checkpoint sidecar");
        }
        if (json.value("version", 0) != kCheckpointVersion) {
            throw ValidationError(path.string() + " has checkpoint version " + json.value("version", nlohmann::json()).dump() +
                                  ", this build reads version " + std::to_string(kCheckpointVersion));
        }
        if (json.value("kind", std::string{}) != kind) {
            throw ValidationError(path.string() + " holds a '" + json.value("kind", std::string{}) + "' checkpoint, expected '" +
                                  std::string(kind) + "'");
        }
        return json;
    }

    [[nodiscard]] inline nlohmann::json require_sidecar(const std::filesystem::path& dir, std::string_view kind)
    {
        auto json = read_sidecar(dir, kind);
        if (!json) {
            throw DependencyError("missing " + std::string(kind) + " checkpoint: " + weights_path(dir, kind).string());
        }
        return *json;
    }

    namespace detail {

        [[nodiscard]] inline nlohmann::json sidecar_header(std::string_view kind, const std::string& stage_hash, std::uint64_t seed,
                                                           const std::string& weights)
        {
            return nlohmann::json{{"format", kCheckpointFormat}, {"version", kCheckpointVersion}, {"kind", kind},
                                  {"config_hash", stage_hash}, {"seed", seed}, {"weights_hash", weights}};
        }

        template <typename Holder>
        void save_module(const Holder& module, const std::filesystem::path& path)
        {
            std::filesystem::create_directories(path.parent_path());
            torch::save(module, path.string());
        }

        template <typename Holder>
        void load_module(Holder& module, const std::filesystem::path& path, const std::string& expected_hash)
        {
            try {
                torch::load(module, path.string());
            } catch (const c10::Error& error) {
                throw IngestionError("cannot load weights " + path.string() + ": " + error.what_without_backtrace());
            }
            if (!expected_hash.empty() && weights_hash(*module) != expected_hash) {
                throw ValidationError(path.string() + " does not match the weights hash recorded in its sidecar");
            }
        }

    }

    inline void save_checkpoint(const PredictorCheckpoint& checkpoint, const std::filesystem::path& dir, const std::string& stage_hash,
                                std::string_view kind = "f_h")
    {
        auto json = detail::sidecar_header(kind, stage_hash, checkpoint.seed, checkpoint.hash());
        json["config"] = checkpoint.config;
        json["best_epoch"] = checkpoint.best_epoch;
        json["validation"] = checkpoint.validation;
        json["epoch_losses"] = checkpoint.epoch_losses;
        json["epoch_validation"] = checkpoint.epoch_validation;
        detail::save_module(checkpoint.net, weights_path(dir, kind));
        write_json_file(sidecar_path(dir, kind), json);
    }

    [[nodiscard]] inline PredictorCheckpoint load_predictor_checkpoint(const std::filesystem::path& dir, std::string_view kind = "f_h")
    {
        const auto json = require_sidecar(dir, kind);
        PredictorCheckpoint checkpoint;
        checkpoint.config = json.at("config").get<PredictorConfig>();
        checkpoint.seed = json.at("seed").get<std::uint64_t>();
        checkpoint.best_epoch = json.at("best_epoch").get<std::int64_t>();
        checkpoint.validation = json.at("validation").get<AttributeAccuracy>();
        checkpoint.epoch_losses = json.at("epoch_losses").get<std::vector<double>>();
        checkpoint.epoch_validation = json.at("epoch_validation").get<std::vector<double>>();
        checkpoint.net = make_attribute_net(checkpoint.config, checkpoint.config.num_attributes);
        detail::load_module(checkpoint.net, weights_path(dir, kind), json.at("weights_hash").get<std::string>());
        freeze(*checkpoint.net);
        return checkpoint;
    }

    inline void save_checkpoint(const SelectorCheckpoint& checkpoint, const std::filesystem::path& dir, const std::string& stage_hash)
    {
        auto json = detail::sidecar_header("g_h", stage_hash, checkpoint.seed, checkpoint.hash());
        json["config"] = checkpoint.config;
        json["input_width"] = checkpoint.net->input_width();
        json["alpha"] = checkpoint.config.alpha;
        json["eta"] = checkpoint.config.eta;
        json["temperature"] = checkpoint.config.temperature;
        json["best"] = checkpoint.best;
        json["curve"] = checkpoint.curve;
        json["upstream"] = {{"f_h", checkpoint.upstream_hash}};
        detail::save_module(checkpoint.net, weights_path(dir, "g_h"));
        write_json_file(sidecar_path(dir, "g_h"), json);
    }

    [[nodiscard]] inline SelectorCheckpoint load_selector_checkpoint(const std::filesystem::path& dir)
    {
        const auto json = require_sidecar(dir, "g_h");
        SelectorCheckpoint checkpoint;
        checkpoint.config = json.at("config").get<SelectorConfig>();
        checkpoint.seed = json.at("seed").get<std::uint64_t>();
        checkpoint.best = json.at("best").get<ValidationPoint>();
        checkpoint.curve = json.at("curve").get<std::vector<ValidationPoint>>();
        checkpoint.upstream_hash = json.at("upstream").at("f_h").get<std::string>();
        const auto width = json.at("input_width").get<std::int64_t>();
        checkpoint.net = EpisodeEncoder(width, width, checkpoint.config.hidden_size);
        detail::load_module(checkpoint.net, weights_path(dir, "g_h"), json.at("weights_hash").get<std::string>());
        freeze(*checkpoint.net);
        return checkpoint;
    }

    inline void save_checkpoint(const UnknownCheckpoint& checkpoint, const std::filesystem::path& dir, const std::string& stage_hash)
    {
        auto json = detail::sidecar_header("f_u", stage_hash, checkpoint.seed, checkpoint.hash());
        json["config"] = checkpoint.config;
        json["width"] = checkpoint.net->outputs();
        json["lambda"] = checkpoint.config.lambda;
        json["E1"] = checkpoint.config.episodes;
        json["E2"] = checkpoint.config.critic_steps;
        json["best"] = checkpoint.best;
        json["curve"] = checkpoint.curve;
        json["critic_hash"] = weights_hash(*checkpoint.critic);
        json["upstream"] = {{"f_h", checkpoint.upstream_hash}};
        detail::save_module(checkpoint.net, weights_path(dir, "f_u"));
        detail::save_module(checkpoint.critic, weights_path(dir, "f_I"));
        write_json_file(sidecar_path(dir, "f_u"), json);
    }

    [[nodiscard]] inline UnknownCheckpoint load_unknown_checkpoint(const std::filesystem::path& dir)
    {
        const auto json = require_sidecar(dir, "f_u");
        UnknownCheckpoint checkpoint;
        checkpoint.config = json.at("config").get<UnknownConfig>();
        checkpoint.seed = json.at("seed").get<std::uint64_t>();
        checkpoint.best = json.at("best").get<ValidationPoint>();
        checkpoint.curve = json.at("curve").get<std::vector<ValidationPoint>>();
        checkpoint.upstream_hash = json.at("upstream").at("f_h").get<std::string>();
        const auto width = json.at("width").get<std::int64_t>();
        checkpoint.net = AttributeNet(width, checkpoint.config.hidden_channels);
        checkpoint.critic = Critic(width, width, checkpoint.config.critic_hidden);
        detail::load_module(checkpoint.net, weights_path(dir, "f_u"), json.at("weights_hash").get<std::string>());
        detail::load_module(checkpoint.critic, weights_path(dir, "f_I"), json.at("critic_hash").get<std::string>());
        freeze(*checkpoint.net);
        freeze(*checkpoint.critic);
        return checkpoint;
    }

    inline void save_checkpoint(const GateCheckpoint& checkpoint, const std::filesystem::path& dir, const std::string& stage_hash)
    {
        auto json = detail::sidecar_header("g_u", stage_hash, checkpoint.seed, checkpoint.hash());
        json["config"] = checkpoint.config;
        json["input_width"] = checkpoint.net->input_width();
        json["beta"] = checkpoint.config.beta;
        json["best"] = checkpoint.best;
        json["curve"] = checkpoint.curve;
        json["upstream"] = checkpoint.upstream_hashes;
        detail::save_module(checkpoint.net, weights_path(dir, "g_u"));
        write_json_file(sidecar_path(dir, "g_u"), json);
    }

    [[nodiscard]] inline GateCheckpoint load_gate_checkpoint(const std::filesystem::path& dir)
    {
        const auto json = require_sidecar(dir, "g_u");
        GateCheckpoint checkpoint;
        checkpoint.config = json.at("config").get<GateConfig>();
        checkpoint.seed = json.at("seed").get<std::uint64_t>();
        checkpoint.best = json.at("best").get<GatePoint>();
        checkpoint.curve = json.at("curve").get<std::vector<GatePoint>>();
        checkpoint.upstream_hashes = json.at("upstream").get<std::vector<std::string>>();
        checkpoint.net = EpisodeEncoder(json.at("input_width").get<std::int64_t>(), 1, checkpoint.config.hidden_size);
        detail::load_module(checkpoint.net, weights_path(dir, "g_u"), json.at("weights_hash").get<std::string>());
        freeze(*checkpoint.net);
        return checkpoint;
    }

}

#endif // IFSL_HARNESS_CHECKPOINT_HPP
