#ifndef IFSL_HARNESS_SERVICE_HPP
#define IFSL_HARNESS_SERVICE_HPP

#include <torch/torch.h>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <openssl/evp.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "../data/dataset.hpp"
#include "../data/episode.hpp"
#include "../error.hpp"
#include "../intervention/intervention.hpp"
#include "../unknown/gate.hpp"
#include "checkpoint.hpp"
#include "pipeline.hpp"

namespace ifsl {

    [[nodiscard]] inline std::string base64_encode(const std::vector<unsigned char>& bytes)
    {
        std::string out(4 * ((bytes.size() + 2) / 3), '\0');
        const int written = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
        out.resize(static_cast<std::size_t>(written));
        return out;
    }

    // PNG of one dataset image (stored RGB) as base64.
    [[nodiscard]] inline std::string encode_png(const AttributeDataset& dataset, std::int64_t image)
    {
        const auto pixels = dataset.images()[image].contiguous();
        const cv::Mat rgb(static_cast<int>(pixels.size(0)), static_cast<int>(pixels.size(1)), CV_8UC3, pixels.data_ptr<std::uint8_t>());
        cv::Mat bgr;
        cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
        std::vector<unsigned char> png;
        if (!cv::imencode(".png", bgr, png)) {
            throw Error("png encoding failed for image " + std::to_string(image));
        }
        return base64_encode(png);
    }

    // Frozen models behind the service. Tables hold one row per dataset image.
    struct ServiceModels {
        DatasetPtr dataset;
        DatasetSplits views;
        torch::Tensor known;
        std::optional<torch::Tensor> unknown;
        std::optional<EpisodeEncoder> selector;
        std::optional<EpisodeEncoder> gate;
        Distance distance{Distance::squared_euclidean};
        nlohmann::json checkpoints = nlohmann::json::array();
    };

    // Loads whatever checkpoints the run directory holds; f_h is required.
    [[nodiscard]] inline ServiceModels load_service_models(const ExperimentConfig& config)
    {
        Pipeline pipeline(config);
        ServiceModels models;
        const auto& data = pipeline.data();
        models.dataset = data.dataset;
        models.views = data.views;
        models.distance = config.evaluation.distance;
        models.known = pipeline.known_features();
        if (read_sidecar(pipeline.directory(), "g_h")) {
            models.selector = load_selector_checkpoint(pipeline.directory()).net;
        }
        if (read_sidecar(pipeline.directory(), "f_u")) {
            models.unknown = pipeline.unknown_features();
            if (read_sidecar(pipeline.directory(), "g_u")) {
                models.gate = load_gate_checkpoint(pipeline.directory()).net;
            }
        }
        for (const auto* kind : {"f_h", "g_h", "f_u", "g_u"}) {
            if (const auto sidecar = read_sidecar(pipeline.directory(), kind)) {
                models.checkpoints.push_back({{"kind", kind},
                                              {"path", weights_path(pipeline.directory(), kind).string()},
                                              {"weights_hash", sidecar->at("weights_hash")},
                                              {"config_hash", sidecar->at("config_hash")},
                                              {"seed", sidecar->at("seed")}});
            }
        }
        return models;
    }

    // Service-level failure carrying an HTTP status.
    class ServiceError : public Error {
    public:
        ServiceError(int status, const std::string& message) : Error(message), status_(status) {}
        [[nodiscard]] int status() const noexcept { return status_; }

    private:
        int status_;
    };

    // Episode sessions for the intervention explorer. Each session owns its state; mutations of one
    // session are serialized by its own mutex, sessions never share mutable data.
    class Service {
    public:
        explicit Service(ServiceModels models) : models_(std::move(models)) {}

        [[nodiscard]] nlohmann::json create_episode(const nlohmann::json& request)
        {
            const auto split = request.value("split", std::string("novel"));
            const DatasetView* view = nullptr;
            if (split == "base") {
                view = &models_.views.base;
            } else if (split == "validation") {
                view = &models_.views.validation;
            } else if (split == "novel") {
                view = &models_.views.novel;
            } else {
                throw ServiceError(400, "split must be base, validation or novel, got '" + split + "'");
            }
            EpisodeShape shape{request.value("N", std::int64_t{5}), request.value("K", std::int64_t{1}), request.value("Q", std::int64_t{16})};
            const auto seed = request.contains("seed") ? request.at("seed").get<std::uint64_t>() : next_seed();

            auto session = std::make_shared<Session>();
            session->split = split;
            session->seed = seed;
            {
                Rng rng(seed);
                session->episode = sample_episode(*view, shape, rng);
            }
            {
                // Module forward passes are serialized; the tensors they produce are per-session.
                std::lock_guard models_lock(models_mutex_);
                EpisodeEncoder* selector = models_.selector ? &*models_.selector : nullptr;
                const auto& unknown = models_.unknown ? *models_.unknown : models_.known;
                const auto mixed = mixed_episode(models_.known, unknown, selector, session->episode);
                session->pi = mixed.pi.to(torch::kDouble);
                session->space = Space::human_friendly;
                if (models_.unknown) {
                    if (models_.gate) {
                        session->gate = gate_value(*models_.gate, mixed.gate_input);
                        session->space = participates(*session->gate) ? Space::mixed : Space::human_friendly;
                    } else {
                        session->space = Space::mixed;
                    }
                }
                session->original = intervention_state(models_.known, models_.unknown ? &*models_.unknown : nullptr, selector,
                                                       session->episode, session->space, models_.distance);
                session->support_vectors = mixed.known.support.to(torch::kDouble);
            }
            session->state = clone_state(session->original);
            session->truth = prototype_truth(*models_.dataset, session->episode);
            session->query_truth = models_.dataset->image_attributes(session->episode.query);

            std::unique_lock lock(sessions_mutex_);
            const auto id = "ep" + std::to_string(++counter_);
            sessions_.emplace(id, session);
            return {{"episode_id", id}, {"seed", seed}};
        }

        [[nodiscard]] nlohmann::json episode(const std::string& id)
        {
            auto session = find(id);
            std::lock_guard lock(session->mutex);
            return describe(id, *session);
        }

        [[nodiscard]] nlohmann::json intervene(const std::string& id, const nlohmann::json& request)
        {
            auto session = find(id);
            std::lock_guard lock(session->mutex);
            const auto query = request.at("query_idx").get<std::int64_t>();
            const auto attribute = request.at("attr_idx").get<std::int64_t>();
            const auto& target = request.at("target");
            std::vector<std::int64_t> targets;
            if (target.is_string() && target.get<std::string>() == "ground-truth") {
                if (query < 0 || query >= session->query_truth.size(0) || attribute < 0 || attribute >= session->truth.size(1)) {
                    throw InterventionRejected("query or attribute index out of range");
                }
                const int value = session->query_truth[query][attribute].item<int>();
                targets = matching_prototypes(session->truth, attribute, value);
                if (targets.empty()) {
                    throw InterventionRejected("no prototype matches the query's ground-truth value of attribute " +
                                               std::to_string(attribute));
                }
            } else if (target.is_object() && target.contains("prototype_class")) {
                targets.push_back(target.at("prototype_class").get<std::int64_t>());
            } else {
                throw ServiceError(400, "target must be \"ground-truth\" or {\"prototype_class\": n}");
            }
            const auto outcome = ifsl::intervene(session->state, query, attribute, targets);
            nlohmann::json json = outcome_json(outcome);
            session->history.push_back(json);
            return json;
        }

        [[nodiscard]] nlohmann::json reset(const std::string& id)
        {
            auto session = find(id);
            std::lock_guard lock(session->mutex);
            session->state = clone_state(session->original);
            session->history.clear();
            return describe(id, *session);
        }

        [[nodiscard]] nlohmann::json attributes() const
        {
            return {{"attributes", models_.dataset->attribute_names()}};
        }

        [[nodiscard]] nlohmann::json models() const
        {
            return {{"checkpoints", models_.checkpoints},
                    {"distance", models_.distance},
                    {"selector", models_.selector.has_value()},
                    {"unknown", models_.unknown.has_value()},
                    {"gate", models_.gate.has_value()}};
        }

        // Registers the JSON API and, when given, serves static assets from `static_dir` at /.
        void mount(httplib::Server& server, const std::optional<std::filesystem::path>& static_dir = std::nullopt)
        {
            server.Post("/api/episodes", [this](const httplib::Request& req, httplib::Response& res) {
                respond(res, [&] { return create_episode(parse_body(req)); });
            });
            server.Get(R"(/api/episodes/([A-Za-z0-9]+))", [this](const httplib::Request& req, httplib::Response& res) {
                respond(res, [&] { return episode(req.matches[1]); });
            });
            server.Post(R"(/api/episodes/([A-Za-z0-9]+)/intervene)", [this](const httplib::Request& req, httplib::Response& res) {
                respond(res, [&] { return intervene(req.matches[1], parse_body(req)); });
            });
            server.Post(R"(/api/episodes/([A-Za-z0-9]+)/reset)", [this](const httplib::Request& req, httplib::Response& res) {
                respond(res, [&] { return reset(req.matches[1]); });
            });
            server.Get("/api/attributes", [this](const httplib::Request&, httplib::Response& res) {
                respond(res, [&] { return attributes(); });
            });
            server.Get("/api/models", [this](const httplib::Request&, httplib::Response& res) {
                respond(res, [&] { return models(); });
            });
            if (static_dir) {
                if (!server.set_mount_point("/", static_dir->string())) {
                    throw ConfigError("static asset directory does not exist: " + static_dir->string());
                }
            }
        }

    private:
        struct Session {
            std::mutex mutex;
            std::string split;
            std::uint64_t seed{0};
            Episode episode;
            Space space{Space::human_friendly};
            std::optional<double> gate;
            torch::Tensor pi;
            torch::Tensor support_vectors;
            InterventionState original;
            InterventionState state;
            torch::Tensor truth;
            torch::Tensor query_truth;
            std::vector<nlohmann::json> history;
        };

        [[nodiscard]] static InterventionState clone_state(const InterventionState& state)
        {
            auto copy = state;
            copy.prototypes = state.prototypes.clone();
            copy.queries = state.queries.clone();
            copy.mask = state.mask.clone();
            return copy;
        }

        [[nodiscard]] static std::vector<double> to_vector(const torch::Tensor& tensor)
        {
            const auto flat = tensor.to(torch::kDouble).contiguous().view(-1);
            return {flat.data_ptr<double>(), flat.data_ptr<double>() + flat.numel()};
        }

        [[nodiscard]] static std::vector<std::vector<double>> to_rows(const torch::Tensor& tensor)
        {
            std::vector<std::vector<double>> rows;
            for (std::int64_t i = 0; i < tensor.size(0); ++i) {
                rows.push_back(to_vector(tensor[i]));
            }
            return rows;
        }

        [[nodiscard]] static nlohmann::json outcome_json(const InterventionOutcome& outcome)
        {
            return {{"query_idx", outcome.query},
                    {"attr_idx", outcome.attribute},
                    {"targets", outcome.targets},
                    {"value_before", outcome.value_before},
                    {"value_after", outcome.value_after},
                    {"probabilities_before", to_vector(outcome.probabilities_before)},
                    {"probabilities_after", to_vector(outcome.probabilities_after)},
                    {"predicted_before", outcome.predicted_before},
                    {"predicted_after", outcome.predicted_after}};
        }

        [[nodiscard]] nlohmann::json describe(const std::string& id, const Session& session) const
        {
            const auto& dataset = *models_.dataset;
            const auto& episode = session.episode;
            const auto result = session.state.classify_all();
            const auto human = session.state.human_width;
            const auto support_labels = episode.support_labels();
            const auto query_labels = episode.query_labels();

            nlohmann::json classes = nlohmann::json::array();
            for (std::int64_t c = 0; c < episode.way; ++c) {
                const auto class_id = episode.class_ids[static_cast<std::size_t>(c)];
                classes.push_back({{"index", c}, {"class_id", class_id}, {"name", dataset.class_name(class_id)}});
            }
            nlohmann::json support = nlohmann::json::array();
            for (std::size_t i = 0; i < episode.support.size(); ++i) {
                const auto image = episode.support[i];
                support.push_back({{"image", image},
                                   {"image_id", dataset.image_ids()[static_cast<std::size_t>(image)]},
                                   {"label", support_labels[i]},
                                   {"png", encode_png(dataset, image)},
                                   {"predicted_attributes", to_vector(session.support_vectors[static_cast<std::int64_t>(i)])}});
            }
            nlohmann::json queries = nlohmann::json::array();
            for (std::size_t i = 0; i < episode.query.size(); ++i) {
                const auto q = static_cast<std::int64_t>(i);
                const auto image = episode.query[i];
                queries.push_back({{"image", image},
                                   {"image_id", dataset.image_ids()[static_cast<std::size_t>(image)]},
                                   {"label", query_labels[i]},
                                   {"png", encode_png(dataset, image)},
                                   {"predicted_attributes", to_vector(session.state.queries[q].slice(0, 0, human))},
                                   {"probabilities", to_vector(result.probabilities[q])},
                                   {"predicted", result.predicted[i]},
                                   {"misclassified", result.predicted[i] != query_labels[i]}});
            }
            return {{"episode_id", id},
                    {"split", session.split},
                    {"seed", session.seed},
                    {"N", episode.way},
                    {"K", episode.shot},
                    {"Q", episode.queries},
                    {"space", session.space},
                    {"gate", session.gate ? nlohmann::json(*session.gate) : nlohmann::json(nullptr)},
                    {"attributes", dataset.attribute_names()},
                    {"mask", to_vector(session.state.mask.slice(0, 0, human))},
                    {"pi", to_vector(session.pi)},
                    {"prototypes", to_rows(session.state.prototypes.slice(1, 0, human))},
                    {"classes", classes},
                    {"support", support},
                    {"queries", queries},
                    {"accuracy", episode_accuracy(result.predicted, query_labels)},
                    {"interventions", session.history}};
        }

        [[nodiscard]] std::shared_ptr<Session> find(const std::string& id) const
        {
            std::shared_lock lock(sessions_mutex_);
            const auto found = sessions_.find(id);
            if (found == sessions_.end()) {
                throw ServiceError(404, "no episode '" + id + "'");
            }
            return found->second;
        }

        std::uint64_t next_seed()
        {
            std::unique_lock lock(sessions_mutex_);
            return 1000 + counter_;
        }

        [[nodiscard]] static nlohmann::json parse_body(const httplib::Request& req)
        {
            if (req.body.empty()) {
                return nlohmann::json::object();
            }
            try {
                return nlohmann::json::parse(req.body);
            } catch (const nlohmann::json::exception& error) {
                throw ServiceError(400, std::string("malformed JSON body: ") + error.what());
            }
        }

        template <typename Handler>
        static void respond(httplib::Response& res, Handler&& handler)
        {
            int status = 200;
            nlohmann::json body;
            try {
                body = handler();
            } catch (const ServiceError& error) {
                status = error.status();
                body = {{"error", error.what()}};
            } catch (const InterventionRejected& error) {
                status = 422;
                body = {{"error", error.what()}, {"rejected", true}};
            } catch (const SamplingError& error) {
                status = 422;
                body = {{"error", error.what()}};
            } catch (const nlohmann::json::exception& error) {
                status = 400;
                body = {{"error", error.what()}};
            } catch (const Error& error) {
                status = 400;
                body = {{"error", error.what()}};
            } catch (const std::exception& error) {
                status = 500;
                body = {{"error", error.what()}};
            }
            res.status = status;
            res.set_content(body.dump(), "application/json");
        }

        ServiceModels models_;
        std::mutex models_mutex_;
        mutable std::shared_mutex sessions_mutex_;
        std::map<std::string, std::shared_ptr<Session>> sessions_;
        std::uint64_t counter_{0};
    };

}

#endif // IFSL_HARNESS_SERVICE_HPP
