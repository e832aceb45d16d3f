#include <ifsl/ifsl.hpp>

#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

    // Flags shared by every pipeline subcommand. Unset flags keep the config file (or profile) value.
    struct CommonFlags {
        std::string config_file;
        std::string profile{"desk"};
        std::optional<std::string> dataset;
        std::optional<std::string> format;
        std::optional<std::string> split;
        std::optional<std::string> output;
        std::optional<std::uint64_t> seed;
        std::optional<std::int64_t> way;
        std::optional<std::int64_t> shot;
        std::optional<std::int64_t> queries;
        std::optional<std::string> distance;
        bool quiet{false};
    };

    template <typename T>
    CLI::Option* add_optional(CLI::App& app, const std::string& name, std::optional<T>& target, const std::string& help = {})
    {
        return app.add_option_function<T>(name, [&target](const T& value) { target = value; }, help);
    }

    void add_common(CLI::App& app, CommonFlags& flags)
    {
        app.add_option("-c,--config", flags.config_file, "experiment config JSON")->check(CLI::ExistingFile);
        app.add_option("--profile", flags.profile, "base settings when no config file is given")
            ->check(CLI::IsMember({"desk", "full"}));
        add_optional(app, "--dataset", flags.dataset, "dataset directory (empty: synthetic benchmark)");
        add_optional(app, "--format", flags.format, "dataset format (auto, csv-dir)");
        add_optional(app, "--split", flags.split, "split JSON (default <dataset>/splits.json)");
        add_optional(app, "-o,--output", flags.output, "run directory");
        add_optional(app, "--seed", flags.seed, "run seed");
        add_optional(app, "-N,--way", flags.way, "classes per episode");
        add_optional(app, "-K,--shot", flags.shot, "support images per class");
        add_optional(app, "-Q,--queries", flags.queries, "query images per class");
        add_optional(app, "--distance", flags.distance)->check(CLI::IsMember({"squared_euclidean", "euclidean", "cosine"}));
        app.add_flag("-q,--quiet", flags.quiet, "no progress output");
    }

    template <typename T>
    void override_with(const std::optional<T>& value, T& target)
    {
        if (value) {
            target = *value;
        }
    }

    ifsl::ExperimentConfig build_config(const CommonFlags& flags)
    {
        ifsl::ExperimentConfig config = flags.profile == "desk" ? ifsl::desk_profile() : ifsl::ExperimentConfig{};
        if (!flags.config_file.empty()) {
            config = ifsl::load_experiment_config(flags.config_file);
        }
        override_with(flags.dataset, config.dataset);
        override_with(flags.format, config.format);
        override_with(flags.split, config.split);
        override_with(flags.output, config.output);
        override_with(flags.seed, config.seed);
        for (auto* way : {&config.selector.way, &config.unknown.way, &config.gate.way, &config.evaluation.way}) {
            override_with(flags.way, *way);
        }
        for (auto* shot : {&config.selector.shot, &config.unknown.shot, &config.gate.shot, &config.evaluation.shot}) {
            override_with(flags.shot, *shot);
        }
        for (auto* queries : {&config.selector.queries, &config.unknown.queries, &config.gate.queries, &config.evaluation.queries}) {
            override_with(flags.queries, *queries);
        }
        if (flags.distance) {
            const auto distance = ifsl::parse_distance(*flags.distance);
            config.selector.distance = config.unknown.distance = config.gate.distance = config.evaluation.distance = distance;
        }
        return config;
    }

    ifsl::ProgressFn progress_printer(const CommonFlags& flags)
    {
        if (flags.quiet) {
            return {};
        }
        return [](std::string_view line) { std::cerr << line << '\n'; };
    }

    void print_report(const ifsl::EvalReport& report)
    {
        std::cout << "space " << report.space << "  accuracy " << report.accuracy.mean << " +- " << report.accuracy.ci95
                  << "  selected " << report.avg_selected_attributes << "/" << report.num_attributes << "  human-friendly "
                  << report.pct_human_friendly_episodes << "%\n";
    }

    httplib::Server* active_server = nullptr;

    void stop_server(int)
    {
        if (active_server != nullptr) {
            active_server->stop();
        }
    }

}

int main(int argc, char** argv)
{
    CLI::App app{"Interpretable few-shot learning with attributes"};
    app.require_subcommand(1);

    // synth-gen
    auto* synth = app.add_subcommand("synth-gen", "write the synthetic benchmark as a dataset directory");
    std::string synth_out;
    std::string synth_config;
    ifsl::SyntheticSpec spec = ifsl::desk_profile().synthetic;
    synth->add_option("out", synth_out, "destination directory")->required();
    synth->add_option("-c,--config", synth_config, "experiment config whose synthetic block is used")->check(CLI::ExistingFile);
    synth->add_option("--classes", spec.num_classes, "number of classes");
    synth->add_option("--attributes", spec.num_attributes, "rendered attributes");
    synth->add_option("--annotated", spec.annotated_attributes, "annotated subset size (0: all)");
    synth->add_option("--samples-per-class", spec.samples_per_class, "images per class");
    synth->add_option("--noise", spec.noise_level, "pixel noise level in [0, 1]");
    synth->add_option("--base-classes", spec.base_classes, "classes in the base split");
    synth->add_option("--validation-classes", spec.validation_classes, "classes in the validation split");
    synth->add_option("--seed", spec.seed, "generator seed");

    // Training stages.
    CommonFlags predictor_flags;
    auto* predictor = app.add_subcommand("train-predictor", "train the human-friendly attribute predictor f_h");
    add_common(*predictor, predictor_flags);
    std::optional<std::int64_t> predictor_epochs;
    std::optional<std::int64_t> predictor_width;
    std::optional<double> predictor_lr;
    add_optional(*predictor, "--epochs", predictor_epochs, "training epochs");
    add_optional(*predictor, "--hidden-channels", predictor_width, "width of the first three conv blocks");
    add_optional(*predictor, "--lr", predictor_lr, "Adam learning rate");
    bool no_augment = false;
    predictor->add_flag("--no-augment", no_augment, "disable flip and colour jitter");

    CommonFlags selector_flags;
    auto* selector = app.add_subcommand("train-selector", "train the attribute selector g_h on frozen f_h");
    add_common(*selector, selector_flags);
    std::optional<double> eta;
    std::optional<double> alpha;
    std::optional<std::int64_t> selector_episodes;
    add_optional(*selector, "--eta", eta, "weight of the attribute-count penalty");
    add_optional(*selector, "--alpha", alpha, "weight of the classification loss");
    add_optional(*selector, "--episodes", selector_episodes, "training episodes");

    CommonFlags unknown_flags;
    auto* unknown = app.add_subcommand("train-unknown", "train the unknown-attribute predictor f_u on frozen f_h");
    add_common(*unknown, unknown_flags);
    std::optional<double> lambda;
    std::optional<std::int64_t> unknown_episodes;
    std::optional<std::int64_t> critic_steps;
    add_optional(*unknown, "--lambda", lambda, "weight of the mutual-information penalty");
    add_optional(*unknown, "--episodes", unknown_episodes, "training episodes");
    add_optional(*unknown, "--critic-steps", critic_steps, "critic updates per episode");

    CommonFlags gate_flags;
    auto* gate = app.add_subcommand("train-gate", "train the unknown-attribute gate g_u");
    add_common(*gate, gate_flags);
    std::optional<double> beta;
    std::optional<std::int64_t> gate_episodes;
    add_optional(*gate, "--beta", beta, "weight of the gate penalty");
    add_optional(*gate, "--episodes", gate_episodes, "training episodes");

    CommonFlags evaluate_flags;
    auto* evaluate = app.add_subcommand("evaluate", "evaluate the checkpoints of a run on novel-class episodes");
    add_common(*evaluate, evaluate_flags);
    std::optional<std::int64_t> eval_episodes;
    std::optional<std::uint64_t> eval_seed;
    std::vector<double> sweep_eta;
    std::vector<double> sweep_beta;
    add_optional(*evaluate, "-E,--episodes", eval_episodes, "episodes to sample (default 600)");
    add_optional(*evaluate, "--eval-seed", eval_seed, "episode sampling seed");
    evaluate->add_option("--sweep-eta", sweep_eta, "retrain g_h per value and evaluate each")->delimiter(',');
    evaluate->add_option("--sweep-beta", sweep_beta, "retrain g_u per value and evaluate each")->delimiter(',');

    CommonFlags intervene_flags;
    auto* intervene = app.add_subcommand("intervene-sim", "simulate interventions on misclassified queries");
    add_common(*intervene, intervene_flags);
    std::vector<double> ratios;
    std::optional<std::string> space;
    std::optional<std::int64_t> intervene_episodes;
    intervene->add_option("--ratios", ratios, "fractions of selected attributes")->delimiter(',');
    add_optional(*intervene, "--space", space, "classification space")->check(CLI::IsMember({"human-friendly", "mixed"}));
    add_optional(*intervene, "-E,--episodes", intervene_episodes, "episodes to sample (default 600)");

    CommonFlags serve_flags;
    auto* serve = app.add_subcommand("serve", "serve the intervention API of a trained run");
    add_common(*serve, serve_flags);
    std::string host{"127.0.0.1"};
    int port{8080};
    std::string static_dir;
    serve->add_option("--host", host, "bind address");
    serve->add_option("--port", port, "listen port");
    serve->add_option("--static", static_dir, "directory of static assets served at /")->check(CLI::ExistingDirectory);

    CommonFlags print_flags;
    auto* print = app.add_subcommand("print-config", "print the effective experiment config as JSON");
    add_common(*print, print_flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            if (!synth_config.empty()) {
                spec = ifsl::load_experiment_config(synth_config).synthetic;
            }
            const auto synthetic = ifsl::generate_synthetic(spec);
            ifsl::save_dataset(*synthetic.dataset, synth_out, &synthetic.split);
            std::cout << "wrote " << synthetic.dataset->num_images() << " images, " << synthetic.dataset->num_attributes()
                      << " attributes to " << synth_out << '\n';
            return 0;
        }
        if (print->parsed()) {
            std::cout << nlohmann::json(build_config(print_flags)).dump(2) << '\n';
            return 0;
        }
        if (predictor->parsed()) {
            auto config = build_config(predictor_flags);
            override_with(predictor_epochs, config.predictor.epochs);
            override_with(predictor_width, config.predictor.hidden_channels);
            override_with(predictor_lr, config.predictor.learning_rate);
            if (no_augment) {
                config.predictor.augment = false;
            }
            ifsl::Pipeline(config, progress_printer(predictor_flags)).run({"f_h"});
            return 0;
        }
        if (selector->parsed()) {
            auto config = build_config(selector_flags);
            override_with(eta, config.selector.eta);
            override_with(alpha, config.selector.alpha);
            override_with(selector_episodes, config.selector.episodes);
            ifsl::Pipeline(config, progress_printer(selector_flags)).run({"g_h"});
            return 0;
        }
        if (unknown->parsed()) {
            auto config = build_config(unknown_flags);
            override_with(lambda, config.unknown.lambda);
            override_with(unknown_episodes, config.unknown.episodes);
            override_with(critic_steps, config.unknown.critic_steps);
            ifsl::Pipeline(config, progress_printer(unknown_flags)).run({"f_u"});
            return 0;
        }
        if (gate->parsed()) {
            auto config = build_config(gate_flags);
            override_with(beta, config.gate.beta);
            override_with(gate_episodes, config.gate.episodes);
            ifsl::Pipeline(config, progress_printer(gate_flags)).run({"g_u"});
            return 0;
        }
        if (evaluate->parsed()) {
            auto config = build_config(evaluate_flags);
            override_with(eval_episodes, config.evaluation.episodes);
            override_with(eval_seed, config.evaluation.seed);
            if (!sweep_eta.empty() || !sweep_beta.empty()) {
                const auto parameter = sweep_eta.empty() ? "beta" : "eta";
                const auto& values = sweep_eta.empty() ? sweep_beta : sweep_eta;
                const auto reports = ifsl::run_sweep(config, parameter, values, progress_printer(evaluate_flags));
                for (std::size_t i = 0; i < reports.size(); ++i) {
                    std::cout << parameter << '=' << values[i] << "  ";
                    print_report(reports[i]);
                }
                return 0;
            }
            const auto result = ifsl::Pipeline(config, progress_printer(evaluate_flags)).run({"evaluate"});
            print_report(*result.report);
            return 0;
        }
        if (intervene->parsed()) {
            auto config = build_config(intervene_flags);
            if (!ratios.empty()) {
                config.intervention.ratios = ratios;
            }
            if (space) {
                config.intervention.space = ifsl::parse_space(*space);
            }
            override_with(intervene_episodes, config.evaluation.episodes);
            const auto result = ifsl::Pipeline(config, progress_printer(intervene_flags)).run({"intervene"});
            for (const auto& report : result.interventions) {
                std::cout << "ratio " << report.ratio << "  before " << report.before.mean << "  after " << report.after.mean
                          << " +- " << report.after.ci95 << "  gain " << report.gain.mean << '\n';
            }
            return 0;
        }
        if (serve->parsed()) {
            const auto config = build_config(serve_flags);
            ifsl::Service service(ifsl::load_service_models(config));
            httplib::Server server;
            service.mount(server, static_dir.empty() ? std::nullopt : std::optional<std::filesystem::path>(static_dir));
            active_server = &server;
            std::signal(SIGINT, stop_server);
            std::signal(SIGTERM, stop_server);
            std::cerr << "listening on http://" << host << ':' << port << '\n';
            if (!server.listen(host, port)) {
                std::cerr << "error: cannot listen on " << host << ':' << port << '\n';
                return 1;
            }
            return 0;
        }
    } catch (const ifsl::Error& error) {
        std::cerr << "error: " << error.what() << '\n';
        return 2;
    } catch (const std::exception& error) {
        std::cerr << "error: " << error.what() << '\n';
        return 3;
    }
    return 0;
}
