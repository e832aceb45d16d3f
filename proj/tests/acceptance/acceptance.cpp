// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <ifsl/ifsl.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support/oracles.hpp"

namespace {

    namespace fs = std::filesystem;

    // Pinned tolerances and thresholds.
    constexpr double kWeightSumTolerance = 1e-12;
    constexpr std::int64_t kWeightVectors = 10000;
    constexpr double kGradientTolerance = 1e-4;
    constexpr std::int64_t kGradientInstances = 100;
    constexpr double kRowSumTolerance = 1e-6;
    constexpr std::int64_t kClassifierEpisodes = 1000;
    constexpr double kHandCaseTolerance = 1e-4;
    constexpr std::int64_t kGumbelDraws = 100000;
    constexpr double kGumbelTolerance = 0.01;
    constexpr double kMineIndependentBound = 0.05;
    constexpr double kMineTarget = 0.1438;   // -0.5 ln(1 - 0.5^2)
    constexpr double kMineTolerance = 0.03;
    constexpr int kMineSeeds = 5;
    constexpr double kMinNovelOverall = 95.0;
    constexpr double kMinOneShotAccuracy = 90.0;
    constexpr std::int64_t kProtocolEpisodes = 600;
    constexpr double kSelectorEta = 1e-3;
    constexpr double kMaxSelectorDrop = 3.0;
    constexpr std::int64_t kGateRendered = 30;
    constexpr std::int64_t kGateAnnotated = 3;
    constexpr double kGateLowBeta = 0.0;
    constexpr double kGateHighBeta = 80.0;

    struct Outcome {
        bool pass{false};
        std::string detail;
    };

    struct Context {
        fs::path work;
        bool quiet{false};
    };

    std::string sci(double value)
    {
        std::ostringstream out;
        out.setf(std::ios::scientific);
        out.precision(2);
        out << value;
        return out.str();
    }

    std::string fixed(double value, int digits = 4)
    {
        std::ostringstream out;
        out.setf(std::ios::fixed);
        out.precision(digits);
        out << value;
        return out.str();
    }

    ifsl::ProgressFn progress(const Context& context)
    {
        if (context.quiet) {
            return {};
        }
        return [](std::string_view line) { std::cerr << "    " << line << '\n'; };
    }

    // 1: sample weights of each value class sum to one.
    Outcome weight_invariant(const Context&)
    {
        std::mt19937_64 rng(101);
        std::uniform_int_distribution<int> width(2, 64);
        std::bernoulli_distribution coin(0.5);
        double worst = 0.0;
        for (std::int64_t i = 0; i < kWeightVectors; ++i) {
            const int a = width(rng);
            std::vector<double> bits(static_cast<std::size_t>(a));
            do {
                for (auto& b : bits) {
                    b = coin(rng) ? 1.0 : 0.0;
                }
            } while (std::all_of(bits.begin(), bits.end(), [&](double b) { return b == bits[0]; }));
            const auto vector = torch::tensor(bits, torch::kDouble);
            const auto weights = ifsl::sample_weights(vector);
            const double present = (weights * vector).sum().item<double>();
            const double absent = (weights * (1.0 - vector)).sum().item<double>();
            worst = std::max({worst, std::abs(present - 1.0), std::abs(absent - 1.0)});
        }
        return {worst <= kWeightSumTolerance, "max |sum - 1| = " + std::to_string(worst) + " over " + std::to_string(kWeightVectors) + " vectors"};
    }

    double gradient_error(const std::function<torch::Tensor(const torch::Tensor&)>& f, const torch::Tensor& x)
    {
        auto input = x.detach().clone().requires_grad_(true);
        f(input).backward();
        const auto analytic = input.grad();
        const auto numeric = ifsl::oracle::central_difference(
            [&](const torch::Tensor& v) { return f(v).item<double>(); }, x);
        return ifsl::oracle::max_relative_error(analytic, numeric, 1e-3);
    }

    // 2: autograd gradients against central differences in double precision.
    Outcome gradient_checks(const Context&)
    {
        torch::manual_seed(202);
        ifsl::Rng rng(202);
        double bce = 0.0;
        double loss = 0.0;
        double gumbel = 0.0;
        for (std::int64_t i = 0; i < kGradientInstances; ++i) {
            auto target = torch::randint(0, 2, {4, 6}, torch::kDouble);
            target[0][0] = 1.0;
            target[0][1] = 0.0;
            const auto predicted = torch::rand({4, 6}, torch::kDouble) * 0.9 + 0.05;
            bce = std::max(bce, gradient_error([&](const torch::Tensor& p) { return ifsl::weighted_bce(p, target); }, predicted));

            const auto prototypes = torch::randn({3, 5}, torch::kDouble);
            const auto mask = torch::randint(0, 2, {5}, torch::kDouble);
            const std::vector<std::int64_t> labels{0, 1, 2, 2, 1, 0};
            const auto queries = torch::randn({6, 5}, torch::kDouble);
            loss = std::max(loss, gradient_error(
                                      [&](const torch::Tensor& q) {
                                          return ifsl::episode_loss(ifsl::classify(q, prototypes, mask).probabilities, labels);
                                      },
                                      queries));

            const auto noise = ifsl::draw_gumbel_noise(7, rng, torch::kDouble);
            const auto pi = torch::rand({7}, torch::kDouble) * 0.8 + 0.1;
            const double tau = 0.5 + 3.5 * torch::rand({1}, torch::kDouble).item<double>();
            const auto weights = torch::randn({7}, torch::kDouble);
            gumbel = std::max(gumbel, gradient_error(
                                          [&](const torch::Tensor& p) { return (ifsl::gumbel_relax(p, noise, tau) * weights).sum(); }, pi));
        }
        const bool pass = bce < kGradientTolerance && loss < kGradientTolerance && gumbel < kGradientTolerance;
        return {pass, "max rel. error weighted_bce " + sci(bce) + ", episode_loss " + sci(loss) + ", gumbel_sample " + sci(gumbel)};
    }

    // 3: probability rows, masked-dimension invariance, hand-computed case.
    Outcome classifier_properties(const Context&)
    {
        torch::manual_seed(303);
        double worst_row = 0.0;
        bool invariant = true;
        for (std::int64_t e = 0; e < kClassifierEpisodes; ++e) {
            const auto width = 3 + e % 6;
            const auto prototypes = torch::rand({5, width}, torch::kDouble);
            const auto queries = torch::rand({10, width}, torch::kDouble);
            auto mask = torch::randint(0, 2, {width}, torch::kDouble);
            mask[0] = 1.0;
            const auto probabilities = ifsl::classify(queries, prototypes, mask).probabilities;
            worst_row = std::max(worst_row, (probabilities.sum(1) - 1.0).abs().max().item<double>());
            // Rewrite masked coordinates with arbitrary values; nothing may change.
            const auto off = (1.0 - mask).to(torch::kBool);
            auto scrambled_q = queries.clone();
            auto scrambled_p = prototypes.clone();
            scrambled_q.index_put_({torch::indexing::Slice(), off}, torch::rand({10, off.sum().item<std::int64_t>()}, torch::kDouble) * 100.0);
            scrambled_p.index_put_({torch::indexing::Slice(), off}, torch::rand({5, off.sum().item<std::int64_t>()}, torch::kDouble) * -50.0);
            const auto again = ifsl::classify(scrambled_q, scrambled_p, mask).probabilities;
            invariant = invariant && torch::equal(again, probabilities);
        }
        const auto hand = ifsl::classify(torch::tensor({{1.0, 0.0}}, torch::kDouble), torch::tensor({{1.0, 0.0}, {0.0, 1.0}}, torch::kDouble))
                              .probabilities;
        const double p0 = hand[0][0].item<double>();
        const double p1 = hand[0][1].item<double>();
        const bool hand_ok = std::abs(p0 - 0.8808) <= kHandCaseTolerance && std::abs(p1 - 0.1192) <= kHandCaseTolerance;
        return {worst_row <= kRowSumTolerance && invariant && hand_ok,
                "max |row sum - 1| " + std::to_string(worst_row) + ", masked invariance " + (invariant ? "exact" : "BROKEN") +
                    " on " + std::to_string(kClassifierEpisodes) + " episodes, hand case (" + fixed(p0) + ", " + fixed(p1) + ")"};
    }

    // 4: Gumbel keep frequency at low temperature and the temperature schedule.
    Outcome gumbel_statistics(const Context&)
    {
        ifsl::Rng rng(404);
        bool pass = true;
        std::string detail;
        for (const double pi : {0.1, 0.5, 0.9}) {
            const auto states = ifsl::gumbel_sample(torch::full({kGumbelDraws}, pi, torch::kDouble), 0.1, rng);
            const double frequency = states.gt(0.5).to(torch::kDouble).mean().item<double>();
            pass = pass && std::abs(frequency - pi) <= kGumbelTolerance;
            detail += "P(s>0.5|pi=" + fixed(pi, 1) + ")=" + fixed(frequency) + " ";
        }
        const double t0 = ifsl::temperature_schedule(0);
        const double t1 = ifsl::temperature_schedule(12500);
        const double tail = ifsl::temperature_schedule(10'000'000);
        pass = pass && t0 == 4.0 && t1 == 2.0 && tail == 0.5;
        detail += "tau(0)=" + fixed(t0, 2) + " tau(12500)=" + fixed(t1, 2) + " floor=" + fixed(tail, 2);
        return {pass, detail};
    }

    // 5: MINE on independent and correlated Gaussian pairs, median over seeds.
    Outcome mine_estimates(const Context&)
    {
        const auto gaussian = [](double rho) {
            return [rho](std::int64_t count, ifsl::Rng& rng) {
                std::normal_distribution<double> normal;
                std::vector<float> x(static_cast<std::size_t>(count));
                std::vector<float> y(static_cast<std::size_t>(count));
                for (std::size_t i = 0; i < x.size(); ++i) {
                    const double a = normal(rng);
                    const double b = normal(rng);
                    x[i] = static_cast<float>(a);
                    y[i] = static_cast<float>(rho * a + std::sqrt(1.0 - rho * rho) * b);
                }
                return std::make_pair(torch::tensor(x).view({count, 1}), torch::tensor(y).view({count, 1}));
            };
        };
        const auto median = [](std::vector<double> values) {
            std::sort(values.begin(), values.end());
            return values[values.size() / 2];
        };
        ifsl::MineConfig config;
        std::vector<double> independent;
        std::vector<double> correlated;
        for (int s = 0; s < kMineSeeds; ++s) {
            independent.push_back(ifsl::estimate_mutual_information(gaussian(0.0), 1, 1, config, 500 + static_cast<std::uint64_t>(s)));
            correlated.push_back(ifsl::estimate_mutual_information(gaussian(0.5), 1, 1, config, 600 + static_cast<std::uint64_t>(s)));
        }
        const double zero = median(independent);
        const double half = median(correlated);
        return {std::abs(zero) < kMineIndependentBound && std::abs(half - kMineTarget) <= kMineTolerance,
                "independent median " + fixed(zero) + " (|.| < " + fixed(kMineIndependentBound, 2) + "), rho=0.5 median " + fixed(half) +
                    " (target " + fixed(kMineTarget) + " +- " + fixed(kMineTolerance, 2) + ")"};
    }

    ifsl::ExperimentConfig benchmark_config(const Context& context)
    {
        auto config = ifsl::desk_profile();
        config.output = (context.work / "benchmark").string();
        config.evaluation.episodes = kProtocolEpisodes;
        return config;
    }

    // 6: attribute accuracy on novel images and human-friendly 5-way 1-shot accuracy.
    Outcome synthetic_end_to_end(const Context& context)
    {
        const auto config = benchmark_config(context);
        ifsl::Pipeline pipeline(config, progress(context));
        (void)pipeline.run({"f_h"});
        auto predictor = ifsl::load_predictor_checkpoint(config.output);
        const auto novel = ifsl::evaluate_attribute_accuracy(predictor.net, pipeline.data().views.novel);
        ifsl::EvalModels models;
        models.known = &pipeline.known_features();
        const auto report = ifsl::evaluate(models, pipeline.data().views.novel, config.evaluation);
        ifsl::write_json_file(context.work / "criterion6.json", {{"novel_attribute_accuracy", novel}, {"report", report}});
        return {novel.overall.mean >= kMinNovelOverall && report.accuracy.mean >= kMinOneShotAccuracy,
                "novel OV " + fixed(novel.overall.mean, 2) + "% (>= " + fixed(kMinNovelOverall, 0) + "), 5-way 1-shot " +
                    fixed(report.accuracy.mean, 2) + " +- " + fixed(report.accuracy.ci95, 2) + "% over " +
                    std::to_string(report.episode_accuracy.size()) + " episodes (>= " + fixed(kMinOneShotAccuracy, 0) + ")"};
    }

    // 7: the selection penalty lowers the attribute count at a small accuracy cost.
    Outcome selector_trend(const Context& context)
    {
        const auto config = benchmark_config(context);
        ifsl::Pipeline(config, progress(context)).run({"f_h"});
        const auto reports = ifsl::run_sweep(config, "eta", {0.0, kSelectorEta}, progress(context));
        const auto& plain = reports[0];
        const auto& penalized = reports[1];
        const double drop = plain.accuracy.mean - penalized.accuracy.mean;
        return {penalized.avg_selected_attributes < plain.avg_selected_attributes && drop <= kMaxSelectorDrop,
                "eta=0: " + fixed(plain.avg_selected_attributes, 2) + " attributes, " + fixed(plain.accuracy.mean, 2) + "%; eta=1e-3: " +
                    fixed(penalized.avg_selected_attributes, 2) + " attributes, " + fixed(penalized.accuracy.mean, 2) + "% (drop " +
                    fixed(drop, 2) + " <= " + fixed(kMaxSelectorDrop, 0) + ")"};
    }

    ifsl::ExperimentConfig gate_config(const Context& context)
    {
        auto config = ifsl::desk_profile();
        config.output = (context.work / "gate").string();
        config.synthetic.num_attributes = kGateRendered;
        config.synthetic.annotated_attributes = kGateAnnotated;
        config.evaluation.episodes = kProtocolEpisodes;
        return config;
    }

    // 8: with most attributes unannotated, the gated mixed space beats human-friendly only, and
    // a larger gate penalty keeps more episodes human-friendly.
    Outcome gate_tradeoff(const Context& context)
    {
        const auto config = gate_config(context);
        ifsl::Pipeline pipeline(config, progress(context));
        (void)pipeline.run({"f_h", "g_h", "f_u"});
        auto selector = ifsl::load_selector_checkpoint(config.output);
        ifsl::EvalModels human;
        human.known = &pipeline.known_features();
        human.selector = &selector.net;
        const auto human_report = ifsl::evaluate(human, pipeline.data().views.novel, config.evaluation);
        const auto reports = ifsl::run_sweep(config, "beta", {kGateLowBeta, kGateHighBeta}, progress(context));
        const auto& low = reports[0];
        const auto& high = reports[1];
        ifsl::write_json_file(context.work / "criterion8.json", {{"human_friendly", human_report}, {"low_beta", low}, {"high_beta", high}});
        return {low.accuracy.mean >= human_report.accuracy.mean && high.pct_human_friendly_episodes > low.pct_human_friendly_episodes,
                "human-friendly only " + fixed(human_report.accuracy.mean, 2) + "%, gated (beta=" + fixed(kGateLowBeta, 1) + ") " +
                    fixed(low.accuracy.mean, 2) + "% with " + fixed(low.pct_human_friendly_episodes, 1) + "% human-friendly episodes, beta=" +
                    fixed(kGateHighBeta, 1) + ": " + fixed(high.pct_human_friendly_episodes, 1) + "%"};
    }

    // 9: simulated interventions; ratio 0 changes nothing and larger ratios help.
    Outcome intervention_gain(const Context& context)
    {
        auto config = benchmark_config(context);
        config.intervention.ratios = {0.0, 0.05, 0.10};
        ifsl::Pipeline pipeline(config, progress(context));
        const auto result = pipeline.run({"f_h", "g_h", "intervene"});
        const auto& r0 = result.interventions[0];
        const auto& r5 = result.interventions[1];
        const auto& r10 = result.interventions[2];
        const bool identity = r0.interventions == 0 && r0.after.mean == r0.before.mean && r0.gain.mean == 0.0;
        const bool ordered = r10.after.mean >= r5.after.mean && r5.after.mean >= r0.after.mean;
        const bool significant = r10.gain.mean - r10.gain.ci95 > 0.0;
        return {identity && ordered && significant,
                "r=0 " + fixed(r0.after.mean, 2) + "% (" + (identity ? "identity" : "NOT identity") + "), r=5% " + fixed(r5.after.mean, 2) +
                    "%, r=10% " + fixed(r10.after.mean, 2) + "%, gain " + fixed(r10.gain.mean, 2) + " +- " + fixed(r10.gain.ci95, 2)};
    }

    std::string slurp(const fs::path& path)
    {
        std::ifstream in(path, std::ios::binary);
        return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    }

    // 10: two fresh runs of every stage give byte-identical artifacts.
    Outcome determinism(const Context& context)
    {
        auto config = ifsl::desk_profile();
        config.predictor.epochs = 3;
        config.selector.episodes = 300;
        config.unknown.episodes = 30;
        config.gate.episodes = 300;
        config.evaluation.episodes = 100;
        std::vector<std::string> stages(ifsl::pipeline_stages().begin(), ifsl::pipeline_stages().end());
        for (const auto* name : {"determinism_a", "determinism_b"}) {
            config.output = (context.work / name).string();
            fs::remove_all(config.output);
            ifsl::Pipeline(config, progress(context)).run(stages);
        }
        std::vector<std::string> differing;
        int compared = 0;
        for (const auto* file : {"eval_report.json", "intervention_report.json", "f_h.json", "g_h.json", "f_u.json", "g_u.json", "pipeline.log"}) {
            const auto a = slurp(context.work / "determinism_a" / file);
            const auto b = slurp(context.work / "determinism_b" / file);
            ++compared;
            if (a.empty() || a != b) {
                differing.emplace_back(file);
            }
        }
        // Rerunning evaluation over existing checkpoints rewrites the same bytes.
        const auto before = slurp(context.work / "determinism_a" / "eval_report.json");
        config.output = (context.work / "determinism_a").string();
        ifsl::Pipeline(config).run({"evaluate"});
        if (slurp(context.work / "determinism_a" / "eval_report.json") != before) {
            differing.emplace_back("eval_report.json (rerun)");
        }
        std::string detail = std::to_string(compared) + " artifacts compared across two runs plus an evaluate rerun";
        for (const auto& name : differing) {
            detail += ", differs: " + name;
        }
        return {differing.empty(), detail};
    }

}

int main(int argc, char** argv)
{
    CLI::App app{"acceptance suite"};
    Context context;
    std::string work{"acceptance_artifacts"};
    std::vector<int> only;
    app.add_option("--work-dir", work, "directory for runs and result files");
    app.add_option("--only", only, "run only these criteria")->delimiter(',');
    app.add_flag("-q,--quiet", context.quiet, "no training progress");
    CLI11_PARSE(app, argc, argv);
    context.work = work;
    fs::create_directories(context.work);

    const std::vector<std::pair<std::string, std::function<Outcome(const Context&)>>> criteria{
        {"weighted-BCE weight invariant", weight_invariant},
        {"loss and sampler gradients", gradient_checks},
        {"classifier properties", classifier_properties},
        {"Gumbel sampler statistics", gumbel_statistics},
        {"MINE estimates", mine_estimates},
        {"synthetic end-to-end", synthetic_end_to_end},
        {"selector trend", selector_trend},
        {"gate trade-off", gate_tradeoff},
        {"intervention gain", intervention_gain},
        {"determinism", determinism},
    };
    nlohmann::json results = nlohmann::json::object();
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int number = static_cast<int>(i) + 1;
        if (!only.empty() && std::find(only.begin(), only.end(), number) == only.end()) {
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = criteria[i].second(context);
        } catch (const std::exception& error) {
            outcome = {false, std::string("error: ") + error.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        all = all && outcome.pass;
        std::cout << (outcome.pass ? "PASS" : "FAIL") << " criterion " << number << " (" << criteria[i].first << "): " << outcome.detail
                  << " [" << fixed(seconds, 1) << " s]" << std::endl;
        results[std::to_string(number)] = {{"name", criteria[i].first}, {"pass", outcome.pass}, {"detail", outcome.detail}, {"seconds", seconds}};
    }
    ifsl::write_json_file(context.work / "acceptance.json", results);
    return all ? 0 : 1;
}
