#include <gtest/gtest.h>

#include <ifsl/selector/encoder.hpp>
#include <ifsl/selector/gumbel.hpp>
#include <ifsl/selector/trainer.hpp>

#include <cmath>
#include <random>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace {

    ifsl::GumbelNoise zero_noise(std::int64_t count)
    {
        return {torch::zeros({count}, torch::kDouble), torch::zeros({count}, torch::kDouble)};
    }

    TEST(Gumbel, ReferenceValues)
    {
        const auto half = torch::tensor({0.5}, torch::kDouble);
        for (const double tau : {0.1, 0.5, 1.0, 4.0}) {
            const ifsl::GumbelNoise same{torch::tensor({0.37}, torch::kDouble), torch::tensor({0.37}, torch::kDouble)};
            EXPECT_NEAR(ifsl::gumbel_relax(half, same, tau).item<double>(), 0.5, 1e-15);
        }
        const auto pi = torch::tensor({0.9}, torch::kDouble);
        EXPECT_NEAR(ifsl::gumbel_relax(pi, zero_noise(1), 1.0).item<double>(), 0.9, 1e-12);
        EXPECT_NEAR(ifsl::gumbel_relax(pi, zero_noise(1), 0.5).item<double>(), 0.81 / 0.82, 1e-12);
        EXPECT_NEAR(ifsl::gumbel_relax(pi, zero_noise(1), 0.5).item<double>(), 0.9878, 1e-4);
        EXPECT_NEAR(ifsl::gumbel_relax(pi, zero_noise(1), 0.5).item<double>(), ifsl::oracle::gumbel_state(0.9, 0, 0, 0.5), 1e-12);
    }

    TEST(Gumbel, DomainErrors)
    {
        ifsl::Rng rng(1);
        EXPECT_THROW((void)ifsl::gumbel_sample(torch::tensor({0.0, 0.5}), 1.0, rng), ifsl::DomainError);
        EXPECT_THROW((void)ifsl::gumbel_sample(torch::tensor({1.0}), 1.0, rng), ifsl::DomainError);
        EXPECT_THROW((void)ifsl::gumbel_sample(torch::tensor({0.5}), 0.0, rng), ifsl::DomainError);
        EXPECT_NO_THROW((void)ifsl::gumbel_sample(ifsl::clamp_probabilities(torch::tensor({0.0, 1.0})), 1.0, rng));
    }

    TEST(Gumbel, LowTemperatureMatchesBernoulli)
    {
        ifsl::Rng rng(2024);
        for (const double p : {0.1, 0.5, 0.9}) {
            const auto pi = torch::full({100000}, p, torch::kDouble);
            const auto states = ifsl::gumbel_sample(pi, 0.1, rng);
            const double fraction = states.gt(0.5).to(torch::kDouble).mean().item<double>();
            EXPECT_NEAR(fraction, p, 0.01);
        }
    }

    TEST(Gumbel, StatesAgreeWithScalarOracle)
    {
        ifsl::Rng rng(6);
        std::uniform_real_distribution<double> unit(0.01, 0.99);
        for (int trial = 0; trial < 200; ++trial) {
            const auto pi = torch::tensor({unit(rng), unit(rng), unit(rng)}, torch::kDouble);
            const auto noise = ifsl::draw_gumbel_noise(3, rng, torch::kDouble);
            const double tau = 0.25 + 4.0 * unit(rng);
            const auto branches = ifsl::gumbel_branches(pi, noise, tau);
            for (std::int64_t i = 0; i < 3; ++i) {
                const double s = branches[i][0].item<double>();
                EXPECT_NEAR(s, ifsl::oracle::gumbel_state(pi[i].item<double>(), noise.keep[i].item<double>(),
                                                          noise.drop[i].item<double>(), tau), 1e-12);
                EXPECT_GT(s, 0.0);
                EXPECT_LT(s, 1.0);
                EXPECT_NEAR(s + branches[i][1].item<double>(), 1.0, 1e-15);
            }
        }
    }

    TEST(Gumbel, MonotoneInProbabilityWithFixedNoise)
    {
        ifsl::Rng rng(9);
        for (int trial = 0; trial < 100; ++trial) {
            const auto noise = ifsl::draw_gumbel_noise(1, rng, torch::kDouble);
            double previous = -1.0;
            for (double p = 0.05; p < 0.96; p += 0.05) {
                const double s = ifsl::gumbel_relax(torch::tensor({p}, torch::kDouble), noise, 1.0).item<double>();
                EXPECT_GT(s, previous);
                previous = s;
            }
        }
    }

    TEST(Gumbel, ZeroTemperatureLimitIsGumbelMax)
    {
        ifsl::Rng rng(10);
        std::uniform_real_distribution<double> unit(0.05, 0.95);
        for (int trial = 0; trial < 200; ++trial) {
            const double p = unit(rng);
            const auto noise = ifsl::draw_gumbel_noise(1, rng, torch::kDouble);
            const double keep = std::log(p) + noise.keep.item<double>();
            const double drop = std::log(1.0 - p) + noise.drop.item<double>();
            if (std::abs(keep - drop) < 0.05) {
                continue;
            }
            const double s = ifsl::gumbel_relax(torch::tensor({p}, torch::kDouble), noise, 1e-3).item<double>();
            EXPECT_NEAR(s, keep > drop ? 1.0 : 0.0, 1e-6);
        }
    }

    TEST(Gumbel, GradientMatchesCentralDifferences)
    {
        ifsl::Rng rng(33);
        for (int trial = 0; trial < 30; ++trial) {
            const auto noise = ifsl::draw_gumbel_noise(6, rng, torch::kDouble);
            const auto weights = torch::rand({6}, torch::kDouble);
            auto pi = (torch::rand({6}, torch::kDouble) * 0.9 + 0.05).requires_grad_(true);
            (ifsl::gumbel_relax(pi, noise, 0.7) * weights).sum().backward();
            const auto numeric = ifsl::oracle::central_difference(
                [&](const torch::Tensor& x) { return (ifsl::gumbel_relax(x, noise, 0.7) * weights).sum().item<double>(); }, pi);
            EXPECT_LT(ifsl::oracle::max_relative_error(pi.grad(), numeric), 1e-4);
        }
    }

    TEST(HardSelect, ThresholdAtHalf)
    {
        EXPECT_TRUE(torch::equal(ifsl::hard_select(torch::tensor({0.7, 0.3})), torch::tensor({1.0F, 0.0F})));
        EXPECT_TRUE(torch::equal(ifsl::hard_select(torch::tensor({0.5})), torch::tensor({1.0F})));
        EXPECT_EQ(ifsl::hard_select(torch::tensor({0.1, 0.2, 0.49})).sum().item<double>(), 0.0);
    }

    TEST(TemperatureSchedule, PaperSchedule)
    {
        EXPECT_DOUBLE_EQ(ifsl::temperature_schedule(0), 4.0);
        EXPECT_DOUBLE_EQ(ifsl::temperature_schedule(12499), 4.0);
        EXPECT_DOUBLE_EQ(ifsl::temperature_schedule(12500), 2.0);
        EXPECT_DOUBLE_EQ(ifsl::temperature_schedule(25000), 1.0);
        EXPECT_DOUBLE_EQ(ifsl::temperature_schedule(37500), 0.5);
        EXPECT_DOUBLE_EQ(ifsl::temperature_schedule(1000000), 0.5);
        EXPECT_THROW((void)ifsl::temperature_schedule(-1), ifsl::ConfigError);
    }

    TEST(SelectorLoss, Arithmetic)
    {
        const auto l_cls = torch::tensor(2.0, torch::kDouble);
        const auto states = torch::full({200}, 0.5, torch::kDouble);
        EXPECT_DOUBLE_EQ(ifsl::selector_loss(l_cls, states, 1.0, 0.0).item<double>(), 2.0);
        EXPECT_NEAR(ifsl::selector_loss(l_cls, states, 1.0, 1e-3).item<double>(), 2.1, 1e-12);
        EXPECT_THROW((void)ifsl::selector_loss(l_cls, states, -1.0, 0.0), ifsl::ConfigError);
        auto bumped = states.clone();
        bumped[7] = 0.6;
        EXPECT_GT(ifsl::selector_loss(l_cls, bumped, 1.0, 1e-3).item<double>(),
                  ifsl::selector_loss(l_cls, states, 1.0, 1e-3).item<double>());
    }

    TEST(EpisodeEncoder, RangeDeterminismAndShapeChecks)
    {
        torch::manual_seed(2);
        ifsl::EpisodeEncoder selector(6, 6);
        selector->eval();
        const auto prototypes = torch::rand({5, 6});
        const auto a = ifsl::select_probabilities(selector, prototypes);
        const auto b = ifsl::select_probabilities(selector, prototypes);
        EXPECT_EQ(a.sizes(), (std::vector<std::int64_t>{6}));
        EXPECT_TRUE(a.gt(0).all().item<bool>());
        EXPECT_TRUE(a.lt(1).all().item<bool>());
        EXPECT_TRUE(torch::equal(a, b));
        EXPECT_THROW((void)ifsl::select_probabilities(selector, torch::rand({5, 7})), ifsl::ValidationError);
        EXPECT_THROW((void)ifsl::select_probabilities(selector, torch::rand({1, 6})), ifsl::ValidationError);

        const auto batched = selector->forward(torch::stack({prototypes, prototypes}));
        EXPECT_TRUE(torch::allclose(batched[1], a, 1e-6, 1e-7));

        ifsl::EpisodeEncoder gate(12, 1);
        EXPECT_EQ(gate->forward(torch::rand({5, 12})).numel(), 1);
    }

    struct FeatureBench {
        ifsl::DatasetPtr dataset;
        ifsl::DatasetSplits splits;
        torch::Tensor features;
    };

    FeatureBench informative_bench(std::uint64_t seed)
    {
        FeatureBench bench;
        bench.dataset = ifsl::testing::tiny_dataset(40, 20, 6);
        ifsl::SplitSpec split;
        for (std::int64_t c = 0; c < 40; ++c) {
            (c < 24 ? split.base_classes : c < 32 ? split.validation_classes : split.novel_classes).push_back(c);
        }
        bench.splits = ifsl::split_dataset(bench.dataset, split);
        bench.features = ifsl::testing::informative_features(*bench.dataset, 6, {1, 2}, seed);
        return bench;
    }

    TEST(TrainSelector, SeededRunsReproduceTheValidationCurve)
    {
        const auto bench = informative_bench(3);
        ifsl::SelectorConfig config;
        config.episodes = 60;
        config.validate_every = 20;
        config.validation_episodes = 20;
        config.queries = 5;
        config.hidden_size = 16;
        const auto first = ifsl::train_selector(bench.features, bench.splits.base, bench.splits.validation, config, 5);
        const auto second = ifsl::train_selector(bench.features, bench.splits.base, bench.splits.validation, config, 5);
        ASSERT_EQ(first.curve.size(), 3U);
        for (std::size_t i = 0; i < first.curve.size(); ++i) {
            EXPECT_EQ(first.curve[i].accuracy, second.curve[i].accuracy);
            EXPECT_EQ(first.curve[i].selected, second.curve[i].selected);
        }
        EXPECT_EQ(first.hash(), second.hash());

        config.eta = -1.0;
        EXPECT_THROW((void)ifsl::train_selector(bench.features, bench.splits.base, bench.splits.validation, config, 5),
                     ifsl::ConfigError);
        EXPECT_THROW((void)ifsl::train_selector(bench.features.slice(1, 0, 5), bench.splits.base, bench.splits.validation, {}, 5),
                     ifsl::ConfigError);
    }

    TEST(TrainSelector, RanksInformativeAttributesHighest)
    {
        const auto bench = informative_bench(4);
        ifsl::SelectorConfig config;
        config.episodes = 3000;
        config.validate_every = 500;
        config.validation_episodes = 100;
        config.hidden_size = 32;
        config.learning_rate = 3e-3;
        config.temperature.halve_every = 500;
        auto trained = ifsl::train_selector(bench.features, bench.splits.base, bench.splits.validation, config, 8);

        const auto episodes = ifsl::sample_episodes(bench.splits.novel.pool(), config.shape(), 200, 99);
        int hits = 0;
        for (const auto& episode : episodes) {
            const auto tensors = ifsl::episode_tensors(bench.features, episode);
            const auto pi = ifsl::select_probabilities(trained.net, tensors.prototypes);
            const auto top = std::get<1>(pi.topk(2));
            const auto a = top[0].item<std::int64_t>();
            const auto b = top[1].item<std::int64_t>();
            hits += (std::min(a, b) == 1 && std::max(a, b) == 2) ? 1 : 0;
        }
        EXPECT_GE(hits, 180) << "informative pair ranked first in " << hits << "/200 episodes";
    }

}
