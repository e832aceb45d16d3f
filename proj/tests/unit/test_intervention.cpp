#include <gtest/gtest.h>

#include <ifsl/intervention/intervention.hpp>

#include <numeric>

#include "support/fixtures.hpp"

namespace {

    ifsl::InterventionState two_class_state()
    {
        ifsl::InterventionState state;
        state.prototypes = torch::tensor({{0.8, 0.1, 0.9}, {0.6, 0.9, 0.2}, {0.1, 0.5, 0.5}}, torch::kDouble);
        state.queries = torch::tensor({{0.2, 0.3, 0.4}, {0.5, 0.5, 0.5}}, torch::kDouble);
        state.mask = torch::tensor({1.0, 1.0, 0.0}, torch::kDouble);
        state.human_width = 3;
        return state;
    }

    TEST(Intervene, MovesToTheMeanOfMatchingPrototypes)
    {
        auto state = two_class_state();
        const auto single = ifsl::intervene(state, 0, 0, {0});
        EXPECT_DOUBLE_EQ(single.value_before, 0.2);
        EXPECT_DOUBLE_EQ(state.queries[0][0].item<double>(), 0.8);

        auto other = two_class_state();
        const auto pair = ifsl::intervene(other, 0, 0, {0, 1});
        EXPECT_NEAR(pair.value_after, 0.7, 1e-15);
        EXPECT_NEAR(pair.probabilities_after.sum().item<double>(), 1.0, 1e-12);
    }

    TEST(Intervene, RejectsUnselectedAttributesBeforeTouchingState)
    {
        auto state = two_class_state();
        const auto queries = state.queries.clone();
        EXPECT_THROW((void)ifsl::intervene(state, 0, 2, {0}), ifsl::InterventionRejected);
        EXPECT_THROW((void)ifsl::intervene(state, 0, 0, {}), ifsl::InterventionRejected);
        EXPECT_THROW((void)ifsl::intervene(state, 5, 0, {0}), ifsl::InterventionRejected);
        EXPECT_THROW((void)ifsl::intervene(state, 0, 0, {7}), ifsl::InterventionRejected);
        EXPECT_TRUE(torch::equal(state.queries, queries));
    }

    TEST(Intervene, TouchesOneCoordinateAndIsIdempotent)
    {
        auto state = two_class_state();
        const auto prototypes = state.prototypes.clone();
        const auto queries = state.queries.clone();
        const auto first = ifsl::intervene(state, 1, 1, {1, 2});
        EXPECT_TRUE(torch::equal(state.prototypes, prototypes));
        EXPECT_TRUE(torch::equal(state.queries[0], queries[0]));
        const auto changed = state.queries[1].ne(queries[1]);
        EXPECT_EQ(changed.sum().item<int>(), 1);
        EXPECT_TRUE(changed[1].item<bool>());

        const auto snapshot = state.queries.clone();
        const auto second = ifsl::intervene(state, 1, 1, {1, 2});
        EXPECT_TRUE(torch::equal(state.queries, snapshot));
        EXPECT_TRUE(torch::equal(second.probabilities_after, first.probabilities_after));
    }

    TEST(Intervene, MixedSpaceOnlyEditsHumanFriendlyCoordinates)
    {
        ifsl::InterventionState state;
        state.prototypes = torch::rand({3, 6}, torch::kDouble);
        state.queries = torch::rand({4, 6}, torch::kDouble);
        state.mask = ifsl::mixed_mask(torch::ones({3}, torch::kDouble), 1.0, 3);
        state.human_width = 3;
        EXPECT_THROW((void)ifsl::intervene(state, 0, 4, {0}), ifsl::InterventionRejected);
        const auto unknown = state.queries.slice(1, 3).clone();
        (void)ifsl::intervene(state, 0, 1, {0, 2});
        EXPECT_TRUE(torch::equal(state.queries.slice(1, 3), unknown));
    }

    TEST(PrototypeTruth, RoundedSupportMean)
    {
        ifsl::DatasetParts parts;
        parts.images = torch::zeros({4, ifsl::kImageSize, ifsl::kImageSize, 3}, torch::kUInt8);
        parts.labels = {0, 0, 1, 1};
        parts.granularity = ifsl::Granularity::per_image;
        parts.attributes = torch::tensor({{1, 0}, {1, 1}, {0, 0}, {0, 1}}, torch::kUInt8);
        const auto dataset = ifsl::AttributeDataset::create(std::move(parts));
        ifsl::Episode episode;
        episode.way = 2;
        episode.shot = 2;
        episode.support = {0, 1, 2, 3};
        const auto truth = ifsl::prototype_truth(*dataset, episode);
        EXPECT_TRUE(torch::equal(truth, torch::tensor({{1, 1}, {0, 1}}, torch::kUInt8)));
        EXPECT_EQ(ifsl::matching_prototypes(truth, 0, 1), std::vector<std::int64_t>{0});
        EXPECT_EQ(ifsl::matching_prototypes(truth, 1, 1), (std::vector<std::int64_t>{0, 1}));
    }

    struct Bench {
        ifsl::DatasetPtr dataset;
        ifsl::DatasetView novel;
        torch::Tensor known;
    };

    // Predictions equal the per-class truth with heavy noise, so some queries are misclassified.
    Bench noisy_bench()
    {
        Bench bench;
        bench.dataset = ifsl::testing::tiny_dataset(12, 20, 6);
        std::vector<std::int64_t> ids(12);
        std::iota(ids.begin(), ids.end(), 0);
        bench.novel = ifsl::DatasetView(bench.dataset, ids);
        std::vector<std::int64_t> all(static_cast<std::size_t>(bench.dataset->num_images()));
        std::iota(all.begin(), all.end(), 0);
        torch::manual_seed(17);
        const auto truth = bench.dataset->image_attributes(all).to(torch::kFloat);
        bench.known = (truth + 0.45 * torch::randn_like(truth)).clamp(0.0, 1.0);
        return bench;
    }

    TEST(SimulateIntervention, RatioZeroIsTheIdentity)
    {
        const auto bench = noisy_bench();
        const auto episodes = ifsl::sample_episodes(bench.novel.pool(), {5, 1, 8}, 40, 3);
        const ifsl::SimulationInputs inputs{bench.dataset.get(), &bench.known, nullptr, nullptr};
        const auto report = ifsl::simulate_intervention(inputs, episodes, 0.0, ifsl::Space::human_friendly, 1);
        EXPECT_EQ(report.before.mean, report.after.mean);
        EXPECT_EQ(report.interventions, 0);
        EXPECT_EQ(report.gain.mean, 0.0);
        EXPECT_LT(report.before.mean, 100.0);
    }

    TEST(SimulateIntervention, OnlyMisclassifiedQueriesAreEditedAndGainsAreNonNegative)
    {
        const auto bench = noisy_bench();
        const auto episodes = ifsl::sample_episodes(bench.novel.pool(), {5, 1, 8}, 40, 4);
        ifsl::Rng rng(8);
        for (const auto& episode : episodes) {
            auto state = ifsl::intervention_state(bench.known, nullptr, nullptr, episode, ifsl::Space::human_friendly,
                                                  ifsl::Distance::squared_euclidean);
            const auto labels = episode.query_labels();
            const auto before = state.classify_all();
            const auto original = state.queries.clone();
            const auto outcomes = ifsl::intervene_misclassified(state, labels, before.predicted,
                                                                ifsl::prototype_truth(*bench.dataset, episode),
                                                                bench.dataset->image_attributes(episode.query), 0.34, rng);
            for (std::size_t q = 0; q < labels.size(); ++q) {
                if (before.predicted[q] == labels[q]) {
                    EXPECT_TRUE(torch::equal(state.queries[static_cast<std::int64_t>(q)], original[static_cast<std::int64_t>(q)]));
                }
            }
            for (const auto& outcome : outcomes) {
                EXPECT_NE(before.predicted[static_cast<std::size_t>(outcome.query)], labels[static_cast<std::size_t>(outcome.query)]);
            }
        }

        const ifsl::SimulationInputs inputs{bench.dataset.get(), &bench.known, nullptr, nullptr};
        const auto five = ifsl::simulate_intervention(inputs, episodes, 0.05, ifsl::Space::human_friendly, 2);
        const auto half = ifsl::simulate_intervention(inputs, episodes, 0.5, ifsl::Space::human_friendly, 2);
        EXPECT_GE(five.after.mean, five.before.mean);
        EXPECT_GE(half.after.mean, five.after.mean);
        EXPECT_GT(half.corrected, 0);
        EXPECT_THROW((void)ifsl::simulate_intervention(inputs, episodes, 1.5, ifsl::Space::human_friendly, 2), ifsl::ConfigError);
        EXPECT_THROW((void)ifsl::simulate_intervention(inputs, episodes, 0.1, ifsl::Space::mixed, 2), ifsl::ConfigError);
    }

    TEST(SimulateIntervention, MixedSpaceLeavesUnknownCoordinatesAlone)
    {
        const auto bench = noisy_bench();
        const auto unknown = torch::rand({bench.dataset->num_images(), 6});
        const auto episodes = ifsl::sample_episodes(bench.novel.pool(), {5, 1, 8}, 20, 5);
        ifsl::Rng rng(2);
        for (const auto& episode : episodes) {
            auto state = ifsl::intervention_state(bench.known, &unknown, nullptr, episode, ifsl::Space::mixed,
                                                  ifsl::Distance::squared_euclidean);
            const auto tail = state.queries.slice(1, 6).clone();
            (void)ifsl::intervene_misclassified(state, episode.query_labels(), state.classify_all().predicted,
                                                ifsl::prototype_truth(*bench.dataset, episode),
                                                bench.dataset->image_attributes(episode.query), 1.0, rng);
            EXPECT_TRUE(torch::equal(state.queries.slice(1, 6), tail));
        }
    }

}
