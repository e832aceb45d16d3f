#ifndef IFSL_DATA_EPISODE_HPP
#define IFSL_DATA_EPISODE_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "../error.hpp"
#include "dataset.hpp"

namespace ifsl {

    using Rng = std::mt19937_64;

    // One N-way K-shot task. Support and query lists are class-major:
    // entries [c*K, (c+1)*K) of support belong to class_ids[c].
    struct Episode {
        std::vector<std::int64_t> class_ids;
        std::int64_t way{0};
        std::int64_t shot{0};
        std::int64_t queries{0};
        std::vector<std::int64_t> support;
        std::vector<std::int64_t> query;

        [[nodiscard]] std::vector<std::int64_t> support_labels() const { return local_labels(shot); }
        [[nodiscard]] std::vector<std::int64_t> query_labels() const { return local_labels(queries); }

    private:
        [[nodiscard]] std::vector<std::int64_t> local_labels(std::int64_t per_class) const
        {
            std::vector<std::int64_t> labels;
            labels.reserve(static_cast<std::size_t>(way * per_class));
            for (std::int64_t c = 0; c < way; ++c) {
                labels.insert(labels.end(), static_cast<std::size_t>(per_class), c);
            }
            return labels;
        }
    };

    struct EpisodeShape {
        std::int64_t way{5};
        std::int64_t shot{1};
        std::int64_t queries{16};
    };

    namespace detail {

        // First `count` entries of a Fisher-Yates shuffle of `items`.
        template <typename T>
        [[nodiscard]] std::vector<T> draw_without_replacement(std::vector<T> items, std::size_t count, Rng& rng)
        {
            for (std::size_t i = 0; i < count; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, items.size() - 1);
                std::swap(items[i], items[pick(rng)]);
            }
            items.resize(count);
            return items;
        }

    }

    // Uniform over classes, then uniform over each class's images, both without replacement.
    [[nodiscard]] inline Episode sample_episode(const ClassPool& pool, const EpisodeShape& shape, Rng& rng)
    {
        if (shape.way < 1 || shape.shot < 1 || shape.queries < 1) {
            throw SamplingError("N, K and Q must all be positive");
        }
        if (static_cast<std::int64_t>(pool.size()) < shape.way) {
            throw SamplingError("pool has " + std::to_string(pool.size()) + " classes, episode needs " +
                                std::to_string(shape.way));
        }
        std::vector<std::size_t> slots(pool.size());
        for (std::size_t i = 0; i < slots.size(); ++i) {
            slots[i] = i;
        }
        const auto chosen = detail::draw_without_replacement(std::move(slots), static_cast<std::size_t>(shape.way), rng);

        Episode episode;
        episode.way = shape.way;
        episode.shot = shape.shot;
        episode.queries = shape.queries;
        const auto per_class = static_cast<std::size_t>(shape.shot + shape.queries);
        std::vector<std::vector<std::int64_t>> drawn;
        drawn.reserve(chosen.size());
        for (const auto slot : chosen) {
            const auto& members = pool.members[slot];
            if (members.size() < per_class) {
                throw SamplingError("class " + std::to_string(pool.class_ids[slot]) + " has " +
                                    std::to_string(members.size()) + " images, episode needs K+Q=" +
                                    std::to_string(per_class));
            }
            episode.class_ids.push_back(pool.class_ids[slot]);
            drawn.push_back(detail::draw_without_replacement(members, per_class, rng));
        }
        for (const auto& images : drawn) {
            episode.support.insert(episode.support.end(), images.begin(), images.begin() + shape.shot);
        }
        for (const auto& images : drawn) {
            episode.query.insert(episode.query.end(), images.begin() + shape.shot, images.end());
        }
        return episode;
    }

    [[nodiscard]] inline Episode sample_episode(const DatasetView& view, const EpisodeShape& shape, Rng& rng)
    {
        return sample_episode(view.pool(), shape, rng);
    }

    // Fixed episode list; the same seed always yields the same list.
    [[nodiscard]] inline std::vector<Episode> sample_episodes(const ClassPool& pool, const EpisodeShape& shape,
                                                              std::int64_t count, std::uint64_t seed)
    {
        Rng rng(seed);
        std::vector<Episode> episodes;
        episodes.reserve(static_cast<std::size_t>(count));
        for (std::int64_t e = 0; e < count; ++e) {
            episodes.push_back(sample_episode(pool, shape, rng));
        }
        return episodes;
    }

    // Largest query count not above `preferred` that every class of the pool can supply.
    [[nodiscard]] inline std::int64_t fit_query_count(const ClassPool& pool, std::int64_t shot, std::int64_t preferred = 16,
                                                      std::int64_t fallback = 10)
    {
        std::size_t smallest = SIZE_MAX;
        for (const auto& members : pool.members) {
            smallest = std::min(smallest, members.size());
        }
        if (smallest >= static_cast<std::size_t>(shot + preferred)) {
            return preferred;
        }
        return fallback;
    }

}

#endif // IFSL_DATA_EPISODE_HPP
