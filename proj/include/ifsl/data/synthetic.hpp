#ifndef IFSL_DATA_SYNTHETIC_HPP
#define IFSL_DATA_SYNTHETIC_HPP

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "../error.hpp"
#include "dataset.hpp"
#include "episode.hpp"

namespace ifsl {

    // Canvas geometry: attribute j owns cell j of a 6x6 grid of 14 px cells and
    // draws a 10 px patch inset by 2 px when present.
    namespace canvas {
        inline constexpr std::int64_t grid = 6;
        inline constexpr std::int64_t cell = kImageSize / grid;
        inline constexpr std::int64_t inset = 2;
        inline constexpr std::int64_t patch = cell - 2 * inset;
        inline constexpr std::int64_t capacity = grid * grid;
        inline constexpr float background = 0.5F;

        struct Rect {
            std::int64_t top;
            std::int64_t left;
            std::int64_t size;
        };

        [[nodiscard]] constexpr Rect slot(std::int64_t attribute) noexcept
        {
            return Rect{(attribute / grid) * cell + inset, (attribute % grid) * cell + inset, patch};
        }
    }

    struct SyntheticSpec {
        std::int64_t num_classes{30};
        std::int64_t num_attributes{8};
        std::int64_t samples_per_class{40};
        double noise_level{0.1};
        std::uint64_t seed{7};
        // Split sizes; novel gets the remaining classes. Zero picks 2/3 : 1/6 : rest.
        std::int64_t base_classes{0};
        std::int64_t validation_classes{0};
        // How many rendered attributes are annotated. Zero annotates all of them.
        std::int64_t annotated_attributes{0};
    };

    NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SyntheticSpec, num_classes, num_attributes, samples_per_class, noise_level,
                                                    seed, base_classes, validation_classes, annotated_attributes)

    struct SyntheticDataset {
        DatasetPtr dataset;
        SplitSpec split;
        torch::Tensor rendered_attributes;            // uint8 [classes, num_attributes]: everything drawn
        std::vector<std::int64_t> annotated;           // rendered attribute index of each dataset column
    };

    namespace detail {

        [[nodiscard]] inline std::array<float, 3> hsv_to_rgb(double hue, double saturation, double value)
        {
            const double h = std::fmod(hue, 1.0) * 6.0;
            const int sector = static_cast<int>(std::floor(h)) % 6;
            const double f = h - std::floor(h);
            const double p = value * (1.0 - saturation);
            const double q = value * (1.0 - saturation * f);
            const double t = value * (1.0 - saturation * (1.0 - f));
            std::array<double, 3> rgb{};
            switch (sector) {
            case 0: rgb = {value, t, p}; break;
            case 1: rgb = {q, value, p}; break;
            case 2: rgb = {p, value, t}; break;
            case 3: rgb = {p, q, value}; break;
            case 4: rgb = {t, p, value}; break;
            default: rgb = {value, p, q}; break;
            }
            return {static_cast<float>(rgb[0]), static_cast<float>(rgb[1]), static_cast<float>(rgb[2])};
        }

        inline constexpr std::array<const char*, 3> kPatternNames{"solid", "stripes", "checker"};

        [[nodiscard]] inline std::array<float, 3> patch_color(std::int64_t attribute)
        {
            // Golden-ratio hue spacing keeps neighbouring attributes visually apart.
            const double hue = std::fmod(static_cast<double>(attribute) * 0.6180339887498949, 1.0);
            const double value = attribute % 2 == 0 ? 0.95 : 0.8;
            return hsv_to_rgb(hue, 0.9, value);
        }

        // Noise-free image, float [H, W, 3] in [0, 1].
        [[nodiscard]] inline torch::Tensor render_clean(const std::uint8_t* present, std::int64_t count)
        {
            auto image = torch::full({kImageSize, kImageSize, 3}, canvas::background, torch::kFloat);
            auto pixels = image.accessor<float, 3>();
            for (std::int64_t j = 0; j < count; ++j) {
                if (present[j] == 0) {
                    continue;
                }
                const auto rect = canvas::slot(j);
                const auto color = patch_color(j);
                const auto pattern = j % 3;
                for (std::int64_t y = 0; y < rect.size; ++y) {
                    for (std::int64_t x = 0; x < rect.size; ++x) {
                        bool dark = false;
                        if (pattern == 1) {
                            dark = (y / 2) % 2 == 1;
                        } else if (pattern == 2) {
                            dark = ((y / 2) + (x / 2)) % 2 == 1;
                        }
                        for (std::int64_t c = 0; c < 3; ++c) {
                            const float value = color[static_cast<std::size_t>(c)];
                            pixels[rect.top + y][rect.left + x][c] = dark ? 0.15F * value : value;
                        }
                    }
                }
            }
            return image;
        }

    }

    // Largest attribute count the canvas can draw.
    [[nodiscard]] constexpr std::int64_t synthetic_capacity() noexcept
    {
        return canvas::capacity;
    }

    // Noise-free rendering of one attribute vector as uint8 [H, W, 3].
    [[nodiscard]] inline torch::Tensor render_attributes(const torch::Tensor& attributes)
    {
        const auto binary = attributes.to(torch::kUInt8).contiguous();
        if (binary.dim() != 1 || binary.size(0) > canvas::capacity) {
            throw ConfigError("render_attributes expects at most " + std::to_string(canvas::capacity) + " attributes");
        }
        return detail::render_clean(binary.data_ptr<std::uint8_t>(), binary.size(0)).mul(255.0).round().to(torch::kUInt8);
    }

    [[nodiscard]] inline SyntheticDataset generate_synthetic(const SyntheticSpec& spec)
    {
        if (spec.num_attributes < 1 || spec.num_attributes > canvas::capacity) {
            throw ConfigError("synthetic spec asks for " + std::to_string(spec.num_attributes) +
                              " attributes; the 84x84 canvas holds at most " + std::to_string(canvas::capacity));
        }
        if (spec.num_classes < 3 || spec.samples_per_class < 1) {
            throw ConfigError("synthetic spec needs at least 3 classes and 1 sample per class");
        }
        if (!(spec.noise_level >= 0.0 && spec.noise_level <= 1.0)) {
            throw ConfigError("noise_level must lie in [0, 1]");
        }
        const auto base = spec.base_classes > 0 ? spec.base_classes : (2 * spec.num_classes) / 3;
        const auto validation = spec.validation_classes > 0 ? spec.validation_classes : std::max<std::int64_t>(1, spec.num_classes / 6);
        if (base + validation >= spec.num_classes) {
            throw ConfigError("split sizes leave no novel classes");
        }
        const auto annotated_count = spec.annotated_attributes > 0 ? spec.annotated_attributes : spec.num_attributes;
        if (annotated_count > spec.num_attributes) {
            throw ConfigError("cannot annotate more attributes than are rendered");
        }

        Rng rng(spec.seed);
        const auto attribute_count = spec.num_attributes;
        auto class_attributes = torch::zeros({spec.num_classes, attribute_count}, torch::kUInt8);
        {
            // Distinct vectors while the space allows it; each draw is a fair coin per attribute.
            const bool distinct = attribute_count >= 62 || (std::int64_t{1} << attribute_count) >= spec.num_classes;
            std::set<std::vector<std::uint8_t>> seen;
            std::bernoulli_distribution coin(0.5);
            auto access = class_attributes.accessor<std::uint8_t, 2>();
            for (std::int64_t c = 0; c < spec.num_classes; ++c) {
                std::vector<std::uint8_t> row(static_cast<std::size_t>(attribute_count));
                do {
                    for (auto& bit : row) {
                        bit = coin(rng) ? 1 : 0;
                    }
                } while (distinct && !seen.insert(row).second);
                for (std::int64_t j = 0; j < attribute_count; ++j) {
                    access[c][j] = row[static_cast<std::size_t>(j)];
                }
            }
        }

        std::vector<std::int64_t> annotated(static_cast<std::size_t>(attribute_count));
        for (std::int64_t j = 0; j < attribute_count; ++j) {
            annotated[static_cast<std::size_t>(j)] = j;
        }
        if (annotated_count < attribute_count) {
            annotated = detail::draw_without_replacement(std::move(annotated), static_cast<std::size_t>(annotated_count), rng);
            std::sort(annotated.begin(), annotated.end());
        }

        const auto total = spec.num_classes * spec.samples_per_class;
        auto images = torch::empty({total, kImageSize, kImageSize, 3}, torch::kUInt8);
        DatasetParts parts;
        parts.granularity = Granularity::per_class;
        std::uniform_real_distribution<float> noise(-1.0F, 1.0F);
        const auto magnitude = static_cast<float>(spec.noise_level);
        for (std::int64_t c = 0; c < spec.num_classes; ++c) {
            const auto row = class_attributes[c].contiguous();
            const auto clean = detail::render_clean(row.data_ptr<std::uint8_t>(), attribute_count);
            for (std::int64_t s = 0; s < spec.samples_per_class; ++s) {
                const auto index = c * spec.samples_per_class + s;
                auto image = clean.clone();
                if (magnitude > 0.0F) {
                    auto* data = image.data_ptr<float>();
                    for (std::int64_t p = 0; p < image.numel(); ++p) {
                        data[p] += magnitude * noise(rng);
                    }
                }
                images[index] = image.clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8);
                char id[32];
                std::snprintf(id, sizeof(id), "img_%05lld", static_cast<long long>(index));
                parts.image_ids.emplace_back(id);
                parts.labels.push_back(c);
            }
            parts.attribute_row_ids.push_back(c);
            parts.class_names.emplace(c, "class_" + std::to_string(c));
        }
        parts.images = images;
        parts.attributes = class_attributes.index_select(1, torch::tensor(annotated, torch::kLong)).contiguous();
        for (const auto j : annotated) {
            parts.attribute_names.push_back("patch_" + std::to_string(j) + "_" + detail::kPatternNames[static_cast<std::size_t>(j % 3)]);
        }

        SyntheticDataset out;
        out.dataset = AttributeDataset::create(std::move(parts));
        out.rendered_attributes = class_attributes;
        out.annotated = annotated;
        for (std::int64_t c = 0; c < spec.num_classes; ++c) {
            auto& target = c < base ? out.split.base_classes
                           : c < base + validation ? out.split.validation_classes
                                                   : out.split.novel_classes;
            target.push_back(c);
        }
        return out;
    }

}

#endif // IFSL_DATA_SYNTHETIC_HPP
