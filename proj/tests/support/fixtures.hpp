#ifndef IFSL_TESTS_SUPPORT_FIXTURES_HPP
#define IFSL_TESTS_SUPPORT_FIXTURES_HPP

#include <ifsl/data/dataset.hpp>

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace ifsl::testing {

    // Fresh directory under the system temp dir, removed on destruction.
    class TempDir {
    public:
        explicit TempDir(const std::string& tag)
        {
            std::random_device device;
            path_ = std::filesystem::temp_directory_path() / ("ifsl_" + tag + "_" + std::to_string(device()));
            std::filesystem::create_directories(path_);
        }
        ~TempDir() { std::error_code ignored; std::filesystem::remove_all(path_, ignored); }
        TempDir(const TempDir&) = delete;
        TempDir& operator=(const TempDir&) = delete;

        [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }

    private:
        std::filesystem::path path_;
    };

    // Dataset with `classes` classes of `per_class` flat grey images and per-class attributes.
    inline DatasetPtr tiny_dataset(std::int64_t classes, std::int64_t per_class, std::int64_t attributes = 4)
    {
        DatasetParts parts;
        const auto total = classes * per_class;
        parts.images = torch::full({total, kImageSize, kImageSize, 3}, 128, torch::kUInt8);
        parts.attributes = torch::zeros({classes, attributes}, torch::kUInt8);
        for (std::int64_t c = 0; c < classes; ++c) {
            parts.attributes[c][c % attributes] = 1;
            parts.attribute_row_ids.push_back(c);
            for (std::int64_t s = 0; s < per_class; ++s) {
                parts.labels.push_back(c);
            }
        }
        return AttributeDataset::create(std::move(parts));
    }


    // Feature table where only `informative` columns carry a per-class value (plus small
    // jitter); every other column is fresh uniform noise per image.
    inline torch::Tensor informative_features(const AttributeDataset& dataset, std::int64_t width,
                                              const std::vector<std::int64_t>& informative, std::uint64_t seed,
                                              double jitter = 0.02)
    {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::vector<std::vector<double>> class_values(static_cast<std::size_t>(dataset.num_classes()));
        for (auto& values : class_values) {
            for (std::size_t k = 0; k < informative.size(); ++k) {
                values.push_back(unit(rng));
            }
        }
        auto table = torch::empty({dataset.num_images(), width}, torch::kFloat);
        auto access = table.accessor<float, 2>();
        for (std::int64_t i = 0; i < dataset.num_images(); ++i) {
            const auto c = static_cast<std::size_t>(dataset.class_index(dataset.labels()[static_cast<std::size_t>(i)]));
            for (std::int64_t j = 0; j < width; ++j) {
                access[i][j] = static_cast<float>(unit(rng));
            }
            for (std::size_t k = 0; k < informative.size(); ++k) {
                const double value = class_values[c][k] + jitter * (2.0 * unit(rng) - 1.0);
                access[i][informative[k]] = static_cast<float>(std::clamp(value, 0.0, 1.0));
            }
        }
        return table;
    }

}

#endif // IFSL_TESTS_SUPPORT_FIXTURES_HPP
