#ifndef IFSL_DATA_DATASET_HPP
#define IFSL_DATA_DATASET_HPP

#include <torch/torch.h>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "../error.hpp"

namespace ifsl {

    inline constexpr std::int64_t kImageSize = 84;

    enum class Granularity { per_image, per_class };

    [[nodiscard]] inline std::string to_string(Granularity granularity)
    {
        return granularity == Granularity::per_image ? "per-image" : "per-class";
    }

    // Rounds an annotation to {0, 1}; 0.5 goes to 1.
    [[nodiscard]] constexpr std::uint8_t binarize(double value) noexcept
    {
        return value >= 0.5 ? 1 : 0;
    }

    struct ChannelStats {
        std::array<float, 3> mean{0.5F, 0.5F, 0.5F};
        std::array<float, 3> stddev{0.25F, 0.25F, 0.25F};
    };

    // Everything needed to assemble a dataset; validated by AttributeDataset::create.
    struct DatasetParts {
        torch::Tensor images;                  // uint8 [M, 84, 84, 3], RGB
        std::vector<std::string> image_ids;
        std::vector<std::int64_t> labels;      // class id per image
        torch::Tensor attributes;              // uint8 [rows, A]
        Granularity granularity{Granularity::per_class};
        std::vector<std::int64_t> attribute_row_ids;  // class id per row (per-class granularity)
        std::vector<std::string> attribute_names;
        std::map<std::int64_t, std::string> class_names;
    };

    class AttributeDataset {
    public:
        [[nodiscard]] static std::shared_ptr<const AttributeDataset> create(DatasetParts parts)
        {
            auto dataset = std::shared_ptr<AttributeDataset>(new AttributeDataset());
            dataset->assemble(std::move(parts));
            return dataset;
        }

        [[nodiscard]] std::int64_t num_images() const noexcept { return static_cast<std::int64_t>(labels_.size()); }
        [[nodiscard]] std::int64_t num_attributes() const noexcept { return attributes_.size(1); }
        [[nodiscard]] std::int64_t num_classes() const noexcept { return static_cast<std::int64_t>(class_ids_.size()); }
        [[nodiscard]] Granularity granularity() const noexcept { return granularity_; }

        [[nodiscard]] const torch::Tensor& images() const noexcept { return images_; }
        [[nodiscard]] const std::vector<std::int64_t>& labels() const noexcept { return labels_; }
        [[nodiscard]] const std::vector<std::string>& image_ids() const noexcept { return image_ids_; }
        [[nodiscard]] const std::vector<std::int64_t>& class_ids() const noexcept { return class_ids_; }
        [[nodiscard]] const std::vector<std::string>& attribute_names() const noexcept { return attribute_names_; }
        [[nodiscard]] const ChannelStats& stats() const noexcept { return stats_; }
        // Raw annotation rows: one per image, or one per entry of class_ids().
        [[nodiscard]] const torch::Tensor& attribute_rows() const noexcept { return attributes_; }

        [[nodiscard]] bool has_class(std::int64_t class_id) const { return class_index_.contains(class_id); }

        [[nodiscard]] std::int64_t class_index(std::int64_t class_id) const
        {
            const auto found = class_index_.find(class_id);
            if (found == class_index_.end()) {
                throw ValidationError("unknown class id " + std::to_string(class_id));
            }
            return found->second;
        }

        [[nodiscard]] std::string class_name(std::int64_t class_id) const
        {
            return class_names_.at(static_cast<std::size_t>(class_index(class_id)));
        }

        // Binary attributes of one image; per-class rows are broadcast here.
        [[nodiscard]] torch::Tensor image_attributes(std::int64_t image) const
        {
            if (granularity_ == Granularity::per_image) {
                return attributes_[image];
            }
            return attributes_[class_index(labels_.at(static_cast<std::size_t>(image)))];
        }

        [[nodiscard]] torch::Tensor image_attributes(std::span<const std::int64_t> images) const
        {
            std::vector<std::int64_t> rows;
            rows.reserve(images.size());
            for (const auto image : images) {
                const auto position = static_cast<std::size_t>(image);
                if (granularity_ == Granularity::per_image) {
                    rows.push_back(image);
                } else {
                    rows.push_back(class_index(labels_.at(position)));
                }
            }
            if (rows.empty()) {
                return torch::zeros({0, num_attributes()}, torch::kUInt8);
            }
            return attributes_.index_select(0, torch::tensor(rows, torch::kLong));
        }

    private:
        AttributeDataset() = default;

        void assemble(DatasetParts parts)
        {
            images_ = std::move(parts.images);
            image_ids_ = std::move(parts.image_ids);
            labels_ = std::move(parts.labels);
            attributes_ = std::move(parts.attributes);
            granularity_ = parts.granularity;
            attribute_names_ = std::move(parts.attribute_names);

            if (!images_.defined() || images_.dim() != 4 || images_.size(3) != 3 || images_.scalar_type() != torch::kUInt8) {
                throw ValidationError("images must be a uint8 tensor of shape [M, H, W, 3]");
            }
            if (images_.size(0) != num_images()) {
                throw ValidationError("image count " + std::to_string(images_.size(0)) + " does not match label count " +
                                      std::to_string(labels_.size()));
            }
            if (image_ids_.empty()) {
                for (std::int64_t i = 0; i < num_images(); ++i) {
                    image_ids_.push_back(std::to_string(i));
                }
            }
            if (static_cast<std::int64_t>(image_ids_.size()) != num_images()) {
                throw ValidationError("image id count does not match label count");
            }
            if (!attributes_.defined() || attributes_.dim() != 2 || attributes_.size(1) < 1) {
                throw ValidationError("attribute matrix must have at least one column");
            }
            attributes_ = attributes_.to(torch::kUInt8).contiguous();
            if (attributes_.gt(1).any().item<bool>()) {
                throw ValidationError("attribute entries must be binary after loading");
            }
            if (attribute_names_.empty()) {
                for (std::int64_t j = 0; j < num_attributes(); ++j) {
                    attribute_names_.push_back("a_" + std::to_string(j + 1));
                }
            }
            if (static_cast<std::int64_t>(attribute_names_.size()) != num_attributes()) {
                throw ValidationError("attribute name count does not match attribute columns");
            }

            std::set<std::int64_t> classes(labels_.begin(), labels_.end());
            class_ids_.assign(classes.begin(), classes.end());
            for (std::size_t i = 0; i < class_ids_.size(); ++i) {
                class_index_.emplace(class_ids_[i], static_cast<std::int64_t>(i));
                const auto named = parts.class_names.find(class_ids_[i]);
                class_names_.push_back(named != parts.class_names.end() ? named->second
                                                                         : "class_" + std::to_string(class_ids_[i]));
            }

            if (granularity_ == Granularity::per_image) {
                if (attributes_.size(0) != num_images()) {
                    throw ValidationError("per-image attribute rows (" + std::to_string(attributes_.size(0)) +
                                          ") do not match image count (" + std::to_string(num_images()) + ")");
                }
            } else {
                if (static_cast<std::int64_t>(parts.attribute_row_ids.size()) != attributes_.size(0)) {
                    throw ValidationError("per-class attribute rows need one class id each");
                }
                std::vector<std::int64_t> source_row(class_ids_.size(), -1);
                for (std::size_t row = 0; row < parts.attribute_row_ids.size(); ++row) {
                    const auto found = class_index_.find(parts.attribute_row_ids[row]);
                    if (found != class_index_.end()) {
                        source_row[static_cast<std::size_t>(found->second)] = static_cast<std::int64_t>(row);
                    }
                }
                for (std::size_t i = 0; i < class_ids_.size(); ++i) {
                    if (source_row[i] < 0) {
                        throw ValidationError("no attribute row for class " + std::to_string(class_ids_[i]));
                    }
                }
                // Rows are re-ordered to follow class_ids(); row i belongs to class_ids()[i].
                attributes_ = attributes_.index_select(0, torch::tensor(source_row, torch::kLong)).contiguous();
            }
            compute_stats();
        }

        void compute_stats()
        {
            if (num_images() == 0) {
                return;
            }
            const auto pixels = images_.reshape({-1, 3}).to(torch::kDouble).div_(255.0);
            const auto mean = pixels.mean(0);
            const auto stddev = pixels.std(0, false).clamp_min(1e-3);
            for (int c = 0; c < 3; ++c) {
                stats_.mean[static_cast<std::size_t>(c)] = static_cast<float>(mean[c].item<double>());
                stats_.stddev[static_cast<std::size_t>(c)] = static_cast<float>(stddev[c].item<double>());
            }
        }

        torch::Tensor images_;
        std::vector<std::string> image_ids_;
        std::vector<std::int64_t> labels_;
        std::vector<std::int64_t> class_ids_;
        std::vector<std::string> class_names_;
        std::unordered_map<std::int64_t, std::int64_t> class_index_;
        torch::Tensor attributes_;
        Granularity granularity_{Granularity::per_class};
        std::vector<std::string> attribute_names_;
        ChannelStats stats_{};
    };

    using DatasetPtr = std::shared_ptr<const AttributeDataset>;

    // Class ids plus the member indices of each class; all that episode sampling needs.
    struct ClassPool {
        std::vector<std::int64_t> class_ids;
        std::vector<std::vector<std::int64_t>> members;

        [[nodiscard]] std::size_t size() const noexcept { return class_ids.size(); }

        [[nodiscard]] std::vector<std::int64_t> all_members() const
        {
            std::vector<std::int64_t> out;
            for (const auto& group : members) {
                out.insert(out.end(), group.begin(), group.end());
            }
            std::sort(out.begin(), out.end());
            return out;
        }
    };

    // Immutable subset of a dataset restricted to some classes.
    class DatasetView {
    public:
        DatasetView() = default;

        DatasetView(DatasetPtr dataset, std::vector<std::int64_t> class_ids) : dataset_(std::move(dataset))
        {
            if (!dataset_) {
                throw ValidationError("dataset view needs a dataset");
            }
            std::unordered_map<std::int64_t, std::size_t> slot;
            for (const auto id : class_ids) {
                if (!dataset_->has_class(id)) {
                    throw ConfigError("split references unknown class id " + std::to_string(id));
                }
                slot.emplace(id, pool_.class_ids.size());
                pool_.class_ids.push_back(id);
            }
            pool_.members.resize(pool_.class_ids.size());
            const auto& labels = dataset_->labels();
            for (std::size_t i = 0; i < labels.size(); ++i) {
                const auto found = slot.find(labels[i]);
                if (found != slot.end()) {
                    pool_.members[found->second].push_back(static_cast<std::int64_t>(i));
                }
            }
        }

        [[nodiscard]] const DatasetPtr& dataset() const noexcept { return dataset_; }
        [[nodiscard]] const ClassPool& pool() const noexcept { return pool_; }
        [[nodiscard]] const std::vector<std::int64_t>& class_ids() const noexcept { return pool_.class_ids; }
        [[nodiscard]] std::vector<std::int64_t> image_indices() const { return pool_.all_members(); }
        [[nodiscard]] bool empty() const noexcept { return pool_.size() == 0 || pool_.all_members().empty(); }

    private:
        DatasetPtr dataset_;
        ClassPool pool_;
    };

    struct SplitSpec {
        std::vector<std::int64_t> base_classes;
        std::vector<std::int64_t> validation_classes;
        std::vector<std::int64_t> novel_classes;
    };

    inline void to_json(nlohmann::json& json, const SplitSpec& spec)
    {
        json = nlohmann::json{{"base", spec.base_classes}, {"val", spec.validation_classes}, {"novel", spec.novel_classes}};
    }

    inline void from_json(const nlohmann::json& json, SplitSpec& spec)
    {
        json.at("base").get_to(spec.base_classes);
        json.at("val").get_to(spec.validation_classes);
        json.at("novel").get_to(spec.novel_classes);
    }

    struct DatasetSplits {
        DatasetView base;
        DatasetView validation;
        DatasetView novel;
    };

    inline void validate_split(const SplitSpec& spec)
    {
        const std::array<std::pair<const char*, const std::vector<std::int64_t>*>, 3> parts{{
            {"base", &spec.base_classes}, {"val", &spec.validation_classes}, {"novel", &spec.novel_classes}}};
        std::map<std::int64_t, const char*> owner;
        for (const auto& [name, ids] : parts) {
            if (ids->empty()) {
                throw ConfigError(std::string("split '") + name + "' is empty");
            }
            for (const auto id : *ids) {
                const auto [it, inserted] = owner.emplace(id, name);
                if (!inserted) {
                    throw ConfigError("class " + std::to_string(id) + " appears in both '" + it->second + "' and '" + name + "'");
                }
            }
        }
    }

    [[nodiscard]] inline DatasetSplits split_dataset(const DatasetPtr& dataset, const SplitSpec& spec)
    {
        validate_split(spec);
        return DatasetSplits{DatasetView(dataset, spec.base_classes), DatasetView(dataset, spec.validation_classes),
                             DatasetView(dataset, spec.novel_classes)};
    }

    namespace detail {

        [[nodiscard]] inline std::vector<std::string> split_csv_line(std::string_view line)
        {
            std::vector<std::string> out;
            std::size_t start = 0;
            while (true) {
                const auto comma = line.find(',', start);
                auto token = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
                while (!token.empty() && (token.back() == '\r' || token.back() == ' ')) {
                    token.remove_suffix(1);
                }
                while (!token.empty() && token.front() == ' ') {
                    token.remove_prefix(1);
                }
                out.emplace_back(token);
                if (comma == std::string_view::npos) {
                    break;
                }
                start = comma + 1;
            }
            return out;
        }

        [[nodiscard]] inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path)
        {
            std::ifstream in(path);
            if (!in) {
                throw IngestionError("cannot open " + path.string());
            }
            std::vector<std::vector<std::string>> rows;
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty() || line == "\r") {
                    continue;
                }
                rows.push_back(split_csv_line(line));
            }
            if (rows.empty()) {
                throw IngestionError(path.string() + " is empty");
            }
            return rows;
        }

        template <typename T>
        [[nodiscard]] T parse_number(const std::string& text, const std::string& where)
        {
            T value{};
            const auto* end = text.data() + text.size();
            const auto [ptr, ec] = std::from_chars(text.data(), end, value);
            if (ec != std::errc{} || ptr != end) {
                throw ValidationError("cannot parse '" + text + "' at " + where);
            }
            return value;
        }

        [[nodiscard]] inline torch::Tensor read_image(const std::filesystem::path& path)
        {
            cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
            if (bgr.empty()) {
                throw IngestionError("cannot decode image " + path.string());
            }
            if (bgr.rows != kImageSize || bgr.cols != kImageSize) {
                cv::resize(bgr, bgr, cv::Size(static_cast<int>(kImageSize), static_cast<int>(kImageSize)), 0, 0,
                           cv::INTER_AREA);
            }
            cv::Mat rgb;
            cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
            return torch::from_blob(rgb.data, {kImageSize, kImageSize, 3}, torch::kUInt8).clone();
        }

    }

    enum class DatasetFormat { csv_directory };

    [[nodiscard]] inline DatasetFormat parse_dataset_format(std::string_view id)
    {
        if (id == "csv-dir" || id == "auto") {
            return DatasetFormat::csv_directory;
        }
        throw ConfigError("unknown dataset format '" + std::string(id) + "' (expected csv-dir)");
    }

    // Reads the directory layout: images/, labels.csv, attributes.csv, optional classes.csv.
    [[nodiscard]] inline DatasetPtr load_dataset(const std::filesystem::path& root,
                                                 DatasetFormat format = DatasetFormat::csv_directory)
    {
        namespace fs = std::filesystem;
        (void)format;
        if (!fs::is_directory(root)) {
            throw IngestionError("dataset directory " + root.string() + " does not exist");
        }
        const auto labels_path = root / "labels.csv";
        const auto attributes_path = root / "attributes.csv";
        const auto images_dir = root / "images";
        for (const auto& required : {labels_path, attributes_path}) {
            if (!fs::exists(required)) {
                throw IngestionError("missing file " + required.string());
            }
        }
        if (!fs::is_directory(images_dir)) {
            throw IngestionError("missing directory " + images_dir.string());
        }

        DatasetParts parts;
        const auto label_rows = detail::read_csv(labels_path);
        std::unordered_map<std::string, std::int64_t> image_row;
        for (std::size_t r = 1; r < label_rows.size(); ++r) {
            const auto& row = label_rows[r];
            if (row.size() < 2) {
                throw ValidationError("labels.csv row " + std::to_string(r + 1) + " needs image_id,class_id");
            }
            image_row.emplace(row[0], static_cast<std::int64_t>(parts.image_ids.size()));
            parts.image_ids.push_back(row[0]);
            parts.labels.push_back(detail::parse_number<std::int64_t>(row[1], "labels.csv row " + std::to_string(r + 1)));
        }

        std::unordered_map<std::string, fs::path> files;
        std::size_t file_count = 0;
        for (const auto& entry : fs::directory_iterator(images_dir)) {
            if (entry.is_regular_file()) {
                files.emplace(entry.path().filename().string(), entry.path());
                files.emplace(entry.path().stem().string(), entry.path());
                ++file_count;
            }
        }
        if (file_count != parts.image_ids.size()) {
            throw ValidationError("images/ holds " + std::to_string(file_count) + " files but labels.csv lists " +
                                  std::to_string(parts.image_ids.size()) + " images");
        }
        std::vector<torch::Tensor> images;
        images.reserve(parts.image_ids.size());
        for (const auto& id : parts.image_ids) {
            const auto found = files.find(id);
            if (found == files.end()) {
                throw ValidationError("no image file for image id '" + id + "'");
            }
            images.push_back(detail::read_image(found->second));
        }
        parts.images = images.empty() ? torch::zeros({0, kImageSize, kImageSize, 3}, torch::kUInt8) : torch::stack(images);

        const auto attribute_rows = detail::read_csv(attributes_path);
        const auto& header = attribute_rows.front();
        if (header.size() < 2) {
            throw ValidationError("attributes.csv needs a key column and at least one attribute");
        }
        if (header[0] == "class_id") {
            parts.granularity = Granularity::per_class;
        } else if (header[0] == "image_id") {
            parts.granularity = Granularity::per_image;
        } else {
            throw ValidationError("attributes.csv first column must be class_id or image_id, got '" + header[0] + "'");
        }
        parts.attribute_names.assign(header.begin() + 1, header.end());
        const auto width = static_cast<std::int64_t>(parts.attribute_names.size());
        const auto row_count = static_cast<std::int64_t>(attribute_rows.size() - 1);
        auto matrix = torch::zeros({row_count, width}, torch::kUInt8);
        auto access = matrix.accessor<std::uint8_t, 2>();
        std::vector<std::int64_t> per_image_order(static_cast<std::size_t>(row_count), -1);
        for (std::int64_t r = 0; r < row_count; ++r) {
            const auto& row = attribute_rows[static_cast<std::size_t>(r + 1)];
            const auto line = "attributes.csv row " + std::to_string(r + 2);
            if (static_cast<std::int64_t>(row.size()) != width + 1) {
                throw ValidationError(line + " has " + std::to_string(row.size() - 1) + " values, expected " +
                                      std::to_string(width));
            }
            if (parts.granularity == Granularity::per_class) {
                parts.attribute_row_ids.push_back(detail::parse_number<std::int64_t>(row[0], line));
            } else {
                const auto found = image_row.find(row[0]);
                if (found == image_row.end()) {
                    throw ValidationError(line + " references unknown image id '" + row[0] + "'");
                }
                per_image_order[static_cast<std::size_t>(r)] = found->second;
            }
            for (std::int64_t j = 0; j < width; ++j) {
                const auto where = line + ", column " + std::to_string(j + 2);
                const auto value = detail::parse_number<double>(row[static_cast<std::size_t>(j + 1)], where);
                if (!(value >= 0.0 && value <= 1.0)) {
                    throw ValidationError("attribute value " + row[static_cast<std::size_t>(j + 1)] + " outside [0,1] at " + where);
                }
                access[r][j] = binarize(value);
            }
        }
        if (parts.granularity == Granularity::per_image) {
            if (row_count != static_cast<std::int64_t>(parts.image_ids.size())) {
                throw ValidationError("attributes.csv has " + std::to_string(row_count) + " image rows but labels.csv lists " +
                                      std::to_string(parts.image_ids.size()) + " images");
            }
            auto ordered = torch::zeros_like(matrix);
            for (std::int64_t r = 0; r < row_count; ++r) {
                ordered[per_image_order[static_cast<std::size_t>(r)]] = matrix[r];
            }
            matrix = ordered;
        }
        parts.attributes = matrix;

        const auto classes_path = root / "classes.csv";
        if (fs::exists(classes_path)) {
            const auto rows = detail::read_csv(classes_path);
            for (std::size_t r = 1; r < rows.size(); ++r) {
                if (rows[r].size() >= 2) {
                    parts.class_names.emplace(detail::parse_number<std::int64_t>(rows[r][0], "classes.csv"), rows[r][1]);
                }
            }
        }
        return AttributeDataset::create(std::move(parts));
    }

    [[nodiscard]] inline SplitSpec load_split(const std::filesystem::path& path)
    {
        std::ifstream in(path);
        if (!in) {
            throw IngestionError("missing file " + path.string());
        }
        SplitSpec spec = nlohmann::json::parse(in).get<SplitSpec>();
        validate_split(spec);
        return spec;
    }

    // Writes the same layout load_dataset reads.
    inline void save_dataset(const AttributeDataset& dataset, const std::filesystem::path& root, const SplitSpec* split = nullptr)
    {
        namespace fs = std::filesystem;
        fs::create_directories(root / "images");
        {
            std::ofstream labels(root / "labels.csv");
            labels << "image_id,class_id\n";
            for (std::int64_t i = 0; i < dataset.num_images(); ++i) {
                labels << dataset.image_ids()[static_cast<std::size_t>(i)] << ',' << dataset.labels()[static_cast<std::size_t>(i)] << '\n';
            }
        }
        const auto images = dataset.images().contiguous();
        for (std::int64_t i = 0; i < dataset.num_images(); ++i) {
            auto pixels = images[i].contiguous();
            cv::Mat rgb(static_cast<int>(pixels.size(0)), static_cast<int>(pixels.size(1)), CV_8UC3, pixels.data_ptr<std::uint8_t>());
            cv::Mat bgr;
            cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
            const auto file = root / "images" / (dataset.image_ids()[static_cast<std::size_t>(i)] + ".png");
            if (!cv::imwrite(file.string(), bgr)) {
                throw IngestionError("cannot write " + file.string());
            }
        }
        {
            std::ofstream attributes(root / "attributes.csv");
            const bool per_class = dataset.granularity() == Granularity::per_class;
            attributes << (per_class ? "class_id" : "image_id");
            for (const auto& name : dataset.attribute_names()) {
                attributes << ',' << name;
            }
            attributes << '\n';
            const auto rows = dataset.attribute_rows();
            auto access = rows.accessor<std::uint8_t, 2>();
            for (std::int64_t r = 0; r < rows.size(0); ++r) {
                attributes << (per_class ? std::to_string(dataset.class_ids()[static_cast<std::size_t>(r)])
                                         : dataset.image_ids()[static_cast<std::size_t>(r)]);
                for (std::int64_t j = 0; j < rows.size(1); ++j) {
                    attributes << ',' << static_cast<int>(access[r][j]);
                }
                attributes << '\n';
            }
        }
        {
            std::ofstream classes(root / "classes.csv");
            classes << "class_id,name\n";
            for (const auto id : dataset.class_ids()) {
                classes << id << ',' << dataset.class_name(id) << '\n';
            }
        }
        if (split != nullptr) {
            std::ofstream splits(root / "splits.json");
            splits << nlohmann::json(*split).dump(2) << '\n';
        }
    }

}

#endif // IFSL_DATA_DATASET_HPP
