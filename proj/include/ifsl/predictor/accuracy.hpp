#ifndef IFSL_PREDICTOR_ACCURACY_HPP
#define IFSL_PREDICTOR_ACCURACY_HPP

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "../error.hpp"

namespace ifsl {

    struct MeanStd {
        double mean{0.0};
        double stddev{0.0};
    };

    inline void to_json(nlohmann::json& json, const MeanStd& value)
    {
        json = nlohmann::json{{"mean", value.mean}, {"std", value.stddev}};
    }

    inline void from_json(const nlohmann::json& json, MeanStd& value)
    {
        json.at("mean").get_to(value.mean);
        json.at("std").get_to(value.stddev);
    }

    // Absent (AB), present (PR) and overall (OV) attribute accuracy, in percent.
    struct AttributeAccuracy {
        MeanStd absent;
        MeanStd present;
        MeanStd overall;
    };

    inline void to_json(nlohmann::json& json, const AttributeAccuracy& value)
    {
        json = nlohmann::json{{"AB", value.absent}, {"PR", value.present}, {"OV", value.overall}};
    }

    inline void from_json(const nlohmann::json& json, AttributeAccuracy& value)
    {
        json.at("AB").get_to(value.absent);
        json.at("PR").get_to(value.present);
        json.at("OV").get_to(value.overall);
    }

    namespace detail {

        [[nodiscard]] inline MeanStd mean_std(const std::vector<double>& values)
        {
            if (values.empty()) {
                return {};
            }
            double sum = 0.0;
            for (const double v : values) {
                sum += v;
            }
            const double mean = sum / static_cast<double>(values.size());
            double squares = 0.0;
            for (const double v : values) {
                squares += (v - mean) * (v - mean);
            }
            return {mean, std::sqrt(squares / static_cast<double>(values.size()))};
        }

    }

    // Predictions are rounded at 0.5 (ties to 1). Samples without present (absent)
    // attributes do not enter the PR (AB) average.
    [[nodiscard]] inline AttributeAccuracy attribute_accuracy(const torch::Tensor& predicted, const torch::Tensor& truth)
    {
        if (!predicted.defined() || !truth.defined() || predicted.sizes() != truth.sizes() || predicted.dim() != 2) {
            throw ValidationError("attribute_accuracy: prediction and truth must both be [samples, attributes]");
        }
        const auto rounded = predicted.to(torch::kDouble).ge(0.5);
        const auto positive = truth.to(torch::kDouble).gt(0.5);
        const auto correct = rounded.eq(positive).to(torch::kDouble);
        const auto present = positive.to(torch::kDouble);
        const auto absent = 1.0 - present;
        const auto n_present = present.sum(1);
        const auto n_absent = absent.sum(1);
        const auto hit_present = (correct * present).sum(1);
        const auto hit_absent = (correct * absent).sum(1);
        const auto hit_all = correct.sum(1);
        const auto width = static_cast<double>(predicted.size(1));

        std::vector<double> ab;
        std::vector<double> pr;
        std::vector<double> ov;
        for (std::int64_t i = 0; i < predicted.size(0); ++i) {
            const double np = n_present[i].item<double>();
            const double na = n_absent[i].item<double>();
            if (np > 0) {
                pr.push_back(100.0 * hit_present[i].item<double>() / np);
            }
            if (na > 0) {
                ab.push_back(100.0 * hit_absent[i].item<double>() / na);
            }
            ov.push_back(100.0 * hit_all[i].item<double>() / width);
        }
        return AttributeAccuracy{detail::mean_std(ab), detail::mean_std(pr), detail::mean_std(ov)};
    }

}

#endif // IFSL_PREDICTOR_ACCURACY_HPP
