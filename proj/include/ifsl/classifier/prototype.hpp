#ifndef IFSL_CLASSIFIER_PROTOTYPE_HPP
#define IFSL_CLASSIFIER_PROTOTYPE_HPP

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "../error.hpp"

namespace ifsl {

    enum class Distance { squared_euclidean, euclidean, cosine };

    [[nodiscard]] inline std::string to_string(Distance distance)
    {
        switch (distance) {
        case Distance::squared_euclidean: return "squared_euclidean";
        case Distance::euclidean: return "euclidean";
        case Distance::cosine: return "cosine";
        }
        return "unknown";
    }

    [[nodiscard]] inline Distance parse_distance(std::string_view name)
    {
        if (name == "squared_euclidean") {
            return Distance::squared_euclidean;
        }
        if (name == "euclidean") {
            return Distance::euclidean;
        }
        if (name == "cosine") {
            return Distance::cosine;
        }
        throw ConfigError("unknown distance '" + std::string(name) + "'");
    }

    NLOHMANN_JSON_SERIALIZE_ENUM(Distance, {{Distance::squared_euclidean, "squared_euclidean"},
                                            {Distance::euclidean, "euclidean"},
                                            {Distance::cosine, "cosine"}})

    inline constexpr double kLossEpsilon = 1e-12;

    // Mean of each class's support vectors. `support` is class-major [way * shot, D].
    [[nodiscard]] inline torch::Tensor compute_prototypes(const torch::Tensor& support, std::int64_t way)
    {
        if (way < 1 || !support.defined() || support.dim() != 2 || support.size(0) == 0 || support.size(0) % way != 0) {
            throw ValidationError("compute_prototypes: support must be [way * shot, D] with shot >= 1");
        }
        return support.view({way, support.size(0) / way, support.size(1)}).mean(1);
    }

    // One prototype per entry; classes may have different support sizes.
    [[nodiscard]] inline torch::Tensor compute_prototypes(const std::vector<torch::Tensor>& per_class)
    {
        if (per_class.empty()) {
            throw ValidationError("compute_prototypes: no classes given");
        }
        std::vector<torch::Tensor> means;
        means.reserve(per_class.size());
        const auto width = per_class.front().size(-1);
        for (std::size_t c = 0; c < per_class.size(); ++c) {
            const auto& vectors = per_class[c];
            if (!vectors.defined() || vectors.dim() != 2 || vectors.size(0) == 0) {
                throw ValidationError("compute_prototypes: class " + std::to_string(c) + " has no support vectors");
            }
            if (vectors.size(1) != width) {
                throw ValidationError("compute_prototypes: inconsistent dimensionality");
            }
            means.push_back(vectors.mean(0));
        }
        return torch::stack(means);
    }

    // [Q, N] distances between masked queries and masked prototypes.
    [[nodiscard]] inline torch::Tensor masked_distances(const torch::Tensor& queries, const torch::Tensor& prototypes,
                                                        const std::optional<torch::Tensor>& mask, Distance distance)
    {
        if (!prototypes.defined() || prototypes.dim() != 2 || prototypes.size(0) == 0) {
            throw ValidationError("classify: at least one prototype is required");
        }
        if (!queries.defined() || queries.dim() != 2 || queries.size(1) != prototypes.size(1)) {
            throw ValidationError("classify: query and prototype dimensionality differ");
        }
        auto q = queries;
        auto c = prototypes;
        if (mask.has_value()) {
            if (mask->dim() != 1 || mask->size(0) != prototypes.size(1)) {
                throw ValidationError("classify: mask length differs from dimensionality");
            }
            const auto weights = mask->to(queries.scalar_type());
            q = q * weights;
            c = c * weights;
        }
        torch::Tensor d;
        if (distance == Distance::cosine) {
            const auto qn = q.norm(2, 1, true).clamp_min(1e-12);
            const auto cn = c.norm(2, 1, true).clamp_min(1e-12);
            d = 1.0 - torch::matmul(q / qn, (c / cn).transpose(0, 1));
        } else {
            const auto diff = q.unsqueeze(1) - c.unsqueeze(0);
            d = diff.pow(2).sum(2);
            if (distance == Distance::euclidean) {
                d = d.clamp_min(1e-24).sqrt();
            }
        }
        if (d.isnan().any().item<bool>()) {
            throw NumericError("classify: NaN distance");
        }
        return d;
    }

    // Row-wise log p(y | x_q) under the distance softmax.
    [[nodiscard]] inline torch::Tensor class_log_probabilities(const torch::Tensor& queries, const torch::Tensor& prototypes,
                                                               const std::optional<torch::Tensor>& mask = std::nullopt,
                                                               Distance distance = Distance::squared_euclidean)
    {
        return torch::log_softmax(-masked_distances(queries, prototypes, mask, distance), 1);
    }

    struct EpisodeProbabilities {
        torch::Tensor probabilities;           // [Q, N]
        std::vector<std::int64_t> predicted;   // argmax per query, ties to the lowest class index
    };

    [[nodiscard]] inline std::vector<std::int64_t> argmax_rows(const torch::Tensor& probabilities)
    {
        const auto values = probabilities.detach().to(torch::kDouble).contiguous();
        auto access = values.accessor<double, 2>();
        std::vector<std::int64_t> out(static_cast<std::size_t>(values.size(0)), 0);
        for (std::int64_t q = 0; q < values.size(0); ++q) {
            double best = access[q][0];
            for (std::int64_t n = 1; n < values.size(1); ++n) {
                if (access[q][n] > best) {
                    best = access[q][n];
                    out[static_cast<std::size_t>(q)] = n;
                }
            }
        }
        return out;
    }

    [[nodiscard]] inline EpisodeProbabilities classify(const torch::Tensor& queries, const torch::Tensor& prototypes,
                                                       const std::optional<torch::Tensor>& mask = std::nullopt,
                                                       Distance distance = Distance::squared_euclidean)
    {
        EpisodeProbabilities out;
        out.probabilities = torch::softmax(-masked_distances(queries, prototypes, mask, distance), 1);
        out.predicted = argmax_rows(out.probabilities);
        return out;
    }

    // Summed negative log-likelihood of the true labels; probabilities clamped at 1e-12.
    [[nodiscard]] inline torch::Tensor episode_loss(const torch::Tensor& probabilities, std::span<const std::int64_t> labels)
    {
        if (!probabilities.defined() || probabilities.dim() != 2 || probabilities.size(0) != static_cast<std::int64_t>(labels.size())) {
            throw ValidationError("episode_loss: one label per query row is required");
        }
        for (const auto label : labels) {
            if (label < 0 || label >= probabilities.size(1)) {
                throw ValidationError("episode_loss: label " + std::to_string(label) + " is not a class of this episode");
            }
        }
        const auto index = torch::tensor(std::vector<std::int64_t>(labels.begin(), labels.end()), torch::kLong).unsqueeze(1);
        const auto picked = probabilities.gather(1, index).squeeze(1);
        return -picked.clamp_min(kLossEpsilon).log().sum();
    }

    [[nodiscard]] inline double episode_accuracy(const std::vector<std::int64_t>& predicted, std::span<const std::int64_t> labels)
    {
        if (predicted.size() != labels.size() || labels.empty()) {
            throw ValidationError("episode_accuracy: prediction/label count mismatch");
        }
        std::size_t hits = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            hits += predicted[i] == labels[i] ? 1 : 0;
        }
        return static_cast<double>(hits) / static_cast<double>(labels.size());
    }

}

#endif // IFSL_CLASSIFIER_PROTOTYPE_HPP
