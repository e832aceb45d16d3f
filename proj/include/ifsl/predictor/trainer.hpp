#ifndef IFSL_PREDICTOR_TRAINER_HPP
#define IFSL_PREDICTOR_TRAINER_HPP

#include <torch/torch.h>

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "../data/dataset.hpp"
#include "../data/episode.hpp"
#include "../data/preprocess.hpp"
#include "../error.hpp"
#include "../hashing.hpp"
#include "../nn_state.hpp"
#include "accuracy.hpp"
#include "loss.hpp"
#include "network.hpp"

namespace ifsl {

    struct PredictorCheckpoint {
        PredictorConfig config;
        AttributeNet net{nullptr};
        std::uint64_t seed{0};
        std::int64_t best_epoch{0};            // 1-based epoch of the kept weights
        AttributeAccuracy validation;          // at best_epoch
        std::vector<double> epoch_losses;      // mean per-sample training loss
        std::vector<double> epoch_validation;  // validation OV per epoch

        [[nodiscard]] std::string hash() const { return weights_hash(*net); }
    };

    [[nodiscard]] inline AttributeNet make_attribute_net(const PredictorConfig& config, std::int64_t outputs)
    {
        return AttributeNet(outputs, config.hidden_channels);
    }

    [[nodiscard]] inline AttributeAccuracy evaluate_attribute_accuracy(AttributeNet& net, const DatasetView& view)
    {
        const auto indices = view.image_indices();
        const auto& dataset = *view.dataset();
        const auto predicted = predict_attributes(net, dataset, indices);
        return attribute_accuracy(predicted, dataset.image_attributes(indices));
    }

    // Minimises the weighted BCE over base images and keeps the epoch with the best
    // validation overall attribute accuracy (earliest epoch wins ties).
    [[nodiscard]] inline PredictorCheckpoint train_attribute_predictor(const DatasetView& base, const DatasetView& validation,
                                                                       PredictorConfig config, std::uint64_t seed,
                                                                       const ProgressFn& progress = {})
    {
        if (base.empty() || validation.empty()) {
            throw ConfigError("attribute predictor training needs non-empty base and validation splits");
        }
        const auto& dataset = *base.dataset();
        if (config.num_attributes == 0) {
            config.num_attributes = dataset.num_attributes();
        }
        if (config.num_attributes != dataset.num_attributes()) {
            throw ConfigError("predictor config expects " + std::to_string(config.num_attributes) + " attributes, dataset has " +
                              std::to_string(dataset.num_attributes()));
        }
        if (config.epochs < 1 || config.batch_size < 1 || !(config.learning_rate > 0.0)) {
            throw ConfigError("predictor config needs positive epochs, batch size and learning rate");
        }

        torch::manual_seed(seed);
        Rng rng(seed);
        PredictorCheckpoint result;
        result.config = config;
        result.seed = seed;
        result.net = make_attribute_net(config, config.num_attributes);
        auto& net = result.net;
        torch::optim::Adam optimizer(net->parameters(), torch::optim::AdamOptions(config.learning_rate));
        Augmentation augment;
        augment.enabled = config.augment;

        auto order = base.image_indices();
        ModuleSnapshot best;
        double best_score = -1.0;
        for (std::int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
            net->train();
            std::shuffle(order.begin(), order.end(), rng);
            double loss_sum = 0.0;
            for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
                const auto count = std::min(order.size() - start, static_cast<std::size_t>(config.batch_size));
                const std::span<const std::int64_t> batch(order.data() + start, count);
                // BatchNorm needs more than one value per channel in training mode.
                if (count < 2) {
                    continue;
                }
                const auto inputs = prepare_batch(dataset, batch, &augment, &rng);
                const auto targets = dataset.image_attributes(batch);
                optimizer.zero_grad();
                const auto loss = weighted_bce(net->forward(inputs), targets);
                loss.backward();
                optimizer.step();
                loss_sum += loss.item<double>();
            }
            result.epoch_losses.push_back(loss_sum / static_cast<double>(order.size()));

            const auto accuracy = evaluate_attribute_accuracy(net, validation);
            result.epoch_validation.push_back(accuracy.overall.mean);
            if (accuracy.overall.mean > best_score) {
                best_score = accuracy.overall.mean;
                best = ModuleSnapshot(*net);
                result.best_epoch = epoch;
                result.validation = accuracy;
            }
            if (progress) {
                std::ostringstream line;
                line << "f_h epoch " << epoch << "/" << config.epochs << " loss " << result.epoch_losses.back()
                     << " val OV " << accuracy.overall.mean;
                progress(line.str());
            }
        }
        best.restore(*net);
        net->eval();
        return result;
    }

}

#endif // IFSL_PREDICTOR_TRAINER_HPP
