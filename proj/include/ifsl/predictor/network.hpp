#ifndef IFSL_PREDICTOR_NETWORK_HPP
#define IFSL_PREDICTOR_NETWORK_HPP

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "../data/dataset.hpp"
#include "../data/preprocess.hpp"
#include "../error.hpp"

namespace ifsl {

    struct PredictorConfig {
        std::int64_t num_attributes{0};
        // Width of the first three conv blocks; the last block has num_attributes channels.
        std::int64_t hidden_channels{64};
        double learning_rate{1e-3};
        std::int64_t epochs{100};
        std::int64_t batch_size{128};
        bool augment{true};
    };

    NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PredictorConfig, num_attributes, hidden_channels, learning_rate, epochs,
                                                    batch_size, augment)

    // Conv-4 backbone (conv 3x3, batch norm, ReLU, 2x2 max pool) whose last block has one
    // channel per output, then global average pooling and a linear layer with tanh mapped to [0, 1].
    class AttributeNetImpl : public torch::nn::Module {
    public:
        AttributeNetImpl(std::int64_t outputs, std::int64_t hidden_channels) : outputs_(outputs)
        {
            if (outputs < 1 || hidden_channels < 1) {
                throw ConfigError("attribute network needs positive output and channel counts");
            }
            const std::int64_t widths[] = {hidden_channels, hidden_channels, hidden_channels, outputs};
            std::int64_t in = 3;
            for (const auto out : widths) {
                features_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1)));
                features_->push_back(torch::nn::BatchNorm2d(out));
                features_->push_back(torch::nn::ReLU());
                features_->push_back(torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2)));
                in = out;
            }
            register_module("features", features_);
            head_ = register_module("head", torch::nn::Linear(outputs, outputs));
            // Identity start: output j initially reads only final channel j, so each channel is
            // pushed toward detecting its own attribute instead of class-level combinations.
            torch::NoGradGuard no_grad;
            head_->weight.copy_(torch::eye(outputs));
            head_->bias.fill_(-1.0);
        }

        torch::Tensor forward(const torch::Tensor& images)
        {
            if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != kImageSize || images.size(3) != kImageSize) {
                throw ValidationError("attribute network expects [B, 3, 84, 84] input");
            }
            auto x = features_->forward(images);
            x = x.mean({2, 3});
            return (torch::tanh(head_->forward(x)) + 1.0) * 0.5;
        }

        [[nodiscard]] std::int64_t outputs() const noexcept { return outputs_; }

        // Channel count of the last conv block; equals outputs() by construction.
        [[nodiscard]] std::int64_t final_channels() const
        {
            const auto& last = features_->ptr(features_->size() - 4)->as<torch::nn::Conv2d>();
            return last->options.out_channels();
        }

    private:
        std::int64_t outputs_;
        torch::nn::Sequential features_;
        torch::nn::Linear head_{nullptr};
    };

    TORCH_MODULE(AttributeNet);

    // Evaluation-mode outputs for dataset images, batch by batch; [n, outputs].
    [[nodiscard]] inline torch::Tensor predict_attributes(AttributeNet& net, const AttributeDataset& dataset,
                                                          std::span<const std::int64_t> indices, std::int64_t batch_size = 256)
    {
        torch::NoGradGuard no_grad;
        const bool was_training = net->is_training();
        net->eval();
        std::vector<torch::Tensor> chunks;
        for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch_size)) {
            const auto count = std::min(indices.size() - start, static_cast<std::size_t>(batch_size));
            chunks.push_back(net->forward(prepare_batch(dataset, indices.subspan(start, count))));
        }
        net->train(was_training);
        if (chunks.empty()) {
            return torch::zeros({0, net->outputs()});
        }
        return torch::cat(chunks);
    }

    // Outputs for every image of the dataset, row i = image i.
    [[nodiscard]] inline torch::Tensor predict_all(AttributeNet& net, const AttributeDataset& dataset)
    {
        std::vector<std::int64_t> all(static_cast<std::size_t>(dataset.num_images()));
        for (std::size_t i = 0; i < all.size(); ++i) {
            all[i] = static_cast<std::int64_t>(i);
        }
        return predict_attributes(net, dataset, all);
    }


    // [num_images, outputs] table with rows filled for the view's images and zeros elsewhere.
    [[nodiscard]] inline torch::Tensor predict_view(AttributeNet& net, const DatasetView& view)
    {
        const auto& dataset = *view.dataset();
        auto table = torch::zeros({dataset.num_images(), net->outputs()});
        const auto indices = view.image_indices();
        if (!indices.empty()) {
            table.index_copy_(0, torch::tensor(indices, torch::kLong), predict_attributes(net, dataset, indices));
        }
        return table;
    }

}

#endif // IFSL_PREDICTOR_NETWORK_HPP
