#ifndef IFSL_SELECTOR_ENCODER_HPP
#define IFSL_SELECTOR_ENCODER_HPP

#include <torch/torch.h>

#include <cstdint>
#include <string>

#include "../error.hpp"

namespace ifsl {

    // Reads the N prototypes of an episode as a sequence with a one-layer BiLSTM,
    // concatenates the last forward and backward hidden states and maps them through a
    // sigmoid layer. g_h uses width A; the participation gate uses width 1.
    class EpisodeEncoderImpl : public torch::nn::Module {
    public:
        EpisodeEncoderImpl(std::int64_t input_width, std::int64_t output_width, std::int64_t hidden = 100)
            : input_width_(input_width)
        {
            if (input_width < 1 || output_width < 1 || hidden < 1) {
                throw ConfigError("episode encoder widths must be positive");
            }
            lstm_ = register_module(
                "lstm", torch::nn::LSTM(torch::nn::LSTMOptions(input_width, hidden).num_layers(1).bidirectional(true).batch_first(true)));
            head_ = register_module("head", torch::nn::Linear(2 * hidden, output_width));
        }

        // [N, D] -> [out]   or   [B, N, D] -> [B, out]
        torch::Tensor forward(const torch::Tensor& prototypes)
        {
            const bool single = prototypes.dim() == 2;
            if (!(single || prototypes.dim() == 3)) {
                throw ValidationError("selector input must be [N, D] or [B, N, D]");
            }
            if (prototypes.size(-1) != input_width_) {
                throw ValidationError("selector was built for width " + std::to_string(input_width_) + ", got " +
                                      std::to_string(prototypes.size(-1)));
            }
            if (prototypes.size(-2) < 2) {
                throw ValidationError("selector needs at least two prototypes");
            }
            const auto sequence = single ? prototypes.unsqueeze(0) : prototypes;
            const auto state = std::get<1>(lstm_->forward(sequence.to(torch::kFloat)));
            const auto& h_n = std::get<0>(state);  // [2, B, hidden]
            const auto last = torch::cat({h_n[0], h_n[1]}, 1);
            auto out = torch::sigmoid(head_->forward(last));
            return single ? out.squeeze(0) : out;
        }

        [[nodiscard]] std::int64_t input_width() const noexcept { return input_width_; }
        [[nodiscard]] std::int64_t output_width() const { return head_->options.out_features(); }
        [[nodiscard]] std::int64_t hidden_size() const { return lstm_->options.hidden_size(); }

    private:
        std::int64_t input_width_;
        torch::nn::LSTM lstm_{nullptr};
        torch::nn::Linear head_{nullptr};
    };
    TORCH_MODULE(EpisodeEncoder);

    // pi for one episode; no gradient.
    [[nodiscard]] inline torch::Tensor select_probabilities(EpisodeEncoder& selector, const torch::Tensor& prototypes)
    {
        torch::NoGradGuard no_grad;
        return selector->forward(prototypes);
    }

}

#endif // IFSL_SELECTOR_ENCODER_HPP
