#ifndef IFSL_NN_STATE_HPP
#define IFSL_NN_STATE_HPP

#include <torch/torch.h>

#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ifsl {

    using ProgressFn = std::function<void(std::string_view)>;

    // Deep copy of a module's parameters and buffers, for best-epoch selection.
    class ModuleSnapshot {
    public:
        ModuleSnapshot() = default;

        explicit ModuleSnapshot(const torch::nn::Module& module)
        {
            torch::NoGradGuard no_grad;
            for (const auto& item : module.named_parameters(true)) {
                tensors_.emplace_back(item.key(), item.value().detach().clone());
            }
            for (const auto& item : module.named_buffers(true)) {
                tensors_.emplace_back(item.key(), item.value().detach().clone());
            }
        }

        [[nodiscard]] bool empty() const noexcept { return tensors_.empty(); }

        void restore(torch::nn::Module& module) const
        {
            torch::NoGradGuard no_grad;
            auto parameters = module.named_parameters(true);
            auto buffers = module.named_buffers(true);
            for (const auto& [name, value] : tensors_) {
                if (auto* found = parameters.find(name)) {
                    found->copy_(value);
                } else if (auto* buffer = buffers.find(name)) {
                    buffer->copy_(value);
                }
            }
        }

    private:
        std::vector<std::pair<std::string, torch::Tensor>> tensors_;
    };

    inline void freeze(torch::nn::Module& module)
    {
        module.eval();
        for (auto& parameter : module.parameters(true)) {
            parameter.set_requires_grad(false);
        }
    }

}

#endif // IFSL_NN_STATE_HPP
