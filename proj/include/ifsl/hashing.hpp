#ifndef IFSL_HASHING_HPP
#define IFSL_HASHING_HPP

#include <torch/torch.h>

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "error.hpp"

namespace ifsl {

    // Incremental SHA-256; used for config hashes and weight fingerprints.
    class Sha256 {
    public:
        Sha256() : context_(EVP_MD_CTX_new(), &EVP_MD_CTX_free)
        {
            if (!context_ || EVP_DigestInit_ex(context_.get(), EVP_sha256(), nullptr) != 1) {
                throw Error("sha256: digest initialisation failed");
            }
        }

        Sha256& update(std::span<const std::byte> bytes)
        {
            if (!bytes.empty() && EVP_DigestUpdate(context_.get(), bytes.data(), bytes.size()) != 1) {
                throw Error("sha256: digest update failed");
            }
            return *this;
        }

        Sha256& update(std::string_view text)
        {
            return update(std::as_bytes(std::span(text.data(), text.size())));
        }

        [[nodiscard]] std::string hex()
        {
            std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
            unsigned int length = 0;
            if (EVP_DigestFinal_ex(context_.get(), digest.data(), &length) != 1) {
                throw Error("sha256: digest finalisation failed");
            }
            static constexpr char digits[] = "0123456789abcdef";
            std::string out;
            out.reserve(length * 2);
            for (unsigned int i = 0; i < length; ++i) {
                out.push_back(digits[digest[i] >> 4]);
                out.push_back(digits[digest[i] & 0x0f]);
            }
            return out;
        }

    private:
        std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> context_;
    };

    [[nodiscard]] inline std::string sha256_hex(std::string_view text)
    {
        return Sha256{}.update(text).hex();
    }

    // Fingerprint of every named parameter and buffer of a module, in registration order.
    [[nodiscard]] inline std::string weights_hash(const torch::nn::Module& module)
    {
        Sha256 digest;
        const auto feed = [&digest](const std::string& name, const torch::Tensor& tensor) {
            digest.update(name);
            const auto contiguous = tensor.detach().to(torch::kCPU).contiguous();
            digest.update(std::string_view(contiguous.toString()));
            const auto* data = static_cast<const std::byte*>(contiguous.data_ptr());
            digest.update(std::span(data, contiguous.nbytes()));
        };
        for (const auto& item : module.named_parameters(true)) {
            feed(item.key(), item.value());
        }
        for (const auto& item : module.named_buffers(true)) {
            feed(item.key(), item.value());
        }
        return digest.hex();
    }

    [[nodiscard]] inline std::string base64_encode(std::span<const unsigned char> bytes)
    {
        std::string out(4 * ((bytes.size() + 2) / 3), '\0');
        const int written = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                            bytes.data(), static_cast<int>(bytes.size()));
        out.resize(static_cast<std::size_t>(written));
        return out;
    }

}

#endif // IFSL_HASHING_HPP
