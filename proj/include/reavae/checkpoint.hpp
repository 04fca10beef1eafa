#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include "json.hpp"
#include "reavae/nn.hpp"

namespace reavae {

inline constexpr int checkpoint_format_version = 1;

struct NamedTensor {
    std::string name;
    Tensor<float> value;
};

/// Single-file tensor archive: magic, u64 manifest length, JSON manifest
/// (version, free-form meta, per-tensor name/shape/dtype/offset/bytes), then
/// the little-endian f32 blobs in manifest order.
struct Checkpoint {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<NamedTensor> tensors;

    const Tensor<float>* find(const std::string& name) const;
    const Tensor<float>& at(const std::string& name) const;
    void add(std::string name, Tensor<float> value);
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// SHA-256, hex encoded.
std::string content_hash(std::span<const std::uint8_t> bytes);
std::string file_hash(const std::filesystem::path& path);

/// Adds parameters and buffers under `prefix`.
void store_module(Checkpoint& ckpt, nn::Module<float>& module, const std::string& prefix);
/// Copies tensors back; throws on a missing tensor or a shape mismatch.
void restore_module(const Checkpoint& ckpt, nn::Module<float>& module, const std::string& prefix);

/// Digest of all parameters and buffers of a module (for freeze checks).
std::string module_hash(nn::Module<float>& module);

} // namespace reavae
