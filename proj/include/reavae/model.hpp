#pragma once

#include "reavae/adversary.hpp"
#include "reavae/checkpoint.hpp"
#include "reavae/encoder.hpp"
#include "reavae/generator.hpp"
#include "reavae/vae.hpp"

namespace reavae {

/// Every trainable network of one model. Weights are initialised from a
/// single stream seeded by derive_seed(cfg.init_seed, {init}), in member order.
class ReAVAEModel {
public:
    explicit ReAVAEModel(const ModelConfig& cfg);
    ReAVAEModel(const ReAVAEModel&) = delete;
    ReAVAEModel& operator=(const ReAVAEModel&) = delete;

    const ModelConfig& config() const noexcept { return cfg_; }

    /// Encoder, heads and generator, under their checkpoint names.
    std::vector<std::pair<std::string, nn::Var<float>*>> generator_parameters();
    std::vector<std::pair<std::string, nn::Var<float>*>> discriminator_parameters();

    void set_training(bool on);

    /// Adds all parameters and buffers plus meta.kind / meta.model.
    void store(Checkpoint& ckpt);
    /// Throws if the checkpoint was written for a different model config.
    void restore(const Checkpoint& ckpt);
    static std::unique_ptr<ReAVAEModel> from_checkpoint(const Checkpoint& ckpt);

    /// Names of the tensors store() writes (parameters first, then buffers).
    std::vector<std::string> tensor_names();

private:
    ModelConfig cfg_;
    Rng init_rng_;

public:
    StyleEncoder<float> encoder;
    GaussianHeads<float> heads;
    Generator<float> generator;
    MultiScaleDiscriminator<float> discriminator;
};

inline constexpr const char* model_checkpoint_kind = "reavae";

} // namespace reavae
