#include "reavae/model.hpp"

namespace reavae {

namespace {

const char* const prefixes[] = {"encoder.", "heads.", "generator.", "discriminator."};

nlohmann::json architecture(const ModelConfig& cfg)
{
    nlohmann::json j = to_json(cfg);
    j.erase("init_seed");
    return j;
}

} // namespace

ReAVAEModel::ReAVAEModel(const ModelConfig& cfg)
    : cfg_((cfg.validate(), cfg)),
      init_rng_(derive_seed(cfg.init_seed, {seed_tag::init})),
      encoder(cfg_, init_rng_),
      heads(cfg_.num_classes, cfg_.style_dim, init_rng_),
      generator(cfg_, init_rng_),
      discriminator(cfg_, init_rng_)
{
}

std::vector<std::pair<std::string, nn::Var<float>*>> ReAVAEModel::generator_parameters()
{
    auto out = encoder.named_parameters(prefixes[0]);
    for (auto& p : heads.named_parameters(prefixes[1])) out.push_back(p);
    for (auto& p : generator.named_parameters(prefixes[2])) out.push_back(p);
    return out;
}

std::vector<std::pair<std::string, nn::Var<float>*>> ReAVAEModel::discriminator_parameters()
{
    return discriminator.named_parameters(prefixes[3]);
}

void ReAVAEModel::set_training(bool on)
{
    encoder.set_training(on);
    heads.set_training(on);
    generator.set_training(on);
    discriminator.set_training(on);
}

void ReAVAEModel::store(Checkpoint& ckpt)
{
    ckpt.meta["kind"] = model_checkpoint_kind;
    ckpt.meta["model"] = to_json(cfg_);
    store_module(ckpt, encoder, prefixes[0]);
    store_module(ckpt, heads, prefixes[1]);
    store_module(ckpt, generator, prefixes[2]);
    store_module(ckpt, discriminator, prefixes[3]);
}

void ReAVAEModel::restore(const Checkpoint& ckpt)
{
    if (ckpt.meta.value("kind", std::string()) != model_checkpoint_kind)
        throw std::runtime_error("checkpoint does not hold a ReAVAE model");
    if (!ckpt.meta.contains("model") ||
        architecture(model_config_from_json(ckpt.meta["model"])) != architecture(cfg_))
        throw std::runtime_error("checkpoint model config does not match");
    restore_module(ckpt, encoder, prefixes[0]);
    restore_module(ckpt, heads, prefixes[1]);
    restore_module(ckpt, generator, prefixes[2]);
    restore_module(ckpt, discriminator, prefixes[3]);
}

std::unique_ptr<ReAVAEModel> ReAVAEModel::from_checkpoint(const Checkpoint& ckpt)
{
    if (!ckpt.meta.contains("model")) throw std::runtime_error("checkpoint has no model config");
    auto model = std::make_unique<ReAVAEModel>(model_config_from_json(ckpt.meta["model"]));
    model->restore(ckpt);
    return model;
}

std::vector<std::string> ReAVAEModel::tensor_names()
{
    Checkpoint c;
    store(c);
    std::vector<std::string> names;
    for (const auto& t : c.tensors) names.push_back(t.name);
    return names;
}

} // namespace reavae
