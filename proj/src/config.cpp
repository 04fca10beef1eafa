#include "reavae/config.hpp"

#include <charconv>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace reavae {

namespace {

// Single list of every config key; INI, JSON and formatting all walk it.
template <class Cfg, class F>
void visit_model(Cfg& m, F&& f)
{
    f("model", "num_classes", m.num_classes);
    f("model", "style_dim", m.style_dim);
    f("model", "resolution", m.resolution);
    f("model", "encoder_base", m.encoder_base);
    f("model", "encoder_downs", m.encoder_downs);
    f("model", "encoder_ups", m.encoder_ups);
    f("model", "encoder_norm", m.encoder_norm);
    f("model", "gen_base_size", m.gen_base_size);
    f("model", "gen_channels", m.gen_channels);
    f("model", "gen_noise", m.gen_noise);
    f("model", "bn_momentum", m.bn_momentum);
    f("model", "bn_eps", m.bn_eps);
    f("model", "inference_batch_stats", m.inference_batch_stats);
    f("model", "disc_base", m.disc_base);
    f("model", "disc_scales", m.disc_scales);
    f("model", "feature_channels", m.feature_channels);
    f("model", "init_seed", m.init_seed);
}

template <class Cfg, class F>
void visit_all(Cfg& c, F&& f)
{
    visit_model(c.model, f);
    f("loss", "lambda_rec", c.loss.lambda_rec);
    f("loss", "lambda_ren", c.loss.lambda_ren);
    f("loss", "lambda_kld", c.loss.lambda_kld);
    f("loss", "lambda_adv", c.loss.lambda_adv);
    f("loss", "num_views", c.loss.num_views);
    f("loss", "kld_present_only", c.loss.kld_present_only);
    f("optim", "lr", c.optim.lr);
    f("optim", "beta1", c.optim.beta1);
    f("optim", "beta2", c.optim.beta2);
    f("optim", "batch_size", c.optim.batch_size);
    f("optim", "iterations", c.optim.iterations);
    f("optim", "checkpoint_every", c.optim.checkpoint_every);
    f("optim", "log_every", c.optim.log_every);
    f("optim", "seed", c.optim.seed);
    f("data", "dir", c.data.dir);
    f("data", "synthetic_samples", c.data.synthetic_samples);
    f("data", "synthetic_seed", c.data.synthetic_seed);
    f("data", "output_dir", c.data.output_dir);
    f("data", "srn_checkpoint", c.data.srn_checkpoint);
    f("data", "color_augment", c.data.color_augment);
}

std::string format_value(const std::vector<int>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(const std::string& v) { return v; }
std::string format_value(double v)
{
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}
template <class I>
std::string format_value(I v)
{
    return std::to_string(v);
}

void parse_value(const std::string& s, std::vector<int>& out)
{
    out.clear();
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
}
void parse_value(const std::string& s, bool& out)
{
    if (s == "true" || s == "1" || s == "yes") out = true;
    else if (s == "false" || s == "0" || s == "no") out = false;
    else throw std::invalid_argument("expected a boolean, got '" + s + "'");
}
void parse_value(const std::string& s, std::string& out) { out = s; }
void parse_value(const std::string& s, double& out) { out = std::stod(s); }
void parse_value(const std::string& s, int& out) { out = std::stoi(s); }
void parse_value(const std::string& s, std::uint64_t& out) { out = std::stoull(s); }

} // namespace

ModelConfig ModelConfig::desk()
{
    return ModelConfig{};
}

ModelConfig ModelConfig::full()
{
    ModelConfig m;
    m.num_classes = 20;
    m.style_dim = 512;
    m.resolution = 256;
    m.encoder_base = 32;
    m.encoder_downs = 4;
    m.encoder_ups = 3;
    m.gen_channels = {512, 512, 512, 256, 128, 64, 32};
    m.disc_base = 64;
    return m;
}

int ModelConfig::encoder_feature_size() const
{
    return resolution >> (encoder_downs - encoder_ups);
}

void ModelConfig::validate() const
{
    if (num_classes < 2) throw std::invalid_argument("model.num_classes must be at least 2");
    if (style_dim < 1) throw std::invalid_argument("model.style_dim must be positive");
    if (encoder_downs < encoder_ups || encoder_ups < 0)
        throw std::invalid_argument("model.encoder_ups must not exceed model.encoder_downs");
    if ((resolution >> encoder_downs) < 1 || (resolution % (1 << encoder_downs)) != 0)
        throw std::invalid_argument("model.resolution must be divisible by 2^encoder_downs");
    if (gen_channels.empty()) throw std::invalid_argument("model.gen_channels must not be empty");
    if (gen_base_size << (gen_channels.size() - 1) != resolution)
        throw std::invalid_argument("generator output (gen_base_size · 2^(blocks-1)) must equal model.resolution");
    if (disc_scales < 1) throw std::invalid_argument("model.disc_scales must be at least 1");
    if (feature_channels.empty()) throw std::invalid_argument("model.feature_channels must not be empty");
}

TrainConfig TrainConfig::desk()
{
    return TrainConfig{};
}

TrainConfig TrainConfig::full()
{
    TrainConfig c;
    c.model = ModelConfig::full();
    return c;
}

void TrainConfig::validate() const
{
    model.validate();
    if (loss.lambda_rec < 0 || loss.lambda_ren < 0 || loss.lambda_kld < 0 || loss.lambda_adv < 0)
        throw std::invalid_argument("loss weights must be nonnegative");
    if (loss.num_views < 1) throw std::invalid_argument("loss.num_views must be at least 1");
    if (optim.batch_size < 1) throw std::invalid_argument("optim.batch_size must be at least 1");
    if (optim.iterations < 0) throw std::invalid_argument("optim.iterations must be nonnegative");
    if (data.dir.empty() && data.synthetic_samples < 1)
        throw std::invalid_argument("data.synthetic_samples must be at least 1");
    if (!(data.color_augment >= 0 && data.color_augment <= 1))
        throw std::invalid_argument("data.color_augment must be in [0, 1]");
}

TrainConfig parse_train_config(const std::string& text, const TrainConfig& base)
{
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    boost::property_tree::ini_parser::read_ini(in, tree);

    TrainConfig cfg = base;
    std::map<std::string, std::set<std::string>> known;
    visit_all(cfg, [&](const char* section, const char* key, auto& field) {
        known[section].insert(key);
        if (auto v = tree.get_optional<std::string>(std::string(section) + "." + key)) {
            try {
                parse_value(*v, field);
            } catch (const std::exception& e) {
                throw std::invalid_argument(std::string("config [") + section + "] " + key + ": " + e.what());
            }
        }
    });
    for (const auto& [section, keys] : tree) {
        if (!known.count(section)) throw std::invalid_argument("config: unknown section [" + section + "]");
        for (const auto& [key, value] : keys)
            if (!known[section].count(key))
                throw std::invalid_argument("config: unknown key '" + key + "' in [" + section + "]");
    }
    cfg.validate();
    return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path, const TrainConfig& base)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_train_config(ss.str(), base);
}

std::string format_train_config(const TrainConfig& cfg)
{
    std::string out, current;
    TrainConfig copy = cfg;
    visit_all(copy, [&](const char* section, const char* key, auto& field) {
        if (current != section) {
            out += (current.empty() ? "[" : "\n[") + std::string(section) + "]\n";
            current = section;
        }
        out += std::string(key) + " = " + format_value(field) + "\n";
    });
    return out;
}

nlohmann::json to_json(const ModelConfig& m)
{
    nlohmann::json j;
    ModelConfig copy = m;
    visit_model(copy, [&](const char*, const char* key, auto& field) { j[key] = field; });
    return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j)
{
    ModelConfig m;
    visit_model(m, [&](const char*, const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    });
    m.validate();
    return m;
}

nlohmann::json to_json(const TrainConfig& c)
{
    nlohmann::json j;
    TrainConfig copy = c;
    visit_all(copy, [&](const char* section, const char* key, auto& field) { j[section][key] = field; });
    return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j)
{
    TrainConfig c;
    visit_all(c, [&](const char* section, const char* key, auto& field) {
        if (j.contains(section) && j.at(section).contains(key)) j.at(section).at(key).get_to(field);
    });
    c.validate();
    return c;
}

} // namespace reavae
