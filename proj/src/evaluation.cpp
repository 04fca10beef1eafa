#include "reavae/evaluation.hpp"

#include <algorithm>

#include <spdlog/fmt/fmt.h>

namespace reavae {

nlohmann::json to_json(const MetricsReport& r)
{
    nlohmann::json j;
    j["psnr"] = r.psnr ? nlohmann::json(*r.psnr) : nlohmann::json();
    j["ssim"] = r.ssim ? nlohmann::json(*r.ssim) : nlohmann::json();
    j["fid"] = r.fid;
    j["kid"] = r.kid;
    j["n_real"] = r.n_real;
    j["n_fake"] = r.n_fake;
    j["embedder"] = r.embedder;
    return j;
}

std::vector<TextureMap> load_texture_dir(const std::filesystem::path& dir)
{
    if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<TextureMap> out;
    for (const auto& f : files) out.push_back(load_texture(f));
    return out;
}

Eigen::MatrixXd embed_textures(const std::vector<TextureMap>& textures, const FeatureExtractor<float>& fx)
{
    Eigen::MatrixXd out(static_cast<Eigen::Index>(textures.size()), fx.embedding_dim());
    for (std::size_t i = 0; i < textures.size(); ++i) {
        const auto& t = textures[i];
        const Tensor<float> e = fx.embed(t.pixels.reshaped({1, 3, t.height(), t.width()}));
        for (int d = 0; d < fx.embedding_dim(); ++d) out(static_cast<Eigen::Index>(i), d) = e[d];
    }
    return out;
}

std::string embedder_name(const std::vector<int>& channels)
{
    std::string s = "random-conv-gap";
    for (int c : channels) s += "-" + std::to_string(c);
    return s + fmt::format("@{:#x}", feature_extractor_seed);
}

MetricsReport compare_texture_sets(const std::vector<TextureMap>& real, const std::vector<TextureMap>& fake,
                                   const std::vector<int>& channels)
{
    if (real.size() < 2 || fake.size() < 2) throw std::invalid_argument("each set needs at least two textures");
    MetricsReport r;
    r.n_real = static_cast<int>(real.size());
    r.n_fake = static_cast<int>(fake.size());
    r.embedder = embedder_name(channels);

    bool paired = real.size() == fake.size();
    for (std::size_t i = 0; paired && i < real.size(); ++i)
        paired = real[i].pixels.shape() == fake[i].pixels.shape();
    if (paired) {
        double p = 0, s = 0;
        for (std::size_t i = 0; i < real.size(); ++i) {
            p += psnr(real[i], fake[i]);
            s += ssim(real[i], fake[i]);
        }
        r.psnr = p / static_cast<double>(real.size());
        r.ssim = s / static_cast<double>(real.size());
    }

    const FeatureExtractor<float> fx(channels, feature_extractor_seed);
    const Eigen::MatrixXd er = embed_textures(real, fx), ef = embed_textures(fake, fx);
    r.fid = fid(er, ef);
    r.kid = kid(er, ef);
    return r;
}

} // namespace reavae
