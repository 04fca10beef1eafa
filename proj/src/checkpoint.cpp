#include "reavae/checkpoint.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <iomanip>
#include <sstream>

#include "reavae/core_data.hpp"

namespace reavae {

namespace {

constexpr char ckpt_magic[8] = {'R', 'E', 'A', 'V', 'A', 'E', 'C', 'K'};

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new())
    {
        if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw std::runtime_error("SHA-256 init failed");
    }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }
    std::string hex()
    {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx_, md, &len);
        std::ostringstream os;
        for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
        return os.str();
    }

private:
    EVP_MD_CTX* ctx_;
};

} // namespace

const Tensor<float>* Checkpoint::find(const std::string& name) const
{
    for (const auto& t : tensors)
        if (t.name == name) return &t.value;
    return nullptr;
}

const Tensor<float>& Checkpoint::at(const std::string& name) const
{
    if (const auto* t = find(name)) return *t;
    throw std::runtime_error("checkpoint has no tensor '" + name + "'");
}

void Checkpoint::add(std::string name, Tensor<float> value)
{
    if (find(name)) throw std::invalid_argument("duplicate checkpoint tensor '" + name + "'");
    tensors.push_back({std::move(name), std::move(value)});
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt)
{
    nlohmann::json entries = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& t : ckpt.tensors) {
        const std::uint64_t bytes = t.value.size() * sizeof(float);
        entries.push_back({{"name", t.name}, {"shape", t.value.shape()}, {"dtype", "f32"}, {"offset", offset},
                           {"bytes", bytes}});
        offset += bytes;
    }
    const std::string manifest = nlohmann::json{{"format", "reavae-checkpoint"},
                                                {"version", checkpoint_format_version},
                                                {"meta", ckpt.meta},
                                                {"tensors", entries}}
                                     .dump();
    std::vector<std::uint8_t> out(ckpt_magic, ckpt_magic + 8);
    out.resize(16 + manifest.size() + offset);
    const std::uint64_t len = manifest.size();
    std::memcpy(out.data() + 8, &len, 8);
    std::memcpy(out.data() + 16, manifest.data(), manifest.size());
    std::uint8_t* blob = out.data() + 16 + manifest.size();
    for (const auto& t : ckpt.tensors) {
        std::memcpy(blob, t.value.data(), t.value.size() * sizeof(float));
        blob += t.value.size() * sizeof(float);
    }
    return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 16 || std::memcmp(bytes.data(), ckpt_magic, 8) != 0)
        throw std::runtime_error("not a checkpoint file");
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 8, 8);
    if (len > bytes.size() - 16) throw std::runtime_error("checkpoint manifest truncated");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(len));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("checkpoint manifest is not valid JSON: ") + e.what());
    }
    const int version = manifest.value("version", -1);
    if (version != checkpoint_format_version)
        throw std::runtime_error("checkpoint version mismatch: file has " + std::to_string(version) + ", expected " +
                                 std::to_string(checkpoint_format_version));

    Checkpoint ckpt;
    ckpt.meta = manifest.value("meta", nlohmann::json::object());
    const std::span<const std::uint8_t> blob = bytes.subspan(16 + len);
    std::uint64_t expected = 0;
    for (const auto& e : manifest.at("tensors")) {
        if (e.value("dtype", "") != "f32") throw std::runtime_error("unsupported dtype in checkpoint");
        const Shape shape = e.at("shape").get<Shape>();
        const std::uint64_t offset = e.at("offset").get<std::uint64_t>();
        const std::uint64_t nbytes = e.at("bytes").get<std::uint64_t>();
        Tensor<float> t(shape);
        if (nbytes != t.size() * sizeof(float) || offset != expected || offset + nbytes > blob.size())
            throw std::runtime_error("blob length mismatch for tensor '" + e.at("name").get<std::string>() + "'");
        std::memcpy(t.data(), blob.data() + offset, nbytes);
        expected += nbytes;
        ckpt.tensors.push_back({e.at("name").get<std::string>(), std::move(t)});
    }
    if (expected != blob.size()) throw std::runtime_error("blob length mismatch: trailing or missing bytes");
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt)
{
    // Write then rename so a crash never leaves a half-written checkpoint.
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    write_file(tmp, encode_checkpoint(ckpt));
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    return decode_checkpoint(read_file(path));
}

std::string content_hash(std::span<const std::uint8_t> bytes)
{
    Sha256 f;
    f.update(bytes.data(), bytes.size());
    return f.hex();
}

std::string file_hash(const std::filesystem::path& path)
{
    return content_hash(read_file(path));
}

void store_module(Checkpoint& ckpt, nn::Module<float>& module, const std::string& prefix)
{
    for (auto& [name, p] : module.named_parameters(prefix)) ckpt.add(name, p->value());
    for (auto& [name, b] : module.named_buffers(prefix)) ckpt.add(name, *b);
}

namespace {

void restore_into(const Checkpoint& ckpt, const std::string& name, Tensor<float>& dst)
{
    const Tensor<float>* src = ckpt.find(name);
    if (!src) throw std::runtime_error("checkpoint is missing tensor '" + name + "'");
    if (src->shape() != dst.shape())
        throw std::runtime_error("shape mismatch for '" + name + "': checkpoint " + to_string(src->shape()) +
                                 ", model " + to_string(dst.shape()));
    dst = *src;
}

} // namespace

void restore_module(const Checkpoint& ckpt, nn::Module<float>& module, const std::string& prefix)
{
    for (auto& [name, p] : module.named_parameters(prefix)) restore_into(ckpt, name, p->mutable_value());
    for (auto& [name, b] : module.named_buffers(prefix)) restore_into(ckpt, name, *b);
}

std::string module_hash(nn::Module<float>& module)
{
    Sha256 f;
    auto feed = [&](const std::string& name, const Tensor<float>& t) {
        f.update(name.data(), name.size());
        f.update(t.data(), t.size() * sizeof(float));
    };
    for (auto& [name, p] : module.named_parameters()) feed(name, p->value());
    for (auto& [name, b] : module.named_buffers()) feed(name, *b);
    return f.hex();
}

} // namespace reavae
