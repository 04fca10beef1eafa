#pragma once

#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include "reavae/inference.hpp"

namespace httplib {
class Server;
}

namespace reavae {

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

/// Thread-safe bounded map with least-recently-used eviction.
template <class V>
class LruCache {
public:
    explicit LruCache(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

    std::optional<V> get(const std::string& key)
    {
        std::lock_guard lock(mutex_);
        auto it = index_.find(key);
        if (it == index_.end()) return std::nullopt;
        order_.splice(order_.begin(), order_, it->second);
        return it->second->second;
    }

    void put(const std::string& key, V value)
    {
        std::lock_guard lock(mutex_);
        if (auto it = index_.find(key); it != index_.end()) {
            it->second->second = std::move(value);
            order_.splice(order_.begin(), order_, it->second);
            return;
        }
        order_.emplace_front(key, std::move(value));
        index_[key] = order_.begin();
        if (order_.size() > capacity_) {
            index_.erase(order_.back().first);
            order_.pop_back();
        }
    }

    std::size_t size() const
    {
        std::lock_guard lock(mutex_);
        return order_.size();
    }

private:
    std::size_t capacity_;
    mutable std::mutex mutex_;
    std::list<std::pair<std::string, V>> order_;
    std::unordered_map<std::string, typename std::list<std::pair<std::string, V>>::iterator> index_;
};

/// Uploaded layouts and encoded exemplars, keyed by the SHA-256 of their bytes.
struct SessionStore {
    explicit SessionStore(std::size_t capacity) : layouts(capacity), styles(capacity) {}
    LruCache<SegmentationMap> layouts;
    LruCache<StyleMatrix> styles;
};

struct ServiceOptions {
    int workers = 4;
    std::size_t max_body_bytes = 16u << 20;
    std::size_t store_capacity = 256;
    int max_interpolation_steps = 64;
};

/// HTTP/JSON front end over one InferenceEngine. PNG payloads travel as
/// base64 strings; every generation goes through the same engine calls and
/// PNG encoder as the CLI, so outputs match it byte for byte.
class Service {
public:
    explicit Service(std::shared_ptr<const InferenceEngine> engine, ServiceOptions options = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Swaps the served model (null: endpoints needing a model answer 503).
    void set_engine(std::shared_ptr<const InferenceEngine> engine);
    std::shared_ptr<const InferenceEngine> engine() const;

    /// Binds and serves until stop(). Port 0 picks a free port.
    bool listen(const std::string& host, int port);
    /// Binds to a free port and returns it; call listen_after_bind() to serve.
    int bind_any_port(const std::string& host);
    bool listen_after_bind();
    void stop();
    bool running() const;

    SessionStore& store() noexcept { return store_; }

private:
    void install_routes();

    ServiceOptions options_;
    SessionStore store_;
    mutable std::mutex engine_mutex_;
    std::shared_ptr<const InferenceEngine> engine_;
    std::unique_ptr<httplib::Server> server_;
};

/// The exact PNG the CLI writes for a texture: the SRN output when
/// `super_resolve` is set, the base texture otherwise.
std::vector<std::uint8_t> render_output_png(const InferenceEngine& engine, const TextureMap& tex, bool super_resolve);

/// Per-view renders of a texture through the standard synthetic views, as PNGs.
std::vector<std::pair<std::string, std::vector<std::uint8_t>>> render_view_pngs(const TextureMap& tex, int views = 4);

} // namespace reavae
