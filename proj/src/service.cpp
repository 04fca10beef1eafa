#include "reavae/service.hpp"

#include <openssl/evp.h>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "httplib.h"
#include "reavae/checkpoint.hpp"
#include "reavae/renderer.hpp"

namespace reavae {

using json = nlohmann::json;

std::string base64_encode(std::span<const std::uint8_t> bytes)
{
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text)
{
    std::string clean;
    clean.reserve(text.size());
    for (char ch : text)
        if (!std::isspace(static_cast<unsigned char>(ch))) clean.push_back(ch);
    if (clean.size() % 4 != 0) throw std::invalid_argument("invalid base64 payload");
    std::vector<std::uint8_t> out(3 * clean.size() / 4);
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()),
                                  static_cast<int>(clean.size()));
    if (n < 0) throw std::invalid_argument("invalid base64 payload");
    std::size_t pad = 0;
    if (!clean.empty() && clean.back() == '=') ++pad;
    if (clean.size() > 1 && clean[clean.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

std::vector<std::uint8_t> render_output_png(const InferenceEngine& engine, const TextureMap& tex, bool super_resolve)
{
    return texture_to_png(super_resolve ? engine.super_resolve(tex) : tex);
}

std::vector<std::pair<std::string, std::vector<std::uint8_t>>> render_view_pngs(const TextureMap& tex, int views)
{
    ag::NoGradGuard guard;
    const ag::Var<float> t(tex.pixels.reshaped({1, 3, tex.height(), tex.width()}));
    std::vector<std::pair<std::string, std::vector<std::uint8_t>>> out;
    for (const auto& view : synthetic_views(tex.height(), views)) {
        Tensor<float> px = render_view(t, view).value().reshaped({3, view.height, view.width});
        for (auto& v : px.values()) v = std::clamp(v, 0.f, 1.f);
        out.emplace_back(view.name, texture_to_png(TextureMap(std::move(px))));
    }
    return out;
}

namespace {

/// An error with an HTTP status.
struct HttpError : std::runtime_error {
    int status;
    HttpError(int s, const std::string& what) : std::runtime_error(what), status(s) {}
};

void send_json(httplib::Response& res, const json& body, int status = 200)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req)
{
    try {
        return json::parse(req.body);
    } catch (const json::exception& e) {
        throw HttpError(400, std::string("malformed JSON: ") + e.what());
    }
}

std::string hash_of(const std::string& bytes)
{
    return content_hash({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()});
}

std::span<const std::uint8_t> as_bytes(const std::string& s)
{
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

template <class T>
T field(const json& j, const char* key)
{
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw HttpError(400, fmt::format("field '{}' is missing or has the wrong type", key));
    }
}

} // namespace

Service::Service(std::shared_ptr<const InferenceEngine> engine, ServiceOptions options)
    : options_(options), store_(options.store_capacity), engine_(std::move(engine)),
      server_(std::make_unique<httplib::Server>())
{
    const int workers = std::max(1, options_.workers);
    server_->new_task_queue = [workers] { return new httplib::ThreadPool(static_cast<std::size_t>(workers)); };
    server_->set_payload_max_length(options_.max_body_bytes);
    install_routes();
}

Service::~Service()
{
    stop();
}

void Service::set_engine(std::shared_ptr<const InferenceEngine> engine)
{
    std::lock_guard lock(engine_mutex_);
    engine_ = std::move(engine);
}

std::shared_ptr<const InferenceEngine> Service::engine() const
{
    std::lock_guard lock(engine_mutex_);
    return engine_;
}

bool Service::listen(const std::string& host, int port)
{
    return server_->listen(host, port);
}

int Service::bind_any_port(const std::string& host)
{
    return server_->bind_to_any_port(host);
}

bool Service::listen_after_bind()
{
    return server_->listen_after_bind();
}

void Service::stop()
{
    if (server_) server_->stop();
}

bool Service::running() const
{
    return server_->is_running();
}

void Service::install_routes()
{
    auto& svr = *server_;

    auto need_engine = [this] {
        auto e = engine();
        if (!e) throw HttpError(503, "no model loaded");
        return e;
    };

    // Wraps a handler so that failures become JSON error bodies.
    auto guarded = [](auto handler) {
        return [handler](const httplib::Request& req, httplib::Response& res) {
            try {
                handler(req, res);
            } catch (const HttpError& e) {
                send_json(res, {{"error", e.what()}}, e.status);
            } catch (const std::invalid_argument& e) {
                send_json(res, {{"error", e.what()}}, 400);
            } catch (const std::out_of_range& e) {
                send_json(res, {{"error", e.what()}}, 400);
            } catch (const std::exception& e) {
                spdlog::error("{} {}: {}", req.method, req.path, e.what());
                send_json(res, {{"error", e.what()}}, 500);
            }
        };
    };

    svr.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) {
            const char* reason = res.status == 413 ? "request body too large" : httplib::status_message(res.status);
            send_json(res, {{"error", reason}}, res.status);
        }
    });

    svr.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
        if (!engine()) return send_json(res, {{"status", "no model"}}, 503);
        send_json(res, {{"status", "ok"}});
    }));

    svr.Get("/model/info", guarded([need_engine](const httplib::Request&, httplib::Response& res) {
        const auto e = need_engine();
        send_json(res, {{"C", e->num_classes()},
                        {"W", e->style_dim()},
                        {"resolution", e->resolution()},
                        {"sr_factor", e->super_resolution_factor()},
                        {"class_names", e->class_names()},
                        {"checkpoint_hash", e->checkpoint_hash()}});
    }));

    auto decode_layout = [](const InferenceEngine& e, std::span<const std::uint8_t> png) {
        SegmentationMap seg;
        try {
            seg = segmentation_from_png(png, e.num_classes());
        } catch (const std::exception& ex) {
            throw HttpError(400, ex.what());
        }
        try {
            e.validate_layout(seg);
        } catch (const std::exception& ex) {
            throw HttpError(400, ex.what());
        }
        return seg;
    };

    svr.Post("/layouts", guarded([this, need_engine, decode_layout](const httplib::Request& req,
                                                                     httplib::Response& res) {
        const auto e = need_engine();
        if (req.body.empty()) throw HttpError(400, "empty body; expected a PNG layout");
        const SegmentationMap seg = decode_layout(*e, as_bytes(req.body));
        const std::string id = hash_of(req.body);
        store_.layouts.put(id, seg);
        send_json(res, {{"layout_id", id},
                        {"classes", seg.present_classes()},
                        {"width", seg.width()},
                        {"height", seg.height()}});
    }));

    // Resolves "layout_id" or inline base64 "layout_png".
    auto request_layout = [this, decode_layout](const InferenceEngine& e, const json& body) {
        if (body.contains("layout_id")) {
            const auto id = field<std::string>(body, "layout_id");
            auto seg = store_.layouts.get(id);
            if (!seg) throw HttpError(404, "unknown layout_id '" + id + "'");
            return *seg;
        }
        if (body.contains("layout_png")) {
            std::vector<std::uint8_t> png;
            try {
                png = base64_decode(field<std::string>(body, "layout_png"));
            } catch (const std::invalid_argument& ex) {
                throw HttpError(400, ex.what());
            }
            return decode_layout(e, png);
        }
        throw HttpError(400, "request needs layout_id or layout_png");
    };

    svr.Post("/styles/sample", guarded([need_engine](const httplib::Request& req, httplib::Response& res) {
        const auto e = need_engine();
        const json body = parse_body(req);
        const auto seed = field<std::uint64_t>(body, "seed");
        std::vector<int> classes;
        if (body.contains("classes")) classes = field<std::vector<int>>(body, "classes");
        for (int c : classes)
            if (c < 0 || c >= e->num_classes())
                throw HttpError(400, fmt::format("class index {} out of range [0, {})", c, e->num_classes()));
        send_json(res, style_to_json(e->sample_styles(seed, classes)));
    }));

    svr.Post("/styles/encode", guarded([this, need_engine, decode_layout](const httplib::Request& req,
                                                                           httplib::Response& res) {
        const auto e = need_engine();
        if (!req.is_multipart_form_data() || !req.has_file("exemplar") || !req.has_file("seg"))
            throw HttpError(400, "expected multipart fields 'exemplar' and 'seg'");
        const std::string ex = req.get_file_value("exemplar").content, sg = req.get_file_value("seg").content;
        const std::string id = hash_of(hash_of(ex) + hash_of(sg));
        std::optional<StyleMatrix> styles = store_.styles.get(id);
        res.set_header("X-Cache", styles ? "hit" : "miss");
        if (!styles) {
            TextureMap tex;
            try {
                tex = texture_from_png(as_bytes(ex));
            } catch (const std::exception& err) {
                throw HttpError(400, std::string("exemplar: ") + err.what());
            }
            const SegmentationMap seg = decode_layout(*e, as_bytes(sg));
            if (tex.height() != seg.height() || tex.width() != seg.width())
                throw HttpError(400, "exemplar and segmentation sizes differ");
            styles = e->encode_styles(tex, seg);
            store_.styles.put(id, *styles);
        }
        json body = style_to_json(*styles);
        body["style_id"] = id;
        send_json(res, body);
    }));

    svr.Post("/generate", guarded([this, need_engine, request_layout](const httplib::Request& req,
                                                                       httplib::Response& res) {
        const auto e = need_engine();
        const json body = parse_body(req);
        const SegmentationMap layout = request_layout(*e, body);
        const int c = e->num_classes();
        const std::optional<std::uint64_t> seed =
            body.contains("seed") ? std::optional(field<std::uint64_t>(body, "seed")) : std::nullopt;

        // Exemplar styles for encoded sources: a cached style_id or an inline matrix.
        std::optional<StyleMatrix> encoded;
        if (body.contains("style_id")) {
            encoded = store_.styles.get(field<std::string>(body, "style_id"));
            if (!encoded) throw HttpError(404, "unknown style_id");
        } else if (body.contains("styles")) {
            try {
                encoded = style_from_json(body.at("styles"));
            } catch (const std::exception& ex) {
                throw HttpError(400, std::string("styles: ") + ex.what());
            }
        }

        std::vector<StyleSource> sources(static_cast<std::size_t>(c), StyleSource::random());
        if (body.contains("sources")) {
            const json& list = body.at("sources");
            if (!list.is_array() || static_cast<int>(list.size()) != c)
                throw HttpError(400, fmt::format("sources must list exactly {} entries", c));
            for (int k = 0; k < c; ++k) {
                const json& s = list[k];
                const std::string kind = s.is_string() ? s.get<std::string>() : s.value("kind", std::string());
                if (kind == "encoded") {
                    sources[k] = StyleSource::encoded();
                } else if (kind == "random") {
                    sources[k] = s.is_object() && s.contains("seed")
                                     ? StyleSource::random(field<std::uint64_t>(s, "seed"))
                                     : StyleSource::random();
                } else if (kind == "fixed") {
                    sources[k] = StyleSource::fixed(field<std::vector<float>>(s, "vector"));
                } else {
                    throw HttpError(400, fmt::format("source {} has unknown kind '{}'", k, kind));
                }
            }
        }
        bool needs_seed = false;
        for (const auto& s : sources) {
            if (s.kind == StyleSource::Kind::random && !s.seed) needs_seed = true;
            if (s.kind == StyleSource::Kind::encoded && !encoded)
                throw HttpError(400, "encoded sources need style_id or styles");
        }
        if (needs_seed && !seed) throw HttpError(400, "a random source without its own seed needs 'seed'");

        const std::uint64_t s = seed.value_or(0);
        const bool sr = body.value("super_resolve", false);
        if (sr && !e->has_super_resolution()) throw HttpError(400, "the model has no super-resolution network");
        const StyleMatrix styles = e->assemble_styles(sources, encoded ? &*encoded : nullptr, s);
        const TextureMap tex = e->generate(styles, layout, s);
        const auto png = render_output_png(*e, tex, sr);

        json provenance = json::array();
        for (int k = 0; k < c; ++k) {
            json p = {{"class", k},
                      {"name", e->class_names()[k]},
                      {"source", to_string(sources[k].kind)},
                      {"row", std::vector<float>(styles.row(k), styles.row(k) + styles.width())}};
            if (sources[k].kind == StyleSource::Kind::random) p["seed"] = sources[k].seed.value_or(s);
            provenance.push_back(std::move(p));
        }
        const int scale = sr ? e->super_resolution_factor() : 1;
        json out = {{"texture", base64_encode(png)},
                    {"width", layout.width() * scale},
                    {"height", layout.height() * scale},
                    {"seed", s},
                    {"provenance", provenance}};
        if (body.value("return_views", false)) {
            json views = json::array();
            for (const auto& [name, v] : render_view_pngs(tex)) views.push_back({{"name", name}, {"png", base64_encode(v)}});
            out["views"] = views;
        }
        send_json(res, out);
    }));

    svr.Post("/interpolate", guarded([this, need_engine, request_layout](const httplib::Request& req,
                                                                          httplib::Response& res) {
        const auto e = need_engine();
        const json body = parse_body(req);
        const int steps = field<int>(body, "steps");
        if (steps < 2 || steps > options_.max_interpolation_steps)
            throw HttpError(400, fmt::format("steps must be in [2, {}]", options_.max_interpolation_steps));
        StyleMatrix a, b;
        try {
            a = style_from_json(body.at("style_a"));
            b = style_from_json(body.at("style_b"));
        } catch (const std::exception& ex) {
            throw HttpError(400, std::string("style_a/style_b: ") + ex.what());
        }
        if (a.rows.shape() != b.rows.shape()) throw HttpError(400, "style_a and style_b differ in shape");
        if (a.num_classes() != e->num_classes() || a.width() != e->style_dim())
            throw HttpError(400, fmt::format("styles must be {}x{}", e->num_classes(), e->style_dim()));
        const SegmentationMap layout = request_layout(*e, body);
        const std::uint64_t seed = body.value("seed", std::uint64_t{0});
        const bool sr = body.value("super_resolve", false);
        if (sr && !e->has_super_resolution()) throw HttpError(400, "the model has no super-resolution network");
        json ts = json::array(), textures = json::array();
        for (int k = 0; k < steps; ++k) {
            const double t = static_cast<double>(k) / (steps - 1);
            ts.push_back(t);
            const TextureMap tex = e->generate(interpolate_styles(a, b, t), layout, seed);
            textures.push_back(base64_encode(render_output_png(*e, tex, sr)));
        }
        send_json(res, {{"t", ts}, {"textures", textures}});
    }));
}

} // namespace reavae
