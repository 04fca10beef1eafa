#include <doctest.h>

#include <thread>

#include "httplib.h"
#include "reavae/service.hpp"
#include "test_util.hpp"

using namespace reavae;
using namespace testutil;
using json = nlohmann::json;

namespace {

std::shared_ptr<const InferenceEngine> tiny_engine()
{
    ModelConfig m;
    m.num_classes = 3;
    m.style_dim = 8;
    m.resolution = 16;
    m.encoder_base = 4;
    m.gen_channels = {8, 8, 4};
    m.disc_base = 4;
    m.feature_channels = {4, 8};
    ReAVAEModel model(m);
    Checkpoint c;
    model.store(c);
    SRNConfig sc;
    sc.channels = 4;
    sc.blocks = 1;
    SuperResolution<float> srn(sc);
    bundle_srn(c, srn);
    const auto bytes = encode_checkpoint(c);
    return std::make_shared<InferenceEngine>(decode_checkpoint(bytes), content_hash(bytes));
}

/// A service on a free loopback port, served from a background thread.
struct Running {
    Service service;
    int port = 0;
    std::thread thread;

    explicit Running(std::shared_ptr<const InferenceEngine> engine, ServiceOptions opts = {})
        : service(std::move(engine), opts)
    {
        port = service.bind_any_port("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this] { service.listen_after_bind(); });
        while (!service.running()) std::this_thread::yield();
    }
    ~Running()
    {
        service.stop();
        thread.join();
    }
    httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

SegmentationMap layout16(int offset = 0)
{
    Labels l(1, 16, 16);
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j) l.at(0, i, j) = ((j + offset) * 3 / 16) % 3;
    return SegmentationMap(l, 3);
}

std::string as_string(const std::vector<std::uint8_t>& v)
{
    return {v.begin(), v.end()};
}

std::vector<std::uint8_t> png_field(const json& j, const char* key)
{
    return base64_decode(j.at(key).get<std::string>());
}

} // namespace

TEST_CASE("base64 round trips arbitrary bytes")
{
    for (std::size_t n : {0u, 1u, 2u, 3u, 4u, 100u}) {
        std::vector<std::uint8_t> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::uint8_t>(i * 37 + 11);
        CHECK(base64_decode(base64_encode(v)) == v);
    }
    const std::string abc = "abc";
    CHECK(base64_encode({reinterpret_cast<const std::uint8_t*>(abc.data()), 3}) == "YWJj");
    CHECK_THROWS(base64_decode("abc"));
}

TEST_CASE("the LRU cache evicts the least recently used entry")
{
    LruCache<int> cache(2);
    cache.put("a", 1);
    cache.put("b", 2);
    CHECK(cache.get("a") == 1);
    cache.put("c", 3);
    CHECK_FALSE(cache.get("b").has_value());
    CHECK(cache.get("a") == 1);
    CHECK(cache.get("c") == 3);
    CHECK(cache.size() == 2);
}

TEST_CASE("without a model the service answers 503")
{
    Running r(nullptr);
    auto cli = r.client();
    CHECK(cli.Get("/health")->status == 503);
    CHECK(cli.Get("/model/info")->status == 503);
    CHECK(cli.Post("/generate", R"({"seed":1,"layout_id":"x"})", "application/json")->status == 503);
    r.service.set_engine(tiny_engine());
    const auto h = cli.Get("/health");
    CHECK(h->status == 200);
    CHECK(json::parse(h->body)["status"] == "ok");
}

TEST_CASE("model info reports the checkpoint")
{
    const auto engine = tiny_engine();
    Running r(engine);
    auto cli = r.client();
    const json info = json::parse(cli.Get("/model/info")->body);
    CHECK(info["C"] == 3);
    CHECK(info["W"] == 8);
    CHECK(info["resolution"] == 16);
    CHECK(info["sr_factor"] == 4);
    CHECK(info["class_names"].size() == 3);
    CHECK(info["checkpoint_hash"] == engine->checkpoint_hash());
    CHECK(json::parse(cli.Get("/model/info")->body) == info);
}

TEST_CASE("layout uploads are content addressed and validated")
{
    ServiceOptions opts;
    opts.max_body_bytes = 4096;
    Running r(tiny_engine(), opts);
    auto cli = r.client();
    const std::string png = as_string(segmentation_to_png(layout16()));
    const auto a = cli.Post("/layouts", png, "image/png"), b = cli.Post("/layouts", png, "image/png");
    REQUIRE(a->status == 200);
    CHECK(json::parse(a->body)["layout_id"] == json::parse(b->body)["layout_id"]);
    CHECK(json::parse(a->body)["classes"] == json::array({0, 1, 2}));

    Labels bad(1, 16, 16, 0);
    bad.at(0, 3, 7) = 4;
    const auto r400 = cli.Post("/layouts", as_string(segmentation_to_png(SegmentationMap(bad, 5))), "image/png");
    CHECK(r400->status == 400);
    CHECK(r400->body.find("(x=7, y=3)") != std::string::npos);
    CHECK(cli.Post("/layouts", std::string(5000, 'x'), "image/png")->status == 413);
    CHECK(cli.Post("/layouts", "not a png", "image/png")->status == 400);
}

TEST_CASE("style sampling mirrors the engine")
{
    const auto engine = tiny_engine();
    Running r(engine);
    auto cli = r.client();
    const auto a = cli.Post("/styles/sample", R"({"seed":7,"classes":[0,2]})", "application/json");
    const auto b = cli.Post("/styles/sample", R"({"seed":7,"classes":[0,2]})", "application/json");
    REQUIRE(a->status == 200);
    CHECK(a->body == b->body);
    CHECK(style_from_json(json::parse(a->body)) == engine->sample_styles(7, {0, 2}));
    const StyleMatrix zero = style_from_json(json::parse(
        cli.Post("/styles/sample", R"({"seed":7,"classes":[]})", "application/json")->body));
    for (float v : zero.rows.values()) CHECK(v == 0.f);
    CHECK(json::parse(a->body)["width"] == 8);
    CHECK(cli.Post("/styles/sample", R"({"seed":7,"classes":[3]})", "application/json")->status == 400);
    CHECK(cli.Post("/styles/sample", R"({"classes":[1]})", "application/json")->status == 400);
    CHECK(cli.Post("/styles/sample", "{", "application/json")->status == 400);
}

TEST_CASE("exemplar encoding caches, zeroes absent classes and matches the CLI reconstruction")
{
    const auto engine = tiny_engine();
    Running r(engine);
    auto cli = r.client();
    Rng rng(1);
    const TextureMap tex(random_tensor<float>({3, 16, 16}, rng, 0, 1));
    const std::string tex_png = as_string(texture_to_png(tex));
    Labels l(1, 16, 16, 0);
    for (int i = 8; i < 16; ++i)
        for (int j = 0; j < 16; ++j) l.at(0, i, j) = 2;
    const SegmentationMap seg(l, 3);
    const std::string seg_png = as_string(segmentation_to_png(seg));
    const httplib::MultipartFormDataItems items = {{"exemplar", tex_png, "tex.png", "image/png"},
                                                   {"seg", seg_png, "seg.png", "image/png"}};
    const auto a = cli.Post("/styles/encode", items), b = cli.Post("/styles/encode", items);
    REQUIRE(a->status == 200);
    CHECK(a->body == b->body);
    CHECK(a->get_header_value("X-Cache") == "miss");
    CHECK(b->get_header_value("X-Cache") == "hit");
    const json enc = json::parse(a->body);
    CHECK(enc["presence"] == json::array({true, false, true}));
    for (const auto& v : enc["rows"][1]) CHECK(v.get<float>() == 0.f);

    // Encode, then generate with every source encoded on the same layout.
    const TextureMap decoded = texture_from_png(texture_to_png(tex));
    const std::string layout_id = json::parse(cli.Post("/layouts", seg_png, "image/png")->body)["layout_id"];
    const json req = {{"layout_id", layout_id},
                      {"style_id", enc["style_id"]},
                      {"seed", 5},
                      {"sources", {"encoded", "encoded", "encoded"}}};
    const auto g = cli.Post("/generate", req.dump(), "application/json");
    REQUIRE(g->status == 200);
    CHECK(png_field(json::parse(g->body), "texture") == texture_to_png(engine->reconstruct(decoded, seg, 5)));

    const httplib::MultipartFormDataItems mismatched = {
        {"exemplar", as_string(texture_to_png(TextureMap(8, 8))), "tex.png", "image/png"},
        {"seg", seg_png, "seg.png", "image/png"}};
    CHECK(cli.Post("/styles/encode", mismatched)->status == 400);
    CHECK(cli.Post("/styles/encode", "{}", "application/json")->status == 400);
}

TEST_CASE("generation matches the CLI path, echoes provenance and keeps locked rows")
{
    const auto engine = tiny_engine();
    Running r(engine);
    auto cli = r.client();
    const SegmentationMap layout = layout16(2);
    const std::string layout_id =
        json::parse(cli.Post("/layouts", as_string(segmentation_to_png(layout)), "image/png")->body)["layout_id"];

    const json random_req = {{"layout_id", layout_id}, {"seed", 11}};
    const auto g = cli.Post("/generate", random_req.dump(), "application/json");
    REQUIRE(g->status == 200);
    const json out = json::parse(g->body);
    CHECK(png_field(out, "texture") == render_output_png(*engine, engine->random(layout, 11), false));
    CHECK(out["provenance"].size() == 3);
    CHECK(out["provenance"][1]["source"] == "random");
    CHECK(out["provenance"][1]["seed"] == 11);
    CHECK(cli.Post("/generate", random_req.dump(), "application/json")->body == g->body);

    // Lock class 0 from the echo, reroll the rest with two seeds.
    const json locked_row = out["provenance"][0]["row"];
    std::vector<json> echoes;
    for (int seed : {21, 22}) {
        const json req = {{"layout_id", layout_id},
                          {"seed", seed},
                          {"sources", {{{"kind", "fixed"}, {"vector", locked_row}}, "random", "random"}}};
        const auto resp = cli.Post("/generate", req.dump(), "application/json");
        REQUIRE(resp->status == 200);
        echoes.push_back(json::parse(resp->body));
    }
    CHECK(echoes[0]["provenance"][0]["row"] == locked_row);
    CHECK(echoes[1]["provenance"][0]["row"] == locked_row);
    CHECK(echoes[0]["provenance"][0]["row"].dump() == echoes[1]["provenance"][0]["row"].dump());
    CHECK(echoes[0]["provenance"][1]["row"] != echoes[1]["provenance"][1]["row"]);

    const json sr_req = {{"layout_png", base64_encode(segmentation_to_png(layout))},
                         {"seed", 11},
                         {"super_resolve", true},
                         {"return_views", true}};
    const json sr = json::parse(cli.Post("/generate", sr_req.dump(), "application/json")->body);
    CHECK(sr["width"] == 64);
    const TextureMap big = texture_from_png(png_field(sr, "texture"));
    CHECK(big.width() == 64);
    CHECK(png_field(sr, "texture") == render_output_png(*engine, engine->random(layout, 11), true));
    CHECK(sr["views"].size() == 4);
}

TEST_CASE("generation request errors")
{
    Running r(tiny_engine());
    auto cli = r.client();
    const std::string layout_png = base64_encode(segmentation_to_png(layout16()));
    auto post = [&](const json& j) { return cli.Post("/generate", j.dump(), "application/json")->status; };
    CHECK(post({{"layout_id", "nope"}, {"seed", 1}}) == 404);
    CHECK(post({{"seed", 1}}) == 400);
    CHECK(post({{"layout_png", layout_png}}) == 400); // random sources need a seed
    CHECK(post({{"layout_png", layout_png}, {"sources", {"random", "random"}}, {"seed", 1}}) == 400);
    CHECK(post({{"layout_png", layout_png}, {"sources", {"paint", "random", "random"}}, {"seed", 1}}) == 400);
    CHECK(post({{"layout_png", layout_png}, {"sources", {"encoded", "random", "random"}}, {"seed", 1}}) == 400);
    CHECK(post({{"layout_png", layout_png},
                {"sources", {{{"kind", "fixed"}, {"vector", {1, 2}}}, "random", "random"}},
                {"seed", 1}}) == 400);
    CHECK(post({{"layout_png", layout_png}, {"style_id", "nope"}, {"seed", 1}}) == 404);
    // Per-class seeds make the request seed unnecessary.
    CHECK(post({{"layout_png", layout_png},
                {"sources", {{{"kind", "random"}, {"seed", 1}}, {{"kind", "random"}, {"seed", 2}},
                             {{"kind", "random"}, {"seed", 3}}}}}) == 200);
}

TEST_CASE("interpolation returns evenly spaced textures whose endpoints match generate")
{
    const auto engine = tiny_engine();
    Running r(engine);
    auto cli = r.client();
    const SegmentationMap layout = layout16();
    const std::string layout_png = base64_encode(segmentation_to_png(layout));
    const StyleMatrix a = engine->sample_styles(1), b = engine->sample_styles(2);
    const json req = {{"style_a", style_to_json(a)}, {"style_b", style_to_json(b)}, {"steps", 5},
                      {"layout_png", layout_png}, {"seed", 3}};
    const auto resp = cli.Post("/interpolate", req.dump(), "application/json");
    REQUIRE(resp->status == 200);
    const json out = json::parse(resp->body);
    CHECK(out["t"] == json::array({0.0, 0.25, 0.5, 0.75, 1.0}));
    REQUIRE(out["textures"].size() == 5);

    auto fixed_sources = [](const StyleMatrix& s) {
        json list = json::array();
        for (int c = 0; c < s.num_classes(); ++c)
            list.push_back({{"kind", "fixed"}, {"vector", std::vector<float>(s.row(c), s.row(c) + s.width())}});
        return list;
    };
    for (const auto& [idx, s] : {std::pair{0, a}, std::pair{4, b}}) {
        const json g = {{"layout_png", layout_png}, {"seed", 3}, {"sources", fixed_sources(s)}};
        const json gen = json::parse(cli.Post("/generate", g.dump(), "application/json")->body);
        CHECK(gen["texture"] == out["textures"][idx]);
    }

    json two = req;
    two["steps"] = 2;
    const json out2 = json::parse(cli.Post("/interpolate", two.dump(), "application/json")->body);
    CHECK(out2["textures"][0] == out["textures"][0]);
    CHECK(out2["textures"][1] == out["textures"][4]);

    json one = req;
    one["steps"] = 1;
    CHECK(cli.Post("/interpolate", one.dump(), "application/json")->status == 400);
    json mismatch = req;
    mismatch["style_b"] = style_to_json(StyleMatrix(3, 4));
    CHECK(cli.Post("/interpolate", mismatch.dump(), "application/json")->status == 400);
}

TEST_CASE("concurrent requests return the same bytes as serial ones")
{
    Running r(tiny_engine(), ServiceOptions{3});
    const std::string layout_png = base64_encode(segmentation_to_png(layout16()));
    std::vector<std::string> serial, parallel(6);
    for (int k = 0; k < 6; ++k) {
        auto cli = r.client();
        serial.push_back(cli.Post("/generate", json{{"layout_png", layout_png}, {"seed", k}}.dump(),
                                  "application/json")
                             ->body);
    }
    std::vector<std::thread> threads;
    for (int k = 0; k < 6; ++k)
        threads.emplace_back([&, k] {
            auto cli = r.client();
            parallel[k] = cli.Post("/generate", json{{"layout_png", layout_png}, {"seed", k}}.dump(),
                                   "application/json")
                              ->body;
        });
    for (auto& t : threads) t.join();
    CHECK(serial == parallel);
}
