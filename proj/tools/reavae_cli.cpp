// reavae: train, infer, metrics, serve, plus helpers for synthetic data and the SRN.

#include <csignal>
#include <fstream>
#include <iostream>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "reavae/evaluation.hpp"
#include "reavae/inference.hpp"
#include "reavae/service.hpp"
#include "reavae/training.hpp"

using namespace reavae;

namespace {

std::vector<int> parse_class_list(const std::string& text, int num_classes)
{
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        const int c = std::stoi(item, &used);
        if (used != item.size() || c < 0 || c >= num_classes)
            throw std::invalid_argument("--lock: class '" + item + "' is not in [0, " + std::to_string(num_classes) + ")");
        out.push_back(c);
    }
    return out;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j)
{
    const std::string text = j.dump(2) + "\n";
    write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

nlohmann::json read_json(const std::filesystem::path& path)
{
    const auto bytes = read_file(path);
    return nlohmann::json::parse(bytes.begin(), bytes.end());
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
    std::string config, resume;
    int iterations = -1;
};

int run_train(const TrainArgs& a)
{
    TrainConfig cfg = load_train_config(a.config);
    if (a.iterations >= 0) cfg.optim.iterations = a.iterations;
    Trainer trainer(cfg, load_dataset(cfg));
    if (!cfg.data.srn_checkpoint.empty()) {
        trainer.attach_super_resolution(srn_from_checkpoint(load_checkpoint(cfg.data.srn_checkpoint)));
        spdlog::info("bundling SRN from {}", cfg.data.srn_checkpoint);
    }
    if (!a.resume.empty()) {
        trainer.resume(load_checkpoint(a.resume));
        spdlog::info("resumed at iteration {}", trainer.iteration());
    }
    spdlog::info("training on {} samples for {} iterations into {}", trainer.data().size(), cfg.optim.iterations,
                 cfg.data.output_dir);
    const auto start = std::chrono::steady_clock::now();
    train(trainer, cfg.data.output_dir);
    spdlog::info("done in {:.1f} s; final checkpoint {}",
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(),
                 (std::filesystem::path(cfg.data.output_dir) / "final.ckpt").string());
    return 0;
}

// ---- infer -----------------------------------------------------------------

struct InferArgs {
    std::string mode, ckpt, layout, exemplar, exemplar_seg, lock, out, style_json, style_in, srn;
    std::uint64_t seed = 0;
    bool super_resolve = false;
};

int run_infer(const InferArgs& a)
{
    const InferMode mode = infer_mode_from_string(a.mode);
    const auto engine = InferenceEngine::from_file(a.ckpt);
    if (!a.srn.empty()) engine->set_super_resolution(srn_from_checkpoint(load_checkpoint(a.srn)));
    const InferenceEngine& e = *engine;
    const int c = e.num_classes();
    const SegmentationMap layout = load_segmentation(a.layout, c);

    std::optional<TextureMap> exemplar;
    std::optional<SegmentationMap> exemplar_seg;
    if (!a.exemplar.empty()) exemplar = load_texture(a.exemplar);
    if (!a.exemplar_seg.empty()) exemplar_seg = load_segmentation(a.exemplar_seg, c);
    auto require_exemplar = [&] {
        if (!exemplar) throw std::invalid_argument("--mode " + a.mode + " needs --exemplar");
        if (!exemplar_seg) {
            if (mode != InferMode::reconstruct) throw std::invalid_argument("--mode " + a.mode + " needs --exemplar-seg");
            exemplar_seg = layout;
        }
    };

    StyleMatrix styles;
    switch (mode) {
    case InferMode::reconstruct:
        require_exemplar();
        if (!(*exemplar_seg == layout)) throw std::invalid_argument("reconstruct: --exemplar-seg must equal --layout");
        styles = e.encode_styles(*exemplar, *exemplar_seg);
        break;
    case InferMode::transfer:
        require_exemplar();
        styles = e.encode_styles(*exemplar, *exemplar_seg);
        break;
    case InferMode::random: styles = e.sample_styles(a.seed); break;
    case InferMode::mix: {
        // Locked classes keep their encoded (or --style-in) rows; the rest are rerolled from --seed.
        std::optional<StyleMatrix> base;
        if (exemplar) {
            require_exemplar();
            base = e.encode_styles(*exemplar, *exemplar_seg);
        } else if (!a.style_in.empty()) {
            base = style_from_json(read_json(a.style_in));
        }
        std::vector<StyleSource> sources(static_cast<std::size_t>(c), StyleSource::random());
        for (int k : parse_class_list(a.lock, c)) {
            if (!base) throw std::invalid_argument("--lock needs --exemplar/--exemplar-seg or --style-in");
            if (exemplar) sources[k] = StyleSource::encoded();
            else sources[k] = StyleSource::fixed(std::vector<float>(base->row(k), base->row(k) + base->width()));
        }
        styles = e.assemble_styles(sources, base ? &*base : nullptr, a.seed);
        break;
    }
    }

    const TextureMap tex = e.generate(styles, layout, a.seed);
    write_file(a.out, render_output_png(e, tex, a.super_resolve));
    if (!a.style_json.empty()) write_json(a.style_json, style_to_json(styles));
    spdlog::info("{} -> {}", to_string(mode), a.out);
    return 0;
}

// ---- metrics ---------------------------------------------------------------

struct MetricsArgs {
    std::string real, fake, report;
};

int run_metrics(const MetricsArgs& a)
{
    const MetricsReport r = compare_texture_sets(load_texture_dir(a.real), load_texture_dir(a.fake));
    const auto j = to_json(r);
    write_json(a.report, j);
    std::cout << j.dump(2) << "\n";
    return 0;
}

// ---- serve -----------------------------------------------------------------

struct ServeArgs {
    std::string ckpt, host = "0.0.0.0";
    int port = 8080, workers = 4;
};

Service* active_service = nullptr;

int run_serve(const ServeArgs& a)
{
    std::shared_ptr<const InferenceEngine> engine;
    if (a.ckpt.empty()) {
        spdlog::warn("no checkpoint given (--ckpt or REAVAE_CKPT); model endpoints will answer 503");
    } else {
        engine = InferenceEngine::from_file(a.ckpt);
        spdlog::info("loaded {} (sha256 {})", a.ckpt, engine->checkpoint_hash());
    }
    ServiceOptions opts;
    opts.workers = a.workers;
    Service service(engine, opts);
    active_service = &service;
    std::signal(SIGINT, [](int) {
        if (active_service) active_service->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (active_service) active_service->stop();
    });
    spdlog::info("listening on {}:{} with {} workers", a.host, a.port, a.workers);
    const bool ok = service.listen(a.host, a.port);
    active_service = nullptr;
    if (!ok) {
        spdlog::error("cannot listen on {}:{}", a.host, a.port);
        return 1;
    }
    return 0;
}

// ---- synth / train-srn / config ---------------------------------------------

struct SynthArgs {
    std::string out;
    int count = 8, classes = 5, resolution = 64;
    std::uint64_t seed = 7;
};

int run_synth(const SynthArgs& a)
{
    const std::filesystem::path dir(a.out);
    std::filesystem::create_directories(dir);
    nlohmann::json index = nlohmann::json::array();
    const auto samples = generate_synthetic_dataset(SynthSpec::sized(a.classes, a.resolution), a.count, a.seed);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::string stem = fmt::format("{:04d}", i);
        save_texture(dir / ("tex_" + stem + ".png"), samples[i].texture);
        save_segmentation(dir / ("seg_" + stem + ".png"), samples[i].segmentation);
        index.push_back({{"sample", stem}, {"patterns", descriptors_to_json(samples[i].descriptors)}});
    }
    write_json(dir / "patterns.json", index);
    spdlog::info("wrote {} samples to {}", samples.size(), dir.string());
    return 0;
}

struct SrnArgs {
    std::string out;
    int count = 64, classes = 5, resolution = 64;
    std::uint64_t data_seed = 101;
    SRNConfig net;
    SRNTrainConfig train;
};

int run_train_srn(const SrnArgs& a)
{
    std::vector<TextureMap> high;
    for (auto& s : generate_synthetic_dataset(SynthSpec::sized(a.classes, a.resolution), a.count, a.data_seed))
        high.push_back(std::move(s.texture));
    SuperResolution<float> net(a.net);
    train_srn(net, high, a.train, [&](int it, double loss) {
        if (it % 100 == 0 || it + 1 == a.train.iterations) spdlog::info("srn iter {} l1={:.5f}", it, loss);
    });
    save_checkpoint(a.out, srn_to_checkpoint(net));
    spdlog::info("saved SRN to {}", a.out);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"ReAVAE texture synthesis"};
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train a model from an INI config");
    train_cmd->add_option("--config", train_args.config, "INI file with [model] [loss] [optim] [data]")
        ->required()
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--resume", train_args.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
    train_cmd->add_option("--iterations", train_args.iterations, "Override optim.iterations");

    InferArgs infer_args;
    auto* infer_cmd = app.add_subcommand("infer", "Generate a texture from a checkpoint");
    infer_cmd->add_option("--mode", infer_args.mode, "reconstruct | transfer | random | mix")
        ->required()
        ->check(CLI::IsMember({"reconstruct", "transfer", "random", "mix"}));
    infer_cmd->add_option("--ckpt", infer_args.ckpt)->required()->check(CLI::ExistingFile);
    infer_cmd->add_option("--layout", infer_args.layout, "Target segmentation PNG")->required()->check(CLI::ExistingFile);
    infer_cmd->add_option("--exemplar", infer_args.exemplar, "Exemplar texture PNG")->check(CLI::ExistingFile);
    infer_cmd->add_option("--exemplar-seg", infer_args.exemplar_seg, "Exemplar segmentation PNG")
        ->check(CLI::ExistingFile);
    infer_cmd->add_option("--seed", infer_args.seed, "Seed for noise and random style rows");
    infer_cmd->add_option("--lock", infer_args.lock, "mix: classes kept from the exemplar or --style-in, e.g. 1,3");
    infer_cmd->add_flag("--super-resolve", infer_args.super_resolve, "Append the SRN stage");
    infer_cmd->add_option("--srn", infer_args.srn, "SRN checkpoint (default: the one bundled in --ckpt)")
        ->check(CLI::ExistingFile);
    infer_cmd->add_option("--out", infer_args.out, "Output PNG")->required();
    infer_cmd->add_option("--style-json", infer_args.style_json, "Write the style matrix used");
    infer_cmd->add_option("--style-in", infer_args.style_in, "mix: style matrix JSON supplying locked rows")
        ->check(CLI::ExistingFile);

    MetricsArgs metrics_args;
    auto* metrics_cmd = app.add_subcommand("metrics", "PSNR/SSIM/FID/KID between two texture directories");
    metrics_cmd->add_option("--real", metrics_args.real)->required()->check(CLI::ExistingDirectory);
    metrics_cmd->add_option("--fake", metrics_args.fake)->required()->check(CLI::ExistingDirectory);
    metrics_cmd->add_option("--report", metrics_args.report, "Output JSON")->required();

    ServeArgs serve_args;
    auto* serve_cmd = app.add_subcommand("serve", "HTTP inference service");
    serve_cmd->add_option("--ckpt", serve_args.ckpt)->envname("REAVAE_CKPT")->check(CLI::ExistingFile);
    serve_cmd->add_option("--port", serve_args.port)->check(CLI::Range(0, 65535));
    serve_cmd->add_option("--workers", serve_args.workers)->check(CLI::PositiveNumber);
    serve_cmd->add_option("--host", serve_args.host);

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic tex_/seg_ dataset");
    synth_cmd->add_option("--out", synth_args.out)->required();
    synth_cmd->add_option("--count", synth_args.count)->check(CLI::PositiveNumber);
    synth_cmd->add_option("--classes", synth_args.classes)->check(CLI::Range(2, 255));
    synth_cmd->add_option("--resolution", synth_args.resolution)->check(CLI::Range(16, 4096));
    synth_cmd->add_option("--seed", synth_args.seed);

    SrnArgs srn_args;
    auto* srn_cmd = app.add_subcommand("train-srn", "Train the x4 super-resolution network on synthetic textures");
    srn_cmd->add_option("--out", srn_args.out)->required();
    srn_cmd->add_option("--count", srn_args.count)->check(CLI::PositiveNumber);
    srn_cmd->add_option("--resolution", srn_args.resolution, "High-resolution size")->check(CLI::Range(16, 4096));
    srn_cmd->add_option("--data-seed", srn_args.data_seed);
    srn_cmd->add_option("--iterations", srn_args.train.iterations)->check(CLI::NonNegativeNumber);
    srn_cmd->add_option("--batch", srn_args.train.batch_size)->check(CLI::PositiveNumber);
    srn_cmd->add_option("--lr", srn_args.train.lr)->check(CLI::PositiveNumber);
    srn_cmd->add_option("--channels", srn_args.net.channels)->check(CLI::PositiveNumber);
    srn_cmd->add_option("--blocks", srn_args.net.blocks)->check(CLI::NonNegativeNumber);

    std::string preset = "desk";
    auto* config_cmd = app.add_subcommand("config", "Print a preset config as INI");
    config_cmd->add_option("--preset", preset)->check(CLI::IsMember({"desk", "full"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) return run_train(train_args);
        if (*infer_cmd) return run_infer(infer_args);
        if (*metrics_cmd) return run_metrics(metrics_args);
        if (*serve_cmd) return run_serve(serve_args);
        if (*synth_cmd) return run_synth(synth_args);
        if (*srn_cmd) return run_train_srn(srn_args);
        if (*config_cmd) {
            std::cout << format_train_config(preset == "full" ? TrainConfig::full() : TrainConfig::desk());
            return 0;
        }
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
