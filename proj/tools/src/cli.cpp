#include "glandsynth/cli.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <csignal>
#include <fstream>
#include <map>
#include <random>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "glandsynth/checkpoint.hpp"
#include "glandsynth/dataset.hpp"
#include "glandsynth/evaluation.hpp"
#include "glandsynth/image_io.hpp"
#include "glandsynth/service.hpp"
#include "glandsynth/synthesis.hpp"
#include "glandsynth/trainer.hpp"

// After Eigen: <resolv.h> defines a `_res` macro.
#include <httplib.h>

namespace fs = std::filesystem;

namespace glandsynth {

namespace {

bool is_raster(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".tif" || ext == ".tiff" || ext == ".bmp";
}

std::vector<fs::path> list_rasters(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw std::runtime_error("not a directory: " + dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && is_raster(e.path())) {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

// Files of `b` matched to `a` by stem; a missing partner is an error.
std::vector<std::pair<fs::path, fs::path>> pair_by_stem(const fs::path& a, const fs::path& b) {
    std::map<std::string, fs::path> others;
    for (const auto& p : list_rasters(b)) {
        others[p.stem().string()] = p;
    }
    std::vector<std::pair<fs::path, fs::path>> pairs;
    for (const auto& p : list_rasters(a)) {
        const auto it = others.find(p.stem().string());
        if (it == others.end()) {
            throw std::runtime_error("no counterpart for " + p.filename().string() + " in " + b.string());
        }
        pairs.emplace_back(p, it->second);
    }
    if (pairs.empty()) {
        throw std::runtime_error("no images found in " + a.string());
    }
    return pairs;
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
}

std::uint64_t draw_seed() {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

// ---- prepare

struct PrepareArgs {
    fs::path images, masks, out;
    PatchParams params;
    double train_frac = 0.75;
    std::uint64_t seed = 0;
};

int run_prepare(const PrepareArgs& a, std::ostream& out) {
    fs::create_directories(a.out / "images");
    fs::create_directories(a.out / "masks");
    std::vector<ManifestEntry> entries;
    std::size_t grid = 0;
    std::size_t filtered = 0;
    for (const auto& [image_path, mask_path] : pair_by_stem(a.images, a.masks)) {
        const PatchExtraction ex = extract_patches(read_rgb(image_path), read_gray(mask_path), a.params);
        grid += ex.grid_positions;
        filtered += ex.filtered;
        for (const auto& patch : ex.patches) {
            const std::string name =
                image_path.stem().string() + "_" + std::to_string(patch.x) + "_" + std::to_string(patch.y) + ".png";
            write_png(a.out / "images" / name, patch.image);
            write_png(a.out / "masks" / name, patch.mask);
            entries.push_back({a.out / "images" / name, a.out / "masks" / name, Split::Train});
        }
    }
    if (entries.empty()) {
        throw std::runtime_error("no patches survived extraction");
    }
    const DatasetManifest manifest = split_dataset(std::move(entries), a.train_frac, a.seed, a.params);
    save_manifest(a.out / "manifest.json", manifest);
    out << nlohmann::json{{"manifest", (a.out / "manifest.json").string()},
                          {"grid_positions", grid},
                          {"filtered", filtered},
                          {"kept", manifest.entries.size()},
                          {"train", manifest.of(Split::Train).size()},
                          {"test", manifest.of(Split::Test).size()}}
               .dump(2)
        << '\n';
    return kExitOk;
}

// ---- train

struct TrainArgs {
    fs::path data_dir, out_dir;
    TrainConfig config;
    std::array<double, 6> lambdas{100.0, 100.0, 100.0, 1.0, 1.0, 1.0};
    bool deterministic_log = false;
    bool init_only = false;
};

fs::path manifest_in(const fs::path& data) {
    return fs::is_directory(data) ? data / "manifest.json" : data;
}

int run_train(TrainArgs a, std::ostream& out) {
    auto& w = a.config.weights;
    w = {a.lambdas[0], a.lambdas[1], a.lambdas[2], a.lambdas[3], a.lambdas[4], a.lambdas[5]};
    a.config.record_wall_time = !a.deterministic_log;
    a.config.validate();

    if (a.init_only) {
        const TrainingState state(a.config);
        const fs::path path = a.out_dir / "checkpoint_000000.pt";
        CheckpointManifest manifest;
        manifest.id = "init-seed" + std::to_string(a.config.rng_seed);
        manifest.weights = a.config.weights;
        manifest.seed = a.config.rng_seed;
        Generator g = state.generator;
        save_checkpoint(path, manifest, g, &state.critics);
        out << nlohmann::json{{"checkpoints", {path.string()}}}.dump(2) << '\n';
        return kExitOk;
    }

    const DatasetManifest manifest = load_manifest(manifest_in(a.data_dir));
    const std::vector<TrainingSample> samples = load_split(manifest, Split::Train);
    const TrainingRun run = run_training(a.config, samples, a.out_dir);
    nlohmann::json ckpts = nlohmann::json::array();
    for (const auto& p : run.checkpoints) {
        ckpts.push_back(p.string());
    }
    out << nlohmann::json{{"checkpoints", ckpts}, {"metrics_log", run.metrics_log.string()}, {"samples", samples.size()}}
               .dump(2)
        << '\n';
    return kExitOk;
}

// ---- generate

struct GenerateArgs {
    fs::path layout, checkpoint, out;
    std::optional<std::uint64_t> seed;
};

int run_generate(const GenerateArgs& a, std::ostream& out) {
    const GlandLayout layout = layout_from_json(read_json(a.layout));
    const ValidationReport report = validate_layout(layout);
    if (!report.ok()) {
        throw std::runtime_error("invalid layout: " + report_to_json(report).dump());
    }
    const Synthesizer synth(a.checkpoint);
    const GeneratedPair pair = synth.generate(layout, a.seed.value_or(draw_seed()));

    fs::create_directories(a.out);
    write_png(a.out / "image.png", image_to_mat(pair.image));
    write_png(a.out / "mask.png", mask_to_mat(pair.component_mask));
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : pair.boxes) {
        boxes.push_back(bbox_to_json(b));
    }
    const nlohmann::json meta{{"layout", layout_to_json(layout)},
                              {"bboxes", boxes},
                              {"seed_used", pair.seed},
                              {"checkpoint_id", pair.checkpoint_id}};
    write_json(a.out / "meta.json", meta);
    out << meta.dump(2) << '\n';
    return kExitOk;
}

// ---- eval

int run_eval_fid(const fs::path& real_dir, const fs::path& gen_dir, const std::string& extractor_name,
                 std::ostream& out) {
    const auto extractor = make_extractor(extractor_name);
    const auto load = [&](const fs::path& dir) {
        std::vector<torch::Tensor> images;
        for (const auto& p : list_rasters(dir)) {
            images.push_back(image_from_mat(read_rgb(p)));
        }
        if (images.empty()) {
            throw std::runtime_error("no images in " + dir.string());
        }
        return extractor->extract(images);
    };
    const FeatureMatrix real = load(real_dir);
    const FeatureMatrix gen = load(gen_dir);
    out << nlohmann::json{{"fid", fid(real, gen)},
                          {"n_real", real.rows()},
                          {"n_gen", gen.rows()},
                          {"extractor", extractor->name()}}
               .dump(2)
        << '\n';
    return kExitOk;
}

int run_eval_dice(const fs::path& pred_dir, const fs::path& truth_dir, std::ostream& out) {
    std::vector<double> scores;
    nlohmann::json per_file = nlohmann::json::object();
    for (const auto& [pred, truth] : pair_by_stem(pred_dir, truth_dir)) {
        const double d = dice(mask_from_mat(read_gray(pred)), mask_from_mat(read_gray(truth)));
        per_file[pred.filename().string()] = d;
        scores.push_back(d);
    }
    double mean = 0.0;
    for (double s : scores) {
        mean += s;
    }
    mean /= static_cast<double>(scores.size());
    double var = 0.0;
    for (double s : scores) {
        var += (s - mean) * (s - mean);
    }
    out << nlohmann::json{{"mean", mean},
                          {"std", std::sqrt(var / static_cast<double>(scores.size()))},
                          {"n", scores.size()},
                          {"per_file", per_file}}
               .dump(2)
        << '\n';
    return kExitOk;
}

// Glands of a real mask as a layout, largest first when there are too many.
GlandLayout layout_from_mask(const torch::Tensor& mask, int canvas) {
    GlandTargets targets = derive_individual_gt_masks(mask);
    std::sort(targets.boxes.begin(), targets.boxes.end(),
              [](const BoundingBox& a, const BoundingBox& b) { return a.area() > b.area(); });
    if (targets.boxes.size() > kMaxGlands) {
        targets.boxes.resize(kMaxGlands);
    }
    GlandLayout layout;
    layout.canvas_size = canvas;
    for (const auto& b : targets.boxes) {
        layout.glands.push_back(spec_from_bbox(b));
    }
    return layout;
}

int run_eval_seg_assess(const fs::path& checkpoint, const fs::path& manifest_path, const std::string& segmenter_name,
                        std::uint64_t seed, std::ostream& out) {
    if (segmenter_name != "otsu") {
        throw std::runtime_error("unknown segmenter '" + segmenter_name + "' (available: otsu)");
    }
    const Segmenter segmenter = otsu_segment;
    const DatasetManifest manifest = load_manifest(manifest_in(manifest_path));
    const Synthesizer synth(checkpoint);

    std::vector<ImageMaskPair> real_pairs;
    std::vector<ImageMaskPair> gen_pairs;
    std::size_t skipped = 0;
    std::uint64_t k = 0;
    for (const auto& entry : manifest.of(Split::Test)) {
        const torch::Tensor image = image_from_mat(read_rgb(entry.image));
        const torch::Tensor mask = mask_from_mat(read_gray(entry.mask));
        real_pairs.push_back({image, mask});
        const GlandLayout layout = layout_from_mask(mask, static_cast<int>(mask.size(-1)));
        if (layout.glands.empty()) {
            ++skipped;
            continue;
        }
        const GeneratedPair pair = synth.generate(layout, seed + k++);
        gen_pairs.push_back({pair.image, pair.component_mask.ge(0.5).to(torch::kFloat32)});
    }
    if (real_pairs.empty()) {
        throw std::runtime_error("manifest has no test entries");
    }
    out << nlohmann::json{{"segmenter", segmenter_name},
                          {"checkpoint_id", synth.checkpoint_id()},
                          {"real", assessment_to_json(segmentation_assessment(segmenter, real_pairs))},
                          {"generated", assessment_to_json(segmentation_assessment(segmenter, gen_pairs))},
                          {"layouts_without_glands", skipped}}
               .dump(2)
        << '\n';
    return kExitOk;
}

// ---- serve

httplib::Server* g_server = nullptr;

extern "C" void stop_server(int) {
    if (g_server) {
        g_server->stop();
    }
}

int run_serve(const std::string& checkpoint, const std::string& host, int port, std::ostream& out,
              std::ostream& err) {
    GenerationService service;
    httplib::Server server;
    register_routes(server, service);
    if (!server.bind_to_port(host, port)) {
        throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    }
    std::thread loader;
    if (!checkpoint.empty()) {
        loader = std::thread([&service, &err, checkpoint] {
            try {
                service.load(fs::path(checkpoint));
            } catch (const std::exception& e) {
                err << "checkpoint load failed: " << e.what() << std::endl;
            }
        });
    }
    g_server = &server;
    std::signal(SIGINT, stop_server);
    std::signal(SIGTERM, stop_server);
    out << "listening on " << host << ":" << port << std::endl;
    server.listen_after_bind();
    g_server = nullptr;
    if (loader.joinable()) {
        loader.join();
    }
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Layout-conditioned synthesis of gland images and masks", "glandsynth"};
    app.require_subcommand(1);

    PrepareArgs prep;
    auto* prepare = app.add_subcommand("prepare", "Cut image/mask pairs into patches and write a split manifest");
    prepare->add_option("--images", prep.images, "Directory of RGB images")->required()->check(CLI::ExistingDirectory);
    prepare->add_option("--masks", prep.masks, "Directory of binary masks, matched by file stem")
        ->required()
        ->check(CLI::ExistingDirectory);
    prepare->add_option("--out", prep.out, "Output directory")->required();
    prepare->add_option("--patch", prep.params.patch_size, "Tile size")->capture_default_str();
    prepare->add_option("--size", prep.params.out_size, "Resized patch size")->capture_default_str();
    prepare->add_option("--stride", prep.params.stride, "Grid stride")->capture_default_str();
    prepare->add_option("--min-foreground", prep.params.min_foreground, "Drop tiles below this mask fraction")
        ->capture_default_str();
    prepare->add_option("--train-frac", prep.train_frac, "Fraction assigned to train")->capture_default_str();
    prepare->add_option("--seed", prep.seed, "Split seed")->capture_default_str();

    TrainArgs tr;
    tr.config.checkpoint_interval = 1000;
    auto* train = app.add_subcommand("train", "Train the generator and critics");
    auto* data_opt = train->add_option("--data-dir", tr.data_dir, "Prepared directory or manifest file");
    train->add_option("--out-dir", tr.out_dir, "Checkpoint and log directory")->required();
    train->add_option("--iters", tr.config.total_iterations, "Iterations")->capture_default_str();
    train->add_option("--lr", tr.config.learning_rate, "Adam learning rate")->capture_default_str();
    train->add_option("--seed", tr.config.rng_seed, "Run seed")->capture_default_str();
    train->add_option("--ckpt-every", tr.config.checkpoint_interval, "Checkpoint interval")->capture_default_str();
    for (std::size_t i = 0; i < tr.lambdas.size(); ++i) {
        train->add_option("--lambda" + std::to_string(i + 1), tr.lambdas[i], "Loss weight")->capture_default_str();
    }
    train->add_flag("--deterministic-log", tr.deterministic_log, "Write wall_ms as 0");
    train->add_flag("--init-only", tr.init_only, "Write a randomly initialised checkpoint and exit");

    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate", "Synthesize an image/mask pair from a layout");
    generate->add_option("--layout", gen.layout, "Layout JSON")->required()->check(CLI::ExistingFile);
    generate->add_option("--checkpoint", gen.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    generate->add_option("--seed", gen.seed, "Noise seed (drawn when absent)");
    generate->add_option("--out", gen.out, "Output directory")->required();

    auto* eval = app.add_subcommand("eval", "Evaluation reports");
    eval->require_subcommand(1);
    fs::path fid_real, fid_gen;
    std::string extractor = "random-projection";
    auto* efid = eval->add_subcommand("fid", "Frechet distance between two image directories");
    efid->add_option("--real", fid_real)->required()->check(CLI::ExistingDirectory);
    efid->add_option("--gen", fid_gen)->required()->check(CLI::ExistingDirectory);
    efid->add_option("--extractor", extractor, "random-projection or torchscript:PATH")->capture_default_str();
    fs::path dice_pred, dice_truth;
    auto* edice = eval->add_subcommand("dice", "Dice between mask directories matched by file stem");
    edice->add_option("--pred", dice_pred)->required()->check(CLI::ExistingDirectory);
    edice->add_option("--truth", dice_truth)->required()->check(CLI::ExistingDirectory);
    fs::path sa_checkpoint, sa_manifest;
    std::string segmenter = "otsu";
    std::uint64_t sa_seed = 0;
    auto* eseg = eval->add_subcommand("seg-assess", "Segmenter Dice on real and generated test pairs");
    eseg->add_option("--checkpoint", sa_checkpoint)->required()->check(CLI::ExistingFile);
    eseg->add_option("--manifest", sa_manifest)->required()->check(CLI::ExistingPath);
    eseg->add_option("--segmenter", segmenter)->capture_default_str();
    eseg->add_option("--seed", sa_seed, "Seed of the first generated pair")->capture_default_str();

    std::string serve_checkpoint;
    std::string host = "127.0.0.1";
    int port = 8080;
    auto* serve = app.add_subcommand("serve", "HTTP generation service");
    serve->add_option("--checkpoint", serve_checkpoint, "Checkpoint to load")->envname("GLANDSYNTH_CHECKPOINT");
    serve->add_option("--port", port)->envname("GLANDSYNTH_PORT")->check(CLI::Range(1, 65535))->capture_default_str();
    serve->add_option("--host", host)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        err << app.help();
        return kExitUsage;
    }

    try {
        if (prepare->parsed()) {
            return run_prepare(prep, out);
        }
        if (train->parsed()) {
            if (!tr.init_only && data_opt->count() == 0) {
                err << "train: --data-dir is required unless --init-only is given\n" << train->help();
                return kExitUsage;
            }
            return run_train(tr, out);
        }
        if (generate->parsed()) {
            return run_generate(gen, out);
        }
        if (efid->parsed()) {
            return run_eval_fid(fid_real, fid_gen, extractor, out);
        }
        if (edice->parsed()) {
            return run_eval_dice(dice_pred, dice_truth, out);
        }
        if (eseg->parsed()) {
            return run_eval_seg_assess(sa_checkpoint, sa_manifest, segmenter, sa_seed, out);
        }
        if (serve->parsed()) {
            return run_serve(serve_checkpoint, host, port, out, err);
        }
    } catch (const c10::Error& e) {
        err << "error: " << e.what_without_backtrace() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace glandsynth
