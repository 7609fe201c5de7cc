#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "glandsynth/checkpoint.hpp"
#include "glandsynth/fused_adam.hpp"
#include "glandsynth/synthesis.hpp"
#include "glandsynth/trainer.hpp"
#include "synthetic.hpp"

using namespace glandsynth;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("glandsynth_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<torch::Tensor> snapshot(const std::vector<torch::Tensor>& params) {
    std::vector<torch::Tensor> out;
    for (const auto& p : params) {
        out.push_back(p.detach().clone());
    }
    return out;
}

bool unchanged(const std::vector<torch::Tensor>& params, const std::vector<torch::Tensor>& before) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!torch::equal(params[i], before[i])) {
            return false;
        }
    }
    return true;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const GlandLayout kLayout{256, {{60, 70, 40, 30, {}}, {150, 120, 50, 60, {}}, {200, 210, 30, 30, {}}}};

}  // namespace

TEST(FusedAdam, MatchesReferenceAdam) {
    torch::manual_seed(1);
    const torch::Tensor target = torch::randn({5, 4});
    torch::Tensor a = torch::randn({5, 4}).requires_grad_(true);
    torch::Tensor b = a.detach().clone().requires_grad_(true);
    FusedAdam fused({a}, {1e-2, 0.5, 0.999, 1e-8});
    torch::optim::Adam reference({b}, torch::optim::AdamOptions(1e-2).betas({0.5, 0.999}).eps(1e-8));
    for (int i = 0; i < 20; ++i) {
        fused.zero_grad();
        (a - target).pow(3).abs().sum().backward();
        fused.step();
        reference.zero_grad();
        (b - target).pow(3).abs().sum().backward();
        reference.step();
    }
    EXPECT_EQ(fused.steps_taken(), 20);
    EXPECT_LT((a - b).abs().max().item<float>(), 1e-5f);
}

TEST(FusedAdam, SkipsParametersWithoutGradient) {
    torch::Tensor a = torch::ones({3}).requires_grad_(true);
    torch::Tensor b = torch::ones({3}).requires_grad_(true);
    FusedAdam opt({a, b}, {});
    a.sum().backward();
    opt.step();
    EXPECT_TRUE(torch::equal(b, torch::ones({3})));
    EXPECT_FALSE(torch::equal(a, torch::ones({3})));
    EXPECT_THROW(FusedAdam({a}, {0.0}), std::invalid_argument);
}

TEST(FusedAdam, StateRoundTrips) {
    torch::Tensor a = torch::randn({4}).requires_grad_(true);
    FusedAdam opt({a}, {});
    for (int i = 0; i < 3; ++i) {
        opt.zero_grad();
        a.pow(2).sum().backward();
        opt.step();
    }
    torch::serialize::OutputArchive out;
    opt.save(out);
    std::ostringstream bytes;
    out.save_to(bytes);

    torch::Tensor b = a.detach().clone().requires_grad_(true);
    FusedAdam restored({b}, {});
    torch::serialize::InputArchive in;
    std::istringstream src(bytes.str());
    in.load_from(src);
    restored.load(in);
    EXPECT_EQ(restored.steps_taken(), 3);
    for (auto* o : {&opt, &restored}) {
        o->zero_grad();
    }
    a.pow(2).sum().backward();
    b.pow(2).sum().backward();
    opt.step();
    restored.step();
    EXPECT_TRUE(torch::equal(a, b));
}

TEST(Checkpoint, RoundTripsGeneratorAndManifest) {
    const fs::path dir = scratch("ckpt");
    torch::manual_seed(9);
    Generator g;
    Critics critics;
    CheckpointManifest m;
    m.id = "unit";
    m.iteration = 42;
    m.seed = 7;
    m.weights.adv_gland = 0.5;
    save_checkpoint(dir / "a.pt", m, g, &critics);

    const CheckpointManifest read = read_manifest(dir / "a.pt");
    EXPECT_EQ(read.id, "unit");
    EXPECT_EQ(read.iteration, 42);
    EXPECT_EQ(read.seed, 7u);
    EXPECT_EQ(read.weights, m.weights);
    EXPECT_TRUE(read.has_critics);

    LoadedGenerator loaded = load_generator(dir / "a.pt");
    const auto original = g->parameters();
    const auto back = loaded.generator->parameters();
    ASSERT_EQ(original.size(), back.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_TRUE(torch::equal(original[i], back[i]));
    }
    Critics other;
    load_critics(dir / "a.pt", other);
    EXPECT_TRUE(torch::equal(other.gland->score->weight, critics.gland->score->weight));
}

TEST(Checkpoint, RejectsMismatchAndMissing) {
    const fs::path dir = scratch("ckpt_bad");
    Generator g;
    save_checkpoint(dir / "g.pt", {}, g);
    ModelDims other;
    other.noise = 8;
    EXPECT_THROW(load_generator(dir / "g.pt", other), std::runtime_error);
    Critics critics;
    EXPECT_THROW(load_critics(dir / "g.pt", critics), std::runtime_error);
    EXPECT_THROW(load_generator(dir / "missing.pt"), std::runtime_error);
    std::ofstream(dir / "junk.pt") << "not an archive";
    EXPECT_THROW(load_generator(dir / "junk.pt"), std::runtime_error);
}

TEST(Synthesis, DeterministicPerSeed) {
    torch::manual_seed(2);
    const Synthesizer synth(Generator{}, "unit");
    const GeneratedPair a = synth.generate(kLayout, 11);
    const GeneratedPair b = synth.generate(kLayout, 11);
    const GeneratedPair c = synth.generate(kLayout, 12);
    EXPECT_TRUE(torch::equal(a.image, b.image));
    EXPECT_TRUE(torch::equal(a.component_mask, b.component_mask));
    EXPECT_FALSE(torch::equal(a.image, c.image));
    EXPECT_EQ(a.boxes.size(), 3u);
    EXPECT_EQ(a.gland_masks.size(0), 3);
    EXPECT_EQ(a.image.sizes(), (torch::IntArrayRef{3, 256, 256}));
    EXPECT_EQ(a.component_mask.sizes(), (torch::IntArrayRef{1, 256, 256}));
    EXPECT_EQ(a.checkpoint_id, "unit");
}

TEST(Synthesis, PerGlandSeedsOverrideTheStream) {
    GlandLayout layout = kLayout;
    layout.glands[1].seed = 99;
    const torch::Tensor x = draw_gland_noise(layout, 1, 6);
    const torch::Tensor y = draw_gland_noise(layout, 2, 6);
    EXPECT_TRUE(torch::equal(x[1], y[1]));
    EXPECT_FALSE(torch::equal(x[0], y[0]));
    // Unseeded glands draw consecutively from the shared stream.
    const torch::Tensor plain = draw_gland_noise(GlandLayout{256, {kLayout.glands[0], kLayout.glands[2]}}, 1, 6);
    EXPECT_TRUE(torch::equal(plain[0], x[0]));
    EXPECT_TRUE(torch::equal(plain[1], x[2]));
}

TEST(Synthesis, RejectsInvalidLayout) {
    Generator g;
    EXPECT_THROW(synthesize(g, GlandLayout{256, {{10, 10, 0, 5, {}}}}, 0), std::invalid_argument);
    EXPECT_THROW(synthesize(g, GlandLayout{128, {{10, 10, 5, 5, {}}}}, 0), std::invalid_argument);
}

TEST(Trainer, ConfigValidation) {
    TrainConfig c;
    c.batch_size = 2;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.learning_rate = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.total_iterations = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Trainer, GeneratorAndCriticUpdatesAreIsolated) {
    TrainConfig config;
    config.rng_seed = 3;
    TrainingState state(config);
    const TrainingSample sample = fixtures::rect_sample(5);
    const auto critic_params = state.critics.parameters();
    const auto generator_params = state.generator->parameters();

    const auto critics_before = snapshot(critic_params);
    const auto generator_before = snapshot(generator_params);
    const GeneratorStep step = generator_update(sample, state);
    EXPECT_TRUE(unchanged(critic_params, critics_before));
    EXPECT_FALSE(unchanged(generator_params, generator_before));

    const auto generator_mid = snapshot(generator_params);
    critic_updates(sample, step, state);
    EXPECT_TRUE(unchanged(generator_params, generator_mid));
    EXPECT_FALSE(unchanged(critic_params, critics_before));
    for (const auto& p : critic_params) {
        EXPECT_TRUE(p.requires_grad());
    }
}

TEST(Trainer, NonFiniteLossNamesTheComponent) {
    TrainingState state(TrainConfig{});
    TrainingSample sample = fixtures::rect_sample(6);
    sample.image[0][5][5] = std::numeric_limits<float>::quiet_NaN();
    try {
        train_step(sample, state);
        FAIL() << "expected a non-finite loss error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("img_rec"), std::string::npos) << e.what();
    }
}

TEST(Trainer, CheckpointsEveryIntervalAndLogsEveryStep) {
    const fs::path dir = scratch("run10");
    TrainConfig config;
    config.total_iterations = 10;
    config.checkpoint_interval = 5;
    const std::vector<TrainingSample> data{fixtures::rect_sample(1), fixtures::rect_sample(2)};
    std::int64_t calls = 0;
    const TrainingRun run = run_training(config, data, dir, [&](std::int64_t, const StepMetrics&) { ++calls; });
    ASSERT_EQ(run.checkpoints.size(), 2u);
    EXPECT_EQ(run.checkpoints[0].filename(), "checkpoint_000005.pt");
    EXPECT_EQ(run.checkpoints[1].filename(), "checkpoint_000010.pt");
    EXPECT_EQ(read_manifest(run.checkpoints[1]).iteration, 10);
    EXPECT_EQ(calls, 10);

    std::ifstream log(run.metrics_log);
    std::string line;
    std::int64_t n = 0;
    while (std::getline(log, line)) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_EQ(j.at("iter").get<std::int64_t>(), ++n);
        for (const char* key : {"img_rec", "mask_rec", "gland_rec", "adv_T", "adv_Z", "adv_G", "d_T", "d_Z", "d_G",
                                "wall_ms"}) {
            EXPECT_TRUE(j.contains(key)) << key;
        }
    }
    EXPECT_EQ(n, 10);
    EXPECT_THROW(run_training(config, {}, dir), std::invalid_argument);
}

TEST(Trainer, EqualSeedsGiveIdenticalLogs) {
    TrainConfig config;
    config.total_iterations = 3;
    config.checkpoint_interval = 0;
    config.rng_seed = 21;
    config.record_wall_time = false;
    const std::vector<TrainingSample> data{fixtures::rect_sample(1), fixtures::rect_sample(2)};
    const TrainingRun a = run_training(config, data, scratch("det_a"));
    const TrainingRun b = run_training(config, data, scratch("det_b"));
    EXPECT_EQ(read_file(a.metrics_log), read_file(b.metrics_log));
    ASSERT_EQ(a.checkpoints.size(), 1u);
    EXPECT_TRUE(torch::equal(load_generator(a.checkpoints[0]).generator->reducer->convs[0]->as<torch::nn::Conv2d>()->weight,
                             load_generator(b.checkpoints[0]).generator->reducer->convs[0]->as<torch::nn::Conv2d>()->weight));
}

TEST(Trainer, PureReconstructionDecreasesOnOneSample) {
    TrainConfig config;
    config.rng_seed = 4;
    config.weights.adv_mask = config.weights.adv_image = config.weights.adv_gland = 0.0;
    TrainingState state(config);
    const TrainingSample sample = fixtures::rect_sample(8);
    const auto objective = [&](const StepMetrics& m) { return composite_objective(m.generator, config.weights); };
    const double initial = objective(train_step(sample, state));
    double last = initial;
    for (int i = 1; i < 200; ++i) {
        last = objective(train_step(sample, state));
    }
    EXPECT_LT(last, initial);
}
