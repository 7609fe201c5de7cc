#include "glandsynth/checkpoint.hpp"

#include <stdexcept>

#include <nlohmann/json.hpp>

namespace glandsynth {

nlohmann::json manifest_to_json(const CheckpointManifest& m) {
    return {
        {"id", m.id},
        {"N", m.dims.canvas},
        {"D", m.dims.latent},
        {"B", m.dims.mask},
        {"dim_z", m.dims.noise},
        {"iteration", m.iteration},
        {"seed", m.seed},
        {"has_critics", m.has_critics},
        {"lambdas",
         {m.weights.image_rec, m.weights.mask_rec, m.weights.gland_rec, m.weights.adv_mask, m.weights.adv_image,
          m.weights.adv_gland}},
    };
}

CheckpointManifest manifest_from_json(const nlohmann::json& j) {
    try {
        CheckpointManifest m;
        m.id = j.at("id").get<std::string>();
        m.dims.canvas = j.at("N").get<std::int64_t>();
        m.dims.latent = j.at("D").get<std::int64_t>();
        m.dims.mask = j.at("B").get<std::int64_t>();
        m.dims.noise = j.at("dim_z").get<std::int64_t>();
        m.iteration = j.at("iteration").get<std::int64_t>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.has_critics = j.at("has_critics").get<bool>();
        const auto& l = j.at("lambdas");
        if (!l.is_array() || l.size() != 6) {
            throw std::runtime_error("lambdas must hold six values");
        }
        m.weights = {l[0].get<double>(), l[1].get<double>(), l[2].get<double>(),
                     l[3].get<double>(), l[4].get<double>(), l[5].get<double>()};
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("malformed checkpoint manifest: ") + e.what());
    }
}

void save_checkpoint(const std::filesystem::path& path, CheckpointManifest manifest, Generator& generator,
                     const Critics* critics) {
    manifest.has_critics = critics != nullptr;
    torch::serialize::OutputArchive archive;
    archive.write("manifest", c10::IValue(manifest_to_json(manifest).dump()));

    const auto put = [&archive](const char* key, const torch::nn::Module& module) {
        torch::serialize::OutputArchive sub;
        module.save(sub);
        archive.write(key, sub);
    };
    put("embed", *generator->embed);
    put("mask_generator", *generator->mask_generator);
    put("reducer", *generator->reducer);
    put("encoder_decoder", *generator->encoder_decoder);
    if (critics) {
        put("critic_mask", *critics->mask);
        put("critic_image", *critics->image);
        put("critic_gland", *critics->gland);
    }
    try {
        if (path.has_parent_path()) {
            std::filesystem::create_directories(path.parent_path());
        }
        archive.save_to(path.string());
    } catch (const std::exception& e) {
        throw std::runtime_error("failed to write checkpoint " + path.string() + ": " + e.what());
    }
}

namespace {

torch::serialize::InputArchive open_archive(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) {
        throw std::runtime_error("checkpoint not found: " + path.string());
    }
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string());
    } catch (const std::exception& e) {
        throw std::runtime_error("cannot read checkpoint " + path.string() + ": " + e.what());
    }
    return archive;
}

CheckpointManifest manifest_of(torch::serialize::InputArchive& archive, const std::filesystem::path& path) {
    c10::IValue value;
    if (!archive.try_read("manifest", value) || !value.isString()) {
        throw std::runtime_error("checkpoint " + path.string() + " has no manifest");
    }
    return manifest_from_json(nlohmann::json::parse(value.toStringRef()));
}

void get(torch::serialize::InputArchive& archive, const char* key, torch::nn::Module& module) {
    torch::serialize::InputArchive sub;
    if (!archive.try_read(key, sub)) {
        throw std::runtime_error(std::string("checkpoint is missing '") + key + "'");
    }
    module.load(sub);
}

}  // namespace

CheckpointManifest read_manifest(const std::filesystem::path& path) {
    auto archive = open_archive(path);
    return manifest_of(archive, path);
}

LoadedGenerator load_generator(const std::filesystem::path& path, const ModelDims& expected) {
    auto archive = open_archive(path);
    CheckpointManifest manifest = manifest_of(archive, path);
    if (!(manifest.dims == expected)) {
        throw std::runtime_error("checkpoint " + path.string() + " was built for N=" + std::to_string(manifest.dims.canvas) +
                                 " D=" + std::to_string(manifest.dims.latent) + " B=" + std::to_string(manifest.dims.mask) +
                                 " dim(z)=" + std::to_string(manifest.dims.noise) + ", which does not match the model");
    }
    Generator generator(manifest.dims);
    get(archive, "embed", *generator->embed);
    get(archive, "mask_generator", *generator->mask_generator);
    get(archive, "reducer", *generator->reducer);
    get(archive, "encoder_decoder", *generator->encoder_decoder);
    return {std::move(manifest), std::move(generator)};
}

void load_critics(const std::filesystem::path& path, Critics& critics) {
    auto archive = open_archive(path);
    if (!manifest_of(archive, path).has_critics) {
        throw std::runtime_error("checkpoint " + path.string() + " holds no discriminator weights");
    }
    get(archive, "critic_mask", *critics.mask);
    get(archive, "critic_image", *critics.image);
    get(archive, "critic_gland", *critics.gland);
}

}  // namespace glandsynth
