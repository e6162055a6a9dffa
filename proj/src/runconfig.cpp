#include "gsedd/runconfig.hpp"

#include <sstream>

#include <json.hpp>

#include "gsedd/io.hpp"

namespace gsedd {

namespace {

using nlohmann::json;

[[noreturn]] void unknown_key(const std::string& section, const std::string& key) {
    throw std::invalid_argument("config: unknown key '" + key + "' in section '" + section + "'");
}

void parse_sim(const json& j, SimConfig& c) {
    for (const auto& [key, value] : j.items()) {
        if (key == "v_families") c.v_families = value.get<int>();
        else if (key == "v_alleles") c.v_alleles = value.get<int>();
        else if (key == "v_length") c.v_length = value.get<int>();
        else if (key == "v_hotspots") c.v_hotspots = value.get<int>();
        else if (key == "d_segments") c.d_segments = value.get<int>();
        else if (key == "d_length") c.d_length = value.get<int>();
        else if (key == "j_segments") c.j_segments = value.get<int>();
        else if (key == "j_length") c.j_length = value.get<int>();
        else if (key == "j_hotspots") c.j_hotspots = value.get<int>();
        else if (key == "hotspot_rate") c.hotspot_rate = value.get<double>();
        else if (key == "background_rate") c.background_rate = value.get<double>();
        else if (key == "spectrum_concentration") c.spectrum_concentration = value.get<double>();
        else if (key == "allele_mass") c.allele_mass = value.get<double>();
        else if (key == "selection_strength") c.selection_strength = value.get<double>();
        else if (key == "train_size") c.train_size = value.get<int>();
        else if (key == "val_size") c.val_size = value.get<int>();
        else if (key == "test_size") c.test_size = value.get<int>();
        else if (key == "identity_threshold") c.identity_threshold = value.get<double>();
        else unknown_key("sim", key);
    }
}

void parse_model(const json& j, ModelConfig& c) {
    bool time_set = false;
    for (const auto& [key, value] : j.items()) {
        if (key == "layers") c.layers = value.get<int>();
        else if (key == "embed_dim") c.embed_dim = value.get<int>();
        else if (key == "heads") c.heads = value.get<int>();
        else if (key == "feedforward_dim") c.feedforward_dim = value.get<int>();
        else if (key == "max_length") c.max_length = value.get<int>();
        else if (key == "alphabet_size") c.alphabet_size = value.get<int>();
        else if (key == "variant") c.variant = variant_from_name(value.get<std::string>());
        else if (key == "time_conditioned") { c.time_conditioned = value.get<bool>(); time_set = true; }
        else unknown_key("model", key);
    }
    if (!time_set) c.time_conditioned = c.variant == KernelVariant::uniform;
}

void parse_train(const json& j, TrainConfig& c) {
    for (const auto& [key, value] : j.items()) {
        if (key == "batch_size") c.batch_size = value.get<int>();
        else if (key == "learning_rate") c.learning_rate = value.get<double>();
        else if (key == "warmup_steps") c.warmup_steps = value.get<int>();
        else if (key == "max_steps") c.max_steps = value.get<int>();
        else if (key == "grad_clip_norm") c.grad_clip_norm = value.get<double>();
        else if (key == "ema_decay") c.ema_decay = value.get<double>();
        else if (key == "eval_every") c.eval_every = value.get<int>();
        else unknown_key("train", key);
    }
}

void parse_sampler(const json& j, SamplerConfig& c) {
    for (const auto& [key, value] : j.items()) {
        if (key == "steps") c.steps = value.get<int>();
        else if (key == "decoder") c.decoder = decoder_from_name(value.get<std::string>());
        else if (key == "gamma") c.gamma = value.get<double>();
        else unknown_key("sampler", key);
    }
}

void parse_elbo(const json& j, ElboConfig& c) {
    for (const auto& [key, value] : j.items()) {
        if (key == "quadrature_steps") c.quadrature_steps = value.get<int>();
        else if (key == "monte_carlo_samples") c.monte_carlo_samples = value.get<int>();
        else unknown_key("elbo", key);
    }
}

void parse_paths(const json& j, RunConfig& c) {
    for (const auto& [key, value] : j.items()) {
        if (key == "data_dir") c.data_dir = value.get<std::string>();
        else if (key == "scale_path") c.scale_path = value.get<std::string>();
        else unknown_key("paths", key);
    }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& err) {
        throw std::invalid_argument(std::string("config: parse error: ") + err.what());
    }
    RunConfig config;
    for (const auto& [key, value] : j.items()) {
        if (key == "seed") config.seed = value.get<uint64_t>();
        else if (key == "sim") parse_sim(value, config.sim);
        else if (key == "model") parse_model(value, config.model);
        else if (key == "train") parse_train(value, config.train);
        else if (key == "sampler") parse_sampler(value, config.sampler);
        else if (key == "elbo") parse_elbo(value, config.elbo);
        else if (key == "paths") parse_paths(value, config);
        else unknown_key("(top level)", key);
    }
    config.sim.seed = config.seed;
    config.model.validate();
    config.train.validate();
    config.sampler.validate();
    config.elbo.validate();
    config.sim.validate();
    return config;
}

RunConfig load_run_config(const std::string& path) {
    return parse_run_config(read_file(path));
}

std::string run_config_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["sim"] = {{"v_families", c.sim.v_families},
                {"v_alleles", c.sim.v_alleles},
                {"v_length", c.sim.v_length},
                {"v_hotspots", c.sim.v_hotspots},
                {"d_segments", c.sim.d_segments},
                {"d_length", c.sim.d_length},
                {"j_segments", c.sim.j_segments},
                {"j_length", c.sim.j_length},
                {"j_hotspots", c.sim.j_hotspots},
                {"hotspot_rate", c.sim.hotspot_rate},
                {"background_rate", c.sim.background_rate},
                {"spectrum_concentration", c.sim.spectrum_concentration},
                {"allele_mass", c.sim.allele_mass},
                {"selection_strength", c.sim.selection_strength},
                {"train_size", c.sim.train_size},
                {"val_size", c.sim.val_size},
                {"test_size", c.sim.test_size},
                {"identity_threshold", c.sim.identity_threshold}};
    j["model"] = {{"layers", c.model.layers},
                  {"embed_dim", c.model.embed_dim},
                  {"heads", c.model.heads},
                  {"feedforward_dim", c.model.feedforward_dim},
                  {"max_length", c.model.max_length},
                  {"alphabet_size", c.model.alphabet_size},
                  {"variant", variant_name(c.model.variant)},
                  {"time_conditioned", c.model.time_conditioned}};
    j["train"] = {{"batch_size", c.train.batch_size},
                  {"learning_rate", c.train.learning_rate},
                  {"warmup_steps", c.train.warmup_steps},
                  {"max_steps", c.train.max_steps},
                  {"grad_clip_norm", c.train.grad_clip_norm},
                  {"ema_decay", c.train.ema_decay},
                  {"eval_every", c.train.eval_every}};
    j["sampler"] = {{"steps", c.sampler.steps},
                    {"decoder", decoder_name(c.sampler.decoder)},
                    {"gamma", c.sampler.gamma}};
    j["elbo"] = {{"quadrature_steps", c.elbo.quadrature_steps},
                 {"monte_carlo_samples", c.elbo.monte_carlo_samples}};
    j["paths"] = {{"data_dir", c.data_dir}, {"scale_path", c.scale_path}};
    return j.dump(2) + "\n";
}

std::string config_hash(const RunConfig& config) {
    const std::string text = run_config_json(config);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : text) {
        h ^= static_cast<uint8_t>(ch);
        h *= 0x100000001b3ULL;
    }
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
}

}  // namespace gsedd
