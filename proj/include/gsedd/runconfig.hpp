#ifndef GSEDD_RUNCONFIG_HPP
#define GSEDD_RUNCONFIG_HPP

#include <cstdint>
#include <string>

#include "gsedd/eval.hpp"
#include "gsedd/model.hpp"
#include "gsedd/repertoire.hpp"
#include "gsedd/sampler.hpp"
#include "gsedd/train.hpp"

namespace gsedd {

/// One structured document with sections mirroring the module names; unknown
/// keys are rejected with the offending key named.
struct RunConfig {
    uint64_t seed = 1;
    SimConfig sim;
    ModelConfig model;
    TrainConfig train;
    SamplerConfig sampler;
    ElboConfig elbo;
    std::string data_dir;
    std::string scale_path = "data/hydropathy_kd.tsv";
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

/// Canonical serialization of the effective config (sorted keys).
std::string run_config_json(const RunConfig& config);

/// FNV-1a over the canonical serialization.
std::string config_hash(const RunConfig& config);

}  // namespace gsedd

#endif
