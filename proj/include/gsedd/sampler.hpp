#ifndef GSEDD_SAMPLER_HPP
#define GSEDD_SAMPLER_HPP

#include <optional>

#include "gsedd/guidance.hpp"
#include "gsedd/model.hpp"
#include "gsedd/noise.hpp"
#include "gsedd/rng.hpp"
#include "gsedd/seq.hpp"
#include "gsedd/types.hpp"

namespace gsedd {

enum class DecoderKind { euler, tweedie };

DecoderKind decoder_from_name(const std::string& name);
const char* decoder_name(DecoderKind kind);

struct SamplerConfig {
    int steps = 128;
    DecoderKind decoder = DecoderKind::tweedie;
    double gamma = 0.0;
    uint64_t seed = 0;

    void validate() const;
};

struct SampleStats {
    int64_t classifier_evals = 0;  // logical classifier forward passes
    int64_t clamp_events = 0;      // euler stay-probability clamps
};

/// Fully noised start state: uniform variant draws i.i.d. support tokens,
/// mask variant is all-mask, germline variant is the germline itself.
TokenSequence init_noised_state(const TransitionKernel& kernel, std::optional<int> length,
                                Rng& rng);

/// Per-position Tweedie posterior over tokens; score_row holds true score
/// ratios with the current token at 1.
std::vector<double> tweedie_position_dist(const std::vector<double>& score_row,
                                          const TransitionKernel& kernel, int xt_token,
                                          int position, double dsigma);

TokenSequence tweedie_step(const ScoreTable& score, const TransitionKernel& kernel,
                           const TokenSequence& x_t, double t, double dt,
                           const NoiseSchedule& schedule, Rng& rng);

std::vector<double> euler_position_dist(const std::vector<double>& score_row,
                                        const TransitionKernel& kernel, int xt_token,
                                        int position, double rate_scale, double dt,
                                        SampleStats* stats);

TokenSequence euler_step(const ScoreTable& score, const TransitionKernel& kernel,
                         const TokenSequence& x_t, double t, double dt,
                         const NoiseSchedule& schedule, Rng& rng, SampleStats* stats);

/// Runs steps decoder iterations from t=1 to t=0 on the uniform grid with EMA
/// weights; a supplied classifier with gamma > 0 guides every step.
TokenSequence sample(const ScoreModel& model, const TransitionKernel& kernel,
                     const SamplerConfig& config, std::optional<int> length,
                     const Classifier* classifier, const NoiseSchedule& schedule,
                     SampleStats* stats = nullptr);

/// The true score table at (x_t, t): network output with the analytic time
/// factor applied to absorbing variants.
ScoreTable model_score(const ScoreModel& model, const TransitionKernel& kernel,
                       const TokenSequence& x_t, double t, const NoiseSchedule& schedule,
                       bool use_ema = true);

}  // namespace gsedd

#endif
