#ifndef GSEDD_TRAIN_HPP
#define GSEDD_TRAIN_HPP

#include <functional>
#include <string>
#include <vector>

#include "gsedd/model.hpp"
#include "gsedd/noise.hpp"
#include "gsedd/seq.hpp"
#include "gsedd/types.hpp"

namespace gsedd {

struct TrainConfig {
    int batch_size = 64;
    double learning_rate = 3e-4;
    int warmup_steps = 500;
    int max_steps = 5000;
    double grad_clip_norm = 2.0;
    double ema_decay = 0.999;
    uint64_t seed = 0;
    int eval_every = 250;

    /// Settings used at full scale: batch 256, lr 2e-4, clip 2, ema 0.9999.
    static TrainConfig paper_preset();
    void validate() const;
};

struct LossBreakdown {
    double total = 0.0;
    std::vector<double> per_position;
    int effective_tokens = 0;  // positions carrying any loss weight
};

/// Thrown when training hits a non-finite loss; carries diagnostics.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& message) : std::runtime_error(message) {}
};

TransitionKernel kernel_for_pair(KernelVariant variant, const Alphabet& alphabet,
                                 const GermlinePair& pair);

/// Visits every supervised loss entry: f(position, token, weight, ratio)
/// where weight = sigma'(t) * rate(token -> x_t at position) and ratio is the
/// closed-form marginal ratio p(y|x0)/p(x_t|x0).
void visit_dse_entries(const TransitionKernel& kernel, const TokenSequence& x0,
                       const TokenSequence& x_t, double t, const NoiseSchedule& schedule,
                       const std::function<void(int, int, double, double)>& f);

/// Denoising score entropy loss over a true score table (the analytic time
/// factor of absorbing kernels must already be applied).
LossBreakdown dse_loss(const ScoreTable& score, const TransitionKernel& kernel,
                       const GermlinePair& pair, const TokenSequence& x_t, double t,
                       const NoiseSchedule& schedule);

/// Same, also accumulating d(loss)/d(score entry) into dscore (d x n).
LossBreakdown dse_loss_grad(const ScoreTable& score, const TransitionKernel& kernel,
                            const GermlinePair& pair, const TokenSequence& x_t, double t,
                            const NoiseSchedule& schedule, Mat& dscore);

struct AdamState {
    std::vector<double> m, v;
    explicit AdamState(size_t size) : m(size, 0.0), v(size, 0.0) {}
};

struct StepDiagnostics {
    double loss = 0.0;            // batch mean of per-sequence totals
    double grad_norm = 0.0;       // pre-clip global L2 norm
    double post_clip_norm = 0.0;  // never exceeds grad_clip_norm
    double lr = 0.0;
};

/// One optimizer step: per-example time draw, forward noising, score, loss,
/// backprop, clipping, AdamW update and EMA blend. Deterministic given
/// (config.seed, model.step).
StepDiagnostics train_step(ScoreModel& model, AdamState& adam, KernelVariant variant,
                           const Alphabet& alphabet, const std::vector<GermlinePair>& batch,
                           const TrainConfig& config, const NoiseSchedule& schedule);

struct MetricsRow {
    int64_t step = 0;
    std::string split;
    double loss = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;
    bool has_grad_norm = false;
};

std::string metrics_csv(const std::vector<MetricsRow>& rows);

struct TrainResult {
    std::vector<MetricsRow> log;
};

/// Runs config.max_steps optimizer steps with uniformly resampled batches and
/// per-eval-interval train/validation records.
TrainResult train_loop(const TrainConfig& config, KernelVariant variant, const Alphabet& alphabet,
                       const std::vector<GermlinePair>& train_set,
                       const std::vector<GermlinePair>& val_set, ScoreModel& model,
                       const NoiseSchedule& schedule,
                       const std::function<void(const MetricsRow&)>& on_row = {});

/// Mean validation loss over (a capped number of) pairs with frozen time
/// draws, so successive evaluations are comparable.
double validation_loss(const ScoreModel& model, KernelVariant variant, const Alphabet& alphabet,
                       const std::vector<GermlinePair>& val_set, const TrainConfig& config,
                       const NoiseSchedule& schedule, int cap = 256);

}  // namespace gsedd

#endif
