#include "gsedd/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include "gsedd/rng.hpp"

namespace gsedd {

namespace {
constexpr double kTimeFloor = 1e-5;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr double kWeightDecay = 0.01;
}  // namespace

TrainConfig TrainConfig::paper_preset() {
    TrainConfig c;
    c.batch_size = 256;
    c.learning_rate = 2e-4;
    c.grad_clip_norm = 2.0;
    c.ema_decay = 0.9999;
    return c;
}

void TrainConfig::validate() const {
    if (batch_size < 1 || learning_rate < 0.0 || warmup_steps < 1 || max_steps < 0 ||
        grad_clip_norm <= 0.0 || eval_every < 1)
        throw std::invalid_argument("TrainConfig: fields must be positive");
    if (ema_decay <= 0.0 || ema_decay >= 1.0)
        throw std::invalid_argument("TrainConfig: ema_decay must be in (0,1)");
}

TransitionKernel kernel_for_pair(KernelVariant variant, const Alphabet& alphabet,
                                 const GermlinePair& pair) {
    switch (variant) {
        case KernelVariant::uniform: return TransitionKernel::uniform(alphabet);
        case KernelVariant::mask_absorbing: return TransitionKernel::mask_absorbing(alphabet);
        case KernelVariant::germline_absorbing:
            return TransitionKernel::germline_absorbing(alphabet, pair.germline);
    }
    throw std::logic_error("kernel_for_pair: bad variant");
}

void visit_dse_entries(const TransitionKernel& kernel, const TokenSequence& x0,
                       const TokenSequence& x_t, double t, const NoiseSchedule& schedule,
                       const std::function<void(int, int, double, double)>& f) {
    if (x0.size() != x_t.size())
        throw std::invalid_argument("visit_dse_entries: x0 and x_t lengths differ");
    const double sigma = schedule.total_noise(t);
    const double rate_scale = schedule.noise_rate(t);
    const int d = static_cast<int>(x0.size());
    for (int i = 0; i < d; ++i) {
        const int xt = x_t[static_cast<size_t>(i)];
        const int x0i = x0[static_cast<size_t>(i)];
        if (kernel.is_absorbing()) {
            const int g = kernel.target(i);
            if (xt != g && xt != x0i)
                throw std::invalid_argument("dse: x_t is unreachable under this kernel (position " +
                                            std::to_string(i) + ")");
            if (xt != g) continue;  // no token flows into a non-target state
            for (int y : kernel.support()) {
                if (y == xt) continue;
                f(i, y, rate_scale, marginal_ratio(kernel, x0i, xt, y, sigma, i));
            }
        } else {
            if (!kernel.in_support(xt))
                throw std::invalid_argument("dse: x_t outside uniform kernel support (position " +
                                            std::to_string(i) + ")");
            const double w = rate_scale / static_cast<double>(kernel.support_size());
            for (int y : kernel.support()) {
                if (y == xt) continue;
                f(i, y, w, marginal_ratio(kernel, x0i, xt, y, sigma, i));
            }
        }
    }
}

namespace {

LossBreakdown dse_loss_impl(const ScoreTable& score, const TransitionKernel& kernel,
                            const GermlinePair& pair, const TokenSequence& x_t, double t,
                            const NoiseSchedule& schedule, Mat* dscore) {
    if (score.size() != x_t.size())
        throw std::invalid_argument("dse_loss: score table and sequence shapes disagree");
    LossBreakdown out;
    out.per_position.assign(x_t.size(), 0.0);
    std::vector<char> touched(x_t.size(), 0);
    visit_dse_entries(kernel, pair.observed, x_t, t, schedule,
                      [&](int i, int y, double w, double a) {
                          const double s = score[static_cast<size_t>(i)][static_cast<size_t>(y)];
                          if (!(s > 0.0))
                              throw std::invalid_argument("dse_loss: non-positive score entry");
                          const double term = w * (a > 0.0 ? s - a * std::log(s) : s);
                          out.per_position[static_cast<size_t>(i)] += term;
                          touched[static_cast<size_t>(i)] = 1;
                          if (dscore) (*dscore)(i, y) += w * (1.0 - a / s);
                      });
    for (size_t i = 0; i < x_t.size(); ++i) {
        out.total += out.per_position[i];
        out.effective_tokens += touched[i];
    }
    return out;
}

}  // namespace

LossBreakdown dse_loss(const ScoreTable& score, const TransitionKernel& kernel,
                       const GermlinePair& pair, const TokenSequence& x_t, double t,
                       const NoiseSchedule& schedule) {
    return dse_loss_impl(score, kernel, pair, x_t, t, schedule, nullptr);
}

LossBreakdown dse_loss_grad(const ScoreTable& score, const TransitionKernel& kernel,
                            const GermlinePair& pair, const TokenSequence& x_t, double t,
                            const NoiseSchedule& schedule, Mat& dscore) {
    return dse_loss_impl(score, kernel, pair, x_t, t, schedule, &dscore);
}

namespace {

struct ExampleWork {
    double t = 0.0;
    TokenSequence x_t;
    double loss = 0.0;
};

// forward + loss + backward for one example, gradient accumulated into grad
double example_grad(const ScoreModel& model, KernelVariant variant, const Alphabet& alphabet,
                    const GermlinePair& pair, double t, const TokenSequence& x_t,
                    const NoiseSchedule& schedule, double inv_batch, ForwardTrace& trace,
                    double* grad, double* max_score_entry) {
    const TransitionKernel kernel = kernel_for_pair(variant, alphabet, pair);
    const std::optional<double> t_in =
        model.config.time_conditioned ? std::optional<double>(t) : std::nullopt;
    const Mat logits =
        score_forward_logits(model.config, model.layout, model.params.data(), x_t, t_in, trace);
    ScoreTable score = logits_to_score(logits, x_t);
    const double scale = analytic_score_scale(kernel, schedule.total_noise(t));
    for (size_t i = 0; i < score.size(); ++i)
        for (size_t y = 0; y < score[i].size(); ++y)
            if (static_cast<int>(y) != x_t[i]) score[i][y] *= scale;

    Mat dscore = Mat::Zero(logits.rows(), logits.cols());
    const LossBreakdown lb = dse_loss_grad(score, kernel, pair, x_t, t, schedule, dscore);

    for (const auto& row : score)
        for (double v : row) *max_score_entry = std::max(*max_score_entry, v);

    // chain rule through s = scale * exp(z); current-token entries carry none
    Mat dlogits(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i)
        for (Eigen::Index y = 0; y < logits.cols(); ++y)
            dlogits(i, y) = (static_cast<int>(y) == x_t[static_cast<size_t>(i)])
                                ? 0.0
                                : dscore(i, y) * score[static_cast<size_t>(i)][static_cast<size_t>(y)] * inv_batch;
    score_backward(model.config, model.layout, model.params.data(), trace, dlogits, grad);
    return lb.total;
}

}  // namespace

StepDiagnostics train_step(ScoreModel& model, AdamState& adam, KernelVariant variant,
                           const Alphabet& alphabet, const std::vector<GermlinePair>& batch,
                           const TrainConfig& config, const NoiseSchedule& schedule) {
    config.validate();
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    if (adam.m.size() != model.params.size())
        throw std::invalid_argument("train_step: optimizer state size mismatch");

    const int64_t step_index = model.step + 1;
    const double lr = config.learning_rate *
                      std::min(1.0, static_cast<double>(step_index) /
                                        static_cast<double>(config.warmup_steps));

    const size_t nb = batch.size();
    std::vector<ExampleWork> work(nb);
    for (size_t i = 0; i < nb; ++i) {
        Rng trng(derive_seed(config.seed, "train.t", static_cast<uint64_t>(model.step) * 1000003ULL + i));
        work[i].t = kTimeFloor + (1.0 - kTimeFloor) * trng.uniform();
        const TransitionKernel kernel = kernel_for_pair(variant, alphabet, batch[i]);
        work[i].x_t = forward_sample(kernel, batch[i], work[i].t, schedule,
                                     derive_seed(config.seed, "train.noise",
                                                 static_cast<uint64_t>(model.step) * 1000003ULL + i));
    }

    const size_t p = model.params.size();
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const size_t num_threads = std::min<size_t>(hw, nb);
    std::vector<std::vector<double>> grads(num_threads, std::vector<double>(p, 0.0));
    std::vector<double> max_entries(num_threads, 0.0);
    std::vector<std::exception_ptr> errors(num_threads);

    auto run_chunk = [&](size_t thread_id, size_t begin, size_t end) {
        try {
            TraceHandle trace;
            for (size_t i = begin; i < end; ++i)
                work[i].loss = example_grad(model, variant, alphabet, batch[i], work[i].t,
                                            work[i].x_t, schedule, 1.0 / static_cast<double>(nb),
                                            *trace.ptr, grads[thread_id].data(),
                                            &max_entries[thread_id]);
        } catch (...) {
            errors[thread_id] = std::current_exception();
        }
    };

    if (num_threads == 1) {
        run_chunk(0, 0, nb);
    } else {
        std::vector<std::thread> pool;
        const size_t chunk = (nb + num_threads - 1) / num_threads;
        for (size_t k = 0; k < num_threads; ++k)
            pool.emplace_back(run_chunk, k, k * chunk, std::min(nb, (k + 1) * chunk));
        for (auto& th : pool) th.join();
    }
    for (auto& err : errors)
        if (err) std::rethrow_exception(err);

    std::vector<double>& grad = grads[0];
    for (size_t k = 1; k < num_threads; ++k)
        for (size_t j = 0; j < p; ++j) grad[j] += grads[k][j];

    double loss = 0.0;
    for (const auto& w : work) loss += w.loss;
    loss /= static_cast<double>(nb);

    if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at step " << step_index << "; t values:";
        for (const auto& w : work) msg << ' ' << w.t;
        double max_entry = 0.0;
        for (double v : max_entries) max_entry = std::max(max_entry, v);
        msg << "; max score entry " << max_entry;
        throw NumericError(msg.str());
    }

    double norm_sq = 0.0;
    for (double g : grad) norm_sq += g * g;
    const double grad_norm = std::sqrt(norm_sq);
    if (!std::isfinite(grad_norm))
        throw NumericError("non-finite gradient norm at step " + std::to_string(step_index));
    const double clip_scale =
        grad_norm > config.grad_clip_norm ? config.grad_clip_norm / grad_norm : 1.0;
    const double post_clip_norm = grad_norm * clip_scale;

    const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step_index));
    const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step_index));
    for (const auto& spec : model.layout.tensors) {
        const bool decay = spec.shape.size() == 2;
        for (int64_t j = spec.offset; j < spec.offset + spec.size; ++j) {
            const auto ju = static_cast<size_t>(j);
            const double g = grad[ju] * clip_scale;
            adam.m[ju] = kAdamBeta1 * adam.m[ju] + (1.0 - kAdamBeta1) * g;
            adam.v[ju] = kAdamBeta2 * adam.v[ju] + (1.0 - kAdamBeta2) * g * g;
            const double mhat = adam.m[ju] / bc1;
            const double vhat = adam.v[ju] / bc2;
            double value = model.params[ju];
            value -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
            if (decay) value -= lr * kWeightDecay * value;
            model.params[ju] = static_cast<double>(static_cast<float>(value));
        }
    }
    for (size_t j = 0; j < p; ++j) {
        const double blended =
            config.ema_decay * model.ema[j] + (1.0 - config.ema_decay) * model.params[j];
        model.ema[j] = static_cast<double>(static_cast<float>(blended));
    }
    model.step = step_index;

    return StepDiagnostics{loss, grad_norm, post_clip_norm, lr};
}

double validation_loss(const ScoreModel& model, KernelVariant variant, const Alphabet& alphabet,
                       const std::vector<GermlinePair>& val_set, const TrainConfig& config,
                       const NoiseSchedule& schedule, int cap) {
    if (val_set.empty()) throw std::invalid_argument("validation_loss: empty validation set");
    const size_t count = std::min<size_t>(val_set.size(), static_cast<size_t>(cap));

    std::vector<double> losses(count, 0.0);
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const size_t num_threads = std::min<size_t>(hw, count);
    std::vector<std::exception_ptr> errors(num_threads);
    auto run_chunk = [&](size_t thread_id, size_t begin, size_t end) {
        try {
            TraceHandle trace;
            for (size_t i = begin; i < end; ++i) {
                Rng trng(derive_seed(config.seed, "val.t", i));
                const double t = kTimeFloor + (1.0 - kTimeFloor) * trng.uniform();
                const TransitionKernel kernel = kernel_for_pair(variant, alphabet, val_set[i]);
                const TokenSequence x_t = forward_sample(kernel, val_set[i], t, schedule,
                                                         derive_seed(config.seed, "val.noise", i));
                const std::optional<double> t_in =
                    model.config.time_conditioned ? std::optional<double>(t) : std::nullopt;
                const Mat logits = score_forward_logits(model.config, model.layout,
                                                        model.params.data(), x_t, t_in, *trace.ptr);
                ScoreTable score = logits_to_score(logits, x_t);
                const double scale = analytic_score_scale(kernel, schedule.total_noise(t));
                for (size_t r = 0; r < score.size(); ++r)
                    for (size_t y = 0; y < score[r].size(); ++y)
                        if (static_cast<int>(y) != x_t[r]) score[r][y] *= scale;
                losses[i] = dse_loss(score, kernel, val_set[i], x_t, t, schedule).total;
            }
        } catch (...) {
            errors[thread_id] = std::current_exception();
        }
    };
    if (num_threads <= 1) {
        run_chunk(0, 0, count);
    } else {
        std::vector<std::thread> pool;
        const size_t chunk = (count + num_threads - 1) / num_threads;
        for (size_t k = 0; k < num_threads; ++k)
            pool.emplace_back(run_chunk, k, k * chunk, std::min(count, (k + 1) * chunk));
        for (auto& th : pool) th.join();
    }
    for (auto& err : errors)
        if (err) std::rethrow_exception(err);

    double total = 0.0;
    for (double l : losses) total += l;
    return total / static_cast<double>(count);
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::ostringstream out;
    out.precision(10);
    out << "step,split,loss,lr,grad_norm\n";
    for (const auto& row : rows) {
        out << row.step << ',' << row.split << ',' << row.loss << ',' << row.lr << ',';
        if (row.has_grad_norm) out << row.grad_norm;
        out << '\n';
    }
    return out.str();
}

TrainResult train_loop(const TrainConfig& config, KernelVariant variant, const Alphabet& alphabet,
                       const std::vector<GermlinePair>& train_set,
                       const std::vector<GermlinePair>& val_set, ScoreModel& model,
                       const NoiseSchedule& schedule,
                       const std::function<void(const MetricsRow&)>& on_row) {
    config.validate();
    if (train_set.empty()) throw std::invalid_argument("train_loop: empty training set");
    for (const auto& pair : train_set)
        if (static_cast<int>(pair.observed.size()) > model.config.max_length)
            throw std::invalid_argument("train_loop: sequence exceeds model max_length");

    TrainResult result;
    auto emit = [&](MetricsRow row) {
        if (on_row) on_row(row);
        result.log.push_back(std::move(row));
    };

    if (config.max_steps == 0) return result;

    if (!val_set.empty()) {
        MetricsRow row{model.step, "val",
                       validation_loss(model, variant, alphabet, val_set, config, schedule),
                       0.0, 0.0, false};
        emit(row);
    }

    AdamState adam(model.params.size());
    double running_loss = 0.0;
    double last_grad_norm = 0.0;
    int since_eval = 0;
    for (int s = 0; s < config.max_steps; ++s) {
        Rng brng(derive_seed(config.seed, "batch", static_cast<uint64_t>(model.step)));
        std::vector<GermlinePair> batch;
        batch.reserve(static_cast<size_t>(config.batch_size));
        for (int b = 0; b < config.batch_size; ++b)
            batch.push_back(train_set[static_cast<size_t>(brng.uniform_int(
                static_cast<int>(train_set.size())))]);

        const StepDiagnostics diag = train_step(model, adam, variant, alphabet, batch, config, schedule);
        running_loss += diag.loss;
        last_grad_norm = diag.grad_norm;
        ++since_eval;

        if (model.step % config.eval_every == 0 || s + 1 == config.max_steps) {
            emit(MetricsRow{model.step, "train", running_loss / since_eval, diag.lr,
                            last_grad_norm, true});
            if (!val_set.empty())
                emit(MetricsRow{model.step, "val",
                                validation_loss(model, variant, alphabet, val_set, config, schedule),
                                diag.lr, 0.0, false});
            running_loss = 0.0;
            since_eval = 0;
        }
    }
    return result;
}

}  // namespace gsedd
