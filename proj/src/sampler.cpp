#include "gsedd/sampler.hpp"

#include <cmath>
#include <stdexcept>

namespace gsedd {

DecoderKind decoder_from_name(const std::string& name) {
    if (name == "euler") return DecoderKind::euler;
    if (name == "tweedie") return DecoderKind::tweedie;
    throw std::invalid_argument("decoder must be 'euler' or 'tweedie', got '" + name + "'");
}

const char* decoder_name(DecoderKind kind) {
    return kind == DecoderKind::euler ? "euler" : "tweedie";
}

void SamplerConfig::validate() const {
    if (steps < 1) throw std::invalid_argument("SamplerConfig: steps must be >= 1");
    if (gamma < 0.0) throw std::invalid_argument("SamplerConfig: gamma must be non-negative");
}

TokenSequence init_noised_state(const TransitionKernel& kernel, std::optional<int> length,
                                Rng& rng) {
    switch (kernel.variant()) {
        case KernelVariant::uniform: {
            if (!length) throw std::invalid_argument("init_noised_state: uniform variant needs a length");
            if (*length < 1) throw std::invalid_argument("init_noised_state: length must be >= 1");
            TokenSequence x(static_cast<size_t>(*length));
            const auto& sup = kernel.support();
            for (auto& tok : x) tok = sup[static_cast<size_t>(rng.uniform_int(kernel.support_size()))];
            return x;
        }
        case KernelVariant::mask_absorbing: {
            if (!length) throw std::invalid_argument("init_noised_state: mask variant needs a length");
            if (*length < 1) throw std::invalid_argument("init_noised_state: length must be >= 1");
            return TokenSequence(static_cast<size_t>(*length), *kernel.alphabet().mask_index());
        }
        case KernelVariant::germline_absorbing: {
            const int d = kernel.required_length();
            TokenSequence x(static_cast<size_t>(d));
            for (int i = 0; i < d; ++i) x[static_cast<size_t>(i)] = kernel.target(i);
            return x;
        }
    }
    throw std::logic_error("init_noised_state: bad variant");
}

std::vector<double> tweedie_position_dist(const std::vector<double>& score_row,
                                          const TransitionKernel& kernel, int xt_token,
                                          int position, double dsigma) {
    const int n = kernel.alphabet().size();
    const Eigen::MatrixXd back = step_transition_matrix(kernel, -dsigma, position);
    const Eigen::MatrixXd fwd = step_transition_matrix(kernel, dsigma, position);
    std::vector<double> dist(static_cast<size_t>(n), 0.0);
    double total = 0.0;
    for (int y = 0; y < n; ++y) {
        double prior = 0.0;  // proportional to p_{t-dt}(y swap)
        for (int b = 0; b < n; ++b) prior += score_row[static_cast<size_t>(b)] * back(b, y);
        double v = prior * fwd(y, xt_token);
        if (v < 0.0) v = 0.0;
        dist[static_cast<size_t>(y)] = v;
        total += v;
    }
    if (!(total > 0.0))
        throw std::runtime_error("tweedie_step: all-zero posterior at position " +
                                 std::to_string(position) + " (token " + std::to_string(xt_token) + ")");
    for (double& v : dist) v /= total;
    return dist;
}

TokenSequence tweedie_step(const ScoreTable& score, const TransitionKernel& kernel,
                           const TokenSequence& x_t, double t, double dt,
                           const NoiseSchedule& schedule, Rng& rng) {
    if (!(dt > 0.0) || dt > t)
        throw std::invalid_argument("tweedie_step: need 0 < dt <= t");
    const double dsigma = schedule.total_noise(t) - schedule.total_noise(t - dt);
    TokenSequence out(x_t.size());
    for (size_t i = 0; i < x_t.size(); ++i) {
        const auto dist = tweedie_position_dist(score[i], kernel, x_t[i], static_cast<int>(i), dsigma);
        out[i] = rng.categorical(dist);
    }
    return out;
}

std::vector<double> euler_position_dist(const std::vector<double>& score_row,
                                        const TransitionKernel& kernel, int xt_token,
                                        int position, double rate_scale, double dt,
                                        SampleStats* stats) {
    const int n = kernel.alphabet().size();
    std::vector<double> dist(static_cast<size_t>(n), 0.0);
    double jump = 0.0;
    for (int y = 0; y < n; ++y) {
        if (y == xt_token) continue;
        double rate = 0.0;  // forward rate y -> x_t
        if (kernel.is_absorbing()) {
            rate = xt_token == kernel.target(position) && kernel.in_support(y) ? 1.0 : 0.0;
        } else if (kernel.in_support(y) && kernel.in_support(xt_token)) {
            rate = 1.0 / static_cast<double>(kernel.support_size());
        }
        const double p = score_row[static_cast<size_t>(y)] * rate * rate_scale * dt;
        dist[static_cast<size_t>(y)] = p;
        jump += p;
    }
    if (jump > 1.0) {
        if (stats) ++stats->clamp_events;
        for (double& v : dist) v /= jump;
        dist[static_cast<size_t>(xt_token)] = 0.0;
    } else {
        dist[static_cast<size_t>(xt_token)] = 1.0 - jump;
    }
    return dist;
}

TokenSequence euler_step(const ScoreTable& score, const TransitionKernel& kernel,
                         const TokenSequence& x_t, double t, double dt,
                         const NoiseSchedule& schedule, Rng& rng, SampleStats* stats) {
    if (!(dt > 0.0) || dt > t)
        throw std::invalid_argument("euler_step: need 0 < dt <= t");
    const double rate_scale = schedule.noise_rate(t);
    TokenSequence out(x_t.size());
    for (size_t i = 0; i < x_t.size(); ++i) {
        const auto dist =
            euler_position_dist(score[i], kernel, x_t[i], static_cast<int>(i), rate_scale, dt, stats);
        out[i] = rng.categorical(dist);
    }
    return out;
}

ScoreTable model_score(const ScoreModel& model, const TransitionKernel& kernel,
                       const TokenSequence& x_t, double t, const NoiseSchedule& schedule,
                       bool use_ema) {
    const std::optional<double> t_in =
        model.config.time_conditioned ? std::optional<double>(t) : std::nullopt;
    ScoreTable score = model.forward(x_t, t_in, use_ema);
    if (kernel.is_absorbing()) {
        const double scale = analytic_score_scale(kernel, schedule.total_noise(t));
        for (size_t i = 0; i < score.size(); ++i)
            for (size_t y = 0; y < score[i].size(); ++y)
                if (static_cast<int>(y) != x_t[i]) score[i][y] *= scale;
    }
    return score;
}

TokenSequence sample(const ScoreModel& model, const TransitionKernel& kernel,
                     const SamplerConfig& config, std::optional<int> length,
                     const Classifier* classifier, const NoiseSchedule& schedule,
                     SampleStats* stats) {
    config.validate();
    if (model.config.variant != kernel.variant())
        throw std::invalid_argument("sample: model and kernel variants disagree");
    Rng rng(derive_seed(config.seed, "sample"));
    TokenSequence x = init_noised_state(kernel, length, rng);
    const int n = kernel.alphabet().size();
    const double dt = 1.0 / static_cast<double>(config.steps);

    for (int k = config.steps; k >= 1; --k) {
        const double t = static_cast<double>(k) * dt;
        ScoreTable score = model_score(model, kernel, x, t, schedule, /*use_ema=*/true);
        if (classifier && config.gamma > 0.0) {
            Mat nlog;
            const double current = classifier->neighbor_logits(x, nlog);
            if (stats)
                stats->classifier_evals +=
                    static_cast<int64_t>(x.size()) * static_cast<int64_t>(n - 1) + 1;
            if (kernel.variant() == KernelVariant::mask_absorbing && kernel.alphabet().mask_index()) {
                // classifier undefined on masked sequences: neutralize the mask column
                const int m = *kernel.alphabet().mask_index();
                for (Eigen::Index i = 0; i < nlog.rows(); ++i) nlog(i, m) = current;
            }
            score = guided_score(score, nlog, current, config.gamma);
        }
        x = config.decoder == DecoderKind::tweedie
                ? tweedie_step(score, kernel, x, t, dt, schedule, rng)
                : euler_step(score, kernel, x, t, dt, schedule, rng, stats);
    }
    return x;
}

}  // namespace gsedd
