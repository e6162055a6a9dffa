#include "gsedd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "gsedd/rng.hpp"
#include "gsedd/train.hpp"

namespace gsedd {

void ElboConfig::validate() const {
    if (quadrature_steps < 1 || monte_carlo_samples < 1)
        throw std::invalid_argument("ElboConfig: counts must be positive");
}

namespace {

double k_term(double a) { return a > 0.0 ? a * (std::log(a) - 1.0) : 0.0; }

// DSE integrand including K(a) at one (x_t, t); score is the true score.
double elbo_integrand(const ScoreTable& score, const TransitionKernel& kernel,
                      const GermlinePair& pair, const TokenSequence& x_t, double t,
                      const NoiseSchedule& schedule) {
    double total = 0.0;
    visit_dse_entries(kernel, pair.observed, x_t, t, schedule,
                      [&](int i, int y, double w, double a) {
                          const double s = score[static_cast<size_t>(i)][static_cast<size_t>(y)];
                          const double term = a > 0.0 ? s - a * std::log(s) : s;
                          total += w * (term + k_term(a));
                      });
    return total;
}

}  // namespace

ElboResult elbo_perplexity(const ScoreFn& score_fn, KernelVariant variant,
                           const Alphabet& alphabet, const std::vector<GermlinePair>& pairs,
                           const ElboConfig& config, const NoiseSchedule& schedule,
                           bool time_independent_scores) {
    config.validate();
    if (pairs.empty()) throw std::invalid_argument("elbo_perplexity: no sequences");

    ElboResult result;
    double total_nll = 0.0;
    int64_t total_tokens = 0;
    for (size_t seq_idx = 0; seq_idx < pairs.size(); ++seq_idx) {
        const GermlinePair& pair = pairs[seq_idx];
        const TransitionKernel kernel = kernel_for_pair(variant, alphabet, pair);
        const int d = static_cast<int>(pair.observed.size());

        // the absorbing-variant network is time independent; cache by state
        std::map<TokenSequence, ScoreTable> cache;
        const bool cacheable = variant != KernelVariant::uniform && time_independent_scores;
        constexpr size_t kCacheCap = 4096;

        double nll = 0.0;
        for (int q = 0; q < config.quadrature_steps; ++q) {
            const double t =
                (static_cast<double>(q) + 0.5) / static_cast<double>(config.quadrature_steps);
            const double sigma = schedule.total_noise(t);
            const double scale = analytic_score_scale(kernel, sigma);
            double mean_integrand = 0.0;
            for (int m = 0; m < config.monte_carlo_samples; ++m) {
                const TokenSequence x_t = forward_sample(
                    kernel, pair, t, schedule,
                    derive_seed(config.seed, "elbo",
                                (seq_idx * 1000003ULL + static_cast<uint64_t>(q)) * 131ULL +
                                    static_cast<uint64_t>(m)));
                ScoreTable score;
                if (cacheable) {
                    auto it = cache.find(x_t);
                    if (it != cache.end()) {
                        score = it->second;
                    } else {
                        score = score_fn(x_t, std::nullopt);
                        if (cache.size() < kCacheCap) cache.emplace(x_t, score);
                    }
                } else {
                    score = score_fn(x_t, t);
                }
                if (kernel.is_absorbing()) {
                    for (size_t i = 0; i < score.size(); ++i)
                        for (size_t y = 0; y < score[i].size(); ++y)
                            if (static_cast<int>(y) != x_t[i]) score[i][y] *= scale;
                }
                const double integrand = elbo_integrand(score, kernel, pair, x_t, t, schedule);
                if (!std::isfinite(integrand)) {
                    std::ostringstream msg;
                    msg << "elbo_perplexity: non-finite integrand at t=" << t << " sequence "
                        << seq_idx;
                    throw std::runtime_error(msg.str());
                }
                mean_integrand += integrand;
            }
            nll += mean_integrand / config.monte_carlo_samples / config.quadrature_steps;
        }
        result.per_sequence_nll.push_back(nll);
        result.per_sequence.push_back(std::exp(nll / d));
        total_nll += nll;
        total_tokens += d;
    }
    result.aggregate = std::exp(total_nll / static_cast<double>(total_tokens));
    return result;
}

double non_germline_accuracy(const ScoreFn& score_fn, KernelVariant variant,
                             const Alphabet& alphabet, const std::vector<GermlinePair>& pairs,
                             uint64_t seed) {
    int64_t total = 0;
    int64_t correct = 0;
    for (size_t pair_idx = 0; pair_idx < pairs.size(); ++pair_idx) {
        const GermlinePair& pair = pairs[pair_idx];
        const auto positions = non_germline_positions(pair);
        if (positions.empty()) continue;
        const TransitionKernel kernel = kernel_for_pair(variant, alphabet, pair);
        for (int i : positions) {
            TokenSequence input = pair.observed;
            std::optional<double> t_in;
            switch (variant) {
                case KernelVariant::uniform: {
                    // replacement drawn uniformly excluding the current token
                    Rng rng(derive_seed(seed, "ngacc", pair_idx * 4096ULL + static_cast<uint64_t>(i)));
                    int draw = input[static_cast<size_t>(i)];
                    const auto& sup = kernel.support();
                    while (draw == input[static_cast<size_t>(i)])
                        draw = sup[static_cast<size_t>(rng.uniform_int(kernel.support_size()))];
                    input[static_cast<size_t>(i)] = draw;
                    t_in = 1.0 / 128.0;  // the final denoising step
                    break;
                }
                case KernelVariant::mask_absorbing:
                    input[static_cast<size_t>(i)] = *alphabet.mask_index();
                    break;
                case KernelVariant::germline_absorbing:
                    input[static_cast<size_t>(i)] = pair.germline[static_cast<size_t>(i)];
                    break;
            }
            const ScoreTable score = score_fn(input, t_in);
            const int germ = pair.germline[static_cast<size_t>(i)];
            int best = -1;
            double best_score = -1.0;
            for (int y = 0; y < alphabet.size(); ++y) {
                if (y == germ || alphabet.is_mask(y) || y == input[static_cast<size_t>(i)]) continue;
                const double s = score[static_cast<size_t>(i)][static_cast<size_t>(y)];
                if (s > best_score) {
                    best_score = s;
                    best = y;
                }
            }
            ++total;
            correct += best == pair.observed[static_cast<size_t>(i)];
        }
    }
    if (total == 0)
        throw std::invalid_argument("non_germline_accuracy: no differing positions in any pair");
    return static_cast<double>(correct) / static_cast<double>(total);
}

double nn_identity(const std::vector<std::string>& samples,
                   const std::vector<std::string>& references) {
    if (samples.empty()) throw std::invalid_argument("nn_identity: no samples");
    if (references.empty()) throw std::invalid_argument("nn_identity: empty reference set");
    double total = 0.0;
    for (const auto& s : samples) {
        double best = 0.0;
        for (const auto& r : references) best = std::max(best, sequence_identity(s, r));
        total += best;
    }
    return total / static_cast<double>(samples.size());
}

double pairwise_diversity(const std::vector<std::string>& samples) {
    if (samples.size() < 2)
        throw std::invalid_argument("pairwise_diversity: need at least 2 samples");
    double total = 0.0;
    int64_t count = 0;
    for (size_t i = 0; i < samples.size(); ++i)
        for (size_t j = i + 1; j < samples.size(); ++j) {
            total += levenshtein(samples[i], samples[j]);
            ++count;
        }
    return total / static_cast<double>(count);
}

double tv_distance(const oracle::ToyDistribution& p, const oracle::ToyDistribution& q) {
    if (p.alphabet.symbols() != q.alphabet.symbols() || p.d != q.d)
        throw std::invalid_argument("tv_distance: mismatched supports");
    double total = 0.0;
    for (size_t i = 0; i < p.probs.size(); ++i) total += std::abs(p.probs[i] - q.probs[i]);
    return 0.5 * total;
}

double pseudo_perplexity(
    const std::function<std::vector<double>(const TokenSequence&, int)>& dist_fn,
    const TokenSequence& x) {
    if (x.empty()) throw std::invalid_argument("pseudo_perplexity: empty sequence");
    double total = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const auto dist = dist_fn(x, static_cast<int>(i));
        double z = 0.0;
        for (double v : dist) z += v;
        const double p = dist[static_cast<size_t>(x[i])] / z;
        if (!(p > 0.0))
            throw std::runtime_error("pseudo_perplexity: zero probability for the true token");
        total += -std::log(p);
    }
    return std::exp(total / static_cast<double>(x.size()));
}

}  // namespace gsedd
