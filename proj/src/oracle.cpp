#include "gsedd/oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace gsedd::oracle {

ToyDistribution::ToyDistribution(Alphabet alphabet_, int d_, std::vector<double> probs_,
                                 TokenSequence germline_ref_)
    : alphabet(std::move(alphabet_)), d(d_), probs(std::move(probs_)),
      germline_ref(std::move(germline_ref_)) {
    if (d < 1) throw std::invalid_argument("ToyDistribution: d must be >= 1");
    long states = 1;
    for (int i = 0; i < d; ++i) {
        states *= alphabet.size();
        if (states > kMaxStates)
            throw std::invalid_argument("ToyDistribution: n^d exceeds the state-space cap");
    }
    if (static_cast<long>(probs.size()) != states)
        throw std::invalid_argument("ToyDistribution: probability vector has wrong size");
    double total = 0.0;
    for (double p : probs) {
        if (p < 0.0) throw std::invalid_argument("ToyDistribution: negative probability");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument("ToyDistribution: probabilities must sum to 1 within 1e-12");
    if (!germline_ref.empty() && static_cast<int>(germline_ref.size()) != d)
        throw std::invalid_argument("ToyDistribution: germline_ref length mismatch");
}

TokenSequence ToyDistribution::state(long index) const {
    TokenSequence x(static_cast<size_t>(d));
    const long n = alphabet.size();
    for (int i = d - 1; i >= 0; --i) {
        x[static_cast<size_t>(i)] = static_cast<int>(index % n);
        index /= n;
    }
    return x;
}

long ToyDistribution::index_of(const TokenSequence& x) const {
    if (static_cast<int>(x.size()) != d)
        throw std::invalid_argument("ToyDistribution: sequence length mismatch");
    long idx = 0;
    for (int i = 0; i < d; ++i) {
        const int tok = x[static_cast<size_t>(i)];
        if (tok < 0 || tok >= alphabet.size())
            throw std::invalid_argument("ToyDistribution: token out of range");
        idx = idx * alphabet.size() + tok;
    }
    return idx;
}

Eigen::MatrixXd matrix_exponential(const Eigen::MatrixXd& rate, double s) {
    if (rate.rows() != rate.cols())
        throw std::invalid_argument("matrix_exponential: matrix must be square");
    if (!rate.allFinite() || !std::isfinite(s))
        throw std::invalid_argument("matrix_exponential: non-finite input");
    Eigen::MatrixXd a = s * rate;
    const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
    int squarings = 0;
    while (norm / std::pow(2.0, squarings) > 0.5) ++squarings;
    a /= std::pow(2.0, squarings);

    const int n = static_cast<int>(a.rows());
    Eigen::MatrixXd result = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
    // ||a|| <= 0.5, so 24 terms push truncation error far below 1e-12
    for (int k = 1; k <= 24; ++k) {
        term = (term * a) / static_cast<double>(k);
        result += term;
    }
    for (int i = 0; i < squarings; ++i) result = result * result;
    return result;
}

Eigen::MatrixXd rate_matrix(const TransitionKernel& kernel, int position) {
    const int n = kernel.alphabet().size();
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
    if (kernel.is_absorbing()) {
        const int g = kernel.target(position);
        for (int a = 0; a < n; ++a) {
            if (a == g || !kernel.in_support(a)) continue;
            q(a, g) = 1.0;
            q(a, a) = -1.0;
        }
    } else {
        const double m = static_cast<double>(kernel.support_size());
        for (int a : kernel.support()) {
            for (int b : kernel.support()) {
                if (a == b) continue;
                q(a, b) = 1.0 / m;
            }
            q(a, a) = -(m - 1.0) / m;
        }
    }
    return q;
}

ToyDistribution joint_distribution_at_t(const ToyDistribution& data, const TransitionKernel& kernel,
                                        double t, const NoiseSchedule& schedule) {
    const double sigma = schedule.total_noise(t);
    const int d = data.d;
    std::vector<Eigen::MatrixXd> step;
    step.reserve(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i)
        step.push_back(matrix_exponential(rate_matrix(kernel, i), sigma));

    std::vector<double> out(data.probs.size(), 0.0);
    const long states = data.num_states();
    for (long s0 = 0; s0 < states; ++s0) {
        const double p0 = data.probs[static_cast<size_t>(s0)];
        if (p0 == 0.0) continue;
        const TokenSequence x0 = data.state(s0);
        for (long s1 = 0; s1 < states; ++s1) {
            const TokenSequence x1 = data.state(s1);
            double w = p0;
            for (int i = 0; i < d && w != 0.0; ++i)
                w *= step[static_cast<size_t>(i)](x0[static_cast<size_t>(i)], x1[static_cast<size_t>(i)]);
            out[static_cast<size_t>(s1)] += w;
        }
    }
    // clean tiny negative round-off and renormalize exactly
    double total = 0.0;
    for (double& p : out) {
        if (p < 0.0 && p > -1e-15) p = 0.0;
        total += p;
    }
    for (double& p : out) p /= total;
    return ToyDistribution(data.alphabet, d, std::move(out), data.germline_ref);
}

ScoreTable exact_concrete_score(const ToyDistribution& data, const TransitionKernel& kernel,
                                const TokenSequence& x, double t, const NoiseSchedule& schedule) {
    const ToyDistribution pt = joint_distribution_at_t(data, kernel, t, schedule);
    const double px = pt.mass(x);
    if (!(px > 0.0))
        throw std::invalid_argument("exact_concrete_score: p_t(x) = 0");
    const int n = data.alphabet.size();
    ScoreTable table(x.size(), std::vector<double>(static_cast<size_t>(n), 0.0));
    TokenSequence y = x;
    for (size_t i = 0; i < x.size(); ++i) {
        for (int tok = 0; tok < n; ++tok) {
            if (tok == x[i]) {
                table[i][static_cast<size_t>(tok)] = 1.0;
                continue;
            }
            y[i] = tok;
            table[i][static_cast<size_t>(tok)] = pt.mass(y) / px;
        }
        y[i] = x[i];
    }
    return table;
}

TransitionKernel kernel_for_toy(const ToyDistribution& data, KernelVariant variant) {
    switch (variant) {
        case KernelVariant::uniform: return TransitionKernel::uniform(data.alphabet);
        case KernelVariant::mask_absorbing: return TransitionKernel::mask_absorbing(data.alphabet);
        case KernelVariant::germline_absorbing:
            if (data.germline_ref.empty())
                throw std::invalid_argument("kernel_for_toy: toy has no germline reference");
            return TransitionKernel::germline_absorbing(data.alphabet, data.germline_ref);
    }
    throw std::logic_error("kernel_for_toy: bad variant");
}

ToyDistribution exact_reverse_terminal(const ToyDistribution& data, const TransitionKernel& kernel,
                                       const NoiseSchedule& schedule, int steps, Decoder decoder) {
    if (steps < 1) throw std::invalid_argument("exact_reverse_terminal: steps must be >= 1");
    const int d = data.d;
    const int n = data.alphabet.size();
    const long states = data.num_states();

    // initial state of the reverse sampler
    std::vector<double> dist(static_cast<size_t>(states), 0.0);
    if (kernel.variant() == KernelVariant::uniform) {
        const auto& sup = kernel.support();
        const double w = 1.0 / std::pow(static_cast<double>(sup.size()), d);
        TokenSequence x(static_cast<size_t>(d));
        std::vector<size_t> pos(static_cast<size_t>(d), 0);
        // enumerate support^d
        while (true) {
            for (int i = 0; i < d; ++i) x[static_cast<size_t>(i)] = sup[pos[static_cast<size_t>(i)]];
            dist[static_cast<size_t>(data.index_of(x))] += w;
            int i = d - 1;
            while (i >= 0 && ++pos[static_cast<size_t>(i)] == sup.size()) pos[static_cast<size_t>(i--)] = 0;
            if (i < 0) break;
        }
    } else {
        TokenSequence x(static_cast<size_t>(d));
        for (int i = 0; i < d; ++i) x[static_cast<size_t>(i)] = kernel.target(i);
        dist[static_cast<size_t>(data.index_of(x))] = 1.0;
    }

    std::vector<Eigen::MatrixXd> rates;
    for (int i = 0; i < d; ++i) rates.push_back(rate_matrix(kernel, i));

    // data support, enumerated once
    std::vector<long> support;
    for (long s0 = 0; s0 < states; ++s0)
        if (data.probs[static_cast<size_t>(s0)] > 0.0) support.push_back(s0);

    const double dt = 1.0 / static_cast<double>(steps);
    for (int k = steps; k >= 1; --k) {
        const double t = static_cast<double>(k) * dt;
        const double t_prev = static_cast<double>(k - 1) * dt;
        const double dsig = schedule.total_noise(t) - schedule.total_noise(t_prev);
        const double rate_scale = schedule.noise_rate(t);

        // per-position forward kernels at sigma(t), sigma(t_prev) and the step
        std::vector<Eigen::MatrixXd> k_t, k_prev, k_step;
        for (int i = 0; i < d; ++i) {
            k_t.push_back(matrix_exponential(rates[static_cast<size_t>(i)], schedule.total_noise(t)));
            k_prev.push_back(
                matrix_exponential(rates[static_cast<size_t>(i)], schedule.total_noise(t_prev)));
            k_step.push_back(matrix_exponential(rates[static_cast<size_t>(i)], dsig));
        }

        std::vector<double> next(static_cast<size_t>(states), 0.0);
        for (long s = 0; s < states; ++s) {
            const double mass = dist[static_cast<size_t>(s)];
            if (mass <= 0.0) continue;
            const TokenSequence x = data.state(s);

            std::vector<std::vector<double>> pos_dists(static_cast<size_t>(d));
            if (decoder == Decoder::tweedie) {
                // per-position Bayes posterior with the other positions held at
                // time t: m_i(y) = sum_x0 p(x0) k_prev(x0_i,y) prod_{j!=i} k_t(x0_j,x_j).
                // Equals the score-driven paper formula wherever p_t(x) > 0 and
                // stays defined on the zero-probability states the factorized
                // sampler can reach.
                for (int i = 0; i < d; ++i) {
                    std::vector<double> posterior(static_cast<size_t>(n), 0.0);
                    for (long s0 : support) {
                        const TokenSequence x0 = data.state(s0);
                        double ctx = data.probs[static_cast<size_t>(s0)];
                        for (int j = 0; j < d && ctx != 0.0; ++j) {
                            if (j == i) continue;
                            ctx *= k_t[static_cast<size_t>(j)](x0[static_cast<size_t>(j)],
                                                               x[static_cast<size_t>(j)]);
                        }
                        if (ctx == 0.0) continue;
                        for (int y = 0; y < n; ++y)
                            posterior[static_cast<size_t>(y)] +=
                                ctx * k_prev[static_cast<size_t>(i)](x0[static_cast<size_t>(i)], y);
                    }
                    double total = 0.0;
                    for (int y = 0; y < n; ++y) {
                        double v = posterior[static_cast<size_t>(y)] *
                                   k_step[static_cast<size_t>(i)](y, x[static_cast<size_t>(i)]);
                        if (v < 0.0) v = 0.0;
                        posterior[static_cast<size_t>(y)] = v;
                        total += v;
                    }
                    if (total > 0.0) {
                        for (double& v : posterior) v /= total;
                    } else {
                        std::fill(posterior.begin(), posterior.end(), 0.0);
                        posterior[static_cast<size_t>(x[static_cast<size_t>(i)])] = 1.0;
                    }
                    pos_dists[static_cast<size_t>(i)] = std::move(posterior);
                }
            } else {
                // euler needs the concrete score; zero-probability states are
                // held fixed (their positions carry no defined reverse rate)
                double px = 0.0;
                for (long s0 : support) {
                    const TokenSequence x0 = data.state(s0);
                    double w = data.probs[static_cast<size_t>(s0)];
                    for (int j = 0; j < d && w != 0.0; ++j)
                        w *= k_t[static_cast<size_t>(j)](x0[static_cast<size_t>(j)],
                                                         x[static_cast<size_t>(j)]);
                    px += w;
                }
                for (int i = 0; i < d; ++i) {
                    std::vector<double> dist_i(static_cast<size_t>(n), 0.0);
                    if (!(px > 0.0)) {
                        dist_i[static_cast<size_t>(x[static_cast<size_t>(i)])] = 1.0;
                        pos_dists[static_cast<size_t>(i)] = std::move(dist_i);
                        continue;
                    }
                    TokenSequence swap = x;
                    double jump = 0.0;
                    for (int y = 0; y < n; ++y) {
                        if (y == x[static_cast<size_t>(i)]) continue;
                        swap[static_cast<size_t>(i)] = y;
                        double py = 0.0;
                        for (long s0 : support) {
                            const TokenSequence x0 = data.state(s0);
                            double w = data.probs[static_cast<size_t>(s0)];
                            for (int j = 0; j < d && w != 0.0; ++j)
                                w *= k_t[static_cast<size_t>(j)](x0[static_cast<size_t>(j)],
                                                                 swap[static_cast<size_t>(j)]);
                            py += w;
                        }
                        const double score = py / px;
                        const double r = score *
                                         rates[static_cast<size_t>(i)](y, x[static_cast<size_t>(i)]) *
                                         rate_scale * dt;
                        dist_i[static_cast<size_t>(y)] = r;
                        jump += r;
                    }
                    swap[static_cast<size_t>(i)] = x[static_cast<size_t>(i)];
                    if (jump > 1.0) {
                        for (double& v : dist_i) v /= jump;
                        dist_i[static_cast<size_t>(x[static_cast<size_t>(i)])] = 0.0;
                    } else {
                        dist_i[static_cast<size_t>(x[static_cast<size_t>(i)])] = 1.0 - jump;
                    }
                    pos_dists[static_cast<size_t>(i)] = std::move(dist_i);
                }
            }

            // push mass through the product kernel
            for (long s1 = 0; s1 < states; ++s1) {
                const TokenSequence y = data.state(s1);
                double w = mass;
                for (int i = 0; i < d && w != 0.0; ++i)
                    w *= pos_dists[static_cast<size_t>(i)][static_cast<size_t>(y[static_cast<size_t>(i)])];
                next[static_cast<size_t>(s1)] += w;
            }
        }
        dist = std::move(next);
    }

    double total = 0.0;
    for (double p : dist) total += p;
    for (double& p : dist) p /= total;
    return ToyDistribution(data.alphabet, d, std::move(dist), data.germline_ref);
}

}  // namespace gsedd::oracle
