#ifndef GSEDD_NOISE_HPP
#define GSEDD_NOISE_HPP

#include <Eigen/Dense>

#include "gsedd/seq.hpp"

namespace gsedd {

/// Log-linear cumulative noise sigma(t) = -ln(1 - (1-eps) t).
struct NoiseSchedule {
    double epsilon = 1e-3;

    /// sigma(t); zero at t=0, ln(1/eps) at t=1.
    double total_noise(double t) const;
    /// d sigma / dt.
    double noise_rate(double t) const;
};

enum class KernelVariant { uniform, mask_absorbing, germline_absorbing };

const char* variant_name(KernelVariant v);
KernelVariant variant_from_name(const std::string& name);

/// Forward-diffusion rate structure, factorized per position. The uniform
/// variant mixes over the non-mask support with rate 1/m to each other token;
/// absorbing variants move any token into the per-position target with rate 1.
class TransitionKernel {
public:
    static TransitionKernel uniform(Alphabet alphabet);
    static TransitionKernel mask_absorbing(Alphabet alphabet);
    static TransitionKernel germline_absorbing(Alphabet alphabet, TokenSequence germline);

    KernelVariant variant() const { return variant_; }
    const Alphabet& alphabet() const { return alphabet_; }
    bool is_absorbing() const { return variant_ != KernelVariant::uniform; }

    /// Tokens the kernel mixes over. Absorbing variants use the full alphabet.
    const std::vector<int>& support() const { return support_; }
    int support_size() const { return static_cast<int>(support_.size()); }
    bool in_support(int token) const { return in_support_[static_cast<size_t>(token)]; }

    /// Absorbing target at a position; invalid for the uniform variant.
    int target(int position) const;
    /// Length constraint imposed by per-position targets (-1 when none).
    int required_length() const;

    void check_sequence(const TokenSequence& x) const;

private:
    TransitionKernel(KernelVariant variant, Alphabet alphabet, TokenSequence targets);

    KernelVariant variant_;
    Alphabet alphabet_;
    TokenSequence germline_;       // germline variant only
    std::vector<int> support_;
    std::vector<char> in_support_;
};

/// Per-position categorical rows over the full alphabet; rows sum to 1.
using PositionMarginal = std::vector<std::vector<double>>;

/// Closed-form forward marginal p(x_t | x_0) at noise level sigma(t).
PositionMarginal marginal(const TransitionKernel& kernel, const TokenSequence& x0,
                          double t, const NoiseSchedule& schedule);

/// Draws x_t ~ p(. | x_0) position-independently; deterministic per seed.
TokenSequence forward_sample(const TransitionKernel& kernel, const GermlinePair& pair,
                             double t, const NoiseSchedule& schedule, uint64_t seed);

/// Exact ratio p(y | x0) / p(x_t | x0) of closed-form position marginals.
double marginal_ratio(const TransitionKernel& kernel, int x0_token, int xt_token,
                      int y_token, double sigma, int position);

/// Closed-form exp(dsigma * Q) over the full alphabet; rows index the source
/// token. Rows are stochastic for dsigma >= 0; negative increments give the
/// (generally non-stochastic) inverse flow.
Eigen::MatrixXd step_transition_matrix(const TransitionKernel& kernel, double dsigma,
                                       int position);

/// Analytic time factor of the concrete score for absorbing kernels
/// (RADD reparameterization): e^{-sigma} / (1 - e^{-sigma}). 1 for uniform.
double analytic_score_scale(const TransitionKernel& kernel, double sigma);

}  // namespace gsedd

#endif
