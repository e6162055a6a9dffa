#ifndef GSEDD_ORACLE_HPP
#define GSEDD_ORACLE_HPP

#include <Eigen/Dense>

#include "gsedd/noise.hpp"
#include "gsedd/seq.hpp"
#include "gsedd/types.hpp"

namespace gsedd::oracle {

/// Explicit probability over all n^d joint sequences. States are indexed
/// big-endian: index = sum_i x_i * n^(d-1-i).
struct ToyDistribution {
    Alphabet alphabet;
    int d = 1;
    std::vector<double> probs;
    TokenSequence germline_ref;  // reference sequence for germline kernels; may be empty

    static constexpr long kMaxStates = 1296;

    ToyDistribution(Alphabet alphabet_, int d_, std::vector<double> probs_,
                    TokenSequence germline_ref_ = {});

    long num_states() const { return static_cast<long>(probs.size()); }
    TokenSequence state(long index) const;
    long index_of(const TokenSequence& x) const;
    double mass(const TokenSequence& x) const { return probs[static_cast<size_t>(index_of(x))]; }
};

/// exp(s * rate_matrix) by scaling-and-squaring with a truncated Taylor
/// series; truncation error below 1e-12.
Eigen::MatrixXd matrix_exponential(const Eigen::MatrixXd& rate_matrix, double s);

/// The per-position generator implied by the kernel, rows indexed by source
/// token; rows sum to zero. Built here independently of the closed forms.
Eigen::MatrixXd rate_matrix(const TransitionKernel& kernel, int position);

/// Exact law of the forward process at time t.
ToyDistribution joint_distribution_at_t(const ToyDistribution& data, const TransitionKernel& kernel,
                                        double t, const NoiseSchedule& schedule);

/// Entry (i, y) = p_t(x with position i set to y) / p_t(x); current tokens 1.
ScoreTable exact_concrete_score(const ToyDistribution& data, const TransitionKernel& kernel,
                                const TokenSequence& x, double t, const NoiseSchedule& schedule);

enum class Decoder { euler, tweedie };

/// Exact terminal distribution of the reverse sampler driven by the exact
/// concrete score, computed by enumerating all transitions.
ToyDistribution exact_reverse_terminal(const ToyDistribution& data, const TransitionKernel& kernel,
                                       const NoiseSchedule& schedule, int steps, Decoder decoder);

/// Builds the kernel a toy runs under (germline variant uses germline_ref).
TransitionKernel kernel_for_toy(const ToyDistribution& data, KernelVariant variant);

}  // namespace gsedd::oracle

#endif
