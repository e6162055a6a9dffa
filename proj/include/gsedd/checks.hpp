#ifndef GSEDD_CHECKS_HPP
#define GSEDD_CHECKS_HPP

#include <string>
#include <vector>

#include "gsedd/oracle.hpp"

namespace gsedd::checks {

struct CheckResult {
    std::string name;
    double tolerance = 0.0;
    double observed = 0.0;
    bool pass = false;
};

/// The three fixed toy instances used by the reverse-process and loss checks:
/// a d=1 mask toy, a d=2 uniform toy and a d=2 germline toy.
std::vector<oracle::ToyDistribution> fixed_toys();
KernelVariant toy_variant(size_t index);

/// Closed-form marginals vs. the series matrix exponential on random
/// (variant, t, x0) cases. flip_sigma_sign injects a sign bug for testing
/// that the check actually detects one.
CheckResult check_marginal_exactness(int cases, double tolerance, uint64_t seed,
                                     bool flip_sigma_sign = false);

/// Closed-form step transition matrices vs. the series exponential on random
/// (variant, dsigma) cases with |dsigma| <= 5.
CheckResult check_step_matrices(int cases, double tolerance, uint64_t seed);

/// Exact-score reverse terminals: Tweedie at tweedie_steps and Euler at
/// euler_steps must both reach the data within tv_tolerance, and Tweedie must
/// not lose to Euler at equal step counts.
std::vector<CheckResult> check_reverse_process(int tweedie_steps, int euler_steps,
                                               double tv_tolerance);

/// One exact reverse Euler step preserves p_t backwards with O(dt^2) error.
CheckResult check_reverse_rate_identity();

/// ELBO with exact scores matches exp(entropy) within rel_tolerance, and a
/// perturbed score table strictly increases the bound.
std::vector<CheckResult> check_elbo_tightness(int quadrature_steps, double rel_tolerance);

/// Numerically minimizing the population DSE loss over a free score table
/// recovers the oracle concrete score within rel_tolerance per entry.
std::vector<CheckResult> check_loss_optimality(double rel_tolerance);

std::vector<CheckResult> run_oracle_suite(bool flip_sigma_sign = false);

}  // namespace gsedd::checks

#endif
