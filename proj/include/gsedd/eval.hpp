#ifndef GSEDD_EVAL_HPP
#define GSEDD_EVAL_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gsedd/noise.hpp"
#include "gsedd/oracle.hpp"
#include "gsedd/seq.hpp"
#include "gsedd/types.hpp"

namespace gsedd {

/// Network-facing score source: returns the raw score table (before the
/// analytic time factor of absorbing kernels is applied).
using ScoreFn = std::function<ScoreTable(const TokenSequence&, std::optional<double>)>;

struct ElboConfig {
    int quadrature_steps = 256;
    int monte_carlo_samples = 4;
    uint64_t seed = 0;

    void validate() const;
};

struct ElboResult {
    std::vector<double> per_sequence;      // perplexity upper bound per sequence
    std::vector<double> per_sequence_nll;  // integrated bound on -log p, un-normalized
    double aggregate = 0.0;                // exp of the mean per-token integrand
};

/// Evidence-based perplexity upper bound: midpoint quadrature over t, Monte
/// Carlo over x_t ~ p_{t|0}, per-token DSE integrand including K(a); the
/// terminal KL term is taken as zero. When time_independent_scores is set
/// (the RADD network contract), absorbing variants call score_fn without t
/// and cache by state; pass false for score sources with real t dependence.
ElboResult elbo_perplexity(const ScoreFn& score_fn, KernelVariant variant,
                           const Alphabet& alphabet, const std::vector<GermlinePair>& pairs,
                           const ElboConfig& config, const NoiseSchedule& schedule,
                           bool time_independent_scores = true);

/// Fraction of germline-differing positions where the top-scored token
/// (excluding the germline residue and the mask symbol) equals the observed
/// residue; inputs have just the queried position noised per the variant.
double non_germline_accuracy(const ScoreFn& score_fn, KernelVariant variant,
                             const Alphabet& alphabet, const std::vector<GermlinePair>& pairs,
                             uint64_t seed);

/// Mean over samples of the max identity against the reference set.
double nn_identity(const std::vector<std::string>& samples,
                   const std::vector<std::string>& references);

/// Mean Levenshtein distance over unordered sample pairs.
double pairwise_diversity(const std::vector<std::string>& samples);

/// Half L1 distance between two toy distributions on the same support.
double tv_distance(const oracle::ToyDistribution& p, const oracle::ToyDistribution& q);

/// Masked-LM style pseudo-perplexity for any model exposing per-position
/// token distributions: dist_fn(x, i) is a distribution over the alphabet
/// for position i given x with that position hidden.
double pseudo_perplexity(
    const std::function<std::vector<double>(const TokenSequence&, int)>& dist_fn,
    const TokenSequence& x);

}  // namespace gsedd

#endif
