#include <doctest.h>

#include <cmath>

#include "gsedd/eval.hpp"
#include "gsedd/rng.hpp"
#include "gsedd/train.hpp"

using namespace gsedd;
using gsedd::oracle::ToyDistribution;

TEST_CASE("tv distance") {
    ToyDistribution p(Alphabet("AB"), 1, {1.0, 0.0});
    ToyDistribution q(Alphabet("AB"), 1, {0.0, 1.0});
    CHECK(tv_distance(p, p) == 0.0);
    CHECK(tv_distance(p, q) == 1.0);
    ToyDistribution other(Alphabet("ABC"), 1, {1.0, 0.0, 0.0});
    CHECK_THROWS_AS(tv_distance(p, other), std::invalid_argument);

    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a(4), b(4);
        double sa = 0.0, sb = 0.0;
        for (int i = 0; i < 4; ++i) {
            a[static_cast<size_t>(i)] = rng.uniform();
            b[static_cast<size_t>(i)] = rng.uniform();
            sa += a[static_cast<size_t>(i)];
            sb += b[static_cast<size_t>(i)];
        }
        for (int i = 0; i < 4; ++i) {
            a[static_cast<size_t>(i)] /= sa;
            b[static_cast<size_t>(i)] /= sb;
        }
        double naive = 0.0;
        for (int i = 0; i < 4; ++i) naive += std::abs(a[static_cast<size_t>(i)] - b[static_cast<size_t>(i)]);
        ToyDistribution pa(Alphabet("ABCD"), 1, a);
        ToyDistribution pb(Alphabet("ABCD"), 1, b);
        CHECK(tv_distance(pa, pb) == doctest::Approx(0.5 * naive).epsilon(1e-12));
    }
}

TEST_CASE("nn identity basics and the naive double loop") {
    CHECK(nn_identity({"ACDE", "GGGG"}, {"ACDE", "GGGG", "AAAA"}) == 1.0);
    CHECK(nn_identity({"AAAA"}, {"CCCC"}) == 0.0);
    CHECK_THROWS_AS(nn_identity({"A"}, {}), std::invalid_argument);

    Rng rng(3);
    auto random_string = [&rng](int len) {
        std::string s;
        for (int i = 0; i < len; ++i) s.push_back(static_cast<char>('A' + rng.uniform_int(4)));
        return s;
    };
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::string> samples, refs;
        for (int k = 0; k < 5; ++k) samples.push_back(random_string(4 + rng.uniform_int(4)));
        for (int k = 0; k < 7; ++k) refs.push_back(random_string(4 + rng.uniform_int(4)));
        double naive = 0.0;
        for (const auto& s : samples) {
            double best = 0.0;
            for (const auto& r : refs) best = std::max(best, sequence_identity(s, r));
            naive += best;
        }
        naive /= samples.size();
        CHECK(nn_identity(samples, refs) == doctest::Approx(naive).epsilon(1e-12));

        // supersets of the reference set never lower the identity
        std::vector<std::string> subset(refs.begin(), refs.begin() + 3);
        CHECK(nn_identity(samples, refs) >= nn_identity(samples, subset) - 1e-12);
    }
}

TEST_CASE("pairwise diversity") {
    CHECK(pairwise_diversity({"AAAA", "AAAA", "AAAA"}) == 0.0);
    CHECK(pairwise_diversity({"kitten", "sitten"}) == 1.0);
    CHECK_THROWS_AS(pairwise_diversity({"A"}), std::invalid_argument);
    const std::vector<std::string> forward{"ABC", "ABD", "XYZ"};
    const std::vector<std::string> shuffled{"XYZ", "ABC", "ABD"};
    CHECK(pairwise_diversity(forward) == doctest::Approx(pairwise_diversity(shuffled)));
}

namespace {

// oracle-model harness: always ranks the observed token first
ScoreFn perfect_predictor(const std::vector<GermlinePair>& pairs, const Alphabet& alphabet) {
    return [pairs, alphabet](const TokenSequence& x, std::optional<double>) {
        ScoreTable table(x.size(), std::vector<double>(static_cast<size_t>(alphabet.size()), 0.01));
        // find the matching pair by everything-but-one-position agreement
        for (const auto& pair : pairs) {
            if (pair.observed.size() != x.size()) continue;
            int mismatches = 0;
            for (size_t i = 0; i < x.size(); ++i) mismatches += pair.observed[i] != x[i];
            if (mismatches > 1) continue;
            for (size_t i = 0; i < x.size(); ++i)
                table[i][static_cast<size_t>(pair.observed[i])] = 50.0;
            break;
        }
        for (size_t i = 0; i < x.size(); ++i) table[i][static_cast<size_t>(x[i])] = 1.0;
        return table;
    };
}

}  // namespace

TEST_CASE("non_germline_accuracy: perfect model, forced choice, chance floor") {
    const Alphabet alphabet = Alphabet::canonical();
    Rng rng(5);
    std::vector<GermlinePair> pairs;
    for (int k = 0; k < 40; ++k) {
        TokenSequence germ(12), obs(12);
        for (size_t i = 0; i < 12; ++i) {
            germ[i] = rng.uniform_int(20);
            obs[i] = rng.uniform() < 0.25 ? rng.uniform_int(20) : germ[i];
        }
        pairs.push_back({germ, obs, "p" + std::to_string(k)});
    }
    const auto perfect = perfect_predictor(pairs, alphabet);
    for (const auto variant :
         {KernelVariant::germline_absorbing, KernelVariant::mask_absorbing, KernelVariant::uniform})
        CHECK(non_germline_accuracy(perfect, variant, alphabet, pairs, 3) == 1.0);

    // two-token alphabet: excluding the germline leaves a single candidate
    const Alphabet two("AB#", 2);
    std::vector<GermlinePair> forced{{{0, 0, 1}, {1, 0, 1}, "f"}};
    ScoreFn arbitrary = [](const TokenSequence& x, std::optional<double>) {
        return ScoreTable(x.size(), std::vector<double>(3, 0.5));
    };
    CHECK(non_germline_accuracy(arbitrary, KernelVariant::mask_absorbing, two, forced, 1) == 1.0);

    // uniform-random scores sit at the 1/(n-1) chance floor (maskless alphabet)
    const Alphabet six("ABCDEF");
    Rng drng(6);
    std::vector<GermlinePair> data;
    for (int k = 0; k < 400; ++k) {
        TokenSequence germ(8), obs(8);
        for (size_t i = 0; i < 8; ++i) {
            germ[i] = drng.uniform_int(6);
            obs[i] = germ[i];
            if (drng.uniform() < 0.5) {
                while (obs[i] == germ[i]) obs[i] = drng.uniform_int(6);
            }
        }
        data.push_back({germ, obs, "d"});
    }
    ScoreFn random_scores = [](const TokenSequence& x, std::optional<double>) {
        static thread_local uint64_t counter = 0;
        Rng rng(derive_seed(1234, "fake", counter++));
        ScoreTable table(x.size(), std::vector<double>(6, 0.0));
        for (auto& row : table)
            for (double& v : row) v = rng.uniform();
        return table;
    };
    const double acc =
        non_germline_accuracy(random_scores, KernelVariant::germline_absorbing, six, data, 7);
    int64_t total = 0;
    for (const auto& pair : data) total += static_cast<int64_t>(non_germline_positions(pair).size());
    const double chance = 1.0 / 5.0;
    const double sigma = std::sqrt(chance * (1.0 - chance) / static_cast<double>(total));
    CHECK(std::abs(acc - chance) < 3.0 * sigma);

    CHECK_THROWS_AS(non_germline_accuracy(arbitrary, KernelVariant::mask_absorbing, two,
                                          {{{0, 1}, {0, 1}, "same"}}, 1),
                    std::invalid_argument);
}

TEST_CASE("elbo converges as quadrature doubles and rejects bad configs") {
    const NoiseSchedule schedule;
    ToyDistribution toy(Alphabet("AB#", 2), 1, {0.75, 0.25, 0.0});
    const auto kernel = oracle::kernel_for_toy(toy, KernelVariant::mask_absorbing);
    ScoreFn exact = [&](const TokenSequence& x, std::optional<double> t) {
        ScoreTable s = oracle::exact_concrete_score(toy, kernel, x, *t, schedule);
        const double scale = analytic_score_scale(kernel, schedule.total_noise(*t));
        for (size_t i = 0; i < s.size(); ++i)
            for (size_t y = 0; y < s[i].size(); ++y)
                if (static_cast<int>(y) != x[i]) s[i][y] /= scale;
        return s;
    };
    std::vector<GermlinePair> seqs{{{0}, {0}, "a"}, {{1}, {1}, "b"}};

    double prev_gap = 1e9;
    double prev = 0.0;
    bool first = true;
    for (int q : {128, 256, 512, 1024}) {
        ElboConfig config;
        config.quadrature_steps = q;
        config.monte_carlo_samples = 8;
        config.seed = 3;
        const auto res = elbo_perplexity(exact, KernelVariant::mask_absorbing, toy.alphabet, seqs,
                                         config, schedule, false);
        if (!first) {
            const double gap = std::abs(res.aggregate - prev);
            CHECK(gap <= std::max(prev_gap * 1.5, 0.01));
            prev_gap = gap;
        }
        prev = res.aggregate;
        first = false;
    }

    ElboConfig bad;
    bad.quadrature_steps = 0;
    CHECK_THROWS_AS(elbo_perplexity(exact, KernelVariant::mask_absorbing, toy.alphabet, seqs, bad,
                                    schedule, false),
                    std::invalid_argument);
}

TEST_CASE("pseudo perplexity on a per-position predictor") {
    // uniform predictor over 4 tokens: pseudo-perplexity is exactly 4
    auto uniform_dist = [](const TokenSequence&, int) { return std::vector<double>(4, 0.25); };
    CHECK(pseudo_perplexity(uniform_dist, {0, 1, 2, 3}) == doctest::Approx(4.0).epsilon(1e-9));

    // a predictor that always knows the answer scores 1
    auto oracle_dist = [](const TokenSequence& x, int i) {
        std::vector<double> dist(4, 1e-12);
        dist[static_cast<size_t>(x[static_cast<size_t>(i)])] = 1.0;
        return dist;
    };
    CHECK(pseudo_perplexity(oracle_dist, {2, 1}) == doctest::Approx(1.0).epsilon(1e-6));
}
