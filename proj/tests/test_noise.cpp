#include <doctest.h>

#include <cmath>

#include "gsedd/noise.hpp"
#include "gsedd/oracle.hpp"
#include "gsedd/rng.hpp"

using namespace gsedd;

namespace {
const Alphabet kCanonical = Alphabet::canonical();
}

TEST_CASE("total_noise anchors and monotonicity") {
    const NoiseSchedule schedule;  // epsilon 1e-3
    CHECK(schedule.total_noise(0.0) == 0.0);
    CHECK(schedule.total_noise(1.0) == doctest::Approx(std::log(1000.0)).epsilon(1e-12));
    CHECK(schedule.total_noise(0.5) == doctest::Approx(-std::log(0.5005)).epsilon(1e-12));
    CHECK_THROWS_AS(schedule.total_noise(-0.1), std::invalid_argument);
    CHECK_THROWS_AS(schedule.total_noise(1.1), std::invalid_argument);
    double prev = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double sigma = schedule.total_noise(k / 100.0);
        CHECK(sigma > prev);
        prev = sigma;
    }
}

TEST_CASE("marginal at t=0 is a point mass") {
    const NoiseSchedule schedule;
    const TokenSequence x0{0, 5, 19};
    for (const auto& kernel :
         {TransitionKernel::uniform(kCanonical), TransitionKernel::mask_absorbing(kCanonical),
          TransitionKernel::germline_absorbing(kCanonical, {1, 2, 3})}) {
        const auto rows = marginal(kernel, x0, 0.0, schedule);
        for (size_t i = 0; i < x0.size(); ++i) {
            CHECK(rows[i][static_cast<size_t>(x0[i])] == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("germline marginal closed form at sigma = ln 2") {
    // x0 != germline: both carry probability one half
    const NoiseSchedule schedule;
    const TokenSequence germ{3};
    const auto kernel = TransitionKernel::germline_absorbing(kCanonical, germ);
    // pick t with sigma = ln 2: 1 - (1-eps) t = 0.5
    const double t = 0.5 / (1.0 - schedule.epsilon);
    CHECK(schedule.total_noise(t) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    const auto rows = marginal(kernel, {7}, t, schedule);
    CHECK(rows[0][7] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(rows[0][3] == doctest::Approx(0.5).epsilon(1e-12));

    // x0 == germline stays a point mass at every t
    for (double tt : {0.1, 0.5, 0.9, 1.0}) {
        const auto fixed = marginal(kernel, {3}, tt, schedule);
        CHECK(fixed[0][3] == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("marginal rows sum to one") {
    const NoiseSchedule schedule;
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const TokenSequence x0{rng.uniform_int(20), rng.uniform_int(20)};
        const TokenSequence germ{rng.uniform_int(20), rng.uniform_int(20)};
        const double t = rng.uniform();
        for (const auto& kernel :
             {TransitionKernel::uniform(kCanonical), TransitionKernel::mask_absorbing(kCanonical),
              TransitionKernel::germline_absorbing(kCanonical, germ)}) {
            for (const auto& row : marginal(kernel, x0, t, schedule)) {
                double total = 0.0;
                for (double v : row) total += v;
                CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("forward_sample at t=0 returns the observed sequence") {
    const NoiseSchedule schedule;
    const auto pair = GermlinePair{{1, 2, 3}, {1, 5, 3}, "x"};
    const auto kernel = TransitionKernel::germline_absorbing(kCanonical, pair.germline);
    CHECK(forward_sample(kernel, pair, 0.0, schedule, 9) == pair.observed);
}

TEST_CASE("forward_sample determinism and absorption rates at t=1") {
    const NoiseSchedule schedule;  // eps 1e-3: absorb probability 0.999 at t=1
    const auto pair = GermlinePair{{1, 2}, {4, 5}, "x"};
    const auto kernel = TransitionKernel::germline_absorbing(kCanonical, pair.germline);
    CHECK(forward_sample(kernel, pair, 0.7, schedule, 11) ==
          forward_sample(kernel, pair, 0.7, schedule, 11));

    int absorbed = 0;
    const int draws = 100000;
    for (int k = 0; k < draws; ++k) {
        const auto x = forward_sample(kernel, pair, 1.0, schedule, static_cast<uint64_t>(k));
        absorbed += x[0] == 1;
    }
    const double rate = static_cast<double>(absorbed) / draws;
    CHECK(rate == doctest::Approx(0.999).epsilon(0.0011));
}

TEST_CASE("mask kernel at t=1 is nearly all mask") {
    const NoiseSchedule schedule;
    const auto kernel = TransitionKernel::mask_absorbing(kCanonical);
    const auto pair = GermlinePair{{3}, {3}, "x"};
    int masked = 0;
    const int draws = 100000;
    for (int k = 0; k < draws; ++k)
        masked += forward_sample(kernel, pair, 1.0, schedule, static_cast<uint64_t>(k))[0] == 20;
    CHECK(static_cast<double>(masked) / draws == doctest::Approx(0.999).epsilon(0.0011));
}

TEST_CASE("marginal_ratio closed forms") {
    const auto kernel = TransitionKernel::germline_absorbing(kCanonical, {3});
    // y == x_t is the self ratio
    CHECK(marginal_ratio(kernel, 7, 3, 3, std::log(2.0), 0) == doctest::Approx(1.0));
    // x_t = germline, y = x0: p(y)=0.5 / p(g)=0.5 at sigma = ln 2
    CHECK(marginal_ratio(kernel, 7, 3, 7, std::log(2.0), 0) == doctest::Approx(1.0));
    // sigma = ln 4: 0.25 / 0.75
    CHECK(marginal_ratio(kernel, 7, 3, 7, std::log(4.0), 0) == doctest::Approx(1.0 / 3.0));
    // zero-probability x_t rejected
    CHECK_THROWS_AS(marginal_ratio(kernel, 7, 9, 7, std::log(2.0), 0), std::invalid_argument);
}

TEST_CASE("step_transition_matrix closed forms vs series oracle") {
    CHECK(step_transition_matrix(TransitionKernel::uniform(kCanonical), 0.0, 0)
              .isApprox(Eigen::MatrixXd::Identity(21, 21), 1e-12));

    Rng rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        const int pick = rng.uniform_int(3);
        const TransitionKernel kernel =
            pick == 0 ? TransitionKernel::uniform(kCanonical)
            : pick == 1 ? TransitionKernel::mask_absorbing(kCanonical)
                        : TransitionKernel::germline_absorbing(kCanonical, {rng.uniform_int(20)});
        const double dsigma = -5.0 + 10.0 * rng.uniform();
        const auto closed = step_transition_matrix(kernel, dsigma, 0);
        const auto series = oracle::matrix_exponential(oracle::rate_matrix(kernel, 0), dsigma);
        CHECK((closed - series).cwiseAbs().maxCoeff() < 1e-8);
        if (dsigma >= 0.0) {
            for (int r = 0; r < closed.rows(); ++r)
                CHECK(closed.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("uniform step matrix limit") {
    const Alphabet ab("ABCDE");
    const auto kernel = TransitionKernel::uniform(ab);
    const auto m = step_transition_matrix(kernel, 50.0, 0);
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 5; ++c) CHECK(m(r, c) == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("chapman-kolmogorov across the schedule") {
    const NoiseSchedule schedule;
    Rng rng(13);
    for (int trial = 0; trial < 30; ++trial) {
        double t1 = rng.uniform(), t2 = rng.uniform();
        if (t1 > t2) std::swap(t1, t2);
        if (t2 - t1 < 1e-3) t2 = std::min(1.0, t1 + 0.1);
        const TokenSequence x0{rng.uniform_int(20)};
        const TokenSequence germ{rng.uniform_int(20)};
        const int pick = rng.uniform_int(3);
        const TransitionKernel kernel =
            pick == 0 ? TransitionKernel::uniform(kCanonical)
            : pick == 1 ? TransitionKernel::mask_absorbing(kCanonical)
                        : TransitionKernel::germline_absorbing(kCanonical, germ);
        const auto at_t1 = marginal(kernel, x0, t1, schedule);
        const auto at_t2 = marginal(kernel, x0, t2, schedule);
        const auto step = step_transition_matrix(
            kernel, schedule.total_noise(t2) - schedule.total_noise(t1), 0);
        for (int y = 0; y < kernel.alphabet().size(); ++y) {
            double pushed = 0.0;
            for (int b = 0; b < kernel.alphabet().size(); ++b)
                pushed += at_t1[0][static_cast<size_t>(b)] * step(b, y);
            CHECK(pushed == doctest::Approx(at_t2[0][static_cast<size_t>(y)]).epsilon(1e-9));
        }
    }
}

TEST_CASE("stationarity as t->1 with vanishing epsilon") {
    NoiseSchedule schedule;
    schedule.epsilon = 1e-9;
    const auto uniform_rows = marginal(TransitionKernel::uniform(kCanonical), {4}, 1.0, schedule);
    for (int y = 0; y < 20; ++y)
        CHECK(uniform_rows[0][static_cast<size_t>(y)] == doctest::Approx(1.0 / 20).epsilon(1e-6));
    CHECK(uniform_rows[0][20] == 0.0);  // mask outside the uniform support

    const auto mask_rows = marginal(TransitionKernel::mask_absorbing(kCanonical), {4}, 1.0, schedule);
    CHECK(mask_rows[0][20] == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("germline positions equal to the target never move") {
    const NoiseSchedule schedule;
    const auto pair = GermlinePair{{2, 9}, {2, 9}, "x"};
    const auto kernel = TransitionKernel::germline_absorbing(kCanonical, pair.germline);
    for (int k = 0; k < 200; ++k) {
        const auto x = forward_sample(kernel, pair, 0.5 + 0.005 * k / 200, schedule,
                                      static_cast<uint64_t>(k));
        CHECK(x == pair.observed);
    }
}

TEST_CASE("analytic score scale") {
    const auto kernel = TransitionKernel::mask_absorbing(kCanonical);
    const double sigma = std::log(2.0);
    CHECK(analytic_score_scale(kernel, sigma) == doctest::Approx(1.0));  // 0.5 / 0.5
    CHECK(analytic_score_scale(TransitionKernel::uniform(kCanonical), sigma) == 1.0);
}
