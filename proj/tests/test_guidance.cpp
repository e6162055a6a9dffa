#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "gsedd/guidance.hpp"
#include "gsedd/rng.hpp"

using namespace gsedd;

namespace {

std::string src_dir() {
    const char* dir = std::getenv("GSEDD_SRC_DIR");
    return dir ? dir : ".";
}

HydropathyScale kd_scale() {
    return HydropathyScale::load(src_dir() + "/data/hydropathy_kd.tsv", Alphabet::canonical());
}

}  // namespace

TEST_CASE("hydropathy score basics") {
    const Alphabet alphabet = Alphabet::canonical();
    std::vector<double> values(21, 3.25);
    const auto constant = HydropathyScale::from_values(alphabet, values);
    CHECK(hydropathy_score(encode("ACDEFG", alphabet), constant) == doctest::Approx(3.25));

    const auto scale = kd_scale();
    // two-token sequence: the mean of the two values
    CHECK(hydropathy_score(encode("AI", alphabet), scale) ==
          doctest::Approx(0.5 * (1.8 + 4.5)).epsilon(1e-12));
    CHECK_THROWS_AS(hydropathy_score({0, 20}, scale), std::invalid_argument);

    // permutation invariance
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        TokenSequence x(12);
        for (auto& tok : x) tok = rng.uniform_int(20);
        TokenSequence shuffled = x;
        for (size_t i = shuffled.size(); i > 1; --i)
            std::swap(shuffled[i - 1], shuffled[static_cast<size_t>(rng.uniform_int(static_cast<int>(i)))]);
        CHECK(hydropathy_score(x, scale) ==
              doctest::Approx(hydropathy_score(shuffled, scale)).epsilon(1e-12));
    }
}

TEST_CASE("linear probe learns a separable toy perfectly") {
    // class = token at position 0
    Rng rng(11);
    std::vector<LabeledSequence> train, val;
    for (int k = 0; k < 400; ++k) {
        TokenSequence x(6);
        for (auto& tok : x) tok = rng.uniform_int(4);
        const double label = x[0] >= 2 ? 1.0 : 0.0;
        (k % 4 == 0 ? val : train).push_back({x, label});
    }
    ProbeFitConfig config;
    config.seed = 1;
    const auto result = fit_linear_probe(train, val, ProbeTask::binary, 2, 6, 4, config);
    int correct = 0;
    for (const auto& ex : val)
        correct += (result.probe.value(ex.x, 0) > 0.0) == (ex.label > 0.5);
    CHECK(correct == static_cast<int>(val.size()));
}

TEST_CASE("labels independent of sequence stay at chance") {
    Rng rng(12);
    std::vector<LabeledSequence> train, val;
    for (int k = 0; k < 800; ++k) {
        TokenSequence x(6);
        for (auto& tok : x) tok = rng.uniform_int(4);
        const double label = rng.uniform() < 0.5 ? 1.0 : 0.0;
        (k % 4 == 0 ? val : train).push_back({x, label});
    }
    ProbeFitConfig config;
    config.seed = 2;
    const auto result = fit_linear_probe(train, val, ProbeTask::binary, 2, 6, 4, config);
    int correct = 0;
    for (const auto& ex : val)
        correct += (result.probe.value(ex.x, 0) > 0.0) == (ex.label > 0.5);
    const double accuracy = static_cast<double>(correct) / val.size();
    const double sigma = std::sqrt(0.25 / val.size());
    CHECK(std::abs(accuracy - 0.5) < 3.0 * sigma + 1e-9);
}

TEST_CASE("regression on hydropathy labels reaches spearman 0.99") {
    const Alphabet alphabet = Alphabet::canonical();
    const auto scale = kd_scale();
    Rng rng(13);
    std::vector<LabeledSequence> train, val;
    for (int k = 0; k < 1200; ++k) {
        TokenSequence x(10);
        for (auto& tok : x) tok = rng.uniform_int(20);
        const double label = hydropathy_score(x, scale);
        (k % 5 == 0 ? val : train).push_back({x, label});
    }
    ProbeFitConfig config;
    config.seed = 3;
    config.max_steps = 8000;
    config.learning_rate = 0.2;
    const auto result =
        fit_linear_probe(train, val, ProbeTask::regression, 1, 10, alphabet.size(), config);

    // spearman rank correlation on the validation split
    std::vector<double> pred, truth;
    for (const auto& ex : val) {
        pred.push_back(result.probe.value(ex.x, 0));
        truth.push_back(ex.label);
    }
    auto ranks = [](const std::vector<double>& v) {
        std::vector<size_t> idx(v.size());
        for (size_t i = 0; i < v.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
        return r;
    };
    const auto rp = ranks(pred), rt = ranks(truth);
    double mean = (rp.size() - 1) / 2.0, num = 0.0, da = 0.0, db = 0.0;
    for (size_t i = 0; i < rp.size(); ++i) {
        num += (rp[i] - mean) * (rt[i] - mean);
        da += (rp[i] - mean) * (rp[i] - mean);
        db += (rt[i] - mean) * (rt[i] - mean);
    }
    CHECK(num / std::sqrt(da * db) >= 0.99);
}

TEST_CASE("degenerate single-class data rejected") {
    std::vector<LabeledSequence> train{{{0, 1}, 0.0}, {{1, 0}, 0.0}};
    std::vector<LabeledSequence> val{{{0, 1}, 0.0}};
    ProbeFitConfig config;
    CHECK_THROWS_AS(fit_linear_probe(train, val, ProbeTask::binary, 2, 2, 4, config),
                    std::invalid_argument);
    CHECK_THROWS_AS(fit_linear_probe({}, val, ProbeTask::regression, 1, 2, 4, config),
                    std::invalid_argument);
}

TEST_CASE("neighbor logits: batched linear probe equals the brute-force loop") {
    Rng rng(14);
    LinearProbe probe;
    probe.task = ProbeTask::regression;
    probe.d_max = 5;
    probe.n = 6;
    probe.outputs = 1;
    probe.weights.assign(1, Mat::Zero(5, 6));
    probe.biases.assign(1, 0.3);
    for (Eigen::Index i = 0; i < 5; ++i)
        for (Eigen::Index y = 0; y < 6; ++y) probe.weights[0](i, y) = rng.normal();

    const ProbeClassifier classifier(probe, 0, 1.0);
    const TokenSequence x{0, 3, 5, 2, 1};
    Mat fast;
    const double current = classifier.neighbor_logits(x, fast);
    CHECK(current == doctest::Approx(classifier.logit(x)).epsilon(1e-12));

    TokenSequence y = x;
    for (int i = 0; i < 5; ++i) {
        for (int tok = 0; tok < 6; ++tok) {
            y[static_cast<size_t>(i)] = tok;
            CHECK(fast(i, tok) == doctest::Approx(classifier.logit(y)).epsilon(1e-12));
            // linearity identity: the difference is the weight-table difference
            CHECK(fast(i, tok) - current ==
                  doctest::Approx(probe.weights[0](i, tok) -
                                  probe.weights[0](i, x[static_cast<size_t>(i)]))
                      .epsilon(1e-12));
        }
        y[static_cast<size_t>(i)] = x[static_cast<size_t>(i)];
    }
    CHECK(fast.rows() == 5);
    CHECK(fast.cols() == 6);
}

TEST_CASE("guided score is invariant to constant logit shifts") {
    Rng rng(15);
    ScoreTable score(3, std::vector<double>(6, 0.0));
    TokenSequence x{1, 4, 2};
    for (size_t i = 0; i < 3; ++i) {
        for (size_t y = 0; y < 6; ++y) score[i][y] = 0.1 + rng.uniform();
        score[i][static_cast<size_t>(x[i])] = 1.0;
    }
    Mat logits(3, 6);
    for (Eigen::Index i = 0; i < 3; ++i)
        for (Eigen::Index y = 0; y < 6; ++y) logits(i, y) = rng.normal();
    for (Eigen::Index i = 0; i < 3; ++i) logits(i, x[static_cast<size_t>(i)]) = -0.25;

    const auto base = guided_score(score, logits, -0.25, 1.7);
    const Mat shifted = logits.array() + 11.25;
    const auto moved = guided_score(score, shifted, -0.25 + 11.25, 1.7);
    for (size_t i = 0; i < 3; ++i)
        for (size_t y = 0; y < 6; ++y)
            CHECK(base[i][y] == doctest::Approx(moved[i][y]).epsilon(1e-9));
}

TEST_CASE("probe fitting is deterministic and serializable") {
    Rng rng(16);
    std::vector<LabeledSequence> train, val;
    for (int k = 0; k < 200; ++k) {
        TokenSequence x(4);
        for (auto& tok : x) tok = rng.uniform_int(5);
        const double label = 0.5 * x[1] - 0.2 * x[3];
        (k % 4 == 0 ? val : train).push_back({x, label});
    }
    ProbeFitConfig config;
    config.seed = 9;
    const auto a = fit_linear_probe(train, val, ProbeTask::regression, 1, 4, 5, config);
    const auto b = fit_linear_probe(train, val, ProbeTask::regression, 1, 4, 5, config);
    CHECK(a.best_val_loss == b.best_val_loss);
    CHECK(a.probe.weights[0] == b.probe.weights[0]);

    const LinearProbe restored = LinearProbe::from_json(a.probe.to_json());
    CHECK(restored.value({1, 2, 3, 4}, 0) ==
          doctest::Approx(a.probe.value({1, 2, 3, 4}, 0)).epsilon(1e-12));
}
