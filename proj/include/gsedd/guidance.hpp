#ifndef GSEDD_GUIDANCE_HPP
#define GSEDD_GUIDANCE_HPP

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "gsedd/model.hpp"
#include "gsedd/seq.hpp"
#include "gsedd/types.hpp"

namespace gsedd {

/// A property predictor exposing per-sequence logits. neighbor_logits fills a
/// d x n table with the logits of every single-substitution neighbor as one
/// batched call; entry (i, x_i) equals the current-sequence logit.
class Classifier {
public:
    virtual ~Classifier() = default;
    virtual int alphabet_size() const = 0;
    virtual double logit(const TokenSequence& x) const = 0;
    virtual double neighbor_logits(const TokenSequence& x, Mat& out) const;
};

/// Per-token property values loaded from a TSV scale file.
struct HydropathyScale {
    Alphabet alphabet;
    std::vector<double> values;  // indexed by token id; mask entry unused

    static HydropathyScale load(const std::filesystem::path& path, const Alphabet& alphabet);
    static HydropathyScale from_values(const Alphabet& alphabet, std::vector<double> values);
};

/// Arithmetic mean of scale values over positions; rejects mask tokens.
double hydropathy_score(const TokenSequence& x, const HydropathyScale& scale);

enum class ProbeTask { binary, multiclass, regression };

/// Per-position, per-token weight tables over one-hot features plus a bias
/// per output.
struct LinearProbe {
    ProbeTask task = ProbeTask::regression;
    int d_max = 0;
    int n = 0;
    int outputs = 1;  // classes for multiclass, 1 otherwise
    std::vector<Mat> weights;
    std::vector<double> biases;

    double value(const TokenSequence& x, int output) const;
    std::string to_json() const;
    static LinearProbe from_json(const std::string& text);
};

struct LabeledSequence {
    TokenSequence x;
    double label = 0.0;  // class id for classification tasks
};

struct ProbeFitConfig {
    double learning_rate = 0.05;
    int batch_size = 128;
    int max_steps = 4000;
    int eval_every = 50;
    int patience = 3;
    double min_delta = 1e-4;
    uint64_t seed = 0;
};

struct ProbeFitRow {
    int step = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct ProbeFitResult {
    LinearProbe probe;  // best validation loss
    double best_val_loss = 0.0;
    std::vector<ProbeFitRow> log;
};

/// Minibatch gradient descent on cross-entropy (classification) or squared
/// error (regression) with early stopping on validation loss.
ProbeFitResult fit_linear_probe(const std::vector<LabeledSequence>& train,
                                const std::vector<LabeledSequence>& val, ProbeTask task,
                                int classes, int d_max, int n, const ProbeFitConfig& config);

/// Classifier over a fitted probe; target_class selects the output whose
/// unnormalized log-probability is returned, sign lets regression targets be
/// minimized (sign -1) or maximized (sign +1).
class ProbeClassifier : public Classifier {
public:
    ProbeClassifier(LinearProbe probe, int target_class, double sign);
    int alphabet_size() const override { return probe_.n; }
    double logit(const TokenSequence& x) const override;
    double neighbor_logits(const TokenSequence& x, Mat& out) const override;
    const LinearProbe& probe() const { return probe_; }

private:
    LinearProbe probe_;
    int target_class_;
    double sign_;
};

/// Exact hydropathy scorer usable for guidance; sign -1 guides toward lower
/// values. Mask-substitution neighbors receive the current logit (ratio 1).
class HydropathyClassifier : public Classifier {
public:
    HydropathyClassifier(HydropathyScale scale, double sign);
    int alphabet_size() const override { return scale_.alphabet.size(); }
    double logit(const TokenSequence& x) const override;
    double neighbor_logits(const TokenSequence& x, Mat& out) const override;

private:
    HydropathyScale scale_;
    double sign_;
};

/// Serialized classifier spec: {"type": "linear_probe"|"hydropathy", ...}.
std::unique_ptr<Classifier> load_classifier(const std::filesystem::path& path,
                                            const Alphabet& alphabet);
void save_probe_classifier(const LinearProbe& probe, int target_class, double sign,
                           const std::filesystem::path& path);

/// Guided table per Eq. 1: entry (i,y) = score(i,y) * exp(gamma *
/// (neighbor_logit(i,y) - current_logit)); current-token entries remain 1.
ScoreTable guided_score(const ScoreTable& score, const Mat& neighbor_logits,
                        double current_logit, double gamma);

}  // namespace gsedd

#endif
