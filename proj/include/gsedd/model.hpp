#ifndef GSEDD_MODEL_HPP
#define GSEDD_MODEL_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gsedd/noise.hpp"
#include "gsedd/seq.hpp"
#include "gsedd/types.hpp"

namespace gsedd {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
    int layers = 4;
    int embed_dim = 128;
    int heads = 4;
    int feedforward_dim = 512;
    int max_length = 128;
    int alphabet_size = 21;
    bool time_conditioned = false;
    KernelVariant variant = KernelVariant::germline_absorbing;

    void validate() const;
};

struct TensorSpec {
    std::string name;
    std::vector<int64_t> shape;
    int64_t offset = 0;
    int64_t size = 0;
};

/// Fixed tensor manifest derived from a ModelConfig; parameters and the EMA
/// shadow are flat vectors sharing this layout.
struct ParamLayout {
    std::vector<TensorSpec> tensors;
    int64_t total = 0;

    static ParamLayout from_config(const ModelConfig& config);
    const TensorSpec& find(const std::string& name) const;
};

class CheckpointError : public std::runtime_error {
public:
    enum class Kind { invalid, version_mismatch, shape_mismatch, truncated };
    CheckpointError(Kind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Activation caches for one forward pass; reusable across calls.
struct ForwardTrace;

class ScoreModel {
public:
    ModelConfig config;
    ParamLayout layout;
    std::vector<double> params;
    std::vector<double> ema;
    int64_t step = 0;
    uint64_t seed = 0;

    /// Deterministic initialization; weights from a normal scaled by
    /// 1/sqrt(embed_dim), biases zero. Values are f32-representable so that
    /// checkpoints round-trip bit-exactly.
    static ScoreModel init(const ModelConfig& config, uint64_t seed);

    /// The d x n table exp(raw outputs) with current-token entries set to 1.
    /// t must be supplied iff the model is time conditioned.
    ScoreTable forward(const TokenSequence& x, std::optional<double> t,
                       bool use_ema = false) const;

    /// Sinusoidal features of t with learned frequencies.
    std::vector<double> time_embedding(double t) const;
};

ForwardTrace* new_trace();
void free_trace(ForwardTrace* trace);

struct TraceHandle {
    TraceHandle() : ptr(new_trace()) {}
    ~TraceHandle() { free_trace(ptr); }
    TraceHandle(const TraceHandle&) = delete;
    TraceHandle& operator=(const TraceHandle&) = delete;
    ForwardTrace* ptr;
};

/// Forward pass that records activations for a subsequent backward call.
/// Returns raw logits (d x n); the score table is exp(logits) with the
/// current-token column forced to 1.
Mat score_forward_logits(const ModelConfig& config, const ParamLayout& layout,
                         const double* params, const TokenSequence& x,
                         std::optional<double> t, ForwardTrace& trace);

/// Accumulates d(loss)/d(params) into grad given d(loss)/d(logits).
void score_backward(const ModelConfig& config, const ParamLayout& layout,
                    const double* params, const ForwardTrace& trace,
                    const Mat& dlogits, double* grad);

ScoreTable logits_to_score(const Mat& logits, const TokenSequence& x);

/// Rounds every value to its nearest f32; keeps in-memory state identical to
/// what a saved checkpoint reloads.
void quantize_f32(std::vector<double>& values);

void save_checkpoint(const ScoreModel& model, const std::filesystem::path& path);
ScoreModel load_checkpoint(const std::filesystem::path& path);

}  // namespace gsedd

#endif
