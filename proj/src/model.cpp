#include "gsedd/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gsedd/io.hpp"
#include "gsedd/rng.hpp"

namespace gsedd {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
double gelu_grad(double x) {
    const double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    return phi + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

using ConstMap = Eigen::Map<const Mat>;
using MutMap = Eigen::Map<Mat>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;
using MutVec = Eigen::Map<Eigen::VectorXd>;

}  // namespace

void ModelConfig::validate() const {
    if (layers < 1 || embed_dim < 2 || heads < 1 || feedforward_dim < 1 ||
        max_length < 1 || alphabet_size < 2)
        throw std::invalid_argument("ModelConfig: counts must be positive");
    if (embed_dim % heads != 0)
        throw std::invalid_argument("ModelConfig: embed_dim must be divisible by heads");
    if (embed_dim % 2 != 0)
        throw std::invalid_argument("ModelConfig: embed_dim must be even");
    if (time_conditioned != (variant == KernelVariant::uniform))
        throw std::invalid_argument(
            "ModelConfig: uniform variant requires time conditioning, absorbing variants forbid it");
}

ParamLayout ParamLayout::from_config(const ModelConfig& config) {
    config.validate();
    const int64_t e = config.embed_dim;
    const int64_t ff = config.feedforward_dim;
    const int64_t n = config.alphabet_size;
    ParamLayout layout;
    auto add = [&layout](std::string name, std::vector<int64_t> shape) {
        int64_t size = 1;
        for (int64_t s : shape) size *= s;
        layout.tensors.push_back({std::move(name), std::move(shape), layout.total, size});
        layout.total += size;
    };
    add("tok_emb", {n, e});
    add("pos_emb", {config.max_length, e});
    // independent learned frequencies for the sine and cosine halves
    if (config.time_conditioned) add("time_freq", {e});
    for (int l = 0; l < config.layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        add(p + "ln1.gain", {e});
        add(p + "ln1.bias", {e});
        add(p + "attn.wq", {e, e});
        add(p + "attn.bq", {e});
        add(p + "attn.wk", {e, e});
        add(p + "attn.bk", {e});
        add(p + "attn.wv", {e, e});
        add(p + "attn.bv", {e});
        add(p + "attn.wo", {e, e});
        add(p + "attn.bo", {e});
        add(p + "ln2.gain", {e});
        add(p + "ln2.bias", {e});
        add(p + "ff.w1", {e, ff});
        add(p + "ff.b1", {ff});
        add(p + "ff.w2", {ff, e});
        add(p + "ff.b2", {e});
    }
    add("final_ln.gain", {e});
    add("final_ln.bias", {e});
    add("head.w", {e, n});
    add("head.b", {n});
    return layout;
}

const TensorSpec& ParamLayout::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t;
    throw std::invalid_argument("ParamLayout: no tensor named " + name);
}

void quantize_f32(std::vector<double>& values) {
    for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

ScoreModel ScoreModel::init(const ModelConfig& config, uint64_t seed) {
    ScoreModel model;
    model.config = config;
    model.layout = ParamLayout::from_config(config);
    model.params.assign(static_cast<size_t>(model.layout.total), 0.0);
    model.seed = seed;
    const double scale = 1.0 / std::sqrt(static_cast<double>(config.embed_dim));
    for (const auto& spec : model.layout.tensors) {
        double* dst = model.params.data() + spec.offset;
        const auto dot = spec.name.rfind('.');
        const std::string leaf = dot == std::string::npos ? spec.name : spec.name.substr(dot + 1);
        const bool is_gain = leaf == "gain";
        const bool is_bias = !leaf.empty() && leaf[0] == 'b';
        if (spec.name == "time_freq") {
            // geometric frequencies covering t in [0,1]; the cosine half is
            // staggered so the two halves stay independent from the start
            const int64_t half = spec.size / 2;
            const double denom = half > 1 ? static_cast<double>(half - 1) : 1.0;
            for (int64_t k = 0; k < spec.size; ++k) {
                const double j = static_cast<double>(k % half) + (k >= half ? 0.5 : 0.0);
                dst[k] = std::pow(1000.0, j / denom);
            }
        } else if (is_gain) {
            for (int64_t k = 0; k < spec.size; ++k) dst[k] = 1.0;
        } else if (is_bias) {
            // zeros already
        } else {
            Rng rng(derive_seed(seed, "init." + spec.name));
            for (int64_t k = 0; k < spec.size; ++k) dst[k] = scale * rng.normal();
        }
    }
    quantize_f32(model.params);
    model.ema = model.params;
    return model;
}

std::vector<double> ScoreModel::time_embedding(double t) const {
    if (!config.time_conditioned)
        throw std::logic_error("time_embedding: model is not time conditioned");
    const auto& spec = layout.find("time_freq");
    const double* freq = params.data() + spec.offset;
    const int64_t half = spec.size / 2;
    std::vector<double> emb(static_cast<size_t>(config.embed_dim));
    for (int64_t k = 0; k < half; ++k) {
        emb[static_cast<size_t>(k)] = std::sin(freq[k] * t);
        emb[static_cast<size_t>(half + k)] = std::cos(freq[half + k] * t);
    }
    return emb;
}

struct LayerTrace {
    Mat input;        // residual stream entering the layer
    Mat ln1_hat;      // normalized pre-attention activations
    Eigen::VectorXd ln1_rstd;
    Mat q, k, v;
    std::vector<Mat> attn;  // per-head softmax probabilities
    Mat ctx;                // concatenated head outputs
    Mat mid;                // residual stream after attention
    Mat ln2_hat;
    Eigen::VectorXd ln2_rstd;
    Mat ff_pre;             // pre-GELU activations
    Mat ff_act;
};

struct ForwardTrace {
    TokenSequence x;
    std::optional<double> t;
    Mat embed;
    std::vector<LayerTrace> layers;
    Mat final_hat;
    Eigen::VectorXd final_rstd;
    Mat final_out;
};

ForwardTrace* new_trace() { return new ForwardTrace(); }
void free_trace(ForwardTrace* trace) { delete trace; }

namespace {

// y = x_hat * gain + bias per row; caches x_hat and 1/std
void layer_norm(const Mat& x, const double* gain, const double* bias, Mat& hat,
                Eigen::VectorXd& rstd, Mat& out) {
    const auto rows = x.rows();
    const auto cols = x.cols();
    hat.resize(rows, cols);
    out.resize(rows, cols);
    rstd.resize(rows);
    ConstVec g(gain, cols), b(bias, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double mu = x.row(r).mean();
        const double var = (x.row(r).array() - mu).square().mean();
        const double rs = 1.0 / std::sqrt(var + kLnEps);
        rstd(r) = rs;
        hat.row(r) = (x.row(r).array() - mu) * rs;
        out.row(r) = hat.row(r).cwiseProduct(g.transpose()) + b.transpose();
    }
}

// accumulates dx, dgain, dbias from dy
void layer_norm_backward(const Mat& hat, const Eigen::VectorXd& rstd, const double* gain,
                         const Mat& dy, Mat& dx, double* dgain, double* dbias) {
    const auto rows = dy.rows();
    const auto cols = dy.cols();
    dx.resize(rows, cols);
    ConstVec g(gain, cols);
    MutVec dg(dgain, cols), db(dbias, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        dg += dy.row(r).cwiseProduct(hat.row(r)).transpose();
        db += dy.row(r).transpose();
        const Eigen::RowVectorXd dhat = dy.row(r).cwiseProduct(g.transpose());
        const double m1 = dhat.mean();
        const double m2 = dhat.cwiseProduct(hat.row(r)).mean();
        dx.row(r) = rstd(r) * (dhat.array() - m1 - hat.row(r).array() * m2);
    }
}

}  // namespace

Mat score_forward_logits(const ModelConfig& config, const ParamLayout& layout,
                         const double* params, const TokenSequence& x,
                         std::optional<double> t, ForwardTrace& trace) {
    const int d = static_cast<int>(x.size());
    if (d < 1) throw std::invalid_argument("score_forward: empty sequence");
    if (d > config.max_length)
        throw std::invalid_argument("score_forward: sequence length " + std::to_string(d) +
                                    " exceeds max_length " + std::to_string(config.max_length));
    for (int id : x)
        if (id < 0 || id >= config.alphabet_size)
            throw std::invalid_argument("score_forward: token id out of range");
    if (config.time_conditioned != t.has_value())
        throw std::invalid_argument(config.time_conditioned
                                        ? "score_forward: time-conditioned model requires t"
                                        : "score_forward: t supplied to a time-independent model");

    const int e = config.embed_dim;
    const int h = config.heads;
    const int dh = e / h;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    auto tensor = [&](const std::string& name) { return params + layout.find(name).offset; };

    trace.x = x;
    trace.t = t;
    trace.embed.resize(d, e);
    {
        ConstMap tok(tensor("tok_emb"), config.alphabet_size, e);
        ConstMap pos(tensor("pos_emb"), config.max_length, e);
        for (int i = 0; i < d; ++i)
            trace.embed.row(i) = tok.row(x[static_cast<size_t>(i)]) + pos.row(i);
        if (config.time_conditioned) {
            const double* freq = tensor("time_freq");
            const int half = e / 2;
            Eigen::RowVectorXd te(e);
            for (int k = 0; k < half; ++k) {
                te(k) = std::sin(freq[k] * *t);
                te(half + k) = std::cos(freq[half + k] * *t);
            }
            trace.embed.rowwise() += te;
        }
    }

    trace.layers.resize(static_cast<size_t>(config.layers));
    Mat stream = trace.embed;
    Mat normed;
    for (int l = 0; l < config.layers; ++l) {
        LayerTrace& lt = trace.layers[static_cast<size_t>(l)];
        const std::string p = "layer" + std::to_string(l) + ".";
        lt.input = stream;

        layer_norm(lt.input, tensor(p + "ln1.gain"), tensor(p + "ln1.bias"), lt.ln1_hat,
                   lt.ln1_rstd, normed);

        ConstMap wq(tensor(p + "attn.wq"), e, e), wk(tensor(p + "attn.wk"), e, e),
            wv(tensor(p + "attn.wv"), e, e), wo(tensor(p + "attn.wo"), e, e);
        ConstVec bq(tensor(p + "attn.bq"), e), bk(tensor(p + "attn.bk"), e),
            bv(tensor(p + "attn.bv"), e), bo(tensor(p + "attn.bo"), e);

        lt.q = (normed * wq).rowwise() + bq.transpose();
        lt.k = (normed * wk).rowwise() + bk.transpose();
        lt.v = (normed * wv).rowwise() + bv.transpose();

        lt.attn.assign(static_cast<size_t>(h), Mat());
        lt.ctx.resize(d, e);
        for (int head = 0; head < h; ++head) {
            const auto qh = lt.q.middleCols(head * dh, dh);
            const auto kh = lt.k.middleCols(head * dh, dh);
            const auto vh = lt.v.middleCols(head * dh, dh);
            Mat scores = qh * kh.transpose() * inv_sqrt_dh;
            for (int r = 0; r < d; ++r) {
                const double mx = scores.row(r).maxCoeff();
                scores.row(r) = (scores.row(r).array() - mx).exp();
                scores.row(r) /= scores.row(r).sum();
            }
            lt.attn[static_cast<size_t>(head)] = scores;
            lt.ctx.middleCols(head * dh, dh) = scores * vh;
        }
        lt.mid = lt.input + ((lt.ctx * wo).rowwise() + bo.transpose()).eval();

        layer_norm(lt.mid, tensor(p + "ln2.gain"), tensor(p + "ln2.bias"), lt.ln2_hat,
                   lt.ln2_rstd, normed);

        ConstMap w1(tensor(p + "ff.w1"), e, config.feedforward_dim);
        ConstMap w2(tensor(p + "ff.w2"), config.feedforward_dim, e);
        ConstVec b1(tensor(p + "ff.b1"), config.feedforward_dim);
        ConstVec b2(tensor(p + "ff.b2"), e);
        lt.ff_pre = (normed * w1).rowwise() + b1.transpose();
        lt.ff_act = lt.ff_pre.unaryExpr([](double v) { return gelu(v); });
        stream = lt.mid + ((lt.ff_act * w2).rowwise() + b2.transpose()).eval();
    }

    layer_norm(stream, tensor("final_ln.gain"), tensor("final_ln.bias"), trace.final_hat,
               trace.final_rstd, trace.final_out);

    ConstMap wh(tensor("head.w"), e, config.alphabet_size);
    ConstVec bh(tensor("head.b"), config.alphabet_size);
    Mat logits = (trace.final_out * wh).rowwise() + bh.transpose();
    return logits;
}

void score_backward(const ModelConfig& config, const ParamLayout& layout,
                    const double* params, const ForwardTrace& trace, const Mat& dlogits,
                    double* grad) {
    const int d = static_cast<int>(trace.x.size());
    const int e = config.embed_dim;
    const int h = config.heads;
    const int dh = e / h;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    auto tensor = [&](const std::string& name) { return params + layout.find(name).offset; };
    auto gtensor = [&](const std::string& name) { return grad + layout.find(name).offset; };

    // head
    ConstMap wh(tensor("head.w"), e, config.alphabet_size);
    {
        MutMap dwh(gtensor("head.w"), e, config.alphabet_size);
        MutVec dbh(gtensor("head.b"), config.alphabet_size);
        dwh += trace.final_out.transpose() * dlogits;
        dbh += dlogits.colwise().sum().transpose();
    }
    Mat dstream;
    {
        const Mat dfinal = dlogits * wh.transpose();
        layer_norm_backward(trace.final_hat, trace.final_rstd, tensor("final_ln.gain"), dfinal,
                            dstream, gtensor("final_ln.gain"), gtensor("final_ln.bias"));
    }

    Mat dnormed, dmid, dctx, dq, dk, dv, dinput;
    for (int l = config.layers - 1; l >= 0; --l) {
        const LayerTrace& lt = trace.layers[static_cast<size_t>(l)];
        const std::string p = "layer" + std::to_string(l) + ".";

        // feedforward block: stream = mid + gelu(ln2(mid) w1 + b1) w2 + b2
        ConstMap w1(tensor(p + "ff.w1"), e, config.feedforward_dim);
        ConstMap w2(tensor(p + "ff.w2"), config.feedforward_dim, e);
        {
            MutMap dw2(gtensor(p + "ff.w2"), config.feedforward_dim, e);
            MutVec db2(gtensor(p + "ff.b2"), e);
            dw2 += lt.ff_act.transpose() * dstream;
            db2 += dstream.colwise().sum().transpose();
        }
        Mat dact = dstream * w2.transpose();
        Mat dpre = dact.cwiseProduct(lt.ff_pre.unaryExpr([](double v) { return gelu_grad(v); }));
        {
            // recompute ln2 output (not cached to keep traces lean)
            ConstVec g2(tensor(p + "ln2.gain"), e), bb2(tensor(p + "ln2.bias"), e);
            Mat ln2_out(d, e);
            for (int r = 0; r < d; ++r)
                ln2_out.row(r) =
                    lt.ln2_hat.row(r).cwiseProduct(g2.transpose()) + bb2.transpose();
            MutMap dw1(gtensor(p + "ff.w1"), e, config.feedforward_dim);
            MutVec db1(gtensor(p + "ff.b1"), config.feedforward_dim);
            dw1 += ln2_out.transpose() * dpre;
            db1 += dpre.colwise().sum().transpose();
        }
        layer_norm_backward(lt.ln2_hat, lt.ln2_rstd, tensor(p + "ln2.gain"),
                            (dpre * w1.transpose()).eval(), dmid, gtensor(p + "ln2.gain"),
                            gtensor(p + "ln2.bias"));
        dmid += dstream;  // residual

        // attention block: mid = input + (ctx wo + bo)
        ConstMap wq(tensor(p + "attn.wq"), e, e), wk(tensor(p + "attn.wk"), e, e),
            wv(tensor(p + "attn.wv"), e, e), wo(tensor(p + "attn.wo"), e, e);
        {
            MutMap dwo(gtensor(p + "attn.wo"), e, e);
            MutVec dbo(gtensor(p + "attn.bo"), e);
            dwo += lt.ctx.transpose() * dmid;
            dbo += dmid.colwise().sum().transpose();
        }
        dctx = dmid * wo.transpose();

        dq.setZero(d, e);
        dk.setZero(d, e);
        dv.setZero(d, e);
        for (int head = 0; head < h; ++head) {
            const auto vh = lt.v.middleCols(head * dh, dh);
            const auto qh = lt.q.middleCols(head * dh, dh);
            const auto kh = lt.k.middleCols(head * dh, dh);
            const Mat& probs = lt.attn[static_cast<size_t>(head)];
            const auto dctx_h = dctx.middleCols(head * dh, dh);

            Mat dprobs = dctx_h * vh.transpose();
            dv.middleCols(head * dh, dh) = probs.transpose() * dctx_h;
            Mat dscores(d, d);
            for (int r = 0; r < d; ++r) {
                const double dot = dprobs.row(r).dot(probs.row(r));
                dscores.row(r) = (probs.row(r).array() * (dprobs.row(r).array() - dot)).matrix();
            }
            dq.middleCols(head * dh, dh) = dscores * kh * inv_sqrt_dh;
            dk.middleCols(head * dh, dh) = dscores.transpose() * qh * inv_sqrt_dh;
        }

        {
            // recompute ln1 output for weight gradients
            ConstVec g1(tensor(p + "ln1.gain"), e), bb1(tensor(p + "ln1.bias"), e);
            Mat ln1_out(d, e);
            for (int r = 0; r < d; ++r)
                ln1_out.row(r) =
                    lt.ln1_hat.row(r).cwiseProduct(g1.transpose()) + bb1.transpose();
            MutMap dwq(gtensor(p + "attn.wq"), e, e), dwk(gtensor(p + "attn.wk"), e, e),
                dwv(gtensor(p + "attn.wv"), e, e);
            MutVec dbq(gtensor(p + "attn.bq"), e), dbk(gtensor(p + "attn.bk"), e),
                dbv(gtensor(p + "attn.bv"), e);
            dwq += ln1_out.transpose() * dq;
            dwk += ln1_out.transpose() * dk;
            dwv += ln1_out.transpose() * dv;
            dbq += dq.colwise().sum().transpose();
            dbk += dk.colwise().sum().transpose();
            dbv += dv.colwise().sum().transpose();
        }
        dnormed = dq * wq.transpose() + dk * wk.transpose() + dv * wv.transpose();
        layer_norm_backward(lt.ln1_hat, lt.ln1_rstd, tensor(p + "ln1.gain"), dnormed, dinput,
                            gtensor(p + "ln1.gain"), gtensor(p + "ln1.bias"));
        dinput += dmid;  // residual
        dstream = dinput;
    }

    // embeddings
    {
        MutMap dtok(gtensor("tok_emb"), config.alphabet_size, e);
        MutMap dpos(gtensor("pos_emb"), config.max_length, e);
        for (int i = 0; i < d; ++i) {
            dtok.row(trace.x[static_cast<size_t>(i)]) += dstream.row(i);
            dpos.row(i) += dstream.row(i);
        }
        if (config.time_conditioned) {
            const double* freq = tensor("time_freq");
            double* dfreq = gtensor("time_freq");
            const double t = *trace.t;
            const int half = e / 2;
            const Eigen::RowVectorXd colsum = dstream.colwise().sum();
            for (int k = 0; k < half; ++k) {
                dfreq[k] += t * std::cos(freq[k] * t) * colsum(k);
                dfreq[half + k] -= t * std::sin(freq[half + k] * t) * colsum(half + k);
            }
        }
    }
}

ScoreTable logits_to_score(const Mat& logits, const TokenSequence& x) {
    ScoreTable table(x.size(), std::vector<double>(static_cast<size_t>(logits.cols())));
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        for (Eigen::Index y = 0; y < logits.cols(); ++y)
            table[static_cast<size_t>(i)][static_cast<size_t>(y)] = std::exp(logits(i, y));
        table[static_cast<size_t>(i)][static_cast<size_t>(x[static_cast<size_t>(i)])] = 1.0;
    }
    return table;
}

ScoreTable ScoreModel::forward(const TokenSequence& x, std::optional<double> t,
                               bool use_ema) const {
    TraceHandle trace;
    const Mat logits = score_forward_logits(config, layout, use_ema ? ema.data() : params.data(),
                                            x, t, *trace.ptr);
    return logits_to_score(logits, x);
}

// ---------------------------------------------------------------------------
// checkpoint format: magic, u32 version, length-prefixed UTF-8 config record,
// manifest (count; per tensor: length-prefixed name, rank, u64 dims), then
// f32 little-endian payload in manifest order, parameters first, EMA second.
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'G', 'S', 'E', 'D', 'D', 'C', 'K', 'P'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    Reader(const std::string& data) : data_(data) {}
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(data_[pos_ + static_cast<size_t>(i)])) << (8 * i);
        pos_ += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(data_[pos_ + static_cast<size_t>(i)])) << (8 * i);
        pos_ += 8;
        return v;
    }
    std::string bytes(size_t count) {
        need(count);
        std::string s = data_.substr(pos_, count);
        pos_ += count;
        return s;
    }
    float f32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(data_[pos_ + static_cast<size_t>(i)])) << (8 * i);
        pos_ += 4;
        float f;
        std::memcpy(&f, &v, 4);
        return f;
    }

private:
    void need(size_t count) {
        if (pos_ + count > data_.size())
            throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint file is truncated");
    }
    const std::string& data_;
    size_t pos_ = 0;
};

nlohmann::json config_record(const ScoreModel& model) {
    return nlohmann::json{{"layers", model.config.layers},
                          {"embed_dim", model.config.embed_dim},
                          {"heads", model.config.heads},
                          {"feedforward_dim", model.config.feedforward_dim},
                          {"max_length", model.config.max_length},
                          {"alphabet_size", model.config.alphabet_size},
                          {"time_conditioned", model.config.time_conditioned},
                          {"variant", variant_name(model.config.variant)},
                          {"step", model.step},
                          {"seed", model.seed}};
}

}  // namespace

void save_checkpoint(const ScoreModel& model, const std::filesystem::path& path) {
    std::string out;
    out.append(kMagic, 8);
    put_u32(out, kVersion);
    const std::string cfg = config_record(model).dump();
    put_u32(out, static_cast<uint32_t>(cfg.size()));
    out += cfg;
    put_u32(out, static_cast<uint32_t>(model.layout.tensors.size()));
    for (const auto& spec : model.layout.tensors) {
        put_u32(out, static_cast<uint32_t>(spec.name.size()));
        out += spec.name;
        put_u32(out, static_cast<uint32_t>(spec.shape.size()));
        for (int64_t dim : spec.shape) put_u64(out, static_cast<uint64_t>(dim));
    }
    auto put_floats = [&out](const std::vector<double>& values) {
        for (double v : values) {
            const float f = static_cast<float>(v);
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32(out, bits);
        }
    };
    put_floats(model.params);
    put_floats(model.ema);
    atomic_write_file(path, out);
}

ScoreModel load_checkpoint(const std::filesystem::path& path) {
    const std::string data = read_file(path);
    Reader reader(data);
    const std::string magic = reader.bytes(8);
    if (std::memcmp(magic.data(), kMagic, 8) != 0)
        throw CheckpointError(CheckpointError::Kind::invalid, "not a gsedd checkpoint file");
    const uint32_t version = reader.u32();
    if (version > kVersion)
        throw CheckpointError(CheckpointError::Kind::version_mismatch,
                              "checkpoint format version " + std::to_string(version) +
                                  " is newer than supported version " + std::to_string(kVersion));
    const uint32_t cfg_len = reader.u32();
    nlohmann::json cfg;
    try {
        cfg = nlohmann::json::parse(reader.bytes(cfg_len));
    } catch (const nlohmann::json::parse_error& err) {
        throw CheckpointError(CheckpointError::Kind::invalid,
                              std::string("bad checkpoint config record: ") + err.what());
    }

    ScoreModel model;
    model.config.layers = cfg.at("layers").get<int>();
    model.config.embed_dim = cfg.at("embed_dim").get<int>();
    model.config.heads = cfg.at("heads").get<int>();
    model.config.feedforward_dim = cfg.at("feedforward_dim").get<int>();
    model.config.max_length = cfg.at("max_length").get<int>();
    model.config.alphabet_size = cfg.at("alphabet_size").get<int>();
    model.config.time_conditioned = cfg.at("time_conditioned").get<bool>();
    model.config.variant = variant_from_name(cfg.at("variant").get<std::string>());
    model.step = cfg.at("step").get<int64_t>();
    model.seed = cfg.at("seed").get<uint64_t>();
    model.layout = ParamLayout::from_config(model.config);

    const uint32_t count = reader.u32();
    if (count != model.layout.tensors.size())
        throw CheckpointError(CheckpointError::Kind::shape_mismatch,
                              "manifest lists " + std::to_string(count) + " tensors, config implies " +
                                  std::to_string(model.layout.tensors.size()));
    for (const auto& spec : model.layout.tensors) {
        const uint32_t name_len = reader.u32();
        const std::string name = reader.bytes(name_len);
        const uint32_t rank = reader.u32();
        std::vector<int64_t> shape(rank);
        for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int64_t>(reader.u64());
        if (name != spec.name || shape != spec.shape)
            throw CheckpointError(CheckpointError::Kind::shape_mismatch,
                                  "manifest tensor '" + name + "' does not match expected '" +
                                      spec.name + "' shape");
    }
    auto read_floats = [&reader](int64_t count_) {
        std::vector<double> values(static_cast<size_t>(count_));
        for (auto& v : values) v = static_cast<double>(reader.f32());
        return values;
    };
    model.params = read_floats(model.layout.total);
    model.ema = read_floats(model.layout.total);
    return model;
}

}  // namespace gsedd
