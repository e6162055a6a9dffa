#include "gsedd/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gsedd/io.hpp"
#include "gsedd/rng.hpp"

namespace gsedd {

double Classifier::neighbor_logits(const TokenSequence& x, Mat& out) const {
    const int d = static_cast<int>(x.size());
    const int n = alphabet_size();
    out.resize(d, n);
    const double current = logit(x);
    TokenSequence y = x;
    for (int i = 0; i < d; ++i) {
        for (int tok = 0; tok < n; ++tok) {
            if (tok == x[static_cast<size_t>(i)]) {
                out(i, tok) = current;
                continue;
            }
            y[static_cast<size_t>(i)] = tok;
            out(i, tok) = logit(y);
        }
        y[static_cast<size_t>(i)] = x[static_cast<size_t>(i)];
    }
    return current;
}

HydropathyScale HydropathyScale::load(const std::filesystem::path& path, const Alphabet& alphabet) {
    const std::string text = read_file(path);
    std::istringstream in(text);
    std::vector<double> values(static_cast<size_t>(alphabet.size()),
                               std::numeric_limits<double>::quiet_NaN());
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream row(line);
        std::string token, value;
        if (!std::getline(row, token, '\t') || !std::getline(row, value, '\t'))
            throw std::runtime_error("scale file: bad line '" + line + "'");
        if (token.size() != 1)
            throw std::runtime_error("scale file: token must be a single symbol, got '" + token + "'");
        const int id = alphabet.index(token[0]);
        if (id < 0)
            throw std::runtime_error("scale file: symbol '" + token + "' not in alphabet");
        values[static_cast<size_t>(id)] = std::stod(value);
    }
    for (int id = 0; id < alphabet.size(); ++id)
        if (!alphabet.is_mask(id) && std::isnan(values[static_cast<size_t>(id)]))
            throw std::runtime_error(std::string("scale file: missing value for symbol '") +
                                     alphabet.symbol(id) + "'");
    return HydropathyScale{alphabet, std::move(values)};
}

HydropathyScale HydropathyScale::from_values(const Alphabet& alphabet, std::vector<double> values) {
    if (static_cast<int>(values.size()) != alphabet.size())
        throw std::invalid_argument("HydropathyScale: values size mismatch");
    return HydropathyScale{alphabet, std::move(values)};
}

double hydropathy_score(const TokenSequence& x, const HydropathyScale& scale) {
    if (x.empty()) throw std::invalid_argument("hydropathy_score: empty sequence");
    double total = 0.0;
    for (int id : x) {
        if (id < 0 || id >= scale.alphabet.size())
            throw std::invalid_argument("hydropathy_score: token id out of range");
        if (scale.alphabet.is_mask(id))
            throw std::invalid_argument("hydropathy_score: mask token present");
        total += scale.values[static_cast<size_t>(id)];
    }
    return total / static_cast<double>(x.size());
}

double LinearProbe::value(const TokenSequence& x, int output) const {
    if (output < 0 || output >= outputs)
        throw std::invalid_argument("LinearProbe: output index out of range");
    if (static_cast<int>(x.size()) > d_max)
        throw std::invalid_argument("LinearProbe: sequence longer than d_max");
    double v = biases[static_cast<size_t>(output)];
    const Mat& w = weights[static_cast<size_t>(output)];
    for (size_t i = 0; i < x.size(); ++i) {
        if (x[i] < 0 || x[i] >= n) throw std::invalid_argument("LinearProbe: token out of range");
        v += w(static_cast<Eigen::Index>(i), x[i]);
    }
    return v;
}

std::string LinearProbe::to_json() const {
    nlohmann::json j;
    j["task"] = task == ProbeTask::binary ? "binary"
                : task == ProbeTask::multiclass ? "multiclass" : "regression";
    j["d_max"] = d_max;
    j["n"] = n;
    j["outputs"] = outputs;
    j["biases"] = biases;
    nlohmann::json ws = nlohmann::json::array();
    for (const Mat& w : weights) {
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            std::vector<double> row(static_cast<size_t>(w.cols()));
            for (Eigen::Index c = 0; c < w.cols(); ++c) row[static_cast<size_t>(c)] = w(r, c);
            rows.push_back(row);
        }
        ws.push_back(rows);
    }
    j["weights"] = ws;
    return j.dump();
}

LinearProbe LinearProbe::from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    LinearProbe probe;
    const std::string task = j.at("task").get<std::string>();
    probe.task = task == "binary" ? ProbeTask::binary
                 : task == "multiclass" ? ProbeTask::multiclass : ProbeTask::regression;
    probe.d_max = j.at("d_max").get<int>();
    probe.n = j.at("n").get<int>();
    probe.outputs = j.at("outputs").get<int>();
    probe.biases = j.at("biases").get<std::vector<double>>();
    for (const auto& rows : j.at("weights")) {
        Mat w(probe.d_max, probe.n);
        int r = 0;
        for (const auto& row : rows) {
            int c = 0;
            for (const auto& v : row) w(r, c++) = v.get<double>();
            ++r;
        }
        probe.weights.push_back(std::move(w));
    }
    return probe;
}

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

double probe_loss(const LinearProbe& probe, const std::vector<LabeledSequence>& data) {
    double total = 0.0;
    for (const auto& ex : data) {
        if (probe.task == ProbeTask::regression) {
            const double err = probe.value(ex.x, 0) - ex.label;
            total += 0.5 * err * err;
        } else if (probe.task == ProbeTask::binary) {
            const double v = probe.value(ex.x, 0);
            const double y = ex.label;
            // stable log(1+exp(-|v|)) form
            total += std::max(v, 0.0) - v * y + std::log1p(std::exp(-std::abs(v)));
        } else {
            std::vector<double> vals(static_cast<size_t>(probe.outputs));
            double mx = -1e300;
            for (int c = 0; c < probe.outputs; ++c) {
                vals[static_cast<size_t>(c)] = probe.value(ex.x, c);
                mx = std::max(mx, vals[static_cast<size_t>(c)]);
            }
            double lse = 0.0;
            for (double v : vals) lse += std::exp(v - mx);
            lse = mx + std::log(lse);
            total += lse - vals[static_cast<size_t>(static_cast<int>(ex.label))];
        }
    }
    return total / static_cast<double>(data.size());
}

}  // namespace

ProbeFitResult fit_linear_probe(const std::vector<LabeledSequence>& train,
                                const std::vector<LabeledSequence>& val, ProbeTask task,
                                int classes, int d_max, int n, const ProbeFitConfig& config) {
    if (train.empty() || val.empty())
        throw std::invalid_argument("fit_linear_probe: empty split");
    if (task != ProbeTask::regression) {
        std::set<int> seen;
        for (const auto& ex : train) seen.insert(static_cast<int>(ex.label));
        if (seen.size() < 2)
            throw std::invalid_argument("fit_linear_probe: degenerate single-class training data");
    }
    const int outputs = task == ProbeTask::multiclass ? classes : 1;
    if (outputs < 1) throw std::invalid_argument("fit_linear_probe: classes must be positive");

    LinearProbe probe;
    probe.task = task;
    probe.d_max = d_max;
    probe.n = n;
    probe.outputs = outputs;
    probe.weights.assign(static_cast<size_t>(outputs), Mat::Zero(d_max, n));
    probe.biases.assign(static_cast<size_t>(outputs), 0.0);

    Rng rng(derive_seed(config.seed, "probe.batch"));
    ProbeFitResult result;
    result.probe = probe;
    result.best_val_loss = probe_loss(probe, val);
    result.log.push_back({0, probe_loss(probe, train), result.best_val_loss});

    int bad_evals = 0;
    double running = 0.0;
    int since = 0;
    for (int step = 1; step <= config.max_steps; ++step) {
        double batch_loss = 0.0;
        std::vector<Mat> gw(static_cast<size_t>(outputs), Mat::Zero(d_max, n));
        std::vector<double> gb(static_cast<size_t>(outputs), 0.0);
        for (int b = 0; b < config.batch_size; ++b) {
            const auto& ex = train[static_cast<size_t>(rng.uniform_int(static_cast<int>(train.size())))];
            if (task == ProbeTask::regression) {
                const double err = probe.value(ex.x, 0) - ex.label;
                batch_loss += 0.5 * err * err;
                for (size_t i = 0; i < ex.x.size(); ++i)
                    gw[0](static_cast<Eigen::Index>(i), ex.x[i]) += err;
                gb[0] += err;
            } else if (task == ProbeTask::binary) {
                const double v = probe.value(ex.x, 0);
                const double p = sigmoid(v);
                batch_loss += std::max(v, 0.0) - v * ex.label + std::log1p(std::exp(-std::abs(v)));
                const double g = p - ex.label;
                for (size_t i = 0; i < ex.x.size(); ++i)
                    gw[0](static_cast<Eigen::Index>(i), ex.x[i]) += g;
                gb[0] += g;
            } else {
                std::vector<double> vals(static_cast<size_t>(outputs));
                double mx = -1e300;
                for (int c = 0; c < outputs; ++c) {
                    vals[static_cast<size_t>(c)] = probe.value(ex.x, c);
                    mx = std::max(mx, vals[static_cast<size_t>(c)]);
                }
                double z = 0.0;
                for (double v : vals) z += std::exp(v - mx);
                const int label = static_cast<int>(ex.label);
                batch_loss += mx + std::log(z) - vals[static_cast<size_t>(label)];
                for (int c = 0; c < outputs; ++c) {
                    const double g = std::exp(vals[static_cast<size_t>(c)] - mx) / z -
                                     (c == label ? 1.0 : 0.0);
                    for (size_t i = 0; i < ex.x.size(); ++i)
                        gw[static_cast<size_t>(c)](static_cast<Eigen::Index>(i), ex.x[i]) += g;
                    gb[static_cast<size_t>(c)] += g;
                }
            }
        }
        const double inv = 1.0 / static_cast<double>(config.batch_size);
        for (int c = 0; c < outputs; ++c) {
            probe.weights[static_cast<size_t>(c)] -= config.learning_rate * inv * gw[static_cast<size_t>(c)];
            probe.biases[static_cast<size_t>(c)] -= config.learning_rate * inv * gb[static_cast<size_t>(c)];
        }
        running += batch_loss * inv;
        ++since;

        if (step % config.eval_every == 0 || step == config.max_steps) {
            const double val_loss = probe_loss(probe, val);
            result.log.push_back({step, running / since, val_loss});
            running = 0.0;
            since = 0;
            if (val_loss < result.best_val_loss - config.min_delta) {
                result.best_val_loss = val_loss;
                result.probe = probe;
                bad_evals = 0;
            } else {
                if (++bad_evals >= config.patience) break;
            }
        }
    }
    return result;
}

ProbeClassifier::ProbeClassifier(LinearProbe probe, int target_class, double sign)
    : probe_(std::move(probe)), target_class_(target_class), sign_(sign) {
    if (target_class_ < 0 || target_class_ >= probe_.outputs)
        throw std::invalid_argument("ProbeClassifier: target class out of range");
}

double ProbeClassifier::logit(const TokenSequence& x) const {
    return sign_ * probe_.value(x, target_class_);
}

double ProbeClassifier::neighbor_logits(const TokenSequence& x, Mat& out) const {
    const int d = static_cast<int>(x.size());
    out.resize(d, probe_.n);
    const double current = logit(x);
    const Mat& w = probe_.weights[static_cast<size_t>(target_class_)];
    for (int i = 0; i < d; ++i)
        for (int tok = 0; tok < probe_.n; ++tok)
            out(i, tok) = current + sign_ * (w(i, tok) - w(i, x[static_cast<size_t>(i)]));
    return current;
}

HydropathyClassifier::HydropathyClassifier(HydropathyScale scale, double sign)
    : scale_(std::move(scale)), sign_(sign) {}

double HydropathyClassifier::logit(const TokenSequence& x) const {
    return sign_ * hydropathy_score(x, scale_);
}

double HydropathyClassifier::neighbor_logits(const TokenSequence& x, Mat& out) const {
    const int d = static_cast<int>(x.size());
    const int n = scale_.alphabet.size();
    out.resize(d, n);
    const double current = logit(x);
    const double inv_d = 1.0 / static_cast<double>(d);
    for (int i = 0; i < d; ++i) {
        const double xv = scale_.values[static_cast<size_t>(x[static_cast<size_t>(i)])];
        for (int tok = 0; tok < n; ++tok) {
            if (scale_.alphabet.is_mask(tok)) {
                out(i, tok) = current;  // mask neighbors carry no guidance signal
                continue;
            }
            out(i, tok) = current + sign_ * inv_d * (scale_.values[static_cast<size_t>(tok)] - xv);
        }
    }
    return current;
}

std::unique_ptr<Classifier> load_classifier(const std::filesystem::path& path,
                                            const Alphabet& alphabet) {
    const nlohmann::json j = nlohmann::json::parse(read_file(path));
    const std::string type = j.at("type").get<std::string>();
    if (type == "linear_probe") {
        LinearProbe probe = LinearProbe::from_json(j.at("probe").dump());
        if (probe.n != alphabet.size())
            throw std::invalid_argument("classifier: probe alphabet size mismatch");
        return std::make_unique<ProbeClassifier>(std::move(probe),
                                                 j.value("target_class", 0),
                                                 j.value("sign", 1.0));
    }
    if (type == "hydropathy") {
        HydropathyScale scale = HydropathyScale::load(j.at("scale_path").get<std::string>(), alphabet);
        return std::make_unique<HydropathyClassifier>(std::move(scale), j.value("sign", -1.0));
    }
    throw std::invalid_argument("classifier: unknown type '" + type + "'");
}

void save_probe_classifier(const LinearProbe& probe, int target_class, double sign,
                           const std::filesystem::path& path) {
    nlohmann::json j;
    j["type"] = "linear_probe";
    j["probe"] = nlohmann::json::parse(probe.to_json());
    j["target_class"] = target_class;
    j["sign"] = sign;
    atomic_write_file(path, j.dump(2) + "\n");
}

ScoreTable guided_score(const ScoreTable& score, const Mat& neighbor_logits,
                        double current_logit, double gamma) {
    if (!std::isfinite(current_logit) || !neighbor_logits.allFinite())
        throw std::invalid_argument("guided_score: non-finite classifier logits");
    if (gamma < 0.0) throw std::invalid_argument("guided_score: gamma must be non-negative");
    ScoreTable out = score;
    for (size_t i = 0; i < out.size(); ++i) {
        for (size_t y = 0; y < out[i].size(); ++y) {
            const double delta = neighbor_logits(static_cast<Eigen::Index>(i),
                                                 static_cast<Eigen::Index>(y)) - current_logit;
            out[i][y] *= std::exp(std::clamp(gamma * delta, -60.0, 60.0));
        }
    }
    return out;
}

}  // namespace gsedd
