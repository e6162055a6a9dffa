#include "gsedd/noise.hpp"

#include <cmath>
#include <stdexcept>

#include "gsedd/rng.hpp"

namespace gsedd {

double NoiseSchedule::total_noise(double t) const {
    if (epsilon <= 0.0 || epsilon >= 1.0)
        throw std::invalid_argument("NoiseSchedule: epsilon must be in (0,1)");
    if (t < 0.0 || t > 1.0)
        throw std::invalid_argument("total_noise: t outside [0,1]");
    // -log1p keeps sigma(t) accurate for small t
    return -std::log1p(-(1.0 - epsilon) * t);
}

double NoiseSchedule::noise_rate(double t) const {
    if (t < 0.0 || t > 1.0)
        throw std::invalid_argument("noise_rate: t outside [0,1]");
    return (1.0 - epsilon) / (1.0 - (1.0 - epsilon) * t);
}

const char* variant_name(KernelVariant v) {
    switch (v) {
        case KernelVariant::uniform: return "uniform";
        case KernelVariant::mask_absorbing: return "mask";
        case KernelVariant::germline_absorbing: return "germline";
    }
    return "?";
}

KernelVariant variant_from_name(const std::string& name) {
    if (name == "uniform") return KernelVariant::uniform;
    if (name == "mask") return KernelVariant::mask_absorbing;
    if (name == "germline") return KernelVariant::germline_absorbing;
    throw std::invalid_argument("unknown kernel variant '" + name + "'");
}

TransitionKernel::TransitionKernel(KernelVariant variant, Alphabet alphabet, TokenSequence targets)
    : variant_(variant), alphabet_(std::move(alphabet)), germline_(std::move(targets)) {
    // only the mask-absorbing chain ever visits the mask symbol
    in_support_.assign(static_cast<size_t>(alphabet_.size()), 1);
    if (variant_ != KernelVariant::mask_absorbing && alphabet_.mask_index())
        in_support_[static_cast<size_t>(*alphabet_.mask_index())] = 0;
    for (int i = 0; i < alphabet_.size(); ++i)
        if (in_support_[static_cast<size_t>(i)]) support_.push_back(i);
    if (support_.size() < 2)
        throw std::invalid_argument("TransitionKernel: support must contain at least 2 tokens");
}

TransitionKernel TransitionKernel::uniform(Alphabet alphabet) {
    return TransitionKernel(KernelVariant::uniform, std::move(alphabet), {});
}

TransitionKernel TransitionKernel::mask_absorbing(Alphabet alphabet) {
    if (!alphabet.mask_index())
        throw std::invalid_argument("mask_absorbing: alphabet has no mask symbol");
    return TransitionKernel(KernelVariant::mask_absorbing, std::move(alphabet), {});
}

TransitionKernel TransitionKernel::germline_absorbing(Alphabet alphabet, TokenSequence germline) {
    if (germline.empty())
        throw std::invalid_argument("germline_absorbing: empty germline");
    for (int id : germline) {
        if (id < 0 || id >= alphabet.size())
            throw std::invalid_argument("germline_absorbing: token id out of range");
        if (alphabet.is_mask(id))
            throw std::invalid_argument("germline_absorbing: germline contains mask symbol");
    }
    return TransitionKernel(KernelVariant::germline_absorbing, std::move(alphabet), std::move(germline));
}

int TransitionKernel::target(int position) const {
    switch (variant_) {
        case KernelVariant::uniform:
            throw std::logic_error("target: uniform kernel has no absorbing target");
        case KernelVariant::mask_absorbing:
            return *alphabet_.mask_index();
        case KernelVariant::germline_absorbing:
            if (position < 0 || position >= static_cast<int>(germline_.size()))
                throw std::out_of_range("target: position outside germline length");
            return germline_[static_cast<size_t>(position)];
    }
    throw std::logic_error("target: bad variant");
}

int TransitionKernel::required_length() const {
    return variant_ == KernelVariant::germline_absorbing ? static_cast<int>(germline_.size()) : -1;
}

void TransitionKernel::check_sequence(const TokenSequence& x) const {
    if (x.empty()) throw std::invalid_argument("kernel: empty sequence");
    const int req = required_length();
    if (req >= 0 && static_cast<int>(x.size()) != req)
        throw std::invalid_argument("kernel: sequence length " + std::to_string(x.size()) +
                                    " does not match germline length " + std::to_string(req));
    for (int id : x)
        if (id < 0 || id >= alphabet_.size())
            throw std::invalid_argument("kernel: token id out of range");
}

namespace {

// Closed-form position marginal row over the full alphabet.
std::vector<double> marginal_row(const TransitionKernel& kernel, int x0, int position,
                                 double sigma) {
    const int n = kernel.alphabet().size();
    std::vector<double> row(static_cast<size_t>(n), 0.0);
    const double survive = std::exp(-sigma);
    if (kernel.is_absorbing()) {
        if (!kernel.in_support(x0))
            throw std::invalid_argument("marginal: token outside kernel support");
        const int g = kernel.target(position);
        if (x0 == g) {
            row[static_cast<size_t>(g)] = 1.0;
        } else {
            row[static_cast<size_t>(x0)] = survive;
            row[static_cast<size_t>(g)] = 1.0 - survive;
        }
    } else {
        if (!kernel.in_support(x0))
            throw std::invalid_argument("marginal: token outside uniform kernel support");
        const double m = static_cast<double>(kernel.support_size());
        const double off = (1.0 - survive) / m;
        for (int y : kernel.support()) row[static_cast<size_t>(y)] = off;
        row[static_cast<size_t>(x0)] += survive;
    }
    return row;
}

}  // namespace

PositionMarginal marginal(const TransitionKernel& kernel, const TokenSequence& x0,
                          double t, const NoiseSchedule& schedule) {
    kernel.check_sequence(x0);
    const double sigma = schedule.total_noise(t);
    PositionMarginal out;
    out.reserve(x0.size());
    for (size_t i = 0; i < x0.size(); ++i)
        out.push_back(marginal_row(kernel, x0[i], static_cast<int>(i), sigma));
    return out;
}

TokenSequence forward_sample(const TransitionKernel& kernel, const GermlinePair& pair,
                             double t, const NoiseSchedule& schedule, uint64_t seed) {
    if (kernel.variant() == KernelVariant::germline_absorbing) {
        if (pair.germline.size() != pair.observed.size())
            throw std::invalid_argument("forward_sample: pair lengths differ");
        for (size_t i = 0; i < pair.germline.size(); ++i)
            if (kernel.target(static_cast<int>(i)) != pair.germline[i])
                throw std::invalid_argument("forward_sample: kernel targets disagree with pair germline");
    }
    const PositionMarginal rows = marginal(kernel, pair.observed, t, schedule);
    Rng rng(derive_seed(seed, "forward_sample"));
    TokenSequence out(pair.observed.size());
    for (size_t i = 0; i < rows.size(); ++i)
        out[i] = rng.categorical(rows[i]);
    return out;
}

double marginal_ratio(const TransitionKernel& kernel, int x0_token, int xt_token,
                      int y_token, double sigma, int position) {
    const auto row = marginal_row(kernel, x0_token, position, sigma);
    const double px = row[static_cast<size_t>(xt_token)];
    if (!(px > 0.0))
        throw std::invalid_argument("marginal_ratio: x_t has zero marginal mass under this kernel");
    return row[static_cast<size_t>(y_token)] / px;
}

Eigen::MatrixXd step_transition_matrix(const TransitionKernel& kernel, double dsigma,
                                       int position) {
    const int n = kernel.alphabet().size();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    const double survive = std::exp(-dsigma);
    if (kernel.is_absorbing()) {
        const int g = kernel.target(position);
        for (int a = 0; a < n; ++a) {
            if (a == g) {
                m(a, a) = 1.0;
            } else if (!kernel.in_support(a)) {
                m(a, a) = 1.0;  // tokens outside the support do not move
            } else {
                m(a, a) = survive;
                m(a, g) = 1.0 - survive;
            }
        }
    } else {
        // tokens outside the support (mask) do not move
        for (int a = 0; a < n; ++a) m(a, a) = 1.0;
        const double k = static_cast<double>(kernel.support_size());
        const double off = (1.0 - survive) / k;
        for (int a : kernel.support()) {
            m(a, a) = survive + off;
            for (int b : kernel.support())
                if (b != a) m(a, b) = off;
        }
    }
    return m;
}

double analytic_score_scale(const TransitionKernel& kernel, double sigma) {
    if (!kernel.is_absorbing()) return 1.0;
    const double e = std::exp(-sigma);
    const double denom = 1.0 - e;
    if (!(denom > 0.0))
        throw std::invalid_argument("analytic_score_scale: sigma must be positive");
    return e / denom;
}

}  // namespace gsedd
