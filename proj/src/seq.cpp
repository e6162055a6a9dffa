#include "gsedd/seq.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <stdexcept>

namespace gsedd {

Alphabet::Alphabet(std::string symbols, std::optional<int> mask_index)
    : symbols_(std::move(symbols)), mask_index_(mask_index) {
    if (symbols_.size() < 2) throw std::invalid_argument("Alphabet: need at least 2 symbols");
    std::array<bool, 256> seen{};
    for (char c : symbols_) {
        const auto u = static_cast<unsigned char>(c);
        if (!std::isprint(u)) throw std::invalid_argument("Alphabet: symbols must be printable");
        if (seen[u]) throw std::invalid_argument(std::string("Alphabet: duplicate symbol '") + c + "'");
        seen[u] = true;
    }
    if (mask_index_ && (*mask_index_ < 0 || *mask_index_ >= size()))
        throw std::invalid_argument("Alphabet: mask_index out of range");
}

Alphabet Alphabet::canonical() {
    return Alphabet("ACDEFGHIKLMNPQRSTVWY#", 20);
}

char Alphabet::symbol(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("Alphabet::symbol: id out of range");
    return symbols_[static_cast<size_t>(id)];
}

int Alphabet::index(char c) const {
    const auto pos = symbols_.find(c);
    return pos == std::string::npos ? -1 : static_cast<int>(pos);
}

GermlinePair make_pair_checked(TokenSequence germline, TokenSequence observed,
                               std::string id, const Alphabet& alphabet) {
    if (germline.size() != observed.size())
        throw std::invalid_argument("GermlinePair: germline and observed lengths differ");
    if (germline.empty()) throw std::invalid_argument("GermlinePair: empty sequences");
    for (const auto* seq : {&germline, &observed}) {
        for (int id : *seq) {
            if (id < 0 || id >= alphabet.size())
                throw std::invalid_argument("GermlinePair: token id out of range");
            if (alphabet.is_mask(id))
                throw std::invalid_argument("GermlinePair: mask symbol not allowed");
        }
    }
    return GermlinePair{std::move(germline), std::move(observed), std::move(id)};
}

TokenSequence encode(const std::string& text, const Alphabet& alphabet) {
    if (text.empty()) throw std::invalid_argument("encode: empty input (length >= 1 required)");
    TokenSequence out;
    out.reserve(text.size());
    for (size_t i = 0; i < text.size(); ++i) {
        const int id = alphabet.index(text[i]);
        if (id < 0)
            throw std::invalid_argument("encode: unknown symbol '" + std::string(1, text[i]) +
                                        "' at position " + std::to_string(i));
        out.push_back(id);
    }
    return out;
}

std::string decode(const TokenSequence& tokens, const Alphabet& alphabet) {
    std::string out;
    out.reserve(tokens.size());
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] < 0 || tokens[i] >= alphabet.size())
            throw std::invalid_argument("decode: token id " + std::to_string(tokens[i]) +
                                        " out of range at position " + std::to_string(i));
        out.push_back(alphabet.symbol(tokens[i]));
    }
    return out;
}

std::vector<int> non_germline_positions(const GermlinePair& pair) {
    std::vector<int> out;
    for (size_t i = 0; i < pair.germline.size(); ++i)
        if (pair.germline[i] != pair.observed[i]) out.push_back(static_cast<int>(i));
    return out;
}

int levenshtein(const std::string& a, const std::string& b) {
    const size_t na = a.size(), nb = b.size();
    if (na == 0) return static_cast<int>(nb);
    if (nb == 0) return static_cast<int>(na);
    std::vector<int> prev(nb + 1), curr(nb + 1);
    for (size_t j = 0; j <= nb; ++j) prev[j] = static_cast<int>(j);
    for (size_t i = 1; i <= na; ++i) {
        curr[0] = static_cast<int>(i);
        for (size_t j = 1; j <= nb; ++j) {
            const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            curr[j] = std::min({prev[j] + 1, curr[j - 1] + 1, sub});
        }
        std::swap(prev, curr);
    }
    return prev[nb];
}

double percent_identity(const TokenSequence& a, const TokenSequence& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("percent_identity: length mismatch (" +
                                    std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    if (a.empty()) throw std::invalid_argument("percent_identity: empty sequences");
    size_t match = 0;
    for (size_t i = 0; i < a.size(); ++i) match += a[i] == b[i];
    return static_cast<double>(match) / static_cast<double>(a.size());
}

double sequence_identity(const std::string& a, const std::string& b) {
    const size_t maxlen = std::max(a.size(), b.size());
    if (maxlen == 0) return 1.0;
    if (a.size() == b.size()) {
        size_t match = 0;
        for (size_t i = 0; i < a.size(); ++i) match += a[i] == b[i];
        return static_cast<double>(match) / static_cast<double>(maxlen);
    }
    return 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(maxlen);
}

}  // namespace gsedd
