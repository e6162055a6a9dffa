#ifndef GSEDD_SEQ_HPP
#define GSEDD_SEQ_HPP

#include <optional>
#include <string>
#include <vector>

namespace gsedd {

using TokenSequence = std::vector<int>;

/// An ordered set of single-character symbols, optionally containing a mask
/// symbol. Token ids are indices into the symbol list.
class Alphabet {
public:
    Alphabet(std::string symbols, std::optional<int> mask_index = std::nullopt);

    /// The 20 standard amino acids in one-letter alphabetical order followed
    /// by the mask symbol '#'.
    static Alphabet canonical();

    int size() const { return static_cast<int>(symbols_.size()); }
    char symbol(int id) const;
    /// Returns -1 when the symbol is not part of the alphabet.
    int index(char c) const;
    std::optional<int> mask_index() const { return mask_index_; }
    bool is_mask(int id) const { return mask_index_ && *mask_index_ == id; }
    const std::string& symbols() const { return symbols_; }

    bool operator==(const Alphabet& other) const = default;

private:
    std::string symbols_;
    std::optional<int> mask_index_;
};

/// An aligned (germline, observed) pair of equal length; neither side may
/// contain the mask symbol.
struct GermlinePair {
    TokenSequence germline;
    TokenSequence observed;
    std::string id;
};

GermlinePair make_pair_checked(TokenSequence germline, TokenSequence observed,
                               std::string id, const Alphabet& alphabet);

TokenSequence encode(const std::string& text, const Alphabet& alphabet);
std::string decode(const TokenSequence& tokens, const Alphabet& alphabet);

/// Sorted positions where the observed sequence differs from the germline.
std::vector<int> non_germline_positions(const GermlinePair& pair);

/// Standard edit distance with unit insert/delete/substitute costs.
int levenshtein(const std::string& a, const std::string& b);

/// Fraction of matching positions; requires equal lengths.
double percent_identity(const TokenSequence& a, const TokenSequence& b);

/// Identity between possibly unequal-length strings: percent identity when
/// lengths match, otherwise 1 - levenshtein / max length.
double sequence_identity(const std::string& a, const std::string& b);

}  // namespace gsedd

#endif
