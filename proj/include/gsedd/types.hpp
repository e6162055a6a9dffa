#ifndef GSEDD_TYPES_HPP
#define GSEDD_TYPES_HPP

#include <vector>

namespace gsedd {

/// d x n table of positive concrete-score ratios; entry (i, y) approximates
/// p_t(x with position i swapped to y) / p_t(x), and the current-token entry
/// is fixed to 1.
using ScoreTable = std::vector<std::vector<double>>;

}  // namespace gsedd

#endif
