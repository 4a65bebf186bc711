#pragma once

// Deliberately naive oracles for the pattern recurrence: dense semiring
// matrix products, explicit path enumeration and an explicit max-pooled
// convolution. None of this shares code with the recurrence.

#include <span>
#include <vector>

#include "sopa/automata.hpp"

namespace sopa::reference {

inline constexpr int kMaxBruteForceSpan = 10;
inline constexpr int kMaxBruteForceLength = 7;
inline constexpr int kMaxBruteForceDoc = 8;

/// Row-major (L+1) x (L+1) semiring matrix.
struct DenseMatrix {
  int size = 0;
  std::vector<Score> cells;

  Score& at(int i, int j) { return cells[static_cast<std::size_t>(i * size + j)]; }
  Score at(int i, int j) const { return cells[static_cast<std::size_t>(i * size + j)]; }
};

struct DenseTransition {
  DenseMatrix token;    // T(x): diagonal (rows 0..L-1) and superdiagonal
  DenseMatrix epsilon;  // T(eps): superdiagonal only
};

DenseTransition dense_transition(const PatternParams& pattern, std::span<const double> token,
                                 const PatternSetConfig& config);

/// pi^T (I + T(eps)) prod_i [T(x_i) (I + T(eps))] eta with dense products.
/// The whole span is consumed; an empty span is allowed.
Score dense_span_score(const PatternParams& pattern,
                       std::span<const std::span<const double>> span,
                       const PatternSetConfig& config);

/// Semiring sum over every legal path consuming the span exactly: at most
/// one epsilon before the first token and after each token. Throws when the
/// span is longer than kMaxBruteForceSpan or L exceeds kMaxBruteForceLength.
Score brute_force_span_score(const PatternParams& pattern,
                             std::span<const std::span<const double>> span,
                             const PatternSetConfig& config);

/// Semiring sum of brute_force_span_score over all nonempty subspans.
/// Throws for documents longer than kMaxBruteForceDoc.
Score brute_force_doc_score(const PatternParams& pattern,
                            std::span<const std::span<const double>> doc,
                            const PatternSetConfig& config);

/// Max over windows of filter . concat(v_i..v_{i+L-1}) + sum(biases), with
/// L = biases.size(). Returns -inf when the document is shorter than L.
Score explicit_cnn_score(std::span<const double> filter, std::span<const double> biases,
                         std::span<const std::span<const double>> doc);

/// The main-path weights of a pattern flattened into a convolution filter.
std::vector<double> cnn_filter(const PatternParams& pattern);
std::vector<double> cnn_biases(const PatternParams& pattern);

}  // namespace sopa::reference
