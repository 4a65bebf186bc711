#include "sopa/reference.hpp"

#include <cmath>
#include <limits>

#include "sopa/error.hpp"

namespace sopa::reference {

namespace {

double affine(std::span<const double> w, std::span<const double> v, double bias) {
  double s = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * v[k];
  return s + bias;
}

double squash(Encoder encoder, double x) {
  return encoder == Encoder::kSigmoid ? 1.0 / (1.0 + std::exp(-x)) : x;
}

DenseMatrix filled(int size, Score value) {
  return {size, std::vector<Score>(static_cast<std::size_t>(size * size), value)};
}

DenseMatrix identity_plus_eps(const DenseTransition& t, const Semiring& s) {
  DenseMatrix m = t.epsilon;
  for (int i = 0; i < m.size; ++i) m.at(i, i) = s.plus(m.at(i, i), s.one());
  return m;
}

std::vector<Score> row_times(const std::vector<Score>& row, const DenseMatrix& m,
                             const Semiring& s) {
  std::vector<Score> out(row.size(), s.zero());
  for (int j = 0; j < m.size; ++j) {
    Score acc = s.zero();
    for (int k = 0; k < m.size; ++k) acc = s.plus(acc, s.times(row[k], m.at(k, j)));
    out[j] = acc;
  }
  return out;
}

struct PathEnumerator {
  const PatternParams& pattern;
  std::span<const std::span<const double>> span;
  const PatternSetConfig& config;
  Semiring s;
  Score total;

  Score token_score(int state, int token, bool main) const {
    const auto& v = span[static_cast<std::size_t>(token)];
    return main ? squash(config.encoder, affine(pattern.main_weight(state), v, pattern.main_bias(state)))
                : squash(config.encoder, affine(pattern.self_weight(state), v, pattern.self_bias(state)));
  }
  Score eps_score(int state) const { return squash(config.encoder, pattern.eps_bias(state)); }

  // At `state` with `consumed` tokens done and path score `acc`, right after
  // a token (or at the very beginning); an epsilon may follow.
  void after_token(int state, int consumed, Score acc) {
    before_token(state, consumed, acc);
    if (config.epsilons && state < pattern.length()) {
      before_token(state + 1, consumed, s.times(acc, eps_score(state)));
    }
  }

  void before_token(int state, int consumed, Score acc) {
    const int L = pattern.length();
    if (consumed == static_cast<int>(span.size())) {
      if (state == L) total = s.plus(total, acc);
      return;
    }
    if (state == L) return;
    if (config.self_loops) after_token(state, consumed + 1, s.times(acc, token_score(state, consumed, false)));
    after_token(state + 1, consumed + 1, s.times(acc, token_score(state, consumed, true)));
  }
};

}  // namespace

DenseTransition dense_transition(const PatternParams& pattern, std::span<const double> token,
                                 const PatternSetConfig& config) {
  if (static_cast<int>(token.size()) != pattern.dim()) throw Error("dense_transition: dimension mismatch");
  const Semiring s(config.semiring);
  const int L = pattern.length();
  DenseTransition t{filled(L + 1, s.zero()), filled(L + 1, s.zero())};
  for (int i = 0; i < L; ++i) {
    if (config.self_loops) {
      t.token.at(i, i) = squash(config.encoder, affine(pattern.self_weight(i), token, pattern.self_bias(i)));
    }
    t.token.at(i, i + 1) = squash(config.encoder, affine(pattern.main_weight(i), token, pattern.main_bias(i)));
    if (config.epsilons) t.epsilon.at(i, i + 1) = squash(config.encoder, pattern.eps_bias(i));
  }
  return t;
}

Score dense_span_score(const PatternParams& pattern,
                       std::span<const std::span<const double>> span,
                       const PatternSetConfig& config) {
  const Semiring s(config.semiring);
  const int L = pattern.length();
  std::vector<double> zero_token(static_cast<std::size_t>(pattern.dim()), 0.0);
  const DenseMatrix closure = identity_plus_eps(dense_transition(pattern, zero_token, config), s);

  std::vector<Score> row(static_cast<std::size_t>(L + 1), s.zero());
  row[0] = s.one();
  row = row_times(row, closure, s);
  for (const auto& v : span) {
    row = row_times(row, dense_transition(pattern, v, config).token, s);
    row = row_times(row, closure, s);
  }
  // eta selects END.
  Score out = s.zero();
  for (int j = 0; j <= L; ++j) out = s.plus(out, s.times(row[j], j == L ? s.one() : s.zero()));
  return out;
}

Score brute_force_span_score(const PatternParams& pattern,
                             std::span<const std::span<const double>> span,
                             const PatternSetConfig& config) {
  if (static_cast<int>(span.size()) > kMaxBruteForceSpan) {
    throw Error("brute_force_span_score: span longer than " + std::to_string(kMaxBruteForceSpan));
  }
  if (pattern.length() > kMaxBruteForceLength) {
    throw Error("brute_force_span_score: pattern longer than " + std::to_string(kMaxBruteForceLength));
  }
  const Semiring s(config.semiring);
  PathEnumerator walk{pattern, span, config, s, s.zero()};
  walk.after_token(0, 0, s.one());
  return walk.total;
}

Score brute_force_doc_score(const PatternParams& pattern,
                            std::span<const std::span<const double>> doc,
                            const PatternSetConfig& config) {
  if (static_cast<int>(doc.size()) > kMaxBruteForceDoc) {
    throw Error("brute_force_doc_score: document longer than " + std::to_string(kMaxBruteForceDoc));
  }
  const Semiring s(config.semiring);
  Score total = s.zero();
  for (std::size_t i = 0; i < doc.size(); ++i) {
    for (std::size_t j = i; j < doc.size(); ++j) {
      total = s.plus(total, brute_force_span_score(pattern, doc.subspan(i, j - i + 1), config));
    }
  }
  return total;
}

Score explicit_cnn_score(std::span<const double> filter, std::span<const double> biases,
                         std::span<const std::span<const double>> doc) {
  const std::size_t width = biases.size();
  if (width == 0 || filter.size() % width != 0) throw Error("explicit_cnn_score: bad filter shape");
  const std::size_t dim = filter.size() / width;
  double bias = 0.0;
  for (double b : biases) bias += b;

  Score best = -std::numeric_limits<Score>::infinity();
  for (std::size_t i = 0; i + width <= doc.size(); ++i) {
    std::vector<double> window;
    window.reserve(filter.size());
    for (std::size_t j = 0; j < width; ++j) {
      if (doc[i + j].size() != dim) throw Error("explicit_cnn_score: dimension mismatch");
      window.insert(window.end(), doc[i + j].begin(), doc[i + j].end());
    }
    double score = 0.0;
    for (std::size_t k = 0; k < filter.size(); ++k) score += filter[k] * window[k];
    score += bias;
    if (score > best) best = score;
  }
  return best;
}

std::vector<double> cnn_filter(const PatternParams& pattern) {
  std::vector<double> filter;
  for (int i = 0; i < pattern.length(); ++i) {
    auto w = pattern.main_weight(i);
    filter.insert(filter.end(), w.begin(), w.end());
  }
  return filter;
}

std::vector<double> cnn_biases(const PatternParams& pattern) {
  std::vector<double> biases;
  for (int i = 0; i < pattern.length(); ++i) biases.push_back(pattern.main_bias(i));
  return biases;
}

}  // namespace sopa::reference
