#include "sopa/automata.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include "sopa/error.hpp"
#include "sopa/recurrence.hpp"

namespace sopa {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

template <class S>
struct ScoreOps {
  using Value = double;
  const S& semiring;

  Value zero() const { return semiring.zero(); }
  Value one() const { return semiring.one(); }
  double value(Value v) const { return v; }
  bool idempotent() const { return semiring.idempotent_plus(); }
  Value times(Value a, Value b) const { return semiring.times(a, b); }
  Value plus(Value a, Value b) const { return semiring.plus(a, b); }
  void note_plus() const {
    if constexpr (requires { semiring.note_plus(); }) semiring.note_plus();
  }
};

struct Bands {
  std::vector<Score> self;
  std::vector<Score> main;
  std::vector<Score> eps;
};

Bands compute_bands(const PatternParams& pattern,
                    std::span<const std::span<const double>> tokens,
                    const PatternSetConfig& config) {
  const auto L = static_cast<std::size_t>(pattern.length());
  Bands bands;
  bands.self.reserve(L * tokens.size());
  bands.main.reserve(L * tokens.size());
  for (const auto& v : tokens) {
    auto scores = transition_scores(pattern, v, config);
    bands.self.insert(bands.self.end(), scores.self_loop.begin(), scores.self_loop.end());
    bands.main.insert(bands.main.end(), scores.main_path.begin(), scores.main_path.end());
  }
  bands.eps = epsilon_scores(pattern, config);
  return bands;
}

void require_tokens(std::span<const std::span<const double>> tokens) {
  if (tokens.empty()) throw Error("cannot score an empty document");
}

}  // namespace

std::string_view to_string(Encoder encoder) {
  return encoder == Encoder::kSigmoid ? "sigmoid" : "identity";
}

Encoder parse_encoder(std::string_view name) {
  if (name == "sigmoid") return Encoder::kSigmoid;
  if (name == "identity") return Encoder::kIdentity;
  throw Error("unknown encoder '" + std::string(name) + "' (expected sigmoid or identity)");
}

double encode(Encoder encoder, double x) {
  if (encoder == Encoder::kIdentity) return x;
  return 1.0 / (1.0 + std::exp(-x));
}

PatternParams::PatternParams(int length, int dim)
    : length_(length), dim_(dim), values_(parameter_count(length, dim), 0.0) {
  if (length < 1) throw Error("pattern length must be at least 1");
  if (dim < 1) throw Error("embedding dimension must be at least 1");
}

int PatternSpec::total_patterns() const {
  int total = 0;
  for (const auto& [length, count] : entries) total += count;
  return total;
}

std::vector<int> PatternSpec::lengths() const {
  std::vector<int> out;
  for (const auto& [length, count] : entries) out.insert(out.end(), static_cast<std::size_t>(count), length);
  return out;
}

std::string PatternSpec::to_string() const {
  std::string out;
  for (const auto& [length, count] : entries) {
    if (!out.empty()) out += ',';
    out += std::to_string(length) + ":" + std::to_string(count);
  }
  return out;
}

PatternSpec parse_pattern_spec(std::string_view text, int max_length) {
  PatternSpec spec;
  auto parse_int = [&](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
      throw Error("bad pattern spec '" + std::string(text) + "': '" + std::string(s) +
                  "' is not an integer");
    }
    return v;
  };
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    auto item = text.substr(pos, comma - pos);
    auto colon = item.find(':');
    if (colon == std::string_view::npos) {
      throw Error("bad pattern spec '" + std::string(text) + "': expected length:count");
    }
    const int length = parse_int(item.substr(0, colon));
    const int count = parse_int(item.substr(colon + 1));
    if (length < 1 || length > max_length) {
      throw Error("bad pattern spec '" + std::string(text) + "': length " +
                  std::to_string(length) + " outside 1.." + std::to_string(max_length));
    }
    if (count < 0) throw Error("bad pattern spec '" + std::string(text) + "': negative count");
    spec.entries.emplace_back(length, count);
    pos = comma + 1;
  }
  if (spec.total_patterns() < 1) {
    throw Error("bad pattern spec '" + std::string(text) + "': no patterns");
  }
  return spec;
}

PatternSetConfig PatternSetConfig::cnn_mode(PatternSpec spec) {
  PatternSetConfig config;
  config.spec = std::move(spec);
  config.semiring = SemiringKind::kMaxSum;
  config.encoder = Encoder::kIdentity;
  config.self_loops = false;
  config.epsilons = false;
  return config;
}

TransitionScores transition_scores(const PatternParams& pattern,
                                   std::span<const double> v, Encoder encoder) {
  if (static_cast<int>(v.size()) != pattern.dim()) {
    throw Error("token vector has dimension " + std::to_string(v.size()) +
                ", pattern expects " + std::to_string(pattern.dim()));
  }
  const int L = pattern.length();
  TransitionScores out;
  out.self_loop.resize(static_cast<std::size_t>(L));
  out.main_path.resize(static_cast<std::size_t>(L));
  for (int i = 0; i < L; ++i) {
    out.self_loop[i] = encode(encoder, dot(pattern.self_weight(i), v) + pattern.self_bias(i));
    out.main_path[i] = encode(encoder, dot(pattern.main_weight(i), v) + pattern.main_bias(i));
  }
  return out;
}

std::vector<Score> epsilon_scores(const PatternParams& pattern, Encoder encoder) {
  std::vector<Score> out(static_cast<std::size_t>(pattern.length()));
  for (int i = 0; i < pattern.length(); ++i) out[i] = encode(encoder, pattern.eps_bias(i));
  return out;
}

TransitionScores transition_scores(const PatternParams& pattern, std::span<const double> v,
                                   const PatternSetConfig& config) {
  auto out = transition_scores(pattern, v, config.encoder);
  if (!config.self_loops) {
    std::fill(out.self_loop.begin(), out.self_loop.end(), Semiring(config.semiring).zero());
  }
  return out;
}

std::vector<Score> epsilon_scores(const PatternParams& pattern, const PatternSetConfig& config) {
  if (!config.epsilons) {
    return std::vector<Score>(static_cast<std::size_t>(pattern.length()),
                              Semiring(config.semiring).zero());
  }
  return epsilon_scores(pattern, config.encoder);
}

std::vector<Score> eps_step(std::span<const Score> h, std::span<const Score> eps,
                            const Semiring& semiring) {
  if (h.empty() || eps.size() + 1 != h.size()) {
    throw Error("eps_step: state row must have one more entry than the epsilon band");
  }
  std::vector<Score> out(h.begin(), h.end());
  for (std::size_t j = 1; j < h.size(); ++j) {
    out[j] = semiring.plus(h[j], semiring.times(h[j - 1], eps[j - 1]));
  }
  return out;
}

DocumentScore score_document(const PatternParams& pattern,
                             std::span<const std::span<const double>> tokens,
                             const PatternSetConfig& config, bool record_hidden) {
  require_tokens(tokens);
  const Bands bands = compute_bands(pattern, tokens, config);
  const Semiring semiring(config.semiring);
  ScoreOps<Semiring> ops{semiring};
  DocumentScore out;
  auto result = detail::run_recurrence(ops, pattern.length(), static_cast<int>(tokens.size()),
                                       std::span<const Score>(bands.self),
                                       std::span<const Score>(bands.main),
                                       std::span<const Score>(bands.eps), nullptr,
                                       record_hidden ? &out.hidden : nullptr);
  out.total = result.total;
  out.per_token = std::move(result.per_token);
  return out;
}

DocumentScore score_document(const PatternParams& pattern, const TokenizedDocument& doc,
                             const Embeddings& embeddings, const PatternSetConfig& config) {
  const auto tokens = token_vectors(doc, embeddings);
  return score_document(pattern, tokens, config);
}

Score score_document_counted(const PatternParams& pattern,
                             std::span<const std::span<const double>> tokens,
                             const PatternSetConfig& config, const CountingSemiring& semiring) {
  require_tokens(tokens);
  const Bands bands = compute_bands(pattern, tokens, config);
  ScoreOps<CountingSemiring> ops{semiring};
  return detail::run_recurrence(ops, pattern.length(), static_cast<int>(tokens.size()),
                                std::span<const Score>(bands.self),
                                std::span<const Score>(bands.main),
                                std::span<const Score>(bands.eps))
      .total;
}

std::vector<Score> encode_document(std::span<const PatternParams> patterns,
                                   std::span<const std::span<const double>> tokens,
                                   const PatternSetConfig& config) {
  if (patterns.empty()) throw Error("encode_document: no patterns");
  std::vector<Score> z;
  z.reserve(patterns.size());
  for (const auto& p : patterns) z.push_back(score_document(p, tokens, config).total);
  return z;
}

std::vector<Score> encode_document(std::span<const PatternParams> patterns,
                                   const TokenizedDocument& doc, const Embeddings& embeddings,
                                   const PatternSetConfig& config) {
  const auto tokens = token_vectors(doc, embeddings);
  return encode_document(patterns, tokens, config);
}

std::string_view to_string(TransitionKind kind) {
  switch (kind) {
    case TransitionKind::kMain: return "main";
    case TransitionKind::kEpsilon: return "epsilon";
    case TransitionKind::kSelfLoop: return "self-loop";
  }
  return "?";
}

MatchTrace trace_best_match(const PatternParams& pattern,
                            std::span<const std::span<const double>> tokens,
                            const PatternSetConfig& config, int pattern_index) {
  const Semiring semiring(config.semiring);
  if (!semiring.idempotent_plus()) {
    throw Error("trace_best_match: sum-product has no single best path");
  }
  require_tokens(tokens);
  const Bands bands = compute_bands(pattern, tokens, config);
  ScoreOps<Semiring> ops{semiring};
  detail::Backpointers back;
  const int n = static_cast<int>(tokens.size());
  const int L = pattern.length();
  auto result = detail::run_recurrence(ops, L, n, std::span<const Score>(bands.self),
                                       std::span<const Score>(bands.main),
                                       std::span<const Score>(bands.eps), &back);

  MatchTrace trace;
  trace.pattern = pattern_index;
  trace.score = result.total;
  if (result.total == semiring.zero()) return trace;
  trace.matched = true;

  // Walk back from END after token best_end.
  std::vector<TraceStep> reversed;
  int t = result.best_end;
  int j = L;
  // Position within a step: "cur" (after epsilon) or "prev" (H_{t-1}).
  while (true) {
    const auto at = back.at(t, j);
    if (back.eps[at]) {
      reversed.push_back({TransitionKind::kEpsilon, std::nullopt, j - 1, j});
      --j;
    }
    const auto pre_at = back.at(t, j);
    if (back.pre[pre_at] == detail::Step::kMain) {
      reversed.push_back({TransitionKind::kMain, t - 1, j - 1, j});
      --j;
    } else {
      reversed.push_back({TransitionKind::kSelfLoop, t - 1, j, j});
    }
    // Now at H_{t-1}[j].
    const bool from_restart = t == 1 || back.restart[back.at(t - 1, j)];
    if (from_restart) {
      if (j == 1) reversed.push_back({TransitionKind::kEpsilon, std::nullopt, 0, 1});
      trace.span_start = t - 1;
      break;
    }
    --t;
  }
  trace.span_end = result.best_end - 1;
  trace.path.assign(reversed.rbegin(), reversed.rend());
  return trace;
}

MatchTrace trace_best_match(const PatternParams& pattern, const TokenizedDocument& doc,
                            const Embeddings& embeddings, const PatternSetConfig& config,
                            int pattern_index) {
  const auto tokens = token_vectors(doc, embeddings);
  return trace_best_match(pattern, tokens, config, pattern_index);
}

Score replay_trace(const PatternParams& pattern, const MatchTrace& trace,
                   std::span<const std::span<const double>> tokens,
                   const PatternSetConfig& config) {
  const Semiring semiring(config.semiring);
  if (!trace.matched) return semiring.zero();
  const auto eps = epsilon_scores(pattern, config);
  Score acc = semiring.one();
  for (const auto& step : trace.path) {
    switch (step.kind) {
      case TransitionKind::kEpsilon:
        acc = semiring.times(acc, eps.at(static_cast<std::size_t>(step.from_state)));
        break;
      case TransitionKind::kMain:
      case TransitionKind::kSelfLoop: {
        const auto scores = transition_scores(pattern, tokens[static_cast<std::size_t>(*step.token)], config);
        const auto& band = step.kind == TransitionKind::kMain ? scores.main_path : scores.self_loop;
        acc = semiring.times(acc, band.at(static_cast<std::size_t>(step.from_state)));
        break;
      }
    }
  }
  return acc;
}

}  // namespace sopa
