#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sopa/automata.hpp"
#include "sopa/classifier.hpp"

namespace sopa {

/// One column of a rendered phrase: a consumed token or an epsilon marker.
struct PhraseToken {
  TransitionKind kind = TransitionKind::kMain;
  std::optional<int> position;  // empty for epsilon
  std::string text;             // empty for epsilon

  bool operator==(const PhraseToken&) const = default;
};

struct PhraseMatch {
  int doc_id = 0;
  int span_start = 0;
  int span_end = 0;
  Score score = 0.0;
  std::vector<PhraseToken> tokens;

  bool operator==(const PhraseMatch&) const = default;
};

struct PatternReport {
  int pattern = 0;
  int length = 0;
  std::vector<PhraseMatch> phrases;  // descending score, then doc id

  bool operator==(const PatternReport&) const = default;
};

struct Contribution {
  int pattern = 0;
  double value = 0.0;  // original minus zeroed predicted-class probability
  std::optional<PhraseMatch> phrase;

  bool operator==(const Contribution&) const = default;
};

struct ContributionReport {
  int doc_id = 0;
  int predicted = 0;
  double probability = 0.0;
  std::vector<Contribution> contributions;  // descending signed value

  bool operator==(const ContributionReport&) const = default;
};

PhraseMatch phrase_from_trace(const MatchTrace& trace, const TokenizedDocument& doc, int doc_id);

/// The k best-scoring document matches of one pattern across a dataset.
/// Throws for sum-product models.
PatternReport top_k_phrases(const ModelBundle& model, const std::vector<TokenizedDocument>& docs,
                            const Embeddings& embeddings, int pattern, int k);

/// Leave-one-out: for each pattern p, the predicted-class probability with
/// the full z minus the probability with z[p] set to 0.0. Best-match
/// phrases are attached when the semiring is traceable.
ContributionReport pattern_contributions(const ModelBundle& model, const TokenizedDocument& doc,
                                         const Embeddings& embeddings, int doc_id = 0);

enum class ReportFormat { kPlainText, kStructured };

/// Plain text marks self-loop tokens with `_SL` and epsilon steps with `ε`.
/// Structured output is JSON lines: a header record, then one per entry.
std::string render_report(const PatternReport& report, ReportFormat format);
std::string render_report(const ContributionReport& report, ReportFormat format,
                          int top_n = 3);

PatternReport parse_pattern_report(const std::string& structured);
ContributionReport parse_contribution_report(const std::string& structured);

}  // namespace sopa
