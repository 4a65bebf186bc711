#include "sopa/interpret.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "sopa/error.hpp"

namespace sopa {

using nlohmann::json;

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string signed_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.4f", v);
  return buf;
}

std::string phrase_text(const PhraseMatch& m) {
  std::string out;
  for (const auto& t : m.tokens) {
    if (!out.empty()) out += ' ';
    switch (t.kind) {
      case TransitionKind::kEpsilon: out += "ε"; break;
      case TransitionKind::kSelfLoop: out += t.text + "_SL"; break;
      case TransitionKind::kMain: out += t.text; break;
    }
  }
  return out;
}

TransitionKind kind_from(const std::string& s) {
  if (s == "main") return TransitionKind::kMain;
  if (s == "epsilon") return TransitionKind::kEpsilon;
  if (s == "self-loop") return TransitionKind::kSelfLoop;
  throw Error("unknown transition kind '" + s + "'");
}

json phrase_json(const PhraseMatch& m) {
  json tokens = json::array();
  for (const auto& t : m.tokens) {
    json tj = {{"kind", std::string(to_string(t.kind))}};
    if (t.position) {
      tj["position"] = *t.position;
      tj["text"] = t.text;
    }
    tokens.push_back(tj);
  }
  return {{"doc_id", m.doc_id}, {"span", {m.span_start, m.span_end}}, {"score", m.score}, {"tokens", tokens}};
}

PhraseMatch phrase_from_json(const json& j) {
  PhraseMatch m;
  m.doc_id = j.at("doc_id").get<int>();
  m.span_start = j.at("span").at(0).get<int>();
  m.span_end = j.at("span").at(1).get<int>();
  m.score = j.at("score").get<double>();
  for (const auto& tj : j.at("tokens")) {
    PhraseToken t;
    t.kind = kind_from(tj.at("kind").get<std::string>());
    if (tj.contains("position")) {
      t.position = tj.at("position").get<int>();
      t.text = tj.at("text").get<std::string>();
    }
    m.tokens.push_back(std::move(t));
  }
  return m;
}

std::vector<json> parse_lines(const std::string& text) {
  std::vector<json> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(std::string("malformed report line: ") + e.what());
    }
  }
  if (out.empty()) throw Error("report has no header record");
  return out;
}

}  // namespace

PhraseMatch phrase_from_trace(const MatchTrace& trace, const TokenizedDocument& doc, int doc_id) {
  PhraseMatch m;
  m.doc_id = doc_id;
  m.span_start = trace.span_start;
  m.span_end = trace.span_end;
  m.score = trace.score;
  for (const auto& step : trace.path) {
    PhraseToken t;
    t.kind = step.kind;
    if (step.token) {
      t.position = *step.token;
      t.text = doc.raw.at(static_cast<std::size_t>(*step.token));
    }
    m.tokens.push_back(std::move(t));
  }
  return m;
}

PatternReport top_k_phrases(const ModelBundle& model, const std::vector<TokenizedDocument>& docs,
                            const Embeddings& embeddings, int pattern, int k) {
  if (!Semiring(model.config.semiring).idempotent_plus()) {
    throw Error("pattern reports need a max semiring; sum-product has no best match");
  }
  if (pattern < 0 || pattern >= static_cast<int>(model.patterns.size())) {
    throw Error("pattern index " + std::to_string(pattern) + " out of range");
  }
  require_matching_vocab(model, embeddings);
  const auto& params = model.patterns[static_cast<std::size_t>(pattern)];
  PatternReport report;
  report.pattern = pattern;
  report.length = params.length();
  if (k <= 0) return report;

  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto tokens = token_vectors(docs[d], embeddings);
    const auto trace = trace_best_match(params, tokens, model.config, pattern);
    if (!trace.matched) continue;
    report.phrases.push_back(phrase_from_trace(trace, docs[d], static_cast<int>(d)));
  }
  std::stable_sort(report.phrases.begin(), report.phrases.end(),
                   [](const PhraseMatch& a, const PhraseMatch& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.doc_id < b.doc_id;
                   });
  if (report.phrases.size() > static_cast<std::size_t>(k)) report.phrases.resize(static_cast<std::size_t>(k));
  return report;
}

ContributionReport pattern_contributions(const ModelBundle& model, const TokenizedDocument& doc,
                                         const Embeddings& embeddings, int doc_id) {
  require_matching_vocab(model, embeddings);
  const auto tokens = token_vectors(doc, embeddings);
  std::vector<double> z = encode_document(model.patterns, tokens, model.config);
  const auto original = mlp_probabilities(model.mlp, z);
  ContributionReport report;
  report.doc_id = doc_id;
  report.predicted = predict(original);
  report.probability = original[static_cast<std::size_t>(report.predicted)];

  const bool traceable = Semiring(model.config.semiring).idempotent_plus();
  for (std::size_t p = 0; p < z.size(); ++p) {
    std::vector<double> zeroed = z;
    zeroed[p] = 0.0;
    const auto probs = mlp_probabilities(model.mlp, zeroed);
    Contribution c;
    c.pattern = static_cast<int>(p);
    c.value = report.probability - probs[static_cast<std::size_t>(report.predicted)];
    if (traceable) {
      const auto trace = trace_best_match(model.patterns[p], tokens, model.config, static_cast<int>(p));
      if (trace.matched) c.phrase = phrase_from_trace(trace, doc, doc_id);
    }
    report.contributions.push_back(std::move(c));
  }
  std::stable_sort(report.contributions.begin(), report.contributions.end(),
                   [](const Contribution& a, const Contribution& b) { return a.value > b.value; });
  return report;
}

std::string render_report(const PatternReport& report, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::kStructured) {
    out << json{{"type", "pattern_report"}, {"pattern", report.pattern}, {"length", report.length},
                {"count", report.phrases.size()}}.dump()
        << '\n';
    for (const auto& m : report.phrases) out << phrase_json(m).dump() << '\n';
    return out.str();
  }
  out << "Pattern " << report.pattern << " (length " << report.length << ")\n";
  for (const auto& m : report.phrases) {
    out << "  " << fixed(m.score) << "  doc " << m.doc_id << " [" << m.span_start << "-" << m.span_end
        << "]  " << phrase_text(m) << '\n';
  }
  return out.str();
}

std::string render_report(const ContributionReport& report, ReportFormat format, int top_n) {
  std::ostringstream out;
  if (format == ReportFormat::kStructured) {
    out << json{{"type", "contribution_report"}, {"doc_id", report.doc_id}, {"predicted", report.predicted},
                {"probability", report.probability}, {"count", report.contributions.size()}}.dump()
        << '\n';
    for (const auto& c : report.contributions) {
      json cj = {{"pattern", c.pattern}, {"contribution", c.value}};
      if (c.phrase) cj["phrase"] = phrase_json(*c.phrase);
      out << cj.dump() << '\n';
    }
    return out.str();
  }
  out << "Document " << report.doc_id << ": predicted " << report.predicted << " (p="
      << fixed(report.probability) << ")\n";
  auto line = [&](const Contribution& c) {
    out << "  " << signed_fixed(c.value) << "  pattern " << c.pattern;
    if (c.phrase) out << "  [" << c.phrase->span_start << "-" << c.phrase->span_end << "]  " << phrase_text(*c.phrase);
    out << '\n';
  };
  const auto& cs = report.contributions;
  const auto n = static_cast<std::size_t>(std::max(top_n, 0));
  out << " most positive:\n";
  for (std::size_t i = 0; i < cs.size() && i < n && cs[i].value > 0.0; ++i) line(cs[i]);
  out << " most negative:\n";
  for (std::size_t i = 0; i < cs.size() && i < n && cs[cs.size() - 1 - i].value < 0.0; ++i) line(cs[cs.size() - 1 - i]);
  return out.str();
}

PatternReport parse_pattern_report(const std::string& structured) {
  const auto lines = parse_lines(structured);
  try {
    const auto& head = lines.front();
    if (head.at("type") != "pattern_report") throw Error("not a pattern report");
    PatternReport r;
    r.pattern = head.at("pattern").get<int>();
    r.length = head.at("length").get<int>();
    for (std::size_t i = 1; i < lines.size(); ++i) r.phrases.push_back(phrase_from_json(lines[i]));
    return r;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed pattern report: ") + e.what());
  }
}

ContributionReport parse_contribution_report(const std::string& structured) {
  const auto lines = parse_lines(structured);
  try {
    const auto& head = lines.front();
    if (head.at("type") != "contribution_report") throw Error("not a contribution report");
    ContributionReport r;
    r.doc_id = head.at("doc_id").get<int>();
    r.predicted = head.at("predicted").get<int>();
    r.probability = head.at("probability").get<double>();
    for (std::size_t i = 1; i < lines.size(); ++i) {
      Contribution c;
      c.pattern = lines[i].at("pattern").get<int>();
      c.value = lines[i].at("contribution").get<double>();
      if (lines[i].contains("phrase")) c.phrase = phrase_from_json(lines[i].at("phrase"));
      r.contributions.push_back(std::move(c));
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed contribution report: ") + e.what());
  }
}

}  // namespace sopa
