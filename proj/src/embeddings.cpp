#include "sopa/embeddings.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sopa/error.hpp"

namespace sopa {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_mix(std::uint64_t& h, std::string_view bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_double(std::string_view s, std::size_t line_no) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error("embeddings line " + std::to_string(line_no) + ": bad number '" +
                std::string(s) + "'");
  }
  return value;
}

}  // namespace

TokenId Vocabulary::add(std::string word) {
  auto it = index_.find(word);
  if (it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(words_.size());
  index_.emplace(word, id);
  words_.push_back(std::move(word));
  return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

VocabFingerprint Vocabulary::fingerprint() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& w : words_) {
    fnv_mix(h, w);
    fnv_mix(h, std::string_view("\n", 1));
  }
  return {h, dim_, size()};
}

EmbeddingMatrix::EmbeddingMatrix(int dim, std::vector<double> data, bool normalized)
    : dim_(dim), data_(std::move(data)), zero_row_(static_cast<std::size_t>(dim), 0.0) {
  if (dim <= 0) throw Error("embedding dimension must be positive");
  if (data_.size() % static_cast<std::size_t>(dim) != 0) {
    throw Error("embedding data is not a whole number of rows");
  }
  if (normalized) normalize();
}

std::span<const double> EmbeddingMatrix::row(TokenId id) const {
  if (id < 0) return zero_row_;
  if (id >= rows()) throw Error("token id " + std::to_string(id) + " out of range");
  return std::span<const double>(data_).subspan(static_cast<std::size_t>(id) * dim_,
                                                static_cast<std::size_t>(dim_));
}

void EmbeddingMatrix::normalize() {
  for (int r = 0; r < rows(); ++r) {
    double* row = data_.data() + static_cast<std::size_t>(r) * dim_;
    double sq = 0.0;
    for (int k = 0; k < dim_; ++k) sq += row[k] * row[k];
    if (sq == 0.0) continue;
    const double norm = std::sqrt(sq);
    for (int k = 0; k < dim_; ++k) row[k] /= norm;
  }
  normalized_ = true;
}

Embeddings read_embeddings(std::istream& in, bool normalize,
                           std::vector<std::string>* warnings) {
  int dim = 0;
  Vocabulary vocab;
  std::vector<double> data;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    const int e = static_cast<int>(fields.size()) - 1;
    if (e <= 0) {
      throw Error("embeddings line " + std::to_string(line_no) + ": word without vector");
    }
    if (dim == 0) {
      dim = e;
      vocab = Vocabulary(dim);
    } else if (e != dim) {
      throw Error("embeddings line " + std::to_string(line_no) + ": dimension " +
                  std::to_string(e) + " does not match " + std::to_string(dim));
    }
    std::string word(fields[0]);
    if (vocab.find(word)) {
      if (warnings) {
        warnings->push_back("embeddings line " + std::to_string(line_no) +
                            ": duplicate word '" + word + "' ignored");
      }
      continue;
    }
    vocab.add(std::move(word));
    for (int k = 1; k <= e; ++k) data.push_back(parse_double(fields[k], line_no));
  }
  if (dim == 0) throw Error("embeddings file is empty");
  return {std::move(vocab), EmbeddingMatrix(dim, std::move(data), normalize)};
}

Embeddings load_embeddings(const std::string& path, bool normalize,
                           std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embeddings file '" + path + "'");
  return read_embeddings(in, normalize, warnings);
}

TokenizedDocument tokenize_and_encode(std::string_view text, const Vocabulary& vocab,
                                      bool lowercase) {
  TokenizedDocument doc;
  for (auto piece : split_ws(text)) {
    std::string token(piece);
    if (lowercase) {
      for (auto& c : token) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    doc.tokens.push_back(vocab.find(token).value_or(kOovToken));
    doc.raw.push_back(std::move(token));
  }
  if (doc.tokens.empty()) throw Error("document has no tokens");
  return doc;
}

std::vector<std::span<const double>> token_vectors(const TokenizedDocument& doc,
                                                   const Embeddings& embeddings) {
  std::vector<std::span<const double>> out;
  out.reserve(doc.tokens.size());
  for (TokenId id : doc.tokens) out.push_back(embeddings.matrix.row(id));
  return out;
}

std::vector<LabeledText> read_dataset(std::istream& in, const std::string& source) {
  std::vector<LabeledText> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto tab = line.find('\t');
    const std::string where = source + ":" + std::to_string(line_no);
    if (tab == std::string::npos) throw Error(where + ": expected label<TAB>text");
    const std::string_view label_text(line.data(), tab);
    int label = -1;
    auto [ptr, ec] = std::from_chars(label_text.data(), label_text.data() + label_text.size(), label);
    if (ec != std::errc() || ptr != label_text.data() + label_text.size() || label < 0) {
      throw Error(where + ": label must be a non-negative integer");
    }
    rows.push_back({label, line.substr(tab + 1)});
  }
  if (rows.empty()) throw Error("dataset " + source + " is empty");
  return rows;
}

std::vector<LabeledText> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset '" + path + "'");
  return read_dataset(in, path);
}

std::vector<TokenizedDocument> encode_dataset(const std::vector<LabeledText>& rows,
                                              const Vocabulary& vocab, bool lowercase) {
  std::vector<TokenizedDocument> docs;
  docs.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      auto doc = tokenize_and_encode(rows[i].text, vocab, lowercase);
      doc.label = rows[i].label;
      docs.push_back(std::move(doc));
    } catch (const Error& e) {
      throw Error("document " + std::to_string(i) + ": " + e.what());
    }
  }
  return docs;
}

}  // namespace sopa
