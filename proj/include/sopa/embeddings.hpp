#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sopa {

using TokenId = int;

// Out-of-vocabulary marker. Looked up as the all-zero vector.
inline constexpr TokenId kOovToken = -1;

struct VocabFingerprint {
  std::uint64_t hash = 0;
  int dim = 0;
  int size = 0;

  bool operator==(const VocabFingerprint&) const = default;
};

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(int dim) : dim_(dim) {}

  // Returns the index of `word`, inserting it if new.
  TokenId add(std::string word);
  std::optional<TokenId> find(std::string_view word) const;
  const std::string& word(TokenId id) const { return words_.at(static_cast<std::size_t>(id)); }

  int size() const { return static_cast<int>(words_.size()); }
  int dim() const { return dim_; }
  // FNV-1a over the ordered word list, plus size and dimension.
  VocabFingerprint fingerprint() const;

 private:
  int dim_ = 0;
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(int dim, std::vector<double> data, bool normalized);

  int rows() const { return dim_ == 0 ? 0 : static_cast<int>(data_.size()) / dim_; }
  int dim() const { return dim_; }
  bool normalized() const { return normalized_; }

  // OOV (or any negative id) maps to the zero row.
  std::span<const double> row(TokenId id) const;

  // Scales every nonzero row to unit Euclidean length.
  void normalize();

 private:
  int dim_ = 0;
  std::vector<double> data_;
  std::vector<double> zero_row_;
  bool normalized_ = false;
};

struct Embeddings {
  Vocabulary vocab;
  EmbeddingMatrix matrix;

  int dim() const { return matrix.dim(); }
};

/// Reads `word v1 ... ve` lines. The first occurrence of a duplicated word
/// wins; each duplicate appends a message to `warnings` when non-null.
Embeddings load_embeddings(const std::string& path, bool normalize,
                           std::vector<std::string>* warnings = nullptr);
Embeddings read_embeddings(std::istream& in, bool normalize,
                           std::vector<std::string>* warnings = nullptr);

struct TokenizedDocument {
  std::vector<TokenId> tokens;
  std::vector<std::string> raw;
  std::optional<int> label;

  int size() const { return static_cast<int>(tokens.size()); }
};

/// Whitespace tokenization, optional lowercasing (ASCII). Throws on a text
/// with no tokens.
TokenizedDocument tokenize_and_encode(std::string_view text, const Vocabulary& vocab,
                                      bool lowercase);

/// Embedding rows for every token of `doc`, in order.
std::vector<std::span<const double>> token_vectors(const TokenizedDocument& doc,
                                                   const Embeddings& embeddings);

struct LabeledText {
  int label = 0;
  std::string text;
};

/// Dataset lines are `label<TAB>text`, labels non-negative integers.
/// Blank lines are skipped; an empty dataset is an error.
std::vector<LabeledText> load_dataset(const std::string& path);
std::vector<LabeledText> read_dataset(std::istream& in, const std::string& source = "<stream>");

std::vector<TokenizedDocument> encode_dataset(const std::vector<LabeledText>& rows,
                                              const Vocabulary& vocab, bool lowercase);

}  // namespace sopa
