#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "sopa/automata.hpp"
#include "sopa/classifier.hpp"
#include "sopa/embeddings.hpp"

namespace sopa::testing {

/// Owns a short sequence of random token vectors and exposes the span view
/// the scoring functions take.
struct RandomDoc {
  std::vector<std::vector<double>> vectors;
  std::vector<std::span<const double>> view;

  RandomDoc() = default;
  RandomDoc(const RandomDoc&) = delete;
  RandomDoc& operator=(const RandomDoc&) = delete;
  RandomDoc(RandomDoc&& other) noexcept { *this = std::move(other); }
  RandomDoc& operator=(RandomDoc&& other) noexcept {
    vectors = std::move(other.vectors);
    rebuild();
    return *this;
  }
  void rebuild() {
    view.assign(vectors.begin(), vectors.end());
  }
};

/// `n` vectors of dimension `dim`, entries uniform in [lo, hi).
RandomDoc random_doc(int n, int dim, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0);

/// Every parameter N(0, stddev^2).
PatternParams random_pattern(int length, int dim, std::mt19937_64& rng, double stddev = 1.0);

/// Every parameter uniform in [lo, hi).
PatternParams uniform_pattern(int length, int dim, std::mt19937_64& rng, double lo, double hi);

/// Vocabulary of `size` words "w0", "w1", ... with random unit vectors.
Embeddings random_embeddings(int size, int dim, std::mt19937_64& rng);

/// Synthetic binary task: label 1 documents contain a fixed trigram at a
/// random position, label 0 documents never contain it. Half of the
/// negatives carry trigram words out of order as distractors.
struct PlantedTask {
  Embeddings embeddings;
  std::vector<std::string> trigram;
  std::vector<TokenizedDocument> train;
  std::vector<TokenizedDocument> dev;
  std::vector<TokenizedDocument> test;
};

PlantedTask make_planted_task(std::uint64_t seed = 7, int train_size = 500, int dev_size = 200,
                              int test_size = 200);

/// True when `doc` contains the trigram as consecutive tokens.
bool contains_trigram(const TokenizedDocument& doc, const std::vector<std::string>& trigram);

/// Renders `docs` as `label<TAB>text` lines.
std::string to_tsv(const std::vector<TokenizedDocument>& docs);
/// Renders embeddings in the `word v1 ... ve` text format (round-trip exact).
std::string to_embedding_text(const Embeddings& embeddings);

/// Hyperparameters that solve the planted task with spec 3:5.
TrainConfig planted_train_config(const PatternSetConfig& patterns);

/// A fresh scratch directory under the system temp directory.
std::string scratch_dir(const std::string& name);
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace sopa::testing
