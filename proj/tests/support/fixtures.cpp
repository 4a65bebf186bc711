#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sopa::testing {

RandomDoc random_doc(int n, int dim, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  RandomDoc doc;
  doc.vectors.assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(dim)));
  for (auto& v : doc.vectors) {
    for (double& x : v) x = u(rng);
  }
  doc.rebuild();
  return doc;
}

PatternParams random_pattern(int length, int dim, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> normal(0.0, stddev);
  PatternParams p(length, dim);
  for (double& v : p.values()) v = normal(rng);
  return p;
}

PatternParams uniform_pattern(int length, int dim, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  PatternParams p(length, dim);
  for (double& v : p.values()) v = u(rng);
  return p;
}

Embeddings random_embeddings(int size, int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Embeddings e;
  e.vocab = Vocabulary(dim);
  std::vector<double> data;
  for (int i = 0; i < size; ++i) {
    e.vocab.add("w" + std::to_string(i));
    for (int k = 0; k < dim; ++k) data.push_back(normal(rng));
  }
  e.matrix = EmbeddingMatrix(dim, std::move(data), false);
  e.matrix.normalize();
  return e;
}

namespace {

TokenizedDocument make_doc(const std::vector<std::string>& words, const Vocabulary& vocab, int label) {
  std::string text;
  for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
  TokenizedDocument doc = tokenize_and_encode(text, vocab, false);
  doc.label = label;
  return doc;
}

std::vector<TokenizedDocument> make_split(int size, const Embeddings& emb,
                                          const std::vector<std::string>& trigram, std::mt19937_64& rng) {
  const int vocab_size = emb.vocab.size();
  std::uniform_int_distribution<int> length(8, 15);
  std::uniform_int_distribution<int> word(0, vocab_size - 1);
  std::bernoulli_distribution coin(0.5);
  std::vector<TokenizedDocument> docs;
  while (static_cast<int>(docs.size()) < size) {
    const int label = static_cast<int>(docs.size() % 2);
    const int n = length(rng);
    std::vector<std::string> words;
    for (int i = 0; i < n; ++i) words.push_back(emb.vocab.word(word(rng)));
    if (label == 1) {
      const int at = std::uniform_int_distribution<int>(0, n - 3)(rng);
      std::copy(trigram.begin(), trigram.end(), words.begin() + at);
    } else if (coin(rng)) {
      // Distractor: trigram words present but out of order.
      std::vector<std::string> shuffled = trigram;
      std::swap(shuffled[0], shuffled[2]);
      const int at = std::uniform_int_distribution<int>(0, n - 3)(rng);
      std::copy(shuffled.begin(), shuffled.end(), words.begin() + at);
    }
    TokenizedDocument doc = make_doc(words, emb.vocab, label);
    if (label == 0 && contains_trigram(doc, trigram)) continue;
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace

bool contains_trigram(const TokenizedDocument& doc, const std::vector<std::string>& trigram) {
  for (std::size_t i = 0; i + 3 <= doc.raw.size(); ++i) {
    if (doc.raw[i] == trigram[0] && doc.raw[i + 1] == trigram[1] && doc.raw[i + 2] == trigram[2]) return true;
  }
  return false;
}

PlantedTask make_planted_task(std::uint64_t seed, int train_size, int dev_size, int test_size) {
  std::mt19937_64 rng(seed);
  PlantedTask task;
  task.embeddings = random_embeddings(200, 10, rng);
  task.trigram = {"w17", "w42", "w123"};
  task.train = make_split(train_size, task.embeddings, task.trigram, rng);
  task.dev = make_split(dev_size, task.embeddings, task.trigram, rng);
  task.test = make_split(test_size, task.embeddings, task.trigram, rng);
  return task;
}

std::string to_tsv(const std::vector<TokenizedDocument>& docs) {
  std::string out;
  for (const auto& d : docs) {
    out += std::to_string(d.label.value_or(0)) + "\t";
    for (std::size_t i = 0; i < d.raw.size(); ++i) out += (i ? " " : "") + d.raw[i];
    out += "\n";
  }
  return out;
}

std::string to_embedding_text(const Embeddings& embeddings) {
  std::string out;
  char buf[40];
  for (int i = 0; i < embeddings.vocab.size(); ++i) {
    out += embeddings.vocab.word(i);
    for (double x : embeddings.matrix.row(i)) {
      std::snprintf(buf, sizeof buf, " %.17g", x);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

TrainConfig planted_train_config(const PatternSetConfig& patterns) {
  TrainConfig c;
  c.patterns = patterns;
  c.learning_rate = 0.05;
  c.dropout = 0.0;
  c.batch_size = 50;
  c.max_epochs = 250;
  c.patience = 10;
  c.mlp_hidden = 10;
  c.seed = 3;
  return c;
}

std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("sopa-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace sopa::testing
