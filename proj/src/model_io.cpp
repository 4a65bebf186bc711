#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "sopa/classifier.hpp"
#include "sopa/error.hpp"

namespace sopa {

using nlohmann::json;

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
  std::size_t used = 0;
  const auto v = std::stoull(s, &used, 16);
  if (used != s.size()) throw Error("bad hex value '" + s + "'");
  return v;
}

// splitmix64: a fixed, platform-independent generator for the probe.
std::uint64_t splitmix(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

json score_json(double s) { return std::isfinite(s) ? json(s) : json(nullptr); }

std::vector<double> slot_block(const PatternParams& p, bool self) {
  std::vector<double> out;
  for (int i = 0; i < p.length(); ++i) {
    auto w = self ? p.self_weight(i) : p.main_weight(i);
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

template <class T>
std::vector<T> take(const json& j, const char* key, std::size_t expected, const std::string& where) {
  if (!j.contains(key)) throw Error(where + ": missing '" + key + "'");
  auto v = j.at(key).get<std::vector<T>>();
  if (v.size() != expected) {
    throw Error(where + ": '" + key + "' has " + std::to_string(v.size()) + " entries, expected " +
                std::to_string(expected));
  }
  return v;
}

}  // namespace

std::vector<std::vector<double>> probe_document(int dim) {
  std::uint64_t state = 0x5350A11CE5EEDULL + static_cast<std::uint64_t>(dim);
  std::vector<std::vector<double>> doc(kProbeLength, std::vector<double>(static_cast<std::size_t>(dim)));
  for (auto& v : doc) {
    for (double& x : v) {
      // Uniform in [-1, 1) from the top 53 bits.
      x = static_cast<double>(splitmix(state) >> 11) * 0x1.0p-52 - 1.0;
    }
  }
  return doc;
}

std::uint64_t parameter_digest(const ModelBundle& model) {
  std::uint64_t h = kFnvOffset;
  for (double v : flatten_parameters(model)) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xFF;
      h *= kFnvPrime;
    }
  }
  return h;
}

std::string model_to_json(const ModelBundle& model) {
  json j;
  j["version"] = kModelVersion;
  j["config"] = {
      {"patterns", model.config.spec.to_string()},
      {"semiring", std::string(to_string(model.config.semiring))},
      {"encoder", std::string(to_string(model.config.encoder))},
      {"self_loops", model.config.self_loops},
      {"epsilons", model.config.epsilons},
      {"lowercase", model.lowercase},
      {"normalized_embeddings", model.normalized_embeddings},
  };
  j["num_classes"] = model.num_classes;
  j["vocabulary"] = {{"hash", hex64(model.vocab.hash)}, {"dim", model.vocab.dim}, {"size", model.vocab.size}};

  json patterns = json::array();
  for (const auto& p : model.patterns) {
    std::vector<double> a, b, c;
    for (int i = 0; i < p.length(); ++i) {
      a.push_back(p.self_bias(i));
      b.push_back(p.main_bias(i));
      c.push_back(p.eps_bias(i));
    }
    patterns.push_back({{"length", p.length()},
                        {"u", slot_block(p, true)},
                        {"a", a},
                        {"w", slot_block(p, false)},
                        {"b", b},
                        {"c", c}});
  }
  j["patterns"] = patterns;
  j["mlp"] = {{"inputs", model.mlp.inputs},
              {"hidden", model.mlp.hidden},
              {"classes", model.mlp.classes},
              {"hidden_weight", model.mlp.hidden_weight},
              {"hidden_bias", model.mlp.hidden_bias},
              {"output_weight", model.mlp.output_weight},
              {"output_bias", model.mlp.output_bias}};
  j["digest"] = hex64(parameter_digest(model));

  const auto probe = probe_document(model.vocab.dim);
  std::vector<std::span<const double>> tokens(probe.begin(), probe.end());
  json probe_scores = json::array();
  for (const auto& p : model.patterns) probe_scores.push_back(score_json(score_document(p, tokens, model.config).total));
  j["probe_scores"] = probe_scores;
  return j.dump(1);
}

ModelBundle model_from_json(const std::string& text, ModelIntegrity* integrity) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (j.value("version", std::string()) != kModelVersion) {
      throw Error("model file version is not " + std::string(kModelVersion));
    }
    ModelBundle model;
    const auto& cfg = j.at("config");
    model.config.spec = parse_pattern_spec(cfg.at("patterns").get<std::string>());
    model.config.semiring = parse_semiring_kind(cfg.at("semiring").get<std::string>());
    model.config.encoder = parse_encoder(cfg.at("encoder").get<std::string>());
    model.config.self_loops = cfg.at("self_loops").get<bool>();
    model.config.epsilons = cfg.at("epsilons").get<bool>();
    model.lowercase = cfg.value("lowercase", false);
    model.normalized_embeddings = cfg.value("normalized_embeddings", true);
    model.num_classes = j.at("num_classes").get<int>();
    const auto& voc = j.at("vocabulary");
    model.vocab = {parse_hex64(voc.at("hash").get<std::string>()), voc.at("dim").get<int>(),
                   voc.at("size").get<int>()};
    const int e = model.vocab.dim;

    const auto lengths = model.config.spec.lengths();
    const auto& pats = j.at("patterns");
    if (pats.size() != lengths.size()) throw Error("pattern count does not match the pattern spec");
    for (std::size_t p = 0; p < lengths.size(); ++p) {
      const auto& pj = pats[p];
      const std::string where = "pattern " + std::to_string(p);
      const int L = pj.at("length").get<int>();
      if (L != lengths[p]) throw Error(where + ": length does not match the pattern spec");
      PatternParams params(L, e);
      const auto uL = static_cast<std::size_t>(L);
      const auto ue = static_cast<std::size_t>(e);
      const auto u = take<double>(pj, "u", uL * ue, where);
      const auto w = take<double>(pj, "w", uL * ue, where);
      const auto a = take<double>(pj, "a", uL, where);
      const auto b = take<double>(pj, "b", uL, where);
      const auto c = take<double>(pj, "c", uL, where);
      for (int i = 0; i < L; ++i) {
        std::copy_n(u.begin() + i * e, e, params.self_weight(i).begin());
        std::copy_n(w.begin() + i * e, e, params.main_weight(i).begin());
        params.self_bias(i) = a[i];
        params.main_bias(i) = b[i];
        params.eps_bias(i) = c[i];
      }
      model.patterns.push_back(std::move(params));
    }

    const auto& mj = j.at("mlp");
    model.mlp = MlpParams(mj.at("inputs").get<int>(), mj.at("hidden").get<int>(), mj.at("classes").get<int>());
    if (model.mlp.inputs != static_cast<int>(lengths.size()) || model.mlp.classes != model.num_classes) {
      throw Error("MLP shape does not match the pattern count or class count");
    }
    model.mlp.hidden_weight = take<double>(mj, "hidden_weight", model.mlp.hidden_weight.size(), "mlp");
    model.mlp.hidden_bias = take<double>(mj, "hidden_bias", model.mlp.hidden_bias.size(), "mlp");
    model.mlp.output_weight = take<double>(mj, "output_weight", model.mlp.output_weight.size(), "mlp");
    model.mlp.output_bias = take<double>(mj, "output_bias", model.mlp.output_bias.size(), "mlp");

    if (integrity) {
      integrity->digest_matches =
          j.contains("digest") && parse_hex64(j.at("digest").get<std::string>()) == parameter_digest(model);
      integrity->probe_scores.clear();
      if (j.contains("probe_scores")) {
        for (const auto& s : j.at("probe_scores")) {
          integrity->probe_scores.push_back(s.is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                        : s.get<double>());
        }
      }
    }
    return model;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed model file: ") + e.what());
  }
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp + "'");
    out << contents;
    if (!out) throw Error("write to '" + tmp + "' failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw Error("cannot rename '" + tmp + "' to '" + path + "'");
  }
}

void save_model(const ModelBundle& model, const std::string& path) {
  write_file_atomic(path, model_to_json(model) + "\n");
}

ModelBundle load_model(const std::string& path, ModelIntegrity* integrity) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str(), integrity);
}

}  // namespace sopa
