#include "json.hpp"
#include "sopa/classifier.hpp"
#include "sopa/error.hpp"

namespace sopa {

SearchSpace SearchSpace::standard() {
  SearchSpace space;
  for (const char* spec : {"5:10,4:10,3:10,2:10", "6:10,5:10,4:10", "6:10,5:10,4:10,3:10,2:10",
                           "6:20,5:20,4:10,3:10,2:10", "7:10,6:10,5:10,4:10,3:10,2:10"}) {
    space.pattern_specs.push_back(parse_pattern_spec(spec));
  }
  space.learning_rates = {0.01, 0.05, 0.001, 0.005};
  space.dropouts = {0.0, 0.05, 0.1, 0.2};
  space.mlp_hidden = {10, 25, 50, 100, 300};
  return space;
}

SearchSpace parse_search_space(const std::string& json_text) {
  using nlohmann::json;
  SearchSpace space = SearchSpace::standard();
  try {
    const json j = json::parse(json_text);
    if (!j.is_object()) throw Error("search space must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (key != "learning_rate" && key != "dropout" && key != "mlp_hidden" && key != "patterns") {
        throw Error("unknown search space key '" + key + "'");
      }
    }
    // Keys that are absent keep the standard grid's values.
    if (j.contains("learning_rate")) space.learning_rates = j.at("learning_rate").get<std::vector<double>>();
    if (j.contains("dropout")) space.dropouts = j.at("dropout").get<std::vector<double>>();
    if (j.contains("mlp_hidden")) space.mlp_hidden = j.at("mlp_hidden").get<std::vector<int>>();
    if (j.contains("patterns")) {
      space.pattern_specs.clear();
      for (const auto& s : j.at("patterns").get<std::vector<std::string>>()) {
        space.pattern_specs.push_back(parse_pattern_spec(s));
      }
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed search space: ") + e.what());
  }
  if (space.learning_rates.empty() || space.dropouts.empty() || space.mlp_hidden.empty() ||
      space.pattern_specs.empty()) {
    throw Error("search space has an empty hyperparameter list");
  }
  return space;
}

SearchResult random_search(const SearchSpace& space, int iterations,
                           const std::vector<TokenizedDocument>& train_set,
                           const std::vector<TokenizedDocument>& dev_set,
                           const Embeddings& embeddings, const TrainConfig& base,
                           std::uint64_t seed) {
  if (space.learning_rates.empty() || space.dropouts.empty() || space.mlp_hidden.empty() ||
      space.pattern_specs.empty()) {
    throw Error("search space has an empty hyperparameter list");
  }
  if (iterations < 1) throw Error("search needs at least one iteration");

  Rng rng(seed);
  auto pick = [&rng](const auto& values) {
    std::uniform_int_distribution<std::size_t> index(0, values.size() - 1);
    return values[index(rng)];
  };

  SearchResult result;
  for (int it = 0; it < iterations; ++it) {
    TrainConfig config = base;
    config.learning_rate = pick(space.learning_rates);
    config.dropout = pick(space.dropouts);
    config.mlp_hidden = pick(space.mlp_hidden);
    config.patterns.spec = pick(space.pattern_specs);
    config.seed = rng();

    const auto trained = train(train_set, dev_set, embeddings, config);
    SearchRow row;
    row.iteration = it;
    row.config = config;
    row.dev_accuracy = trained.best_dev_accuracy;
    row.dev_loss = trained.best_dev_loss;
    row.epochs = static_cast<int>(trained.log.size());
    if (it == 0 || row.dev_accuracy > result.rows[static_cast<std::size_t>(result.best_row)].dev_accuracy) {
      result.best_row = it;
      result.best = config;
    }
    result.rows.push_back(row);
  }
  return result;
}

}  // namespace sopa
