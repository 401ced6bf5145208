#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "uiscout/ambiguity.hpp"
#include "uiscout/explorer.hpp"
#include "uiscout/retrieval_index.hpp"

namespace uiscout {

struct RunConfig {
  std::string scenario_path;
  int workers = 2;
  int episodes_per_worker = 4;
  int budget = 50;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  PolicyKind policy = PolicyKind::puct;
  DedupConfig dedup;
  AmbiguityParams amb;
  PuctConfig puct;

  void validate() const {
    if (scenario_path.empty()) throw ConfigError("scenario path is required");
    if (workers < 1) throw ConfigError("workers must be at least one");
    if (episodes_per_worker < 1) throw ConfigError("episodes_per_worker must be at least one");
    if (budget < 1) throw ConfigError("budget must be at least one");
    if (out_dir.empty()) throw ConfigError("out_dir is required");
    dedup.validate();
    amb.validate();
    puct.validate();
  }

  // Overlays the keys present in j onto the current values.
  void apply_json(const nlohmann::json& j) {
    scenario_path = j.value("scenario", scenario_path);
    workers = j.value("workers", workers);
    episodes_per_worker = j.value("episodes_per_worker", episodes_per_worker);
    budget = j.value("budget", budget);
    seed = j.value("seed", seed);
    out_dir = j.value("out_dir", out_dir);
    if (j.contains("policy")) policy = policy_kind_from_string(j.at("policy").get<std::string>());
    if (j.contains("dedup")) dedup = DedupConfig::from_json(j.at("dedup"));
    if (j.contains("ambiguity")) amb = AmbiguityParams::from_json(j.at("ambiguity"));
    if (j.contains("tree")) puct = PuctConfig::from_json(j.at("tree"));
  }

  nlohmann::json to_json() const {
    return {{"scenario", scenario_path},
            {"workers", workers},
            {"episodes_per_worker", episodes_per_worker},
            {"budget", budget},
            {"seed", seed},
            {"out_dir", out_dir},
            {"policy", to_string(policy)},
            {"dedup", dedup.to_json()},
            {"ambiguity", amb.to_json()},
            {"tree", puct.to_json()}};
  }
};

}  // namespace uiscout
