#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "uiscout/errors.hpp"
#include "uiscout/state_graph.hpp"

namespace uiscout {

struct AmbiguityParams {
  double kappa = 5.0;  // evidence half-weight: confidence reaches 0.5 at n = kappa
  double u0 = 0.5;     // prior score for states without evidence

  void validate() const {
    if (!(kappa > 0.0)) throw ConfigError("kappa must be positive");
    if (u0 < 0.0 || u0 > 1.0) throw ConfigError("u0 must lie in [0, 1]");
  }

  nlohmann::json to_json() const { return {{"kappa", kappa}, {"u0", u0}}; }

  static AmbiguityParams from_json(const nlohmann::json& j) {
    AmbiguityParams p;
    p.kappa = j.value("kappa", p.kappa);
    p.u0 = j.value("u0", p.u0);
    p.validate();
    return p;
  }
};

struct AmbiguityEstimate {
  double dispersion = 0.0;      // evidence-weighted outcome entropy
  std::uint64_t evidence = 0;   // total matched-action samples at the state
  double confidence = 0.0;      // shrinkage weight on the dispersion
  double score = 0.0;           // blended ambiguity in [0, 1]
};

// Entropy of a discrete distribution normalized by log of its observed
// support size. Support of one (or less) scores zero.
inline double normalized_entropy(const std::vector<double>& probs) {
  if (probs.empty()) throw std::invalid_argument("normalized_entropy: empty distribution");
  double sum = 0.0;
  std::size_t support = 0;
  for (double p : probs) {
    if (p < 0.0) throw std::invalid_argument("normalized_entropy: negative probability");
    if (p > 0.0) ++support;
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw std::invalid_argument("normalized_entropy: probabilities must sum to 1");
  if (support <= 1) return 0.0;
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  double v = h / std::log(static_cast<double>(support));
  if (v < 0.0) return 0.0;
  if (v > 1.0) return 1.0;
  return v;
}

// Visit-weighted mean of per-action outcome entropies at a state, plus the
// total evidence mass. States without recorded actions score (0, 0).
inline std::pair<double, std::uint64_t> dispersion(const std::string& state,
                                                   const StateGraph& graph) {
  auto rows = graph.out_transitions(state);
  std::uint64_t total = 0;
  for (const auto& [key, dist] : rows) total += dist.total;
  if (total == 0) return {0.0, 0};
  double d = 0.0;
  for (const auto& [key, dist] : rows) {
    if (dist.total == 0) continue;
    std::vector<double> probs;
    probs.reserve(dist.counts.size());
    for (const auto& [to, n] : dist.counts)
      probs.push_back(static_cast<double>(n) / static_cast<double>(dist.total));
    double weight = static_cast<double>(dist.total) / static_cast<double>(total);
    d += weight * normalized_entropy(probs);
  }
  if (d < 0.0) d = 0.0;
  if (d > 1.0) d = 1.0;
  return {d, total};
}

// Evidence-shrunk ambiguity score: blends the measured dispersion with the
// prior u0 by confidence n / (n + kappa).
inline AmbiguityEstimate ambiguity_score(const std::string& state, const StateGraph& graph,
                                         const AmbiguityParams& params) {
  params.validate();
  if (!graph.has_node(state))
    throw IntegrityError("ambiguity_score: unknown state " + state);
  auto [d, n] = dispersion(state, graph);
  AmbiguityEstimate est;
  est.dispersion = d;
  est.evidence = n;
  est.confidence = static_cast<double>(n) / (static_cast<double>(n) + params.kappa);
  est.score = est.confidence * d + (1.0 - est.confidence) * params.u0;
  return est;
}

// Per-state memo keyed by the graph's state version counter. Safe for
// concurrent readers; a version bump triggers recomputation on next access.
class AmbiguityCache {
 public:
  AmbiguityEstimate get(const std::string& state, const StateGraph& graph,
                        const AmbiguityParams& params) {
    std::uint64_t version = graph.state_version(state);
    {
      std::shared_lock lock(mu_);
      auto it = cache_.find(state);
      if (it != cache_.end() && it->second.first == version) return it->second.second;
    }
    auto est = ambiguity_score(state, graph, params);
    {
      std::unique_lock lock(mu_);
      auto& slot = cache_[state];
      if (!(slot.first > version)) slot = {version, est};
      return slot.second;
    }
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return cache_.size();
  }

 private:
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, std::pair<std::uint64_t, AmbiguityEstimate>> cache_;
};

}  // namespace uiscout
