#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "uiscout/explorer.hpp"
#include "uiscout/gui_sim.hpp"

namespace uiscout {

// Unique non-start states reached by the first t+1 steps.
inline std::vector<double> frontier_curve(const EpisodeTrace& trace) {
  std::set<std::string> seen;
  std::vector<double> out;
  out.reserve(trace.steps.size());
  for (const auto& s : trace.steps) {
    if (s.to_state != trace.start_state) seen.insert(s.to_state);
    out.push_back(static_cast<double>(seen.size()));
  }
  return out;
}

// Signed ambiguity shift of the current state relative to the episode start.
inline std::vector<double> ambiguity_delta_curve(const EpisodeTrace& trace) {
  std::vector<double> out;
  out.reserve(trace.steps.size());
  for (const auto& s : trace.steps) out.push_back(s.u_from - trace.u_start);
  return out;
}

inline std::vector<double> mean_curve(const std::vector<std::vector<double>>& curves) {
  if (curves.empty()) throw std::invalid_argument("mean_curve needs at least one curve");
  const std::size_t len = curves.front().size();
  for (const auto& c : curves)
    if (c.size() != len) throw std::invalid_argument("mean_curve needs equal-length curves");
  std::vector<double> out(len, 0.0);
  for (const auto& c : curves)
    for (std::size_t i = 0; i < len; ++i) out[i] += c[i];
  for (auto& v : out) v /= static_cast<double>(curves.size());
  return out;
}

inline double auc(const std::vector<double>& curve) {
  double s = 0.0;
  for (double v : curve) s += v;
  return s;
}

// Unique states per hundred interactions.
inline double discovery_rate(std::uint64_t unique_states, std::uint64_t interactions) {
  if (interactions == 0) throw std::invalid_argument("discovery_rate needs interactions");
  return 100.0 * static_cast<double>(unique_states) / static_cast<double>(interactions);
}

struct PolicySpec {
  PolicyKind kind = PolicyKind::puct;
  PriorKind prior = PriorKind::heuristic;  // used by the tree policy only
  std::string label;

  std::string effective_label() const {
    if (!label.empty()) return label;
    if (kind == PolicyKind::puct)
      return std::string(to_string(kind)) + "+" + std::string(to_string(prior));
    return std::string(to_string(kind));
  }

  nlohmann::json to_json() const {
    return {{"kind", to_string(kind)}, {"prior", to_string(prior)},
            {"label", effective_label()}};
  }
};

struct BenchmarkOptions {
  int episodes = 3;  // per replay prefix
  int budget = 50;
  std::uint64_t seed = 1;
  DedupConfig dedup;
  AmbiguityParams amb;
  PuctConfig puct;

  void validate() const {
    if (episodes < 1) throw ConfigError("benchmark needs at least one episode per prefix");
    if (budget < 1) throw ConfigError("benchmark budget must be positive");
    dedup.validate();
    amb.validate();
    puct.validate();
  }
};

struct PolicyResult {
  std::string label;
  std::vector<EpisodeTrace> traces;
  std::vector<double> mean_frontier;
  std::vector<double> mean_ambiguity_delta;
  double auc_frontier = 0.0;
  double auc_ambiguity_delta = 0.0;
  std::uint64_t interactions = 0;
  std::uint64_t unique_states = 0;
  double discovery = 0.0;
  std::uint64_t replay_failures = 0;
};

struct BenchmarkResult {
  std::string scenario_name;
  std::string scenario_hash;
  nlohmann::json config_echo;
  std::vector<PolicyResult> policies;
};

// Replay-start evaluation: every policy is dropped onto every verified prefix
// with a fresh context, so numbers are comparable and order-independent.
// `corpus` is the index the prefixes were verified against; it is only read.
inline BenchmarkResult run_benchmark(const Scenario& scenario,
                                     const std::vector<ReplayPrefix>& pool,
                                     const std::vector<PolicySpec>& policies,
                                     const RetrievalIndex& corpus,
                                     const BenchmarkOptions& opts) {
  opts.validate();
  if (pool.empty()) throw ConfigError("benchmark needs a non-empty replay pool");
  if (policies.empty()) throw ConfigError("benchmark needs at least one policy");
  for (const auto& p : pool) {
    if (!p.verified)
      throw ConfigError("unverified prefix for state " + p.target_state_id);
    if (p.scenario_hash != scenario.hash)
      throw ConfigError("prefix for state " + p.target_state_id +
                        " belongs to a different scenario build");
  }

  BenchmarkResult result;
  result.scenario_name = scenario.name;
  result.scenario_hash = scenario.hash;
  nlohmann::json specs = nlohmann::json::array();
  for (const auto& p : policies) specs.push_back(p.to_json());
  result.config_echo = {{"episodes", opts.episodes},
                        {"budget", opts.budget},
                        {"seed", opts.seed},
                        {"prefixes", pool.size()},
                        {"policies", specs},
                        {"dedup", opts.dedup.to_json()},
                        {"ambiguity", opts.amb.to_json()},
                        {"tree", opts.puct.to_json()}};

  for (const auto& spec : policies) {
    PolicyResult pr;
    pr.label = spec.effective_label();
    std::set<std::string> unique;
    std::vector<std::vector<double>> frontiers, deltas;

    for (const auto& prefix : pool) {
      PuctConfig cfg = opts.puct;
      cfg.prior_kind = spec.prior;
      if (cfg.payload_vocab.empty()) cfg.payload_vocab = scenario.payload_vocab;
      ExplorationContext ctx{opts.dedup, opts.amb, cfg};

      for (int e = 0; e < opts.episodes; ++e) {
        std::uint64_t env_seed = detail::derive_seed(
            opts.seed, pr.label + "|" + prefix.target_state_id + "|env", e);
        std::uint64_t policy_seed = detail::derive_seed(
            opts.seed, pr.label + "|" + prefix.target_state_id + "|policy", e);

        SimEnv env(scenario);
        env.reset(env_seed);
        for (const auto& a : prefix.actions) env.step(a);
        if (map_observation_to_state(corpus, env.observe()) != prefix.target_state_id) {
          pr.replay_failures += 1;
          continue;
        }

        EpisodeWorkItem item;
        item.worker_id = pr.label;
        item.episode_index = e;
        item.policy_seed = policy_seed;
        item.env_seed = env_seed;
        item.budget = opts.budget;

        auto trace = run_episode(env, ctx, item, spec.kind);
        unique.insert(trace.start_state);
        for (const auto& s : trace.steps) unique.insert(s.to_state);
        pr.interactions += trace.steps.size();
        frontiers.push_back(frontier_curve(trace));
        deltas.push_back(ambiguity_delta_curve(trace));
        pr.traces.push_back(std::move(trace));
      }
    }

    pr.unique_states = unique.size();
    if (!frontiers.empty()) {
      pr.mean_frontier = mean_curve(frontiers);
      pr.mean_ambiguity_delta = mean_curve(deltas);
      pr.auc_frontier = auc(pr.mean_frontier);
      pr.auc_ambiguity_delta = auc(pr.mean_ambiguity_delta);
    }
    pr.discovery = pr.interactions == 0 ? 0.0 : discovery_rate(pr.unique_states, pr.interactions);
    result.policies.push_back(std::move(pr));
  }
  return result;
}

namespace detail {

inline std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string safe_label(const std::string& label) {
  std::string out;
  for (char c : label)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out;
}

}  // namespace detail

// Writes summary.csv, one curve csv and one trace file per policy. Lines
// starting with '#' echo the configuration that produced the numbers.
inline std::vector<std::filesystem::path> emit_report(const std::filesystem::path& dir,
                                                      const BenchmarkResult& result) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;

  auto banner = [&](std::ofstream& out) {
    out << "# scenario " << result.scenario_name << " " << result.scenario_hash << "\n";
    out << "# config " << result.config_echo.dump() << "\n";
  };

  {
    auto path = dir / "summary.csv";
    std::ofstream out(path);
    banner(out);
    out << "policy,episodes,interactions,unique_states,discovery_rate,auc_frontier,"
           "auc_ambiguity_delta,replay_failures\n";
    for (const auto& p : result.policies) {
      out << p.label << "," << p.traces.size() << "," << p.interactions << ","
          << p.unique_states << "," << detail::g17(p.discovery) << ","
          << detail::g17(p.auc_frontier) << "," << detail::g17(p.auc_ambiguity_delta) << ","
          << p.replay_failures << "\n";
    }
    written.push_back(path);
  }

  for (const auto& p : result.policies) {
    auto curve_path = dir / ("curve_" + detail::safe_label(p.label) + ".csv");
    {
      std::ofstream out(curve_path);
      banner(out);
      out << "t,frontier_mean,ambiguity_delta_mean\n";
      for (std::size_t t = 0; t < p.mean_frontier.size(); ++t)
        out << t << "," << detail::g17(p.mean_frontier[t]) << ","
            << detail::g17(p.mean_ambiguity_delta[t]) << "\n";
    }
    written.push_back(curve_path);

    auto trace_path = dir / ("traces_" + detail::safe_label(p.label) + ".jsonl");
    write_traces(trace_path, p.traces);
    written.push_back(trace_path);
  }
  return written;
}

}  // namespace uiscout
