#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "uiscout/eval_harness.hpp"
#include "uiscout/gui_sim.hpp"
#include "uiscout/run_config.hpp"

namespace uiscout {

struct ExploreResult {
  std::vector<EpisodeTrace> traces;
  nlohmann::json summary;
  std::vector<std::filesystem::path> written;
};

// Seeds for one (worker, episode) slot. Streams are keyed by the slot name,
// so growing the worker pool or episode count never shifts existing seeds.
inline std::pair<std::uint64_t, std::uint64_t> episode_seeds(std::uint64_t root, int worker,
                                                             int episode) {
  std::string slot = "w" + std::to_string(worker) + "/e" + std::to_string(episode);
  return {detail::derive_seed(root, slot + "/env"), detail::derive_seed(root, slot + "/policy")};
}

// One exploration run: a shared context, workers served round-robin one
// episode at a time, everything persisted under cfg.out_dir.
inline ExploreResult run_explore(const RunConfig& cfg) {
  cfg.validate();
  auto scenario = Scenario::load_file(cfg.scenario_path, cfg.dedup);

  PuctConfig puct = cfg.puct;
  if (puct.payload_vocab.empty()) puct.payload_vocab = scenario.payload_vocab;
  ExplorationContext ctx{cfg.dedup, cfg.amb, puct};

  ExploreResult result;
  for (int e = 0; e < cfg.episodes_per_worker; ++e) {
    for (int w = 0; w < cfg.workers; ++w) {
      auto [env_seed, policy_seed] = episode_seeds(cfg.seed, w, e);
      SimEnv env(scenario);
      env.reset(env_seed);
      EpisodeWorkItem item;
      item.worker_id = "w" + std::to_string(w);
      item.episode_index = e;
      item.policy_seed = policy_seed;
      item.env_seed = env_seed;
      item.budget = cfg.budget;
      result.traces.push_back(run_episode(env, ctx, item, cfg.policy));
    }
  }
  std::stable_sort(result.traces.begin(), result.traces.end(),
                   [](const EpisodeTrace& a, const EpisodeTrace& b) {
                     if (a.worker_id != b.worker_id) return a.worker_id < b.worker_id;
                     return a.episode_index < b.episode_index;
                   });

  std::uint64_t actions = 0;
  std::uint64_t trajectories = 0;
  std::set<std::string> external_states;
  for (const auto& t : result.traces) {
    actions += t.steps.size();
    trajectories += t.steps.size() / 3;
    if (t.start_external) external_states.insert(t.start_state);
    for (const auto& s : t.steps)
      if (s.external) external_states.insert(s.to_state);
  }
  std::uint64_t episodes = result.traces.size();
  std::uint64_t observations = actions + episodes;  // start screen plus one per action
  std::uint64_t unique_states = ctx.graph.node_count();

  result.summary = {{"scenario", scenario.name},
                    {"scenario_hash", scenario.hash},
                    {"episodes", episodes},
                    {"observations", observations},
                    {"actions", actions},
                    {"unique_states", unique_states},
                    {"cross_app_states", external_states.size()},
                    {"trajectories", trajectories}};
  if (actions == 0)
    result.summary["discovery_rate"] = "n/a";
  else
    result.summary["discovery_rate"] = discovery_rate(unique_states, actions);

  std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  write_traces(dir / "traces.jsonl", result.traces);
  ctx.graph.save(dir / "graph.jsonl");
  ctx.index.save(dir / "index.jsonl");
  {
    std::ofstream out(dir / "summary.csv");
    out << "# scenario " << scenario.name << " " << scenario.hash << "\n";
    out << "# config " << cfg.to_json().dump() << "\n";
    out << "metric,value\n";
    out << "episodes," << episodes << "\n";
    out << "observations," << observations << "\n";
    out << "actions," << actions << "\n";
    out << "unique_states," << unique_states << "\n";
    if (actions == 0)
      out << "discovery_rate,n/a\n";
    else
      out << "discovery_rate," << detail::g17(discovery_rate(unique_states, actions)) << "\n";
    out << "cross_app_states," << external_states.size() << "\n";
    out << "trajectories," << trajectories << "\n";
  }
  result.written = {dir / "traces.jsonl", dir / "graph.jsonl", dir / "index.jsonl",
                    dir / "summary.csv"};
  return result;
}

struct AblationOptions {
  int pairs = 20;
  int budget = 50;
  std::uint64_t seed = 1;
  DedupConfig dedup;
  AmbiguityParams amb;
  PuctConfig puct;

  void validate() const {
    if (pairs < 1) throw ConfigError("ablation needs at least one seed pair");
    if (budget < 1) throw ConfigError("ablation budget must be positive");
    dedup.validate();
    amb.validate();
    puct.validate();
  }
};

struct AblationResult {
  std::vector<double> auc_uniform;    // per seed pair
  std::vector<double> auc_heuristic;  // per seed pair, same env and policy seeds
  int wins = 0;                       // pairs where the informed prior was at least as good
  double mean_uniform = 0.0;
  double mean_heuristic = 0.0;

  double ratio() const { return mean_uniform == 0.0 ? 0.0 : mean_heuristic / mean_uniform; }

  nlohmann::json to_json() const {
    return {{"pairs", auc_uniform.size()},
            {"wins", wins},
            {"mean_uniform", mean_uniform},
            {"mean_heuristic", mean_heuristic},
            {"ratio", ratio()}};
  }
};

// Paired comparison of the two action priors: identical environment and
// policy seeds per pair, fresh context per run, tree policy only.
inline AblationResult run_prior_ablation(const Scenario& scenario, const AblationOptions& opts) {
  opts.validate();
  AblationResult result;
  for (int i = 0; i < opts.pairs; ++i) {
    std::uint64_t env_seed = detail::derive_seed(opts.seed, "ablation/env", i);
    std::uint64_t policy_seed = detail::derive_seed(opts.seed, "ablation/policy", i);
    double auc_by_prior[2] = {0.0, 0.0};
    for (PriorKind prior : {PriorKind::uniform, PriorKind::heuristic}) {
      PuctConfig cfg = opts.puct;
      cfg.prior_kind = prior;
      if (cfg.payload_vocab.empty()) cfg.payload_vocab = scenario.payload_vocab;
      ExplorationContext ctx{opts.dedup, opts.amb, cfg};
      SimEnv env(scenario);
      env.reset(env_seed);
      EpisodeWorkItem item;
      item.worker_id = "ablation";
      item.episode_index = i;
      item.policy_seed = policy_seed;
      item.env_seed = env_seed;
      item.budget = opts.budget;
      auto trace = run_episode(env, ctx, item, PolicyKind::puct);
      auc_by_prior[prior == PriorKind::heuristic ? 1 : 0] = auc(frontier_curve(trace));
    }
    result.auc_uniform.push_back(auc_by_prior[0]);
    result.auc_heuristic.push_back(auc_by_prior[1]);
    if (auc_by_prior[1] >= auc_by_prior[0]) result.wins += 1;
  }
  for (double v : result.auc_uniform) result.mean_uniform += v;
  for (double v : result.auc_heuristic) result.mean_heuristic += v;
  result.mean_uniform /= static_cast<double>(opts.pairs);
  result.mean_heuristic /= static_cast<double>(opts.pairs);
  return result;
}

inline void write_ablation_csv(const std::filesystem::path& path, const AblationResult& r) {
  std::ofstream out(path);
  out << "# pairs " << r.auc_uniform.size() << " wins " << r.wins << " ratio "
      << detail::g17(r.ratio()) << "\n";
  out << "prior,mean_auc_frontier\n";
  out << "uniform_prior@1," << detail::g17(r.mean_uniform) << "\n";
  out << "heuristic@1," << detail::g17(r.mean_heuristic) << "\n";
}

struct LatencyOptions {
  std::size_t small_corpus = 1000;
  std::size_t large_corpus = 30000;
  int probes = 200;
  std::uint64_t seed = 1;

  void validate() const {
    if (small_corpus == 0 || large_corpus < small_corpus)
      throw ConfigError("latency profile needs small <= large corpus sizes");
    if (probes < 1) throw ConfigError("latency profile needs probes");
  }
};

struct LatencyProfile {
  std::size_t small_corpus = 0;
  std::size_t large_corpus = 0;
  double median_small_us = 0.0;
  double median_large_us = 0.0;

  double ratio() const { return median_small_us == 0.0 ? 0.0 : median_large_us / median_small_us; }

  nlohmann::json to_json() const {
    return {{"small_corpus", small_corpus},
            {"large_corpus", large_corpus},
            {"median_small_us", median_small_us},
            {"median_large_us", median_large_us},
            {"ratio", ratio()}};
  }
};

namespace detail {

inline ScreenObservation synthetic_screen(Rng& rng, const std::string& group) {
  static const char* controls[] = {"button", "label", "edit", "menu_item", "checkbox"};
  ScreenObservation obs;
  obs.screen_width = 1200;
  obs.screen_height = 900;
  obs.text_size_bin = 1;
  obs.display_mode = DisplayMode::light;
  obs.rollout_group = group;
  std::size_t n = 8 + rng.next_below(8);
  for (std::size_t i = 0; i < n; ++i) {
    UiElement el;
    double cx = 20.0 + 40.0 * static_cast<double>(rng.next_below(30));
    double cy = 15.0 + 30.0 * static_cast<double>(rng.next_below(30));
    el.bbox = BBox{cx - 10, cy - 8, cx + 10, cy + 8};
    el.control_label = controls[rng.next_below(5)];
    el.text = "w" + std::to_string(rng.next_below(4000));
    el.executable = rng.next_coin(0.5);
    obs.elements.push_back(el);
  }
  return obs;
}

}  // namespace detail

// Median wall time of one decision step (dedup probe, candidate enumeration,
// prior, arm selection) against corpora of two sizes.
inline LatencyProfile run_latency_profile(const LatencyOptions& opts) {
  opts.validate();
  LatencyProfile profile;
  profile.small_corpus = opts.small_corpus;
  profile.large_corpus = opts.large_corpus;

  PuctConfig puct;
  puct.payload_vocab = {"alpha", "beta"};

  auto measure = [&](std::size_t corpus_size) {
    DedupConfig dcfg;
    RetrievalIndex index{dcfg};
    detail::Rng rng(detail::derive_seed(opts.seed, "latency/corpus", corpus_size));
    for (std::size_t i = 0; i < corpus_size; ++i) {
      auto obs = detail::synthetic_screen(rng, "lat/grp" + std::to_string(i % 7));
      auto sig = extract_signature(obs, dcfg.embed_dim);
      index.insert(make_indexed_screen(obs, sig));
    }
    StateGraph graph;
    ActionStats stats;
    detail::Rng probe_rng(detail::derive_seed(opts.seed, "latency/probes", corpus_size));
    std::vector<double> times;
    times.reserve(static_cast<std::size_t>(opts.probes));
    for (int p = 0; p < opts.probes; ++p) {
      auto obs = detail::synthetic_screen(probe_rng, "lat/probe");
      auto begin = std::chrono::steady_clock::now();
      auto sig = extract_signature(obs, dcfg.embed_dim);
      auto decision = index.dedup_decide(make_query(obs, sig, dcfg.top_k));
      graph.ensure_state(decision.dedup_state_id);
      auto sigs = enumerate_signatures(obs, puct);
      if (!sigs.empty()) {
        auto prior = compute_prior(obs, sigs, puct.prior_kind, puct,
                                   [&](const std::string& tok) { return index.has_token(tok); });
        select_action_index(decision.dedup_state_id, sigs, prior, stats, puct);
      }
      auto end = std::chrono::steady_clock::now();
      times.push_back(std::chrono::duration<double, std::micro>(end - begin).count());
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
  };

  profile.median_small_us = measure(opts.small_corpus);
  profile.median_large_us = measure(opts.large_corpus);
  return profile;
}

}  // namespace uiscout
