#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "uiscout/eval_harness.hpp"
#include "uiscout/run_ops.hpp"

using namespace uiscout;

namespace {

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + " is not valid json: " + std::string(e.what()));
  }
  return j;
}

// "kind" or "kind:prior", comma separated
std::vector<PolicySpec> parse_policy_list(const std::string& text) {
  std::vector<PolicySpec> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    PolicySpec spec;
    auto colon = item.find(':');
    if (colon == std::string::npos) {
      spec.kind = policy_kind_from_string(item);
    } else {
      spec.kind = policy_kind_from_string(item.substr(0, colon));
      spec.prior = prior_kind_from_string(item.substr(colon + 1));
    }
    out.push_back(spec);
  }
  if (out.empty()) throw ConfigError("no policies given");
  return out;
}

int run_guarded(const std::function<void()>& fn) {
  try {
    fn();
    return 0;
  } catch (const ScenarioError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"structural screen exploration toolkit"};
  app.require_subcommand(1);

  // ---- explore ----------------------------------------------------------
  auto* explore = app.add_subcommand("explore", "run episodes against a scenario");
  std::string ex_scenario, ex_out, ex_policy, ex_prior, ex_config;
  int ex_workers = 0, ex_episodes = 0, ex_budget = 0;
  std::uint64_t ex_seed = 0;
  explore->add_option("--scenario", ex_scenario, "scenario json file");
  explore->add_option("--out", ex_out, "output directory");
  explore->add_option("--workers", ex_workers, "worker count");
  explore->add_option("--episodes", ex_episodes, "episodes per worker");
  explore->add_option("--budget", ex_budget, "actions per episode");
  explore->add_option("--seed", ex_seed, "run seed");
  explore->add_option("--policy", ex_policy, "puct | reactive_random | "
                                             "reactive_greedy_novelty | reactive_loop_avoid");
  explore->add_option("--prior", ex_prior, "uniform | heuristic (tree policy only)");
  explore->add_option("--config", ex_config, "json config file; flags override it");

  // ---- bench ------------------------------------------------------------
  auto* bench = app.add_subcommand("bench", "replay-start evaluation");
  bench->require_subcommand(1);

  auto* bench_pool = bench->add_subcommand("pool", "build verified replay prefixes");
  std::string bp_scenario, bp_traces, bp_index, bp_out;
  int bp_min_occ = 3, bp_min_anchor = 5, bp_count = 3, bp_trials = 5;
  bench_pool->add_option("--scenario", bp_scenario)->required();
  bench_pool->add_option("--traces", bp_traces, "traces.jsonl from an explore run")->required();
  bench_pool->add_option("--index", bp_index, "index.jsonl from the same run")->required();
  bench_pool->add_option("--out", bp_out, "pool file to write")->required();
  bench_pool->add_option("--min-occurrences", bp_min_occ);
  bench_pool->add_option("--min-anchor", bp_min_anchor);
  bench_pool->add_option("--count", bp_count);
  bench_pool->add_option("--trials", bp_trials);

  auto* bench_run = bench->add_subcommand("run", "benchmark policies from replay starts");
  std::string br_scenario, br_pool, br_index, br_out;
  std::string br_policies = "puct:heuristic,puct:uniform,reactive_random,"
                            "reactive_greedy_novelty,reactive_loop_avoid";
  int br_episodes = 3, br_budget = 50;
  std::uint64_t br_seed = 1;
  bench_run->add_option("--scenario", br_scenario)->required();
  bench_run->add_option("--pool", br_pool, "verified prefix pool")->required();
  bench_run->add_option("--index", br_index, "corpus index the pool was verified against")
      ->required();
  bench_run->add_option("--out", br_out, "report directory")->required();
  bench_run->add_option("--policies", br_policies, "comma list of kind[:prior]");
  bench_run->add_option("--episodes", br_episodes, "episodes per prefix");
  bench_run->add_option("--budget", br_budget);
  bench_run->add_option("--seed", br_seed);

  // ---- index ------------------------------------------------------------
  auto* index_cmd = app.add_subcommand("index", "inspect a persisted screen index");
  index_cmd->require_subcommand(1);

  auto* index_stats = index_cmd->add_subcommand("stats", "corpus statistics");
  std::string is_index;
  index_stats->add_option("--index", is_index)->required();

  auto* index_query = index_cmd->add_subcommand("query", "rank screens against an observation");
  std::string iq_index, iq_obs, iq_group, iq_mode;
  int iq_top = 10, iq_bin = -1;
  index_query->add_option("--index", iq_index)->required();
  index_query->add_option("--from-file", iq_obs, "observation json file")->required();
  index_query->add_option("--top", iq_top);
  index_query->add_option("--group", iq_group, "rollout group prefix filter");
  index_query->add_option("--mode", iq_mode, "light | dark");
  index_query->add_option("--bin", iq_bin, "text size bin filter");

  // ---- ambiguity --------------------------------------------------------
  auto* ambiguity_cmd = app.add_subcommand("ambiguity", "matched-action ambiguity estimates");
  auto* amb_report = ambiguity_cmd->add_subcommand("report", "score states of a saved graph");
  std::string ar_graph, ar_state;
  double ar_kappa = 5.0, ar_u0 = 0.5;
  amb_report->add_option("--graph", ar_graph)->required();
  amb_report->add_option("--state", ar_state, "restrict to one state id");
  amb_report->add_option("--kappa", ar_kappa, "evidence half-weight");
  amb_report->add_option("--u0", ar_u0, "no-evidence score");
  ambiguity_cmd->require_subcommand(1);

  // ---- sim --------------------------------------------------------------
  auto* sim_cmd = app.add_subcommand("sim", "simulated app tooling");
  auto* sim_validate = sim_cmd->add_subcommand("validate", "check a scenario file");
  std::string sv_scenario;
  sim_validate->add_option("--scenario", sv_scenario)->required();
  sim_cmd->require_subcommand(1);

  // ---- prior-ablation ---------------------------------------------------
  auto* ablation = app.add_subcommand("prior-ablation", "paired prior comparison");
  std::string ab_scenario, ab_out;
  int ab_pairs = 20, ab_budget = 50;
  std::uint64_t ab_seed = 1;
  ablation->add_option("--scenario", ab_scenario)->required();
  ablation->add_option("--out", ab_out, "directory for ablation.csv");
  ablation->add_option("--pairs", ab_pairs);
  ablation->add_option("--budget", ab_budget);
  ablation->add_option("--seed", ab_seed);

  // ---- latency-profile --------------------------------------------------
  auto* latency = app.add_subcommand("latency-profile", "decision latency vs corpus size");
  std::size_t lp_small = 1000, lp_large = 30000;
  int lp_probes = 200;
  std::uint64_t lp_seed = 1;
  latency->add_option("--small", lp_small);
  latency->add_option("--large", lp_large);
  latency->add_option("--probes", lp_probes);
  latency->add_option("--seed", lp_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (explore->parsed()) {
    return run_guarded([&] {
      RunConfig cfg;
      if (!ex_config.empty()) cfg.apply_json(read_json_file(ex_config));
      if (explore->count("--scenario")) cfg.scenario_path = ex_scenario;
      if (explore->count("--out")) cfg.out_dir = ex_out;
      if (explore->count("--workers")) cfg.workers = ex_workers;
      if (explore->count("--episodes")) cfg.episodes_per_worker = ex_episodes;
      if (explore->count("--budget")) cfg.budget = ex_budget;
      if (explore->count("--seed")) cfg.seed = ex_seed;
      if (explore->count("--policy")) cfg.policy = policy_kind_from_string(ex_policy);
      if (explore->count("--prior")) cfg.puct.prior_kind = prior_kind_from_string(ex_prior);
      auto result = run_explore(cfg);
      std::cout << result.summary.dump(2) << "\n";
    });
  }

  if (bench_pool->parsed()) {
    return run_guarded([&] {
      DedupConfig dedup;
      auto scenario = Scenario::load_file(bp_scenario, dedup);
      auto traces = read_traces(bp_traces);
      auto corpus = RetrievalIndex::load(bp_index);
      PoolBuildOptions opts;
      opts.min_occurrences = bp_min_occ;
      opts.min_anchor_step = bp_min_anchor;
      opts.count = bp_count;
      opts.verify_trials = bp_trials;
      auto result = build_replay_pool(scenario, traces, corpus, opts);
      write_pool(bp_out, result.prefixes);
      std::cout << result.summary().dump(2) << "\n";
    });
  }

  if (bench_run->parsed()) {
    return run_guarded([&] {
      BenchmarkOptions opts;
      opts.episodes = br_episodes;
      opts.budget = br_budget;
      opts.seed = br_seed;
      auto scenario = Scenario::load_file(br_scenario, opts.dedup);
      auto pool = read_pool(br_pool);
      auto corpus = RetrievalIndex::load(br_index);
      auto policies = parse_policy_list(br_policies);
      auto result = run_benchmark(scenario, pool, policies, corpus, opts);
      auto written = emit_report(br_out, result);
      nlohmann::json files = nlohmann::json::array();
      for (const auto& p : written) files.push_back(p.string());
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& p : result.policies)
        rows.push_back({{"policy", p.label},
                        {"unique_states", p.unique_states},
                        {"discovery_rate", p.discovery},
                        {"auc_frontier", p.auc_frontier},
                        {"auc_ambiguity_delta", p.auc_ambiguity_delta},
                        {"replay_failures", p.replay_failures}});
      std::cout << nlohmann::json{{"files", files}, {"policies", rows}}.dump(2) << "\n";
    });
  }

  if (index_stats->parsed()) {
    return run_guarded([&] {
      auto corpus = RetrievalIndex::load(is_index);
      std::cout << corpus.stats().dump(2) << "\n";
    });
  }

  if (index_query->parsed()) {
    return run_guarded([&] {
      auto corpus = RetrievalIndex::load(iq_index);
      auto obs = observation_from_json(read_json_file(iq_obs));
      auto sig = extract_signature(obs, corpus.config().embed_dim);
      RetrievalQuery q;
      q.signature = sig;
      q.rollout_group_prefix = iq_group;
      if (!iq_mode.empty()) q.display_mode = display_mode_from_string(iq_mode);
      if (iq_bin >= 0) q.text_size_bin = iq_bin;
      q.top_k = iq_top;
      auto hits = corpus.search(q);
      nlohmann::json out = nlohmann::json::array();
      for (const auto& h : hits)
        out.push_back({{"canonical_id", h.canonical_id},
                       {"score", h.score},
                       {"insert_seq", h.insert_seq}});
      std::cout << out.dump(2) << "\n";
    });
  }

  if (amb_report->parsed()) {
    return run_guarded([&] {
      auto graph = StateGraph::load(ar_graph);
      AmbiguityParams params;
      params.kappa = ar_kappa;
      params.u0 = ar_u0;
      params.validate();
      std::vector<std::string> states;
      if (!ar_state.empty()) {
        states.push_back(ar_state);
      } else {
        auto all = graph.nodes();
        states.assign(all.begin(), all.end());
      }
      std::sort(states.begin(), states.end());
      std::cout << "state,score,confidence,dispersion,evidence\n";
      for (const auto& s : states) {
        auto est = ambiguity_score(s, graph, params);
        std::cout << s << "," << detail::g17(est.score) << "," << detail::g17(est.confidence)
                  << "," << detail::g17(est.dispersion) << "," << est.evidence << "\n";
      }
    });
  }

  if (sim_validate->parsed()) {
    return run_guarded([&] {
      auto scenario = Scenario::load_file(sv_scenario, DedupConfig{});
      std::cout << nlohmann::json{{"ok", true},
                                  {"name", scenario.name},
                                  {"hash", scenario.hash},
                                  {"states", scenario.states.size()},
                                  {"transitions", scenario.transitions.size()}}
                       .dump(2)
                << "\n";
    });
  }

  if (ablation->parsed()) {
    return run_guarded([&] {
      AblationOptions opts;
      opts.pairs = ab_pairs;
      opts.budget = ab_budget;
      opts.seed = ab_seed;
      auto scenario = Scenario::load_file(ab_scenario, opts.dedup);
      auto result = run_prior_ablation(scenario, opts);
      if (!ab_out.empty()) {
        std::filesystem::create_directories(ab_out);
        write_ablation_csv(std::filesystem::path(ab_out) / "ablation.csv", result);
      }
      std::cout << result.to_json().dump(2) << "\n";
    });
  }

  if (latency->parsed()) {
    return run_guarded([&] {
      LatencyOptions opts;
      opts.small_corpus = lp_small;
      opts.large_corpus = lp_large;
      opts.probes = lp_probes;
      opts.seed = lp_seed;
      auto profile = run_latency_profile(opts);
      std::cout << profile.to_json().dump(2) << "\n";
    });
  }

  return 0;
}
