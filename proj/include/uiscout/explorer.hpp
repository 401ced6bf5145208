#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "uiscout/ambiguity.hpp"
#include "uiscout/detail/jsonl.hpp"
#include "uiscout/detail/rng.hpp"
#include "uiscout/errors.hpp"
#include "uiscout/retrieval_index.hpp"
#include "uiscout/screen_model.hpp"
#include "uiscout/state_graph.hpp"

namespace uiscout {

enum class PriorKind { uniform, heuristic };

inline std::string to_string(PriorKind k) {
  return k == PriorKind::uniform ? "uniform_prior@1" : "heuristic@1";
}

inline PriorKind prior_kind_from_string(std::string_view s) {
  if (s == "uniform_prior@1" || s == "uniform") return PriorKind::uniform;
  if (s == "heuristic@1" || s == "heuristic") return PriorKind::heuristic;
  throw ConfigError("unknown prior kind: " + std::string(s));
}

struct PuctConfig {
  double c_puct = 1.25;
  double lambda_state = 1.0;  // weight of first-visit state discovery
  double lambda_edge = 0.5;   // weight of first-visit edge discovery
  double lambda_amb = 1.0;    // weight of ambiguity reduction
  double gamma = 1.0;         // credit is single-step; kept fixed
  PriorKind prior_kind = PriorKind::uniform;
  int prior_top_m = 10;          // ranked slots receiving 1/rank mass
  double prior_floor_mass = 0.01;  // total mass shared by ranks beyond top_m
  std::set<std::string> editable_controls = {"edit"};
  std::vector<std::string> payload_vocab;

  void validate() const {
    if (!(c_puct > 0.0)) throw ConfigError("c_puct must be positive");
    if (lambda_state < 0.0 || lambda_edge < 0.0 || lambda_amb < 0.0)
      throw ConfigError("reward weights must be non-negative");
    if (gamma != 1.0) throw ConfigError("gamma is fixed at 1 for single-step credit");
    if (prior_top_m < 1) throw ConfigError("prior_top_m must be at least 1");
    if (prior_floor_mass < 0.0 || prior_floor_mass >= 1.0)
      throw ConfigError("prior_floor_mass must lie in [0, 1)");
  }

  nlohmann::json to_json() const {
    return {{"c_puct", c_puct},
            {"lambda_state", lambda_state},
            {"lambda_edge", lambda_edge},
            {"lambda_amb", lambda_amb},
            {"gamma", gamma},
            {"prior", to_string(prior_kind)},
            {"prior_top_m", prior_top_m},
            {"prior_floor_mass", prior_floor_mass},
            {"editable_controls", editable_controls},
            {"payload_vocab", payload_vocab}};
  }

  static PuctConfig from_json(const nlohmann::json& j) {
    PuctConfig c;
    c.c_puct = j.value("c_puct", c.c_puct);
    c.lambda_state = j.value("lambda_state", c.lambda_state);
    c.lambda_edge = j.value("lambda_edge", c.lambda_edge);
    c.lambda_amb = j.value("lambda_amb", c.lambda_amb);
    c.gamma = j.value("gamma", c.gamma);
    if (j.contains("prior")) c.prior_kind = prior_kind_from_string(j.at("prior").get<std::string>());
    c.prior_top_m = j.value("prior_top_m", c.prior_top_m);
    c.prior_floor_mass = j.value("prior_floor_mass", c.prior_floor_mass);
    if (j.contains("editable_controls")) {
      c.editable_controls.clear();
      for (const auto& e : j.at("editable_controls"))
        c.editable_controls.insert(e.get<std::string>());
    }
    if (j.contains("payload_vocab")) {
      c.payload_vocab.clear();
      for (const auto& e : j.at("payload_vocab")) c.payload_vocab.push_back(e.get<std::string>());
    }
    c.validate();
    return c;
  }
};

struct ArmStats {
  std::uint64_t n = 0;
  double q = 0.0;  // running mean of immediate rewards
};

// Per-(state, action) visit counts and value means, shared across workers.
class ActionStats {
 public:
  ActionStats() = default;
  ActionStats(const ActionStats&) = delete;
  ActionStats& operator=(const ActionStats&) = delete;
  ActionStats(ActionStats&& other) noexcept : arms_(std::move(other.arms_)) {}

  ArmStats get(const std::string& state, const std::string& sig_key) const {
    std::shared_lock lock(mu_);
    auto sit = arms_.find(state);
    if (sit == arms_.end()) return {};
    auto ait = sit->second.find(sig_key);
    if (ait == sit->second.end()) return {};
    return ait->second;
  }

  std::uint64_t total_visits(const std::string& state) const {
    std::shared_lock lock(mu_);
    auto sit = arms_.find(state);
    if (sit == arms_.end()) return 0;
    std::uint64_t n = 0;
    for (const auto& [key, arm] : sit->second) n += arm.n;
    return n;
  }

  void backup(const std::string& state, const std::string& sig_key, double reward) {
    std::unique_lock lock(mu_);
    auto& arm = arms_[state][sig_key];
    arm.n += 1;
    arm.q += (reward - arm.q) / static_cast<double>(arm.n);
  }

  std::map<std::string, ArmStats> state_arms(const std::string& state) const {
    std::shared_lock lock(mu_);
    auto sit = arms_.find(state);
    if (sit == arms_.end()) return {};
    return sit->second;
  }

 private:
  mutable std::shared_mutex mu_;
  std::map<std::string, std::map<std::string, ArmStats>> arms_;
};

// Candidate actions on a screen, deterministically ordered by their
// serialized form. Editable executables expand to one typed action per
// payload; other executables expose a single click. Identical elements
// collapse to one signature.
inline std::vector<ActionSignature> enumerate_signatures(const ScreenObservation& obs,
                                                         const PuctConfig& cfg) {
  std::map<std::string, ActionSignature> by_key;
  for (const auto& el : obs.elements) {
    if (!el.executable) continue;
    GridCell cell = quantize_cell(el.bbox, obs.screen_width, obs.screen_height);
    std::string target = control_type_token(cell, el.control_label);
    if (cfg.editable_controls.count(el.control_label)) {
      for (const auto& payload : cfg.payload_vocab) {
        ActionSignature a;
        a.kind = ActionKind::type_text;
        a.target_token = target;
        a.payload = payload;
        by_key.emplace(a.serialize(), std::move(a));
      }
    } else {
      ActionSignature a;
      a.kind = ActionKind::click;
      a.target_token = target;
      by_key.emplace(a.serialize(), std::move(a));
    }
  }
  std::vector<ActionSignature> out;
  out.reserve(by_key.size());
  for (auto& [key, sig] : by_key) out.push_back(std::move(sig));
  return out;
}

// Number of structural atoms tied to an action's target element(s) that the
// retrieval vocabulary has never seen.
inline int signature_novelty(const ScreenObservation& obs, const ActionSignature& sig,
                             const std::function<bool(const std::string&)>& token_known) {
  std::set<std::string> candidates;
  candidates.insert(sig.target_token);
  for (const auto& el : obs.elements) {
    GridCell cell = quantize_cell(el.bbox, obs.screen_width, obs.screen_height);
    if (control_type_token(cell, el.control_label) != sig.target_token) continue;
    std::string norm = normalize_text(el.text);
    if (!norm.empty()) candidates.insert(text_token(cell, norm));
  }
  int novel = 0;
  for (const auto& t : candidates)
    if (!token_known(t)) ++novel;
  return novel;
}

inline const std::set<std::string>& preferred_control_labels() {
  static const std::set<std::string> labels{"button", "menu_item", "edit"};
  return labels;
}

// Action prior over the enumerated signatures, aligned with the input order.
// The uniform prior spreads mass evenly; the heuristic prior ranks actions by
// token novelty plus a control-type bonus and assigns 1/rank mass to the top
// slots with a small shared floor below them.
inline std::vector<double> compute_prior(
    const ScreenObservation& obs, const std::vector<ActionSignature>& sigs, PriorKind kind,
    const PuctConfig& cfg, const std::function<bool(const std::string&)>& token_known) {
  if (sigs.empty()) throw std::invalid_argument("compute_prior: no candidate actions");
  cfg.validate();
  const std::size_t n = sigs.size();
  std::vector<double> prior(n, 0.0);
  if (kind == PriorKind::uniform) {
    double p = 1.0 / static_cast<double>(n);
    for (auto& x : prior) x = p;
    return prior;
  }
  struct Scored {
    double score;
    std::string key;
    std::size_t index;
  };
  std::vector<Scored> scored;
  scored.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double score = signature_novelty(obs, sigs[i], token_known);
    auto parsed = parse_structural_token(sigs[i].target_token);
    if (parsed && preferred_control_labels().count(parsed->value)) score += 0.5;
    scored.push_back({score, sigs[i].serialize(), i});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.key < b.key;
  });
  const auto m = static_cast<std::size_t>(cfg.prior_top_m);
  double total = 0.0;
  std::vector<double> mass(n, 0.0);
  for (std::size_t rank = 0; rank < n; ++rank) {
    if (rank < m) {
      mass[rank] = 1.0 / static_cast<double>(rank + 1);
    } else {
      mass[rank] = cfg.prior_floor_mass / static_cast<double>(n - m);
    }
    total += mass[rank];
  }
  for (std::size_t rank = 0; rank < n; ++rank) prior[scored[rank].index] = mass[rank] / total;
  return prior;
}

// One-step value-guided selection: argmax of Q + c * P * sqrt(total) / (1+n).
// Exact ties fall to the higher prior, then the lexicographically smaller
// serialized signature.
inline std::size_t select_action_index(const std::string& state,
                                       const std::vector<ActionSignature>& sigs,
                                       const std::vector<double>& prior,
                                       const ActionStats& stats, const PuctConfig& cfg) {
  if (sigs.empty()) throw std::invalid_argument("select_action_index: no candidate actions");
  if (prior.size() != sigs.size())
    throw std::invalid_argument("select_action_index: prior length mismatch");
  cfg.validate();
  double sqrt_total = std::sqrt(static_cast<double>(stats.total_visits(state)));
  std::size_t best = 0;
  double best_score = 0.0, best_prior = 0.0;
  std::string best_key;
  for (std::size_t i = 0; i < sigs.size(); ++i) {
    auto key = sigs[i].serialize();
    auto arm = stats.get(state, key);
    double u = cfg.c_puct * prior[i] * sqrt_total / (1.0 + static_cast<double>(arm.n));
    double score = arm.q + u;
    bool better;
    if (i == 0) {
      better = true;
    } else if (score != best_score) {
      better = score > best_score;
    } else if (prior[i] != best_prior) {
      better = prior[i] > best_prior;
    } else {
      better = key < best_key;
    }
    if (better) {
      best = i;
      best_score = score;
      best_prior = prior[i];
      best_key = std::move(key);
    }
  }
  return best;
}

struct RewardBreakdown {
  double state_term = 0.0;
  double edge_term = 0.0;
  double amb_term = 0.0;
  double total = 0.0;
};

// Immediate exploration reward: discovery bonuses plus clipped ambiguity drop.
inline RewardBreakdown immediate_reward(bool new_state, bool new_edge, double u_from,
                                        double u_to, const PuctConfig& cfg) {
  RewardBreakdown r;
  r.state_term = new_state ? cfg.lambda_state : 0.0;
  r.edge_term = new_edge ? cfg.lambda_edge : 0.0;
  r.amb_term = cfg.lambda_amb * std::max(u_from - u_to, 0.0);
  r.total = r.state_term + r.edge_term + r.amb_term;
  return r;
}

// Everything the exploration stack shares across workers and episodes.
struct ExplorationContext {
  RetrievalIndex index;
  StateGraph graph;
  ActionStats stats;
  AmbiguityCache amb_cache;
  AmbiguityParams amb;
  PuctConfig puct;

  ExplorationContext(DedupConfig dedup_cfg, AmbiguityParams amb_params, PuctConfig puct_cfg)
      : index(dedup_cfg), amb(amb_params), puct(std::move(puct_cfg)) {
    amb.validate();
    puct.validate();
  }
};

struct DedupOutcome {
  std::string state_id;   // deduplicated state the observation belongs to
  std::string obs_id;     // canonical id of the raw observation
  bool is_new_screen = false;
  double best_similarity = 0.0;
};

// Deduplicates an observation against the shared index, registering it when
// novel. Safe to call from multiple workers; a lost insert race degrades to
// the idempotent re-insert path.
inline DedupOutcome dedup_ingest(ExplorationContext& ctx, const ScreenObservation& obs) {
  auto sig = extract_signature(obs, ctx.index.config().embed_dim);
  auto query = make_query(obs, sig, ctx.index.config().top_k);
  auto decision = ctx.index.dedup_decide(query);
  DedupOutcome out;
  out.obs_id = sig.canonical_id;
  out.state_id = decision.dedup_state_id;
  out.is_new_screen = decision.is_new;
  out.best_similarity = decision.best_similarity;
  if (decision.is_new) ctx.index.insert(make_indexed_screen(obs, sig, decision.dedup_state_id));
  return out;
}

inline double ambiguity_of(ExplorationContext& ctx, const std::string& state) {
  if (!ctx.graph.has_node(state)) return ctx.amb.u0;
  return ctx.amb_cache.get(state, ctx.graph, ctx.amb).score;
}

enum class PolicyKind { puct, reactive_random, reactive_greedy_novelty, reactive_loop_avoid };

inline std::string to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::puct: return "puct";
    case PolicyKind::reactive_random: return "reactive_random";
    case PolicyKind::reactive_greedy_novelty: return "reactive_greedy_novelty";
    case PolicyKind::reactive_loop_avoid: return "reactive_loop_avoid";
  }
  throw ConfigError("unknown policy kind");
}

inline PolicyKind policy_kind_from_string(std::string_view s) {
  if (s == "puct") return PolicyKind::puct;
  if (s == "reactive_random") return PolicyKind::reactive_random;
  if (s == "reactive_greedy_novelty") return PolicyKind::reactive_greedy_novelty;
  if (s == "reactive_loop_avoid") return PolicyKind::reactive_loop_avoid;
  throw ConfigError("unknown policy kind: " + std::string(s));
}

struct TraceStep {
  int step = 0;
  std::string from_state;
  ActionSignature signature;
  std::string to_state;
  bool new_state = false;
  bool new_edge = false;
  RewardBreakdown reward;
  double u_from = 0.0;
  double u_to = 0.0;
  bool external = false;  // destination flagged as outside the app under test

  nlohmann::json to_json() const {
    return {{"type", "step"},     {"step", step},
            {"from", from_state}, {"sig", signature.to_json()},
            {"to", to_state},     {"new_state", new_state},
            {"new_edge", new_edge}, {"r_state", reward.state_term},
            {"r_edge", reward.edge_term}, {"r_amb", reward.amb_term},
            {"r", reward.total},  {"u_from", u_from},
            {"u_to", u_to},       {"external", external}};
  }

  static TraceStep from_json(const nlohmann::json& j) {
    TraceStep s;
    s.step = j.at("step").get<int>();
    s.from_state = j.at("from").get<std::string>();
    s.signature = ActionSignature::from_json(j.at("sig"));
    s.to_state = j.at("to").get<std::string>();
    s.new_state = j.at("new_state").get<bool>();
    s.new_edge = j.at("new_edge").get<bool>();
    s.reward.state_term = j.at("r_state").get<double>();
    s.reward.edge_term = j.at("r_edge").get<double>();
    s.reward.amb_term = j.at("r_amb").get<double>();
    s.reward.total = j.at("r").get<double>();
    s.u_from = j.at("u_from").get<double>();
    s.u_to = j.at("u_to").get<double>();
    s.external = j.at("external").get<bool>();
    return s;
  }
};

struct EpisodeTrace {
  std::string worker_id;
  int episode_index = 0;
  std::uint64_t policy_seed = 0;
  std::uint64_t env_seed = 0;
  std::string scenario_hash;
  std::string policy = "puct";
  std::string start_state;
  bool start_external = false;
  double u_start = 0.0;
  bool aborted = false;
  std::vector<TraceStep> steps;

  nlohmann::json header_json() const {
    return {{"type", "episode"},
            {"worker", worker_id},
            {"episode", episode_index},
            {"policy_seed", policy_seed},
            {"env_seed", env_seed},
            {"scenario", scenario_hash},
            {"policy", policy},
            {"start_state", start_state},
            {"start_external", start_external},
            {"u_start", u_start},
            {"aborted", aborted}};
  }
};

inline void write_traces(const std::filesystem::path& path,
                         const std::vector<EpisodeTrace>& traces) {
  detail::JsonlWriter w(path);
  for (const auto& t : traces) {
    w.write(t.header_json());
    for (const auto& s : t.steps) w.write(s.to_json());
  }
}

inline std::vector<EpisodeTrace> read_traces(const std::filesystem::path& path) {
  auto records = detail::read_jsonl(path);
  std::vector<EpisodeTrace> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::size_t line = i + 1;
    const auto& r = records[i];
    try {
      auto type = r.at("type").get<std::string>();
      if (type == "episode") {
        EpisodeTrace t;
        t.worker_id = r.at("worker").get<std::string>();
        t.episode_index = r.at("episode").get<int>();
        t.policy_seed = r.at("policy_seed").get<std::uint64_t>();
        t.env_seed = r.at("env_seed").get<std::uint64_t>();
        t.scenario_hash = r.at("scenario").get<std::string>();
        t.policy = r.at("policy").get<std::string>();
        t.start_state = r.at("start_state").get<std::string>();
        t.start_external = r.at("start_external").get<bool>();
        t.u_start = r.at("u_start").get<double>();
        t.aborted = r.value("aborted", false);
        out.push_back(std::move(t));
      } else if (type == "step") {
        if (out.empty()) throw ParseError("step record before any episode header", line);
        out.back().steps.push_back(TraceStep::from_json(r));
      } else {
        throw ParseError("unknown trace record type '" + type + "'", line);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad trace record: ") + e.what(), line);
    }
  }
  return out;
}

struct EpisodeWorkItem {
  std::string worker_id;
  int episode_index = 0;
  std::uint64_t policy_seed = 0;  // drives in-episode random choices
  std::uint64_t env_seed = 0;     // recorded for replay; the env is seeded by the caller
  int budget = 50;
};

// Runs one episode against an environment that is already positioned (either
// freshly reset or replayed to an anchor). Episodes never look ahead: each
// action is chosen from current statistics, executed once, credited once.
template <typename Env>
EpisodeTrace run_episode(Env& env, ExplorationContext& ctx, const EpisodeWorkItem& item,
                         PolicyKind policy = PolicyKind::puct) {
  if (item.budget < 0) throw ConfigError("budget must be non-negative");
  EpisodeTrace trace;
  trace.worker_id = item.worker_id;
  trace.episode_index = item.episode_index;
  trace.policy_seed = item.policy_seed;
  trace.env_seed = item.env_seed;
  trace.scenario_hash = env.scenario_hash();
  trace.policy = to_string(policy);

  ScreenObservation cur_obs = env.observe();
  auto start = dedup_ingest(ctx, cur_obs);
  ctx.graph.ensure_state(start.state_id);
  ctx.graph.add_cluster_member(start.state_id, start.obs_id);
  trace.start_state = start.state_id;
  trace.start_external = env.last_external();
  trace.u_start = ambiguity_of(ctx, start.state_id);

  std::string cur_state = start.state_id;
  detail::Rng policy_rng(item.policy_seed);
  std::deque<std::string> recent{cur_state};
  auto token_known = [&ctx](const std::string& t) { return ctx.index.has_token(t); };

  for (int step = 0; step < item.budget; ++step) {
    auto sigs = enumerate_signatures(cur_obs, ctx.puct);
    if (sigs.empty()) break;

    std::size_t pick = 0;
    switch (policy) {
      case PolicyKind::puct: {
        auto prior = compute_prior(cur_obs, sigs, ctx.puct.prior_kind, ctx.puct, token_known);
        pick = select_action_index(cur_state, sigs, prior, ctx.stats, ctx.puct);
        break;
      }
      case PolicyKind::reactive_random: {
        pick = static_cast<std::size_t>(policy_rng.next_below(sigs.size()));
        break;
      }
      case PolicyKind::reactive_greedy_novelty:
      case PolicyKind::reactive_loop_avoid: {
        double best_score = 0.0;
        for (std::size_t i = 0; i < sigs.size(); ++i) {
          double score = signature_novelty(cur_obs, sigs[i], token_known);
          if (policy == PolicyKind::reactive_loop_avoid) {
            auto dist = ctx.graph.outcome_distribution(cur_state, sigs[i]);
            if (dist.total > 0) {
              std::uint64_t looped = 0;
              for (const auto& s : recent) {
                auto it = dist.counts.find(s);
                if (it != dist.counts.end()) looped += it->second;
              }
              score -= 3.0 * static_cast<double>(looped) / static_cast<double>(dist.total);
            }
          }
          if (i == 0 || score > best_score) {
            best_score = score;
            pick = i;
          }
        }
        break;
      }
    }

    const ActionSignature& sig = sigs[pick];
    ScreenObservation next_obs;
    try {
      next_obs = env.step(sig);
    } catch (const std::exception&) {
      trace.aborted = true;
      break;
    }

    auto arrival = dedup_ingest(ctx, next_obs);
    double u_from = ambiguity_of(ctx, cur_state);
    double u_to =
        ctx.graph.has_node(arrival.state_id) ? ambiguity_of(ctx, arrival.state_id) : ctx.amb.u0;
    auto rec = ctx.graph.record_transition(cur_state, sig, arrival.state_id, item.worker_id,
                                           step);
    ctx.graph.add_cluster_member(arrival.state_id, arrival.obs_id);
    auto reward = immediate_reward(rec.was_new_state, rec.was_new_edge, u_from, u_to, ctx.puct);
    if (policy == PolicyKind::puct) ctx.stats.backup(cur_state, sig.serialize(), reward.total);

    TraceStep ts;
    ts.step = step;
    ts.from_state = cur_state;
    ts.signature = sig;
    ts.to_state = arrival.state_id;
    ts.new_state = rec.was_new_state;
    ts.new_edge = rec.was_new_edge;
    ts.reward = reward;
    ts.u_from = u_from;
    ts.u_to = u_to;
    ts.external = env.last_external();
    trace.steps.push_back(std::move(ts));

    cur_obs = std::move(next_obs);
    cur_state = arrival.state_id;
    recent.push_back(cur_state);
    if (recent.size() > 5) recent.pop_front();
  }
  return trace;
}

}  // namespace uiscout
