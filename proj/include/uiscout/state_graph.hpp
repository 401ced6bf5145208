#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "uiscout/detail/jsonl.hpp"
#include "uiscout/errors.hpp"

namespace uiscout {

enum class ActionKind { click, type_text };

inline std::string to_string(ActionKind k) {
  return k == ActionKind::click ? "click" : "type_text";
}

inline ActionKind action_kind_from_string(std::string_view s) {
  if (s == "click") return ActionKind::click;
  if (s == "type_text") return ActionKind::type_text;
  throw ConfigError("unknown action kind: " + std::string(s));
}

struct ActionSignature {
  ActionKind kind = ActionKind::click;
  std::string target_token;            // control-type atom of the target element
  std::optional<std::string> payload;  // present exactly for type_text

  // Injective text form: clicks never carry a payload and type_text always
  // does, so the joined string cannot collide across kinds.
  std::string serialize() const {
    std::string out = to_string(kind);
    out += '|';
    out += target_token;
    if (payload) {
      out += '|';
      out += *payload;
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"kind", to_string(kind)}, {"target", target_token}};
    if (payload) j["payload"] = *payload;
    return j;
  }

  static ActionSignature from_json(const nlohmann::json& j) {
    ActionSignature a;
    a.kind = action_kind_from_string(j.at("kind").get<std::string>());
    a.target_token = j.at("target").get<std::string>();
    if (j.contains("payload") && !j.at("payload").is_null())
      a.payload = j.at("payload").get<std::string>();
    a.check();
    return a;
  }

  void check() const {
    if (kind == ActionKind::type_text && !payload)
      throw IntegrityError("type_text action requires a payload");
    if (kind == ActionKind::click && payload)
      throw IntegrityError("click action must not carry a payload");
  }

  bool operator==(const ActionSignature& o) const {
    return kind == o.kind && target_token == o.target_token && payload == o.payload;
  }
  bool operator<(const ActionSignature& o) const { return serialize() < o.serialize(); }
};

struct TransitionRecord {
  std::string from_state;
  ActionSignature signature;
  std::string to_state;
  std::string worker_id;
  std::int64_t step_index = 0;
  bool was_new_state = false;  // destination node first seen by this record
  bool was_new_edge = false;   // labeled triple first seen by this record
};

struct OutcomeDistribution {
  std::uint64_t total = 0;  // visit count of (state, action)
  std::map<std::string, std::uint64_t> counts;

  bool has_evidence() const { return total > 0; }

  std::map<std::string, double> probabilities() const {
    std::map<std::string, double> p;
    if (total == 0) return p;
    for (const auto& [to, n] : counts)
      p[to] = static_cast<double>(n) / static_cast<double>(total);
    return p;
  }
};

// Deduplicated transition graph shared by all exploration workers. Nodes are
// dedup state ids; edges are labeled (state, action, outcome) triples with
// visit counts. Discovery flags are assigned atomically under the graph lock,
// so each node and each triple is credited exactly once across threads.
class StateGraph {
 public:
  StateGraph() = default;
  StateGraph(const StateGraph&) = delete;
  StateGraph& operator=(const StateGraph&) = delete;
  StateGraph(StateGraph&& other) noexcept
      : nodes_(std::move(other.nodes_)),
        out_(std::move(other.out_)),
        clusters_(std::move(other.clusters_)),
        versions_(std::move(other.versions_)) {}

  // Registers a node without evidence (episode start states). Returns whether
  // this call created it.
  bool ensure_state(const std::string& state_id) {
    std::unique_lock lock(mu_);
    return nodes_.insert(state_id).second;
  }

  bool has_node(const std::string& state_id) const {
    std::shared_lock lock(mu_);
    return nodes_.count(state_id) > 0;
  }

  TransitionRecord record_transition(const std::string& from, const ActionSignature& sig,
                                     const std::string& to, const std::string& worker_id,
                                     std::int64_t step_index) {
    sig.check();
    std::unique_lock lock(mu_);
    if (!nodes_.count(from))
      throw IntegrityError("record_transition: unknown source state " + from);
    TransitionRecord rec;
    rec.from_state = from;
    rec.signature = sig;
    rec.to_state = to;
    rec.worker_id = worker_id;
    rec.step_index = step_index;
    rec.was_new_state = nodes_.insert(to).second;
    auto& per = out_[from][sig.serialize()];
    if (per.total == 0) per.sig = sig;
    auto [it, inserted] = per.outcomes.try_emplace(to, 0);
    rec.was_new_edge = inserted;
    ++it->second;
    ++per.total;
    ++versions_[from];
    return rec;
  }

  // Read-only duplicate of the discovery predicate, for callers that want to
  // inspect novelty without recording.
  std::pair<bool, bool> frontier_check(const std::string& from, const ActionSignature& sig,
                                       const std::string& to) const {
    std::shared_lock lock(mu_);
    bool node_new = nodes_.count(to) == 0;
    bool edge_new = true;
    auto fit = out_.find(from);
    if (fit != out_.end()) {
      auto sit = fit->second.find(sig.serialize());
      if (sit != fit->second.end()) edge_new = sit->second.outcomes.count(to) == 0;
    }
    return {node_new, edge_new};
  }

  OutcomeDistribution outcome_distribution(const std::string& from,
                                           const ActionSignature& sig) const {
    std::shared_lock lock(mu_);
    OutcomeDistribution d;
    auto fit = out_.find(from);
    if (fit == out_.end()) return d;
    auto sit = fit->second.find(sig.serialize());
    if (sit == fit->second.end()) return d;
    d.total = sit->second.total;
    d.counts = sit->second.outcomes;
    return d;
  }

  // All recorded action rows of a state: serialized signature -> outcome
  // distribution. Deterministic order.
  std::map<std::string, OutcomeDistribution> out_transitions(const std::string& from) const {
    std::shared_lock lock(mu_);
    std::map<std::string, OutcomeDistribution> out;
    auto fit = out_.find(from);
    if (fit == out_.end()) return out;
    for (const auto& [key, per] : fit->second) {
      OutcomeDistribution d;
      d.total = per.total;
      d.counts = per.outcomes;
      out.emplace(key, std::move(d));
    }
    return out;
  }

  void add_cluster_member(const std::string& state_id, const std::string& observation_id) {
    std::unique_lock lock(mu_);
    if (!nodes_.count(state_id))
      throw IntegrityError("add_cluster_member: unknown state " + state_id);
    clusters_[state_id].insert(observation_id);
  }

  std::set<std::string> cluster_members(const std::string& state_id) const {
    std::shared_lock lock(mu_);
    auto it = clusters_.find(state_id);
    if (it == clusters_.end()) return {};
    return it->second;
  }

  // Monotone counter bumped on every out-edge update of the state; lets
  // downstream caches detect staleness.
  std::uint64_t state_version(const std::string& state_id) const {
    std::shared_lock lock(mu_);
    auto it = versions_.find(state_id);
    return it == versions_.end() ? 0 : it->second;
  }

  std::size_t node_count() const {
    std::shared_lock lock(mu_);
    return nodes_.size();
  }

  // Number of distinct labeled triples.
  std::size_t edge_count() const {
    std::shared_lock lock(mu_);
    std::size_t n = 0;
    for (const auto& [from, rows] : out_)
      for (const auto& [key, per] : rows) n += per.outcomes.size();
    return n;
  }

  std::uint64_t total_transitions() const {
    std::shared_lock lock(mu_);
    std::uint64_t n = 0;
    for (const auto& [from, rows] : out_)
      for (const auto& [key, per] : rows) n += per.total;
    return n;
  }

  std::set<std::string> nodes() const {
    std::shared_lock lock(mu_);
    return nodes_;
  }

  void save(const std::filesystem::path& path) const {
    std::shared_lock lock(mu_);
    detail::JsonlWriter w(path);
    std::size_t edges = 0;
    for (const auto& [from, rows] : out_)
      for (const auto& [key, per] : rows) edges += per.outcomes.size();
    w.write({{"type", "manifest"},
             {"kind", "state_graph"},
             {"nodes", nodes_.size()},
             {"edges", edges}});
    for (const auto& n : nodes_) w.write({{"type", "node"}, {"id", n}});
    for (const auto& [from, rows] : out_) {
      for (const auto& [key, per] : rows) {
        for (const auto& [to, count] : per.outcomes) {
          w.write({{"type", "edge"},
                   {"from", from},
                   {"sig", per.sig.to_json()},
                   {"to", to},
                   {"count", count}});
        }
      }
    }
    for (const auto& [state, members] : clusters_) {
      for (const auto& m : members)
        w.write({{"type", "cluster"}, {"state", state}, {"obs", m}});
    }
  }

  static StateGraph load(const std::filesystem::path& path) {
    auto records = detail::read_jsonl(path);
    if (records.empty()) throw ParseError("graph file has no manifest", 1);
    if (records.front().value("type", "") != "manifest" ||
        records.front().value("kind", "") != "state_graph")
      throw ParseError("first record must be a state_graph manifest", 1);
    StateGraph g;
    for (std::size_t i = 1; i < records.size(); ++i) {
      std::size_t line = i + 1;
      const auto& r = records[i];
      try {
        auto type = r.at("type").get<std::string>();
        if (type == "node") {
          g.nodes_.insert(r.at("id").get<std::string>());
        } else if (type == "edge") {
          auto from = r.at("from").get<std::string>();
          auto to = r.at("to").get<std::string>();
          auto sig = ActionSignature::from_json(r.at("sig"));
          auto count = r.at("count").get<std::uint64_t>();
          if (count == 0) throw ParseError("edge count must be positive", line);
          g.nodes_.insert(from);
          g.nodes_.insert(to);
          auto& per = g.out_[from][sig.serialize()];
          if (per.total == 0) per.sig = sig;
          per.outcomes[to] += count;  // duplicate edge lines merge additively
          per.total += count;
          ++g.versions_[from];
        } else if (type == "cluster") {
          auto state = r.at("state").get<std::string>();
          g.nodes_.insert(state);
          g.clusters_[state].insert(r.at("obs").get<std::string>());
        } else {
          throw ParseError("unknown record type '" + type + "'", line);
        }
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad graph record: ") + e.what(), line);
      }
    }
    return g;
  }

 private:
  struct PerSignature {
    ActionSignature sig;
    std::uint64_t total = 0;
    std::map<std::string, std::uint64_t> outcomes;
  };

  mutable std::shared_mutex mu_;
  std::set<std::string> nodes_;
  std::map<std::string, std::map<std::string, PerSignature>> out_;
  std::map<std::string, std::set<std::string>> clusters_;
  std::map<std::string, std::uint64_t> versions_;
};

}  // namespace uiscout
