#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "uiscout/detail/hash.hpp"
#include "uiscout/detail/jsonl.hpp"
#include "uiscout/detail/rng.hpp"
#include "uiscout/errors.hpp"
#include "uiscout/explorer.hpp"
#include "uiscout/retrieval_index.hpp"
#include "uiscout/screen_model.hpp"
#include "uiscout/state_graph.hpp"

namespace uiscout {

struct JitterSpec {
  double max_shift_px = 0.0;      // uniform per-axis shift in [-max, max]
  double jitter_fraction = 0.1;   // chance a jitterable element shifts per emission
  bool case_flip = false;         // random upper-casing of rendered text
  bool decorative_toggle = false; // decorative elements may drop out

  static JitterSpec from_json(const nlohmann::json& j) {
    JitterSpec s;
    s.max_shift_px = j.value("max_shift_px", s.max_shift_px);
    s.jitter_fraction = j.value("jitter_fraction", s.jitter_fraction);
    s.case_flip = j.value("case_flip", s.case_flip);
    s.decorative_toggle = j.value("decorative_toggle", s.decorative_toggle);
    return s;
  }

  nlohmann::json to_json() const {
    return {{"max_shift_px", max_shift_px},
            {"jitter_fraction", jitter_fraction},
            {"case_flip", case_flip},
            {"decorative_toggle", decorative_toggle}};
  }
};

struct TemplateElement {
  UiElement base;
  bool decorative = false;  // eligible for presence toggling
  bool jitterable = true;   // eligible for position shifts
  std::vector<std::string> text_variants;  // emission picks one instead of base text
};

struct HiddenState {
  std::string id;
  bool external = false;
  std::vector<TemplateElement> elements;
};

struct TransitionRule {
  std::string from;
  ActionKind kind = ActionKind::click;
  std::string target_token;
  std::optional<std::string> payload;  // absent on type_text rules means any payload
  std::vector<std::pair<std::string, double>> outcomes;

  bool matches(const ActionSignature& sig) const {
    if (sig.kind != kind || sig.target_token != target_token) return false;
    if (kind == ActionKind::type_text && payload && sig.payload != payload) return false;
    return true;
  }
};

class Scenario {
 public:
  std::string name;
  int screen_width = 0;
  int screen_height = 0;
  int text_size_bin = 0;
  DisplayMode display_mode = DisplayMode::light;
  std::string rollout_group;
  std::vector<std::string> payload_vocab;
  std::string initial_state;
  JitterSpec jitter;
  std::vector<HiddenState> states;
  std::vector<std::vector<std::string>> alias_groups;
  std::vector<TransitionRule> transitions;
  std::string hash;

  static Scenario load_file(const std::filesystem::path& path, const DedupConfig& dedup_cfg) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("scenario is not valid json: ") + e.what(), 1);
    }
    return from_json(j, detail::sha256_hex(buf.str()).substr(0, 32), dedup_cfg);
  }

  static Scenario from_json(const nlohmann::json& j, std::string content_hash,
                            const DedupConfig& dedup_cfg) {
    Scenario s;
    s.hash = std::move(content_hash);
    std::vector<std::string> violations;
    try {
      s.name = j.value("name", std::string{"unnamed"});
      s.screen_width = j.at("screen_width").get<int>();
      s.screen_height = j.at("screen_height").get<int>();
      s.text_size_bin = j.value("text_size_bin", 1);
      s.display_mode = display_mode_from_string(j.value("display_mode", "light"));
      s.rollout_group = j.value("rollout_group", s.name);
      if (j.contains("payload_vocab"))
        for (const auto& p : j.at("payload_vocab")) s.payload_vocab.push_back(p.get<std::string>());
      s.initial_state = j.at("initial_state").get<std::string>();
      if (j.contains("jitter")) s.jitter = JitterSpec::from_json(j.at("jitter"));

      std::map<std::string, nlohmann::json> raw_states;
      for (const auto& st : j.at("states")) {
        auto id = st.at("id").get<std::string>();
        if (raw_states.count(id)) violations.push_back("duplicate state id '" + id + "'");
        raw_states[id] = st;
      }
      for (const auto& st : j.at("states")) {
        HiddenState hs;
        hs.id = st.at("id").get<std::string>();
        hs.external = st.value("external", false);
        const nlohmann::json* source = &st;
        if (st.contains("elements_ref")) {
          auto ref = st.at("elements_ref").get<std::string>();
          auto rit = raw_states.find(ref);
          if (rit == raw_states.end()) {
            violations.push_back("state '" + hs.id + "' references unknown template '" + ref +
                                 "'");
            s.states.push_back(std::move(hs));
            continue;
          }
          if (rit->second.contains("elements_ref")) {
            violations.push_back("state '" + hs.id + "' references '" + ref +
                                 "', which is itself a reference");
            s.states.push_back(std::move(hs));
            continue;
          }
          source = &rit->second;
        }
        if (source->contains("elements")) {
          for (const auto& e : source->at("elements")) {
            TemplateElement te;
            const auto& bb = e.at("bbox");
            te.base.bbox = BBox{bb.at(0).get<double>(), bb.at(1).get<double>(),
                                bb.at(2).get<double>(), bb.at(3).get<double>()};
            te.base.control_label = e.at("control").get<std::string>();
            te.base.text = e.value("text", std::string{});
            te.base.executable = e.value("executable", false);
            te.decorative = e.value("decorative", false);
            te.jitterable = e.value("jitterable", true);
            if (e.contains("text_variants"))
              for (const auto& v : e.at("text_variants"))
                te.text_variants.push_back(v.get<std::string>());
            hs.elements.push_back(std::move(te));
          }
        } else if (!st.contains("elements_ref")) {
          violations.push_back("state '" + hs.id + "' has neither elements nor elements_ref");
        }
        s.states.push_back(std::move(hs));
      }

      if (j.contains("alias_groups"))
        for (const auto& g : j.at("alias_groups")) {
          std::vector<std::string> group;
          for (const auto& m : g) group.push_back(m.get<std::string>());
          s.alias_groups.push_back(std::move(group));
        }

      for (const auto& t : j.at("transitions")) {
        TransitionRule r;
        r.from = t.at("from").get<std::string>();
        r.kind = action_kind_from_string(t.at("kind").get<std::string>());
        r.target_token = t.at("target").get<std::string>();
        if (t.contains("payload") && !t.at("payload").is_null())
          r.payload = t.at("payload").get<std::string>();
        for (const auto& o : t.at("outcomes"))
          r.outcomes.emplace_back(o.at(0).get<std::string>(), o.at(1).get<double>());
        s.transitions.push_back(std::move(r));
      }
    } catch (const nlohmann::json::exception& e) {
      violations.push_back(std::string("schema error: ") + e.what());
      throw ScenarioError(violations);
    }
    s.validate(dedup_cfg, violations);
    if (!violations.empty()) throw ScenarioError(violations);
    return s;
  }

  const HiddenState& state(const std::string& id) const {
    for (const auto& st : states)
      if (st.id == id) return st;
    throw IntegrityError("unknown hidden state " + id);
  }

  bool has_state(const std::string& id) const {
    for (const auto& st : states)
      if (st.id == id) return true;
    return false;
  }

  // Observation of a hidden state with no jitter applied: base geometry and
  // base texts. This is the anchor the jitter bound is measured against.
  ScreenObservation template_observation(const HiddenState& hs) const {
    ScreenObservation obs;
    obs.screen_width = screen_width;
    obs.screen_height = screen_height;
    obs.text_size_bin = text_size_bin;
    obs.display_mode = display_mode;
    obs.rollout_group = rollout_group;
    for (const auto& te : hs.elements) obs.elements.push_back(te.base);
    return obs;
  }

 private:
  // Worst-case perturbation accounting for one hidden state: how many atoms
  // of each field an emission can move (k) or add (a) relative to the
  // template. A moved atom costs intersection and union one each; a pure
  // addition only grows the union.
  struct FieldDamage {
    std::size_t n = 0;  // template atoms
    std::size_t k = 0;  // atoms that can move or vanish
    std::size_t a = 0;  // atoms that can newly appear
    double bound() const {
      if (n == 0 && k == 0 && a == 0) return 1.0;
      double inter = k >= n ? 0.0 : static_cast<double>(n - k);
      return inter / static_cast<double>(n + k + a);
    }
  };

  bool cell_can_shift(const BBox& b) const {
    if (jitter.max_shift_px <= 0.0) return false;
    GridCell home = quantize_cell(b, screen_width, screen_height);
    double g = jitter.max_shift_px;
    for (double dx : {-g, g})
      for (double dy : {-g, g}) {
        BBox moved{b.left + dx, b.top + dy, b.right + dx, b.bottom + dy};
        if (!(quantize_cell(moved, screen_width, screen_height) == home)) return true;
      }
    return false;
  }

  void validate(const DedupConfig& dedup_cfg, std::vector<std::string>& violations) const {
    if (screen_width <= 0 || screen_height <= 0)
      violations.push_back("screen dimensions must be positive");
    if (states.empty()) violations.push_back("scenario needs at least one state");
    if (!has_state(initial_state))
      violations.push_back("initial_state '" + initial_state + "' does not exist");
    for (const auto& p : payload_vocab)
      if (p.empty()) violations.push_back("payload_vocab entries must be non-empty");

    std::map<std::string, StructuralSignature> template_sigs;
    std::map<std::string, std::set<std::string>> executable_targets;
    for (const auto& st : states) {
      for (const auto& te : st.elements) {
        const auto& b = te.base.bbox;
        if (!std::isfinite(b.left) || !std::isfinite(b.top) || !std::isfinite(b.right) ||
            !std::isfinite(b.bottom) || b.left > b.right || b.top > b.bottom)
          violations.push_back("state '" + st.id + "' has a malformed element bbox");
        if (te.base.control_label.empty())
          violations.push_back("state '" + st.id + "' has an element without a control label");
      }
      if (screen_width > 0 && screen_height > 0) {
        auto obs = template_observation(st);
        bool geometry_ok = true;
        for (const auto& el : obs.elements) {
          const auto& b = el.bbox;
          if (!std::isfinite(b.left) || !std::isfinite(b.top) || !std::isfinite(b.right) ||
              !std::isfinite(b.bottom) || b.left > b.right || b.top > b.bottom ||
              el.control_label.empty()) {
            geometry_ok = false;
            break;
          }
        }
        if (!geometry_ok) continue;
        auto sig = extract_signature(obs, dedup_cfg.embed_dim);
        template_sigs[st.id] = sig;
        std::set<std::string> targets;
        for (const auto& te : st.elements) {
          if (!te.base.executable) continue;
          targets.insert(control_type_token(
              quantize_cell(te.base.bbox, screen_width, screen_height), te.base.control_label));
        }
        executable_targets[st.id] = std::move(targets);
      }
    }

    // transition sanity
    std::set<std::string> rule_keys;
    for (const auto& r : transitions) {
      std::string where = "transition from '" + r.from + "' on '" + r.target_token + "'";
      if (!has_state(r.from)) {
        violations.push_back(where + ": unknown source state");
        continue;
      }
      if (!parse_structural_token(r.target_token))
        violations.push_back(where + ": target is not a structural atom");
      if (r.kind == ActionKind::click && r.payload)
        violations.push_back(where + ": click rules cannot carry a payload");
      if (r.kind == ActionKind::type_text && r.payload &&
          std::find(payload_vocab.begin(), payload_vocab.end(), *r.payload) ==
              payload_vocab.end())
        violations.push_back(where + ": payload '" + *r.payload + "' is not in payload_vocab");
      std::string key = r.from + "\x1f" + to_string(r.kind) + "\x1f" + r.target_token + "\x1f" +
                        (r.payload ? *r.payload : std::string{"*"});
      if (!rule_keys.insert(key).second)
        violations.push_back(where + ": duplicate rule for the same action");
      auto tit = executable_targets.find(r.from);
      if (tit != executable_targets.end() && !tit->second.count(r.target_token))
        violations.push_back(where + ": target does not match any executable element");
      if (r.outcomes.empty()) {
        violations.push_back(where + ": no outcomes");
        continue;
      }
      double sum = 0.0;
      for (const auto& [to, p] : r.outcomes) {
        if (!has_state(to)) violations.push_back(where + ": unknown outcome state '" + to + "'");
        if (!(p > 0.0)) violations.push_back(where + ": outcome probabilities must be positive");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-9)
        violations.push_back(where + ": outcome probabilities sum to " + std::to_string(sum));
    }

    // alias groups must share one observation template exactly
    std::set<std::string> aliased;
    for (const auto& group : alias_groups) {
      if (group.size() < 2) {
        violations.push_back("alias groups need at least two members");
        continue;
      }
      for (const auto& m : group) {
        if (!has_state(m)) {
          violations.push_back("alias group member '" + m + "' does not exist");
          continue;
        }
        if (!aliased.insert(m).second)
          violations.push_back("state '" + m + "' appears in more than one alias group");
      }
      auto first = template_sigs.find(group.front());
      if (first == template_sigs.end()) continue;
      for (std::size_t i = 1; i < group.size(); ++i) {
        auto other = template_sigs.find(group[i]);
        if (other == template_sigs.end()) continue;
        if (first->second.ct_tokens != other->second.ct_tokens ||
            first->second.txt_tokens != other->second.txt_tokens)
          violations.push_back("alias group members '" + group.front() + "' and '" + group[i] +
                               "' do not share an identical template");
      }
    }

    // jitter soundness: every emission must stay within tau of its template
    for (const auto& st : states) {
      auto sit = template_sigs.find(st.id);
      if (sit == template_sigs.end()) continue;
      const auto& sig = sit->second;

      // which template atoms are held by at least one stable element
      auto stable_atoms = [&](bool txt_field) {
        std::map<std::string, int> stability;  // atom -> has a stable holder
        for (const auto& te : st.elements) {
          GridCell cell = quantize_cell(te.base.bbox, screen_width, screen_height);
          bool moves = cell_can_shift(te.base.bbox) && te.jitterable;
          bool toggles = te.decorative && jitter.decorative_toggle;
          std::string norm = normalize_text(te.base.text);
          bool text_changes = false;
          for (const auto& v : te.text_variants)
            if (normalize_text(v) != norm) text_changes = true;
          bool perturbed = moves || toggles || (txt_field && text_changes);
          std::string atom;
          if (txt_field) {
            if (norm.empty() && te.text_variants.empty()) continue;
            if (norm.empty()) continue;  // pure additions handled separately
            atom = text_token(cell, norm);
          } else {
            atom = control_type_token(cell, te.base.control_label);
          }
          auto& flag = stability[atom];
          if (!perturbed) flag = 1;
        }
        return stability;
      };

      FieldDamage ct, txt;
      ct.n = sig.ct_tokens.size();
      txt.n = sig.txt_tokens.size();
      auto ct_stability = stable_atoms(false);
      auto txt_stability = stable_atoms(true);
      std::set<std::string> counted_ct, counted_txt;
      for (const auto& te : st.elements) {
        GridCell cell = quantize_cell(te.base.bbox, screen_width, screen_height);
        bool moves = cell_can_shift(te.base.bbox) && te.jitterable;
        bool toggles = te.decorative && jitter.decorative_toggle;
        std::string norm = normalize_text(te.base.text);
        bool text_changes = false;
        for (const auto& v : te.text_variants)
          if (normalize_text(v) != norm) text_changes = true;

        if (moves || toggles) {
          std::string atom = control_type_token(cell, te.base.control_label);
          if (counted_ct.insert(atom).second) {
            if (ct_stability[atom] == 1)
              ct.a += 1;  // a stable twin keeps the atom; the mover only adds
            else
              ct.k += 1;
          }
        }
        if (!norm.empty() && (moves || toggles || text_changes)) {
          std::string atom = text_token(cell, norm);
          if (counted_txt.insert(atom).second) {
            if (txt_stability[atom] == 1)
              txt.a += 1;
            else
              txt.k += 1;
          }
        }
        if (norm.empty() && text_changes) txt.a += 1;  // text appears where none was
      }

      double lb = dedup_cfg.lambda_ct * ct.bound() + dedup_cfg.lambda_txt * txt.bound();
      if (lb < dedup_cfg.tau) {
        std::ostringstream msg;
        msg << "state '" << st.id << "': worst-case emission similarity " << lb
            << " falls below the merge threshold " << dedup_cfg.tau;
        violations.push_back(msg.str());
      }
    }

    // distinct templates must not sit above the merge threshold
    auto same_alias_group = [&](const std::string& a, const std::string& b) {
      for (const auto& g : alias_groups) {
        bool ha = std::find(g.begin(), g.end(), a) != g.end();
        bool hb = std::find(g.begin(), g.end(), b) != g.end();
        if (ha && hb) return true;
      }
      return false;
    };
    for (auto it = template_sigs.begin(); it != template_sigs.end(); ++it) {
      for (auto jt = std::next(it); jt != template_sigs.end(); ++jt) {
        double sim = sparse_similarity(it->second, jt->second, dedup_cfg);
        bool identical = it->second.ct_tokens == jt->second.ct_tokens &&
                         it->second.txt_tokens == jt->second.txt_tokens;
        if (identical) {
          if (!same_alias_group(it->first, jt->first))
            violations.push_back("states '" + it->first + "' and '" + jt->first +
                                 "' share a template but are not declared aliases");
        } else if (sim >= dedup_cfg.tau) {
          std::ostringstream msg;
          msg << "states '" << it->first << "' and '" << jt->first
              << "' are distinct but similarity " << sim << " reaches the merge threshold";
          violations.push_back(msg.str());
        }
      }
    }
  }
};

// Deterministic simulated GUI. A seed fixes the full emission and transition
// stream; transitions with a single outcome never consume randomness, so
// replays stay on-path across seeds as long as they traverse point-mass edges.
class SimEnv {
 public:
  explicit SimEnv(const Scenario& scenario) : scn_(&scenario), rng_(0) {}

  ScreenObservation reset(std::uint64_t seed) {
    rng_ = detail::Rng(seed);
    cur_ = &scn_->state(scn_->initial_state);
    active_ = true;
    last_obs_ = emit();
    return last_obs_;
  }

  ScreenObservation step(const ActionSignature& sig) {
    if (!active_) throw IntegrityError("step before reset");
    sig.check();
    const TransitionRule* rule = nullptr;
    for (const auto& r : scn_->transitions) {
      if (r.from == cur_->id && r.matches(sig)) {
        rule = &r;
        break;
      }
    }
    if (rule != nullptr) {
      if (rule->outcomes.size() == 1) {
        cur_ = &scn_->state(rule->outcomes.front().first);
      } else {
        double u = rng_.next_real();
        double acc = 0.0;
        const std::string* chosen = &rule->outcomes.back().first;
        for (const auto& [to, p] : rule->outcomes) {
          acc += p;
          if (u < acc) {
            chosen = &to;
            break;
          }
        }
        cur_ = &scn_->state(*chosen);
      }
    }
    // unmatched signatures are self-transition no-ops with a fresh emission
    last_obs_ = emit();
    return last_obs_;
  }

  const ScreenObservation& observe() const {
    if (!active_) throw IntegrityError("observe before reset");
    return last_obs_;
  }

  bool last_external() const {
    if (!active_) throw IntegrityError("last_external before reset");
    return cur_->external;
  }

  const std::string& hidden_state_id() const {
    if (!active_) throw IntegrityError("hidden_state_id before reset");
    return cur_->id;
  }

  std::string scenario_hash() const { return scn_->hash; }
  const Scenario& scenario() const { return *scn_; }

 private:
  ScreenObservation emit() {
    const JitterSpec& jit = scn_->jitter;
    ScreenObservation obs;
    obs.screen_width = scn_->screen_width;
    obs.screen_height = scn_->screen_height;
    obs.text_size_bin = scn_->text_size_bin;
    obs.display_mode = scn_->display_mode;
    obs.rollout_group = scn_->rollout_group;
    for (const auto& te : cur_->elements) {
      if (te.decorative && jit.decorative_toggle) {
        if (rng_.next_coin(0.5)) continue;
      }
      UiElement el = te.base;
      if (!te.text_variants.empty()) {
        el.text = te.text_variants[rng_.next_below(te.text_variants.size())];
      }
      if (jit.case_flip && !el.text.empty()) {
        if (rng_.next_coin(0.5)) {
          for (auto& c : el.text)
            if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
        }
      }
      if (te.jitterable && jit.max_shift_px > 0.0) {
        if (rng_.next_coin(jit.jitter_fraction)) {
          auto g = static_cast<std::int64_t>(jit.max_shift_px);
          double dx = static_cast<double>(rng_.next_int(-g, g));
          double dy = static_cast<double>(rng_.next_int(-g, g));
          el.bbox.left += dx;
          el.bbox.right += dx;
          el.bbox.top += dy;
          el.bbox.bottom += dy;
        }
      }
      obs.elements.push_back(std::move(el));
    }
    return obs;
  }

  const Scenario* scn_;
  detail::Rng rng_;
  const HiddenState* cur_ = nullptr;
  ScreenObservation last_obs_;
  bool active_ = false;
};

struct ReplayPrefix {
  std::string scenario_hash;
  std::uint64_t seed = 0;  // environment seed of the source episode
  std::vector<ActionSignature> actions;
  std::string target_state_id;  // dedup state the prefix must land on
  int anchor_step = 0;          // number of replayed actions
  bool verified = false;
  int verify_trials = 0;

  nlohmann::json to_json() const {
    nlohmann::json acts = nlohmann::json::array();
    for (const auto& a : actions) acts.push_back(a.to_json());
    return {{"type", "prefix"},       {"scenario", scenario_hash},
            {"seed", seed},           {"actions", acts},
            {"target", target_state_id}, {"anchor_step", anchor_step},
            {"verified", verified},   {"verify_trials", verify_trials}};
  }

  static ReplayPrefix from_json(const nlohmann::json& j) {
    ReplayPrefix p;
    p.scenario_hash = j.at("scenario").get<std::string>();
    p.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& a : j.at("actions")) p.actions.push_back(ActionSignature::from_json(a));
    p.target_state_id = j.at("target").get<std::string>();
    p.anchor_step = j.at("anchor_step").get<int>();
    p.verified = j.value("verified", false);
    p.verify_trials = j.value("verify_trials", 0);
    return p;
  }
};

// Read-only dedup mapping of an observation against an existing corpus.
inline std::string map_observation_to_state(const RetrievalIndex& index,
                                            const ScreenObservation& obs) {
  auto sig = extract_signature(obs, index.config().embed_dim);
  auto decision = index.dedup_decide(make_query(obs, sig, index.config().top_k));
  return decision.dedup_state_id;
}

// Replays the prefix `trials` times: once under the recorded seed and then
// under derived perturbation seeds. Every trial must land on the target state
// after dedup mapping.
inline bool verify_replay(const Scenario& scenario, const ReplayPrefix& prefix, int trials,
                          const RetrievalIndex& index) {
  if (trials < 1) throw ConfigError("verify_replay needs at least one trial");
  if (prefix.scenario_hash != scenario.hash) return false;
  for (int t = 0; t < trials; ++t) {
    std::uint64_t seed =
        t == 0 ? prefix.seed : detail::derive_seed(prefix.seed, "replay_trial", t);
    SimEnv env(scenario);
    ScreenObservation obs = env.reset(seed);
    for (const auto& a : prefix.actions) obs = env.step(a);
    if (map_observation_to_state(index, obs) != prefix.target_state_id) return false;
  }
  return true;
}

struct PoolBuildOptions {
  int min_occurrences = 3;
  int min_anchor_step = 5;
  int count = 3;
  int verify_trials = 5;
};

struct PoolBuildResult {
  std::vector<ReplayPrefix> prefixes;
  std::size_t states_seen = 0;
  std::size_t eligible = 0;
  std::size_t verified = 0;
  std::size_t requested = 0;

  bool shortfall() const { return prefixes.size() < requested; }

  nlohmann::json summary() const {
    return {{"states_seen", states_seen},
            {"eligible", eligible},
            {"verified", verified},
            {"requested", requested},
            {"selected", prefixes.size()},
            {"shortfall", shortfall()}};
  }
};

// Builds verified replay prefixes from exploration traces: states visited
// often enough, anchored deep enough, replay-checked, then selected in
// lexicographic state-id order.
inline PoolBuildResult build_replay_pool(const Scenario& scenario,
                                         const std::vector<EpisodeTrace>& traces,
                                         const RetrievalIndex& index,
                                         const PoolBuildOptions& opts) {
  if (opts.count < 1) throw ConfigError("pool count must be at least one");
  if (opts.min_anchor_step < 1) throw ConfigError("min_anchor_step must be at least one");
  std::map<std::string, std::uint64_t> occurrences;
  std::map<std::string, ReplayPrefix> anchor;  // first eligible anchor per state
  for (const auto& trace : traces) {
    if (trace.scenario_hash != scenario.hash || trace.aborted) continue;
    occurrences[trace.start_state] += 1;
    for (std::size_t j = 0; j < trace.steps.size(); ++j) {
      const auto& step = trace.steps[j];
      occurrences[step.to_state] += 1;
      int anchor_step = static_cast<int>(j) + 1;
      if (anchor_step < opts.min_anchor_step) continue;
      if (anchor.count(step.to_state)) continue;
      ReplayPrefix p;
      p.scenario_hash = scenario.hash;
      p.seed = trace.env_seed;
      for (std::size_t i = 0; i <= j; ++i) p.actions.push_back(trace.steps[i].signature);
      p.target_state_id = step.to_state;
      p.anchor_step = anchor_step;
      anchor.emplace(step.to_state, std::move(p));
    }
  }
  PoolBuildResult result;
  result.states_seen = occurrences.size();
  result.requested = static_cast<std::size_t>(opts.count);
  for (auto& [state, prefix] : anchor) {
    if (occurrences[state] < static_cast<std::uint64_t>(opts.min_occurrences)) continue;
    result.eligible += 1;
    if (!verify_replay(scenario, prefix, opts.verify_trials, index)) continue;
    prefix.verified = true;
    prefix.verify_trials = opts.verify_trials;
    result.verified += 1;
    if (result.prefixes.size() < result.requested) result.prefixes.push_back(prefix);
  }
  return result;
}

inline void write_pool(const std::filesystem::path& path,
                       const std::vector<ReplayPrefix>& prefixes) {
  detail::JsonlWriter w(path);
  w.write({{"type", "manifest"}, {"kind", "replay_pool"}, {"prefixes", prefixes.size()}});
  for (const auto& p : prefixes) w.write(p.to_json());
}

inline std::vector<ReplayPrefix> read_pool(const std::filesystem::path& path) {
  auto records = detail::read_jsonl(path);
  if (records.empty()) throw ParseError("pool file has no manifest", 1);
  if (records.front().value("kind", "") != "replay_pool")
    throw ParseError("first record must be a replay_pool manifest", 1);
  std::vector<ReplayPrefix> out;
  for (std::size_t i = 1; i < records.size(); ++i) {
    try {
      out.push_back(ReplayPrefix::from_json(records[i]));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad prefix record: ") + e.what(), i + 1);
    }
  }
  return out;
}

}  // namespace uiscout
