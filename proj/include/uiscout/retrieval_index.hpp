#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "uiscout/detail/jsonl.hpp"
#include "uiscout/errors.hpp"
#include "uiscout/screen_model.hpp"

namespace uiscout {

struct DedupConfig {
  double tau = 0.93;          // merge threshold on the weighted set similarity
  double lambda_ct = 0.5;     // weight of the control-type field
  double lambda_txt = 0.5;    // weight of the text field
  int top_k = 20;             // retrieval depth for dedup verification
  int embed_dim = kDefaultEmbedDim;
  bool embed_rank = false;    // blend embedding cosine into candidate ranking
  double embed_rank_weight = 0.25;

  void validate() const {
    if (std::abs(lambda_ct + lambda_txt - 1.0) > 1e-9)
      throw ConfigError("field weights must sum to 1");
    if (lambda_ct < 0.0 || lambda_txt < 0.0)
      throw ConfigError("field weights must be non-negative");
    if (tau < 0.0 || tau > 1.0) throw ConfigError("tau must lie in [0, 1]");
    if (top_k < 1) throw ConfigError("top_k must be at least 1");
    if (embed_dim < 8) throw ConfigError("embedding dimension must be at least 8");
    if (embed_rank_weight < 0.0) throw ConfigError("embed_rank_weight must be non-negative");
  }

  nlohmann::json to_json() const {
    return {{"tau", tau},           {"lambda_ct", lambda_ct},
            {"lambda_txt", lambda_txt}, {"top_k", top_k},
            {"embed_dim", embed_dim},   {"embed_rank", embed_rank},
            {"embed_rank_weight", embed_rank_weight}};
  }

  static DedupConfig from_json(const nlohmann::json& j) {
    DedupConfig c;
    c.tau = j.value("tau", c.tau);
    c.lambda_ct = j.value("lambda_ct", c.lambda_ct);
    c.lambda_txt = j.value("lambda_txt", c.lambda_txt);
    c.top_k = j.value("top_k", c.top_k);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.embed_rank = j.value("embed_rank", c.embed_rank);
    c.embed_rank_weight = j.value("embed_rank_weight", c.embed_rank_weight);
    c.validate();
    return c;
  }
};

// Jaccard similarity of two token sets. Two empty sets count as identical.
inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++inter;
      ++ia;
      ++ib;
    }
  }
  std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Field-weighted set similarity of two screens.
inline double sparse_similarity(const StructuralSignature& a, const StructuralSignature& b,
                                const DedupConfig& cfg) {
  if (std::abs(cfg.lambda_ct + cfg.lambda_txt - 1.0) > 1e-9)
    throw ConfigError("field weights must sum to 1");
  return cfg.lambda_ct * jaccard(a.ct_tokens, b.ct_tokens) +
         cfg.lambda_txt * jaccard(a.txt_tokens, b.txt_tokens);
}

// Smoothed inverse document frequency; stays positive for any df <= n.
inline double idf_weight(std::size_t corpus_size, std::size_t doc_freq) {
  return std::log((1.0 + static_cast<double>(corpus_size)) /
                  (1.0 + static_cast<double>(doc_freq))) +
         1.0;
}

struct IndexedScreen {
  std::string canonical_id;
  StructuralSignature signature;
  std::string rollout_group;
  DisplayMode display_mode = DisplayMode::light;
  int text_size_bin = 0;
  std::uint64_t insert_seq = 0;  // assigned by the index
  std::string dedup_state_id;    // state this observation was merged into
};

inline IndexedScreen make_indexed_screen(const ScreenObservation& obs,
                                         const StructuralSignature& sig,
                                         std::string dedup_state_id = {}) {
  IndexedScreen s;
  s.canonical_id = sig.canonical_id;
  s.signature = sig;
  s.rollout_group = obs.rollout_group;
  s.display_mode = obs.display_mode;
  s.text_size_bin = obs.text_size_bin;
  s.dedup_state_id = dedup_state_id.empty() ? sig.canonical_id : std::move(dedup_state_id);
  return s;
}

struct RetrievalQuery {
  StructuralSignature signature;
  std::string rollout_group_prefix;  // empty matches every group
  std::optional<DisplayMode> display_mode;
  std::optional<int> text_size_bin;
  int top_k = 20;
};

inline RetrievalQuery make_query(const ScreenObservation& obs, const StructuralSignature& sig,
                                 int top_k) {
  RetrievalQuery q;
  q.signature = sig;
  q.rollout_group_prefix = obs.rollout_group;
  q.display_mode = obs.display_mode;
  q.text_size_bin = obs.text_size_bin;
  q.top_k = top_k;
  return q;
}

struct SearchHit {
  std::string canonical_id;
  double score = 0.0;
  std::uint64_t insert_seq = 0;
};

struct DedupDecision {
  std::string dedup_state_id;
  bool is_new = true;
  double best_similarity = 0.0;
  std::string best_canonical_id;
};

// Inverted token index over screen signatures with exact set-similarity
// verification for deduplication. Single writer, many readers.
class RetrievalIndex {
 public:
  explicit RetrievalIndex(DedupConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  RetrievalIndex(const RetrievalIndex&) = delete;
  RetrievalIndex& operator=(const RetrievalIndex&) = delete;

  // move is for construction hand-off only; the mutex starts fresh
  RetrievalIndex(RetrievalIndex&& other) noexcept
      : cfg_(std::move(other.cfg_)),
        docs_(std::move(other.docs_)),
        by_canonical_(std::move(other.by_canonical_)),
        postings_(std::move(other.postings_)),
        empty_docs_(std::move(other.empty_docs_)) {}

  const DedupConfig& config() const { return cfg_; }

  // Registers a screen. Re-inserting an identical screen is a no-op returning
  // the original sequence number; a different screen under the same canonical
  // id is refused.
  std::uint64_t insert(IndexedScreen screen) {
    std::unique_lock lock(mu_);
    auto it = by_canonical_.find(screen.canonical_id);
    if (it != by_canonical_.end()) {
      const IndexedScreen& have = docs_[it->second];
      if (have.signature.ct_tokens != screen.signature.ct_tokens ||
          have.signature.txt_tokens != screen.signature.txt_tokens ||
          have.signature.mode_tag != screen.signature.mode_tag ||
          have.signature.text_size_tag != screen.signature.text_size_tag) {
        throw IntegrityError("conflicting screen payload for canonical id " +
                             screen.canonical_id);
      }
      return have.insert_seq;
    }
    std::uint64_t seq = docs_.size();
    screen.insert_seq = seq;
    if (screen.dedup_state_id.empty()) screen.dedup_state_id = screen.canonical_id;
    bool any_token = false;
    for (const auto& t : screen.signature.ct_tokens) {
      postings_[t].push_back(seq);
      any_token = true;
    }
    for (const auto& t : screen.signature.txt_tokens) {
      postings_[t].push_back(seq);
      any_token = true;
    }
    if (!any_token) empty_docs_.push_back(seq);
    by_canonical_.emplace(screen.canonical_id, seq);
    docs_.push_back(std::move(screen));
    return seq;
  }

  std::vector<SearchHit> search(const RetrievalQuery& q) const {
    std::shared_lock lock(mu_);
    return search_locked(q);
  }

  // Retrieves candidates, verifies each with the exact weighted set
  // similarity, and merges when the best verified similarity reaches tau.
  // Equal similarities resolve to the earliest-inserted candidate.
  DedupDecision dedup_decide(const RetrievalQuery& q) const {
    std::shared_lock lock(mu_);
    RetrievalQuery probe = q;
    probe.top_k = cfg_.top_k;
    auto hits = search_locked(probe);
    DedupDecision d;
    d.dedup_state_id = q.signature.canonical_id;
    d.is_new = true;
    d.best_similarity = 0.0;
    const IndexedScreen* best = nullptr;
    for (const auto& hit : hits) {
      const IndexedScreen& doc = docs_[hit.insert_seq];
      double sim = sparse_similarity(q.signature, doc.signature, cfg_);
      if (best == nullptr || sim > d.best_similarity ||
          (sim == d.best_similarity && doc.insert_seq < best->insert_seq)) {
        d.best_similarity = sim;
        best = &doc;
      }
    }
    if (best != nullptr) {
      d.best_canonical_id = best->canonical_id;
      if (d.best_similarity >= cfg_.tau) {
        d.is_new = false;
        d.dedup_state_id = best->dedup_state_id;
      }
    }
    return d;
  }

  bool has_token(const std::string& token) const {
    std::shared_lock lock(mu_);
    return postings_.find(token) != postings_.end();
  }

  bool has_canonical(const std::string& canonical_id) const {
    std::shared_lock lock(mu_);
    return by_canonical_.find(canonical_id) != by_canonical_.end();
  }

  std::optional<IndexedScreen> get(const std::string& canonical_id) const {
    std::shared_lock lock(mu_);
    auto it = by_canonical_.find(canonical_id);
    if (it == by_canonical_.end()) return std::nullopt;
    return docs_[it->second];
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return docs_.size();
  }

  std::size_t token_count() const {
    std::shared_lock lock(mu_);
    return postings_.size();
  }

  nlohmann::json stats() const {
    std::shared_lock lock(mu_);
    std::set<std::string> states;
    std::size_t total_tokens = 0;
    for (const auto& d : docs_) {
      states.insert(d.dedup_state_id);
      total_tokens += d.signature.ct_tokens.size() + d.signature.txt_tokens.size();
    }
    return {{"screens", docs_.size()},
            {"distinct_tokens", postings_.size()},
            {"distinct_dedup_states", states.size()},
            {"mean_tokens_per_screen",
             docs_.empty() ? 0.0 : static_cast<double>(total_tokens) / docs_.size()}};
  }

  void save(const std::filesystem::path& path) const {
    std::shared_lock lock(mu_);
    detail::JsonlWriter w(path);
    w.write({{"type", "manifest"},
             {"kind", "retrieval_index"},
             {"screens", docs_.size()},
             {"config", cfg_.to_json()}});
    for (const auto& d : docs_) {
      w.write({{"type", "screen"},
               {"canonical_id", d.canonical_id},
               {"ct", d.signature.ct_tokens},
               {"txt", d.signature.txt_tokens},
               {"display_mode", to_string(d.display_mode)},
               {"text_size_bin", d.text_size_bin},
               {"rollout_group", d.rollout_group},
               {"insert_seq", d.insert_seq},
               {"dedup_state_id", d.dedup_state_id}});
    }
  }

  static RetrievalIndex load(const std::filesystem::path& path) {
    auto records = detail::read_jsonl(path);
    if (records.empty()) throw ParseError("index file has no manifest", 1);
    std::size_t line = 1;
    const auto& manifest = records.front();
    if (manifest.value("type", "") != "manifest" ||
        manifest.value("kind", "") != "retrieval_index")
      throw ParseError("first record must be a retrieval_index manifest", line);
    RetrievalIndex idx(DedupConfig::from_json(manifest.at("config")));
    std::vector<IndexedScreen> screens;
    for (std::size_t i = 1; i < records.size(); ++i) {
      line = i + 1;
      const auto& r = records[i];
      try {
        if (r.at("type").get<std::string>() != "screen")
          throw ParseError("unexpected record type", line);
        IndexedScreen s;
        s.canonical_id = r.at("canonical_id").get<std::string>();
        for (const auto& t : r.at("ct")) s.signature.ct_tokens.insert(t.get<std::string>());
        for (const auto& t : r.at("txt")) s.signature.txt_tokens.insert(t.get<std::string>());
        s.display_mode = display_mode_from_string(r.at("display_mode").get<std::string>());
        s.text_size_bin = r.at("text_size_bin").get<int>();
        s.rollout_group = r.value("rollout_group", std::string{});
        s.insert_seq = r.at("insert_seq").get<std::uint64_t>();
        s.dedup_state_id = r.at("dedup_state_id").get<std::string>();
        s.signature.mode_tag = "mode:" + to_string(s.display_mode);
        s.signature.text_size_tag = "text_size:" + std::to_string(s.text_size_bin);
        s.signature.canonical_id = s.canonical_id;
        if (canonical_state_id(s.signature) != s.canonical_id)
          throw ParseError("canonical id does not match stored tokens", line);
        s.signature.embedding = embed_signature(s.signature, idx.cfg_.embed_dim);
        screens.push_back(std::move(s));
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad screen record: ") + e.what(), line);
      }
    }
    std::sort(screens.begin(), screens.end(),
              [](const IndexedScreen& a, const IndexedScreen& b) {
                return a.insert_seq < b.insert_seq;
              });
    for (std::size_t i = 0; i < screens.size(); ++i) {
      if (screens[i].insert_seq != i)
        throw ParseError("insert_seq values must form a gapless sequence", 1);
      std::uint64_t want = screens[i].insert_seq;
      std::uint64_t got = idx.insert(std::move(screens[i]));
      if (got != want) throw ParseError("duplicate insert_seq in index file", 1);
    }
    return idx;
  }

 private:
  bool passes_filters(const IndexedScreen& doc, const RetrievalQuery& q) const {
    if (!q.rollout_group_prefix.empty() &&
        doc.rollout_group.compare(0, q.rollout_group_prefix.size(), q.rollout_group_prefix) != 0)
      return false;
    if (q.display_mode && doc.display_mode != *q.display_mode) return false;
    if (q.text_size_bin && doc.text_size_bin != *q.text_size_bin) return false;
    return true;
  }

  std::vector<SearchHit> search_locked(const RetrievalQuery& q) const {
    if (q.top_k < 1) throw ConfigError("top_k must be at least 1");
    std::vector<SearchHit> out;
    if (q.signature.empty()) {
      // blank screens can only match other blank screens
      for (std::uint64_t seq : empty_docs_) {
        if (!passes_filters(docs_[seq], q)) continue;
        out.push_back({docs_[seq].canonical_id, 0.0, seq});
        if (out.size() == static_cast<std::size_t>(q.top_k)) break;
      }
      return out;
    }
    std::unordered_map<std::uint64_t, double> acc;
    auto accumulate = [&](const std::set<std::string>& tokens) {
      for (const auto& tok : tokens) {
        auto it = postings_.find(tok);
        if (it == postings_.end()) continue;
        double w = idf_weight(docs_.size(), it->second.size());
        for (std::uint64_t seq : it->second) {
          if (!passes_filters(docs_[seq], q)) continue;
          acc[seq] += w;
        }
      }
    };
    accumulate(q.signature.ct_tokens);
    accumulate(q.signature.txt_tokens);
    out.reserve(acc.size());
    for (const auto& [seq, score] : acc) {
      double s = score;
      if (cfg_.embed_rank && !q.signature.embedding.empty())
        s += cfg_.embed_rank_weight * cosine(q.signature.embedding, docs_[seq].signature.embedding);
      out.push_back({docs_[seq].canonical_id, s, seq});
    }
    std::sort(out.begin(), out.end(), [](const SearchHit& a, const SearchHit& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.insert_seq < b.insert_seq;
    });
    if (out.size() > static_cast<std::size_t>(q.top_k)) out.resize(q.top_k);
    return out;
  }

  mutable std::shared_mutex mu_;
  DedupConfig cfg_;
  std::vector<IndexedScreen> docs_;
  std::unordered_map<std::string, std::uint64_t> by_canonical_;
  std::map<std::string, std::vector<std::uint64_t>> postings_;
  std::vector<std::uint64_t> empty_docs_;
};

}  // namespace uiscout
