#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "uiscout/detail/hash.hpp"
#include "uiscout/errors.hpp"

namespace uiscout {

// Position quantization grid: screens map onto kGridCells x kGridCells cells.
inline constexpr int kGridCells = 30;
inline constexpr int kDefaultEmbedDim = 256;
inline constexpr int kStateIdHexChars = 32;

enum class DisplayMode { light, dark };

inline std::string to_string(DisplayMode m) {
  return m == DisplayMode::light ? "light" : "dark";
}

inline DisplayMode display_mode_from_string(std::string_view s) {
  if (s == "light") return DisplayMode::light;
  if (s == "dark") return DisplayMode::dark;
  throw ConfigError("unknown display mode: " + std::string(s));
}

struct BBox {
  double left = 0.0;
  double top = 0.0;
  double right = 0.0;
  double bottom = 0.0;
};

struct UiElement {
  BBox bbox;
  std::string control_label;
  std::string text;
  bool executable = false;
};

struct ScreenObservation {
  std::vector<UiElement> elements;
  int screen_width = 0;
  int screen_height = 0;
  int text_size_bin = 0;
  DisplayMode display_mode = DisplayMode::light;
  std::string rollout_group;
};

struct GridCell {
  int row = 0;
  int col = 0;
  bool operator==(const GridCell&) const = default;
};

struct StructuralSignature {
  std::set<std::string> ct_tokens;   // position|control-type atoms
  std::set<std::string> txt_tokens;  // position|normalized-text atoms
  std::string mode_tag;
  std::string text_size_tag;
  std::string canonical_id;
  std::vector<double> embedding;

  bool empty() const { return ct_tokens.empty() && txt_tokens.empty(); }
};

// Maps a bbox center onto the quantization grid. Centers outside the screen
// clamp to the border cells so off-screen fragments still produce stable atoms.
inline GridCell quantize_cell(const BBox& b, int screen_width, int screen_height) {
  if (screen_width <= 0 || screen_height <= 0)
    throw std::invalid_argument("screen dimensions must be positive");
  if (!std::isfinite(b.left) || !std::isfinite(b.top) || !std::isfinite(b.right) ||
      !std::isfinite(b.bottom))
    throw std::invalid_argument("bbox coordinates must be finite");
  if (b.left > b.right || b.top > b.bottom)
    throw std::invalid_argument("bbox must satisfy left<=right and top<=bottom");
  auto cell_of = [](double center, int extent) {
    double idx = std::floor(center * kGridCells / extent);
    if (idx < 0.0) return 0;
    if (idx > kGridCells - 1) return kGridCells - 1;
    return static_cast<int>(idx);
  };
  double cx = (b.left + b.right) / 2.0;
  double cy = (b.top + b.bottom) / 2.0;
  return GridCell{cell_of(cy, screen_height), cell_of(cx, screen_width)};
}

// Lowercases ASCII letters, trims leading/trailing whitespace, collapses inner
// whitespace runs to a single space.
inline std::string normalize_text(std::string_view raw) {
  auto is_ws = [](unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char ch : raw) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (is_ws(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    if (c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
    out += static_cast<char>(c);
  }
  return out;
}

inline std::string cell_prefix(GridCell cell) {
  return "r" + std::to_string(cell.row) + "_c" + std::to_string(cell.col);
}

inline std::string control_type_token(GridCell cell, const std::string& control_label) {
  return cell_prefix(cell) + "|T:" + control_label;
}

inline std::string text_token(GridCell cell, const std::string& normalized_text) {
  return cell_prefix(cell) + "|X:" + normalized_text;
}

struct StructuralToken {
  int row = 0;
  int col = 0;
  char field = 'T';  // 'T' control type, 'X' text
  std::string value;
};

inline std::optional<StructuralToken> parse_structural_token(std::string_view tok) {
  if (tok.size() < 2 || tok[0] != 'r') return std::nullopt;
  std::size_t i = 1;
  auto read_int = [&](int& out) -> bool {
    std::size_t start = i;
    while (i < tok.size() && tok[i] >= '0' && tok[i] <= '9') ++i;
    if (i == start || i - start > 9) return false;
    out = 0;
    for (std::size_t j = start; j < i; ++j) out = out * 10 + (tok[j] - '0');
    return true;
  };
  StructuralToken st;
  if (!read_int(st.row)) return std::nullopt;
  if (i + 2 >= tok.size() || tok[i] != '_' || tok[i + 1] != 'c') return std::nullopt;
  i += 2;
  if (!read_int(st.col)) return std::nullopt;
  if (i + 2 >= tok.size() || tok[i] != '|') return std::nullopt;
  char field = tok[i + 1];
  if ((field != 'T' && field != 'X') || tok[i + 2] != ':') return std::nullopt;
  st.field = field;
  st.value = std::string(tok.substr(i + 3));
  return st;
}

// Canonical byte string for a signature: all structural atoms byte-sorted and
// newline-joined, then the mode line, then the text-size line. No trailing
// newline. This exact byte layout feeds the state id digest.
inline std::string canonical_serialization(const StructuralSignature& sig) {
  std::vector<std::string> tokens;
  tokens.reserve(sig.ct_tokens.size() + sig.txt_tokens.size());
  tokens.insert(tokens.end(), sig.ct_tokens.begin(), sig.ct_tokens.end());
  tokens.insert(tokens.end(), sig.txt_tokens.begin(), sig.txt_tokens.end());
  std::sort(tokens.begin(), tokens.end());
  std::string out;
  for (const auto& t : tokens) {
    out += t;
    out += '\n';
  }
  out += sig.mode_tag;
  out += '\n';
  out += sig.text_size_tag;
  return out;
}

inline std::string canonical_state_id(const StructuralSignature& sig) {
  return detail::sha256_hex(canonical_serialization(sig)).substr(0, kStateIdHexChars);
}

// Deterministic signed feature hash of the structural atoms, L2-normalized.
// Screens with no atoms embed as the zero vector.
inline std::vector<double> embed_signature(const StructuralSignature& sig,
                                           int dim = kDefaultEmbedDim) {
  if (dim < 8) throw ConfigError("embedding dimension must be at least 8");
  std::vector<double> v(static_cast<std::size_t>(dim), 0.0);
  auto add = [&](const std::string& tok) {
    std::uint64_t h = detail::fnv1a64(tok);
    auto bucket = static_cast<std::size_t>(h % static_cast<std::uint64_t>(dim));
    v[bucket] += (h >> 63) ? -1.0 : 1.0;
  };
  for (const auto& t : sig.ct_tokens) add(t);
  for (const auto& t : sig.txt_tokens) add(t);
  double norm_sq = 0.0;
  for (double x : v) norm_sq += x * x;
  if (norm_sq == 0.0) return v;
  double inv = 1.0 / std::sqrt(norm_sq);
  for (double& x : v) x *= inv;
  return v;
}

inline StructuralSignature extract_signature(const ScreenObservation& obs,
                                             int embed_dim = kDefaultEmbedDim) {
  StructuralSignature sig;
  for (const auto& el : obs.elements) {
    GridCell cell = quantize_cell(el.bbox, obs.screen_width, obs.screen_height);
    if (el.control_label.empty())
      throw std::invalid_argument("element control label must be non-empty");
    sig.ct_tokens.insert(control_type_token(cell, el.control_label));
    std::string norm = normalize_text(el.text);
    if (!norm.empty()) sig.txt_tokens.insert(text_token(cell, norm));
  }
  sig.mode_tag = "mode:" + to_string(obs.display_mode);
  sig.text_size_tag = "text_size:" + std::to_string(obs.text_size_bin);
  sig.canonical_id = canonical_state_id(sig);
  sig.embedding = embed_signature(sig, embed_dim);
  return sig;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

inline nlohmann::json observation_to_json(const ScreenObservation& obs) {
  nlohmann::json els = nlohmann::json::array();
  for (const auto& el : obs.elements) {
    els.push_back({{"bbox", {el.bbox.left, el.bbox.top, el.bbox.right, el.bbox.bottom}},
                   {"control", el.control_label},
                   {"text", el.text},
                   {"executable", el.executable}});
  }
  return nlohmann::json{{"screen_width", obs.screen_width},
                        {"screen_height", obs.screen_height},
                        {"text_size_bin", obs.text_size_bin},
                        {"display_mode", to_string(obs.display_mode)},
                        {"rollout_group", obs.rollout_group},
                        {"elements", els}};
}

inline ScreenObservation observation_from_json(const nlohmann::json& j) {
  ScreenObservation obs;
  obs.screen_width = j.at("screen_width").get<int>();
  obs.screen_height = j.at("screen_height").get<int>();
  obs.text_size_bin = j.at("text_size_bin").get<int>();
  obs.display_mode = display_mode_from_string(j.at("display_mode").get<std::string>());
  obs.rollout_group = j.value("rollout_group", std::string{});
  for (const auto& e : j.at("elements")) {
    UiElement el;
    const auto& bb = e.at("bbox");
    el.bbox = BBox{bb.at(0).get<double>(), bb.at(1).get<double>(), bb.at(2).get<double>(),
                   bb.at(3).get<double>()};
    el.control_label = e.at("control").get<std::string>();
    el.text = e.value("text", std::string{});
    el.executable = e.value("executable", false);
    obs.elements.push_back(std::move(el));
  }
  return obs;
}

}  // namespace uiscout
