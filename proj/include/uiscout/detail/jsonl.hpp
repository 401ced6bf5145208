#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "uiscout/errors.hpp"

namespace uiscout::detail {

inline std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<nlohmann::json> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("invalid json record: ") + e.what(), line_no);
    }
  }
  return records;
}

class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
  }

  void write(const nlohmann::json& j) { out_ << j.dump() << '\n'; }

  void close() { out_.close(); }

 private:
  std::ofstream out_;
};

}  // namespace uiscout::detail
