#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace fragcoal {

/// Full-precision decimal rendering (17 significant digits).
inline std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_cell(double v) { return fmt_g17(v); }
inline std::string csv_cell(std::int64_t v) { return std::to_string(v); }
inline std::string csv_cell(std::uint64_t v) { return std::to_string(v); }
inline std::string csv_cell(const std::string& v) { return v; }

/// Minimal CSV emitter: header row on open, one row() call per record.
class CsvFile {
 public:
  CsvFile(const std::filesystem::path& path, const std::string& header) {
    out_.open(path);
    if (!out_) throw std::runtime_error("cannot open " + path.string());
    out_ << header << '\n';
  }

  template <class... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ","), first = false, out_ << csv_cell(cells)), ...);
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

inline nlohmann::json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("bad JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << j.dump(2) << '\n';
}

inline void ensure_directory(const std::filesystem::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec && !std::filesystem::is_directory(dir))
    throw std::runtime_error("cannot create directory " + dir.string());
}

}  // namespace fragcoal
