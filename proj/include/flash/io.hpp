#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace flash {

// 17 significant digits: enough to round-trip an IEEE double exactly, so
// emitted CSV is byte-stable for identical runs.
inline std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Minimal CSV emitter.  Fields in this project never contain separators or
// quotes; the writer enforces that instead of implementing quoting.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> columns) : columns_(std::move(columns)) {
    append_row(columns_);
  }

  void append_row(const std::vector<std::string>& fields) {
    if (fields.size() != columns_.size())
      throw std::invalid_argument("CsvWriter: row width does not match header");
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (fields[i].find_first_of(",\"\n\r") != std::string::npos)
        throw std::invalid_argument("CsvWriter: field contains a separator: " + fields[i]);
      if (i) line += ',';
      line += fields[i];
    }
    body_ += line;
    body_ += '\n';
  }

  const std::string& text() const { return body_; }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("CsvWriter: cannot open " + path.string());
    out << body_;
    if (!out) throw std::runtime_error("CsvWriter: write failed for " + path.string());
  }

 private:
  std::vector<std::string> columns_;
  std::string body_;
};

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace flash
