#pragma once

#include <charconv>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <string>

#include "branchy/errors.hpp"

namespace branchy {

// Shortest decimal string that round-trips the value. Keeps CSV output
// byte-stable across runs.
inline std::string format_number(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format_number(std::int64_t v) { return std::to_string(v); }

// Minimal CSV emitter. The optional timestamp comment line is the only
// non-deterministic output and can be suppressed.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, bool timestamp_header) : out_(path) {
    if (!out_) throw IoError("cannot open " + path + " for writing");
    if (timestamp_header) {
      std::time_t now = std::time(nullptr);
      char buf[64];
      std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
      out_ << "# generated " << buf << "\n";
    }
  }

  template <typename... Fields>
  void row(const Fields&... fields) {
    bool first = true;
    ((out_ << (first ? "" : ","), out_ << as_string(fields), first = false), ...);
    out_ << "\n";
  }

  void raw_line(const std::string& line) { out_ << line << "\n"; }

  void close() {
    out_.close();
    if (!out_) throw IoError("write failed while closing CSV");
  }

 private:
  static std::string as_string(const std::string& s) { return s; }
  static std::string as_string(const char* s) { return s; }
  static std::string as_string(double v) { return format_number(v); }
  static std::string as_string(std::int64_t v) { return format_number(v); }
  static std::string as_string(int v) { return std::to_string(v); }

  std::ofstream out_;
};

}  // namespace branchy
