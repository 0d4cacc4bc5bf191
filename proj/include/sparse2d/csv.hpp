#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sparse2d {

// Canonical float serialization for all CSV artifacts: 9 significant digits.
std::string fmt_g9(double v);

// Writes content to path via a temp file + rename.
void atomic_write_file(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

// Splits one CSV line on commas (no quoting; artifact schemas are plain).
std::vector<std::string> split_csv_line(const std::string& line);

// Minimal row buffer with '#' comment header lines.
class CsvBuilder {
 public:
  void comment(const std::string& text);
  void header(const std::string& line);
  void row(const std::vector<std::string>& cells);
  void raw_line(const std::string& line);
  const std::string& str() const { return out_; }
  void write(const std::string& path) const;

 private:
  std::string out_;
};

}  // namespace sparse2d
