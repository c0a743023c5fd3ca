#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace attnkit::io {

// Shortest round-trippable decimal text for a double; locale-independent.
std::string format_double(double v);

// Minimal CSV builder: fixed header, one row per call.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);
  void add_row(std::vector<std::string> cells);
  const std::string& str() const { return text_; }

 private:
  std::size_t columns_;
  std::string text_;
};

std::string cell(double v);
std::string cell(std::int64_t v);
std::string cell(std::uint64_t v);
std::string cell(std::string v);

// Writes content to path via a temp file + rename, so a failed run never
// leaves a partial output behind. Creates parent directories.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

}  // namespace attnkit::io
