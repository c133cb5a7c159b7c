#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "cdpm/samples.hpp"

namespace cdpm {

inline constexpr std::string_view kArtifactVersion = "0.1.0";

struct Provenance {
  std::string command;
  std::string config_hash;  // 16 hex digits
  std::vector<std::uint64_t> seeds;
};

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view text);
std::string hex64(std::uint64_t v);

// Formats a double with enough digits to round-trip; NaN and infinities as nan/inf/-inf.
std::string format_double(double v);

// CSV file with '#'-prefixed provenance lines ahead of the header row.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const Provenance& prov, const std::vector<std::string>& columns);

  CsvWriter& cell(std::string_view s);
  CsvWriter& cell(double v);
  CsvWriter& cell(std::uint64_t v);
  CsvWriter& cell(int v) { return cell(static_cast<double>(v)); }
  void end_row();

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t columns_ = 0;
  std::size_t in_row_ = 0;
};

// Reads a numeric CSV (comment lines starting with '#' and one header row skipped).
// `first_column` selects where the coordinates start.
Samples read_points_csv(const std::filesystem::path& path, std::size_t first_column = 0);

}  // namespace cdpm
