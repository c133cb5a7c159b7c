#include "cdpm/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "cdpm/errors.hpp"

namespace cdpm {

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const Provenance& prov,
                     const std::vector<std::string>& columns)
    : path_(path), columns_(columns.size()) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw UsageError("cannot open " + path.string() + " for writing");
  out_ << "# artifact_version: " << kArtifactVersion << '\n';
  out_ << "# command: " << prov.command << '\n';
  out_ << "# config_hash: " << prov.config_hash << '\n';
  out_ << "# seeds: ";
  for (std::size_t i = 0; i < prov.seeds.size(); ++i) out_ << (i ? " " : "") << prov.seeds[i];
  out_ << '\n';
  for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
  out_ << '\n';
}

CsvWriter& CsvWriter::cell(std::string_view s) {
  if (in_row_++) out_ << ',';
  out_ << s;
  return *this;
}

CsvWriter& CsvWriter::cell(double v) { return cell(std::string_view(format_double(v))); }

CsvWriter& CsvWriter::cell(std::uint64_t v) { return cell(std::string_view(std::to_string(v))); }

void CsvWriter::end_row() {
  if (in_row_ != columns_)
    throw UsageError("CSV row in " + path_.string() + " has " + std::to_string(in_row_) + " cells, expected " +
                     std::to_string(columns_));
  out_ << '\n';
  in_row_ = 0;
}

Samples read_points_csv(const std::filesystem::path& path, std::size_t first_column) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  std::string line;
  bool header_seen = false;
  std::vector<double> values;
  std::size_t d = 0, n = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      // A header row is any row whose first field does not parse as a number.
      double probe = 0.0;
      const auto comma = line.find(',');
      const std::string first = line.substr(0, comma);
      const auto res = std::from_chars(first.data(), first.data() + first.size(), probe);
      if (res.ec != std::errc() || res.ptr != first.data() + first.size()) continue;
    }
    std::stringstream ss(line);
    std::string field;
    std::vector<double> row;
    std::size_t col = 0;
    while (std::getline(ss, field, ',')) {
      if (col++ < first_column) continue;
      double v = 0.0;
      const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
      if (res.ec != std::errc()) throw UsageError("non-numeric field '" + field + "' in " + path.string());
      row.push_back(v);
    }
    if (d == 0) d = row.size();
    if (row.size() != d || d == 0) throw UsageError("ragged rows in " + path.string());
    values.insert(values.end(), row.begin(), row.end());
    ++n;
  }
  if (n == 0) throw UsageError("no data rows in " + path.string());
  return Samples(n, d, std::move(values));
}

}  // namespace cdpm
