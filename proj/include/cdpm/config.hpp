#pragma once

// Experiment configuration: INI text with [section] headers and key = value
// lines. Keys are addressed as "section.key". Unknown keys are rejected so a
// typo cannot silently fall back to a default.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cdpm/datasets.hpp"
#include "cdpm/reverse_sampler.hpp"
#include "cdpm/score_oracle.hpp"
#include "cdpm/sde_models.hpp"

namespace cdpm {

class ExperimentConfig {
 public:
  static ExperimentConfig from_file(const std::filesystem::path& path);
  static ExperimentConfig from_text(const std::string& text);

  // Adds or replaces an entry; `key` is "section.key".
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& def) const;
  double get_double(const std::string& key, double def) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t def) const;
  bool get_bool(const std::string& key, bool def) const;
  // Comma- or whitespace-separated lists.
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& def) const;
  std::vector<std::uint64_t> get_u64s(const std::string& key, const std::vector<std::uint64_t>& def) const;
  std::vector<std::string> get_strings(const std::string& key, const std::vector<std::string>& def) const;

  // Blocks: each starts from `base` and applies the keys present in the file.
  DiffusionSpec sde(const DiffusionSpec& base) const;
  std::vector<Family> families(const std::vector<Family>& def) const;
  DatasetSpec dataset(const DatasetSpec& base) const;
  SamplerConfig sampler(const SamplerConfig& base) const;
  NoiseModel noise(const NoiseModel& base) const;
  // Explicit sweep.seeds, else n_seeds consecutive values from sweep.seed (or `base_seed`).
  std::vector<std::uint64_t> seeds(std::uint64_t base_seed, std::size_t default_count) const;

  // Sorted "section.key=value" lines; the hash is FNV-1a of this text.
  std::string canonical() const;
  std::string hash() const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

const std::vector<std::string>& known_config_keys();

}  // namespace cdpm
