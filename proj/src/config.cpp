#include "cdpm/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "cdpm/csv.hpp"
#include "cdpm/errors.hpp"

namespace cdpm {

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

double to_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("config key " + key + ": '" + s + "' is not a number");
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("config key " + key + ": '" + s + "' is not a nonnegative integer");
  return v;
}

}  // namespace

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = {
      "sde.family",        "sde.families",        "sde.theta",          "sde.sigma",         "sde.mu",
      "sde.sigma_min",     "sde.sigma_max",       "sde.beta_min",       "sde.beta_max",      "sde.T",
      "sde.dim",           "target.dataset",      "target.x0",          "target.mean",       "target.var",
      "target.n",          "target.seed",         "target.u_min",       "target.u_max",      "target.scale",
      "target.jitter",     "sampler.method",      "sampler.n_steps",    "sampler.snr",       "sampler.corrector_steps",
      "sampler.n_paths",   "sampler.t_eps_fraction", "sampler.threads", "sampler.save_every", "sampler.corrector_norm",
      "noise.mode",        "noise.epsilon",       "metric.method",      "metric.n",          "metric.reg",
      "metric.bootstrap",  "sweep.epsilon",       "sweep.delta",        "sweep.seeds",       "sweep.n_seeds",
      "sweep.seed",        "output.dir",          "bounds.L",           "bounds.h",          "bounds.kappa",
      "bounds.eta",        "bounds.second_moment", "bounds.grid",       "bounds.empirical",
  };
  return keys;
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config key '" + section + "' must sit inside a [section]");
    for (const auto& [key, value] : body) cfg.set(section + "." + key, value.get_value<std::string>());
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const auto& keys = known_config_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw ConfigError("unknown config key '" + key + "'");
  std::string v = value;
  while (!v.empty() && std::isspace(static_cast<unsigned char>(v.back()))) v.pop_back();
  while (!v.empty() && std::isspace(static_cast<unsigned char>(v.front()))) v.erase(v.begin());
  entries_[key] = v;
}

std::string ExperimentConfig::get_string(const std::string& key, const std::string& def) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? def : it->second;
}

double ExperimentConfig::get_double(const std::string& key, double def) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? def : to_double(key, it->second);
}

std::uint64_t ExperimentConfig::get_u64(const std::string& key, std::uint64_t def) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? def : to_u64(key, it->second);
}

bool ExperimentConfig::get_bool(const std::string& key, bool def) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return def;
  std::string v;
  for (char c : it->second) v.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("config key " + key + ": '" + it->second + "' is not a boolean");
}

std::vector<double> ExperimentConfig::get_doubles(const std::string& key, const std::vector<double>& def) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return def;
  std::vector<double> out;
  for (const auto& s : split_list(it->second)) out.push_back(to_double(key, s));
  return out;
}

std::vector<std::uint64_t> ExperimentConfig::get_u64s(const std::string& key,
                                                      const std::vector<std::uint64_t>& def) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return def;
  std::vector<std::uint64_t> out;
  for (const auto& s : split_list(it->second)) out.push_back(to_u64(key, s));
  return out;
}

std::vector<std::string> ExperimentConfig::get_strings(const std::string& key,
                                                       const std::vector<std::string>& def) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? def : split_list(it->second);
}

DiffusionSpec ExperimentConfig::sde(const DiffusionSpec& base) const {
  DiffusionSpec s = base;
  if (has("sde.family")) s.kind = parse_family(get_string("sde.family", ""));
  s.theta = get_double("sde.theta", s.theta);
  s.sigma = get_double("sde.sigma", s.sigma);
  s.sigma_min = get_double("sde.sigma_min", s.sigma_min);
  s.sigma_max = get_double("sde.sigma_max", s.sigma_max);
  s.beta_min = get_double("sde.beta_min", s.beta_min);
  s.beta_max = get_double("sde.beta_max", s.beta_max);
  s.T = get_double("sde.T", s.T);
  s.dim = get_u64("sde.dim", s.dim);
  s.mu = get_doubles("sde.mu", s.mu);
  return s;
}

std::vector<Family> ExperimentConfig::families(const std::vector<Family>& def) const {
  if (!has("sde.families")) return def;
  std::vector<Family> out;
  for (const auto& name : get_strings("sde.families", {})) out.push_back(parse_family(name));
  if (out.empty()) throw ConfigError("sde.families is empty");
  return out;
}

DatasetSpec ExperimentConfig::dataset(const DatasetSpec& base) const {
  DatasetSpec ds = base;
  if (has("target.dataset")) ds.kind = parse_dataset_kind(get_string("target.dataset", ""));
  ds.x0 = get_doubles("target.x0", ds.x0);
  if (has("target.mean") || has("target.var")) {
    const auto mean = get_doubles("target.mean", ds.mixture.dim() == 1 ? ds.mixture.means.front() : std::vector<double>{0.0});
    ds.mixture = MixtureTarget::gaussian(mean, get_double("target.var", 1.0));
  }
  ds.n = get_u64("target.n", ds.n);
  ds.seed = get_u64("target.seed", ds.seed);
  ds.u_min = get_double("target.u_min", ds.u_min);
  ds.u_max = get_double("target.u_max", ds.u_max);
  ds.scale = get_double("target.scale", ds.scale);
  ds.jitter = get_double("target.jitter", ds.jitter);
  ds.validate();
  return ds;
}

SamplerConfig ExperimentConfig::sampler(const SamplerConfig& base) const {
  SamplerConfig c = base;
  if (has("sampler.method")) c.method = parse_method(get_string("sampler.method", ""));
  c.n_steps = get_u64("sampler.n_steps", c.n_steps);
  c.snr = get_double("sampler.snr", c.snr);
  c.corrector_steps = get_u64("sampler.corrector_steps", c.corrector_steps);
  c.n_paths = get_u64("sampler.n_paths", c.n_paths);
  c.threads = get_u64("sampler.threads", c.threads);
  c.save_every = get_u64("sampler.save_every", c.save_every);
  if (has("sampler.corrector_norm")) {
    const std::string v = get_string("sampler.corrector_norm", "");
    if (v == "batch_mean" || v == "batch") c.corrector_norm = CorrectorNorm::BatchMean;
    else if (v == "per_path" || v == "path") c.corrector_norm = CorrectorNorm::PerPath;
    else throw ConfigError("sampler.corrector_norm must be batch_mean or per_path");
  }
  c.validate();
  return c;
}

NoiseModel ExperimentConfig::noise(const NoiseModel& base) const {
  NoiseModel m = base;
  if (has("noise.mode")) m.mode = parse_noise_mode(get_string("noise.mode", ""));
  m.epsilon = get_double("noise.epsilon", m.epsilon);
  if (!(m.epsilon >= 0.0)) throw ConfigError("noise.epsilon must be nonnegative");
  return m;
}

std::vector<std::uint64_t> ExperimentConfig::seeds(std::uint64_t base_seed, std::size_t default_count) const {
  if (has("sweep.seeds")) {
    auto s = get_u64s("sweep.seeds", {});
    if (s.empty()) throw ConfigError("sweep.seeds is empty");
    return s;
  }
  const std::uint64_t first = get_u64("sweep.seed", base_seed);
  const std::size_t count = get_u64("sweep.n_seeds", default_count);
  if (count == 0) throw ConfigError("sweep.n_seeds must be positive");
  std::vector<std::uint64_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = first + i;
  return out;
}

std::string ExperimentConfig::canonical() const {
  // Worker count and output location do not affect results, so they stay out of the hash.
  std::string s;
  for (const auto& [k, v] : entries_)
    if (k != "sampler.threads" && k != "output.dir") s += k + "=" + v + "\n";
  return s;
}

std::string ExperimentConfig::hash() const { return hex64(fnv1a64(canonical())); }

}  // namespace cdpm
