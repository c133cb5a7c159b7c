#include "cdpm/datasets.hpp"

#include <cctype>
#include <cmath>
#include <string>

#include "cdpm/errors.hpp"
#include "cdpm/rng.hpp"

namespace cdpm {

DatasetKind parse_dataset_kind(std::string_view name) {
  std::string key;
  for (char c : name)
    if (c != '_' && c != '-' && c != ' ') key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (key == "pointmass") return DatasetKind::PointMass;
  if (key == "gaussianmixture" || key == "gaussian" || key == "mixture") return DatasetKind::GaussianMixture;
  if (key == "swissroll") return DatasetKind::SwissRoll;
  throw ConfigError("unknown dataset '" + std::string(name) + "'");
}

std::string_view to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::PointMass: return "PointMass";
    case DatasetKind::GaussianMixture: return "GaussianMixture";
    case DatasetKind::SwissRoll: return "SwissRoll";
  }
  return "?";
}

std::size_t DatasetSpec::dim() const {
  switch (kind) {
    case DatasetKind::PointMass: return x0.size();
    case DatasetKind::GaussianMixture: return mixture.dim();
    case DatasetKind::SwissRoll: return 2;
  }
  return 0;
}

void DatasetSpec::validate() const {
  if (n == 0) throw ConfigError("dataset needs n >= 1");
  switch (kind) {
    case DatasetKind::PointMass:
      if (x0.empty()) throw ConfigError("point mass needs a location x0");
      break;
    case DatasetKind::GaussianMixture: mixture.validate(); break;
    case DatasetKind::SwissRoll:
      if (!(u_min < u_max)) throw ConfigError("swiss roll needs u_min < u_max");
      if (!(scale > 0.0)) throw ConfigError("swiss roll needs scale > 0");
      if (!(jitter >= 0.0)) throw ConfigError("swiss roll needs jitter >= 0");
      break;
  }
}

Samples generate_dataset(const DatasetSpec& ds) {
  ds.validate();
  switch (ds.kind) {
    case DatasetKind::PointMass: {
      Samples x(ds.n, ds.x0.size());
      for (std::size_t i = 0; i < ds.n; ++i) std::copy(ds.x0.begin(), ds.x0.end(), x.row(i).begin());
      return x;
    }
    case DatasetKind::GaussianMixture: return ds.mixture.sample(ds.n, ds.seed);
    case DatasetKind::SwissRoll: {
      Samples x(ds.n, 2);
      for (std::size_t i = 0; i < ds.n; ++i) {
        auto g = make_stream({ds.seed, role(StreamRole::Dataset), i});
        const double u = ds.u_min + (ds.u_max - ds.u_min) * uniform01(g);
        auto r = x.row(i);
        r[0] = ds.scale * u * std::cos(u);
        r[1] = ds.scale * u * std::sin(u);
        if (ds.jitter > 0.0) {
          r[0] += ds.jitter * standard_normal(g);
          r[1] += ds.jitter * standard_normal(g);
        }
      }
      return x;
    }
  }
  return {};
}

MixtureTarget dataset_target(const DatasetSpec& ds) {
  ds.validate();
  switch (ds.kind) {
    case DatasetKind::PointMass: return MixtureTarget::point_mass(ds.x0);
    case DatasetKind::GaussianMixture: return ds.mixture;
    case DatasetKind::SwissRoll: return MixtureTarget::empirical(generate_dataset(ds));
  }
  return {};
}

}  // namespace cdpm
