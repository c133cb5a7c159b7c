#pragma once

#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

#include "cdpm/samples.hpp"
#include "cdpm/score_oracle.hpp"

namespace cdpm {

enum class DatasetKind { PointMass, GaussianMixture, SwissRoll };
DatasetKind parse_dataset_kind(std::string_view name);
std::string_view to_string(DatasetKind k);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::PointMass;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  // PointMass
  std::vector<double> x0{-1.0};
  // GaussianMixture
  MixtureTarget mixture = MixtureTarget::gaussian({0.0}, 1.0);
  // SwissRoll: angle u ~ U[u_min, u_max], point = scale (u cos u, u sin u) + jitter N(0, I)
  double u_min = 1.5 * std::numbers::pi;
  double u_max = 4.5 * std::numbers::pi;
  double scale = 1.0 / (4.5 * std::numbers::pi);
  double jitter = 0.0;

  std::size_t dim() const;
  void validate() const;
};

// Deterministic in (spec, seed); point i depends only on (seed, i).
Samples generate_dataset(const DatasetSpec& ds);

// Target law used by the exact score: the point mass or mixture itself, or the
// empirical measure of a generated Swiss Roll.
MixtureTarget dataset_target(const DatasetSpec& ds);

}  // namespace cdpm
