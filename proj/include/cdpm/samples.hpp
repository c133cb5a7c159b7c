#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cdpm/errors.hpp"

namespace cdpm {

// Row-major n x d block of points.
struct Samples {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> data;

  Samples() = default;
  Samples(std::size_t rows, std::size_t dim, double fill = 0.0) : n(rows), d(dim), data(rows * dim, fill) {}
  Samples(std::size_t rows, std::size_t dim, std::vector<double> values) : n(rows), d(dim), data(std::move(values)) {
    if (data.size() != n * d) throw UsageError("Samples: value count does not match n*d");
  }

  std::span<double> row(std::size_t i) { return {data.data() + i * d, d}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * d, d}; }

  // Copy of column j.
  std::vector<double> column(std::size_t j) const {
    std::vector<double> c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = data[i * d + j];
    return c;
  }
};

}  // namespace cdpm
