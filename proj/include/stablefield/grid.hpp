#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stablefield/errors.hpp"

namespace stablefield {

// Rectangular site grid: origin + index * spacing per axis. Sites are
// enumerated row-major with the last axis varying fastest.
struct GridSpec {
  Eigen::VectorXd origin;
  Eigen::VectorXd spacing;
  std::vector<std::int64_t> counts;

  int dim() const { return static_cast<int>(counts.size()); }
  std::size_t size() const;
  void validate() const;
  Eigen::VectorXd site(std::size_t flat) const;
  std::vector<Eigen::VectorXd> sites() const;
};

// One realization of a random field on a grid.
struct GridField {
  GridSpec grid;
  Eigen::VectorXd values;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> meta;
};

// Compact binary layout: magic 'SFLD', format version, dims, counts, origin,
// spacing, seed, then the values as little-endian doubles in site order.
void write_grid_binary(const GridField& f, const std::string& path);
GridField read_grid_binary(const std::string& path);

// CSV with columns x1..xd,value, one row per site in site order.
void write_grid_csv(const GridField& f, const std::string& path);

}  // namespace stablefield
