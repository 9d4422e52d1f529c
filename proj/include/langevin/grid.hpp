#pragma once

#include "langevin/types.hpp"

#include <json.hpp>

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

namespace langevin {

inline constexpr long long kDefaultGridNodeCap = 2'000'000;

/// Tensor-product grid on a box in 1 to 3 dimensions. Node indices run
/// with the first axis fastest.
class GridDomain {
 public:
  GridDomain(std::vector<double> lo, std::vector<double> hi, std::vector<int> points,
             long long node_cap = kDefaultGridNodeCap);

  // Same bounds and count on every axis.
  static GridDomain cube(int dims, double lo, double hi, int points);

  int dims() const { return static_cast<int>(lo_.size()); }
  long long size() const { return size_; }
  double lo(int k) const { return lo_[k]; }
  double hi(int k) const { return hi_[k]; }
  int points(int k) const { return points_[k]; }
  double spacing(int k) const { return spacing_[k]; }
  long long stride(int k) const { return stride_[k]; }

  // Index along axis k of a node.
  int axis_index(long long node, int k) const {
    return static_cast<int>((node / stride_[k]) % points_[k]);
  }
  double axis_coordinate(int k, int i) const { return lo_[k] + i * spacing_[k]; }
  Vec coordinates(long long node) const;
  bool on_boundary(long long node) const;

  // Composite trapezoid weight of a node (product of per-axis weights).
  double weight(long long node) const;
  const Vec& weights() const { return weights_; }

  // Same grid restricted to the leading `dims` axes.
  GridDomain leading(int dims) const;

  bool same_shape(const GridDomain& other) const;
  nlohmann::json to_json() const;

 private:
  std::vector<double> lo_;
  std::vector<double> hi_;
  std::vector<int> points_;
  std::vector<double> spacing_;
  std::vector<long long> stride_;
  long long size_ = 0;
  Vec weights_;
};

/// Node values of a scalar field. For densities, log_values keeps the
/// unnormalized log density so that tails below the double range remain
/// usable.
struct GridField {
  std::shared_ptr<const GridDomain> domain;
  Vec values;
  std::optional<Vec> log_values;

  GridField(std::shared_ptr<const GridDomain> d, Vec v);
  long long size() const { return domain->size(); }
  double operator[](long long i) const { return values[i]; }
};

GridField sample_field(std::shared_ptr<const GridDomain> domain, const ScalarField& f);

// Trapezoid integral of a field against the grid weights.
double integrate(const GridField& f);
// Trapezoid integral of values[i] * density[i].
double integrate_against(const Vec& values, const GridField& density);

// Second-order finite-difference derivative along axis k (central in the
// interior, one-sided at the ends of each grid line).
Vec grid_derivative(const GridDomain& grid, const Vec& values, int k);

}  // namespace langevin
