#include "langevin/grid.hpp"

#include "langevin/errors.hpp"

#include <sstream>

namespace langevin {

GridDomain::GridDomain(std::vector<double> lo, std::vector<double> hi,
                       std::vector<int> points, long long node_cap)
    : lo_(std::move(lo)), hi_(std::move(hi)), points_(std::move(points)) {
  const std::size_t k = lo_.size();
  if (k < 1 || k > 3) throw UsageError("grid dimension must be 1, 2 or 3");
  if (hi_.size() != k || points_.size() != k)
    throw UsageError("grid bounds and point counts must have the same length");
  size_ = 1;
  for (std::size_t a = 0; a < k; ++a) {
    if (points_[a] < 3) throw UsageError("each grid axis needs at least 3 points");
    if (!(hi_[a] > lo_[a])) throw UsageError("grid bounds must satisfy lo < hi");
    spacing_.push_back((hi_[a] - lo_[a]) / (points_[a] - 1));
    stride_.push_back(size_);
    size_ *= points_[a];
    if (size_ > node_cap) {
      std::ostringstream os;
      os << "grid has more than " << node_cap << " nodes";
      throw UsageError(os.str());
    }
  }
  weights_.resize(size_);
  for (long long node = 0; node < size_; ++node) {
    double w = 1.0;
    for (int a = 0; a < dims(); ++a) {
      const int i = axis_index(node, a);
      w *= spacing_[a] * ((i == 0 || i == points_[a] - 1) ? 0.5 : 1.0);
    }
    weights_[node] = w;
  }
}

GridDomain GridDomain::cube(int dims, double lo, double hi, int points) {
  if (dims < 1 || dims > 3) throw UsageError("grid dimension must be 1, 2 or 3");
  return GridDomain(std::vector<double>(dims, lo), std::vector<double>(dims, hi),
                    std::vector<int>(dims, points));
}

Vec GridDomain::coordinates(long long node) const {
  Vec x(dims());
  for (int a = 0; a < dims(); ++a) x[a] = axis_coordinate(a, axis_index(node, a));
  return x;
}

bool GridDomain::on_boundary(long long node) const {
  for (int a = 0; a < dims(); ++a) {
    const int i = axis_index(node, a);
    if (i == 0 || i == points_[a] - 1) return true;
  }
  return false;
}

double GridDomain::weight(long long node) const { return weights_[node]; }

GridDomain GridDomain::leading(int d) const {
  if (d < 1 || d > dims()) throw UsageError("invalid leading grid dimension");
  return GridDomain(std::vector<double>(lo_.begin(), lo_.begin() + d),
                    std::vector<double>(hi_.begin(), hi_.begin() + d),
                    std::vector<int>(points_.begin(), points_.begin() + d));
}

bool GridDomain::same_shape(const GridDomain& other) const {
  return lo_ == other.lo_ && hi_ == other.hi_ && points_ == other.points_;
}

nlohmann::json GridDomain::to_json() const {
  return {{"dims", dims()}, {"lo", lo_}, {"hi", hi_}, {"points", points_},
          {"nodes", size_}};
}

GridField::GridField(std::shared_ptr<const GridDomain> d, Vec v)
    : domain(std::move(d)), values(std::move(v)) {
  if (!domain) throw UsageError("grid field needs a domain");
  if (values.size() != domain->size())
    throw UsageError("grid field size does not match its domain");
}

GridField sample_field(std::shared_ptr<const GridDomain> domain, const ScalarField& f) {
  Vec values(domain->size());
  for (long long i = 0; i < domain->size(); ++i) values[i] = f(domain->coordinates(i));
  if (!values.allFinite()) throw NumericError("sampled field has non-finite values");
  return GridField(std::move(domain), std::move(values));
}

double integrate(const GridField& f) { return f.domain->weights().dot(f.values); }

double integrate_against(const Vec& values, const GridField& density) {
  if (values.size() != density.size())
    throw UsageError("integrand and density sizes differ");
  return (density.domain->weights().array() * density.values.array() * values.array())
      .sum();
}

Vec grid_derivative(const GridDomain& grid, const Vec& values, int k) {
  if (values.size() != grid.size()) throw UsageError("field size does not match grid");
  const long long s = grid.stride(k);
  const int n = grid.points(k);
  const double h = grid.spacing(k);
  Vec out(values.size());
  for (long long node = 0; node < grid.size(); ++node) {
    const int i = grid.axis_index(node, k);
    if (i == 0) {
      out[node] = (-3.0 * values[node] + 4.0 * values[node + s] - values[node + 2 * s]) /
                  (2.0 * h);
    } else if (i == n - 1) {
      out[node] = (3.0 * values[node] - 4.0 * values[node - s] + values[node - 2 * s]) /
                  (2.0 * h);
    } else {
      out[node] = (values[node + s] - values[node - s]) / (2.0 * h);
    }
  }
  return out;
}

}  // namespace langevin
