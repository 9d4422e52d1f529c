#include "langevin/ratelab.hpp"

#include "langevin/errors.hpp"
#include "langevin/io.hpp"
#include "langevin/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

namespace langevin {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec fd4_gradient(const ScalarField& f, const Vec& x) {
  const Vec h = fd_steps(x, kDefaultFdStep);
  Vec g(x.size());
  Vec z = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double base = x[k];
    z[k] = base - 2 * h[k];
    const double m2 = f(z);
    z[k] = base - h[k];
    const double m1 = f(z);
    z[k] = base + h[k];
    const double p1 = f(z);
    z[k] = base + 2 * h[k];
    const double p2 = f(z);
    z[k] = base;
    g[k] = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h[k]);
  }
  return g;
}

struct UnionFind {
  std::vector<long long> parent;
  explicit UnionFind(long long n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0LL);
  }
  long long find(long long x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(long long a, long long b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

std::string pass_text(const std::optional<bool>& pass) {
  if (!pass) return "hypothesis not met";
  return *pass ? "true" : "false";
}

nlohmann::json number_or_null(double x) {
  if (std::isfinite(x)) return x;
  return nullptr;
}

std::string csv_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return format_double(x);
}

}  // namespace

// ---------------------------------------------------------------------------
// Perturbations and measures

void PerturbationSpec::spot_check(const GridDomain& grid) const {
  if (depends_on.empty()) return;
  if (static_cast<int>(depends_on.size()) != grid.dims())
    throw UsageError("perturbation mask length does not match the grid");
  const long long samples = std::min<long long>(grid.size(), 25);
  const long long step = std::max<long long>(1, grid.size() / samples);
  for (long long node = 0; node < grid.size(); node += step) {
    Vec x = grid.coordinates(node);
    const double reference = v(x);
    for (int k = 0; k < grid.dims(); ++k) {
      if (depends_on[static_cast<std::size_t>(k)]) continue;
      for (double t : {grid.lo(k), 0.5 * (grid.lo(k) + grid.hi(k)), grid.hi(k)}) {
        Vec y = x;
        y[k] = t;
        const double value = v(y);
        if (std::abs(value - reference) > 1e-10 * std::max(1.0, std::abs(reference))) {
          std::ostringstream os;
          os << "perturbation '" << name << "' varies along masked coordinate " << k;
          throw UsageError(os.str());
        }
      }
    }
  }
}

PerturbationSpec constant_perturbation(double c) {
  PerturbationSpec p;
  p.name = "constant";
  p.v = [c](const Vec&) { return c; };
  p.gradient = [](const Vec& z) -> Vec { return Vec::Zero(z.size()); };
  return p;
}

PerturbationSpec gaussian_shift(int n, int coord, double m) {
  if (coord < 0 || coord >= n) throw UsageError("shift coordinate out of range");
  PerturbationSpec p;
  std::ostringstream os;
  os << "shift(z" << coord << ", " << m << ")";
  p.name = os.str();
  p.v = [coord, m](const Vec& z) { return m * z[coord] - 0.5 * m * m; };
  p.gradient = [coord, m](const Vec& z) -> Vec {
    Vec g = Vec::Zero(z.size());
    g[coord] = m;
    return g;
  };
  p.depends_on.assign(static_cast<std::size_t>(n), false);
  p.depends_on[static_cast<std::size_t>(coord)] = true;
  return p;
}

std::vector<bool> block_mask(const AugLayout& layout, const std::string& block) {
  int offset = -1;
  if (block == "theta") offset = layout.theta_offset;
  if (block == "p") offset = layout.p_offset;
  if (block == "r") offset = layout.r_offset;
  if (offset < 0) throw UsageError("layout has no block '" + block + "'");
  std::vector<bool> mask(static_cast<std::size_t>(layout.n()), false);
  for (int i = 0; i < layout.d; ++i) mask[static_cast<std::size_t>(offset + i)] = true;
  return mask;
}

double boundary_mass_fraction(const GridField& density) {
  const GridDomain& g = *density.domain;
  double shell = 0.0;
  double total = 0.0;
  for (long long i = 0; i < g.size(); ++i) {
    const double m = g.weight(i) * density.values[i];
    total += m;
    if (g.on_boundary(i)) shell += m;
  }
  return total > 0.0 ? shell / total : 1.0;
}

namespace {

GridField density_from_log(std::shared_ptr<const GridDomain> grid, Vec log_density) {
  if (!log_density.allFinite()) throw NumericError("log density has non-finite values");
  const double top = log_density.maxCoeff();
  Vec values = (log_density.array() - top).exp().matrix();
  const double mass = grid->weights().dot(values);
  values /= mass;
  log_density.array() -= top + std::log(mass);
  GridField f(std::move(grid), std::move(values));
  f.log_values = std::move(log_density);
  return f;
}

}  // namespace

MeasurePair measure_from_perturbation(std::shared_ptr<const GridDomain> grid,
                                      const ScalarField& H, const PerturbationSpec& v,
                                      double tolerance) {
  v.spot_check(*grid);
  Vec log_mu(grid->size());
  Vec log_nu(grid->size());
  for (long long i = 0; i < grid->size(); ++i) {
    const Vec x = grid->coordinates(i);
    const double h = H(x);
    log_mu[i] = -h;
    log_nu[i] = -h + v.v(x);
  }
  MeasurePair out{density_from_log(grid, std::move(log_mu)),
                  density_from_log(grid, std::move(log_nu))};
  const double shell = std::max(boundary_mass_fraction(out.mu), boundary_mass_fraction(out.nu));
  if (shell > tolerance) {
    std::vector<double> lo;
    std::vector<double> hi;
    for (int k = 0; k < grid->dims(); ++k) {
      const double c = 0.5 * (grid->lo(k) + grid->hi(k));
      const double half = 0.5 * (grid->hi(k) - grid->lo(k));
      lo.push_back(c - 1.5 * half);
      hi.push_back(c + 1.5 * half);
    }
    std::ostringstream os;
    os << "boundary shell carries a mass fraction " << shell << " > " << tolerance
       << "; enlarge the box, e.g. to [";
    for (int k = 0; k < grid->dims(); ++k) os << (k ? ", " : "") << lo[k] << ":" << hi[k];
    os << "]";
    throw DomainTooSmallError(os.str(), lo, hi);
  }
  return out;
}

Mat perturbation_gradient(const GridDomain& grid, const PerturbationSpec& v) {
  Mat g(grid.size(), grid.dims());
  for (long long i = 0; i < grid.size(); ++i) {
    const Vec x = grid.coordinates(i);
    const Vec row = v.gradient ? (*v.gradient)(x) : fd4_gradient(v.v, x);
    if (row.size() != grid.dims()) throw UsageError("perturbation gradient has wrong length");
    g.row(i) = row.transpose();
  }
  return g;
}

Mat field_gradient(const GridField& f) {
  const GridDomain& grid = *f.domain;
  Mat g(grid.size(), grid.dims());
  for (int k = 0; k < grid.dims(); ++k) g.col(k) = grid_derivative(grid, f.values, k);
  return g;
}

// ---------------------------------------------------------------------------
// Rates

double symmetric_rate(const GridField& nu, const Mat& grad_v, const MatrixField& D) {
  const GridDomain& grid = *nu.domain;
  if (grad_v.rows() != grid.size() || grad_v.cols() != grid.dims())
    throw UsageError("gradient field does not match the grid");
  double total = 0.0;
  for (long long i = 0; i < grid.size(); ++i) {
    const double m = grid.weight(i) * nu.values[i];
    if (m == 0.0) continue;
    const Vec g = grad_v.row(i).transpose();
    total += m * g.dot(D(grid.coordinates(i)) * g);
  }
  return 0.25 * total;
}

double symmetric_rate(const GridField& nu, const GridField& v, const MatrixField& D) {
  if (!nu.domain->same_shape(*v.domain)) throw UsageError("fields live on different grids");
  return symmetric_rate(nu, field_gradient(v), D);
}

double symmetric_rate(const GridField& nu, const PerturbationSpec& v, const MatrixField& D) {
  return symmetric_rate(nu, perturbation_gradient(*nu.domain, v), D);
}

namespace {

AntisymmetricRhs rhs_from_gradient(const GridField& nu, const DynamicsSpec& spec,
                                   const Mat& grad, double tolerance) {
  const GridDomain& grid = *nu.domain;
  if (grid.dims() != spec.n())
    throw UsageError("grid dimension must equal the state dimension of the dynamics");
  Vec values(grid.size());
  for (long long i = 0; i < grid.size(); ++i) {
    const Vec x = grid.coordinates(i);
    values[i] = antisymmetric_drift(spec, x).dot(grad.row(i).transpose());
  }
  AntisymmetricRhs out{GridField(nu.domain, std::move(values)), 0.0};
  out.nu_mean = integrate_against(out.field.values, nu);
  if (!(std::abs(out.nu_mean) <= tolerance)) {
    std::ostringstream os;
    os << "L_A v has nu-mean " << out.nu_mean << ", outside the tolerance " << tolerance;
    throw CompatibilityError(os.str(), out.nu_mean);
  }
  return out;
}

}  // namespace

AntisymmetricRhs antisymmetric_rhs(const GridField& nu, const DynamicsSpec& spec,
                                   const PerturbationSpec& v, double tolerance) {
  return rhs_from_gradient(nu, spec, perturbation_gradient(*nu.domain, v), tolerance);
}

AntisymmetricRhs antisymmetric_rhs(const GridField& nu, const DynamicsSpec& spec,
                                   const GridField& v, double tolerance) {
  if (!nu.domain->same_shape(*v.domain)) throw UsageError("fields live on different grids");
  return rhs_from_gradient(nu, spec, field_gradient(v), tolerance);
}

// ---------------------------------------------------------------------------
// Weighted operator

WeightedOperator::WeightedOperator(const GridField& nu, const MatrixField& D)
    : grid_(nu.domain) {
  const GridDomain& g = *grid_;
  const long long n = g.size();
  const int dims = g.dims();
  masses_ = (g.weights().array() * nu.values.array()).matrix();

  Vec log_nu = nu.log_values ? *nu.log_values : Vec(nu.values.array().log().matrix());
  Mat diag(n, dims);
  for (long long i = 0; i < n; ++i) {
    const Mat d = D(g.coordinates(i));
    if (d.rows() != dims || d.cols() != dims)
      throw UsageError("diffusion matrix size does not match the grid dimension");
    Mat off = d;
    off.diagonal().setZero();
    if (off.cwiseAbs().maxCoeff() > 1e-14 * std::max(1.0, d.cwiseAbs().maxCoeff()))
      throw UsageError("the weighted Poisson operator needs a diagonal diffusion matrix");
    diag.row(i) = d.diagonal().transpose();
  }

  cond_.assign(static_cast<std::size_t>(dims), Vec::Zero(n));
  for (int k = 0; k < dims; ++k) {
    const Vec dkk = diag.col(k);
    const Vec slope = grid_derivative(g, dkk, k);
    Vec score = -grid_derivative(g, log_nu, k);
    for (long long i = 0; i < n; ++i)
      if (!std::isfinite(score[i])) score[i] = 0.0;
    const long long s = g.stride(k);
    const int pts = g.points(k);
    const double h = g.spacing(k);
    std::vector<double> mg(static_cast<std::size_t>(pts));
    std::vector<double> left(static_cast<std::size_t>(pts));
    std::vector<double> right(static_cast<std::size_t>(pts));
    Vec& cond = cond_[static_cast<std::size_t>(k)];
    for (long long start = 0; start < n; ++start) {
      if (g.axis_index(start, k) != 0) continue;
      double dmax = 0.0;
      for (int i = 0; i < pts; ++i) dmax = std::max(dmax, std::abs(dkk[start + i * s]));
      if (dmax == 0.0) continue;
      for (int i = 0; i < pts; ++i) {
        const long long node = start + i * s;
        mg[i] = masses_[node] * (dkk[node] * score[node] - slope[node]);
      }
      // left[i] = sum_{j <= i}, right[i] = sum_{j > i}
      double acc = 0.0;
      for (int i = 0; i < pts; ++i) left[i] = (acc += mg[i]);
      acc = 0.0;
      for (int i = pts - 1; i >= 0; --i) {
        right[i] = acc;
        acc += mg[i];
      }
      int peak = 0;
      for (int i = 1; i < pts - 1; ++i)
        if (-left[i] > -left[peak]) peak = i;
      for (int i = 0; i < pts - 1; ++i) {
        const long long a = start + i * s;
        const long long b = a + s;
        double c = (i <= peak ? -left[i] : right[i]) / h;
        if (!(c > 0.0) || !std::isfinite(c)) {
          c = 0.5 * (dkk[a] + dkk[b]) * std::sqrt(masses_[a] * masses_[b]) / (h * h);
          if (!std::isfinite(c) || c < 0.0) c = 0.0;
        }
        cond[a] = c;
      }
    }
  }

  UnionFind uf(n);
  std::vector<bool> touched(static_cast<std::size_t>(n), false);
  for (int k = 0; k < dims; ++k) {
    const Vec& cond = cond_[static_cast<std::size_t>(k)];
    const long long s = g.stride(k);
    for (long long i = 0; i < n; ++i) {
      if (cond[i] > 0.0) {
        uf.unite(i, i + s);
        touched[i] = touched[i + s] = true;
      }
    }
  }
  component_.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> label(static_cast<std::size_t>(n), -1);
  for (long long i = 0; i < n; ++i) {
    if (!touched[i] && masses_[i] == 0.0) continue;
    const long long root = uf.find(i);
    if (label[root] < 0) label[root] = components_++;
    component_[i] = label[root];
  }
}

Vec WeightedOperator::apply_stiffness(const Vec& psi) const {
  const GridDomain& g = *grid_;
  Vec out = Vec::Zero(psi.size());
  for (int k = 0; k < g.dims(); ++k) {
    const Vec& cond = cond_[static_cast<std::size_t>(k)];
    const long long s = g.stride(k);
    for (long long i = 0; i < size(); ++i) {
      const double c = cond[i];
      if (c == 0.0) continue;
      const double flux = c * (psi[i] - psi[i + s]);
      out[i] += flux;
      out[i + s] -= flux;
    }
  }
  return out;
}

Vec WeightedOperator::apply(const Vec& psi) const {
  Vec k = apply_stiffness(psi);
  for (long long i = 0; i < size(); ++i) k[i] = masses_[i] > 0.0 ? k[i] / masses_[i] : 0.0;
  return k;
}

double WeightedOperator::energy(const Vec& psi) const {
  const GridDomain& g = *grid_;
  double e = 0.0;
  for (int k = 0; k < g.dims(); ++k) {
    const Vec& cond = cond_[static_cast<std::size_t>(k)];
    const long long s = g.stride(k);
    for (long long i = 0; i < size(); ++i) {
      if (cond[i] == 0.0) continue;
      const double diff = psi[i] - psi[i + s];
      e += cond[i] * diff * diff;
    }
  }
  return e;
}

Vec WeightedOperator::stiffness_diagonal() const {
  const GridDomain& g = *grid_;
  Vec d = Vec::Zero(size());
  for (int k = 0; k < g.dims(); ++k) {
    const Vec& cond = cond_[static_cast<std::size_t>(k)];
    const long long s = g.stride(k);
    for (long long i = 0; i < size(); ++i) {
      d[i] += cond[i];
      if (cond[i] != 0.0) d[i + s] += cond[i];
    }
  }
  return d;
}

Mat WeightedOperator::dense_stiffness() const {
  const GridDomain& g = *grid_;
  Mat K = Mat::Zero(size(), size());
  for (int k = 0; k < g.dims(); ++k) {
    const Vec& cond = cond_[static_cast<std::size_t>(k)];
    const long long s = g.stride(k);
    for (long long i = 0; i < size(); ++i) {
      const double c = cond[i];
      if (c == 0.0) continue;
      K(i, i) += c;
      K(i + s, i + s) += c;
      K(i, i + s) -= c;
      K(i + s, i) -= c;
    }
  }
  return K;
}

// ---------------------------------------------------------------------------
// Poisson solve

PoissonResult solve_poisson(const WeightedOperator& op, const GridField& rhs,
                            const PoissonOptions& options) {
  const long long n = op.size();
  if (rhs.size() != n) throw UsageError("rhs does not match the operator grid");
  if (!rhs.values.allFinite()) throw NumericError("rhs has non-finite values");
  const Vec& m = op.masses();
  const auto& comp = op.components();
  const int nc = op.component_count();

  std::vector<double> comp_mass(static_cast<std::size_t>(nc), 0.0);
  std::vector<double> comp_sum(static_cast<std::size_t>(nc), 0.0);
  for (long long i = 0; i < n; ++i) {
    if (comp[i] < 0) continue;
    comp_mass[comp[i]] += m[i];
    comp_sum[comp[i]] += m[i] * rhs.values[i];
  }
  double worst = 0.0;
  for (int c = 0; c < nc; ++c) {
    if (std::abs(comp_sum[c]) > std::abs(worst)) worst = comp_sum[c];
  }
  if (!(std::abs(worst) <= options.compatibility_tolerance)) {
    std::ostringstream os;
    os << "Poisson right-hand side is incompatible: nu-weighted sum " << worst;
    if (nc > 1) os << " on one of " << nc << " connected components";
    throw CompatibilityError(os.str(), worst);
  }

  // Projected right-hand side b = M (rhs - component means).
  Vec b = Vec::Zero(n);
  for (long long i = 0; i < n; ++i) {
    if (comp[i] < 0 || comp_mass[comp[i]] == 0.0) continue;
    b[i] = m[i] * (rhs.values[i] - comp_sum[comp[i]] / comp_mass[comp[i]]);
  }

  PoissonResult result{GridField(rhs.domain, Vec::Zero(n)), "none", 0, 0.0, 0.0};
  if (b.cwiseAbs().maxCoeff() == 0.0) return result;

  const Vec kdiag = op.stiffness_diagonal();
  double pin_diag = 0.0;
  for (long long i = 0; i < n; ++i)
    if (comp[i] >= 0 && comp_mass[comp[i]] > 0.0) pin_diag += m[i] * m[i] / comp_mass[comp[i]];
  const double scale = (kdiag.sum() > 0.0 && pin_diag > 0.0) ? kdiag.sum() / pin_diag : 1.0;

  std::vector<long long> active;
  for (long long i = 0; i < n; ++i) {
    const double pin =
        (comp[i] >= 0 && comp_mass[comp[i]] > 0.0) ? scale * m[i] * m[i] / comp_mass[comp[i]] : 0.0;
    if (comp[i] >= 0 && kdiag[i] + pin > 0.0) active.push_back(i);
  }
  const long long na = static_cast<long long>(active.size());

  // y = (K + scale * sum_c m_c m_c^T / M_c) x on the full index space.
  auto apply_augmented = [&](const Vec& x) -> Vec {
    Vec y = op.apply_stiffness(x);
    std::vector<double> proj(static_cast<std::size_t>(nc), 0.0);
    for (long long i = 0; i < n; ++i)
      if (comp[i] >= 0) proj[comp[i]] += m[i] * x[i];
    for (long long i = 0; i < n; ++i) {
      if (comp[i] < 0 || comp_mass[comp[i]] == 0.0) continue;
      y[i] += scale * m[i] * proj[comp[i]] / comp_mass[comp[i]];
    }
    return y;
  };

  Vec diag_full = kdiag;
  for (long long i = 0; i < n; ++i)
    if (comp[i] >= 0 && comp_mass[comp[i]] > 0.0)
      diag_full[i] += scale * m[i] * m[i] / comp_mass[comp[i]];

  const bool dense =
      options.method == PoissonMethod::dense ||
      (options.method == PoissonMethod::automatic && na <= options.dense_threshold);
  Vec psi = Vec::Zero(n);
  if (dense) {
    const Mat K = op.dense_stiffness();
    Mat A(na, na);
    Vec rhs_a(na);
    Vec sc(na);
    for (long long a = 0; a < na; ++a) sc[a] = 1.0 / std::sqrt(diag_full[active[a]]);
    for (long long a = 0; a < na; ++a) {
      const long long i = active[a];
      rhs_a[a] = sc[a] * b[i];
      for (long long c = 0; c < na; ++c) {
        const long long j = active[c];
        double v = K(i, j);
        if (comp[i] == comp[j]) v += scale * m[i] * m[j] / comp_mass[comp[i]];
        A(a, c) = sc[a] * v * sc[c];
      }
    }
    Eigen::LLT<Mat> llt(A);
    if (llt.info() != Eigen::Success) {
      Eigen::LDLT<Mat> ldlt(A);
      throw SolverError("dense factorization of the Poisson system failed", 1.0 / ldlt.rcond());
    }
    const Vec y = llt.solve(rhs_a);
    for (long long a = 0; a < na; ++a) psi[active[a]] = sc[a] * y[a];
    result.method = "dense";
    result.iterations = 0;
  } else {
    const long long max_it =
        options.max_iterations > 0 ? options.max_iterations : std::max<long long>(1000, 20 * na);
    Vec inv_diag = Vec::Zero(n);
    for (long long i : active) inv_diag[i] = 1.0 / diag_full[i];
    Vec x = Vec::Zero(n);
    Vec r = b;
    Vec z = inv_diag.cwiseProduct(r);
    Vec p = z;
    double rz = r.dot(z);
    const double bnorm = b.norm();
    long long it = 0;
    double rel = r.norm() / bnorm;
    while (rel > options.tolerance && it < max_it) {
      const Vec ap = apply_augmented(p);
      const double pap = p.dot(ap);
      if (!(pap > 0.0)) break;
      const double alpha = rz / pap;
      x += alpha * p;
      r -= alpha * ap;
      z = inv_diag.cwiseProduct(r);
      const double rz_new = r.dot(z);
      p = z + (rz_new / rz) * p;
      rz = rz_new;
      ++it;
      rel = r.norm() / bnorm;
    }
    if (!(rel <= std::max(options.tolerance, 1e-8))) {
      double dmax = 0.0;
      double dmin = kInf;
      for (long long i : active) {
        dmax = std::max(dmax, diag_full[i]);
        dmin = std::min(dmin, diag_full[i]);
      }
      std::ostringstream os;
      os << "conjugate gradient stalled at relative residual " << rel << " after " << it
         << " iterations";
      throw SolverError(os.str(), dmax / dmin);
    }
    psi = x;
    result.method = "cg";
    result.iterations = it;
  }

  // Remove rounding drift from the zero-mean constraint.
  std::vector<double> mean(static_cast<std::size_t>(nc), 0.0);
  for (long long i = 0; i < n; ++i)
    if (comp[i] >= 0) mean[comp[i]] += m[i] * psi[i];
  for (long long i = 0; i < n; ++i)
    if (comp[i] >= 0 && comp_mass[comp[i]] > 0.0) psi[i] -= mean[comp[i]] / comp_mass[comp[i]];

  const Vec residual = op.apply_stiffness(psi) - b;
  result.relative_residual = residual.norm() / b.norm();
  result.energy = op.energy(psi);
  result.psi.values = std::move(psi);
  return result;
}

PoissonResult solve_poisson(const GridField& nu, const MatrixField& D, const GridField& rhs,
                            const PoissonOptions& options) {
  return solve_poisson(WeightedOperator(nu, D), rhs, options);
}

nlohmann::json RateReport::to_json() const {
  return {{"variant", variant},
          {"symmetric", symmetric},
          {"antisymmetric", number_or_null(antisymmetric)},
          {"total", number_or_null(total)},
          {"antisymmetric_finite", antisymmetric_finite},
          {"solver", solver},
          {"iterations", iterations},
          {"compatibility", compatibility}};
}

RateReport total_rate(const GridField& nu, const DynamicsSpec& spec, const PerturbationSpec& v,
                      const PoissonOptions& options) {
  const GridDomain& grid = *nu.domain;
  if (grid.dims() != spec.n())
    throw UsageError("grid dimension must equal the state dimension of the dynamics");
  MatrixField D = [&spec](const Vec& z) { return spec.D(z); };
  const Mat grad = perturbation_gradient(grid, v);

  RateReport report;
  report.variant = spec.name();
  report.symmetric = symmetric_rate(nu, grad, D);
  const AntisymmetricRhs rhs = rhs_from_gradient(nu, spec, grad, options.compatibility_tolerance);
  report.compatibility = rhs.nu_mean;
  if (rhs.field.values.cwiseAbs().maxCoeff() == 0.0) {
    report.solver = "none";
  } else {
    try {
      const PoissonResult sol = solve_poisson(WeightedOperator(nu, D), rhs.field, options);
      report.antisymmetric = 0.25 * sol.energy;
      report.solver = sol.method;
      report.iterations = sol.iterations;
    } catch (const CompatibilityError& e) {
      report.antisymmetric = kInf;
      report.antisymmetric_finite = false;
      report.solver = "incompatible";
      report.compatibility = e.discrepancy();
    }
  }
  report.total = report.symmetric + report.antisymmetric;
  return report;
}

RateReport total_rate(std::shared_ptr<const GridDomain> grid, const DynamicsSpec& spec,
                      const PerturbationSpec& v, const PoissonOptions& options) {
  auto H = [&spec](const Vec& z) { return spec.H(z); };
  const MeasurePair m = measure_from_perturbation(std::move(grid), H, v);
  return total_rate(m.nu, spec, v, options);
}

double marginal_overdamped_rate(const GridField& nu, const AugLayout& layout,
                                const PotentialModel& potential) {
  if (layout.theta_offset != 0) throw UsageError("theta must occupy the leading grid axes");
  const GridDomain& full = *nu.domain;
  const int d = layout.d;
  if (d > full.dims()) throw UsageError("layout does not fit the grid");
  auto sub = std::make_shared<const GridDomain>(full.leading(d));
  const long long ns = sub->size();
  Vec marginal = Vec::Zero(ns);
  for (long long i = 0; i < full.size(); ++i) {
    const long long j = i % ns;
    marginal[j] += full.weight(i) / sub->weight(j) * nu.values[i];
  }
  marginal /= sub->weights().dot(marginal);
  Vec v(ns);
  for (long long j = 0; j < ns; ++j) {
    if (!(marginal[j] > 0.0)) throw NumericError("theta-marginal vanishes on the grid");
    v[j] = std::log(marginal[j]) + potential.value(sub->coordinates(j));
  }
  double total = 0.0;
  for (int k = 0; k < d; ++k) {
    const Vec g = grid_derivative(*sub, v, k);
    total += (sub->weights().array() * marginal.array() * g.array().square()).sum();
  }
  return 0.25 * total;
}

// ---------------------------------------------------------------------------
// Comparisons

nlohmann::json ComparisonReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json row{{"name", e.name},
                       {"rate_variant", number_or_null(e.rate_variant)},
                       {"rate_baseline", e.rate_baseline},
                       {"margin", number_or_null(e.margin)},
                       {"symmetric_variant", e.symmetric_variant},
                       {"antisymmetric_variant", number_or_null(e.antisymmetric_variant)}};
    if (e.required_margin) row["required_margin"] = *e.required_margin;
    if (e.marginal_rate) row["marginal_rate_overdamped"] = *e.marginal_rate;
    if (e.pass) {
      row["pass"] = *e.pass;
    } else {
      row["pass"] = "hypothesis not met";
    }
    rows.push_back(std::move(row));
  }
  return {{"variant", to_string(variant)},
          {"baseline", baseline},
          {"hypothesis", hypothesis},
          {"hypothesis_met", hypothesis_met},
          {"status", status},
          {"epsilon_solver", epsilon_solver},
          {"grid", grid},
          {"entries", rows}};
}

std::string ComparisonReport::to_csv() const {
  std::ostringstream os;
  os << "name,rate_variant,rate_baseline,margin,symmetric_variant,antisymmetric_variant,pass\n";
  for (const auto& e : entries) {
    os << e.name << "," << csv_number(e.rate_variant) << "," << csv_number(e.rate_baseline)
       << "," << csv_number(e.margin) << "," << csv_number(e.symmetric_variant) << ","
       << csv_number(e.antisymmetric_variant) << "," << pass_text(e.pass) << "\n";
  }
  return os.str();
}

ComparisonReport compare_rates(const std::vector<PerturbationSpec>& family, Variant variant,
                               const PotentialModel& potential, const VariantParams& params,
                               std::shared_ptr<const GridDomain> grid,
                               const std::optional<MirrorMetric>& mirror,
                               const ComparisonOptions& options) {
  const DynamicsSpec spec = build_variant_spec(variant, potential, params, mirror);
  if (grid->dims() != spec.n()) {
    std::ostringstream os;
    os << "comparison grid has " << grid->dims() << " axes but the " << to_string(variant)
       << " state has " << spec.n() << " coordinates";
    throw UsageError(os.str());
  }

  ComparisonReport report;
  report.variant = variant;
  report.epsilon_solver = options.epsilon_solver;
  report.grid = grid->to_json();

  std::optional<DynamicsSpec> baseline;
  bool ph = false;
  double boost = 0.0;  // lower bound coefficient on the r-block Dirichlet form
  switch (variant) {
    case Variant::hfhr: {
      baseline = build_expanded_overdamped_spec(potential, 1);
      report.baseline = "I_e2o";
      const double a = params.require("alpha", variant);
      const double b = params.require("beta", variant);
      report.hypothesis = "min(alpha, beta) >= 1";
      report.hypothesis_met = std::min(a, b) >= 1.0;
      break;
    }
    case Variant::underdamped: {
      baseline = build_expanded_overdamped_spec(potential, 1);
      report.baseline = "I_e2o";
      const double g = params.require("gamma", variant);
      report.hypothesis = "gamma >= 1 and v = v(r)";
      report.hypothesis_met = g >= 1.0;
      ph = true;
      boost = g - 1.0;
      break;
    }
    case Variant::highorder: {
      baseline = build_expanded_overdamped_spec(potential, 2);
      report.baseline = "I_e3o";
      const double a = params.require("alpha", variant);
      report.hypothesis = "alpha >= 1 and v = v(r)";
      report.hypothesis_met = a >= 1.0;
      ph = true;
      boost = a - 1.0;
      break;
    }
    case Variant::mirror: {
      baseline = build_variant_spec(Variant::overdamped, potential, {});
      report.baseline = "I_o";
      report.hypothesis = "metric - I positive semidefinite on the grid";
      bool ok = true;
      for (long long i = 0; i < grid->size() && ok; ++i) {
        const Mat diff = spec.D(grid->coordinates(i)) - Mat::Identity(spec.n(), spec.n());
        Eigen::SelfAdjointEigenSolver<Mat> eig(diff, Eigen::EigenvaluesOnly);
        ok = eig.eigenvalues().minCoeff() >= -1e-12;
      }
      report.hypothesis_met = ok;
      break;
    }
    case Variant::nonreversible:
    case Variant::overdamped: {
      baseline = build_variant_spec(Variant::overdamped, potential, {});
      report.baseline = "I_o";
      report.hypothesis = "same diffusion matrix as the baseline";
      report.hypothesis_met = true;
      break;
    }
    case Variant::custom:
      throw UsageError("comparisons are defined for the built-in variants");
  }

  if (ph) {
    const std::vector<bool> r_mask = block_mask(spec.layout(), "r");
    for (const auto& v : family) {
      if (v.depends_on.empty())
        throw UsageError("perturbation '" + v.name + "' must declare a mask inside the r block");
      for (int k = 0; k < spec.n(); ++k)
        if (v.depends(k) && !r_mask[static_cast<std::size_t>(k)])
          throw UsageError("perturbation '" + v.name + "' is outside the P^H class");
    }
  }

  auto H = [&spec](const Vec& z) { return spec.H(z); };
  std::vector<ComparisonEntry> entries(family.size());
  std::vector<std::exception_ptr> errors(family.size());
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= family.size()) return;
      try {
        const PerturbationSpec& v = family[idx];
        const MeasurePair mp = measure_from_perturbation(grid, H, v);
        const RateReport rv = total_rate(mp.nu, spec, v, options.poisson);
        const RateReport rb = total_rate(mp.nu, *baseline, v, options.poisson);
        ComparisonEntry e;
        e.name = v.name.empty() ? "v" + std::to_string(idx) : v.name;
        e.rate_variant = rv.total;
        e.rate_baseline = rb.total;
        e.margin = rv.total - rb.total;
        e.symmetric_variant = rv.symmetric;
        e.antisymmetric_variant = rv.antisymmetric;
        bool ok = e.margin >= -options.epsilon_solver;
        if (ph) {
          const Mat g = perturbation_gradient(*grid, v);
          double dirichlet_r = 0.0;
          const int r0 = spec.layout().r_offset;
          for (long long i = 0; i < grid->size(); ++i) {
            const double w = grid->weight(i) * mp.nu.values[i];
            dirichlet_r += w * g.row(i).segment(r0, spec.layout().d).squaredNorm();
          }
          e.required_margin = 0.25 * boost * dirichlet_r;
          ok = e.margin >= *e.required_margin - options.epsilon_solver;
        }
        if (variant == Variant::hfhr) {
          e.marginal_rate = marginal_overdamped_rate(mp.nu, spec.layout(), potential);
          ok = ok && rv.total >= *e.marginal_rate - options.epsilon_solver;
        }
        if (report.hypothesis_met) e.pass = ok;
        entries[idx] = std::move(e);
      } catch (...) {
        errors[idx] = std::current_exception();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(options.threads, static_cast<int>(family.size())));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);

  report.entries = std::move(entries);
  if (!report.hypothesis_met) {
    report.status = "hypothesis not met";
  } else {
    bool all = true;
    for (const auto& e : report.entries) all = all && e.pass.value_or(false);
    report.status = all ? "pass" : "fail";
  }
  return report;
}

std::vector<PerturbationSpec> random_perturbation_family(int count, const AugLayout& layout,
                                                         bool ph_class,
                                                         unsigned long long seed) {
  if (count < 0) throw UsageError("family size must be nonnegative");
  const int n = layout.n();
  std::vector<bool> mask;
  if (ph_class) mask = block_mask(layout, "r");
  std::vector<PerturbationSpec> out;
  for (int k = 0; k < count; ++k) {
    CounterRng rng(seed, static_cast<std::uint64_t>(k));
    constexpr int kModes = 3;
    Mat freq = Mat::Zero(kModes, n);
    Vec amp(kModes);
    Vec phase = Vec::Zero(kModes);
    Vec tilt = Vec::Zero(n);
    for (int j = 0; j < kModes; ++j) {
      amp[j] = 0.5 * (2.0 * rng.uniform() - 1.0);
      for (int i = 0; i < n; ++i) {
        const bool active = !ph_class || mask[static_cast<std::size_t>(i)];
        if (active) freq(j, i) = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.3 + 1.2 * rng.uniform());
      }
      if (!ph_class) phase[j] = 2.0 * std::numbers::pi * rng.uniform();
    }
    if (!ph_class)
      for (int i = 0; i < n; ++i) tilt[i] = 0.5 * (2.0 * rng.uniform() - 1.0);
    // Quadratic coefficient in [-0.1, 0.05]: ν stays well inside the box.
    const double quad = -0.1 + 0.15 * rng.uniform();
    Vec quad_w = Vec::Zero(n);
    for (int i = 0; i < n; ++i)
      if (!ph_class || mask[static_cast<std::size_t>(i)]) quad_w[i] = quad;

    PerturbationSpec p;
    p.name = (ph_class ? "ph" : "v") + std::to_string(k);
    p.v = [freq, amp, phase, tilt, quad_w](const Vec& z) {
      double value = tilt.dot(z) + (quad_w.array() * z.array().square()).sum();
      for (Eigen::Index j = 0; j < freq.rows(); ++j)
        value += amp[j] * std::cos(freq.row(j).dot(z) + phase[j]);
      return value;
    };
    p.gradient = [freq, amp, phase, tilt, quad_w](const Vec& z) -> Vec {
      Vec g = tilt + 2.0 * quad_w.cwiseProduct(z);
      for (Eigen::Index j = 0; j < freq.rows(); ++j)
        g -= amp[j] * std::sin(freq.row(j).dot(z) + phase[j]) * freq.row(j).transpose();
      return g;
    };
    p.depends_on = mask;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace langevin
