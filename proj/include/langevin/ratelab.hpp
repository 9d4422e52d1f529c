#pragma once

#include "langevin/dynamics.hpp"
#include "langevin/grid.hpp"
#include "langevin/potentials.hpp"
#include "langevin/types.hpp"

#include <json.hpp>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace langevin {

/// A perturbation v defining d nu = e^v d mu. The mask lists the
/// coordinates v may depend on (empty means all of them); the gradient, when
/// supplied, is used instead of finite differences.
struct PerturbationSpec {
  std::string name;
  ScalarField v;
  std::optional<VectorField> gradient;
  std::vector<bool> depends_on;

  bool depends(int coord) const {
    return depends_on.empty() || depends_on[static_cast<std::size_t>(coord)];
  }
  // Throws UsageError when v changes along a masked-out coordinate at a
  // sample of grid nodes.
  void spot_check(const GridDomain& grid) const;
};

PerturbationSpec constant_perturbation(double c);
// v(z) = m z_k - m^2 / 2, the Gaussian shift along coordinate k.
PerturbationSpec gaussian_shift(int n, int coord, double m);
// Mask of the coordinates belonging to one block ("theta", "p" or "r").
std::vector<bool> block_mask(const AugLayout& layout, const std::string& block);

inline constexpr double kBoundaryMassTolerance = 1e-6;

struct MeasurePair {
  GridField mu;
  GridField nu;
};

// Fraction of the trapezoid mass carried by the outermost layer of nodes.
double boundary_mass_fraction(const GridField& density);

/// mu ~ e^{-H} and nu ~ e^{-H + v} on the grid, each normalized to unit
/// trapezoid mass. Throws DomainTooSmallError when either measure keeps a
/// boundary mass fraction above `tolerance`.
MeasurePair measure_from_perturbation(std::shared_ptr<const GridDomain> grid,
                                      const ScalarField& H, const PerturbationSpec& v,
                                      double tolerance = kBoundaryMassTolerance);

// Node-by-axis gradients: analytic when available, else fourth-order
// differences of v itself.
Mat perturbation_gradient(const GridDomain& grid, const PerturbationSpec& v);
// Node-by-axis gradients of a sampled field by second-order differences.
Mat field_gradient(const GridField& f);

// 1/4 sum_i w_i nu_i grad_i . D(x_i) grad_i
double symmetric_rate(const GridField& nu, const Mat& grad_v, const MatrixField& D);
double symmetric_rate(const GridField& nu, const GridField& v, const MatrixField& D);
double symmetric_rate(const GridField& nu, const PerturbationSpec& v, const MatrixField& D);

struct AntisymmetricRhs {
  GridField field;  // L_A v at the nodes
  double nu_mean;   // integral of L_A v against nu
};

inline constexpr double kCompatibilityTolerance = 1e-6;

// Nodewise b_A . grad v. Throws CompatibilityError when |nu_mean| exceeds
// `tolerance`.
AntisymmetricRhs antisymmetric_rhs(const GridField& nu, const DynamicsSpec& spec,
                                   const PerturbationSpec& v,
                                   double tolerance = kCompatibilityTolerance);
AntisymmetricRhs antisymmetric_rhs(const GridField& nu, const DynamicsSpec& spec,
                                   const GridField& v,
                                   double tolerance = kCompatibilityTolerance);

/// Conservative discretization of the nu-weighted operator
///   A psi = -(1/nu) div(nu D grad psi)
/// as M^{-1} K with M = diag(w_i nu_i) and K a symmetric face stiffness.
/// D must be diagonal. Face conductances come from cumulative sums of
/// m_j (D_kk s_k - d_k D_kk), s = -d log nu, along each grid line, which
/// makes the scheme exact on coordinate-linear functions.
class WeightedOperator {
 public:
  WeightedOperator(const GridField& nu, const MatrixField& D);

  long long size() const { return masses_.size(); }
  const GridDomain& grid() const { return *grid_; }
  const Vec& masses() const { return masses_; }
  const Vec& conductances(int axis) const { return cond_[static_cast<std::size_t>(axis)]; }

  Vec apply_stiffness(const Vec& psi) const;  // K psi
  Vec apply(const Vec& psi) const;            // M^{-1} K psi
  double energy(const Vec& psi) const;        // psi^T K psi
  Vec stiffness_diagonal() const;
  Mat dense_stiffness() const;

  // Connected components of the conductance graph; -1 marks isolated nodes
  // with zero mass, which are left out of solves.
  const std::vector<int>& components() const { return component_; }
  int component_count() const { return components_; }

 private:
  std::shared_ptr<const GridDomain> grid_;
  Vec masses_;
  std::vector<Vec> cond_;
  std::vector<int> component_;
  int components_ = 0;
};

enum class PoissonMethod { automatic, cg, dense };

struct PoissonOptions {
  PoissonMethod method = PoissonMethod::automatic;
  long long dense_threshold = 1500;
  double tolerance = 1e-12;       // relative residual for CG
  long long max_iterations = 0;   // 0: 20 times the unknown count
  double compatibility_tolerance = kCompatibilityTolerance;
};

struct PoissonResult {
  GridField psi;
  std::string method;
  long long iterations = 0;
  double relative_residual = 0.0;
  double energy = 0.0;  // psi^T K psi, i.e. the integral of grad psi . D grad psi
};

/// Solves A psi = rhs with one zero-nu-mean constraint per connected
/// component, imposed through a scaled rank-one augmentation per component.
/// Throws CompatibilityError when the rhs has nonzero nu-mean on some
/// component and SolverError when the system cannot be solved.
PoissonResult solve_poisson(const WeightedOperator& op, const GridField& rhs,
                            const PoissonOptions& options = {});
PoissonResult solve_poisson(const GridField& nu, const MatrixField& D, const GridField& rhs,
                            const PoissonOptions& options = {});

struct RateReport {
  std::string variant;
  double symmetric = 0.0;
  double antisymmetric = 0.0;  // +inf when the Poisson problem has no solution
  double total = 0.0;
  bool antisymmetric_finite = true;
  std::string solver;
  long long iterations = 0;
  double compatibility = 0.0;

  nlohmann::json to_json() const;
};

RateReport total_rate(std::shared_ptr<const GridDomain> grid, const DynamicsSpec& spec,
                      const PerturbationSpec& v, const PoissonOptions& options = {});
// Same, reusing a measure already built on the grid.
RateReport total_rate(const GridField& nu, const DynamicsSpec& spec,
                      const PerturbationSpec& v, const PoissonOptions& options = {});

// I_o of the theta-marginal of nu, for grids whose leading axes hold theta.
double marginal_overdamped_rate(const GridField& nu, const AugLayout& layout,
                                const PotentialModel& potential);

struct ComparisonEntry {
  std::string name;
  double rate_variant = 0.0;
  double rate_baseline = 0.0;
  double margin = 0.0;
  double symmetric_variant = 0.0;
  double antisymmetric_variant = 0.0;
  std::optional<double> required_margin;  // lower bound from the proof, when known
  std::optional<double> marginal_rate;     // I_o of the theta-marginal (HFHR)
  std::optional<bool> pass;
};

struct ComparisonOptions {
  double epsilon_solver = 1e-4;
  PoissonOptions poisson;
  int threads = 1;
};

struct ComparisonReport {
  Variant variant = Variant::overdamped;
  std::string baseline;
  std::string hypothesis;
  bool hypothesis_met = true;
  std::string status;  // "pass", "fail" or "hypothesis not met"
  double epsilon_solver = 1e-4;
  nlohmann::json grid;
  std::vector<ComparisonEntry> entries;

  bool all_pass() const { return status == "pass"; }
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

/// Evaluates the variant rate and its overdamped baseline (I_o, or the
/// expanded lift I_e2o / I_e3o) for each perturbation, on a grid with one
/// axis per state coordinate.
ComparisonReport compare_rates(const std::vector<PerturbationSpec>& family, Variant variant,
                               const PotentialModel& potential, const VariantParams& params,
                               std::shared_ptr<const GridDomain> grid,
                               const std::optional<MirrorMetric>& mirror = std::nullopt,
                               const ComparisonOptions& options = {});

/// Smooth random perturbations (cosine modes plus a mild quadratic and, off
/// the P^H class, a linear tilt) with analytic gradients. With `ph_class` v
/// depends only on the r block and is even in r.
std::vector<PerturbationSpec> random_perturbation_family(int count, const AugLayout& layout,
                                                         bool ph_class,
                                                         unsigned long long seed);

}  // namespace langevin
