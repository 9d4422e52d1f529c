#pragma once

#include "langevin/potentials.hpp"
#include "langevin/types.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace langevin {

enum class Variant {
  overdamped,
  underdamped,
  nonreversible,
  mirror,
  highorder,
  hfhr,
  custom
};

std::string to_string(Variant v);
// Accepts the names produced by to_string plus "non-reversible", "high-order".
Variant parse_variant(const std::string& name);

// Which coordinates of z hold the model parameter theta and the auxiliary
// blocks. Every block has width d; absent blocks have offset -1.
struct AugLayout {
  int d = 0;
  int theta_offset = 0;
  int p_offset = -1;
  int r_offset = -1;

  int blocks() const { return 1 + (p_offset >= 0) + (r_offset >= 0); }
  int n() const { return d * blocks(); }
  // Names in coordinate order, e.g. {"theta", "r"}.
  std::vector<std::string> block_names() const;
};

struct VariantParams {
  std::map<std::string, double> values;
  std::optional<Mat> J;  // anti-symmetric matrix for the non-reversible variant

  double require(const std::string& key, Variant variant) const;
  double get_or(const std::string& key, double fallback) const;
};

// Anti-symmetric J = A - A^T built from a dense seed A.
struct AntisymmetricMatrixSeed {
  Mat base;
  Mat derived() const { return base - base.transpose(); }
};

// Seed with standard normal entries, reproducible from (seed, dim).
AntisymmetricMatrixSeed random_antisymmetric_seed(int dim, unsigned long long seed);

enum class DiffusionKind { constant, state_diagonal, state_dense };

/// The (n, D, Q, H, Gamma) bundle of a generalized Langevin SDE
///   dz = f(z) dt + sqrt(2 D(z)) dW,   f = -(D + Q) grad H + Gamma,
/// where Gamma_i = sum_j d_j (D_ij + Q_ij). Immutable; all evaluations are
/// pure and may run concurrently.
class DynamicsSpec {
 public:
  struct Parts {
    Variant variant = Variant::custom;
    std::string name;
    AugLayout layout;
    VariantParams params;
    MatrixField diffusion;         // D(z)
    MatrixField curl;              // Q(z)
    ScalarField hamiltonian;       // H(z)
    VectorField hamiltonian_grad;  // grad H(z)
    // Analytic Gamma; finite differences of D + Q are used when absent.
    std::optional<VectorField> gamma;
    // Closed-form runtime drift replacing the generic assembly (mirror).
    std::optional<VectorField> drift_override;
    // Closed-form anti-symmetric drift -Q grad H + div Q, when known.
    std::optional<VectorField> antisymmetric_override;
    // Hand-coded drift of the variant's own SDE, used as a second route.
    std::optional<VectorField> explicit_drift;
    DiffusionKind diffusion_kind = DiffusionKind::state_dense;
    bool curl_constant = false;
    // For state_diagonal: diag D(z) without forming the matrix.
    std::optional<VectorField> diffusion_diagonal;
  };

  explicit DynamicsSpec(Parts parts);

  Variant variant() const { return parts_.variant; }
  const std::string& name() const { return parts_.name; }
  int n() const { return parts_.layout.n(); }
  const AugLayout& layout() const { return parts_.layout; }
  const VariantParams& params() const { return parts_.params; }
  DiffusionKind diffusion_kind() const { return parts_.diffusion_kind; }
  bool has_analytic_gamma() const { return parts_.gamma.has_value(); }
  bool has_explicit_drift() const { return parts_.explicit_drift.has_value(); }
  bool has_drift_override() const { return parts_.drift_override.has_value(); }

  Mat D(const Vec& z) const;
  Mat Q(const Vec& z) const;
  double H(const Vec& z) const;
  Vec grad_H(const Vec& z) const;
  Vec diffusion_diagonal(const Vec& z) const;
  // Constant D + Q when both are state independent (precomputed).
  const std::optional<Mat>& constant_drift_matrix() const { return constant_dq_; }
  const std::optional<Mat>& constant_diffusion() const { return constant_d_; }

  const Parts& parts() const { return parts_; }

  // Q anti-symmetric and D symmetric PSD at z; throws UsageError otherwise.
  void check_invariants(const Vec& z) const;

  // Copy of this spec whose runtime drift is replaced (negative controls).
  DynamicsSpec with_drift(VectorField drift, std::string name) const;

 private:
  void check_size(const Vec& z) const;

  Parts parts_;
  std::optional<Mat> constant_d_;
  std::optional<Mat> constant_dq_;
};

inline constexpr double kDefaultFdStep = 1e-3;

DynamicsSpec build_variant_spec(Variant kind, const PotentialModel& potential,
                                const VariantParams& params,
                                const std::optional<MirrorMetric>& mirror = std::nullopt);

// Overdamped dynamics on theta lifted with independent unit OU blocks:
// D = I, Q = 0, H = U(theta) + sum of |aux|^2 / 2. aux_blocks is 1 (theta, r)
// or 2 (theta, p, r).
DynamicsSpec build_expanded_overdamped_spec(const PotentialModel& potential,
                                            int aux_blocks);

// Custom spec from user matrices; Q is probed for anti-symmetry and D for
// symmetry at construction.
DynamicsSpec make_custom_spec(int n, MatrixField diffusion, MatrixField curl,
                              ScalarField hamiltonian, VectorField hamiltonian_grad,
                              std::optional<VectorField> gamma = std::nullopt,
                              std::string name = "custom");

Vec gamma_correction(const DynamicsSpec& spec, const Vec& z,
                     double fd_step = kDefaultFdStep);

// Runtime drift f(z). Throws NumericError naming the first non-finite
// coordinate.
Vec drift(const DynamicsSpec& spec, const Vec& z);

// -(D + Q) grad H + Gamma, always through the matrices (mirror included).
Vec assembled_drift(const DynamicsSpec& spec, const Vec& z,
                    double fd_step = kDefaultFdStep);

// Drift of the variant's own SDE; UsageError for custom specs without one.
Vec explicit_drift(const DynamicsSpec& spec, const Vec& z);

// b_A(z) = -Q grad H + div Q, so that the anti-symmetric part of the
// generator is L_A = b_A . grad.
Vec antisymmetric_drift(const DynamicsSpec& spec, const Vec& z,
                        double fd_step = kDefaultFdStep);

// sum_i d_i [f_i rho] - sum_ij d_ij [D_ij rho] with rho = exp(-H + H(z)).
double stationarity_residual(const DynamicsSpec& spec, const Vec& z,
                             double fd_step = kDefaultFdStep);

// sum_ij d_ij [Q_ij rho] with rho = exp(-H + H(z)).
double curl_condition_residual(const DynamicsSpec& spec, const Vec& z,
                               double fd_step = kDefaultFdStep);

// Per-coordinate step fd_step * (1 + |z_i|).
Vec fd_steps(const Vec& z, double fd_step);

}  // namespace langevin
