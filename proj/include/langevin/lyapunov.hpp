#pragma once

#include "langevin/dynamics.hpp"
#include "langevin/grid.hpp"
#include "langevin/potentials.hpp"
#include "langevin/types.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <string>

namespace langevin {

enum class LyapunovKind { gibbs_power, hfhr, highorder };

std::string to_string(LyapunovKind kind);
LyapunovKind parse_lyapunov_kind(const std::string& name);

struct LyapunovParams {
  std::map<std::string, double> values;
  // When false, the smallness constraints are evaluated and recorded but do
  // not reject the parameters (negative controls).
  bool enforce_admissibility = true;
  // Grid on which the high-order exponent is shifted to have minimum 1.
  std::optional<GridDomain> shift_grid;

  double get_or(const std::string& key, double fallback) const;
  double require(const std::string& key) const;
};

/// W = exp(phi^delta). phi comes with an analytic gradient and Hessian.
struct LyapunovSpec {
  LyapunovKind kind = LyapunovKind::gibbs_power;
  int n = 0;
  double delta = 1.0;
  double growth_exponent = 2.0;  // k in the |theta|^{2(k-1)} bound term
  ScalarField phi;
  VectorField phi_grad;
  MatrixField phi_hessian;
  std::map<std::string, double> resolved;   // every constant actually used
  std::vector<std::string> violations;      // admissibility constraints that fail
  AugLayout layout;

  bool admissible() const { return violations.empty(); }
  nlohmann::json to_json() const;
};

// Quintic smoothstep 6t^5 - 15t^4 + 10t^3 clamped to [0, 1], with derivatives.
double smoothstep(double t);
double smoothstep_slope(double t);
double smoothstep_curvature(double t);

// sup_t |d/dt (t^beta chi(t))| for the radial cutoff profile, by dense sampling.
double cutoff_slope_bound(double beta);

/// gibbs-power: phi = eta U (params "eta").
/// hfhr: phi = a H + b theta.r with H = U + |r|^2 / 2 (params "alpha",
///   "beta", "a", optionally "b", "c1", "M").
/// highorder: phi = h H + a kappa J(theta).p + a p.r - min phi + 1 with
///   J = theta |theta|^{k-2} chi (params "alpha", "gamma", "h", "a", "delta",
///   "k", "m").
LyapunovSpec build_lyapunov(LyapunovKind kind, const PotentialModel& potential,
                            const LyapunovParams& params);

// -(L W)/W at z, from exp(-g) L exp(g) = f.grad g + D:hess g + grad g.D grad g
// with g = phi^delta and the analytic derivatives of phi.
double neg_generator_ratio(const DynamicsSpec& spec, const LyapunovSpec& lyap, const Vec& z);
// Same quantity with the derivatives of g taken by five-point differences.
double neg_generator_ratio_fd(const DynamicsSpec& spec, const LyapunovSpec& lyap,
                              const Vec& z, double fd_step = kDefaultFdStep);

// eta ((1 - eta) |grad U|^2 - Laplacian U), the ratio for overdamped
// dynamics with W = exp(eta U).
double gibbs_power_closed_form(const PotentialModel& potential, double eta, const Vec& theta);

struct BoundConstants {
  double A = 0.0;
  double B = 0.0;
  double C = 0.0;
  double Dc = 0.0;
};

struct BoundReport {
  BoundConstants constants;
  bool searched = false;
  double min_residual = 0.0;
  Vec argmin;
  bool pass = false;
  nlohmann::json grid_meta;
  std::string note;

  nlohmann::json to_json() const;
};

/// Checks ratio(z) >= A |theta|^{2(k-1)} + B |aux1|^2 + C |aux2|^2 - Dc at
/// every node of the grid, where aux1 and aux2 are the first and second
/// auxiliary blocks. Without constants, Dc is twice the largest deficit of the
/// ratio on the inner half of the box and the largest feasible (A, B, C) is
/// searched by uniform scaling followed by coordinate ascent. A passing
/// report is a sufficient-condition check on the box only.
BoundReport verify_quadratic_bound(const DynamicsSpec& spec, const LyapunovSpec& lyap,
                                   const GridDomain& grid,
                                   const std::optional<BoundConstants>& constants = std::nullopt,
                                   int threads = 1);

}  // namespace langevin
