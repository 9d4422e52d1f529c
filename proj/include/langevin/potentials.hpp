#pragma once

#include "langevin/dataset.hpp"
#include "langevin/types.hpp"

#include <optional>
#include <string>

namespace langevin {

struct Evaluation {
  double value;
  Vec gradient;
};

/// Target potential U on R^dim with a hand-coded gradient and, optionally, a
/// Hessian. Immutable after construction; safe to evaluate concurrently.
class PotentialModel {
 public:
  PotentialModel(std::string name, int dim, ScalarField value,
                 VectorField gradient,
                 std::optional<MatrixField> hessian = std::nullopt);

  const std::string& name() const { return name_; }
  int dim() const { return dim_; }
  bool has_hessian() const { return hessian_.has_value(); }

  double value(const Vec& x) const;
  Vec gradient(const Vec& x) const;
  Mat hessian(const Vec& x) const;
  // Trace of the Hessian; falls back to central differences of the gradient.
  double laplacian(const Vec& x) const;

 private:
  void check_dim(const Vec& x) const;

  std::string name_;
  int dim_;
  ScalarField value_;
  VectorField gradient_;
  std::optional<MatrixField> hessian_;
};

Evaluation evaluate(const PotentialModel& model, const Vec& point);

// U(x) = |x|^2 / 2
PotentialModel make_gaussian(int dim);
// U(x) = sum_i (x_i^2 / 2) / variance_i, a diagonal Gaussian.
PotentialModel make_diagonal_gaussian(const Vec& variances);
// U(x) = sum_i (x_i^4 / 4 - x_i^2 / 2)
PotentialModel make_double_well(int dim);

/// Bayesian logistic regression posterior potential
///   U(x) = sum_j softplus(-s_j x.X_j) + |x|^2 / (2 lambda),  s_j = 2 y_j - 1.
/// All feature columns (including an appended intercept) are treated alike.
PotentialModel make_blr_potential(const Dataset& data, double lambda);

// log(1 + exp(t)) without overflow.
double softplus(double t);
double sigmoid(double t);

/// Diagonal mirror metric D(x) = [grad^2 phi(x)]^{-1} for a separable convex
/// phi, together with its row divergence Gamma_i = sum_j d_j D_ij.
class MirrorMetric {
 public:
  // Per-coordinate profiles: metric(t) and its derivative metric_slope(t)
  // describe D; phi_second(t) and phi_third(t) describe phi itself. Both
  // views are kept so the divergence can be checked against the curvature
  // correction written in terms of phi.
  struct Profile {
    std::function<double(double)> metric;
    std::function<double(double)> metric_slope;
    std::function<double(double)> phi_second;
    std::function<double(double)> phi_third;
  };

  MirrorMetric(std::string name, int dim, double eps, Profile profile);

  const std::string& name() const { return name_; }
  int dim() const { return dim_; }
  double regularization_eps() const { return eps_; }

  Vec metric_diagonal(const Vec& x) const;
  Mat metric(const Vec& x) const;
  Vec metric_divergence(const Vec& x) const;
  // -[grad^2 phi]^{-1} Tr(grad^3 phi [grad^2 phi]^{-1}), written from phi's
  // derivatives directly rather than by differentiating the metric.
  Vec curvature_correction(const Vec& x) const;

 private:
  void check(const Vec& x) const;

  std::string name_;
  int dim_;
  double eps_;
  Profile profile_;
};

inline constexpr double kDefaultMirrorEps = 1e-6;

// phi(x) = sum_i x_i^4 / 4, metric diag(1 / (3 x_i^2 + eps)).
MirrorMetric make_quartic_mirror(int dim, double eps = kDefaultMirrorEps);

// phi'' (t) = 1 / (1 + c t^2), i.e. phi'(t) = atan(sqrt(c) t) / sqrt(c). The
// metric 1 + c t^2 dominates the identity everywhere.
MirrorMetric make_arctan_mirror(int dim, double c);

}  // namespace langevin
