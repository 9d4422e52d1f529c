#include "langevin/potentials.hpp"

#include "langevin/errors.hpp"

#include <cmath>
#include <memory>
#include <sstream>

namespace langevin {

double Dataset::positive_fraction() const {
  if (labels.size() == 0) return 0.0;
  return static_cast<double>(labels.sum()) / static_cast<double>(labels.size());
}

void Dataset::validate() const {
  if (features.rows() == 0) throw UsageError("dataset is empty");
  if (labels.size() != features.rows())
    throw UsageError("dataset label count does not match feature rows");
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      std::ostringstream os;
      os << "label at row " << i << " is " << labels[i] << ", expected 0 or 1";
      throw UsageError(os.str());
    }
  }
  if (!features.allFinite()) throw UsageError("dataset has non-finite features");
}

PotentialModel::PotentialModel(std::string name, int dim, ScalarField value,
                               VectorField gradient,
                               std::optional<MatrixField> hessian)
    : name_(std::move(name)),
      dim_(dim),
      value_(std::move(value)),
      gradient_(std::move(gradient)),
      hessian_(std::move(hessian)) {
  if (dim_ <= 0) throw UsageError("potential dimension must be positive");
}

void PotentialModel::check_dim(const Vec& x) const {
  if (x.size() != dim_) {
    std::ostringstream os;
    os << "potential '" << name_ << "' expects dimension " << dim_ << ", got "
       << x.size();
    throw UsageError(os.str());
  }
}

double PotentialModel::value(const Vec& x) const {
  check_dim(x);
  return value_(x);
}

Vec PotentialModel::gradient(const Vec& x) const {
  check_dim(x);
  return gradient_(x);
}

Mat PotentialModel::hessian(const Vec& x) const {
  check_dim(x);
  if (hessian_) return (*hessian_)(x);
  // Central differences of the gradient, symmetrized.
  Mat h(dim_, dim_);
  Vec xp = x;
  for (int j = 0; j < dim_; ++j) {
    const double step = 1e-5 * (1.0 + std::abs(x[j]));
    xp[j] = x[j] + step;
    const Vec gp = gradient_(xp);
    xp[j] = x[j] - step;
    const Vec gm = gradient_(xp);
    xp[j] = x[j];
    h.col(j) = (gp - gm) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

double PotentialModel::laplacian(const Vec& x) const {
  return hessian(x).trace();
}

Evaluation evaluate(const PotentialModel& model, const Vec& point) {
  return {model.value(point), model.gradient(point)};
}

PotentialModel make_gaussian(int dim) {
  return PotentialModel(
      "gaussian", dim, [](const Vec& x) { return 0.5 * x.squaredNorm(); },
      [](const Vec& x) -> Vec { return x; },
      [dim](const Vec&) -> Mat { return Mat::Identity(dim, dim); });
}

PotentialModel make_diagonal_gaussian(const Vec& variances) {
  if ((variances.array() <= 0.0).any())
    throw UsageError("diagonal gaussian variances must be positive");
  const Vec precision = variances.cwiseInverse();
  const int dim = static_cast<int>(variances.size());
  return PotentialModel(
      "diagonal-gaussian", dim,
      [precision](const Vec& x) {
        return 0.5 * (precision.array() * x.array().square()).sum();
      },
      [precision](const Vec& x) -> Vec {
        return precision.cwiseProduct(x);
      },
      [precision](const Vec&) -> Mat { return precision.asDiagonal(); });
}

PotentialModel make_double_well(int dim) {
  return PotentialModel(
      "double-well", dim,
      [](const Vec& x) {
        return (0.25 * x.array().pow(4) - 0.5 * x.array().square()).sum();
      },
      [](const Vec& x) -> Vec {
        return (x.array().cube() - x.array()).matrix();
      },
      [](const Vec& x) -> Mat {
        return (3.0 * x.array().square() - 1.0).matrix().asDiagonal();
      });
}

double softplus(double t) {
  return std::log1p(std::exp(-std::abs(t))) + std::max(t, 0.0);
}

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

PotentialModel make_blr_potential(const Dataset& data, double lambda) {
  if (data.rows() == 0) throw UsageError("BLR potential needs a nonempty dataset");
  if (!(lambda > 0.0)) throw UsageError("BLR prior variance lambda must be positive");
  data.validate();

  // Rows pre-multiplied by the label sign s_j = 2 y_j - 1, so the likelihood
  // term is softplus(-(S X x)_j).
  auto signed_rows = std::make_shared<Mat>(data.features);
  for (long j = 0; j < data.rows(); ++j) {
    if (data.labels[j] == 0) signed_rows->row(j) *= -1.0;
  }
  const int dim = static_cast<int>(data.cols());
  const double inv_lambda = 1.0 / lambda;

  auto value = [signed_rows, inv_lambda](const Vec& x) {
    const Vec margins = (*signed_rows) * x;
    double total = 0.0;
    for (Eigen::Index j = 0; j < margins.size(); ++j) total += softplus(-margins[j]);
    return total + 0.5 * inv_lambda * x.squaredNorm();
  };
  auto gradient = [signed_rows, inv_lambda](const Vec& x) -> Vec {
    const Vec margins = (*signed_rows) * x;
    Vec weights(margins.size());
    for (Eigen::Index j = 0; j < margins.size(); ++j) weights[j] = -sigmoid(-margins[j]);
    return signed_rows->transpose() * weights + inv_lambda * x;
  };
  auto hessian = [signed_rows, inv_lambda](const Vec& x) -> Mat {
    const Vec margins = (*signed_rows) * x;
    Vec curvature(margins.size());
    for (Eigen::Index j = 0; j < margins.size(); ++j) {
      const double s = sigmoid(margins[j]);
      curvature[j] = s * (1.0 - s);
    }
    Mat h = signed_rows->transpose() * curvature.asDiagonal() * (*signed_rows);
    h.diagonal().array() += inv_lambda;
    return h;
  };
  return PotentialModel("blr", dim, value, gradient, hessian);
}

MirrorMetric::MirrorMetric(std::string name, int dim, double eps, Profile profile)
    : name_(std::move(name)), dim_(dim), eps_(eps), profile_(std::move(profile)) {
  if (dim_ <= 0) throw UsageError("mirror metric dimension must be positive");
  if (eps_ < 0.0) throw UsageError("mirror regularization eps must be nonnegative");
}

void MirrorMetric::check(const Vec& x) const {
  if (x.size() != dim_) throw UsageError("mirror metric dimension mismatch");
  for (int i = 0; i < dim_; ++i) {
    const double curvature = profile_.phi_second(x[i]);
    if (!(curvature > 0.0) || !std::isfinite(curvature)) {
      std::ostringstream os;
      os << "mirror map '" << name_ << "' has singular Hessian at coordinate "
         << i << " (x_i = " << x[i] << ", eps = " << eps_ << ")";
      throw SingularityError(os.str(), i);
    }
  }
}

Vec MirrorMetric::metric_diagonal(const Vec& x) const {
  check(x);
  Vec out(dim_);
  for (int i = 0; i < dim_; ++i) out[i] = profile_.metric(x[i]);
  return out;
}

Mat MirrorMetric::metric(const Vec& x) const {
  return metric_diagonal(x).asDiagonal();
}

Vec MirrorMetric::metric_divergence(const Vec& x) const {
  check(x);
  Vec out(dim_);
  for (int i = 0; i < dim_; ++i) out[i] = profile_.metric_slope(x[i]);
  return out;
}

Vec MirrorMetric::curvature_correction(const Vec& x) const {
  check(x);
  Vec out(dim_);
  for (int i = 0; i < dim_; ++i) {
    const double inv_hess = 1.0 / profile_.phi_second(x[i]);
    out[i] = -inv_hess * (profile_.phi_third(x[i]) * inv_hess);
  }
  return out;
}

MirrorMetric make_quartic_mirror(int dim, double eps) {
  if (eps < 0.0) throw UsageError("mirror regularization eps must be nonnegative");
  MirrorMetric::Profile profile{
      [eps](double t) { return 1.0 / (3.0 * t * t + eps); },
      [eps](double t) {
        const double denom = 3.0 * t * t + eps;
        return -6.0 * t / (denom * denom);
      },
      [eps](double t) { return 3.0 * t * t + eps; },
      [](double t) { return 6.0 * t; }};
  return MirrorMetric("quartic", dim, eps, std::move(profile));
}

MirrorMetric make_arctan_mirror(int dim, double c) {
  if (!(c >= 0.0)) throw UsageError("arctan mirror requires c >= 0");
  MirrorMetric::Profile profile{
      [c](double t) { return 1.0 + c * t * t; },
      [c](double t) { return 2.0 * c * t; },
      [c](double t) { return 1.0 / (1.0 + c * t * t); },
      [c](double t) {
        const double denom = 1.0 + c * t * t;
        return -2.0 * c * t / (denom * denom);
      }};
  return MirrorMetric("arctan", dim, 0.0, std::move(profile));
}

}  // namespace langevin
