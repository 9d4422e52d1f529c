#include "langevin/dynamics.hpp"

#include "langevin/errors.hpp"
#include "langevin/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <sstream>

namespace langevin {

namespace {

constexpr std::array<double, 5> kFirst = {1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0,
                                          -1.0 / 12.0};
constexpr std::array<double, 5> kSecond = {-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0,
                                           16.0 / 12.0, -1.0 / 12.0};

// d/dz_k of g at z with step h (five-point stencil).
template <class G>
double first_derivative(const G& g, Vec z, int k, double h) {
  const double base = z[k];
  double acc = 0.0;
  for (int a = -2; a <= 2; ++a) {
    if (a == 0) continue;
    z[k] = base + a * h;
    acc += kFirst[a + 2] * g(z);
  }
  return acc / h;
}

// d^2/dz_i dz_j of g; the tensor product of first-derivative stencils when
// i != j and the five-point second-derivative stencil otherwise.
template <class G>
double second_derivative(const G& g, Vec z, int i, int j, double hi, double hj) {
  if (i == j) {
    const double base = z[i];
    double acc = 0.0;
    for (int a = -2; a <= 2; ++a) {
      z[i] = base + a * hi;
      acc += kSecond[a + 2] * g(z);
    }
    return acc / (hi * hi);
  }
  const double bi = z[i];
  const double bj = z[j];
  double acc = 0.0;
  for (int a = -2; a <= 2; ++a) {
    if (a == 0) continue;
    z[i] = bi + a * hi;
    for (int b = -2; b <= 2; ++b) {
      if (b == 0) continue;
      z[j] = bj + b * hj;
      acc += kFirst[a + 2] * kFirst[b + 2] * g(z);
    }
  }
  return acc / (hi * hj);
}

void check_finite(const Vec& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      std::ostringstream os;
      os << what << " is non-finite at coordinate " << i;
      throw NumericError(os.str(), static_cast<int>(i));
    }
  }
}

Mat block_identity(int n, int offset, int width, double scale) {
  Mat m = Mat::Zero(n, n);
  m.block(offset, offset, width, width).diagonal().setConstant(scale);
  return m;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::overdamped: return "overdamped";
    case Variant::underdamped: return "underdamped";
    case Variant::nonreversible: return "nonreversible";
    case Variant::mirror: return "mirror";
    case Variant::highorder: return "highorder";
    case Variant::hfhr: return "hfhr";
    case Variant::custom: return "custom";
  }
  return "custom";
}

Variant parse_variant(const std::string& name) {
  if (name == "overdamped") return Variant::overdamped;
  if (name == "underdamped") return Variant::underdamped;
  if (name == "nonreversible" || name == "non-reversible") return Variant::nonreversible;
  if (name == "mirror") return Variant::mirror;
  if (name == "highorder" || name == "high-order") return Variant::highorder;
  if (name == "hfhr") return Variant::hfhr;
  if (name == "custom") return Variant::custom;
  throw UsageError("unknown variant '" + name + "'");
}

std::vector<std::string> AugLayout::block_names() const {
  std::vector<std::pair<int, std::string>> blocks{{theta_offset, "theta"}};
  if (p_offset >= 0) blocks.emplace_back(p_offset, "p");
  if (r_offset >= 0) blocks.emplace_back(r_offset, "r");
  std::sort(blocks.begin(), blocks.end());
  std::vector<std::string> out;
  for (auto& b : blocks) out.push_back(b.second);
  return out;
}

double VariantParams::require(const std::string& key, Variant variant) const {
  auto it = values.find(key);
  if (it == values.end()) {
    throw UsageError("variant '" + to_string(variant) + "' requires parameter '" +
                     key + "'");
  }
  return it->second;
}

double VariantParams::get_or(const std::string& key, double fallback) const {
  auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

AntisymmetricMatrixSeed random_antisymmetric_seed(int dim, unsigned long long seed) {
  if (dim <= 0) throw UsageError("antisymmetric seed dimension must be positive");
  CounterRng rng(seed, 0x4a4d4154ULL);
  Mat a(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) a(i, j) = rng.normal();
  return {a};
}

DynamicsSpec::DynamicsSpec(Parts parts) : parts_(std::move(parts)) {
  if (parts_.layout.d <= 0) throw UsageError("dynamics layout needs d > 0");
  if (!parts_.diffusion || !parts_.curl || !parts_.hamiltonian || !parts_.hamiltonian_grad)
    throw UsageError("dynamics spec is missing D, Q, H or grad H");
  if (parts_.diffusion_kind == DiffusionKind::constant) {
    constant_d_ = parts_.diffusion(Vec::Zero(n()));
    if (parts_.curl_constant) constant_dq_ = *constant_d_ + parts_.curl(Vec::Zero(n()));
  }
}

void DynamicsSpec::check_size(const Vec& z) const {
  if (z.size() != n()) {
    std::ostringstream os;
    os << "dynamics '" << parts_.name << "' expects state dimension " << n() << ", got "
       << z.size();
    throw UsageError(os.str());
  }
}

Mat DynamicsSpec::D(const Vec& z) const {
  check_size(z);
  if (constant_d_) return *constant_d_;
  return parts_.diffusion(z);
}

Mat DynamicsSpec::Q(const Vec& z) const {
  check_size(z);
  return parts_.curl(z);
}

double DynamicsSpec::H(const Vec& z) const {
  check_size(z);
  return parts_.hamiltonian(z);
}

Vec DynamicsSpec::grad_H(const Vec& z) const {
  check_size(z);
  return parts_.hamiltonian_grad(z);
}

Vec DynamicsSpec::diffusion_diagonal(const Vec& z) const {
  check_size(z);
  if (parts_.diffusion_diagonal) return (*parts_.diffusion_diagonal)(z);
  return D(z).diagonal();
}

void DynamicsSpec::check_invariants(const Vec& z) const {
  const Mat q = Q(z);
  const double q_scale = std::max(1.0, q.cwiseAbs().maxCoeff());
  const double asym = (q + q.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * q_scale) {
    std::ostringstream os;
    os << "curl matrix Q of '" << parts_.name << "' is not anti-symmetric (|Q+Q^T| = "
       << asym << ")";
    throw UsageError(os.str());
  }
  const Mat d = D(z);
  const double d_scale = std::max(1.0, d.cwiseAbs().maxCoeff());
  const double dsym = (d - d.transpose()).cwiseAbs().maxCoeff();
  if (dsym > 1e-12 * d_scale) {
    throw UsageError("diffusion matrix D of '" + parts_.name + "' is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(d, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-12 * d_scale) {
    throw UsageError("diffusion matrix D of '" + parts_.name +
                     "' is not positive semidefinite");
  }
}

DynamicsSpec DynamicsSpec::with_drift(VectorField drift_fn, std::string name) const {
  Parts copy = parts_;
  copy.drift_override = std::move(drift_fn);
  copy.name = std::move(name);
  return DynamicsSpec(std::move(copy));
}

Vec fd_steps(const Vec& z, double fd_step) {
  return (fd_step * (1.0 + z.array().abs())).matrix();
}

DynamicsSpec build_variant_spec(Variant kind, const PotentialModel& potential,
                                const VariantParams& params,
                                const std::optional<MirrorMetric>& mirror) {
  const int d = potential.dim();
  auto pot = std::make_shared<const PotentialModel>(potential);
  DynamicsSpec::Parts parts;
  parts.variant = kind;
  parts.name = to_string(kind);
  parts.params = params;
  parts.layout.d = d;

  auto zero_gamma = [](const Vec& z) -> Vec { return Vec::Zero(z.size()); };

  switch (kind) {
    case Variant::overdamped: {
      parts.diffusion = [d](const Vec&) -> Mat { return Mat::Identity(d, d); };
      parts.curl = [d](const Vec&) -> Mat { return Mat::Zero(d, d); };
      parts.hamiltonian = [pot](const Vec& z) { return pot->value(z); };
      parts.hamiltonian_grad = [pot](const Vec& z) -> Vec { return pot->gradient(z); };
      parts.gamma = zero_gamma;
      parts.antisymmetric_override = zero_gamma;
      parts.explicit_drift = [pot](const Vec& z) -> Vec { return -pot->gradient(z); };
      parts.diffusion_kind = DiffusionKind::constant;
      parts.curl_constant = true;
      break;
    }
    case Variant::nonreversible: {
      if (!params.J) throw UsageError("variant 'nonreversible' requires matrix 'J'");
      const Mat J = *params.J;
      if (J.rows() != d || J.cols() != d) {
        std::ostringstream os;
        os << "J is " << J.rows() << "x" << J.cols() << " but the potential has dimension "
           << d;
        throw UsageError(os.str());
      }
      if ((J + J.transpose()).cwiseAbs().maxCoeff() >
          1e-12 * std::max(1.0, J.cwiseAbs().maxCoeff()))
        throw UsageError("J must be anti-symmetric");
      parts.diffusion = [d](const Vec&) -> Mat { return Mat::Identity(d, d); };
      parts.curl = [J](const Vec&) -> Mat { return J; };
      parts.hamiltonian = [pot](const Vec& z) { return pot->value(z); };
      parts.hamiltonian_grad = [pot](const Vec& z) -> Vec { return pot->gradient(z); };
      parts.gamma = zero_gamma;
      parts.antisymmetric_override = [pot, J](const Vec& z) -> Vec {
        return -J * pot->gradient(z);
      };
      parts.explicit_drift = [pot, J, d](const Vec& z) -> Vec {
        const Vec g = pot->gradient(z);
        return -(Mat::Identity(d, d) + J) * g;
      };
      parts.diffusion_kind = DiffusionKind::constant;
      parts.curl_constant = true;
      break;
    }
    case Variant::underdamped: {
      const double gamma = params.require("gamma", kind);
      if (!(gamma > 0.0)) throw UsageError("underdamped friction gamma must be positive");
      parts.layout.r_offset = d;
      const int n = 2 * d;
      parts.diffusion = [n, d, gamma](const Vec&) -> Mat {
        return block_identity(n, d, d, gamma);
      };
      parts.curl = [n, d](const Vec&) -> Mat {
        Mat q = Mat::Zero(n, n);
        q.block(0, d, d, d) = -Mat::Identity(d, d);
        q.block(d, 0, d, d) = Mat::Identity(d, d);
        return q;
      };
      parts.hamiltonian = [pot, d](const Vec& z) {
        return pot->value(z.head(d)) + 0.5 * z.tail(d).squaredNorm();
      };
      parts.hamiltonian_grad = [pot, d, n](const Vec& z) -> Vec {
        Vec g(n);
        g << pot->gradient(z.head(d)), z.tail(d);
        return g;
      };
      parts.gamma = zero_gamma;
      parts.antisymmetric_override = [pot, d, n](const Vec& z) -> Vec {
        Vec b(n);
        b << z.tail(d), -pot->gradient(z.head(d));
        return b;
      };
      parts.explicit_drift = [pot, d, n, gamma](const Vec& z) -> Vec {
        Vec f(n);
        const Vec r = z.tail(d);
        f << r, -pot->gradient(z.head(d)) - gamma * r;
        return f;
      };
      parts.diffusion_kind = DiffusionKind::constant;
      parts.curl_constant = true;
      break;
    }
    case Variant::highorder: {
      const double gamma = params.require("gamma", kind);
      const double alpha = params.require("alpha", kind);
      if (!(alpha > 0.0)) throw UsageError("high-order alpha must be positive");
      parts.layout.p_offset = d;
      parts.layout.r_offset = 2 * d;
      const int n = 3 * d;
      parts.diffusion = [n, d, alpha](const Vec&) -> Mat {
        return block_identity(n, 2 * d, d, alpha);
      };
      parts.curl = [n, d, gamma](const Vec&) -> Mat {
        Mat q = Mat::Zero(n, n);
        const Mat eye = Mat::Identity(d, d);
        q.block(0, d, d, d) = -eye;
        q.block(d, 0, d, d) = eye;
        q.block(d, 2 * d, d, d) = -gamma * eye;
        q.block(2 * d, d, d, d) = gamma * eye;
        return q;
      };
      parts.hamiltonian = [pot, d](const Vec& z) {
        return pot->value(z.head(d)) + 0.5 * z.tail(2 * d).squaredNorm();
      };
      parts.hamiltonian_grad = [pot, d, n](const Vec& z) -> Vec {
        Vec g(n);
        g << pot->gradient(z.head(d)), z.tail(2 * d);
        return g;
      };
      parts.gamma = zero_gamma;
      parts.antisymmetric_override = [pot, d, n, gamma](const Vec& z) -> Vec {
        const Vec p = z.segment(d, d);
        const Vec r = z.tail(d);
        Vec b(n);
        b << p, -pot->gradient(z.head(d)) + gamma * r, -gamma * p;
        return b;
      };
      parts.explicit_drift = [pot, d, n, gamma, alpha](const Vec& z) -> Vec {
        const Vec p = z.segment(d, d);
        const Vec r = z.tail(d);
        Vec f(n);
        f << p, -pot->gradient(z.head(d)) + gamma * r, -gamma * p - alpha * r;
        return f;
      };
      parts.diffusion_kind = DiffusionKind::constant;
      parts.curl_constant = true;
      break;
    }
    case Variant::hfhr: {
      const double alpha = params.require("alpha", kind);
      const double beta = params.require("beta", kind);
      if (!(alpha > 0.0) || !(beta > 0.0))
        throw UsageError("hfhr alpha and beta must be positive");
      parts.layout.r_offset = d;
      const int n = 2 * d;
      parts.diffusion = [n, d, alpha, beta](const Vec&) -> Mat {
        Mat m = Mat::Zero(n, n);
        m.diagonal().head(d).setConstant(beta);
        m.diagonal().tail(d).setConstant(alpha);
        return m;
      };
      parts.curl = [n, d](const Vec&) -> Mat {
        Mat q = Mat::Zero(n, n);
        q.block(0, d, d, d) = -Mat::Identity(d, d);
        q.block(d, 0, d, d) = Mat::Identity(d, d);
        return q;
      };
      parts.hamiltonian = [pot, d](const Vec& z) {
        return pot->value(z.head(d)) + 0.5 * z.tail(d).squaredNorm();
      };
      parts.hamiltonian_grad = [pot, d, n](const Vec& z) -> Vec {
        Vec g(n);
        g << pot->gradient(z.head(d)), z.tail(d);
        return g;
      };
      parts.gamma = zero_gamma;
      parts.antisymmetric_override = [pot, d, n](const Vec& z) -> Vec {
        Vec b(n);
        b << z.tail(d), -pot->gradient(z.head(d));
        return b;
      };
      parts.explicit_drift = [pot, d, n, alpha, beta](const Vec& z) -> Vec {
        const Vec g = pot->gradient(z.head(d));
        const Vec r = z.tail(d);
        Vec f(n);
        f << r - beta * g, -alpha * r - g;
        return f;
      };
      parts.diffusion_kind = DiffusionKind::constant;
      parts.curl_constant = true;
      break;
    }
    case Variant::mirror: {
      auto metric = std::make_shared<const MirrorMetric>(
          mirror ? *mirror
                 : make_quartic_mirror(d, params.get_or("eps", kDefaultMirrorEps)));
      if (metric->dim() != d)
        throw UsageError("mirror metric dimension does not match the potential");
      parts.name = "mirror-" + metric->name();
      parts.diffusion = [metric](const Vec& z) -> Mat { return metric->metric(z); };
      parts.diffusion_diagonal = [metric](const Vec& z) -> Vec {
        return metric->metric_diagonal(z);
      };
      // Q_ij = +e^U above the diagonal and -e^U below it.
      parts.curl = [pot, d](const Vec& z) -> Mat {
        const double e = std::exp(pot->value(z));
        Mat q = Mat::Zero(d, d);
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) q(i, j) = (j > i) ? e : (j < i ? -e : 0.0);
        return q;
      };
      parts.hamiltonian = [pot](const Vec& z) { return pot->value(z); };
      parts.hamiltonian_grad = [pot](const Vec& z) -> Vec { return pot->gradient(z); };
      parts.gamma = [pot, metric, d](const Vec& z) -> Vec {
        const Vec g = pot->gradient(z);
        const double e = std::exp(pot->value(z));
        Vec out = metric->metric_divergence(z);
        for (int i = 0; i < d; ++i) {
          double s = 0.0;
          for (int j = 0; j < d; ++j) s += (j > i) ? g[j] : (j < i ? -g[j] : 0.0);
          out[i] += e * s;
        }
        return out;
      };
      parts.drift_override = [pot, metric](const Vec& z) -> Vec {
        return metric->metric_divergence(z) -
               metric->metric_diagonal(z).cwiseProduct(pot->gradient(z));
      };
      parts.antisymmetric_override = zero_gamma;
      parts.explicit_drift = [pot, metric](const Vec& z) -> Vec {
        return metric->curvature_correction(z) -
               metric->metric_diagonal(z).cwiseProduct(pot->gradient(z));
      };
      parts.diffusion_kind = DiffusionKind::state_diagonal;
      break;
    }
    case Variant::custom:
      throw UsageError("custom dynamics are built with make_custom_spec");
  }
  return DynamicsSpec(std::move(parts));
}

DynamicsSpec build_expanded_overdamped_spec(const PotentialModel& potential,
                                            int aux_blocks) {
  if (aux_blocks != 1 && aux_blocks != 2)
    throw UsageError("expanded overdamped dynamics take 1 or 2 auxiliary blocks");
  const int d = potential.dim();
  const int n = d * (1 + aux_blocks);
  auto pot = std::make_shared<const PotentialModel>(potential);
  DynamicsSpec::Parts parts;
  parts.variant = Variant::overdamped;
  parts.name = aux_blocks == 1 ? "expanded-2o" : "expanded-3o";
  parts.layout.d = d;
  if (aux_blocks == 1) {
    parts.layout.r_offset = d;
  } else {
    parts.layout.p_offset = d;
    parts.layout.r_offset = 2 * d;
  }
  parts.diffusion = [n](const Vec&) -> Mat { return Mat::Identity(n, n); };
  parts.curl = [n](const Vec&) -> Mat { return Mat::Zero(n, n); };
  parts.hamiltonian = [pot, d, n](const Vec& z) {
    return pot->value(z.head(d)) + 0.5 * z.tail(n - d).squaredNorm();
  };
  parts.hamiltonian_grad = [pot, d, n](const Vec& z) -> Vec {
    Vec g(n);
    g << pot->gradient(z.head(d)), z.tail(n - d);
    return g;
  };
  auto zero = [](const Vec& z) -> Vec { return Vec::Zero(z.size()); };
  parts.gamma = zero;
  parts.antisymmetric_override = zero;
  parts.explicit_drift = [pot, d, n](const Vec& z) -> Vec {
    Vec f(n);
    f << -pot->gradient(z.head(d)), -z.tail(n - d);
    return f;
  };
  parts.diffusion_kind = DiffusionKind::constant;
  parts.curl_constant = true;
  return DynamicsSpec(std::move(parts));
}

DynamicsSpec make_custom_spec(int n, MatrixField diffusion, MatrixField curl,
                              ScalarField hamiltonian, VectorField hamiltonian_grad,
                              std::optional<VectorField> gamma, std::string name) {
  if (n <= 0) throw UsageError("custom dynamics need n > 0");
  DynamicsSpec::Parts parts;
  parts.variant = Variant::custom;
  parts.name = std::move(name);
  parts.layout.d = n;
  parts.diffusion = std::move(diffusion);
  parts.curl = std::move(curl);
  parts.hamiltonian = std::move(hamiltonian);
  parts.hamiltonian_grad = std::move(hamiltonian_grad);
  parts.gamma = std::move(gamma);
  parts.diffusion_kind = DiffusionKind::state_dense;
  DynamicsSpec spec(std::move(parts));

  // Probe the invariants at the origin and a handful of reproducible points.
  spec.check_invariants(Vec::Zero(n));
  CounterRng rng(0x51, 0);
  for (int k = 0; k < 8; ++k) {
    Vec z(n);
    for (int i = 0; i < n; ++i) z[i] = 4.0 * rng.uniform() - 2.0;
    spec.check_invariants(z);
  }
  return spec;
}

Vec gamma_correction(const DynamicsSpec& spec, const Vec& z, double fd_step) {
  if (!z.allFinite()) throw UsageError("gamma_correction needs a finite point");
  const auto& parts = spec.parts();
  if (parts.gamma) return (*parts.gamma)(z);
  const int n = spec.n();
  const Vec h = fd_steps(z, fd_step);
  Vec out = Vec::Zero(n);
  for (int j = 0; j < n; ++j) {
    // Column j of d_j (D + Q), differentiated as a vector.
    const double base = z[j];
    Vec zz = z;
    Vec acc = Vec::Zero(n);
    for (int a = -2; a <= 2; ++a) {
      if (a == 0) continue;
      zz[j] = base + a * h[j];
      acc += kFirst[a + 2] * (parts.diffusion(zz) + parts.curl(zz)).col(j);
    }
    out += acc / h[j];
  }
  return out;
}

Vec assembled_drift(const DynamicsSpec& spec, const Vec& z, double fd_step) {
  const Vec g = spec.grad_H(z);
  Vec f;
  if (const auto& dq = spec.constant_drift_matrix()) {
    f = -(*dq) * g;
  } else {
    f = -(spec.D(z) + spec.Q(z)) * g;
  }
  f += gamma_correction(spec, z, fd_step);
  return f;
}

Vec drift(const DynamicsSpec& spec, const Vec& z) {
  check_finite(z, "state");
  Vec f = spec.has_drift_override() ? (*spec.parts().drift_override)(z)
                                    : assembled_drift(spec, z, kDefaultFdStep);
  check_finite(f, "drift");
  return f;
}

Vec explicit_drift(const DynamicsSpec& spec, const Vec& z) {
  if (!spec.has_explicit_drift())
    throw UsageError("dynamics '" + spec.name() + "' has no explicit drift");
  return (*spec.parts().explicit_drift)(z);
}

Vec antisymmetric_drift(const DynamicsSpec& spec, const Vec& z, double fd_step) {
  const auto& parts = spec.parts();
  if (parts.antisymmetric_override) return (*parts.antisymmetric_override)(z);
  Vec b = -spec.Q(z) * spec.grad_H(z);
  if (parts.curl_constant) return b;
  const int n = spec.n();
  const Vec h = fd_steps(z, fd_step);
  for (int j = 0; j < n; ++j) {
    const double base = z[j];
    Vec zz = z;
    Vec acc = Vec::Zero(n);
    for (int a = -2; a <= 2; ++a) {
      if (a == 0) continue;
      zz[j] = base + a * h[j];
      acc += kFirst[a + 2] * parts.curl(zz).col(j);
    }
    b += acc / h[j];
  }
  return b;
}

double stationarity_residual(const DynamicsSpec& spec, const Vec& z, double fd_step) {
  if (!z.allFinite()) throw UsageError("stationarity_residual needs a finite point");
  const int n = spec.n();
  const double h0 = spec.H(z);
  const Vec h = fd_steps(z, fd_step);
  auto rho = [&](const Vec& x) { return std::exp(-spec.H(x) + h0); };

  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    auto flux = [&](const Vec& x) { return drift(spec, x)[i] * rho(x); };
    total += first_derivative(flux, z, i, h[i]);
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      auto term = [&](const Vec& x) { return spec.D(x)(i, j) * rho(x); };
      total -= second_derivative(term, z, i, j, h[i], h[j]);
    }
  }
  return total;
}

double curl_condition_residual(const DynamicsSpec& spec, const Vec& z, double fd_step) {
  if (!z.allFinite()) throw UsageError("curl_condition_residual needs a finite point");
  const int n = spec.n();
  const double h0 = spec.H(z);
  const Vec h = fd_steps(z, fd_step);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      auto term = [&](const Vec& x) {
        return spec.Q(x)(i, j) * std::exp(-spec.H(x) + h0);
      };
      total += second_derivative(term, z, i, j, h[i], h[j]);
    }
  }
  return total;
}

}  // namespace langevin
