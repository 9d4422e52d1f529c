#include "langevin/lyapunov.hpp"

#include "langevin/errors.hpp"
#include "langevin/io.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

namespace langevin {

namespace {

Mat potential_hessian(const PotentialModel& u, const Vec& x) {
  if (u.has_hessian()) return u.hessian(x);
  const Vec h = fd_steps(x, 1e-4);
  Mat out(x.size(), x.size());
  Vec y = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    y[k] = x[k] + h[k];
    const Vec gp = u.gradient(y);
    y[k] = x[k] - h[k];
    const Vec gm = u.gradient(y);
    y[k] = x[k];
    out.col(k) = (gp - gm) / (2.0 * h[k]);
  }
  return 0.5 * (out + out.transpose());
}

// Radial profile q(t) = t^{beta-1} chi(t) so that J(theta) = theta q(|theta|).
struct Radial {
  double beta;
  double q(double t) const { return std::pow(t, beta - 1.0) * smoothstep(t - 1.0); }
  double dq(double t) const {
    const double s = smoothstep(t - 1.0);
    const double s1 = smoothstep_slope(t - 1.0);
    return (beta - 1.0) * std::pow(t, beta - 2.0) * s + std::pow(t, beta - 1.0) * s1;
  }
  double d2q(double t) const {
    const double s = smoothstep(t - 1.0);
    const double s1 = smoothstep_slope(t - 1.0);
    const double s2 = smoothstep_curvature(t - 1.0);
    return (beta - 1.0) * (beta - 2.0) * std::pow(t, beta - 3.0) * s +
           2.0 * (beta - 1.0) * std::pow(t, beta - 2.0) * s1 + std::pow(t, beta - 1.0) * s2;
  }
};

std::string fmt(double x) { return format_double(x); }

}  // namespace

std::string to_string(LyapunovKind kind) {
  switch (kind) {
    case LyapunovKind::gibbs_power: return "gibbs-power";
    case LyapunovKind::hfhr: return "hfhr";
    case LyapunovKind::highorder: return "highorder";
  }
  return "unknown";
}

LyapunovKind parse_lyapunov_kind(const std::string& name) {
  if (name == "gibbs-power" || name == "gibbs_power") return LyapunovKind::gibbs_power;
  if (name == "hfhr") return LyapunovKind::hfhr;
  if (name == "highorder" || name == "high-order") return LyapunovKind::highorder;
  throw UsageError("unknown Lyapunov kind '" + name + "'");
}

double LyapunovParams::get_or(const std::string& key, double fallback) const {
  auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

double LyapunovParams::require(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) throw UsageError("Lyapunov construction requires parameter '" + key + "'");
  return it->second;
}

double smoothstep(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

double smoothstep_slope(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  return 30.0 * t * t * (1.0 - t) * (1.0 - t);
}

double smoothstep_curvature(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  return 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t);
}

double cutoff_slope_bound(double beta) {
  const Radial rad{beta};
  double best = 0.0;
  // d/dt (t q(t)) = q + t q'; beyond t = 2 it is beta t^{beta-1}, maximal at t = 2
  // for beta <= 1.
  constexpr int kSamples = 200000;
  for (int i = 0; i <= kSamples; ++i) {
    const double t = 1.0 + 1.5 * i / kSamples;
    best = std::max(best, std::abs(rad.q(t) + t * rad.dq(t)));
  }
  return best;
}

nlohmann::json LyapunovSpec::to_json() const {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [k, v] : resolved) params[k] = v;
  return {{"kind", to_string(kind)},
          {"n", n},
          {"delta", delta},
          {"growth_exponent", growth_exponent},
          {"params", params},
          {"admissible", admissible()},
          {"violations", violations}};
}

LyapunovSpec build_lyapunov(LyapunovKind kind, const PotentialModel& potential,
                            const LyapunovParams& params) {
  const int d = potential.dim();
  LyapunovSpec spec;
  spec.kind = kind;
  const PotentialModel u = potential;

  auto violate = [&](bool ok, const std::string& text) {
    if (!ok) spec.violations.push_back(text);
  };

  switch (kind) {
    case LyapunovKind::gibbs_power: {
      const double eta = params.require("eta");
      if (!(eta > 0.0)) throw UsageError("gibbs-power requires eta > 0");
      spec.n = d;
      spec.layout = AugLayout{d, 0, -1, -1};
      spec.resolved = {{"eta", eta}};
      spec.phi = [u, eta](const Vec& z) { return eta * u.value(z); };
      spec.phi_grad = [u, eta](const Vec& z) -> Vec { return eta * u.gradient(z); };
      spec.phi_hessian = [u, eta](const Vec& z) -> Mat { return eta * potential_hessian(u, z); };
      break;
    }
    case LyapunovKind::hfhr: {
      const double alpha = params.require("alpha");
      const double beta = params.require("beta");
      const double a = params.require("a");
      const double c1 = params.get_or("c1", 1.0);
      const double M = params.get_or("M", 1.0);
      const double K = (1.0 - 2.0 * a) * (1.0 - 2.0 * a) * (alpha + M * beta) *
                       (alpha + M * beta) / (2.0 * c1);
      const double lin = 1.0 + K;
      const double c0 = alpha * a * (1.0 - a);
      const double root = (-lin + std::sqrt(lin * lin + 4.0 * beta * c0)) / (2.0 * beta);
      const double cap = c1 / (2.0 * alpha);
      const double b = params.values.count("b") ? params.values.at("b") : 0.5 * std::min(cap, root);
      violate(a > 0.0 && a < 1.0, "0 < a < 1 (a = " + fmt(a) + ")");
      violate(b > 0.0 && b < cap, "0 < b < c1 / (2 alpha) = " + fmt(cap) + " (b = " + fmt(b) + ")");
      violate(beta * b * b + lin * b < c0,
              "beta b^2 + (1 + K) b < alpha a (1 - a) = " + fmt(c0));
      spec.n = 2 * d;
      spec.layout = AugLayout{d, 0, -1, d};
      spec.resolved = {{"alpha", alpha}, {"beta", beta}, {"a", a}, {"b", b}, {"c1", c1}, {"M", M}};
      spec.phi = [u, a, b, d](const Vec& z) {
        const Vec th = z.head(d);
        const Vec r = z.tail(d);
        return a * (u.value(th) + 0.5 * r.squaredNorm()) + b * th.dot(r);
      };
      spec.phi_grad = [u, a, b, d](const Vec& z) -> Vec {
        const Vec th = z.head(d);
        const Vec r = z.tail(d);
        Vec g(2 * d);
        g.head(d) = a * u.gradient(th) + b * r;
        g.tail(d) = a * r + b * th;
        return g;
      };
      spec.phi_hessian = [u, a, b, d](const Vec& z) -> Mat {
        Mat h = Mat::Zero(2 * d, 2 * d);
        h.topLeftCorner(d, d) = a * potential_hessian(u, z.head(d));
        h.topRightCorner(d, d).diagonal().setConstant(b);
        h.bottomLeftCorner(d, d).diagonal().setConstant(b);
        h.bottomRightCorner(d, d).diagonal().setConstant(a);
        return h;
      };
      break;
    }
    case LyapunovKind::highorder: {
      const double alpha = params.require("alpha");
      const double gamma = params.require("gamma");
      const double h = params.require("h");
      const double a = params.require("a");
      const double delta = params.get_or("delta", 1.0);
      const double k = params.get_or("k", 2.0);
      const double m = params.get_or("m", 1.0);
      if (!(k > 1.0 && k <= 2.0)) throw UsageError("high-order construction requires 1 < k <= 2");
      const double beta_exp = k - 1.0;
      const double cj = cutoff_slope_bound(beta_exp);
      const double kappa = gamma / (2.0 * cj);
      const double p1 = k / (k - 1.0);
      violate(a > 0.0 && h > 0.0, "a > 0 and h > 0");
      violate(delta > (2.0 - k) / k && delta <= 1.0,
              "(2 - k) / k < delta <= 1 (delta = " + fmt(delta) + ")");
      violate(h < alpha / (2.0 * delta), "h < alpha / (2 delta) = " + fmt(alpha / (2.0 * delta)));
      violate(a * kappa / p1 < m * h,
              "a kappa / p1 < m h (" + fmt(a * kappa / p1) + " vs " + fmt(m * h) + ")");
      violate(a * kappa / k + 0.5 * a < 0.5 * h,
              "a kappa / k + a / 2 < h / 2 (" + fmt(a * kappa / k + 0.5 * a) + " vs " +
                  fmt(0.5 * h) + ")");
      spec.n = 3 * d;
      spec.delta = delta;
      spec.growth_exponent = k;
      spec.layout = AugLayout{d, 0, d, 2 * d};
      const Radial rad{beta_exp};
      const double ak = a * kappa;
      auto phi0 = [u, h, a, ak, rad, d](const Vec& z) {
        const Vec th = z.head(d);
        const Vec p = z.segment(d, d);
        const Vec r = z.tail(d);
        const double t = th.norm();
        const double j = t > 1.0 ? rad.q(t) * th.dot(p) : 0.0;
        return h * (u.value(th) + 0.5 * p.squaredNorm() + 0.5 * r.squaredNorm()) + ak * j +
               a * p.dot(r);
      };
      double floor_value = 0.0;
      const GridDomain shift = params.shift_grid ? *params.shift_grid
                                                 : GridDomain::cube(3 * d, -5.0, 5.0, 61);
      if (shift.dims() != 3 * d) throw UsageError("shift grid must have one axis per coordinate");
      double lowest = std::numeric_limits<double>::infinity();
      for (long long i = 0; i < shift.size(); ++i)
        lowest = std::min(lowest, phi0(shift.coordinates(i)));
      floor_value = lowest;
      spec.resolved = {{"alpha", alpha}, {"gamma", gamma}, {"h", h},         {"a", a},
                       {"delta", delta}, {"k", k},         {"m", m},         {"C_J", cj},
                       {"kappa", kappa}, {"phi0_min", floor_value}};
      spec.phi = [phi0, floor_value](const Vec& z) { return phi0(z) - floor_value + 1.0; };
      spec.phi_grad = [u, h, a, ak, rad, d](const Vec& z) -> Vec {
        const Vec th = z.head(d);
        const Vec p = z.segment(d, d);
        const Vec r = z.tail(d);
        const double t = th.norm();
        Vec g(3 * d);
        g.head(d) = h * u.gradient(th);
        Vec jv = Vec::Zero(d);
        if (t > 1.0) {
          // (dJ)^T p = q p + q' (theta.p) theta / t
          g.head(d) += ak * (rad.q(t) * p + rad.dq(t) * th.dot(p) / t * th);
          jv = rad.q(t) * th;
        }
        g.segment(d, d) = h * p + ak * jv + a * r;
        g.tail(d) = h * r + a * p;
        return g;
      };
      spec.phi_hessian = [u, h, a, ak, rad, d](const Vec& z) -> Mat {
        const Vec th = z.head(d);
        const Vec p = z.segment(d, d);
        const double t = th.norm();
        Mat H = Mat::Zero(3 * d, 3 * d);
        H.topLeftCorner(d, d) = h * potential_hessian(u, th);
        if (t > 1.0) {
          const double q = rad.q(t);
          const double q1 = rad.dq(t);
          const double q2 = rad.d2q(t);
          const double tp = th.dot(p);
          const Vec e = th / t;
          // d^2/dtheta^2 of q(t) theta.p
          Mat tt = q1 * (p * e.transpose() + e * p.transpose()) +
                   tp * (q2 * e * e.transpose() +
                         q1 / t * (Mat::Identity(d, d) - e * e.transpose()));
          H.topLeftCorner(d, d) += ak * tt;
          // d/dp_i d/dtheta_k: dJ_i/dtheta_k = q delta_ik + q' theta_i e_k
          const Mat jac = q * Mat::Identity(d, d) + q1 * th * e.transpose();
          H.block(d, 0, d, d) = ak * jac;
          H.block(0, d, d, d) = ak * jac.transpose();
        }
        H.block(d, d, d, d).diagonal().setConstant(h);
        H.block(d, 2 * d, d, d).diagonal().setConstant(a);
        H.block(2 * d, d, d, d).diagonal().setConstant(a);
        H.block(2 * d, 2 * d, d, d).diagonal().setConstant(h);
        return H;
      };
      break;
    }
  }

  if (params.enforce_admissibility && !spec.violations.empty()) {
    std::ostringstream os;
    os << to_string(kind) << " Lyapunov parameters are outside the admissible range: ";
    for (std::size_t i = 0; i < spec.violations.size(); ++i)
      os << (i ? "; " : "") << spec.violations[i];
    throw UsageError(os.str());
  }
  return spec;
}

namespace {

void check_spec_sizes(const DynamicsSpec& spec, const LyapunovSpec& lyap, const Vec& z) {
  if (spec.n() != lyap.n || z.size() != lyap.n)
    throw UsageError("Lyapunov function and dynamics have different state dimensions");
}

double ratio_from(const DynamicsSpec& spec, const Vec& z, const Vec& grad_g, const Mat& hess_g) {
  const Vec f = drift(spec, z);
  const Mat D = spec.D(z);
  const double value =
      -(f.dot(grad_g) + (D.cwiseProduct(hess_g)).sum() + grad_g.dot(D * grad_g));
  if (!std::isfinite(value)) throw NumericError("generator ratio is non-finite");
  return value;
}

}  // namespace

double neg_generator_ratio(const DynamicsSpec& spec, const LyapunovSpec& lyap, const Vec& z) {
  check_spec_sizes(spec, lyap, z);
  const double phi = lyap.phi(z);
  const Vec gphi = lyap.phi_grad(z);
  const Mat hphi = lyap.phi_hessian(z);
  Vec grad_g;
  Mat hess_g;
  if (lyap.delta == 1.0) {
    grad_g = gphi;
    hess_g = hphi;
  } else {
    if (!(phi > 0.0)) throw NumericError("phi must be positive when delta < 1");
    const double dl = lyap.delta;
    const double c1 = dl * std::pow(phi, dl - 1.0);
    const double c2 = dl * (dl - 1.0) * std::pow(phi, dl - 2.0);
    grad_g = c1 * gphi;
    hess_g = c1 * hphi + c2 * gphi * gphi.transpose();
  }
  return ratio_from(spec, z, grad_g, hess_g);
}

double neg_generator_ratio_fd(const DynamicsSpec& spec, const LyapunovSpec& lyap, const Vec& z,
                              double fd_step) {
  check_spec_sizes(spec, lyap, z);
  static constexpr std::array<double, 5> c1 = {1.0 / 12, -8.0 / 12, 0.0, 8.0 / 12, -1.0 / 12};
  static constexpr std::array<double, 5> c2 = {-1.0 / 12, 16.0 / 12, -30.0 / 12, 16.0 / 12,
                                               -1.0 / 12};
  auto g = [&](const Vec& x) {
    const double phi = lyap.phi(x);
    return lyap.delta == 1.0 ? phi : std::pow(phi, lyap.delta);
  };
  const int n = lyap.n;
  const Vec h = fd_steps(z, fd_step);
  Vec grad(n);
  Mat hess(n, n);
  Vec x = z;
  for (int i = 0; i < n; ++i) {
    double acc1 = 0.0;
    double acc2 = 0.0;
    for (int a = -2; a <= 2; ++a) {
      x[i] = z[i] + a * h[i];
      const double gv = g(x);
      acc1 += c1[a + 2] * gv;
      acc2 += c2[a + 2] * gv;
    }
    x[i] = z[i];
    grad[i] = acc1 / h[i];
    hess(i, i) = acc2 / (h[i] * h[i]);
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double acc = 0.0;
      for (int a = -2; a <= 2; ++a) {
        if (a == 0) continue;
        x[i] = z[i] + a * h[i];
        for (int b = -2; b <= 2; ++b) {
          if (b == 0) continue;
          x[j] = z[j] + b * h[j];
          acc += c1[a + 2] * c1[b + 2] * g(x);
        }
        x[j] = z[j];
      }
      x[i] = z[i];
      hess(i, j) = hess(j, i) = acc / (h[i] * h[j]);
    }
  }
  return ratio_from(spec, z, grad, hess);
}

double gibbs_power_closed_form(const PotentialModel& potential, double eta, const Vec& theta) {
  const Vec g = potential.gradient(theta);
  return eta * ((1.0 - eta) * g.squaredNorm() - potential.laplacian(theta));
}

nlohmann::json BoundReport::to_json() const {
  return {{"constants", {{"A", constants.A}, {"B", constants.B}, {"C", constants.C},
                         {"Dc", constants.Dc}}},
          {"searched", searched},
          {"min_residual", min_residual},
          {"argmin", langevin::to_json(argmin)},
          {"pass", pass},
          {"grid_meta", grid_meta},
          {"note", note}};
}

BoundReport verify_quadratic_bound(const DynamicsSpec& spec, const LyapunovSpec& lyap,
                                   const GridDomain& grid,
                                   const std::optional<BoundConstants>& constants, int threads) {
  if (grid.dims() != lyap.n) throw UsageError("bound grid must have one axis per coordinate");
  const long long n = grid.size();
  const AugLayout& lay = lyap.layout;
  std::vector<int> aux;
  if (lay.p_offset >= 0) aux.push_back(lay.p_offset);
  if (lay.r_offset >= 0) aux.push_back(lay.r_offset);
  const int used = 1 + static_cast<int>(aux.size());

  Vec ratio(n);
  Mat features = Mat::Zero(n, 3);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(std::max(1, threads)));
  std::atomic<long long> next{0};
  auto work = [&](int w) {
    try {
      for (;;) {
        const long long i = next.fetch_add(1);
        if (i >= n) return;
        const Vec z = grid.coordinates(i);
        ratio[i] = neg_generator_ratio(spec, lyap, z);
        const double t = z.segment(lay.theta_offset, lay.d).norm();
        features(i, 0) = std::pow(t, 2.0 * (lyap.growth_exponent - 1.0));
        for (std::size_t b = 0; b < aux.size(); ++b)
          features(i, 1 + static_cast<Eigen::Index>(b)) = z.segment(aux[b], lay.d).squaredNorm();
      }
    } catch (...) {
      errors[static_cast<std::size_t>(w)] = std::current_exception();
      next = n;
    }
  };
  if (threads <= 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  BoundReport report;
  report.grid_meta = grid.to_json();
  report.note = "sufficient-condition check on the grid box, not a proof on the whole space";

  auto residuals = [&](const BoundConstants& c) {
    return Vec(ratio - c.A * features.col(0) - c.B * features.col(1) - c.C * features.col(2) +
               Vec::Constant(n, c.Dc));
  };

  BoundConstants c;
  if (constants) {
    c = *constants;
  } else {
    report.searched = true;
    double deficit = 0.0;
    for (long long i = 0; i < n; ++i) {
      const Vec z = grid.coordinates(i);
      bool core = true;
      for (int k = 0; k < grid.dims(); ++k) {
        const double mid = 0.5 * (grid.lo(k) + grid.hi(k));
        const double half = 0.5 * (grid.hi(k) - grid.lo(k));
        core = core && std::abs(z[k] - mid) <= 0.5 * half;
      }
      if (core) deficit = std::max(deficit, -ratio[i]);
    }
    c.Dc = 2.0 * deficit;
    const Vec slack = ratio + Vec::Constant(n, c.Dc);
    if (slack.minCoeff() >= 0.0) {
      double t = std::numeric_limits<double>::infinity();
      for (long long i = 0; i < n; ++i) {
        const double s = features.row(i).head(used).sum();
        if (s > 0.0) t = std::min(t, slack[i] / s);
      }
      if (!std::isfinite(t)) t = 0.0;
      std::array<double, 3> coef = {0.5 * t, used > 1 ? 0.5 * t : 0.0, used > 2 ? 0.5 * t : 0.0};
      for (int round = 0; round < 20; ++round) {
        for (int j = 0; j < used; ++j) {
          double best = std::numeric_limits<double>::infinity();
          for (long long i = 0; i < n; ++i) {
            if (features(i, j) <= 0.0) continue;
            double rest = slack[i];
            for (int o = 0; o < used; ++o)
              if (o != j) rest -= coef[o] * features(i, o);
            best = std::min(best, rest / features(i, j));
          }
          if (std::isfinite(best)) coef[j] = std::max(0.0, best);
        }
      }
      c.A = coef[0];
      c.B = coef[1];
      c.C = coef[2];
    }
  }

  const Vec res = residuals(c);
  Eigen::Index at = 0;
  report.min_residual = res.minCoeff(&at);
  report.argmin = grid.coordinates(at);
  report.constants = c;
  bool positive = true;
  if (report.searched) {
    positive = c.A > 0.0 && (used < 2 || c.B > 0.0) && (used < 3 || c.C > 0.0);
  }
  // Rounding in the ascent can leave residuals at -1e-15 relative to the ratio scale.
  const double tol = 1e-12 * std::max(1.0, ratio.cwiseAbs().maxCoeff());
  report.pass = positive && report.min_residual >= -tol;
  return report;
}

}  // namespace langevin
