#include <doctest.h>

#include "langevin/errors.hpp"
#include "langevin/ratelab.hpp"
#include "langevin/rng.hpp"

#include <cmath>
#include <numbers>

using namespace langevin;

namespace {

std::shared_ptr<const GridDomain> line(double lo, double hi, int pts) {
  return std::make_shared<const GridDomain>(GridDomain::cube(1, lo, hi, pts));
}

ScalarField gaussian_H(int n) {
  return [n](const Vec& z) { return 0.5 * z.head(n).squaredNorm(); };
}

MatrixField identity(int n) {
  return [n](const Vec&) -> Mat { return Mat::Identity(n, n); };
}

PerturbationSpec sine(double m) {
  PerturbationSpec p;
  p.name = "sine";
  p.v = [m](const Vec& z) { return m * std::sin(z[0]); };
  p.gradient = [m](const Vec& z) -> Vec { return Vec::Constant(1, m * std::cos(z[0])); };
  return p;
}

// (1/4) E_nu |v'|^2 by an independent composite Simpson rule on a fine line.
double simpson_rate(const std::function<double(double)>& logdens,
                    const std::function<double(double)>& dv, double lo, double hi) {
  const int n = 20000;
  const double h = (hi - lo) / n;
  double z = 0.0;
  double num = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const double p = std::exp(logdens(x));
    z += w * p;
    num += w * p * dv(x) * dv(x);
  }
  return 0.25 * num / z;
}

}  // namespace

TEST_CASE("measure construction") {
  auto grid = line(-8, 8, 801);
  const MeasurePair same = measure_from_perturbation(grid, gaussian_H(1), constant_perturbation(0.0));
  CHECK((same.mu.values - same.nu.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK(integrate(same.nu) == doctest::Approx(1.0).epsilon(1e-14));

  const double m = 0.5;
  const MeasurePair shifted = measure_from_perturbation(grid, gaussian_H(1), gaussian_shift(1, 0, m));
  double worst = 0.0;
  for (long long i = 0; i < grid->size(); ++i) {
    const double x = grid->coordinates(i)[0];
    const double exact = std::exp(-0.5 * (x - m) * (x - m)) / std::sqrt(2 * std::numbers::pi);
    worst = std::max(worst, std::abs(shifted.nu.values[i] - exact));
  }
  CHECK(worst <= 1e-6);
  CHECK(integrate(shifted.nu) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("boundary mass check suggests a larger box") {
  try {
    measure_from_perturbation(line(-2, 2, 101), gaussian_H(1), constant_perturbation(0.0));
    FAIL("expected DomainTooSmallError");
  } catch (const DomainTooSmallError& e) {
    CHECK(e.suggested_lo()[0] < -2.0);
    CHECK(e.suggested_hi()[0] > 2.0);
  }
}

TEST_CASE("perturbation masks are spot-checked") {
  auto grid = std::make_shared<const GridDomain>(GridDomain::cube(2, -6, 6, 21));
  PerturbationSpec bad = gaussian_shift(2, 1, 0.5);
  bad.depends_on = {true, false};
  CHECK_THROWS_AS(bad.spot_check(*grid), UsageError);
  CHECK_NOTHROW(gaussian_shift(2, 1, 0.5).spot_check(*grid));
}

TEST_CASE("symmetric rate of the Gaussian shift") {
  auto grid = line(-8, 8, 801);
  for (double m : {0.25, 0.5, 1.0}) {
    const PerturbationSpec v = gaussian_shift(1, 0, m);
    const MeasurePair mp = measure_from_perturbation(grid, gaussian_H(1), v);
    CHECK(symmetric_rate(mp.nu, v, identity(1)) == doctest::Approx(m * m / 4).epsilon(0.01));
    const GridField sampled = sample_field(grid, v.v);
    CHECK(symmetric_rate(mp.nu, sampled, identity(1)) == doctest::Approx(m * m / 4).epsilon(1e-12));
  }
  const MeasurePair mp = measure_from_perturbation(grid, gaussian_H(1), constant_perturbation(3.0));
  CHECK(symmetric_rate(mp.nu, constant_perturbation(3.0), identity(1)) == 0.0);
}

TEST_CASE("symmetric rate matches an independent quadrature") {
  auto grid = line(-8, 8, 801);
  const PerturbationSpec v = sine(0.7);
  const MeasurePair mp = measure_from_perturbation(grid, gaussian_H(1), v);
  const double oracle = simpson_rate([](double x) { return -0.5 * x * x + 0.7 * std::sin(x); },
                                     [](double x) { return 0.7 * std::cos(x); }, -8, 8);
  CHECK(symmetric_rate(mp.nu, v, identity(1)) == doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("second-order convergence of the sampled-gradient rate") {
  auto reference_grid = line(-8, 8, 6401);
  const PerturbationSpec v = sine(0.8);
  const double ref = symmetric_rate(
      measure_from_perturbation(reference_grid, gaussian_H(1), v).nu, v, identity(1));
  std::vector<double> err;
  for (int pts : {201, 401, 801}) {
    auto g = line(-8, 8, pts);
    const MeasurePair mp = measure_from_perturbation(g, gaussian_H(1), v);
    err.push_back(std::abs(symmetric_rate(mp.nu, sample_field(g, v.v), identity(1)) - ref));
  }
  CHECK(std::log2(err[0] / err[1]) >= 1.8);
  CHECK(std::log2(err[1] / err[2]) >= 1.8);
}

TEST_CASE("anti-symmetric right-hand sides") {
  auto grid = std::make_shared<const GridDomain>(GridDomain::cube(2, -6, 6, 41));
  const PotentialModel u = make_gaussian(1);
  VariantParams ud;
  ud.values["gamma"] = 2.0;
  const DynamicsSpec spec = build_variant_spec(Variant::underdamped, u, ud);
  const double m = 0.5;
  const PerturbationSpec v = gaussian_shift(2, 1, m);
  auto H = [&spec](const Vec& z) { return spec.H(z); };
  const MeasurePair mp = measure_from_perturbation(grid, H, v);
  const AntisymmetricRhs rhs = antisymmetric_rhs(mp.nu, spec, v);
  for (long long i = 0; i < grid->size(); ++i)
    CHECK(rhs.field.values[i] == doctest::Approx(-grid->coordinates(i)[0] * m));

  const AntisymmetricRhs zero = antisymmetric_rhs(mp.nu, spec, constant_perturbation(0.0));
  CHECK(zero.field.values.cwiseAbs().maxCoeff() == 0.0);

  const PotentialModel u2 = make_gaussian(2);
  const DynamicsSpec mirror =
      build_variant_spec(Variant::mirror, u2, {}, make_arctan_mirror(2, 0.5));
  const MeasurePair mm = measure_from_perturbation(grid, gaussian_H(2), gaussian_shift(2, 0, m));
  CHECK(antisymmetric_rhs(mm.nu, mirror, gaussian_shift(2, 0, m)).field.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("Poisson solve reproduces psi = theta") {
  auto grid = line(-8, 8, 801);
  const MeasurePair mp = measure_from_perturbation(grid, gaussian_H(1), constant_perturbation(0.0));
  const GridField rhs = sample_field(grid, [](const Vec& z) { return z[0]; });
  for (PoissonMethod method : {PoissonMethod::dense, PoissonMethod::cg}) {
    PoissonOptions opt;
    opt.method = method;
    const PoissonResult r = solve_poisson(mp.nu, identity(1), rhs, opt);
    const double mean = integrate_against(rhs.values, mp.nu);
    CHECK((r.psi.values - (rhs.values.array() - mean).matrix()).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(std::abs(integrate_against(r.psi.values, mp.nu)) <= 1e-12);
  }
  const PoissonResult zero =
      solve_poisson(mp.nu, identity(1), GridField(grid, Vec::Zero(grid->size())));
  CHECK(zero.psi.values.cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(solve_poisson(mp.nu, identity(1), GridField(grid, Vec::Ones(grid->size()))),
                  CompatibilityError);
}

TEST_CASE("small systems agree with a dense least-squares oracle") {
  auto grid = line(-5, 5, 20);
  const MeasurePair mp = measure_from_perturbation(grid, gaussian_H(1), sine(0.5), 1e-3);
  const WeightedOperator op(mp.nu, identity(1));
  CounterRng rng(3, 0);
  Vec rhs = rng.normal_vector(grid->size());
  rhs.array() -= integrate_against(rhs, mp.nu);
  const GridField field(grid, rhs);

  // Oracle: minimum-norm least squares on K psi = M rhs, then shift to nu-mean zero.
  const Mat K = op.dense_stiffness();
  const Vec b = op.masses().cwiseProduct(rhs);
  Vec oracle = K.completeOrthogonalDecomposition().solve(b);
  oracle.array() -= op.masses().dot(oracle) / op.masses().sum();

  for (PoissonMethod method : {PoissonMethod::dense, PoissonMethod::cg}) {
    PoissonOptions opt;
    opt.method = method;
    const PoissonResult r = solve_poisson(op, field, opt);
    CHECK((r.psi.values - oracle).cwiseAbs().maxCoeff() <= 1e-8 * std::max(1.0, oracle.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("weighted operator is self-adjoint in L2(nu)") {
  auto grid = std::make_shared<const GridDomain>(GridDomain::cube(2, -6, 6, 31));
  const MeasurePair mp =
      measure_from_perturbation(grid, gaussian_H(2), gaussian_shift(2, 0, 0.3));
  MatrixField D = [](const Vec& z) -> Mat {
    Mat d = Mat::Zero(2, 2);
    d(0, 0) = 1.0 + 0.2 * z[1] * z[1];
    d(1, 1) = 2.0;
    return d;
  };
  const WeightedOperator op(mp.nu, D);
  CounterRng rng(8, 0);
  const Vec a = rng.normal_vector(grid->size());
  const Vec b = rng.normal_vector(grid->size());
  const Vec& m = op.masses();
  const double lhs = m.dot(op.apply(a).cwiseProduct(b));
  const double rhs = m.dot(a.cwiseProduct(op.apply(b)));
  CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));

  MatrixField dense = [](const Vec&) -> Mat {
    Mat d(2, 2);
    d << 1, 0.5, 0.5, 1;
    return d;
  };
  CHECK_THROWS_AS(WeightedOperator(mp.nu, dense), UsageError);
}

TEST_CASE("total rates") {
  auto grid1 = line(-8, 8, 801);
  const PotentialModel u = make_gaussian(1);
  const DynamicsSpec od = build_variant_spec(Variant::overdamped, u, {});
  const RateReport r = total_rate(grid1, od, gaussian_shift(1, 0, 0.5));
  CHECK(r.total == doctest::Approx(0.0625).epsilon(0.01));
  CHECK(r.antisymmetric == 0.0);

  auto grid2 = std::make_shared<const GridDomain>(GridDomain::cube(2, -6, 6, 81));
  VariantParams ud;
  ud.values["gamma"] = 2.0;
  const DynamicsSpec us = build_variant_spec(Variant::underdamped, u, ud);
  PerturbationSpec vr;
  vr.name = "cos-r";
  vr.v = [](const Vec& z) { return 0.6 * std::cos(z[1]); };
  vr.gradient = [](const Vec& z) -> Vec {
    Vec g(2);
    g << 0.0, -0.6 * std::sin(z[1]);
    return g;
  };
  vr.depends_on = {false, true};
  const RateReport ru = total_rate(grid2, us, vr);
  const double oracle = 2.0 * simpson_rate([](double x) { return -0.5 * x * x + 0.6 * std::cos(x); },
                                           [](double x) { return -0.6 * std::sin(x); }, -6, 6);
  CHECK(ru.symmetric == doctest::Approx(oracle).epsilon(1e-8));
  CHECK(ru.antisymmetric_finite);
  CHECK(ru.antisymmetric >= 0.0);
  CHECK(ru.total >= ru.symmetric - 1e-10);

  const DynamicsSpec mirror =
      build_variant_spec(Variant::mirror, make_gaussian(2), {}, make_arctan_mirror(2, 0.5));
  const RateReport rm = total_rate(grid2, mirror, gaussian_shift(2, 1, 0.4));
  CHECK(rm.antisymmetric == 0.0);
  CHECK(rm.total >= 0.04 - 1e-10);

  const RateReport rc = total_rate(grid2, us, constant_perturbation(1.0));
  CHECK(std::abs(rc.total) <= 1e-12);
}

TEST_CASE("degenerate diffusion with an incompatible right-hand side gives an infinite rate") {
  auto grid = std::make_shared<const GridDomain>(GridDomain::cube(2, -6, 6, 41));
  VariantParams ud;
  ud.values["gamma"] = 2.0;
  const DynamicsSpec us = build_variant_spec(Variant::underdamped, make_gaussian(1), ud);
  // v = c theta r: L_ham v = c (r^2 - theta^2) has nonzero mean on r-lines.
  PerturbationSpec v;
  v.name = "cross";
  v.v = [](const Vec& z) { return 0.3 * z[0] * z[1]; };
  v.gradient = [](const Vec& z) -> Vec {
    Vec g(2);
    g << 0.3 * z[1], 0.3 * z[0];
    return g;
  };
  const RateReport r = total_rate(grid, us, v);
  CHECK_FALSE(r.antisymmetric_finite);
  CHECK(std::isinf(r.total));
}

TEST_CASE("comparison reports") {
  auto grid = std::make_shared<const GridDomain>(GridDomain::cube(2, -6, 6, 61));
  const PotentialModel u = make_gaussian(1);
  const AugLayout lay{1, 0, -1, 1};

  VariantParams hf;
  hf.values["alpha"] = 1.5;
  hf.values["beta"] = 1.5;
  const auto fam = random_perturbation_family(4, lay, false, 11);
  const ComparisonReport rh = compare_rates(fam, Variant::hfhr, u, hf, grid);
  CHECK(rh.hypothesis_met);
  CHECK(rh.all_pass());
  for (const auto& e : rh.entries) {
    CHECK(e.margin >= -1e-4);
    REQUIRE(e.marginal_rate);
    CHECK(e.rate_variant >= *e.marginal_rate - 1e-4);
    CHECK(e.rate_variant >= -1e-10);
  }

  VariantParams ud;
  ud.values["gamma"] = 1.0;
  const auto ph = random_perturbation_family(4, lay, true, 12);
  const ComparisonReport ru = compare_rates(ph, Variant::underdamped, u, ud, grid);
  CHECK(ru.all_pass());
  for (const auto& e : ru.entries) CHECK(e.margin >= -1e-4);

  ud.values["gamma"] = 0.5;
  const ComparisonReport rn = compare_rates(ph, Variant::underdamped, u, ud, grid);
  CHECK(rn.status == "hypothesis not met");
  CHECK_FALSE(rn.entries[0].pass.has_value());
  CHECK(rn.to_csv().find("hypothesis not met") != std::string::npos);

  // Families outside P^H are rejected for the underdamped comparison.
  CHECK_THROWS_AS(compare_rates(fam, Variant::underdamped, u, ud, grid), UsageError);

  const ComparisonReport r0 =
      compare_rates({constant_perturbation(0.0)}, Variant::hfhr, u, hf, grid);
  CHECK(r0.entries[0].rate_variant == 0.0);
  CHECK(r0.entries[0].margin == 0.0);

  const std::string csv = rh.to_csv();
  CHECK(csv.rfind("name,rate_variant,rate_baseline,margin,symmetric_variant,antisymmetric_variant,pass\n", 0) == 0);
  CHECK(rh.to_json()["entries"].size() == 4);
}

TEST_CASE("random families are reproducible and respect the P^H mask") {
  const AugLayout lay{1, 0, 2, 1};
  (void)lay;
  const AugLayout ho{1, 0, 1, 2};
  const auto a = random_perturbation_family(3, ho, true, 5);
  const auto b = random_perturbation_family(3, ho, true, 5);
  auto grid = std::make_shared<const GridDomain>(GridDomain::cube(3, -6, 6, 9));
  for (int k = 0; k < 3; ++k) {
    CHECK_NOTHROW(a[k].spot_check(*grid));
    for (long long i = 0; i < grid->size(); i += 37) {
      const Vec z = grid->coordinates(i);
      CHECK(a[k].v(z) == b[k].v(z));
      Vec flipped = z;
      flipped[2] = -z[2];
      CHECK(a[k].v(z) == doctest::Approx(a[k].v(flipped)));
    }
  }
}
