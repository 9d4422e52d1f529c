#include <doctest.h>

#include "langevin/dynamics.hpp"
#include "langevin/errors.hpp"
#include "langevin/rng.hpp"

#include <cmath>
#include <vector>

using namespace langevin;

namespace {

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

struct Built {
  std::string label;
  DynamicsSpec spec;
};

std::vector<Built> all_variants(int d) {
  const PotentialModel u = make_gaussian(d);
  std::vector<Built> out;
  out.push_back({"overdamped", build_variant_spec(Variant::overdamped, u, {})});
  VariantParams ud;
  ud.values["gamma"] = 4.0;
  out.push_back({"underdamped", build_variant_spec(Variant::underdamped, u, ud)});
  VariantParams nr;
  nr.J = random_antisymmetric_seed(d, 3).derived();
  out.push_back({"nonreversible", build_variant_spec(Variant::nonreversible, u, nr)});
  out.push_back({"mirror", build_variant_spec(Variant::mirror, u, {}, make_arctan_mirror(d, 0.5))});
  VariantParams ho;
  ho.values["gamma"] = 20.0;
  ho.values["alpha"] = 15.0;
  out.push_back({"highorder", build_variant_spec(Variant::highorder, u, ho)});
  VariantParams hf;
  hf.values["alpha"] = 30.0;
  hf.values["beta"] = 1.0;
  out.push_back({"hfhr", build_variant_spec(Variant::hfhr, u, hf)});
  return out;
}

std::vector<Vec> cloud(int n, int count, double half, std::uint64_t seed) {
  CounterRng rng(seed, 0);
  std::vector<Vec> pts;
  for (int k = 0; k < count; ++k) {
    Vec z(n);
    for (int i = 0; i < n; ++i) z[i] = half * (2.0 * rng.uniform() - 1.0);
    pts.push_back(z);
  }
  return pts;
}

}  // namespace

TEST_CASE("hand-computed drifts") {
  const PotentialModel u1 = make_gaussian(1);
  const DynamicsSpec od = build_variant_spec(Variant::overdamped, make_gaussian(2), {});
  const Vec f0 = drift(od, vec({1, 0}));
  CHECK(f0[0] == doctest::Approx(-1.0));
  CHECK(f0[1] == doctest::Approx(0.0));

  VariantParams ud;
  ud.values["gamma"] = 4.0;
  const Vec fu = drift(build_variant_spec(Variant::underdamped, u1, ud), vec({1, 2}));
  CHECK(fu[0] == doctest::Approx(2.0));
  CHECK(fu[1] == doctest::Approx(-9.0));

  VariantParams ho;
  ho.values["gamma"] = 20.0;
  ho.values["alpha"] = 15.0;
  const Vec fh = drift(build_variant_spec(Variant::highorder, u1, ho), vec({1, 1, 1}));
  CHECK(fh[0] == doctest::Approx(1.0));
  CHECK(fh[1] == doctest::Approx(19.0));
  CHECK(fh[2] == doctest::Approx(-35.0));

  const DynamicsSpec mq =
      build_variant_spec(Variant::mirror, u1, {}, make_quartic_mirror(1, 0.0));
  CHECK(drift(mq, vec({1}))[0] == doctest::Approx(-1.0));

  VariantParams hf;
  hf.values["alpha"] = 30.0;
  hf.values["beta"] = 1.0;
  const Vec fr = drift(build_variant_spec(Variant::hfhr, u1, hf), vec({2, 3}));
  CHECK(fr[0] == doctest::Approx(3.0 - 2.0));
  CHECK(fr[1] == doctest::Approx(-90.0 - 2.0));
}

TEST_CASE("parameter validation") {
  const PotentialModel u = make_gaussian(2);
  CHECK_THROWS_AS(build_variant_spec(Variant::underdamped, u, {}), UsageError);
  VariantParams ho;
  ho.values["gamma"] = 1.0;
  CHECK_THROWS_AS(build_variant_spec(Variant::highorder, u, ho), UsageError);
  CHECK_THROWS_AS(build_variant_spec(Variant::nonreversible, u, {}), UsageError);
  VariantParams bad;
  bad.J = Mat::Zero(3, 3);
  CHECK_THROWS_AS(build_variant_spec(Variant::nonreversible, u, bad), UsageError);
  VariantParams sym;
  sym.J = Mat::Ones(2, 2);
  CHECK_THROWS_AS(build_variant_spec(Variant::nonreversible, u, sym), UsageError);
  CHECK(parse_variant("high-order") == Variant::highorder);
  CHECK_THROWS_AS(parse_variant("sgld"), UsageError);
}

TEST_CASE("antisymmetric seed") {
  const AntisymmetricMatrixSeed s = random_antisymmetric_seed(4, 9);
  const Mat j = s.derived();
  CHECK((j + j.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((random_antisymmetric_seed(4, 9).base - s.base).norm() == 0.0);
}

TEST_CASE("gamma correction") {
  for (const auto& b : all_variants(1)) {
    if (b.label == "mirror") continue;
    CHECK(gamma_correction(b.spec, Vec::Constant(b.spec.n(), 0.7)).norm() == 0.0);
  }
  // d = 1: Q vanishes and Gamma is the metric divergence.
  const DynamicsSpec mq =
      build_variant_spec(Variant::mirror, make_gaussian(1), {}, make_quartic_mirror(1, 0.0));
  CHECK(gamma_correction(mq, vec({1}))[0] == doctest::Approx(-2.0 / 3.0));

  // Analytic Gamma against differences of D + Q for the two-dimensional mirror.
  const DynamicsSpec m2 =
      build_variant_spec(Variant::mirror, make_gaussian(2), {}, make_quartic_mirror(2, 1e-3));
  DynamicsSpec::Parts parts = m2.parts();
  parts.gamma.reset();
  const DynamicsSpec m2_fd(parts);
  CounterRng rng(4, 0);
  for (int k = 0; k < 100; ++k) {
    Vec z(2);
    for (int i = 0; i < 2; ++i) {
      const double mag = 0.5 + 1.0 * rng.uniform();
      z[i] = rng.uniform() < 0.5 ? -mag : mag;
    }
    const Vec a = gamma_correction(m2, z);
    const Vec f = gamma_correction(m2_fd, z);
    CHECK((a - f).norm() <= 1e-4 * std::max(1.0, a.norm()));
  }
}

TEST_CASE("assembled drift equals the explicit SDE drift") {
  for (int d : {1, 2}) {
    for (const auto& b : all_variants(d)) {
      const auto pts = cloud(b.spec.n(), 1000, 2.0, 21);
      double worst = 0.0;
      for (const auto& z : pts) {
        const Vec e = explicit_drift(b.spec, z);
        const Vec a = assembled_drift(b.spec, z);
        worst = std::max(worst, (a - e).cwiseAbs().maxCoeff() / std::max(1.0, e.norm()));
      }
      INFO(b.label << " d=" << d);
      CHECK(worst <= 1e-10);
    }
  }
}

TEST_CASE("runtime drift equals the explicit drift") {
  for (const auto& b : all_variants(2)) {
    for (const auto& z : cloud(b.spec.n(), 200, 3.0, 5)) {
      CHECK((drift(b.spec, z) - explicit_drift(b.spec, z)).norm() <= 1e-10 * (1 + z.norm()));
    }
  }
}

TEST_CASE("invariants hold on a point cloud") {
  for (const auto& b : all_variants(2)) {
    for (const auto& z : cloud(b.spec.n(), 50, 2.0, 8)) CHECK_NOTHROW(b.spec.check_invariants(z));
  }
}

TEST_CASE("Fokker-Planck stationarity and negative controls") {
  for (const auto& b : all_variants(1)) {
    double worst = 0.0;
    for (const auto& z : cloud(b.spec.n(), 50, 3.0, 17))
      worst = std::max(worst, std::abs(stationarity_residual(b.spec, z, 1e-3)));
    INFO(b.label);
    CHECK(worst <= 1e-4);
  }
  // Underdamped without the friction term in the r equation.
  const PotentialModel u = make_gaussian(1);
  VariantParams ud;
  ud.values["gamma"] = 4.0;
  const DynamicsSpec spec = build_variant_spec(Variant::underdamped, u, ud);
  const DynamicsSpec broken = spec.with_drift(
      [](const Vec& z) -> Vec { return vec({z[1], -z[0]}); }, "no-friction");
  double worst = 0.0;
  for (const auto& z : cloud(2, 50, 3.0, 17))
    worst = std::max(worst, std::abs(stationarity_residual(broken, z, 1e-3)));
  CHECK(worst > 1e-1);
}

TEST_CASE("non-reversible stationarity in two dimensions") {
  VariantParams nr;
  nr.J = random_antisymmetric_seed(2, 1).derived();
  const DynamicsSpec spec = build_variant_spec(Variant::nonreversible, make_gaussian(2), nr);
  double worst = 0.0;
  for (const auto& z : cloud(2, 50, 3.0, 2))
    worst = std::max(worst, std::abs(stationarity_residual(spec, z, 1e-3)));
  CHECK(worst <= 1e-4);
}

TEST_CASE("curl condition") {
  VariantParams nr;
  nr.J = random_antisymmetric_seed(2, 1).derived();
  const DynamicsSpec spec = build_variant_spec(Variant::nonreversible, make_gaussian(2), nr);
  for (const auto& z : cloud(2, 20, 3.0, 4))
    CHECK(std::abs(curl_condition_residual(spec, z, 1e-3)) <= 1e-6);

  const DynamicsSpec mirror =
      build_variant_spec(Variant::mirror, make_gaussian(2), {}, make_quartic_mirror(2, 1e-3));
  for (const auto& z : cloud(2, 20, 1.0, 6))
    CHECK(std::abs(curl_condition_residual(mirror, z, 1e-3)) <= 1e-4);
}

TEST_CASE("custom specs are validated") {
  auto H = [](const Vec& z) { return 0.5 * z.squaredNorm(); };
  auto gH = [](const Vec& z) -> Vec { return z; };
  auto D = [](const Vec&) -> Mat { return Mat::Identity(2, 2); };
  auto bad_q = [](const Vec& z) -> Mat {
    Mat q(2, 2);
    q << z[0], z[0], z[1], z[1];
    return q;
  };
  CHECK_THROWS_AS(make_custom_spec(2, D, bad_q, H, gH), UsageError);
  auto good_q = [](const Vec&) -> Mat {
    Mat q(2, 2);
    q << 0, 1, -1, 0;
    return q;
  };
  const DynamicsSpec ok = make_custom_spec(2, D, good_q, H, gH);
  CHECK(drift(ok, vec({1, 0}))[1] == doctest::Approx(1.0));
  CHECK(std::abs(stationarity_residual(ok, vec({0.3, -0.4}))) <= 1e-6);
}

TEST_CASE("non-finite drift names the coordinate") {
  const DynamicsSpec od = build_variant_spec(Variant::overdamped, make_gaussian(2), {});
  try {
    drift(od, vec({1, std::nan("")}));
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(e.coordinate() == 1);
  }
}
