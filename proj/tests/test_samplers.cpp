#include <doctest.h>

#include "langevin/errors.hpp"
#include "langevin/samplers.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace langevin;

namespace {

double max_cov_error(const Mat& cov) {
  return (cov - Mat::Identity(cov.rows(), cov.cols())).cwiseAbs().maxCoeff();
}

IntegratorConfig long_run(std::uint64_t seed, int chains) {
  IntegratorConfig c;
  c.eta = 0.01;
  c.n_steps = 200000;
  c.burn_in = 20000;
  c.n_chains = chains;
  c.seed = seed;
  c.threads = 1;
  return c;
}

}  // namespace

TEST_CASE("deterministic Euler-Maruyama step") {
  const DynamicsSpec spec = build_variant_spec(Variant::overdamped, make_gaussian(1), {});
  const NoiseFactor noise(spec);
  ChainState s(Vec::Constant(1, 1.0), 0, 0);
  em_step_with_noise(spec, noise, s, 0.1, Vec::Zero(1));
  CHECK(s.z[0] == doctest::Approx(0.9));
  CHECK(s.step == 1);
}

TEST_CASE("overdamped step uses sqrt(2 eta) noise") {
  const DynamicsSpec spec = build_variant_spec(Variant::overdamped, make_gaussian(1), {});
  const NoiseFactor noise(spec);
  ChainState s(Vec::Constant(1, 1.0), 0, 0);
  em_step_with_noise(spec, noise, s, 0.1, Vec::Constant(1, 1.0));
  CHECK(s.z[0] == doctest::Approx(0.9 + std::sqrt(0.2)));
}

TEST_CASE("noise placement for high-order and underdamped") {
  const PotentialModel u = make_gaussian(1);
  VariantParams ho;
  ho.values["gamma"] = 20.0;
  ho.values["alpha"] = 15.0;
  const DynamicsSpec spec = build_variant_spec(Variant::highorder, u, ho);
  const NoiseFactor noise(spec);
  const double eta = 0.003;
  Vec z0(3);
  z0 << 0.4, -0.2, 0.7;
  const Vec f = drift(spec, z0);
  ChainState s(z0, 0, 0);
  em_step_with_noise(spec, noise, s, eta, Vec::Ones(3));
  CHECK(s.z[0] == doctest::Approx(z0[0] + eta * f[0]));
  CHECK(s.z[1] == doctest::Approx(z0[1] + eta * f[1]));
  CHECK(s.z[2] == doctest::Approx(z0[2] + eta * f[2] + std::sqrt(2 * 15.0 * eta)));

  VariantParams ud;
  ud.values["gamma"] = 4.0;
  const DynamicsSpec us = build_variant_spec(Variant::underdamped, u, ud);
  const NoiseFactor un(us);
  Vec y0(2);
  y0 << 1.0, 2.0;
  ChainState t(y0, 0, 0);
  em_step_with_noise(us, un, t, 0.01, Vec::Ones(2));
  CHECK(t.z[0] == doctest::Approx(1.0 + 0.01 * 2.0));
  CHECK(t.z[1] == doctest::Approx(2.0 + 0.01 * -9.0 + std::sqrt(2 * 4.0 * 0.01)));
}

TEST_CASE("same seed gives the same trajectory") {
  const DynamicsSpec spec = build_variant_spec(Variant::overdamped, make_gaussian(2), {});
  ChainState a(Vec::Zero(2), 42, 3);
  ChainState b(Vec::Zero(2), 42, 3);
  ChainState c(Vec::Zero(2), 42, 4);
  for (int k = 0; k < 1000; ++k) {
    em_step(spec, a, 0.01);
    em_step(spec, b, 0.01);
    em_step(spec, c, 0.01);
  }
  CHECK((a.z - b.z).norm() == 0.0);
  CHECK((a.z - c.z).norm() > 0.0);
}

TEST_CASE("retention arithmetic") {
  const DynamicsSpec spec = build_variant_spec(Variant::overdamped, make_gaussian(1), {});
  IntegratorConfig c;
  c.eta = 0.01;
  c.burn_in = 10;
  c.n_steps = 11;
  CHECK(run_chain(spec, c, Vec::Zero(1)).summary.count() == 1);
  c.n_steps = 110;
  c.thinning = 10;
  CHECK(run_chain(spec, c, Vec::Zero(1)).summary.count() == 10);
  c.burn_in = 110;
  CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("merging is order independent") {
  const DynamicsSpec spec = build_variant_spec(Variant::overdamped, make_gaussian(2), {});
  IntegratorConfig c;
  c.eta = 0.01;
  c.n_steps = 5000;
  c.seed = 5;
  std::vector<EnsembleSummary> parts;
  for (int id = 0; id < 4; ++id)
    parts.push_back(run_chain(spec, c, Vec::Zero(2), static_cast<std::uint64_t>(id)).summary);
  EnsembleSummary ab = parts[0];
  for (int id : {1, 2, 3}) ab.merge(parts[id]);
  EnsembleSummary ba = parts[3];
  for (int id : {1, 0, 2}) ba.merge(parts[id]);
  CHECK(ab.count() == ba.count());
  CHECK((ab.mean() - ba.mean()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((ab.second_moment() - ba.second_moment()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(ab.histogram(0) == ba.histogram(0));
  CHECK((ab.second_moment() - ab.second_moment().transpose()).norm() == 0.0);

  c.n_chains = 4;
  c.threads = 2;
  const EnsembleSummary ens = run_ensemble(spec, c);
  CHECK((ens.mean() - ab.mean()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("single-chain ensemble equals run_chain") {
  const DynamicsSpec spec = build_variant_spec(Variant::overdamped, make_gaussian(2), {});
  IntegratorConfig c;
  c.eta = 0.01;
  c.n_steps = 3000;
  c.seed = 9;
  const EnsembleSummary a = run_ensemble(spec, c);
  const EnsembleSummary b = run_chain(spec, c, Vec::Zero(2)).summary;
  CHECK((a.mean() - b.mean()).norm() == 0.0);
  CHECK((a.covariance() - b.covariance()).norm() == 0.0);
}

TEST_CASE("Gaussian target moments, overdamped and underdamped") {
  const PotentialModel u = make_gaussian(2);
  const EnsembleSummary od =
      run_ensemble(build_variant_spec(Variant::overdamped, u, {}), long_run(1, 4));
  CHECK(od.theta_mean().cwiseAbs().maxCoeff() <= 0.05);
  CHECK(max_cov_error(od.theta_covariance()) <= 0.1);

  VariantParams ud;
  ud.values["gamma"] = 2.0;
  const EnsembleSummary us =
      run_ensemble(build_variant_spec(Variant::underdamped, u, ud), long_run(2, 4));
  CHECK(us.theta_mean().cwiseAbs().maxCoeff() <= 0.05);
  CHECK(max_cov_error(us.theta_covariance()) <= 0.1);
}

TEST_CASE("Monte Carlo error shrinks with more chains") {
  const DynamicsSpec spec = build_variant_spec(Variant::overdamped, make_gaussian(1), {});
  IntegratorConfig c;
  c.eta = 0.05;
  c.n_steps = 20000;
  c.burn_in = 1000;
  double err1 = 0.0;
  double err8 = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    c.seed = seed;
    c.n_chains = 1;
    err1 += run_ensemble(spec, c).mean().squaredNorm();
    c.n_chains = 8;
    err8 += run_ensemble(spec, c).mean().squaredNorm();
  }
  // Expected ratio of mean-square errors is 8.
  CHECK(err8 < err1 / 3.0);
}

TEST_CASE("KS distance") {
  const DynamicsSpec spec = build_variant_spec(Variant::overdamped, make_gaussian(1), {});
  EnsembleSummary exact(1, spec.layout());
  CounterRng rng(77, 0);
  for (int i = 0; i < 100000; ++i) exact.add(Vec::Constant(1, rng.normal()));
  CHECK(ks_distance_marginal(exact, 0, standard_normal_cdf) <= 0.01);

  EnsembleSummary constant(1, spec.layout());
  for (int i = 0; i < 100; ++i) constant.add(Vec::Zero(1));
  CHECK(ks_distance_marginal(constant, 0, standard_normal_cdf) >= 0.49);

  EnsembleSummary empty(1, spec.layout());
  CHECK_THROWS_AS(ks_distance_marginal(empty, 0, standard_normal_cdf), UsageError);

  const EnsembleSummary chain = run_ensemble(spec, long_run(3, 1));
  CHECK(ks_distance_marginal(chain, 0, standard_normal_cdf) <= 0.02);
}

TEST_CASE("stepsize bias decreases with eta") {
  const int d = 100;
  const DynamicsSpec spec = build_variant_spec(Variant::overdamped, make_gaussian(d), {});
  std::vector<double> errors;
  for (double eta : {0.04, 0.02, 0.01}) {
    IntegratorConfig c;
    c.eta = eta;
    c.n_steps = static_cast<long long>(10000.0 / eta);
    c.burn_in = static_cast<long long>(20.0 / eta);
    c.seed = 31;
    const EnsembleSummary s = run_ensemble(spec, c, Vec::Zero(d), HistogramSpec{-8, 8, 16});
    const Mat second = s.second_moment();
    double mse = 0.0;
    for (int i = 0; i < d; ++i) mse += (second(i, i) - 1.0) * (second(i, i) - 1.0);
    errors.push_back(mse / d);
  }
  CHECK(errors[0] > errors[1]);
  CHECK(errors[1] > errors[2]);
}

TEST_CASE("divergence is reported with the step and eta") {
  const DynamicsSpec spec = build_variant_spec(Variant::overdamped, make_double_well(1), {});
  IntegratorConfig c;
  c.eta = 1.0;
  c.n_steps = 1000;
  c.n_chains = 2;
  try {
    run_ensemble(spec, c, Vec::Constant(1, 10.0));
    FAIL("expected divergence");
  } catch (const EnsembleDivergenceError& e) {
    CHECK(e.failed_chains().size() == 2);
    CHECK(e.eta() == 1.0);
    CHECK(e.step() >= 1);
    CHECK(e.last_finite_state().allFinite());
  }
}

TEST_CASE("trajectory spill") {
  const auto dir = std::filesystem::temp_directory_path() / "langevin_traj_test";
  std::filesystem::remove_all(dir);
  const DynamicsSpec spec = build_variant_spec(Variant::overdamped, make_gaussian(2), {});
  IntegratorConfig c;
  c.eta = 0.01;
  c.n_steps = 20;
  c.trajectory_dir = dir.string();
  const ChainResult r = run_chain(spec, c, Vec::Zero(2));
  REQUIRE(r.trajectory_path);
  std::ifstream in(*r.trajectory_path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "step,z0,z1");
  int lines = 0;
  std::string line;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 20);
  std::filesystem::remove_all(dir);
}

TEST_CASE("summary JSON is stable") {
  const DynamicsSpec spec = build_variant_spec(Variant::overdamped, make_gaussian(1), {});
  IntegratorConfig c;
  c.eta = 0.01;
  c.n_steps = 500;
  c.seed = 4;
  CHECK(run_ensemble(spec, c).to_json().dump() == run_ensemble(spec, c).to_json().dump());
}
