#include "langevin/blr.hpp"
#include "langevin/dynamics.hpp"
#include "langevin/errors.hpp"
#include "langevin/grid.hpp"
#include "langevin/lyapunov.hpp"
#include "langevin/potentials.hpp"
#include "langevin/ratelab.hpp"
#include "langevin/samplers.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace py = pybind11;
using namespace langevin;

namespace {

py::object to_python(const nlohmann::json& j) {
  switch (j.type()) {
    case nlohmann::json::value_t::null:
      return py::none();
    case nlohmann::json::value_t::boolean:
      return py::bool_(j.get<bool>());
    case nlohmann::json::value_t::number_integer:
      return py::int_(j.get<long long>());
    case nlohmann::json::value_t::number_unsigned:
      return py::int_(j.get<unsigned long long>());
    case nlohmann::json::value_t::number_float:
      return py::float_(j.get<double>());
    case nlohmann::json::value_t::string:
      return py::str(j.get<std::string>());
    case nlohmann::json::value_t::array: {
      py::list out;
      for (const auto& x : j) out.append(to_python(x));
      return out;
    }
    case nlohmann::json::value_t::object: {
      py::dict out;
      for (auto it = j.begin(); it != j.end(); ++it) out[py::str(it.key())] = to_python(it.value());
      return out;
    }
    default:
      return py::none();
  }
}

VariantParams make_params(Variant variant, int dim, const std::map<std::string, double>& values,
                          std::uint64_t j_seed) {
  VariantParams p;
  p.values = values;
  if (variant == Variant::nonreversible) p.J = random_antisymmetric_seed(dim, j_seed).derived();
  return p;
}

std::shared_ptr<const GridDomain> make_grid(int dims, double lo, double hi, int points) {
  return std::make_shared<const GridDomain>(GridDomain::cube(dims, lo, hi, points));
}

Dataset make_dataset(const Mat& features, const Eigen::VectorXi& labels) {
  Dataset d;
  d.features = features;
  d.labels = labels;
  d.validate();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Generalized Langevin dynamics: samplers, rate functions, Lyapunov checks and BLR";

  auto numeric = py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "DataError", PyExc_OSError);
  (void)numeric;

  py::class_<PotentialModel>(m, "Potential")
      .def_property_readonly("name", &PotentialModel::name)
      .def_property_readonly("dim", &PotentialModel::dim)
      .def("value", &PotentialModel::value)
      .def("gradient", &PotentialModel::gradient)
      .def("hessian", &PotentialModel::hessian)
      .def("laplacian", &PotentialModel::laplacian);

  m.def("gaussian", &make_gaussian, py::arg("dim"));
  m.def("double_well", &make_double_well, py::arg("dim"));
  m.def("diagonal_gaussian", &make_diagonal_gaussian, py::arg("variances"));

  py::class_<MirrorMetric>(m, "Mirror")
      .def_property_readonly("name", &MirrorMetric::name)
      .def_property_readonly("dim", &MirrorMetric::dim)
      .def("metric_diagonal", &MirrorMetric::metric_diagonal);

  m.def("quartic_mirror", &make_quartic_mirror, py::arg("dim"), py::arg("eps") = kDefaultMirrorEps);
  m.def("arctan_mirror", &make_arctan_mirror, py::arg("dim"), py::arg("c"));

  py::class_<DynamicsSpec>(m, "Dynamics")
      .def_property_readonly("name", &DynamicsSpec::name)
      .def_property_readonly("n", &DynamicsSpec::n)
      .def_property_readonly("variant", [](const DynamicsSpec& s) { return to_string(s.variant()); })
      .def_property_readonly("blocks", [](const DynamicsSpec& s) { return s.layout().block_names(); })
      .def("drift", [](const DynamicsSpec& s, const Vec& z) { return drift(s, z); })
      .def("D", &DynamicsSpec::D)
      .def("Q", &DynamicsSpec::Q)
      .def("H", &DynamicsSpec::H)
      .def("grad_H", &DynamicsSpec::grad_H)
      .def(
          "stationarity_residual",
          [](const DynamicsSpec& s, const Vec& z, double fd) { return stationarity_residual(s, z, fd); },
          py::arg("z"), py::arg("fd_step") = kDefaultFdStep);

  m.def(
      "dynamics",
      [](const std::string& variant, const PotentialModel& potential,
         const std::map<std::string, double>& params, std::optional<MirrorMetric> mirror,
         std::uint64_t j_seed) {
        const Variant v = parse_variant(variant);
        if (v == Variant::mirror && !mirror) mirror = make_quartic_mirror(potential.dim());
        return build_variant_spec(v, potential, make_params(v, potential.dim(), params, j_seed), mirror);
      },
      py::arg("variant"), py::arg("potential"), py::arg("params") = std::map<std::string, double>{},
      py::arg("mirror") = py::none(), py::arg("j_seed") = 0);

  m.def(
      "run_ensemble",
      [](const DynamicsSpec& spec, double eta, long long n_steps, long long burn_in, long long thinning,
         int n_chains, std::uint64_t seed, int threads) {
        IntegratorConfig c;
        c.eta = eta;
        c.n_steps = n_steps;
        c.burn_in = burn_in;
        c.thinning = thinning;
        c.n_chains = n_chains;
        c.seed = seed;
        c.threads = threads;
        nlohmann::json out;
        {
          py::gil_scoped_release release;
          out = run_ensemble(spec, c).to_json();
        }
        return to_python(out);
      },
      py::arg("dynamics"), py::arg("eta"), py::arg("n_steps"), py::arg("burn_in") = 0,
      py::arg("thinning") = 1, py::arg("n_chains") = 1, py::arg("seed") = 0, py::arg("threads") = 0);

  m.def(
      "shift_rate",
      [](const DynamicsSpec& spec, double lo, double hi, int points, int coord, double shift) {
        nlohmann::json out;
        {
          py::gil_scoped_release release;
          out = total_rate(make_grid(spec.n(), lo, hi, points), spec, gaussian_shift(spec.n(), coord, shift))
                    .to_json();
        }
        return to_python(out);
      },
      py::arg("dynamics"), py::arg("lo"), py::arg("hi"), py::arg("points"), py::arg("coord"),
      py::arg("shift"));

  m.def(
      "compare_rates",
      [](const std::string& variant, const PotentialModel& potential,
         const std::map<std::string, double>& params, double lo, double hi, int points, int count,
         std::uint64_t seed, bool ph_class, std::optional<MirrorMetric> mirror, int threads) {
        const Variant v = parse_variant(variant);
        if (v == Variant::mirror && !mirror) mirror = make_quartic_mirror(potential.dim());
        const VariantParams vp = make_params(v, potential.dim(), params, seed);
        const DynamicsSpec spec = build_variant_spec(v, potential, vp, mirror);
        ComparisonOptions options;
        options.threads = threads;
        nlohmann::json out;
        {
          py::gil_scoped_release release;
          const auto family = random_perturbation_family(count, spec.layout(), ph_class, seed);
          out = compare_rates(family, v, potential, vp, make_grid(spec.n(), lo, hi, points), mirror, options)
                    .to_json();
        }
        return to_python(out);
      },
      py::arg("variant"), py::arg("potential"), py::arg("params"), py::arg("lo"), py::arg("hi"),
      py::arg("points"), py::arg("count") = 5, py::arg("seed") = 0, py::arg("ph_class") = false,
      py::arg("mirror") = py::none(), py::arg("threads") = 1);

  m.def(
      "lyapunov_bound",
      [](const std::string& kind_name, const PotentialModel& potential,
         const std::map<std::string, double>& params, double lo, double hi, int points, int threads) {
        const LyapunovKind kind = parse_lyapunov_kind(kind_name);
        LyapunovParams lp;
        lp.values = params;
        Variant variant = Variant::overdamped;
        VariantParams vp;
        if (kind == LyapunovKind::hfhr) {
          variant = Variant::hfhr;
          vp.values = {{"alpha", lp.require("alpha")}, {"beta", lp.require("beta")}};
        } else if (kind == LyapunovKind::highorder) {
          variant = Variant::highorder;
          vp.values = {{"alpha", lp.require("alpha")}, {"gamma", lp.require("gamma")}};
        }
        const DynamicsSpec spec = build_variant_spec(variant, potential, vp);
        if (kind == LyapunovKind::highorder) lp.shift_grid = GridDomain::cube(spec.n(), lo, hi, points);
        nlohmann::json out;
        {
          py::gil_scoped_release release;
          const LyapunovSpec w = build_lyapunov(kind, potential, lp);
          const BoundReport r =
              verify_quadratic_bound(spec, w, GridDomain::cube(spec.n(), lo, hi, points), std::nullopt, threads);
          out = {{"lyapunov", w.to_json()}, {"bound", r.to_json()}};
        }
        return to_python(out);
      },
      py::arg("kind"), py::arg("potential"), py::arg("params"), py::arg("lo"), py::arg("hi"),
      py::arg("points"), py::arg("threads") = 1);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("features"), py::arg("labels"))
      .def_readonly("features", &Dataset::features)
      .def_readonly("labels", &Dataset::labels)
      .def_readonly("feature_names", &Dataset::feature_names)
      .def_property_readonly("rows", &Dataset::rows)
      .def_property_readonly("cols", &Dataset::cols)
      .def_property_readonly("positive_fraction", &Dataset::positive_fraction);

  m.def(
      "synthetic_blr",
      [](long n, int d, std::uint64_t seed, double feature_scale, double prior_scale) {
        SyntheticConfig c;
        c.n = n;
        c.d = d;
        c.seed = seed;
        c.feature_scale = feature_scale;
        c.prior_scale = prior_scale;
        SyntheticData s = gen_synthetic(c);
        return py::make_tuple(s.data, s.true_weights);
      },
      py::arg("n"), py::arg("d"), py::arg("seed") = 0, py::arg("feature_scale") = 10.0,
      py::arg("prior_scale") = 10.0);

  m.def("load_wdbc", &load_wdbc, py::arg("path"));

  m.def(
      "split",
      [](const Dataset& data, double train_fraction, std::uint64_t seed, bool standardize) {
        SplitResult s = split_standardize(data, train_fraction, seed, standardize);
        return py::make_tuple(s.train, s.test);
      },
      py::arg("data"), py::arg("train_fraction") = 0.8, py::arg("seed") = 0, py::arg("standardize") = true);

  m.def("accuracy", &accuracy, py::arg("weights"), py::arg("data"));

  m.def(
      "map_estimate",
      [](const Dataset& train, double lambda) {
        MapResult r;
        {
          py::gil_scoped_release release;
          r = map_estimate(make_blr_potential(train, lambda), train, lambda);
        }
        return py::make_tuple(r.weights, r.iterations, r.gradient_norm);
      },
      py::arg("train"), py::arg("lam") = 10.0);

  m.def(
      "blr_experiment",
      [](const std::string& variant, const Dataset& train, const Dataset& test, long long n_steps,
         long long eval_every, std::uint64_t seed, bool real_data, bool running_mean,
         std::optional<double> eta) {
        ExperimentConfig c = default_experiment(parse_variant(variant), real_data);
        c.n_steps = n_steps;
        c.eval_every = eval_every;
        c.seed = seed;
        if (running_mean) c.prediction_rule = PredictionRule::running_mean;
        if (eta) c.eta = *eta;
        AccuracyTrajectory t;
        {
          py::gil_scoped_release release;
          t = run_experiment(c, train, test);
        }
        std::vector<long long> steps;
        std::vector<double> acc;
        for (const auto& row : t.rows) {
          steps.push_back(row.step);
          acc.push_back(row.accuracy);
        }
        py::dict out;
        out["config"] = to_python(c.to_json());
        out["steps"] = steps;
        out["accuracy"] = acc;
        out["diverged"] = t.diverged;
        out["final_weights"] = t.final_weights;
        return out;
      },
      py::arg("variant"), py::arg("train"), py::arg("test"), py::arg("n_steps") = 20000,
      py::arg("eval_every") = 1000, py::arg("seed") = 0, py::arg("real_data") = false,
      py::arg("running_mean") = false, py::arg("eta") = py::none());
}
