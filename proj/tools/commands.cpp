#include "commands.hpp"

#include "langevin/blr.hpp"
#include "langevin/dynamics.hpp"
#include "langevin/errors.hpp"
#include "langevin/io.hpp"
#include "langevin/lyapunov.hpp"
#include "langevin/ratelab.hpp"
#include "langevin/rng.hpp"
#include "langevin/samplers.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>
#include <vector>

namespace langevin::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Read-only view of one config object that remembers its dotted path, so
// schema errors can name the offending field.
class Node {
 public:
  Node(const json& value, std::string path) : value_(&value), path_(std::move(path)) {
    if (!value_->is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  bool has(const std::string& key) const { return value_->contains(key); }
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] static void fail(const std::string& field, const std::string& what) {
    throw UsageError("config field '" + field + "': " + what);
  }

  const json& at(const std::string& key) const {
    if (!has(key)) fail(field(key), "required field is missing");
    return value_->at(key);
  }

  double number(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_number()) fail(field(key), "expected a number");
    return v.get<double>();
  }
  double number_or(const std::string& key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }

  long long integer(const std::string& key) const {
    const json& v = at(key);
    if (v.is_number_integer()) return v.get<long long>();
    if (v.is_number_float()) {
      const double x = v.get<double>();
      if (std::isfinite(x) && std::floor(x) == x && std::abs(x) < 9e15) return static_cast<long long>(x);
    }
    fail(field(key), "expected an integer");
  }
  long long integer_or(const std::string& key, long long fallback) const {
    return has(key) ? integer(key) : fallback;
  }

  std::uint64_t seed(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const long long s = integer(key);
    if (s < 0) fail(field(key), "expected a nonnegative integer");
    return static_cast<std::uint64_t>(s);
  }

  std::string string(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_string()) fail(field(key), "expected a string");
    return v.get<std::string>();
  }
  std::string string_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? string(key) : fallback;
  }

  bool boolean_or(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_boolean()) fail(field(key), "expected true or false");
    return v.get<bool>();
  }

  Node child(const std::string& key) const { return Node(at(key), field(key)); }
  std::optional<Node> child_if(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return child(key);
  }

  std::vector<double> numbers(const std::string& key) const {
    const json& v = at(key);
    std::vector<double> out;
    if (v.is_number()) return {v.get<double>()};
    if (!v.is_array()) fail(field(key), "expected a number or a list of numbers");
    for (const auto& x : v) {
      if (!x.is_number()) fail(field(key), "expected a list of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  std::map<std::string, double> number_map() const {
    std::map<std::string, double> out;
    for (auto it = value_->begin(); it != value_->end(); ++it) {
      if (!it.value().is_number()) fail(field(it.key()), "expected a number");
      out[it.key()] = it.value().get<double>();
    }
    return out;
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (auto it = value_->begin(); it != value_->end(); ++it)
      if (!ok.count(it.key())) fail(field(it.key()), "unknown field");
  }

  const json& raw() const { return *value_; }
  const std::string& path() const { return path_; }

 private:
  const json* value_;
  std::string path_;
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

struct Context {
  std::string command;
  json config;
  std::string digest;
  std::uint64_t seed = 0;
  bool seed_overridden = false;
  std::string out_dir;
  int threads = 1;
  std::vector<std::string> outputs;
  std::vector<std::string> deviations;
  std::string started;

  std::string path(const std::string& name) const { return (fs::path(out_dir) / name).string(); }

  void write(const std::string& name, const std::string& content) {
    atomic_write(path(name), content);
    record(name);
  }
  void write_json(const std::string& name, const json& value) { write(name, value.dump(2) + "\n"); }
  void record(const std::string& name) {
    if (std::find(outputs.begin(), outputs.end(), name) == outputs.end()) outputs.push_back(name);
  }
};

PotentialModel build_potential(const Node& node) {
  node.allow({"kind", "dim", "variances"});
  const std::string kind = node.string("kind");
  if (kind == "gaussian") {
    const long long d = node.integer_or("dim", 1);
    if (d < 1) Node::fail(node.field("dim"), "must be at least 1");
    return make_gaussian(static_cast<int>(d));
  }
  if (kind == "double_well") {
    const long long d = node.integer_or("dim", 1);
    if (d < 1) Node::fail(node.field("dim"), "must be at least 1");
    return make_double_well(static_cast<int>(d));
  }
  if (kind == "diagonal_gaussian") {
    const std::vector<double> v = node.numbers("variances");
    return make_diagonal_gaussian(Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  Node::fail(node.field("kind"), "unknown potential '" + kind + "' (gaussian, double_well, diagonal_gaussian)");
}

std::optional<MirrorMetric> build_mirror(const std::optional<Node>& node, int dim) {
  if (!node) return std::nullopt;
  node->allow({"kind", "eps", "c"});
  const std::string kind = node->string_or("kind", "quartic");
  if (kind == "quartic") return make_quartic_mirror(dim, node->number_or("eps", kDefaultMirrorEps));
  if (kind == "arctan") return make_arctan_mirror(dim, node->number_or("c", 1.0));
  Node::fail(node->field("kind"), "unknown mirror map '" + kind + "' (quartic, arctan)");
}

Variant variant_field(const Node& node, const std::string& key) {
  try {
    return parse_variant(node.string(key));
  } catch (const UsageError& e) {
    Node::fail(node.field(key), e.what());
  }
}

VariantParams build_params(const Node& root, Variant variant, int dim, std::uint64_t seed) {
  VariantParams p;
  if (auto params = root.child_if("params")) p.values = params->number_map();
  if (variant == Variant::nonreversible)
    p.J = random_antisymmetric_seed(dim, root.seed("j_seed", seed)).derived();
  return p;
}

DynamicsSpec build_spec(const Node& root, Variant variant, const PotentialModel& potential,
                        std::uint64_t seed) {
  const VariantParams params = build_params(root, variant, potential.dim(), seed);
  std::optional<MirrorMetric> mirror = build_mirror(root.child_if("mirror"), potential.dim());
  if (variant == Variant::mirror && !mirror) mirror = make_quartic_mirror(potential.dim());
  return build_variant_spec(variant, potential, params, mirror);
}

std::shared_ptr<const GridDomain> build_grid(const Node& node, int dims) {
  node.allow({"lo", "hi", "points"});
  auto expand = [&](const std::string& key) {
    std::vector<double> v = node.numbers(key);
    if (v.size() == 1) v.assign(static_cast<std::size_t>(dims), v[0]);
    if (static_cast<int>(v.size()) != dims)
      Node::fail(node.field(key), "expected " + std::to_string(dims) + " entries");
    return v;
  };
  const std::vector<double> lo = expand("lo");
  const std::vector<double> hi = expand("hi");
  const std::vector<double> pts = expand("points");
  std::vector<int> points;
  for (double x : pts) {
    if (x < 3 || std::floor(x) != x) Node::fail(node.field("points"), "expected integers >= 3");
    points.push_back(static_cast<int>(x));
  }
  return std::make_shared<const GridDomain>(lo, hi, points);
}

// ---------------------------------------------------------------- sample

int cmd_sample(Context& ctx) {
  const Node root(ctx.config, "");
  root.allow({"command", "seed", "variant", "potential", "params", "mirror", "j_seed", "integrator",
              "init", "trajectories", "histogram", "out_dir", "threads"});
  const Variant variant = variant_field(root, "variant");
  const PotentialModel potential = build_potential(root.child("potential"));
  const DynamicsSpec spec = build_spec(root, variant, potential, ctx.seed);

  const Node integ = root.child("integrator");
  integ.allow({"eta", "n_steps", "burn_in", "thinning", "n_chains"});
  IntegratorConfig ic;
  ic.eta = integ.number("eta");
  ic.n_steps = integ.integer("n_steps");
  ic.burn_in = integ.integer_or("burn_in", 0);
  ic.thinning = integ.integer_or("thinning", 1);
  ic.n_chains = static_cast<int>(integ.integer_or("n_chains", 1));
  ic.seed = ctx.seed;
  ic.threads = ctx.threads;
  if (root.boolean_or("trajectories", false)) ic.trajectory_dir = ctx.path("trajectories");
  try {
    ic.validate();
  } catch (const UsageError& e) {
    throw UsageError(std::string("config section 'integrator': ") + e.what());
  }

  Vec init = Vec::Zero(spec.n());
  if (root.has("init")) {
    const std::vector<double> v = root.numbers("init");
    if (static_cast<int>(v.size()) != spec.n())
      Node::fail("init", "expected " + std::to_string(spec.n()) + " entries");
    init = Eigen::Map<const Vec>(v.data(), spec.n());
  }
  HistogramSpec hist;
  if (auto h = root.child_if("histogram")) {
    h->allow({"lo", "hi", "bins"});
    hist.lo = h->number_or("lo", hist.lo);
    hist.hi = h->number_or("hi", hist.hi);
    hist.bins = static_cast<int>(h->integer_or("bins", hist.bins));
    if (!(hist.hi > hist.lo) || hist.bins < 1) Node::fail("histogram", "needs lo < hi and bins >= 1");
  }

  json meta = {{"variant", to_string(variant)},
               {"dynamics", spec.name()},
               {"potential", potential.name()},
               {"n", spec.n()},
               {"integrator",
                {{"eta", ic.eta},
                 {"n_steps", ic.n_steps},
                 {"burn_in", ic.burn_in},
                 {"thinning", ic.thinning},
                 {"n_chains", ic.n_chains},
                 {"seed", ic.seed}}}};

  auto record_trajectories = [&]() {
    if (!ic.trajectory_dir) return;
    for (int c = 0; c < ic.n_chains; ++c) {
      const std::string name = "trajectories/chain_" + std::to_string(c) + ".csv";
      if (file_exists(ctx.path(name))) ctx.record(name);
    }
  };

  try {
    const EnsembleSummary summary = run_ensemble(spec, ic, init, hist);
    json out = meta;
    out["status"] = "ok";
    out["summary"] = summary.to_json();
    ctx.write_json("summary.json", out);
    record_trajectories();
    return kExitOk;
  } catch (const EnsembleDivergenceError& e) {
    json out = meta;
    out["status"] = "diverged";
    out["failure"] = {{"message", e.what()},
                      {"step", e.step()},
                      {"eta", e.eta()},
                      {"failed_chains", e.failed_chains()},
                      {"last_finite_state", to_json(e.last_finite_state())}};
    if (e.partial_summary()) out["partial_summary"] = e.partial_summary()->to_json();
    ctx.write_json("summary_partial.json", out);
    record_trajectories();
    throw;
  }
}

// ---------------------------------------------------------------- rates

std::vector<PerturbationSpec> build_family(const Node& node, const AugLayout& layout,
                                           Variant variant, std::uint64_t seed) {
  node.allow({"kind", "count", "ph_class", "seed", "coord", "shifts", "value"});
  const std::string kind = node.string_or("kind", "random");
  const int n = layout.n();
  if (kind == "random") {
    const bool default_ph = variant == Variant::underdamped || variant == Variant::highorder;
    const long long count = node.integer_or("count", 20);
    if (count < 1) Node::fail(node.field("count"), "must be at least 1");
    return random_perturbation_family(static_cast<int>(count), layout,
                                      node.boolean_or("ph_class", default_ph),
                                      node.seed("seed", seed));
  }
  if (kind == "gaussian_shift") {
    const long long coord = node.integer("coord");
    if (coord < 0 || coord >= n) Node::fail(node.field("coord"), "outside the state");
    std::vector<PerturbationSpec> out;
    for (double m : node.numbers("shifts")) {
      PerturbationSpec v = gaussian_shift(n, static_cast<int>(coord), m);
      std::ostringstream name;
      name << "shift" << coord << "_" << format_double(m);
      v.name = name.str();
      out.push_back(std::move(v));
    }
    return out;
  }
  if (kind == "constant") {
    PerturbationSpec v = constant_perturbation(node.number_or("value", 0.0));
    v.name = "constant";
    return {v};
  }
  Node::fail(node.field("kind"), "unknown family '" + kind + "' (random, gaussian_shift, constant)");
}

int cmd_rates(Context& ctx) {
  const Node root(ctx.config, "");
  root.allow({"command", "seed", "variant", "potential", "params", "mirror", "j_seed", "grid",
              "family", "epsilon_solver", "poisson", "out_dir", "threads"});
  const Variant variant = variant_field(root, "variant");
  const PotentialModel potential = build_potential(root.child("potential"));
  const VariantParams params = build_params(root, variant, potential.dim(), ctx.seed);
  std::optional<MirrorMetric> mirror = build_mirror(root.child_if("mirror"), potential.dim());
  if (variant == Variant::mirror && !mirror) mirror = make_quartic_mirror(potential.dim());
  const DynamicsSpec spec = build_variant_spec(variant, potential, params, mirror);

  const auto grid = build_grid(root.child("grid"), spec.n());
  const std::vector<PerturbationSpec> family =
      build_family(root.child("family"), spec.layout(), variant, ctx.seed);

  ComparisonOptions opt;
  opt.epsilon_solver = root.number_or("epsilon_solver", opt.epsilon_solver);
  opt.threads = ctx.threads;
  if (auto p = root.child_if("poisson")) {
    p->allow({"method", "tolerance", "dense_threshold", "max_iterations"});
    const std::string m = p->string_or("method", "automatic");
    if (m == "automatic") opt.poisson.method = PoissonMethod::automatic;
    else if (m == "cg") opt.poisson.method = PoissonMethod::cg;
    else if (m == "dense") opt.poisson.method = PoissonMethod::dense;
    else Node::fail(p->field("method"), "expected automatic, cg or dense");
    opt.poisson.tolerance = p->number_or("tolerance", opt.poisson.tolerance);
    opt.poisson.dense_threshold = p->integer_or("dense_threshold", opt.poisson.dense_threshold);
    opt.poisson.max_iterations = p->integer_or("max_iterations", opt.poisson.max_iterations);
  }

  const ComparisonReport report =
      compare_rates(family, variant, potential, params, grid, mirror, opt);
  ctx.write("comparison.csv", report.to_csv());
  ctx.write_json("comparison.json", report.to_json());
  if (report.status == "hypothesis not met")
    ctx.deviations.push_back("hypothesis not met: " + report.hypothesis);
  std::cout << "status: " << report.status << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- blr

int cmd_blr(Context& ctx) {
  const Node root(ctx.config, "");
  root.allow({"command", "seed", "data", "split", "lambda", "variants", "experiment",
              "variant_overrides", "out_dir", "threads"});

  const Node data = root.child("data");
  const std::string source = data.string("source");
  Dataset dataset;
  bool real = false;
  if (source == "synthetic") {
    data.allow({"source", "n", "d", "feature_scale", "prior_scale", "seed"});
    SyntheticConfig sc;
    sc.n = static_cast<long>(data.integer_or("n", sc.n));
    sc.d = static_cast<int>(data.integer_or("d", sc.d));
    sc.feature_scale = data.number_or("feature_scale", sc.feature_scale);
    sc.prior_scale = data.number_or("prior_scale", sc.prior_scale);
    sc.seed = data.seed("seed", ctx.seed);
    dataset = gen_synthetic(sc).data;
  } else if (source == "wdbc" || source == "csv") {
    data.allow({"source", "path"});
    std::string path = data.string("path");
    if (fs::path(path).is_relative() && !file_exists(path)) {
      const char* base = std::getenv("LANGEVIN_DATA_DIR");
      if (base) path = (fs::path(base) / path).string();
    }
    if (!file_exists(path)) throw IoError("data file not found: " + path);
    dataset = source == "wdbc" ? load_wdbc(path) : dataset_from_csv(read_text_file(path));
    real = true;
  } else {
    Node::fail(data.field("source"), "expected synthetic, wdbc or csv");
  }

  double fraction = 0.8;
  std::uint64_t split_seed = ctx.seed;
  bool standardize = real;
  if (auto s = root.child_if("split")) {
    s->allow({"train_fraction", "seed", "standardize"});
    fraction = s->number_or("train_fraction", fraction);
    split_seed = s->seed("seed", split_seed);
    standardize = s->boolean_or("standardize", standardize);
  }
  const SplitResult split = split_standardize(dataset, fraction, split_seed, standardize);
  const double lambda = root.number_or("lambda", 10.0);

  std::vector<Variant> variants;
  if (!root.has("variants") || (root.at("variants").is_string() && root.string("variants") == "all")) {
    variants = {Variant::overdamped, Variant::underdamped, Variant::nonreversible,
                Variant::mirror,     Variant::highorder,   Variant::hfhr};
  } else {
    const json& list = root.at("variants");
    if (!list.is_array()) Node::fail("variants", "expected \"all\" or a list of variant names");
    for (const auto& v : list) {
      if (!v.is_string()) Node::fail("variants", "expected variant names");
      try {
        variants.push_back(parse_variant(v.get<std::string>()));
      } catch (const UsageError& e) {
        Node::fail("variants", e.what());
      }
    }
  }

  std::vector<ExperimentConfig> configs;
  for (Variant v : variants) {
    ExperimentConfig c = default_experiment(v, real);
    c.lambda = lambda;
    c.seed = ctx.seed;
    if (auto e = root.child_if("experiment")) {
      e->allow({"n_steps", "eval_every", "average_from", "prediction_rule", "record_timing", "eta"});
      c.n_steps = e->integer_or("n_steps", c.n_steps);
      c.eval_every = e->integer_or("eval_every", c.eval_every);
      c.average_from = e->integer_or("average_from", c.average_from);
      if (e->has("prediction_rule")) {
        try {
          c.prediction_rule = parse_prediction_rule(e->string("prediction_rule"));
        } catch (const UsageError& err) {
          Node::fail(e->field("prediction_rule"), err.what());
        }
      }
      c.record_timing = e->boolean_or("record_timing", c.record_timing);
      c.eta = e->number_or("eta", c.eta);
    }
    if (auto all = root.child_if("variant_overrides")) {
      if (auto o = all->child_if(to_string(v))) {
        o->allow({"eta", "params", "mirror", "mirror_eps", "mirror_c"});
        c.eta = o->number_or("eta", c.eta);
        if (auto p = o->child_if("params"))
          for (const auto& [k, x] : p->number_map()) c.params.values[k] = x;
        c.mirror = o->string_or("mirror", c.mirror);
        c.mirror_eps = o->number_or("mirror_eps", c.mirror_eps);
        c.mirror_c = o->number_or("mirror_c", c.mirror_c);
      }
    }
    try {
      c.validate();
    } catch (const UsageError& err) {
      throw UsageError("experiment for " + to_string(v) + ": " + err.what());
    }
    configs.push_back(c);
  }

  const PotentialModel potential = make_blr_potential(split.train, lambda);
  const MapResult map = map_estimate(potential, split.train, lambda);
  const double map_acc = accuracy(map.weights, split.test);

  std::vector<AccuracyTrajectory> results(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= configs.size()) return;
      try {
        results[i] = run_experiment(configs[i], split.train, split.test);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(ctx.threads, static_cast<int>(configs.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  json report;
  report["data"] = {{"source", source},
                    {"train_rows", split.train.rows()},
                    {"test_rows", split.test.rows()},
                    {"columns", split.train.cols()},
                    {"standardize", split.transform.to_json()}};
  report["map"] = {{"test_accuracy", map_acc},
                   {"iterations", map.iterations},
                   {"gradient_norm", map.gradient_norm}};
  json runs = json::array();
  bool any_diverged = false;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const std::string name = to_string(configs[i].variant);
    ctx.write("accuracy_" + name + ".csv", results[i].to_csv());
    const double fin = results[i].final_accuracy();
    json r = {{"variant", name},
              {"config", configs[i].to_json()},
              {"diverged", results[i].diverged},
              {"final_accuracy", std::isfinite(fin) ? json(fin) : json(nullptr)},
              {"gap_to_map", std::isfinite(fin) ? json(map_acc - fin) : json(nullptr)}};
    if (results[i].diverged) {
      r["failure"] = results[i].failure;
      any_diverged = true;
    }
    runs.push_back(r);
  }
  report["runs"] = runs;
  ctx.write_json("blr_report.json", report);
  if (any_diverged) throw NumericError("at least one BLR run diverged; see blr_report.json");
  return kExitOk;
}

// ---------------------------------------------------------------- lyapunov

int cmd_lyapunov(Context& ctx) {
  const Node root(ctx.config, "");
  root.allow({"command", "seed", "kind", "potential", "params", "enforce_admissibility", "grid",
              "shift_grid", "constants", "out_dir", "threads"});
  LyapunovKind kind;
  try {
    kind = parse_lyapunov_kind(root.string("kind"));
  } catch (const UsageError& e) {
    Node::fail("kind", e.what());
  }
  const PotentialModel potential = build_potential(root.child("potential"));
  LyapunovParams lp;
  if (auto p = root.child_if("params")) lp.values = p->number_map();
  lp.enforce_admissibility = root.boolean_or("enforce_admissibility", true);

  Variant variant = Variant::overdamped;
  VariantParams vp;
  int state_dims = potential.dim();
  if (kind == LyapunovKind::hfhr) {
    variant = Variant::hfhr;
    vp.values = {{"alpha", lp.require("alpha")}, {"beta", lp.require("beta")}};
    state_dims *= 2;
  } else if (kind == LyapunovKind::highorder) {
    variant = Variant::highorder;
    vp.values = {{"alpha", lp.require("alpha")}, {"gamma", lp.require("gamma")}};
    state_dims *= 3;
  }
  if (auto s = root.child_if("shift_grid")) lp.shift_grid = *build_grid(*s, state_dims);

  const LyapunovSpec w = build_lyapunov(kind, potential, lp);
  const DynamicsSpec spec = build_variant_spec(variant, potential, vp);
  const auto grid = build_grid(root.child("grid"), spec.n());

  std::optional<BoundConstants> constants;
  if (auto c = root.child_if("constants")) {
    c->allow({"A", "B", "C", "Dc"});
    constants = BoundConstants{c->number_or("A", 0.0), c->number_or("B", 0.0),
                               c->number_or("C", 0.0), c->number("Dc")};
  }
  const BoundReport report = verify_quadratic_bound(spec, w, *grid, constants, ctx.threads);
  ctx.write_json("lyapunov_report.json", {{"lyapunov", w.to_json()}, {"bound", report.to_json()}});
  std::cout << "pass: " << (report.pass ? "true" : "false") << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- check-stationarity

int cmd_check_stationarity(Context& ctx) {
  const Node root(ctx.config, "");
  root.allow({"command", "seed", "potential", "variants", "params", "mirror", "j_seed", "cloud",
              "fd_step", "tolerance", "negative_control", "out_dir", "threads"});
  const PotentialModel potential = build_potential(root.child("potential"));
  const int d = potential.dim();
  const double fd = root.number_or("fd_step", kDefaultFdStep);
  const double tol = root.number_or("tolerance", 1e-4);

  long long count = 50;
  double half = 3.0;
  std::uint64_t cloud_seed = ctx.seed;
  if (auto c = root.child_if("cloud")) {
    c->allow({"count", "half_width", "seed"});
    count = c->integer_or("count", count);
    half = c->number_or("half_width", half);
    cloud_seed = c->seed("seed", cloud_seed);
  }
  if (count < 1) Node::fail("cloud.count", "must be at least 1");

  std::map<std::string, std::map<std::string, double>> per_variant = {
      {"underdamped", {{"gamma", 4.0}}},
      {"highorder", {{"gamma", 20.0}, {"alpha", 15.0}}},
      {"hfhr", {{"beta", 1.0}, {"alpha", 30.0}}}};
  if (auto p = root.child_if("params")) {
    for (auto it = p->raw().begin(); it != p->raw().end(); ++it) {
      const Node sub = p->child(it.key());
      for (const auto& [k, x] : sub.number_map()) per_variant[it.key()][k] = x;
    }
  }

  std::vector<Variant> variants = {Variant::overdamped, Variant::underdamped, Variant::nonreversible,
                                   Variant::mirror,     Variant::highorder,   Variant::hfhr};
  if (root.has("variants") && !(root.at("variants").is_string() && root.string("variants") == "all")) {
    variants.clear();
    const json& list = root.at("variants");
    if (!list.is_array()) Node::fail("variants", "expected \"all\" or a list of variant names");
    for (const auto& v : list) {
      if (!v.is_string()) Node::fail("variants", "expected variant names");
      try {
        variants.push_back(parse_variant(v.get<std::string>()));
      } catch (const UsageError& e) {
        Node::fail("variants", e.what());
      }
    }
  }
  std::optional<MirrorMetric> mirror = build_mirror(root.child_if("mirror"), d);
  if (!mirror) mirror = make_quartic_mirror(d, 0.1);

  auto cloud_for = [&](int n) {
    CounterRng rng(cloud_seed, static_cast<std::uint64_t>(n));
    std::vector<Vec> pts;
    for (long long k = 0; k < count; ++k) {
      Vec z(n);
      for (int i = 0; i < n; ++i) z[i] = half * (2.0 * rng.uniform() - 1.0);
      pts.push_back(z);
    }
    return pts;
  };
  auto worst_residual = [&](const DynamicsSpec& spec) {
    double worst = 0.0;
    for (const Vec& z : cloud_for(spec.n()))
      worst = std::max(worst, std::abs(stationarity_residual(spec, z, fd)));
    return worst;
  };

  std::ostringstream csv;
  csv << "variant,max_residual,tolerance,pass\n";
  json rows = json::array();
  bool all_pass = true;
  for (Variant v : variants) {
    VariantParams vp;
    if (auto it = per_variant.find(to_string(v)); it != per_variant.end()) vp.values = it->second;
    if (v == Variant::nonreversible) vp.J = random_antisymmetric_seed(d, root.seed("j_seed", ctx.seed)).derived();
    const DynamicsSpec spec = build_variant_spec(v, potential, vp, mirror);
    const double r = worst_residual(spec);
    const bool ok = r <= tol;
    all_pass = all_pass && ok;
    csv << to_string(v) << "," << format_double(r) << "," << format_double(tol) << ","
        << (ok ? "true" : "false") << "\n";
    rows.push_back({{"variant", to_string(v)}, {"max_residual", r}, {"pass", ok}});
  }

  json out = {{"fd_step", fd},
              {"tolerance", tol},
              {"cloud", {{"count", count}, {"half_width", half}, {"seed", cloud_seed}}},
              {"variants", rows},
              {"all_pass", all_pass}};
  if (root.boolean_or("negative_control", true)) {
    VariantParams vp;
    vp.values = per_variant["underdamped"];
    const DynamicsSpec spec = build_variant_spec(Variant::underdamped, potential, vp);
    const DynamicsSpec broken = spec.with_drift(
        [d](const Vec& z) -> Vec {
          Vec f(2 * d);
          f.head(d) = z.tail(d);
          f.tail(d) = -z.head(d);
          return f;
        },
        "underdamped-without-friction");
    const double r = worst_residual(broken);
    out["negative_control"] = {{"name", broken.name()}, {"max_residual", r}, {"detected", r > 1e-1}};
    csv << broken.name() << "," << format_double(r) << "," << format_double(tol) << ","
        << (r <= tol ? "true" : "false") << "\n";
  }
  ctx.write("stationarity.csv", csv.str());
  ctx.write_json("stationarity.json", out);
  std::cout << "all_pass: " << (all_pass ? "true" : "false") << "\n";
  return kExitOk;
}

void write_manifest(Context& ctx, int exit_code, const std::string& error) {
  json m = {{"command", ctx.command},
            {"config_digest", ctx.digest},
            {"seed", ctx.seed},
            {"seed_overridden", ctx.seed_overridden},
            {"threads", ctx.threads},
            {"started", ctx.started},
            {"finished", utc_now()},
            {"outputs", ctx.outputs},
            {"deviations", ctx.deviations},
            {"exit_code", exit_code}};
  if (!error.empty()) m["error"] = error;
  atomic_write(ctx.path("manifest.json"), m.dump(2) + "\n");
}

}  // namespace

std::string config_digest(const std::string& canonical_text) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(canonical_text.data(), canonical_text.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i)
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

int run_command(const std::string& command, const GlobalOptions& options) {
  static const std::map<std::string, std::function<int(Context&)>> table = {
      {"sample", cmd_sample},
      {"rates", cmd_rates},
      {"blr", cmd_blr},
      {"lyapunov", cmd_lyapunov},
      {"check-stationarity", cmd_check_stationarity}};
  const auto handler = table.find(command);
  if (handler == table.end()) {
    std::cerr << "error: unknown command '" << command << "'\n";
    return kExitConfig;
  }

  Context ctx;
  ctx.command = command;
  ctx.started = utc_now();

  // Config loading: unreadable file is an I/O error, bad content a config error.
  try {
    if (!file_exists(options.config_path)) throw IoError("config file not found: " + options.config_path);
    const std::string text = read_text_file(options.config_path);
    try {
      ctx.config = json::parse(text);
    } catch (const json::parse_error& e) {
      throw UsageError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!ctx.config.is_object()) throw UsageError("config must be a JSON object");
    ctx.digest = config_digest(ctx.config.dump());
    const Node root(ctx.config, "");
    if (root.has("command") && root.string("command") != command)
      Node::fail("command", "config is for '" + root.string("command") + "', not '" + command + "'");
    ctx.seed = root.seed("seed", 0);
    if (options.seed) {
      ctx.seed = *options.seed;
      ctx.seed_overridden = true;
    }
    ctx.threads = static_cast<int>(root.integer_or("threads", 1));
    if (options.threads) ctx.threads = *options.threads;
    if (ctx.threads < 1) Node::fail("threads", "must be at least 1");

    std::string out = root.string_or("out_dir", "out");
    if (const char* env = std::getenv("LANGEVIN_OUT_DIR"); env && *env) out = env;
    if (options.out_dir) out = *options.out_dir;
    ctx.out_dir = out;
    ensure_directory(ctx.out_dir);
  } catch (const UsageError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  }

  int code = kExitOk;
  std::string error;
  try {
    code = handler->second(ctx);
  } catch (const UsageError& e) {
    code = kExitConfig;
    error = std::string("config error: ") + e.what();
  } catch (const NumericError& e) {
    code = kExitNumeric;
    error = std::string("numeric error: ") + e.what();
  } catch (const IoError& e) {
    code = kExitIo;
    error = std::string("i/o error: ") + e.what();
  } catch (const json::exception& e) {
    code = kExitConfig;
    error = std::string("config error: ") + e.what();
  } catch (const std::exception& e) {
    code = kExitNumeric;
    error = std::string("numeric error: ") + e.what();
  }
  if (!error.empty()) std::cerr << error << "\n";
  try {
    write_manifest(ctx, code, error);
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  }
  return code;
}

}  // namespace langevin::cli
