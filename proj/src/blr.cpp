#include "langevin/blr.hpp"

#include "langevin/errors.hpp"
#include "langevin/io.hpp"
#include "langevin/rng.hpp"
#include "langevin/samplers.hpp"

#include <algorithm>
#include <chrono>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

namespace langevin {

namespace {

constexpr std::uint64_t kFeatureStream = 1;
constexpr std::uint64_t kWeightStream = 2;
constexpr std::uint64_t kLabelStream = 3;
constexpr std::uint64_t kSplitStream = 0x53504c4954;

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t") == std::string::npos;
}

Dataset subset(const Dataset& data, const std::vector<long>& rows) {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), data.features.cols());
  out.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = data.features.row(rows[i]);
    out.labels[static_cast<Eigen::Index>(i)] = data.labels[rows[i]];
  }
  out.feature_names = data.feature_names;
  out.standardized = data.standardized;
  out.intercept_appended = data.intercept_appended;
  return out;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (n < 1 || d < 1) throw UsageError("synthetic data needs n >= 1 and d >= 1");
  if (!(feature_scale > 0.0) || !(prior_scale > 0.0))
    throw UsageError("synthetic scales must be positive");
}

SyntheticData gen_synthetic(const SyntheticConfig& config) {
  config.validate();
  CounterRng features_rng(config.seed, kFeatureStream);
  CounterRng weights_rng(config.seed, kWeightStream);
  CounterRng labels_rng(config.seed, kLabelStream);
  const double fs = std::sqrt(config.feature_scale);
  const double ps = std::sqrt(config.prior_scale);

  SyntheticData out;
  out.true_weights = ps * weights_rng.normal_vector(config.d);
  Dataset& data = out.data;
  data.features.resize(config.n, config.d);
  data.labels.resize(config.n);
  for (long j = 0; j < config.n; ++j) {
    data.features.row(j) = fs * features_rng.normal_vector(config.d).transpose();
    const double p = labels_rng.uniform();
    data.labels[j] = p <= sigmoid(data.features.row(j).dot(out.true_weights)) ? 1 : 0;
  }
  for (int k = 0; k < config.d; ++k) data.feature_names.push_back("x" + std::to_string(k));
  if (config.append_intercept) data = append_intercept(data);
  return out;
}

Dataset append_intercept(const Dataset& data) {
  if (data.intercept_appended) return data;
  Dataset out = data;
  out.features.conservativeResize(Eigen::NoChange, data.features.cols() + 1);
  out.features.col(data.features.cols()).setOnes();
  if (!out.feature_names.empty() || data.features.cols() == 0) out.feature_names.push_back("intercept");
  out.intercept_appended = true;
  return out;
}

Dataset parse_wdbc(const std::string& text) {
  constexpr int kColumns = 32;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  const auto lines = lines_of(text);
  for (std::size_t idx = 0; idx < lines.size(); ++idx) {
    const long lineno = static_cast<long>(idx) + 1;
    const std::string& line = lines[idx];
    if (blank(line)) continue;
    const auto fields = split_fields(line);
    const bool first_content = rows.empty() && labels.empty();
    if (first_content && fields.size() >= 2 && fields[1] != "M" && fields[1] != "B") {
      double probe = 0.0;
      if (!parse_number(fields[0], probe)) continue;  // header line
    }
    if (static_cast<int>(fields.size()) != kColumns) {
      std::ostringstream os;
      os << "line " << lineno << ": expected " << kColumns << " comma-separated columns, found "
         << fields.size();
      throw FormatError(os.str(), lineno);
    }
    int label = -1;
    if (fields[1] == "M") label = 1;
    if (fields[1] == "B") label = 0;
    if (label < 0) {
      std::ostringstream os;
      os << "line " << lineno << ": diagnosis must be M or B, found '" << fields[1] << "'";
      throw IngestionError(os.str(), lineno);
    }
    std::vector<double> values(kColumns - 2);
    for (int c = 2; c < kColumns; ++c) {
      if (!parse_number(fields[c], values[c - 2])) {
        std::ostringstream os;
        os << "line " << lineno << ", column " << c + 1 << ": '" << fields[c]
           << "' is not a finite number";
        throw IngestionError(os.str(), lineno);
      }
    }
    rows.push_back(std::move(values));
    labels.push_back(label);
  }
  if (rows.empty()) throw IngestionError("WDBC file contains no data rows", 0);

  Dataset data;
  data.features.resize(static_cast<Eigen::Index>(rows.size()), kColumns - 2);
  data.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int c = 0; c < kColumns - 2; ++c) data.features(static_cast<Eigen::Index>(i), c) = rows[i][c];
    data.labels[static_cast<Eigen::Index>(i)] = labels[i];
  }
  for (int c = 0; c < kColumns - 2; ++c) data.feature_names.push_back("f" + std::to_string(c + 1));
  return append_intercept(data);
}

Dataset load_wdbc(const std::string& path) { return parse_wdbc(read_text_file(path)); }

std::string dataset_to_csv(const Dataset& data) {
  data.validate();
  std::ostringstream os;
  os << "# standardized=" << (data.standardized ? 1 : 0)
     << " intercept=" << (data.intercept_appended ? 1 : 0) << "\n";
  os << "label";
  for (Eigen::Index c = 0; c < data.features.cols(); ++c) {
    os << ",";
    if (static_cast<std::size_t>(c) < data.feature_names.size())
      os << data.feature_names[static_cast<std::size_t>(c)];
    else
      os << "c" << c;
  }
  os << "\n";
  for (Eigen::Index r = 0; r < data.features.rows(); ++r) {
    os << data.labels[r];
    for (Eigen::Index c = 0; c < data.features.cols(); ++c)
      os << "," << format_double(data.features(r, c));
    os << "\n";
  }
  return os.str();
}

Dataset dataset_from_csv(const std::string& text) {
  const auto lines = lines_of(text);
  Dataset data;
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  bool have_header = false;
  for (std::size_t idx = 0; idx < lines.size(); ++idx) {
    const long lineno = static_cast<long>(idx) + 1;
    const std::string& line = lines[idx];
    if (blank(line)) continue;
    if (line[0] == '#') {
      data.standardized = line.find("standardized=1") != std::string::npos;
      data.intercept_appended = line.find("intercept=1") != std::string::npos;
      continue;
    }
    auto fields = split_fields(line);
    if (!have_header) {
      if (fields.empty() || fields[0] != "label")
        throw FormatError("line " + std::to_string(lineno) + ": expected a 'label' header", lineno);
      names.assign(fields.begin() + 1, fields.end());
      have_header = true;
      continue;
    }
    if (fields.size() != names.size() + 1)
      throw FormatError("line " + std::to_string(lineno) + ": wrong column count", lineno);
    if (fields[0] != "0" && fields[0] != "1")
      throw IngestionError("line " + std::to_string(lineno) + ": label must be 0 or 1", lineno);
    std::vector<double> values(names.size());
    for (std::size_t c = 0; c < names.size(); ++c)
      if (!parse_number(fields[c + 1], values[c]))
        throw IngestionError("line " + std::to_string(lineno) + ": bad number", lineno);
    labels.push_back(fields[0] == "1" ? 1 : 0);
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw IngestionError("dataset file contains no data rows", 0);
  data.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
  data.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < names.size(); ++c)
      data.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    data.labels[static_cast<Eigen::Index>(r)] = labels[r];
  }
  data.feature_names = std::move(names);
  return data;
}

nlohmann::json StandardizeRecord::to_json() const {
  return {{"mean", langevin::to_json(mean)},
          {"scale", langevin::to_json(scale)},
          {"scaled", scaled},
          {"warnings", warnings}};
}

Dataset apply_standardize(const Dataset& data, const StandardizeRecord& record) {
  if (data.standardized) return data;
  if (record.mean.size() != data.features.cols())
    throw UsageError("standardization record does not match the dataset width");
  Dataset out = data;
  for (Eigen::Index c = 0; c < out.features.cols(); ++c) {
    if (!record.scaled[static_cast<std::size_t>(c)]) continue;
    out.features.col(c) = (out.features.col(c).array() - record.mean[c]) / record.scale[c];
  }
  out.standardized = true;
  return out;
}

SplitResult split_standardize(const Dataset& data, double train_fraction, std::uint64_t seed,
                              bool standardize) {
  data.validate();
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw UsageError("train fraction must lie strictly between 0 and 1");
  const long n = data.rows();
  const long n_train = static_cast<long>(std::floor(train_fraction * static_cast<double>(n)));
  if (n_train < 1 || n_train >= n) throw UsageError("split leaves an empty train or test set");

  std::vector<long> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0L);
  CounterRng rng(seed, kSplitStream);
  for (long i = n - 1; i > 0; --i) {
    const long j = static_cast<long>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  std::vector<long> train_rows(order.begin(), order.begin() + n_train);
  std::vector<long> test_rows(order.begin() + n_train, order.end());

  SplitResult out{subset(data, train_rows), subset(data, test_rows), {}};
  const Eigen::Index d = data.features.cols();
  StandardizeRecord& rec = out.transform;
  rec.mean = Vec::Zero(d);
  rec.scale = Vec::Ones(d);
  rec.scaled.assign(static_cast<std::size_t>(d), false);
  if (!standardize || data.standardized) return out;

  for (Eigen::Index c = 0; c < d; ++c) {
    const bool intercept = data.intercept_appended && c == d - 1;
    if (intercept) continue;
    const Vec col = out.train.features.col(c);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / static_cast<double>(col.size());
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      std::string name = static_cast<std::size_t>(c) < data.feature_names.size()
                             ? data.feature_names[static_cast<std::size_t>(c)]
                             : "column " + std::to_string(c);
      rec.warnings.push_back(name + " has zero variance on the training rows; left unscaled");
      continue;
    }
    rec.mean[c] = mean;
    rec.scale[c] = sd;
    rec.scaled[static_cast<std::size_t>(c)] = true;
  }
  out.train = apply_standardize(out.train, rec);
  out.test = apply_standardize(out.test, rec);
  return out;
}

double accuracy(const Vec& weights, const Dataset& data) {
  if (weights.size() != data.features.cols())
    throw UsageError("weight length does not match the number of features");
  if (data.rows() == 0) throw UsageError("accuracy of an empty dataset");
  const Vec scores = data.features * weights;
  long correct = 0;
  for (Eigen::Index j = 0; j < scores.size(); ++j) {
    const int predicted = scores[j] >= 0.0 ? 1 : 0;
    correct += predicted == data.labels[j];
  }
  return static_cast<double>(correct) / static_cast<double>(data.rows());
}

MapResult map_estimate(const PotentialModel& potential, const Dataset& data, double lambda,
                       double tolerance, long max_iterations) {
  // Smoothness bound: 1/4 of the largest eigenvalue of X^T X plus 1/lambda.
  Eigen::SelfAdjointEigenSolver<Mat> eig(data.features.transpose() * data.features,
                                         Eigen::EigenvaluesOnly);
  const double L = 0.25 * eig.eigenvalues().maxCoeff() + 1.0 / lambda;
  MapResult out;
  out.weights = Vec::Zero(potential.dim());
  for (out.iterations = 0; out.iterations < max_iterations; ++out.iterations) {
    const Vec g = potential.gradient(out.weights);
    out.gradient_norm = g.norm();
    if (out.gradient_norm <= tolerance) break;
    out.weights -= g / L;
  }
  return out;
}

std::string to_string(PredictionRule rule) {
  return rule == PredictionRule::current_iterate ? "current-iterate" : "running-mean";
}

PredictionRule parse_prediction_rule(const std::string& name) {
  if (name == "current-iterate" || name == "current_iterate") return PredictionRule::current_iterate;
  if (name == "running-mean" || name == "running_mean") return PredictionRule::running_mean;
  throw UsageError("unknown prediction rule '" + name + "'");
}

void ExperimentConfig::validate() const {
  if (!(eta > 0.0)) throw UsageError("eta must be positive");
  if (n_steps < 1) throw UsageError("n_steps must be positive");
  if (eval_every < 1 || eval_every > n_steps)
    throw UsageError("eval_every must lie in [1, n_steps]");
  if (average_from < 0 || average_from >= n_steps)
    throw UsageError("average_from must lie in [0, n_steps)");
  if (!(lambda > 0.0)) throw UsageError("lambda must be positive");
  if (variant == Variant::custom) throw UsageError("BLR experiments need a built-in variant");
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json params_json = nlohmann::json::object();
  for (const auto& [k, v] : params.values) params_json[k] = v;
  nlohmann::json out{{"variant", langevin::to_string(variant)},
                     {"params", params_json},
                     {"eta", eta},
                     {"n_steps", n_steps},
                     {"eval_every", eval_every},
                     {"average_from", average_from},
                     {"prediction_rule", langevin::to_string(prediction_rule)},
                     {"lambda", lambda},
                     {"seed", seed},
                     {"record_timing", record_timing}};
  if (variant == Variant::mirror) {
    out["mirror"] = mirror;
    out["mirror_eps"] = mirror_eps;
    out["mirror_c"] = mirror_c;
  }
  return out;
}

ExperimentConfig default_experiment(Variant variant, bool real_data) {
  ExperimentConfig c;
  c.variant = variant;
  c.eta = 3e-4;
  switch (variant) {
    case Variant::underdamped:
      c.eta = 3e-3;
      c.params.values["gamma"] = real_data ? 35.0 : 4.0;
      break;
    case Variant::highorder:
      c.eta = 3e-3;
      c.params.values["gamma"] = real_data ? 35.0 : 20.0;
      c.params.values["alpha"] = real_data ? 35.0 : 15.0;
      break;
    case Variant::hfhr:
      c.params.values["beta"] = 1.0;
      c.params.values["alpha"] = 30.0;
      break;
    default:
      break;
  }
  return c;
}

double AccuracyTrajectory::final_accuracy() const {
  for (auto it = rows.rbegin(); it != rows.rend(); ++it)
    if (std::isfinite(it->accuracy)) return it->accuracy;
  return std::nan("");
}

std::string AccuracyTrajectory::to_csv() const {
  std::ostringstream os;
  os << "step,accuracy,wall_ms\n";
  for (const auto& r : rows) {
    os << r.step << "," << (std::isfinite(r.accuracy) ? format_double(r.accuracy) : "nan") << ","
       << format_double(r.wall_ms) << "\n";
  }
  return os.str();
}

AccuracyTrajectory run_experiment(const ExperimentConfig& config, const Dataset& train,
                                  const Dataset& test) {
  config.validate();
  if (train.features.cols() != test.features.cols())
    throw UsageError("train and test sets have different widths");
  const PotentialModel potential = make_blr_potential(train, config.lambda);
  const int d = potential.dim();

  std::optional<MirrorMetric> mirror;
  VariantParams params = config.params;
  if (config.variant == Variant::mirror) {
    if (config.mirror == "quartic")
      mirror = make_quartic_mirror(d, config.mirror_eps);
    else if (config.mirror == "arctan")
      mirror = make_arctan_mirror(d, config.mirror_c);
    else
      throw UsageError("unknown mirror map '" + config.mirror + "'");
  }
  if (config.variant == Variant::nonreversible && !params.J)
    params.J = random_antisymmetric_seed(d, config.seed).derived();
  const DynamicsSpec spec = build_variant_spec(config.variant, potential, params, mirror);
  const NoiseFactor noise(spec);

  ChainState state(Vec::Zero(spec.n()), config.seed, 0);
  Vec mean_sum = Vec::Zero(d);
  long long mean_count = 0;
  AccuracyTrajectory out;
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&]() {
    if (!config.record_timing) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
  };

  for (long long k = 1; k <= config.n_steps; ++k) {
    try {
      em_step(spec, noise, state, config.eta);
    } catch (const NumericError& e) {
      out.diverged = true;
      out.failure = e.what();
      out.rows.push_back({k, std::nan(""), elapsed()});
      out.final_weights = state.z.head(d);
      return out;
    }
    if (k > config.average_from) {
      mean_sum += state.z.head(d);
      ++mean_count;
    }
    if (k % config.eval_every == 0) {
      Vec w = state.z.head(d);
      if (config.prediction_rule == PredictionRule::running_mean && mean_count > 0)
        w = mean_sum / static_cast<double>(mean_count);
      out.rows.push_back({k, accuracy(w, test), elapsed()});
      out.final_weights = w;
    }
  }
  return out;
}

}  // namespace langevin
