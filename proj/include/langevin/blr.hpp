#pragma once

#include "langevin/dataset.hpp"
#include "langevin/dynamics.hpp"
#include "langevin/potentials.hpp"
#include "langevin/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace langevin {

struct SyntheticConfig {
  long n = 5000;
  int d = 30;
  double feature_scale = 10.0;  // covariance of X_j is feature_scale * I
  double prior_scale = 10.0;    // covariance of x_true is prior_scale * I
  std::uint64_t seed = 0;
  bool append_intercept = true;

  void validate() const;
};

struct SyntheticData {
  Dataset data;
  Vec true_weights;  // length d (intercept excluded)
};

// X_j ~ N(0, feature_scale I), x_true ~ N(0, prior_scale I), p_j ~ U(0, 1),
// y_j = 1 iff p_j <= sigmoid(x_true . X_j).
SyntheticData gen_synthetic(const SyntheticConfig& config);

Dataset append_intercept(const Dataset& data);

// UCI breast cancer diagnostic layout: id, M/B, 30 measurements. An optional
// header line is skipped; M maps to 1 and the intercept column is appended.
Dataset load_wdbc(const std::string& path);
Dataset parse_wdbc(const std::string& text);

// Plain CSV with a label column, used for round trips of arbitrary datasets.
std::string dataset_to_csv(const Dataset& data);
Dataset dataset_from_csv(const std::string& text);

struct StandardizeRecord {
  Vec mean;
  Vec scale;
  std::vector<bool> scaled;  // false for the intercept and constant columns
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

struct SplitResult {
  Dataset train;
  Dataset test;
  StandardizeRecord transform;
};

// Applies the record; a dataset already flagged as standardized is returned
// unchanged.
Dataset apply_standardize(const Dataset& data, const StandardizeRecord& record);

// Seeded shuffle, floor(fraction n) training rows, z-scores fit on train.
SplitResult split_standardize(const Dataset& data, double train_fraction, std::uint64_t seed,
                              bool standardize = true);

// Fraction of rows with (w . X >= 0) == label.
double accuracy(const Vec& weights, const Dataset& data);

struct MapResult {
  Vec weights;
  long iterations = 0;
  double gradient_norm = 0.0;
};

// Minimizer of the BLR potential by gradient descent with step 1/L.
MapResult map_estimate(const PotentialModel& potential, const Dataset& data, double lambda,
                       double tolerance = 1e-8, long max_iterations = 200000);

enum class PredictionRule { current_iterate, running_mean };
std::string to_string(PredictionRule rule);
PredictionRule parse_prediction_rule(const std::string& name);

struct ExperimentConfig {
  Variant variant = Variant::overdamped;
  VariantParams params;
  std::string mirror = "quartic";  // quartic or arctan
  double mirror_eps = 0.1;  // quartic metric 1 / (3 w^2 + mirror_eps)
  double mirror_c = 1.0;
  double eta = 3e-4;
  long long n_steps = 20000;
  long long eval_every = 1000;
  long long average_from = 0;  // first step included in the running mean
  PredictionRule prediction_rule = PredictionRule::current_iterate;
  double lambda = 10.0;
  std::uint64_t seed = 0;
  bool record_timing = false;  // wall_ms column is 0 unless enabled

  void validate() const;
  nlohmann::json to_json() const;
};

// Hyperparameters used in the experiments for each variant and data source.
ExperimentConfig default_experiment(Variant variant, bool real_data);

struct AccuracyRow {
  long long step = 0;
  double accuracy = 0.0;
  double wall_ms = 0.0;
};

struct AccuracyTrajectory {
  std::vector<AccuracyRow> rows;
  bool diverged = false;
  std::string failure;
  Vec final_weights;

  double final_accuracy() const;
  std::string to_csv() const;
};

// Samples the BLR posterior built on `train` and scores `test` every
// eval_every steps. A divergence truncates the trajectory and appends a row
// with accuracy NaN.
AccuracyTrajectory run_experiment(const ExperimentConfig& config, const Dataset& train,
                                  const Dataset& test);

}  // namespace langevin
