#pragma once

#include "langevin/dynamics.hpp"
#include "langevin/errors.hpp"
#include "langevin/rng.hpp"
#include "langevin/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace langevin {

struct ChainState {
  Vec z;
  long long step = 0;
  CounterRng rng;

  ChainState(Vec z0, std::uint64_t seed, std::uint64_t chain_id)
      : z(std::move(z0)), rng(seed, chain_id) {}
};

struct IntegratorConfig {
  double eta = 0.01;
  long long n_steps = 1000;
  long long burn_in = 0;
  long long thinning = 1;
  int n_chains = 1;
  std::uint64_t seed = 0;
  int threads = 0;  // 0: one worker per hardware thread, capped at n_chains
  // When set, each chain writes its retained states to <dir>/chain_<id>.csv.
  std::optional<std::string> trajectory_dir;

  void validate() const;
  // Whether step k (1-based) is kept in the summary.
  bool retains(long long k) const {
    return k > burn_in && (k - burn_in - 1) % thinning == 0;
  }
};

struct HistogramSpec {
  double lo = -8.0;
  double hi = 8.0;
  int bins = 4000;
};

/// Streaming sums over retained states: count, first and second moments and
/// fixed-bin per-coordinate histograms. Merging adds the sums, so the merged
/// summary does not depend on how chains were grouped.
class EnsembleSummary {
 public:
  EnsembleSummary(int n, AugLayout layout, HistogramSpec hist = {});

  void add(const Vec& z);
  void merge(const EnsembleSummary& other);

  int n() const { return n_; }
  long long count() const { return count_; }
  const AugLayout& layout() const { return layout_; }
  const HistogramSpec& histogram_spec() const { return hist_; }

  Vec mean() const;
  Mat second_moment() const;  // E[z z^T]
  Mat covariance() const;
  Vec theta_mean() const;
  Mat theta_covariance() const;

  const std::vector<long long>& histogram(int coord) const { return counts_[coord]; }
  long long underflow(int coord) const { return under_[coord]; }
  long long overflow(int coord) const { return over_[coord]; }
  double bin_edge(int k) const;

  nlohmann::json to_json() const;

 private:
  int n_;
  AugLayout layout_;
  HistogramSpec hist_;
  long long count_ = 0;
  Vec sum_;
  Mat sum_outer_;
  std::vector<std::vector<long long>> counts_;
  std::vector<long long> under_;
  std::vector<long long> over_;
};

// Square-root policy for the noise: S(z) S(z)^T = D(z).
class NoiseFactor {
 public:
  explicit NoiseFactor(const DynamicsSpec& spec);
  // S(z) xi without forming S when D is diagonal.
  Vec apply(const DynamicsSpec& spec, const Vec& z, const Vec& xi) const;

 private:
  enum class Mode { constant_diagonal, constant_dense, state_diagonal, state_dense };
  Mode mode_;
  Vec diag_sqrt_;
  Mat dense_sqrt_;
};

Mat symmetric_sqrt(const Mat& m);

// One Euler-Maruyama step z' = z + eta f(z) + sqrt(2 eta) S(z) xi, with xi
// drawn from the state's stream. Throws DivergenceError when z' is
// non-finite or |z'| > 1e8.
void em_step(const DynamicsSpec& spec, ChainState& state, double eta);
void em_step(const DynamicsSpec& spec, const NoiseFactor& noise, ChainState& state,
             double eta);
// Same step with a caller-supplied xi (zero noise in structural tests).
void em_step_with_noise(const DynamicsSpec& spec, const NoiseFactor& noise,
                        ChainState& state, double eta, const Vec& xi);

inline constexpr double kDivergenceBound = 1e8;

struct ChainResult {
  EnsembleSummary summary;
  Vec final_state;
  std::optional<std::string> trajectory_path;
};

ChainResult run_chain(const DynamicsSpec& spec, const IntegratorConfig& config,
                      const Vec& init, std::uint64_t chain_id = 0,
                      HistogramSpec hist = {});

/// Chains that diverged inside run_ensemble, with the summary merged from
/// the chains that finished.
class EnsembleDivergenceError : public DivergenceError {
 public:
  EnsembleDivergenceError(const std::string& what, const DivergenceError& first,
                          std::vector<int> failed,
                          std::shared_ptr<EnsembleSummary> partial)
      : DivergenceError(what, first.step(), first.eta(), first.last_finite_state()),
        failed_(std::move(failed)),
        partial_(std::move(partial)) {}
  const std::vector<int>& failed_chains() const { return failed_; }
  const std::shared_ptr<EnsembleSummary>& partial_summary() const { return partial_; }

 private:
  std::vector<int> failed_;
  std::shared_ptr<EnsembleSummary> partial_;
};

EnsembleSummary run_ensemble(const DynamicsSpec& spec, const IntegratorConfig& config,
                             const Vec& init, HistogramSpec hist = {});
EnsembleSummary run_ensemble(const DynamicsSpec& spec, const IntegratorConfig& config);

double ks_distance_marginal(const EnsembleSummary& summary, int coord,
                            const std::function<double(double)>& cdf);

double standard_normal_cdf(double x);

}  // namespace langevin
