#include "langevin/samplers.hpp"

#include "langevin/io.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace langevin {

void IntegratorConfig::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw UsageError("eta must be positive");
  if (n_steps <= 0) throw UsageError("n_steps must be positive");
  if (burn_in < 0) throw UsageError("burn_in must be nonnegative");
  if (burn_in >= n_steps) throw UsageError("burn_in must be smaller than n_steps");
  if (thinning <= 0) throw UsageError("thinning must be positive");
  if (n_chains <= 0) throw UsageError("n_chains must be at least 1");
  if (threads < 0) throw UsageError("threads must be nonnegative");
}

EnsembleSummary::EnsembleSummary(int n, AugLayout layout, HistogramSpec hist)
    : n_(n),
      layout_(layout),
      hist_(hist),
      sum_(Vec::Zero(n)),
      sum_outer_(Mat::Zero(n, n)),
      counts_(static_cast<std::size_t>(n), std::vector<long long>(hist.bins, 0)),
      under_(static_cast<std::size_t>(n), 0),
      over_(static_cast<std::size_t>(n), 0) {
  if (n <= 0) throw UsageError("summary dimension must be positive");
  if (hist.bins <= 0 || !(hist.hi > hist.lo)) throw UsageError("invalid histogram range");
}

void EnsembleSummary::add(const Vec& z) {
  if (z.size() != n_) throw UsageError("summary dimension mismatch");
  ++count_;
  sum_ += z;
  sum_outer_.selfadjointView<Eigen::Lower>().rankUpdate(z);
  const double scale = hist_.bins / (hist_.hi - hist_.lo);
  for (int i = 0; i < n_; ++i) {
    const double x = z[i];
    if (x < hist_.lo) {
      ++under_[i];
    } else if (x >= hist_.hi) {
      ++over_[i];
    } else {
      const int b = std::min(hist_.bins - 1, static_cast<int>((x - hist_.lo) * scale));
      ++counts_[i][b];
    }
  }
}

void EnsembleSummary::merge(const EnsembleSummary& other) {
  if (other.n_ != n_ || other.hist_.bins != hist_.bins || other.hist_.lo != hist_.lo ||
      other.hist_.hi != hist_.hi)
    throw UsageError("cannot merge summaries with different shapes");
  count_ += other.count_;
  sum_ += other.sum_;
  sum_outer_ += other.sum_outer_;
  for (int i = 0; i < n_; ++i) {
    for (int b = 0; b < hist_.bins; ++b) counts_[i][b] += other.counts_[i][b];
    under_[i] += other.under_[i];
    over_[i] += other.over_[i];
  }
}

Vec EnsembleSummary::mean() const {
  if (count_ == 0) throw UsageError("summary is empty");
  return sum_ / static_cast<double>(count_);
}

Mat EnsembleSummary::second_moment() const {
  if (count_ == 0) throw UsageError("summary is empty");
  Mat full = sum_outer_.selfadjointView<Eigen::Lower>();
  return full / static_cast<double>(count_);
}

Mat EnsembleSummary::covariance() const {
  const Vec m = mean();
  Mat c = second_moment() - m * m.transpose();
  return 0.5 * (c + c.transpose());
}

Vec EnsembleSummary::theta_mean() const {
  return mean().segment(layout_.theta_offset, layout_.d);
}

Mat EnsembleSummary::theta_covariance() const {
  return covariance().block(layout_.theta_offset, layout_.theta_offset, layout_.d,
                            layout_.d);
}

double EnsembleSummary::bin_edge(int k) const {
  return hist_.lo + (hist_.hi - hist_.lo) * static_cast<double>(k) / hist_.bins;
}

nlohmann::json EnsembleSummary::to_json() const {
  nlohmann::json j;
  j["count"] = count_;
  j["block_names"] = layout_.block_names();
  j["block_dim"] = layout_.d;
  if (count_ > 0) {
    j["mean"] = langevin::to_json(mean());
    j["second_moment"] = langevin::to_json(second_moment());
    j["theta_mean"] = langevin::to_json(theta_mean());
    j["theta_covariance"] = langevin::to_json(theta_covariance());
  }
  nlohmann::json hists = nlohmann::json::array();
  for (int i = 0; i < n_; ++i) {
    hists.push_back({{"coord", i},
                     {"lo", hist_.lo},
                     {"hi", hist_.hi},
                     {"bins", hist_.bins},
                     {"underflow", under_[i]},
                     {"overflow", over_[i]},
                     {"counts", counts_[i]}});
  }
  j["marginal_histograms"] = std::move(hists);
  return j;
}

Mat symmetric_sqrt(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (m + m.transpose()));
  const Vec roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

NoiseFactor::NoiseFactor(const DynamicsSpec& spec) {
  switch (spec.diffusion_kind()) {
    case DiffusionKind::constant: {
      const Mat d = *spec.constant_diffusion();
      Mat off = d;
      off.diagonal().setZero();
      if (off.cwiseAbs().maxCoeff() == 0.0) {
        mode_ = Mode::constant_diagonal;
        diag_sqrt_ = d.diagonal().cwiseMax(0.0).cwiseSqrt();
      } else {
        mode_ = Mode::constant_dense;
        dense_sqrt_ = symmetric_sqrt(d);
      }
      break;
    }
    case DiffusionKind::state_diagonal:
      mode_ = Mode::state_diagonal;
      break;
    case DiffusionKind::state_dense:
      mode_ = Mode::state_dense;
      break;
  }
}

Vec NoiseFactor::apply(const DynamicsSpec& spec, const Vec& z, const Vec& xi) const {
  switch (mode_) {
    case Mode::constant_diagonal:
      return diag_sqrt_.cwiseProduct(xi);
    case Mode::constant_dense:
      return dense_sqrt_ * xi;
    case Mode::state_diagonal:
      return spec.diffusion_diagonal(z).cwiseMax(0.0).cwiseSqrt().cwiseProduct(xi);
    case Mode::state_dense:
      return symmetric_sqrt(spec.D(z)) * xi;
  }
  return xi;
}

void em_step_with_noise(const DynamicsSpec& spec, const NoiseFactor& noise,
                        ChainState& state, double eta, const Vec& xi) {
  Vec next;
  try {
    next = state.z + eta * drift(spec, state.z) +
           std::sqrt(2.0 * eta) * noise.apply(spec, state.z, xi);
  } catch (const NumericError& e) {
    std::ostringstream os;
    os << "chain diverged at step " << state.step + 1 << " (eta = " << eta
       << "): " << e.what();
    throw DivergenceError(os.str(), state.step + 1, eta, state.z);
  }
  if (!next.allFinite() || next.norm() > kDivergenceBound) {
    std::ostringstream os;
    os << "chain diverged at step " << state.step + 1 << " (eta = " << eta << ")";
    throw DivergenceError(os.str(), state.step + 1, eta, state.z);
  }
  state.z = std::move(next);
  ++state.step;
}

void em_step(const DynamicsSpec& spec, const NoiseFactor& noise, ChainState& state,
             double eta) {
  if (!(eta > 0.0)) throw UsageError("eta must be positive");
  const Vec xi = state.rng.normal_vector(spec.n());
  em_step_with_noise(spec, noise, state, eta, xi);
}

void em_step(const DynamicsSpec& spec, ChainState& state, double eta) {
  em_step(spec, NoiseFactor(spec), state, eta);
}

ChainResult run_chain(const DynamicsSpec& spec, const IntegratorConfig& config,
                      const Vec& init, std::uint64_t chain_id, HistogramSpec hist) {
  config.validate();
  if (init.size() != spec.n()) {
    std::ostringstream os;
    os << "initial state has length " << init.size() << ", expected " << spec.n();
    throw UsageError(os.str());
  }
  const NoiseFactor noise(spec);
  ChainState state(init, config.seed, chain_id);
  ChainResult result{EnsembleSummary(spec.n(), spec.layout(), hist), init, std::nullopt};

  std::ofstream traj;
  std::string traj_path;
  if (config.trajectory_dir) {
    ensure_directory(*config.trajectory_dir);
    traj_path = (std::filesystem::path(*config.trajectory_dir) /
                 ("chain_" + std::to_string(chain_id) + ".csv"))
                    .string();
    traj.open(traj_path + ".tmp", std::ios::trunc);
    if (!traj) throw IoError("cannot open " + traj_path + ".tmp");
    traj << "step";
    for (int i = 0; i < spec.n(); ++i) traj << ",z" << i;
    traj << "\n";
  }

  for (long long k = 1; k <= config.n_steps; ++k) {
    em_step(spec, noise, state, config.eta);
    if (config.retains(k)) {
      result.summary.add(state.z);
      if (traj) {
        traj << k;
        for (int i = 0; i < spec.n(); ++i) traj << "," << format_double(state.z[i]);
        traj << "\n";
      }
    }
  }
  if (config.trajectory_dir) {
    traj.close();
    std::error_code ec;
    std::filesystem::rename(traj_path + ".tmp", traj_path, ec);
    if (ec) throw IoError("cannot finalize " + traj_path);
    result.trajectory_path = traj_path;
  }
  result.final_state = state.z;
  return result;
}

EnsembleSummary run_ensemble(const DynamicsSpec& spec, const IntegratorConfig& config,
                             const Vec& init, HistogramSpec hist) {
  config.validate();
  const int chains = config.n_chains;
  int workers = config.threads > 0
                    ? config.threads
                    : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, chains);

  std::vector<std::optional<EnsembleSummary>> results(static_cast<std::size_t>(chains));
  std::vector<std::optional<DivergenceError>> failures(static_cast<std::size_t>(chains));
  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr fatal;

  auto worker = [&]() {
    for (;;) {
      const int id = next.fetch_add(1);
      if (id >= chains) return;
      try {
        results[id] = run_chain(spec, config, init, static_cast<std::uint64_t>(id), hist)
                          .summary;
      } catch (const DivergenceError& e) {
        failures[id] = e;
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!fatal) fatal = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  // Reduce in chain-id order so the result is independent of scheduling.
  auto merged = std::make_shared<EnsembleSummary>(spec.n(), spec.layout(), hist);
  std::vector<int> failed;
  for (int id = 0; id < chains; ++id) {
    if (results[id]) merged->merge(*results[id]);
    if (failures[id]) failed.push_back(id);
  }
  if (!failed.empty()) {
    std::ostringstream os;
    os << failed.size() << " of " << chains << " chains diverged (ids";
    for (int id : failed) os << " " << id;
    os << "); first: " << failures[failed.front()]->what();
    throw EnsembleDivergenceError(os.str(), *failures[failed.front()], failed, merged);
  }
  return *merged;
}

EnsembleSummary run_ensemble(const DynamicsSpec& spec, const IntegratorConfig& config) {
  return run_ensemble(spec, config, Vec::Zero(spec.n()));
}

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double ks_distance_marginal(const EnsembleSummary& summary, int coord,
                            const std::function<double(double)>& cdf) {
  if (summary.count() == 0) throw UsageError("KS distance of an empty summary");
  if (coord < 0 || coord >= summary.n()) throw UsageError("KS coordinate out of range");
  const auto& counts = summary.histogram(coord);
  const double total = static_cast<double>(summary.count());
  // The empirical CDF is exact at bin edges; between edges it is bracketed
  // by its values at the two neighbouring edges.
  long long below = summary.underflow(coord);
  double worst = 0.0;
  const int bins = static_cast<int>(counts.size());
  for (int k = 0; k <= bins; ++k) {
    const double edge = summary.bin_edge(k);
    const double f_emp = static_cast<double>(below) / total;
    worst = std::max(worst, std::abs(f_emp - cdf(edge)));
    if (k < bins) below += counts[k];
  }
  return worst;
}

}  // namespace langevin
