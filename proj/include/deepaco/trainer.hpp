#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "deepaco/aco.hpp"
#include "deepaco/autodiff.hpp"
#include "deepaco/model.hpp"

namespace deepaco::train {

struct TrainerConfig {
  cop::Kind kind = cop::Kind::TSP;
  int scale = 20;
  cop::PheromoneModel pheromone = cop::PheromoneModel::Successor;
  int mkp_constraints = 5;
  int neighbors = 0;  // sparsification k, 0 = default for the scale

  int total_instances = 640;
  int instances_per_epoch = 64;
  int rollouts = 20;  // per instance and head

  double W = 0.0;  // weight of the post-local-search objective
  aco::LocalSearch train_local_search = aco::LocalSearch::Nls;  // used when W > 0
  ls::NlsConfig nls;

  double lambda_kl = 0.0;
  double lambda_entropy = 0.0;
  double lambda_imitation = 0.0;
  int topk = 5;

  double lr = 1e-3;
  ad::AdamConfig adam;
  double clip_norm = 3.0;  // global gradient norm cap, 0 disables
  std::uint64_t seed = 0;

  nn::ModelConfig model;  // kind, pheromone and input width are filled from the fields above

  void validate() const;
  nlohmann::json to_json() const;
};

// Applies a JSON object of overrides (same keys as to_json) onto a config.
void apply_overrides(TrainerConfig& cfg, const nlohmann::json& overrides);

// Rollouts with trails fixed at 1 and alpha = beta = 1; steps are recorded for the
// log-probability op. `refiner` (optional) fills the post-local-search objective.
std::vector<aco::Trajectory> rollout_batch(const cop::Problem& problem, const cop::HeuristicField& eta,
                                           int n_rollouts, std::uint64_t seed,
                                           const aco::Refiner* refiner = nullptr);

struct BatchStats {
  double baseline = 0.0;
  double baseline_nls = 0.0;
  bool has_nls = false;
};
// Per-instance mean baselines; needs at least two rollouts.
BatchStats batch_stats(const std::vector<aco::Trajectory>& trajectories);

// Rollout log-probabilities (rollouts x 1) as a differentiable function of the head
// output `eta` (forward() row layout). Fallback steps contribute constants.
ad::Var trajectory_log_probs(const ad::Var& eta, const cop::Problem& problem,
                             const std::vector<aco::Trajectory>& trajectories, double beta = 1.0);

// Surrogate whose gradient is the REINFORCE estimator:
// mean_r [ (f_r - b) + W (f_nls_r - b_nls) ] * log P_r.
ad::Var policy_gradient(const ad::Var& log_probs, const std::vector<aco::Trajectory>& trajectories,
                        const BatchStats& stats, double W);

// Row structure of a head output: rows are source nodes (successor) or one row of items.
struct RowLayout {
  std::vector<int> row;  // per output entry
  std::size_t rows = 0;
};
RowLayout row_layout(const cop::Problem& problem);

// -(1/(m^2 n)) sum_k sum_l sum_rows KL(eta~k || eta~l), rows normalized after the eps floor.
ad::Var loss_kl(const std::vector<ad::Var>& heads, const RowLayout& layout);
// (1/n) sum_rows sum_{top-k} p log p with p normalized inside each row's top-k set.
ad::Var loss_topk_entropy(const ad::Var& eta, const RowLayout& layout, int k);
// (1/n) sum_rows KL(expert~ || eta~).
ad::Var loss_imitation(const ad::Var& eta, const std::vector<double>& expert, const RowLayout& layout);

// Expert measures in forward() row layout.
std::vector<double> expert_rows(const cop::Problem& problem);

struct EpochRecord {
  int epoch = 0;
  double mean_f = 0.0;
  double mean_f_nls = 0.0;  // NaN when no local search ran
  double loss = 0.0;
  double seconds = 0.0;
};

std::string training_log_csv(const std::vector<EpochRecord>& log);

struct TrainResult {
  nn::HeuristicModel model;
  std::vector<EpochRecord> log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Deterministic given cfg.seed. A non-finite loss aborts with NumericError naming the epoch.
TrainResult train(const TrainerConfig& cfg, const EpochCallback& on_epoch = {});

// Seed of the i-th training instance.
std::uint64_t training_instance_seed(std::uint64_t seed, long index);

}  // namespace deepaco::train
