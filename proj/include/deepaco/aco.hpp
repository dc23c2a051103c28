#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "deepaco/local_search.hpp"
#include "deepaco/problem.hpp"

namespace deepaco::aco {

enum class Variant { AntSystem, Elitist, MaxMin };
std::string to_string(Variant v);
Variant parse_variant(std::string_view name);

enum class LocalSearch { None, TwoOpt, Nls, NlsRandom };
std::string to_string(LocalSearch ls);
LocalSearch parse_local_search(std::string_view name);

// Trails indexed like HeuristicField: dense pairs for the successor model, one entry
// per node for the items model.
struct PheromoneField {
  cop::PheromoneModel model = cop::PheromoneModel::Successor;
  int nodes = 0;
  std::vector<double> values;
  double tau_min = 0.0;
  double tau_max = std::numeric_limits<double>::infinity();

  std::size_t index(int i, int j) const {
    return model == cop::PheromoneModel::Successor ? static_cast<std::size_t>(i) * nodes + j
                                                   : static_cast<std::size_t>(j);
  }
  double at(int i, int j) const { return values[index(i, j)]; }
  static PheromoneField constant(cop::PheromoneModel model, int nodes, double value = 1.0);
};

struct AcoConfig {
  Variant variant = Variant::AntSystem;
  int n_ants = 20;
  double alpha = 1.0;
  double beta = 1.0;
  double evaporation = 0.1;  // rho
  double deposit_scale = 1.0;  // Q
  int elitist_weight = 0;      // 0 selects ceil(n_ants / 10)
  long budget = 4000;          // objective evaluations
  std::uint64_t seed = 0;
  LocalSearch local_search = LocalSearch::None;
  ls::NlsConfig nls;

  void validate() const;
  int effective_elitist_weight() const { return elitist_weight > 0 ? elitist_weight : (n_ants + 9) / 10; }
};

// One construction step as seen by the sampler; kept for training.
struct StepRecord {
  int from = 0;
  std::vector<int> candidates;
  int chosen = 0;         // index into candidates
  bool fallback = false;  // measures came from the dense expert field
};

struct Trajectory {
  std::vector<int> solution;
  double log_prob = 0.0;
  double objective = 0.0;
  std::vector<int> refined;  // empty when no local search ran
  double refined_objective = std::numeric_limits<double>::quiet_NaN();
  int head = 0;
  std::vector<StepRecord> steps;

  bool has_refined() const { return !refined.empty(); }
  const std::vector<int>& best_solution() const { return has_refined() ? refined : solution; }
  double best_objective() const { return has_refined() ? refined_objective : objective; }
};

// (tau + eps)^alpha * (eta + eps)^beta for every component, fixed for one iteration.
class SelectionWeights {
 public:
  SelectionWeights(const cop::Problem& problem, const PheromoneField& tau,
                   const cop::HeuristicField& eta, double alpha, double beta);

  double operator()(int from, int to, bool fallback) const;
  const cop::Problem& problem() const { return *problem_; }

 private:
  const cop::Problem* problem_;
  const PheromoneField* tau_;
  double alpha_;
  double beta_;
  std::vector<double> weights_;  // per graph component (dense index)
};

double power(double x, double exponent);

// Probabilities of each candidate under the selection rule (sums to 1).
std::vector<double> selection_probabilities(const SelectionWeights& weights, int from,
                                            const cop::Candidates& candidates);

Trajectory construct_solution(const SelectionWeights& weights, std::mt19937_64& rng,
                              bool record_steps = false);
Trajectory construct_solution(const cop::Problem& problem, const PheromoneField& tau,
                              const cop::HeuristicField& eta, double alpha, double beta,
                              std::mt19937_64& rng, bool record_steps = false);

// Tour improvement applied to constructed solutions of tour-structured problems.
class Refiner {
 public:
  // `eta` drives neural-guided perturbation; it may be null for other modes.
  Refiner(const cop::Problem& problem, const cop::HeuristicField* eta, LocalSearch mode,
          ls::NlsConfig cfg);
  bool active() const { return mode_ != LocalSearch::None; }
  long evaluations() const;  // cost of one call
  void apply(Trajectory& trajectory, std::mt19937_64& rng) const;
  std::vector<int> refine(std::vector<int> tour, std::mt19937_64& rng) const;

 private:
  const cop::Problem* problem_;
  LocalSearch mode_;
  ls::NlsConfig cfg_;
  ls::CostMatrix costs_;
  ls::CostMatrix perturb_;
};

// Deposit for one solution: Q / f for minimization, Q * f / f_best for maximization
// (relative quality of the negated objectives).
double deposit_amount(const cop::Instance& instance, double objective, double best_objective,
                      double deposit_scale);

void update_pheromone(PheromoneField& tau, const cop::Problem& problem,
                      std::span<const Trajectory> trajectories, const Trajectory* best_so_far,
                      const AcoConfig& config, long iteration);

struct LogPoint {
  long evaluations = 0;
  double best_objective = 0.0;
};

struct EvolutionLog {
  std::vector<LogPoint> points;  // one per iteration
  std::vector<int> best_solution;
  double best_objective = std::numeric_limits<double>::infinity();

  double final_objective() const { return points.empty() ? best_objective : points.back().best_objective; }
};

std::string to_csv(const EvolutionLog& log);
void write_csv(const std::filesystem::path& path, const EvolutionLog& log);

// Independent stream for (seed, iteration, ant); ants never share generator state.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t iteration, std::uint64_t ant);

// Ants are assigned to heads round-robin and share one pheromone field.
EvolutionLog run_colony(const cop::Problem& problem, const std::vector<cop::HeuristicField>& heads,
                        const AcoConfig& config);
EvolutionLog run_colony(const cop::Problem& problem, const cop::HeuristicField& eta,
                        const AcoConfig& config);
// Same loop with trails fixed at 1 and no pheromone updates.
EvolutionLog pure_sample(const cop::Problem& problem, const std::vector<cop::HeuristicField>& heads,
                         const AcoConfig& config);

}  // namespace deepaco::aco
