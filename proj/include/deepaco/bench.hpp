#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deepaco/aco.hpp"
#include "deepaco/model.hpp"
#include "deepaco/trainer.hpp"

namespace deepaco::bench {

enum class Method { AcoExpert, DeepAco, DeepAcoMultihead, DeepAcoTopk, DeepAcoImitation };
std::string to_string(Method m);
Method parse_method(std::string_view name);
bool is_learned(Method m);

// Training setup behind each learned method (heads and exploration losses).
train::TrainerConfig training_config(Method m, cop::Kind kind, int scale, cop::PheromoneModel pheromone,
                                     std::uint64_t seed);

// Held-out evaluation instances; seeds are disjoint from the training stream.
std::uint64_t test_instance_seed(std::uint64_t base, int index);
std::vector<cop::Instance> test_instances(cop::Kind kind, int scale, int count, std::uint64_t base = 0,
                                          int mkp_constraints = 5);

// Heuristic fields a method hands to the colony for one problem.
std::vector<cop::HeuristicField> method_fields(Method m, const cop::Problem& problem, nn::HeuristicModel* model);

// Runs `count` independent jobs on DEEPACO_WORKERS threads (default 1); results are
// stored by index so output never depends on scheduling.
void parallel_for(int count, const std::function<void(int)>& job);
int worker_count();

// Best-so-far of a log at evaluation budget x (last checkpoint at or before x; NaN before the first).
double value_at(const aco::EvolutionLog& log, long x);

struct BenchSpec {
  cop::Kind kind = cop::Kind::TSP;
  int scale = 20;
  cop::PheromoneModel pheromone = cop::PheromoneModel::Successor;
  std::vector<Method> methods = {Method::AcoExpert, Method::DeepAco};
  std::map<Method, std::filesystem::path> checkpoints;
  int instances = 100;
  std::uint64_t instance_seed = 0;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  aco::AcoConfig aco;  // budget, ants, variant, local search; seed is overridden per run
  std::filesystem::path out;  // empty: no files written
};

struct BenchResult {
  std::vector<long> grid;                           // common checkpoints
  std::map<Method, std::vector<double>> mean_curve;  // per checkpoint
  // final best-so-far [method][seed index][instance]
  std::map<Method, std::vector<std::vector<double>>> finals;
};

// Evolution logs for every (method, seed, instance); writes one CSV per log plus summary.csv.
BenchResult cmd_bench(const BenchSpec& spec, std::map<Method, nn::HeuristicModel*> models = {});
std::string summary_csv(const BenchSpec& spec, const BenchResult& result);

struct GridSpec {
  cop::Kind kind = cop::Kind::TSP;
  int scale = 100;
  int instances = 25;
  std::uint64_t instance_seed = 0;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::vector<double> alphas = {0.5, 1.0, 2.0, 3.0};
  std::vector<double> decays = {0.8, 0.9, 0.95, 0.99};  // trail retention; evaporation = 1 - decay
  aco::AcoConfig aco;
  std::filesystem::path out;
};

struct GridCell {
  Method method;
  double alpha;
  double decay;
  double mean_final;
};

struct GridResult {
  std::vector<GridCell> cells;
  std::map<Method, double> variance;  // population variance of mean_final over the grid
};

GridResult cmd_grid(const GridSpec& spec, nn::HeuristicModel& model);

struct SamplingSpec {
  cop::Kind kind = cop::Kind::TSP;
  int scale = 100;
  int instances = 100;
  std::uint64_t instance_seed = 0;
  std::uint64_t seed = 0;
  aco::AcoConfig aco;
  std::filesystem::path out;
};

struct SamplingRow {
  int instance;
  long evaluations;
  double evolution;
  double sampling;
};

std::vector<SamplingRow> cmd_sampling_compare(const SamplingSpec& spec, nn::HeuristicModel& model);

}  // namespace deepaco::bench
