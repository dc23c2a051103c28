#pragma once

#include <span>
#include <string>
#include <vector>

#include "deepaco/instance.hpp"

namespace deepaco::cop {

// Floor added to heuristic measures and pheromone trails before exponentiation.
inline constexpr double kEtaFloor = 1e-10;

// Successor: trails/measures on directed pairs (i, j) of consecutive choices.
// Items: trails/measures on the chosen node itself.
enum class PheromoneModel { Successor, Items };

std::string to_string(PheromoneModel model);
PheromoneModel parse_pheromone_model(std::string_view name);

// Sparsified directed graph. Edges are stored CSR-style grouped by source node.
struct ConstructionGraph {
  int nodes = 0;
  std::vector<int> offsets;    // nodes + 1
  std::vector<int> targets;    // edge e goes offsets-grouped source -> targets[e]
  std::vector<int> sources;    // source node of edge e
  std::vector<int> edge_index; // nodes x nodes -> edge id or -1
  int k = 0;                   // nearest-neighbour count used (0 when complete)

  std::size_t edge_count() const { return targets.size(); }
  std::span<const int> neighbors(int i) const {
    return {targets.data() + offsets[i], static_cast<std::size_t>(offsets[i + 1] - offsets[i])};
  }
  int edge(int i, int j) const { return edge_index[static_cast<std::size_t>(i) * nodes + j]; }
  bool has_edge(int i, int j) const { return edge(i, j) >= 0; }
};

int default_neighbor_count(Kind kind, int n);

// Routing kinds keep each node's k nearest neighbours, always add the depot as a neighbour,
// then close the edge set under reversal. SMTWTP and MKP stay complete (no edges into node 0).
// k <= 0 selects default_neighbor_count.
ConstructionGraph sparsify(const Instance& instance, int k = 0);

enum class Provenance { Expert, Learned };

// Successor model: dense node_count x node_count matrix (zero off the graph).
// Items model: one entry per node, entry 0 (dummy start) unused.
struct HeuristicField {
  PheromoneModel model = PheromoneModel::Successor;
  int nodes = 0;
  std::vector<double> values;
  Provenance provenance = Provenance::Expert;
  int head = -1;

  double at(int i, int j) const {
    return model == PheromoneModel::Successor ? values[static_cast<std::size_t>(i) * nodes + j]
                                              : values[j];
  }
  static HeuristicField uniform(PheromoneModel model, int nodes, double value = 1.0);
};

// Expert baseline measure on the graph's components (zero off the graph).
HeuristicField expert_heuristic(const Instance& instance, const ConstructionGraph& graph,
                                PheromoneModel model = PheromoneModel::Successor);
// Expert measure on every pair, used when a TSP/PCTSP ant exhausts its sparse neighbourhood.
HeuristicField expert_heuristic_dense(const Instance& instance);

// Everything the engines need about one instance.
struct Problem {
  Instance instance;
  ConstructionGraph graph;
  PheromoneModel model = PheromoneModel::Successor;
  HeuristicField fallback;  // dense expert measure
  // MKP: for each constraint, item nodes by decreasing weight (constraints x n).
  std::vector<int> heavy_first;

  Kind kind() const { return instance.kind; }
  int nodes() const { return instance.node_count(); }
};

Problem make_problem(Instance instance, PheromoneModel model = PheromoneModel::Successor, int k = 0);

// Partial solution plus incrementally maintained accumulators.
class ConstructionState {
 public:
  ConstructionState(const Problem& problem, int start);

  const std::vector<int>& partial() const { return partial_; }
  int current() const { return partial_.back(); }
  bool visited(int node) const { return visited_[node] != 0; }
  bool done() const { return done_; }
  int visited_count() const { return static_cast<int>(partial_.size()); }
  double traveled() const { return traveled_; }
  double collected_prize() const { return collected_; }
  double elapsed() const { return elapsed_; }
  const std::vector<double>& residual() const { return residual_; }
  const Problem& problem() const { return *problem_; }

  // Appends a component. Choosing the depot (OP/PCTSP) closes the tour.
  void apply(int node);
  void finish() { done_ = true; }

 private:
  const Problem* problem_;
  std::vector<int> partial_;
  std::vector<char> visited_;
  bool done_ = false;
  double traveled_ = 0.0;
  double collected_ = 0.0;
  double elapsed_ = 0.0;
  std::vector<double> residual_;
};

// Result of one feasibility query; nodes are candidate next components.
struct Candidates {
  std::vector<int> nodes;
  bool fallback = false;  // candidates lie outside the sparsified graph
};

// The set N(s_<t). An empty set means the construction must stop.
void feasible_components(const ConstructionState& state, Candidates& out);
Candidates feasible_components(const ConstructionState& state);

// True when running out of candidates before completion is an error.
bool requires_completion(Kind kind);

// Objective to minimize (maximization problems are negated). Throws FeasibilityError naming
// the violated constraint. Solutions start with the start node (node 0 except for TSP).
double objective(const Instance& instance, std::span<const int> solution);
// Positive tour length of a closed cycle over the solution's nodes.
double tour_length(const Instance& instance, std::span<const int> tour);

// Components (pairs or single nodes) carried by a complete solution; used for deposits.
// Tour kinds include the closing edge.
std::vector<std::pair<int, int>> solution_edges(Kind kind, std::span<const int> solution);

}  // namespace deepaco::cop
