#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "deepaco/problem.hpp"

namespace deepaco::ls {

// Symmetric per-pair costs used as the 2-opt objective.
struct CostMatrix {
  int nodes = 0;
  std::vector<double> values;

  double operator()(int i, int j) const { return values[static_cast<std::size_t>(i) * nodes + j]; }
};

CostMatrix distance_costs(const cop::Instance& instance);
// Perturbation surrogate: the mean of 1/(eta_ij + eps) and 1/(eta_ji + eps), so that a
// move's cost does not depend on the direction the tour is walked.
CostMatrix perturbation_costs(const cop::HeuristicField& eta);

// Sum of costs over a closed tour.
double tour_cost(const CostMatrix& costs, const std::vector<int>& tour);

inline constexpr int kUnlimited = -1;

// First-improvement 2-opt. Candidate moves come from the neighbour lists of `graph`
// (when given), followed by a full scan so an unlimited run always ends 2-opt-optimal.
// max_moves bounds the accepted moves. The node at position 0 never moves.
// Returns the number of accepted moves.
int two_opt(std::vector<int>& tour, const CostMatrix& costs, const cop::ConstructionGraph* graph,
            int max_moves = kUnlimited);

// True when some single 2-opt exchange strictly lowers the tour cost (exhaustive scan).
bool has_improving_move(const std::vector<int>& tour, const CostMatrix& costs, double tol = 1e-9);

struct NlsConfig {
  int iterations = 10;         // T_NLS
  int perturbation_moves = 20; // T_p
};

// Objective evaluations charged for one call (the first refinement plus one per round).
inline long nls_evaluations(const NlsConfig& cfg) { return 1 + cfg.iterations; }

// Local search interleaved with perturbation. Each round perturbs the current tour with up
// to T_p moves under `perturb` costs, refines it under `costs`, and keeps the best tour seen.
std::vector<int> nls(std::vector<int> tour, const CostMatrix& costs, const CostMatrix& perturb,
                     const cop::ConstructionGraph* graph, const NlsConfig& cfg);

// The same loop with random segment reversals in place of guided perturbation.
std::vector<int> nls_random(std::vector<int> tour, const CostMatrix& costs,
                            const cop::ConstructionGraph* graph, const NlsConfig& cfg,
                            std::mt19937_64& rng);

// T_p reversals of random segments within positions [1, L-1].
void random_perturb(std::vector<int>& tour, int moves, std::mt19937_64& rng);

// Checks that a tour is a permutation of distinct nodes in [0, nodes).
void validate_tour(const std::vector<int>& tour, int nodes);

}  // namespace deepaco::ls
