#include "deepaco/local_search.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "deepaco/error.hpp"

namespace deepaco::ls {

CostMatrix distance_costs(const cop::Instance& instance) {
  if (!instance.is_routing()) {
    throw std::invalid_argument("distance_costs: " + cop::to_string(instance.kind) + " has no tours");
  }
  return CostMatrix{instance.node_count(), instance.dist};
}

CostMatrix perturbation_costs(const cop::HeuristicField& eta) {
  if (eta.model != cop::PheromoneModel::Successor) {
    throw std::invalid_argument("perturbation_costs: needs a successor heuristic field");
  }
  CostMatrix c{eta.nodes, std::vector<double>(static_cast<std::size_t>(eta.nodes) * eta.nodes, 0.0)};
  for (int i = 0; i < eta.nodes; ++i) {
    for (int j = 0; j < eta.nodes; ++j) {
      if (i == j) continue;
      c.values[static_cast<std::size_t>(i) * eta.nodes + j] =
          0.5 * (1.0 / (eta.at(i, j) + cop::kEtaFloor) + 1.0 / (eta.at(j, i) + cop::kEtaFloor));
    }
  }
  return c;
}

double tour_cost(const CostMatrix& costs, const std::vector<int>& tour) {
  double s = 0.0;
  for (std::size_t t = 0; t < tour.size(); ++t) s += costs(tour[t], tour[(t + 1) % tour.size()]);
  return s;
}

void validate_tour(const std::vector<int>& tour, int nodes) {
  std::vector<char> seen(nodes, 0);
  for (int v : tour) {
    if (v < 0 || v >= nodes) throw FeasibilityError("tour: node " + std::to_string(v) + " out of range");
    if (seen[v]) throw FeasibilityError("tour: node " + std::to_string(v) + " repeated");
    seen[v] = 1;
  }
}

namespace {

class TwoOpt {
 public:
  TwoOpt(std::vector<int>& tour, const CostMatrix& costs)
      : t_(tour), c_(costs), L_(static_cast<int>(tour.size())), pos_(costs.nodes, -1) {
    for (int p = 0; p < L_; ++p) pos_[t_[p]] = p;
  }

  int size() const { return L_; }
  int at(int p) const { return t_[p]; }
  int pos(int node) const { return pos_[node]; }

  // Exchange edges starting at positions e1 and e2 if that strictly lowers the cost.
  bool try_move(int e1, int e2) {
    if (e1 > e2) std::swap(e1, e2);
    if (e2 - e1 < 2 || (e1 == 0 && e2 == L_ - 1)) return false;
    const int a = t_[e1], b = t_[e1 + 1], c = t_[e2], d = t_[(e2 + 1) % L_];
    const double old_cost = c_(a, b) + c_(c, d);
    const double delta = c_(a, c) + c_(b, d) - old_cost;
    if (!(delta < -1e-12 * std::max(1.0, std::abs(old_cost)))) return false;
    std::reverse(t_.begin() + e1 + 1, t_.begin() + e2 + 1);
    for (int p = e1 + 1; p <= e2; ++p) pos_[t_[p]] = p;
    return true;
  }

 private:
  std::vector<int>& t_;
  const CostMatrix& c_;
  int L_;
  std::vector<int> pos_;
};

}  // namespace

int two_opt(std::vector<int>& tour, const CostMatrix& costs, const cop::ConstructionGraph* graph,
            int max_moves) {
  validate_tour(tour, costs.nodes);
  if (tour.size() < 4 || max_moves == 0) return 0;
  TwoOpt op(tour, costs);
  const int L = op.size();
  int moves = 0;
  auto limit_hit = [&] { return max_moves != kUnlimited && moves >= max_moves; };

  bool improved = true;
  while (improved) {
    improved = false;
    if (graph != nullptr) {
      for (int i = 0; i < L; ++i) {
        for (int c : graph->neighbors(op.at(i))) {
          const int j = op.pos(c);
          if (j < 0) continue;
          const bool moved = op.try_move(i, j) || op.try_move((i + L - 1) % L, (j + L - 1) % L);
          if (moved) {
            improved = true;
            if (++moves, limit_hit()) return moves;
            break;
          }
        }
      }
      if (improved) continue;
    }
    for (int e1 = 0; e1 + 2 < L && !improved; ++e1) {
      for (int e2 = e1 + 2; e2 < L; ++e2) {
        if (op.try_move(e1, e2)) {
          improved = true;
          if (++moves, limit_hit()) return moves;
          break;
        }
      }
    }
  }
  return moves;
}

bool has_improving_move(const std::vector<int>& tour, const CostMatrix& costs, double tol) {
  const int L = static_cast<int>(tour.size());
  for (int e1 = 0; e1 < L; ++e1) {
    for (int e2 = e1 + 2; e2 < L; ++e2) {
      if (e1 == 0 && e2 == L - 1) continue;
      const int a = tour[e1], b = tour[e1 + 1], c = tour[e2], d = tour[(e2 + 1) % L];
      if (costs(a, c) + costs(b, d) - costs(a, b) - costs(c, d) < -tol) return true;
    }
  }
  return false;
}

namespace {

template <class Perturb>
std::vector<int> interleaved(std::vector<int> tour, const CostMatrix& costs,
                             const cop::ConstructionGraph* graph, const NlsConfig& cfg,
                             Perturb perturb) {
  if (cfg.iterations < 0 || cfg.perturbation_moves < 1) {
    throw std::invalid_argument("nls: need T_NLS >= 0 and T_p >= 1");
  }
  two_opt(tour, costs, graph);
  std::vector<int> best = tour;
  double best_cost = tour_cost(costs, best);
  for (int it = 0; it < cfg.iterations; ++it) {
    perturb(tour);
    two_opt(tour, costs, graph);
    const double cost = tour_cost(costs, tour);
    if (cost < best_cost) {
      best_cost = cost;
      best = tour;
    }
  }
  return best;
}

}  // namespace

std::vector<int> nls(std::vector<int> tour, const CostMatrix& costs, const CostMatrix& perturb,
                     const cop::ConstructionGraph* graph, const NlsConfig& cfg) {
  return interleaved(std::move(tour), costs, graph, cfg, [&](std::vector<int>& s) {
    two_opt(s, perturb, graph, cfg.perturbation_moves);
  });
}

std::vector<int> nls_random(std::vector<int> tour, const CostMatrix& costs,
                            const cop::ConstructionGraph* graph, const NlsConfig& cfg,
                            std::mt19937_64& rng) {
  return interleaved(std::move(tour), costs, graph, cfg, [&](std::vector<int>& s) {
    random_perturb(s, cfg.perturbation_moves, rng);
  });
}

void random_perturb(std::vector<int>& tour, int moves, std::mt19937_64& rng) {
  const int L = static_cast<int>(tour.size());
  if (L < 3) return;
  std::uniform_int_distribution<int> pick(1, L - 1);
  for (int m = 0; m < moves; ++m) {
    int a = pick(rng), b = pick(rng);
    while (b == a) b = pick(rng);
    if (a > b) std::swap(a, b);
    std::reverse(tour.begin() + a, tour.begin() + b + 1);
  }
}

}  // namespace deepaco::ls
