#include "deepaco/problem.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "deepaco/error.hpp"

namespace deepaco::cop {

std::string to_string(PheromoneModel model) {
  return model == PheromoneModel::Successor ? "successor" : "items";
}

PheromoneModel parse_pheromone_model(std::string_view name) {
  if (name == "successor" || name == "suc" || name == "ph_suc") return PheromoneModel::Successor;
  if (name == "items" || name == "ph_items") return PheromoneModel::Items;
  throw std::invalid_argument("unknown pheromone model '" + std::string(name) + "'");
}

int default_neighbor_count(Kind, int n) {
  if (n <= 20) return 10;
  if (n <= 100) return 20;
  return 50;
}

ConstructionGraph sparsify(const Instance& instance, int k) {
  const int nodes = instance.node_count();
  ConstructionGraph g;
  g.nodes = nodes;
  std::vector<char> adj(static_cast<std::size_t>(nodes) * nodes, 0);
  auto set = [&](int i, int j) { adj[static_cast<std::size_t>(i) * nodes + j] = 1; };

  if (instance.is_routing()) {
    if (k <= 0) k = default_neighbor_count(instance.kind, instance.n);
    g.k = std::min(k, nodes - 1);
    std::vector<int> order;
    for (int i = 0; i < nodes; ++i) {
      order.resize(nodes);
      std::iota(order.begin(), order.end(), 0);
      order.erase(order.begin() + i);
      std::partial_sort(order.begin(), order.begin() + g.k, order.end(), [&](int a, int b) {
        const double da = instance.distance(i, a), db = instance.distance(i, b);
        return da < db || (da == db && a < b);
      });
      for (int r = 0; r < g.k; ++r) set(i, order[r]);
      if (instance.has_depot() && i != 0) set(i, 0);
    }
    for (int i = 0; i < nodes; ++i)
      for (int j = 0; j < nodes; ++j)
        if (adj[static_cast<std::size_t>(i) * nodes + j]) set(j, i);
  } else {
    g.k = 0;
    for (int i = 0; i < nodes; ++i)
      for (int j = 1; j < nodes; ++j)
        if (i != j) set(i, j);
  }

  g.offsets.assign(nodes + 1, 0);
  g.edge_index.assign(static_cast<std::size_t>(nodes) * nodes, -1);
  for (int i = 0; i < nodes; ++i) {
    g.offsets[i] = static_cast<int>(g.targets.size());
    for (int j = 0; j < nodes; ++j) {
      if (!adj[static_cast<std::size_t>(i) * nodes + j]) continue;
      g.edge_index[static_cast<std::size_t>(i) * nodes + j] = static_cast<int>(g.targets.size());
      g.targets.push_back(j);
      g.sources.push_back(i);
    }
  }
  g.offsets[nodes] = static_cast<int>(g.targets.size());
  return g;
}

HeuristicField HeuristicField::uniform(PheromoneModel model, int nodes, double value) {
  HeuristicField f;
  f.model = model;
  f.nodes = nodes;
  const std::size_t size =
      model == PheromoneModel::Successor ? static_cast<std::size_t>(nodes) * nodes : nodes;
  f.values.assign(size, value);
  return f;
}

namespace {

double safe_inverse(double x) { return 1.0 / std::max(x, kEtaFloor); }

// Expert measure of moving from i to j (or of choosing item j).
double expert_value(const Instance& inst, int i, int j, double mean_prize) {
  switch (inst.kind) {
    case Kind::TSP: return safe_inverse(inst.distance(i, j));
    case Kind::OP: return std::max(inst.prize[j], kEtaFloor) * safe_inverse(inst.distance(i, j));
    case Kind::PCTSP: {
      // The depot carries no prize; returning is valued like an average customer.
      const double p = j == 0 ? mean_prize : inst.prize[j];
      return std::max(p, kEtaFloor) * safe_inverse(inst.distance(i, j));
    }
    case Kind::SMTWTP: return safe_inverse(inst.due[j]);
    case Kind::MKP: {
      double w = 0.0;
      for (int c = 0; c < inst.constraints; ++c) w += inst.item_weight(c, j);
      return std::max(inst.values[j], kEtaFloor) * safe_inverse(w);
    }
  }
  return 1.0;
}

double mean_customer_prize(const Instance& inst) {
  if (!inst.has_depot() || inst.n == 0) return 0.0;
  double s = 0.0;
  for (int i = 1; i <= inst.n; ++i) s += inst.prize[i];
  return s / inst.n;
}

}  // namespace

HeuristicField expert_heuristic(const Instance& instance, const ConstructionGraph& graph,
                                PheromoneModel model) {
  const int nodes = instance.node_count();
  const double mp = mean_customer_prize(instance);
  if (model == PheromoneModel::Items) {
    if (instance.kind != Kind::MKP) {
      throw std::invalid_argument("items pheromone model is only defined for MKP");
    }
    auto f = HeuristicField::uniform(model, nodes, 0.0);
    for (int j = 1; j < nodes; ++j) f.values[j] = expert_value(instance, 0, j, mp);
    return f;
  }
  auto f = HeuristicField::uniform(model, nodes, 0.0);
  for (std::size_t e = 0; e < graph.edge_count(); ++e) {
    const int i = graph.sources[e], j = graph.targets[e];
    f.values[static_cast<std::size_t>(i) * nodes + j] = expert_value(instance, i, j, mp);
  }
  return f;
}

HeuristicField expert_heuristic_dense(const Instance& instance) {
  const int nodes = instance.node_count();
  const double mp = mean_customer_prize(instance);
  auto f = HeuristicField::uniform(PheromoneModel::Successor, nodes, 0.0);
  for (int i = 0; i < nodes; ++i)
    for (int j = 0; j < nodes; ++j)
      if (i != j) f.values[static_cast<std::size_t>(i) * nodes + j] = expert_value(instance, i, j, mp);
  return f;
}

Problem make_problem(Instance instance, PheromoneModel model, int k) {
  if (model == PheromoneModel::Items && instance.kind != Kind::MKP) {
    throw std::invalid_argument("items pheromone model is only defined for MKP");
  }
  Problem p;
  p.graph = sparsify(instance, k);
  p.model = model;
  if (instance.kind == Kind::TSP || instance.kind == Kind::PCTSP) {
    p.fallback = expert_heuristic_dense(instance);
  }
  if (instance.kind == Kind::MKP) {
    for (int c = 0; c < instance.constraints; ++c) {
      std::vector<int> order(instance.n);
      std::iota(order.begin(), order.end(), 1);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return instance.item_weight(c, a) > instance.item_weight(c, b);
      });
      p.heavy_first.insert(p.heavy_first.end(), order.begin(), order.end());
    }
  }
  p.instance = std::move(instance);
  return p;
}

// ---- construction state ------------------------------------------------

ConstructionState::ConstructionState(const Problem& problem, int start) : problem_(&problem) {
  const auto& inst = problem.instance;
  const int nodes = inst.node_count();
  if (start < 0 || start >= nodes) throw std::out_of_range("ConstructionState: bad start node");
  if (inst.kind != Kind::TSP && start != 0) {
    throw std::invalid_argument("ConstructionState: " + to_string(inst.kind) + " starts at node 0");
  }
  visited_.assign(nodes, 0);
  visited_[start] = 1;
  partial_.push_back(start);
  if (inst.kind == Kind::MKP) residual_ = inst.capacities;
}

void ConstructionState::apply(int node) {
  if (done_) throw std::logic_error("ConstructionState::apply on a finished solution");
  const auto& inst = problem_->instance;
  const int cur = current();
  if (inst.has_depot() && node == 0) {
    traveled_ += inst.distance(cur, 0);
    done_ = true;
    return;
  }
  if (visited_[node]) {
    throw FeasibilityError("ConstructionState: node " + std::to_string(node) + " already used");
  }
  visited_[node] = 1;
  partial_.push_back(node);
  switch (inst.kind) {
    case Kind::TSP:
      traveled_ += inst.distance(cur, node);
      if (visited_count() == inst.n) done_ = true;
      break;
    case Kind::OP:
    case Kind::PCTSP:
      traveled_ += inst.distance(cur, node);
      collected_ += inst.prize[node];
      break;
    case Kind::SMTWTP:
      elapsed_ += inst.processing[node];
      if (visited_count() == inst.n + 1) done_ = true;
      break;
    case Kind::MKP:
      for (int c = 0; c < inst.constraints; ++c) residual_[c] -= inst.item_weight(c, node);
      break;
  }
}

bool requires_completion(Kind kind) {
  return kind == Kind::TSP || kind == Kind::PCTSP || kind == Kind::SMTWTP;
}

void feasible_components(const ConstructionState& state, Candidates& out) {
  out.nodes.clear();
  out.fallback = false;
  if (state.done()) return;
  const auto& problem = state.problem();
  const auto& inst = problem.instance;
  const auto& graph = problem.graph;
  const int cur = state.current();
  const int nodes = inst.node_count();
  if (static_cast<int>(state.residual().size()) != (inst.kind == Kind::MKP ? inst.constraints : 0)) {
    throw std::logic_error("feasible_components: state does not match its instance");
  }

  switch (inst.kind) {
    case Kind::TSP:
    case Kind::PCTSP: {
      for (int j : graph.neighbors(cur))
        if (j != 0 || inst.kind == Kind::TSP)
          if (!state.visited(j)) out.nodes.push_back(j);
      if (out.nodes.empty()) {
        for (int j = inst.kind == Kind::TSP ? 0 : 1; j < nodes; ++j)
          if (!state.visited(j)) out.nodes.push_back(j);
        out.fallback = !out.nodes.empty();
      }
      if (inst.kind == Kind::PCTSP && state.collected_prize() >= inst.min_prize) out.nodes.push_back(0);
      break;
    }
    case Kind::OP: {
      const double used = state.traveled();
      for (int j : graph.neighbors(cur)) {
        if (j == 0 || state.visited(j)) continue;
        if (used + inst.distance(cur, j) + inst.distance(j, 0) <= inst.max_length) out.nodes.push_back(j);
      }
      out.nodes.push_back(0);
      break;
    }
    case Kind::SMTWTP:
      for (int j = 1; j < nodes; ++j)
        if (!state.visited(j)) out.nodes.push_back(j);
      break;
    case Kind::MKP: {
      const auto& residual = state.residual();
      for (int j = 1; j < nodes; ++j) {
        if (state.visited(j)) continue;
        bool fits = true;
        for (int c = 0; c < inst.constraints && fits; ++c) fits = inst.item_weight(c, j) <= residual[c];
        if (fits) out.nodes.push_back(j);
      }
      break;
    }
  }
}

Candidates feasible_components(const ConstructionState& state) {
  Candidates c;
  feasible_components(state, c);
  return c;
}

// ---- objectives ----------------------------------------------------------

double tour_length(const Instance& instance, std::span<const int> tour) {
  double len = 0.0;
  for (std::size_t t = 0; t < tour.size(); ++t) {
    len += instance.distance(tour[t], tour[(t + 1) % tour.size()]);
  }
  return len;
}

namespace {

void check_distinct(const Instance& inst, std::span<const int> solution, int first_valid) {
  std::vector<char> seen(inst.node_count(), 0);
  for (std::size_t t = 0; t < solution.size(); ++t) {
    const int v = solution[t];
    if (v < 0 || v >= inst.node_count() || (t > 0 && v < first_valid)) {
      throw FeasibilityError(to_string(inst.kind) + ": invalid component " + std::to_string(v));
    }
    if (seen[v]) throw FeasibilityError(to_string(inst.kind) + ": node " + std::to_string(v) + " repeated");
    seen[v] = 1;
  }
}

void check_starts_at_zero(const Instance& inst, std::span<const int> solution) {
  if (solution.empty() || solution[0] != 0) {
    throw FeasibilityError(to_string(inst.kind) + ": solution must start at node 0");
  }
}

}  // namespace

double objective(const Instance& inst, std::span<const int> solution) {
  switch (inst.kind) {
    case Kind::TSP: {
      check_distinct(inst, solution, 0);
      if (static_cast<int>(solution.size()) != inst.n) {
        throw FeasibilityError("tsp: tour visits " + std::to_string(solution.size()) + " of " +
                               std::to_string(inst.n) + " cities");
      }
      return tour_length(inst, solution);
    }
    case Kind::OP: {
      check_starts_at_zero(inst, solution);
      check_distinct(inst, solution, 1);
      const double len = tour_length(inst, solution);
      if (len > inst.max_length + 1e-9) {
        throw FeasibilityError("op: tour length " + std::to_string(len) + " exceeds budget " +
                               std::to_string(inst.max_length));
      }
      double prize = 0.0;
      for (int v : solution) prize += inst.prize[v];
      return -prize;
    }
    case Kind::PCTSP: {
      check_starts_at_zero(inst, solution);
      check_distinct(inst, solution, 1);
      double prize = 0.0;
      double penalty = 0.0;
      std::vector<char> seen(inst.node_count(), 0);
      for (int v : solution) {
        prize += inst.prize[v];
        seen[v] = 1;
      }
      if (prize < inst.min_prize - 1e-9) {
        throw FeasibilityError("pctsp: collected prize " + std::to_string(prize) + " below minimum " +
                               std::to_string(inst.min_prize));
      }
      for (int v = 1; v <= inst.n; ++v)
        if (!seen[v]) penalty += inst.penalty[v];
      return tour_length(inst, solution) + penalty;
    }
    case Kind::SMTWTP: {
      check_starts_at_zero(inst, solution);
      check_distinct(inst, solution, 1);
      if (static_cast<int>(solution.size()) != inst.n + 1) {
        throw FeasibilityError("smtwtp: schedule covers " + std::to_string(solution.size() - 1) +
                               " of " + std::to_string(inst.n) + " jobs");
      }
      double t = 0.0;
      double tardiness = 0.0;
      for (std::size_t k = 1; k < solution.size(); ++k) {
        const int j = solution[k];
        t += inst.processing[j];
        tardiness += inst.weight[j] * std::max(0.0, t - inst.due[j]);
      }
      return tardiness;
    }
    case Kind::MKP: {
      check_starts_at_zero(inst, solution);
      check_distinct(inst, solution, 1);
      double value = 0.0;
      std::vector<double> load(inst.constraints, 0.0);
      for (std::size_t k = 1; k < solution.size(); ++k) {
        const int j = solution[k];
        value += inst.values[j];
        for (int c = 0; c < inst.constraints; ++c) load[c] += inst.item_weight(c, j);
      }
      for (int c = 0; c < inst.constraints; ++c) {
        if (load[c] > inst.capacities[c] + 1e-9) {
          throw FeasibilityError("mkp: capacity constraint " + std::to_string(c) + " violated");
        }
      }
      return -value;
    }
  }
  throw std::invalid_argument("objective: unsupported kind");
}

std::vector<std::pair<int, int>> solution_edges(Kind kind, std::span<const int> solution) {
  std::vector<std::pair<int, int>> edges;
  if (solution.empty()) return edges;
  for (std::size_t t = 0; t + 1 < solution.size(); ++t) edges.emplace_back(solution[t], solution[t + 1]);
  const bool closed = kind == Kind::TSP || kind == Kind::OP || kind == Kind::PCTSP;
  if (closed && solution.size() > 1) edges.emplace_back(solution.back(), solution.front());
  return edges;
}

}  // namespace deepaco::cop
