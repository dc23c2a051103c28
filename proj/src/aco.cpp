#include "deepaco/aco.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

#include "deepaco/error.hpp"
#include "deepaco/io.hpp"

namespace deepaco::aco {

using cop::Kind;
using cop::PheromoneModel;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::AntSystem: return "as";
    case Variant::Elitist: return "elitist";
    case Variant::MaxMin: return "maxmin";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  if (name == "as" || name == "ant-system") return Variant::AntSystem;
  if (name == "elitist" || name == "eas") return Variant::Elitist;
  if (name == "maxmin" || name == "max-min" || name == "mmas") return Variant::MaxMin;
  throw std::invalid_argument("unknown ACO variant '" + std::string(name) + "'");
}

std::string to_string(LocalSearch ls) {
  switch (ls) {
    case LocalSearch::None: return "none";
    case LocalSearch::TwoOpt: return "2opt";
    case LocalSearch::Nls: return "nls";
    case LocalSearch::NlsRandom: return "nls-random";
  }
  return "?";
}

LocalSearch parse_local_search(std::string_view name) {
  if (name == "none") return LocalSearch::None;
  if (name == "2opt" || name == "two-opt") return LocalSearch::TwoOpt;
  if (name == "nls") return LocalSearch::Nls;
  if (name == "nls-random") return LocalSearch::NlsRandom;
  throw std::invalid_argument("unknown local search '" + std::string(name) + "'");
}

PheromoneField PheromoneField::constant(PheromoneModel model, int nodes, double value) {
  PheromoneField f;
  f.model = model;
  f.nodes = nodes;
  f.values.assign(model == PheromoneModel::Successor ? static_cast<std::size_t>(nodes) * nodes : nodes,
                  value);
  return f;
}

void AcoConfig::validate() const {
  if (n_ants < 1) throw std::invalid_argument("AcoConfig: n_ants must be >= 1");
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw std::invalid_argument("AcoConfig: alpha and beta must be >= 0");
  if (!(evaporation > 0.0 && evaporation < 1.0)) {
    throw std::invalid_argument("AcoConfig: evaporation must lie in (0, 1)");
  }
  if (!(deposit_scale > 0.0)) throw std::invalid_argument("AcoConfig: deposit scale must be positive");
  if (budget < 1) throw std::invalid_argument("AcoConfig: budget must be >= 1");
}

double power(double x, double exponent) {
  if (exponent == 1.0) return x;
  if (exponent == 0.0) return 1.0;
  if (exponent == 2.0) return x * x;
  if (exponent == 0.5) return std::sqrt(x);
  if (exponent == 3.0) return x * x * x;
  return std::pow(x, exponent);
}

// ---- selection -----------------------------------------------------------

SelectionWeights::SelectionWeights(const cop::Problem& problem, const PheromoneField& tau,
                                   const cop::HeuristicField& eta, double alpha, double beta)
    : problem_(&problem), tau_(&tau), alpha_(alpha), beta_(beta) {
  const int n = problem.nodes();
  if (tau.model != problem.model || eta.model != problem.model) {
    throw std::invalid_argument("SelectionWeights: pheromone model mismatch");
  }
  if (tau.nodes != n || eta.nodes != n) {
    throw ShapeError("SelectionWeights: fields have " + std::to_string(eta.nodes) + "/" +
                     std::to_string(tau.nodes) + " nodes, instance has " + std::to_string(n));
  }
  auto w = [&](double t, double e) {
    return power(t + cop::kEtaFloor, alpha) * power(e + cop::kEtaFloor, beta);
  };
  if (problem.model == PheromoneModel::Items) {
    weights_.assign(n, 0.0);
    for (int j = 1; j < n; ++j) weights_[j] = w(tau.values[j], eta.values[j]);
    return;
  }
  weights_.assign(static_cast<std::size_t>(n) * n, 0.0);
  const auto& g = problem.graph;
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    const auto idx = static_cast<std::size_t>(g.sources[e]) * n + g.targets[e];
    weights_[idx] = w(tau.values[idx], eta.values[idx]);
  }
  // Ending an OP tour at the depot before leaving it is a component off the graph.
  if (problem.instance.has_depot()) weights_[0] = w(tau.values[0], eta.values[0]);
}

double SelectionWeights::operator()(int from, int to, bool fallback) const {
  if (problem_->model == PheromoneModel::Items) return weights_[to];
  if (!fallback) return weights_[static_cast<std::size_t>(from) * problem_->nodes() + to];
  return power(tau_->at(from, to) + cop::kEtaFloor, alpha_) *
         power(problem_->fallback.at(from, to) + cop::kEtaFloor, beta_);
}

std::vector<double> selection_probabilities(const SelectionWeights& weights, int from,
                                            const cop::Candidates& candidates) {
  std::vector<double> p;
  p.reserve(candidates.nodes.size());
  double total = 0.0;
  for (int j : candidates.nodes) {
    p.push_back(weights(from, j, candidates.fallback));
    total += p.back();
  }
  for (auto& v : p) v /= total;
  return p;
}

namespace {

class Fenwick {
 public:
  explicit Fenwick(std::vector<double> w) : t_(std::move(w)), n_(static_cast<int>(t_.size()) - 1) {
    for (int i = 1; i <= n_; ++i) {
      const int j = i + (i & -i);
      if (j <= n_) t_[j] += t_[i];
    }
  }
  void add(int i, double d) {
    for (; i <= n_; i += i & -i) t_[i] += d;
  }
  double total() const {
    double s = 0.0;
    for (int i = n_; i > 0; i -= i & -i) s += t_[i];
    return s;
  }
  // Smallest index whose prefix sum exceeds u.
  int find(double u) const {
    int pos = 0;
    for (int step = std::bit_floor(static_cast<unsigned>(std::max(n_, 1))); step > 0; step >>= 1) {
      if (pos + step <= n_ && t_[pos + step] <= u) {
        pos += step;
        u -= t_[pos];
      }
    }
    return pos + 1;
  }

 private:
  std::vector<double> t_;
  int n_;
};

// Items-model MKP sampler. Items that stop fitting are dropped for good (capacities only
// shrink), so each step samples from exactly the feasible set without rescanning it.
Trajectory construct_mkp_items(const SelectionWeights& weights, std::mt19937_64& rng) {
  const auto& problem = weights.problem();
  const auto& inst = problem.instance;
  const int n = inst.n;
  const int m = inst.constraints;
  std::vector<double> w(n + 1, 0.0);
  for (int j = 1; j <= n; ++j) w[j] = weights(0, j, false);
  Fenwick tree(w);
  std::vector<char> alive(n + 1, 1);
  alive[0] = 0;
  int alive_count = n;
  std::vector<double> residual = inst.capacities;
  std::vector<int> cursor(m, 0);
  auto drop = [&](int j) {
    if (!alive[j]) return;
    alive[j] = 0;
    --alive_count;
    tree.add(j, -w[j]);
  };
  auto purge = [&] {
    for (int c = 0; c < m; ++c) {
      const int* order = problem.heavy_first.data() + static_cast<std::size_t>(c) * n;
      while (cursor[c] < n && inst.item_weight(c, order[cursor[c]]) > residual[c]) drop(order[cursor[c]++]);
    }
  };

  Trajectory tr;
  tr.solution.push_back(0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  purge();
  double built_total = tree.total();
  while (alive_count > 0) {
    double total = tree.total();
    if (total < 1e-6 * built_total) {
      // Removing heavy items leaves cancellation error in the running sums.
      std::vector<double> live(n + 1, 0.0);
      for (int j = 1; j <= n; ++j)
        if (alive[j]) live[j] = w[j];
      tree = Fenwick(live);
      total = built_total = tree.total();
    }
    if (!(total > 0.0) || !std::isfinite(total)) throw NumericError("construction: degenerate selection weights");
    int j = tree.find(unif(rng) * total);
    if (j > n || !alive[j]) {
      // Rounding pushed the draw past the last live item.
      j = n;
      while (j > 0 && !alive[j]) --j;
    }
    tr.log_prob += std::log(w[j] / total);
    tr.solution.push_back(j);
    for (int c = 0; c < m; ++c) residual[c] -= inst.item_weight(c, j);
    drop(j);
    purge();
  }
  tr.objective = cop::objective(inst, tr.solution);
  return tr;
}

}  // namespace

Trajectory construct_solution(const SelectionWeights& weights, std::mt19937_64& rng, bool record_steps) {
  const auto& problem = weights.problem();
  const auto& inst = problem.instance;
  if (inst.kind == Kind::MKP && problem.model == PheromoneModel::Items && !record_steps) {
    return construct_mkp_items(weights, rng);
  }
  int start = 0;
  if (inst.kind == Kind::TSP) start = std::uniform_int_distribution<int>(0, inst.n - 1)(rng);
  cop::ConstructionState state(problem, start);
  cop::Candidates cand;
  std::vector<double> w;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Trajectory tr;
  while (!state.done()) {
    cop::feasible_components(state, cand);
    if (cand.nodes.empty()) {
      if (cop::requires_completion(inst.kind)) {
        throw FeasibilityError("construction: no feasible component left for an incomplete " +
                               cop::to_string(inst.kind) + " solution");
      }
      state.finish();
      break;
    }
    const int from = state.current();
    w.resize(cand.nodes.size());
    double total = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      w[k] = weights(from, cand.nodes[k], cand.fallback);
      total += w[k];
    }
    if (!(total > 0.0) || !std::isfinite(total)) throw NumericError("construction: degenerate selection weights");
    const double u = unif(rng) * total;
    std::size_t idx = 0;
    double cum = w[0];
    while (cum <= u && idx + 1 < w.size()) cum += w[++idx];
    tr.log_prob += std::log(w[idx] / total);
    if (record_steps) tr.steps.push_back({from, cand.nodes, static_cast<int>(idx), cand.fallback});
    state.apply(cand.nodes[idx]);
  }
  tr.solution = state.partial();
  tr.objective = cop::objective(inst, tr.solution);
  return tr;
}

Trajectory construct_solution(const cop::Problem& problem, const PheromoneField& tau,
                              const cop::HeuristicField& eta, double alpha, double beta,
                              std::mt19937_64& rng, bool record_steps) {
  return construct_solution(SelectionWeights(problem, tau, eta, alpha, beta), rng, record_steps);
}

// ---- local search hook ---------------------------------------------------

Refiner::Refiner(const cop::Problem& problem, const cop::HeuristicField* eta, LocalSearch mode,
                 ls::NlsConfig cfg)
    : problem_(&problem), mode_(problem.instance.is_routing() ? mode : LocalSearch::None), cfg_(cfg) {
  if (mode_ == LocalSearch::None) return;
  costs_ = ls::distance_costs(problem.instance);
  if (mode_ == LocalSearch::Nls) {
    if (eta == nullptr) throw std::invalid_argument("Refiner: NLS needs a heuristic field");
    perturb_ = ls::perturbation_costs(*eta);
  }
}

long Refiner::evaluations() const {
  switch (mode_) {
    case LocalSearch::None: return 0;
    case LocalSearch::TwoOpt: return 1;
    case LocalSearch::Nls:
    case LocalSearch::NlsRandom: return ls::nls_evaluations(cfg_);
  }
  return 0;
}

std::vector<int> Refiner::refine(std::vector<int> tour, std::mt19937_64& rng) const {
  const auto* graph = &problem_->graph;
  switch (mode_) {
    case LocalSearch::None: return tour;
    case LocalSearch::TwoOpt: ls::two_opt(tour, costs_, graph); return tour;
    case LocalSearch::Nls: return ls::nls(std::move(tour), costs_, perturb_, graph, cfg_);
    case LocalSearch::NlsRandom: return ls::nls_random(std::move(tour), costs_, graph, cfg_, rng);
  }
  return tour;
}

void Refiner::apply(Trajectory& trajectory, std::mt19937_64& rng) const {
  if (!active()) return;
  trajectory.refined = refine(trajectory.solution, rng);
  trajectory.refined_objective = cop::objective(problem_->instance, trajectory.refined);
}

// ---- pheromone update ----------------------------------------------------

double deposit_amount(const cop::Instance& instance, double objective, double best_objective,
                      double deposit_scale) {
  if (instance.is_maximization()) {
    if (best_objective == 0.0) return 0.0;
    return deposit_scale * (objective / best_objective);
  }
  if (!(objective > 0.0)) {
    throw NumericError("pheromone deposit undefined for objective " + io::format_number(objective));
  }
  return deposit_scale / objective;
}

void update_pheromone(PheromoneField& tau, const cop::Problem& problem,
                      std::span<const Trajectory> trajectories, const Trajectory* best_so_far,
                      const AcoConfig& config, long iteration) {
  const auto& inst = problem.instance;
  const int n = problem.nodes();
  if (tau.model != problem.model || tau.nodes != n) {
    throw std::invalid_argument("update_pheromone: field does not match the problem");
  }
  const double rho = config.evaporation;
  for (auto& v : tau.values) v *= 1.0 - rho;

  const Trajectory* iteration_best = nullptr;
  for (const auto& t : trajectories) {
    if (iteration_best == nullptr || t.best_objective() < iteration_best->best_objective()) iteration_best = &t;
  }
  const Trajectory* reference = best_so_far != nullptr ? best_so_far : iteration_best;
  const double best_obj = reference != nullptr ? reference->best_objective() : 0.0;

  auto deposit_on = [&](const std::vector<int>& sol, double amount) {
    if (problem.model == PheromoneModel::Items) {
      for (std::size_t k = 1; k < sol.size(); ++k) tau.values[sol[k]] += amount;
      return;
    }
    for (auto [a, b] : cop::solution_edges(inst.kind, sol)) {
      tau.values[static_cast<std::size_t>(a) * n + b] += amount;
      if (inst.is_routing()) tau.values[static_cast<std::size_t>(b) * n + a] += amount;
    }
  };
  auto amount = [&](const Trajectory& t) {
    return deposit_amount(inst, t.best_objective(), best_obj, config.deposit_scale);
  };

  switch (config.variant) {
    case Variant::AntSystem:
    case Variant::Elitist:
      for (const auto& t : trajectories) deposit_on(t.best_solution(), amount(t));
      if (config.variant == Variant::Elitist && best_so_far != nullptr) {
        deposit_on(best_so_far->best_solution(), config.effective_elitist_weight() * amount(*best_so_far));
      }
      break;
    case Variant::MaxMin: {
      // Iteration-best on even iterations, best-so-far on odd ones.
      const Trajectory* chosen =
          (iteration % 2 == 0 || best_so_far == nullptr) ? iteration_best : best_so_far;
      if (chosen != nullptr) deposit_on(chosen->best_solution(), amount(*chosen));
      if (reference != nullptr) {
        tau.tau_max = deposit_amount(inst, best_obj, best_obj, config.deposit_scale) / rho;
        tau.tau_min = tau.tau_max / (2.0 * inst.n);
      }
      for (auto& v : tau.values) v = std::clamp(v, tau.tau_min, tau.tau_max);
      break;
    }
  }
}

// ---- colony loop ---------------------------------------------------------

std::string to_csv(const EvolutionLog& log) {
  std::string out = "evaluations,best_objective\n";
  for (const auto& p : log.points) {
    out += std::to_string(p.evaluations);
    out += ',';
    out += io::format_number(p.best_objective);
    out += '\n';
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const EvolutionLog& log) {
  io::write_text_file(path, to_csv(log));
}

namespace {

std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

EvolutionLog colony(const cop::Problem& problem, const std::vector<cop::HeuristicField>& heads,
                    const AcoConfig& config, bool evolve) {
  config.validate();
  if (heads.empty()) throw std::invalid_argument("run_colony: no heuristic field");
  const int nodes = problem.nodes();
  auto tau = PheromoneField::constant(problem.model, nodes, 1.0);
  std::vector<Refiner> refiners;
  refiners.reserve(heads.size());
  for (const auto& h : heads) refiners.emplace_back(problem, &h, config.local_search, config.nls);

  EvolutionLog log;
  Trajectory best;
  bool have_best = false;
  std::vector<Trajectory> ants(config.n_ants);
  long used = 0;
  for (long it = 0; used < config.budget; ++it) {
    std::vector<SelectionWeights> weights;
    weights.reserve(heads.size());
    for (const auto& h : heads) weights.emplace_back(problem, tau, h, config.alpha, config.beta);
    for (int a = 0; a < config.n_ants; ++a) {
      const auto head = static_cast<std::size_t>(a) % heads.size();
      std::mt19937_64 rng(stream_seed(config.seed, static_cast<std::uint64_t>(it), static_cast<std::uint64_t>(a)));
      ants[a] = construct_solution(weights[head], rng);
      ants[a].head = static_cast<int>(head);
      used += 1;
      if (refiners[head].active()) {
        refiners[head].apply(ants[a], rng);
        used += refiners[head].evaluations();
      }
      if (!have_best || ants[a].best_objective() < best.best_objective()) {
        best = ants[a];
        have_best = true;
      }
    }
    log.points.push_back({used, best.best_objective()});
    if (evolve) update_pheromone(tau, problem, ants, &best, config, it);
  }
  log.best_solution = best.best_solution();
  log.best_objective = best.best_objective();
  return log;
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t iteration, std::uint64_t ant) {
  return splitmix(splitmix(splitmix(seed) ^ iteration) ^ (ant * 0xd1b54a32d192ed03ULL));
}

EvolutionLog run_colony(const cop::Problem& problem, const std::vector<cop::HeuristicField>& heads,
                        const AcoConfig& config) {
  return colony(problem, heads, config, true);
}

EvolutionLog run_colony(const cop::Problem& problem, const cop::HeuristicField& eta,
                        const AcoConfig& config) {
  return colony(problem, std::vector<cop::HeuristicField>{eta}, config, true);
}

EvolutionLog pure_sample(const cop::Problem& problem, const std::vector<cop::HeuristicField>& heads,
                         const AcoConfig& config) {
  return colony(problem, heads, config, false);
}

}  // namespace deepaco::aco
