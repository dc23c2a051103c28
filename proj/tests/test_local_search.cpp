#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "deepaco/error.hpp"
#include "deepaco/local_search.hpp"
#include "oracles.hpp"

using namespace deepaco;
using namespace deepaco::ls;

namespace {

std::vector<int> random_tour(int n, std::mt19937_64& rng) {
  std::vector<int> t(n);
  std::iota(t.begin(), t.end(), 0);
  std::shuffle(t.begin(), t.end(), rng);
  return t;
}

// Exact optimum by enumeration, returned as a tour.
std::vector<int> optimal_tour(const std::vector<double>& d, int n) {
  std::vector<int> perm(n), best;
  std::iota(perm.begin(), perm.end(), 0);
  double len = 1e300;
  do {
    const double l = oracle::cycle_length(d, n, perm);
    if (l < len) {
      len = l;
      best = perm;
    }
  } while (std::next_permutation(perm.begin() + 1, perm.end()));
  return best;
}

}  // namespace

TEST_CASE("2-opt uncrosses the unit square") {
  const auto inst = cop::make_tsp({0, 0, 1, 0, 1, 1, 0, 1});
  const auto costs = distance_costs(inst);
  std::vector<int> tour = {0, 2, 1, 3};
  CHECK(tour_cost(costs, tour) > 4.5);
  CHECK(two_opt(tour, costs, nullptr) >= 1);
  CHECK(tour_cost(costs, tour) == doctest::Approx(4.0));
  CHECK(tour[0] == 0);

  const auto before = tour;
  CHECK(two_opt(tour, costs, nullptr) == 0);
  CHECK(tour == before);
}

TEST_CASE("2-opt ends at a verified local optimum") {
  std::mt19937_64 rng(6);
  for (int n : {8, 12, 30}) {
    for (int trial = 0; trial < 20; ++trial) {
      const auto inst = cop::generate_instance(cop::Kind::TSP, n, 1000 * n + trial);
      const auto d = oracle::distance_matrix(inst.coords);
      const auto costs = distance_costs(inst);
      const auto graph = cop::sparsify(inst);
      auto tour = random_tour(n, rng);
      const double start = oracle::cycle_length(d, n, tour);
      const int first = tour[0];
      two_opt(tour, costs, trial % 2 ? &graph : nullptr);
      CHECK_NOTHROW(validate_tour(tour, n));
      CHECK(tour[0] == first);
      CHECK(oracle::cycle_length(d, n, tour) <= start + 1e-12);
      CHECK_FALSE(oracle::improving_exchange_exists(d, n, tour));
      CHECK_FALSE(has_improving_move(tour, costs));
    }
  }
}

TEST_CASE("2-opt move budget and monotonicity") {
  std::mt19937_64 rng(9);
  const auto inst = cop::generate_instance(cop::Kind::TSP, 40, 5);
  const auto costs = distance_costs(inst);
  auto tour = random_tour(40, rng);
  double prev = tour_cost(costs, tour);
  int steps = 0;
  while (two_opt(tour, costs, nullptr, 1) == 1) {
    const double now = tour_cost(costs, tour);
    CHECK(now < prev);
    prev = now;
    ++steps;
  }
  CHECK(steps > 0);
  auto again = random_tour(40, rng);
  CHECK(two_opt(again, costs, nullptr, 3) <= 3);
  CHECK(two_opt(again, costs, nullptr, 0) == 0);
}

TEST_CASE("tour validation") {
  CHECK_THROWS_AS(validate_tour({0, 1, 1}, 3), FeasibilityError);
  CHECK_THROWS_AS(validate_tour({0, 3}, 3), FeasibilityError);
  const auto costs = distance_costs(cop::make_tsp({0, 0, 1, 0, 1, 1}));
  std::vector<int> bad = {0, 0, 1};
  CHECK_THROWS_AS(two_opt(bad, costs, nullptr), FeasibilityError);
  CHECK_THROWS(distance_costs(cop::generate_instance(cop::Kind::MKP, 5, 1)));
}

TEST_CASE("perturbation costs are symmetric inverses") {
  auto eta = cop::HeuristicField::uniform(cop::PheromoneModel::Successor, 3);
  eta.values = {0, 2, 4, 1, 0, 0.5, 4, 0.25, 0};
  const auto c = perturbation_costs(eta);
  CHECK(c(0, 1) == doctest::Approx(0.5 * (1 / 2.0 + 1 / 1.0)));
  CHECK(c(0, 1) == c(1, 0));
  CHECK(c(1, 2) == doctest::Approx(0.5 * (1 / 0.5 + 1 / 0.25)));
}

TEST_CASE("guided perturbation strictly lowers the surrogate per move") {
  std::mt19937_64 rng(4);
  const auto inst = cop::generate_instance(cop::Kind::TSP, 25, 2);
  auto eta = cop::HeuristicField::uniform(cop::PheromoneModel::Successor, 25);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (auto& v : eta.values) v = u(rng);
  const auto surrogate = perturbation_costs(eta);
  auto tour = random_tour(25, rng);
  double prev = tour_cost(surrogate, tour);
  for (int k = 0; k < 20 && two_opt(tour, surrogate, nullptr, 1) == 1; ++k) {
    const double now = tour_cost(surrogate, tour);
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("nls") {
  std::mt19937_64 rng(21);
  const auto inst = cop::generate_instance(cop::Kind::TSP, 30, 8);
  const auto costs = distance_costs(inst);
  const auto graph = cop::sparsify(inst);
  const auto expert = cop::expert_heuristic(inst, graph);

  SUBCASE("zero rounds is plain 2-opt") {
    auto tour = random_tour(30, rng);
    auto ref = tour;
    two_opt(ref, costs, &graph);
    CHECK(nls(tour, costs, perturbation_costs(expert), &graph, {0, 20}) == ref);
  }
  SUBCASE("uniform measures leave nothing to perturb") {
    const auto flat = cop::HeuristicField::uniform(cop::PheromoneModel::Successor, 30);
    auto tour = random_tour(30, rng);
    auto ref = tour;
    two_opt(ref, costs, &graph);
    CHECK(nls(tour, costs, perturbation_costs(flat), &graph, {10, 20}) == ref);
  }
  SUBCASE("never worse than full refinement") {
    for (int trial = 0; trial < 30; ++trial) {
      auto tour = random_tour(30, rng);
      auto ref = tour;
      two_opt(ref, costs, &graph);
      const auto out = nls(tour, costs, perturbation_costs(expert), &graph, {});
      CHECK_NOTHROW(validate_tour(out, 30));
      CHECK(tour_cost(costs, out) <= tour_cost(costs, ref) + 1e-12);
      std::mt19937_64 r2(trial);
      CHECK(tour_cost(costs, nls_random(tour, costs, &graph, {}, r2)) <= tour_cost(costs, ref) + 1e-12);
    }
  }
  SUBCASE("invalid configs") {
    auto tour = random_tour(30, rng);
    CHECK_THROWS_AS(nls(tour, costs, costs, &graph, {-1, 20}), std::invalid_argument);
    CHECK_THROWS_AS(nls(tour, costs, costs, &graph, {10, 0}), std::invalid_argument);
  }
}

TEST_CASE("nls guided by the optimal edges reaches the optimum at n = 10") {
  int reached = 0, poor_starts = 0;
  for (int seed = 0; seed < 10; ++seed) {
    const auto inst = cop::generate_instance(cop::Kind::TSP, 10, 500 + seed);
    const auto d = oracle::distance_matrix(inst.coords);
    const auto opt = optimal_tour(d, 10);
    const double best = oracle::cycle_length(d, 10, opt);
    CHECK(best == doctest::Approx(oracle::held_karp(d, 10)).epsilon(1e-12));
    auto eta = cop::HeuristicField::uniform(cop::PheromoneModel::Successor, 10, 0.01);
    for (int k = 0; k < 10; ++k) {
      const int a = opt[k], b = opt[(k + 1) % 10];
      eta.values[a * 10 + b] = eta.values[b * 10 + a] = 1.0;
    }
    const auto costs = distance_costs(inst);
    std::mt19937_64 rng(seed);
    // Find a 2-opt local optimum that is not globally optimal.
    for (int attempt = 0; attempt < 200; ++attempt) {
      auto start = random_tour(10, rng);
      two_opt(start, costs, nullptr);
      if (tour_cost(costs, start) <= best + 1e-9) continue;
      ++poor_starts;
      const auto out = nls(start, costs, perturbation_costs(eta), nullptr, {10, 20});
      if (tour_cost(costs, out) <= best + 1e-9) ++reached;
      break;
    }
  }
  REQUIRE(poor_starts > 0);
  CHECK(reached == poor_starts);
}

TEST_CASE("random perturbation") {
  std::mt19937_64 a(3), b(3);
  std::vector<int> base(8);
  std::iota(base.begin(), base.end(), 0);
  auto t0 = base;
  random_perturb(t0, 0, a);
  CHECK(t0 == base);
  auto t1 = base, t2 = base;
  random_perturb(t1, 5, a);
  random_perturb(t2, 5, b);
  std::mt19937_64 c(3);
  auto t3 = base;
  random_perturb(t3, 0, c);
  random_perturb(t3, 5, c);
  CHECK(t2 == t3);
  CHECK_NOTHROW(validate_tour(t1, 8));
  CHECK(t1[0] == 0);
  for (int k = 0; k < 100; ++k) {
    random_perturb(t1, 20, a);
    CHECK_NOTHROW(validate_tour(t1, 8));
  }
}
