#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "deepaco/error.hpp"
#include "deepaco/instance.hpp"
#include "deepaco/problem.hpp"
#include "oracles.hpp"

using namespace deepaco;
using namespace deepaco::cop;

namespace {

const std::vector<Kind> kAllKinds = {Kind::TSP, Kind::OP, Kind::PCTSP, Kind::SMTWTP, Kind::MKP};

// Builds a solution by always taking a random feasible component.
std::vector<int> random_construction(const Problem& p, std::mt19937_64& rng, ConstructionState* out = nullptr) {
  const int start = p.kind() == Kind::TSP ? static_cast<int>(rng() % p.nodes()) : 0;
  ConstructionState st(p, start);
  Candidates c;
  while (!st.done()) {
    feasible_components(st, c);
    if (c.nodes.empty()) {
      REQUIRE_FALSE(requires_completion(p.kind()));
      break;
    }
    st.apply(c.nodes[rng() % c.nodes.size()]);
  }
  if (out) *out = st;
  return st.partial();
}

}  // namespace

TEST_CASE("generation is deterministic") {
  for (Kind k : kAllKinds) {
    CHECK(generate_instance(k, 30, 42) == generate_instance(k, 30, 42));
    CHECK_FALSE(generate_instance(k, 30, 42) == generate_instance(k, 30, 43));
  }
  CHECK_THROWS_AS(parse_kind("cvrp"), std::invalid_argument);
  CHECK_THROWS_AS(generate_instance(Kind::TSP, 1, 0), std::invalid_argument);
}

TEST_CASE("op prizes lie on the percent grid and the budget is 4 at n=100") {
  const auto inst = generate_instance(Kind::OP, 100, 5);
  CHECK(inst.max_length == 4.0);
  CHECK(inst.prize[0] == 0.0);
  for (int i = 1; i <= inst.n; ++i) {
    const double scaled = inst.prize[i] * 100.0;
    CHECK(std::abs(scaled - std::round(scaled)) < 1e-9);
    CHECK(inst.prize[i] >= 0.01 - 1e-12);
    CHECK(inst.prize[i] <= 1.0 + 1e-12);
  }
}

TEST_CASE("pctsp constants") {
  const auto inst = generate_instance(Kind::PCTSP, 20, 3);
  CHECK(inst.min_prize == doctest::Approx(5.0));
  for (int i = 1; i <= inst.n; ++i) {
    CHECK(inst.penalty[i] > 0.0);
    CHECK(inst.penalty[i] < 3.0 * 4.0 / (2.0 * 20));
  }
}

TEST_CASE("mkp instances are well-stated") {
  const auto inst = generate_instance(Kind::MKP, 300, 9, 5);
  REQUIRE(inst.constraints == 5);
  for (int c = 0; c < 5; ++c) {
    double mx = 0.0, total = 0.0;
    for (int j = 1; j <= inst.n; ++j) {
      mx = std::max(mx, inst.item_weight(c, j));
      total += inst.item_weight(c, j);
    }
    CHECK(inst.capacities[c] > mx);
    CHECK(inst.capacities[c] < total);
  }
}

TEST_CASE("tsp coordinates average one half") {
  double sum = 0.0;
  std::size_t count = 0;
  for (int s = 0; count < 100000; ++s) {
    for (double v : generate_instance(Kind::TSP, 500, s).coords) {
      sum += v;
      ++count;
    }
  }
  CHECK(std::abs(sum / count - 0.5) < 0.01);
}

TEST_CASE("sparsify") {
  SUBCASE("tsp20 keeps ten neighbours per node before closure") {
    const auto inst = generate_instance(Kind::TSP, 20, 1);
    const auto g = sparsify(inst);
    CHECK(g.k == 10);
    const auto d = oracle::distance_matrix(inst.coords);
    for (int i = 0; i < 20; ++i) {
      // The 10 nearest are always present; closure can only add reverse edges.
      std::vector<int> order;
      for (int j = 0; j < 20; ++j)
        if (j != i) order.push_back(j);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return d[i * 20 + a] < d[i * 20 + b]; });
      for (int r = 0; r < 10; ++r) CHECK(g.has_edge(i, order[r]));
      CHECK(g.neighbors(i).size() >= 10);
      for (int j : g.neighbors(i)) {
        CHECK(j != i);
        CHECK(g.has_edge(j, i));
        const bool in_i = std::find(order.begin(), order.begin() + 10, j) != order.begin() + 10;
        std::vector<int> oj;
        for (int x = 0; x < 20; ++x)
          if (x != j) oj.push_back(x);
        std::stable_sort(oj.begin(), oj.end(), [&](int a, int b) { return d[j * 20 + a] < d[j * 20 + b]; });
        const bool in_j = std::find(oj.begin(), oj.begin() + 10, i) != oj.begin() + 10;
        CHECK((in_i || in_j));
      }
    }
  }
  SUBCASE("small instances are complete") {
    const auto g = sparsify(generate_instance(Kind::TSP, 5, 2), 10);
    for (int i = 0; i < 5; ++i) {
      CHECK(g.neighbors(i).size() == 4);
      CHECK_FALSE(g.has_edge(i, i));
    }
  }
  SUBCASE("asymmetric nearest neighbours are closed under reversal") {
    // Points at x = 0, 0.1, 0.3 with k = 1: nn(0) = 1, nn(1) = 0, nn(2) = 1, so 1 -> 2
    // exists only through closure.
    const auto inst = make_tsp({0.0, 0.0, 0.1, 0.0, 0.3, 0.0});
    const auto g = sparsify(inst, 1);
    CHECK(g.has_edge(2, 1));
    CHECK(g.has_edge(1, 2));
    CHECK(g.has_edge(0, 1));
    CHECK_FALSE(g.has_edge(0, 2));
  }
  SUBCASE("depot is a neighbour of every node") {
    const auto inst = generate_instance(Kind::OP, 50, 4);
    const auto g = sparsify(inst);
    for (int i = 1; i < inst.node_count(); ++i) CHECK(g.has_edge(i, 0));
  }
  SUBCASE("scheduling and knapsack graphs are complete") {
    const auto inst = generate_instance(Kind::SMTWTP, 10, 4);
    const auto g = sparsify(inst);
    for (int i = 0; i < inst.node_count(); ++i)
      for (int j = 1; j < inst.node_count(); ++j) CHECK(g.has_edge(i, j) == (i != j));
  }
}

TEST_CASE("feasible components") {
  SUBCASE("tsp with one city left") {
    const auto p = make_problem(generate_instance(Kind::TSP, 8, 1));
    ConstructionState st(p, 3);
    for (int v : {0, 1, 2, 4, 5, 6}) st.apply(v);
    const auto c = feasible_components(st);
    REQUIRE(c.nodes.size() == 1);
    CHECK(c.nodes[0] == 7);
  }
  SUBCASE("op with a budget below any round trip offers only the depot") {
    const auto inst = make_op({0.5, 0.5, 0.9, 0.5, 0.1, 0.5, 0.5, 0.0}, {0.0, 0.3, 0.4, 0.5}, 0.7);
    const auto p = make_problem(inst);
    ConstructionState st(p, 0);
    const auto c = feasible_components(st);
    REQUIRE(c.nodes.size() == 1);
    CHECK(c.nodes[0] == 0);
  }
  SUBCASE("mkp residual capacities") {
    const auto inst = make_mkp({0.4, 0.6}, {0.2, 0.05, 0.1, 0.3}, {0.1, 0.5});
    const auto p = make_problem(inst, PheromoneModel::Items);
    ConstructionState st(p, 0);
    const auto c = feasible_components(st);
    REQUIRE(c.nodes.size() == 1);
    CHECK(c.nodes[0] == 2);
  }
  SUBCASE("pctsp depot opens once the prize target is met") {
    const auto inst = make_pctsp({0.5, 0.5, 0.6, 0.5, 0.4, 0.5, 0.5, 0.6}, {0.0, 0.5, 0.5, 0.5},
                                 {0.0, 0.1, 0.1, 0.1}, 0.75);
    const auto p = make_problem(inst);
    ConstructionState st(p, 0);
    auto has_depot = [&] {
      const auto c = feasible_components(st);
      return std::find(c.nodes.begin(), c.nodes.end(), 0) != c.nodes.end();
    };
    CHECK_FALSE(has_depot());
    st.apply(1);
    CHECK_FALSE(has_depot());
    st.apply(2);
    CHECK(has_depot());
  }
}

TEST_CASE("objective examples") {
  const auto square = make_tsp({0, 0, 1, 0, 1, 1, 0, 1});
  CHECK(objective(square, std::vector<int>{0, 1, 2, 3}) == doctest::Approx(4.0));
  CHECK_THROWS_AS(objective(square, std::vector<int>{0, 1, 2}), FeasibilityError);
  CHECK_THROWS_AS(objective(square, std::vector<int>{0, 1, 1, 3}), FeasibilityError);

  const auto job = make_smtwtp({0.2}, {1.0}, {0.5});
  CHECK(objective(job, std::vector<int>{0, 1}) == doctest::Approx(0.3));

  const auto knap = make_mkp({0.5, 0.3, 0.9}, {0.1, 0.1, 0.9}, {0.5});
  CHECK(objective(knap, std::vector<int>{0, 1, 2}) == doctest::Approx(-0.8));
  try {
    objective(knap, std::vector<int>{0, 1, 3});
    FAIL("expected FeasibilityError");
  } catch (const FeasibilityError& e) {
    CHECK(std::string(e.what()).find("capacity") != std::string::npos);
  }

  const auto op = make_op({0.5, 0.5, 0.9, 0.5, 0.1, 0.5}, {0.0, 0.3, 0.4}, 1.0);
  CHECK(objective(op, std::vector<int>{0, 1}) == doctest::Approx(-0.3));
  CHECK_THROWS_AS(objective(op, std::vector<int>{0, 1, 2}), FeasibilityError);
}

TEST_CASE("internal sign convention: better means lower") {
  // OP: collecting an extra prize within budget lowers the objective.
  const auto op = make_op({0.5, 0.5, 0.6, 0.5, 0.4, 0.5}, {0.0, 0.3, 0.4}, 2.0);
  CHECK(objective(op, std::vector<int>{0, 1, 2}) < objective(op, std::vector<int>{0, 1}));
  // PCTSP: a shorter tour with the same prize lowers the objective.
  const auto pc = make_pctsp({0.5, 0.5, 0.6, 0.5, 0.9, 0.9}, {0.0, 0.5, 0.5}, {0.0, 1.0, 0.01}, 0.5);
  CHECK(objective(pc, std::vector<int>{0, 1}) < objective(pc, std::vector<int>{0, 2}));
}

TEST_CASE("expert heuristic examples") {
  const auto tsp = make_tsp({0.0, 0.0, 0.5, 0.0, 0.0, 0.9});
  const auto g = sparsify(tsp);
  CHECK(expert_heuristic(tsp, g).at(0, 1) == doctest::Approx(2.0));

  const auto op = make_op({0.0, 0.0, 0.25, 0.0, 0.0, 0.9}, {0.0, 0.5, 0.2}, 4.0);
  CHECK(expert_heuristic(op, sparsify(op)).at(0, 1) == doctest::Approx(2.0));

  const auto mkp = make_mkp({0.6, 0.1}, {0.2, 0.5, 0.4, 0.5}, {0.6, 0.8});
  const auto items = expert_heuristic(mkp, sparsify(mkp), PheromoneModel::Items);
  CHECK(items.at(0, 1) == doctest::Approx(1.0));
  const auto suc = expert_heuristic(mkp, sparsify(mkp), PheromoneModel::Successor);
  CHECK(suc.at(2, 1) == doctest::Approx(1.0));

  const auto smt = make_smtwtp({0.5, 2.0}, {1.0, 1.0}, {0.3, 0.3});
  CHECK(expert_heuristic(smt, sparsify(smt)).at(0, 2) == doctest::Approx(0.5));

  for (Kind k : kAllKinds) {
    const auto inst = generate_instance(k, 20, 8);
    const auto gr = sparsify(inst);
    const auto f = expert_heuristic(inst, gr);
    for (std::size_t e = 0; e < gr.edge_count(); ++e) CHECK(f.at(gr.sources[e], gr.targets[e]) > 0.0);
  }
}

TEST_CASE("replay consistency and feasibility closure") {
  std::mt19937_64 rng(17);
  for (Kind k : kAllKinds) {
    const auto p = make_problem(generate_instance(k, 25, 21));
    for (int trial = 0; trial < 50; ++trial) {
      ConstructionState st(p, 0);
      const auto sol = random_construction(p, rng, &st);
      CHECK_NOTHROW(objective(p.instance, sol));
      // Replay from scratch.
      ConstructionState again(p, sol[0]);
      for (std::size_t t = 1; t < sol.size(); ++t) again.apply(sol[t]);
      CHECK(again.visited_count() == st.visited_count());
      CHECK(std::abs(again.collected_prize() - st.collected_prize()) < 1e-9);
      CHECK(std::abs(again.elapsed() - st.elapsed()) < 1e-9);
      for (std::size_t c = 0; c < st.residual().size(); ++c)
        CHECK(std::abs(again.residual()[c] - st.residual()[c]) < 1e-9);
      if (p.instance.is_routing()) {
        double len = 0.0;
        for (std::size_t t = 1; t < sol.size(); ++t) len += p.instance.distance(sol[t - 1], sol[t]);
        if (p.instance.has_depot() && st.done()) len += p.instance.distance(sol.back(), 0);
        CHECK(std::abs(st.traveled() - len) < 1e-9);
      }
    }
  }
}

TEST_CASE("dataset round trip") {
  std::vector<Instance> all;
  for (Kind k : kAllKinds) all.push_back(generate_instance(k, 12, 77));
  const auto path = std::filesystem::temp_directory_path() / "deepaco_dataset_test.bin";
  save_dataset(path, all);
  const auto back = load_dataset(path);
  REQUIRE(back.size() == all.size());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(back[i] == all[i]);
  CHECK(encode_dataset(back) == encode_dataset(all));
  std::filesystem::remove(path);
  auto bytes = encode_dataset(all);
  bytes.resize(bytes.size() / 2);
  CHECK_THROWS_AS(decode_dataset(bytes), FormatError);
}
