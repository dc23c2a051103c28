#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>

#include "deepaco/error.hpp"
#include "deepaco/checkpoint.hpp"
#include "deepaco/model.hpp"
#include "oracles.hpp"

using namespace deepaco;
using namespace deepaco::nn;
using ad::Tape;
using ad::Tensor;
using cop::Kind;
using cop::PheromoneModel;

namespace {

ModelConfig small_config(Kind kind, PheromoneModel pm = PheromoneModel::Successor, int heads = 1) {
  auto c = ModelConfig::for_problem(kind, pm);
  c.layers = 2;
  c.hidden = 8;
  c.decoder_hidden = 8;
  c.heads = heads;
  c.seed = 3;
  return c;
}

void zero_params(HeuristicModel& m, const std::string& prefix) {
  for (auto& p : m.params().params())
    if (p.name.rfind(prefix, 0) == 0) p.value.fill(0.0);
}

Tensor affine(const Tensor& x, const Tensor& W, const Tensor& b) {
  Tensor out(x.rows(), W.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < W.cols(); ++c) {
      double s = b[c];
      for (std::size_t k = 0; k < x.cols(); ++k) s += x(r, k) * W(k, c);
      out(r, c) = s;
    }
  return out;
}

cop::Instance permuted_tsp(const cop::Instance& inst, const std::vector<int>& perm) {
  // perm[new] = old
  std::vector<double> coords(inst.coords.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    coords[2 * i] = inst.coords[2 * perm[i]];
    coords[2 * i + 1] = inst.coords[2 * perm[i] + 1];
  }
  return cop::make_tsp(coords);
}

}  // namespace

TEST_CASE("zeroed layer weights leave the projected inputs unchanged") {
  HeuristicModel m(small_config(Kind::TSP));
  for (int l = 0; l < 2; ++l)
    for (const char* w : {"U", "V", "P", "Q", "R"})
      m.params().at("layer" + std::to_string(l) + "." + w).value.fill(0.0);
  const auto p = cop::make_problem(cop::generate_instance(Kind::TSP, 12, 4));
  const auto in = graph_inputs(p);
  Tape tape;
  const auto emb = m.embed(tape, p);
  const auto h0 = affine(in.node_features, m.params().at("node_in.W").value, m.params().at("node_in.b").value);
  const auto e0 = affine(in.edge_features, m.params().at("edge_in.W").value, m.params().at("edge_in.b").value);
  for (std::size_t i = 0; i < h0.size(); ++i) CHECK(emb.nodes.value()[i] == doctest::Approx(h0[i]).epsilon(1e-12));
  for (std::size_t i = 0; i < e0.size(); ++i) CHECK(emb.edges.value()[i] == doctest::Approx(e0[i]).epsilon(1e-12));
}

TEST_CASE("gnn is permutation equivariant") {
  HeuristicModel m(small_config(Kind::TSP));
  const auto inst = cop::generate_instance(Kind::TSP, 10, 8);
  std::vector<int> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(1);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto p = cop::make_problem(inst);
  const auto q = cop::make_problem(permuted_tsp(inst, perm));

  Tape t1, t2;
  const auto h = m.embed(t1, p).nodes.value();
  const auto hp = m.embed(t2, q).nodes.value();
  for (int i = 0; i < 10; ++i)
    for (std::size_t c = 0; c < h.cols(); ++c) CHECK(std::abs(hp(i, c) - h(perm[i], c)) < 1e-9);

  const auto f = m.infer(p)[0];
  const auto fp = m.infer(q)[0];
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) CHECK(std::abs(fp.at(i, j) - f.at(perm[i], perm[j])) < 1e-9);
}

TEST_CASE("decoder saturation and midpoint") {
  HeuristicModel m(small_config(Kind::TSP));
  const auto p = cop::make_problem(cop::generate_instance(Kind::TSP, 10, 2));
  zero_params(m, "head0.");
  Tape t1;
  for (double v : m.forward(t1, p)[0].value().values()) CHECK(v == 0.5);
  m.params().at("head0.out.b").value.fill(-30.0);
  Tape t2;
  for (double v : m.forward(t2, p)[0].value().values()) CHECK(v < 1e-12);
}

TEST_CASE("independent heads give distinct fields in (0, 1)") {
  HeuristicModel m(small_config(Kind::TSP, PheromoneModel::Successor, 4));
  const auto p = cop::make_problem(cop::generate_instance(Kind::TSP, 15, 2));
  const auto fields = m.infer(p);
  REQUIRE(fields.size() == 4);
  for (int a = 0; a < 4; ++a) {
    CHECK(fields[a].head == a);
    CHECK(fields[a].provenance == cop::Provenance::Learned);
    for (std::size_t e = 0; e < p.graph.edge_count(); ++e) {
      const double v = fields[a].at(p.graph.sources[e], p.graph.targets[e]);
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
    for (int b = a + 1; b < 4; ++b) CHECK(fields[a].values != fields[b].values);
  }
  CHECK(m.infer(p)[2].values == fields[2].values);
}

TEST_CASE("every problem kind has a model") {
  for (Kind k : {Kind::TSP, Kind::OP, Kind::PCTSP, Kind::SMTWTP, Kind::MKP}) {
    HeuristicModel m(small_config(k));
    const auto p = cop::make_problem(cop::generate_instance(k, 12, 3));
    const auto f = m.infer(p)[0];
    CHECK(f.nodes == p.nodes());
  }
  HeuristicModel tsp(small_config(Kind::TSP));
  CHECK_THROWS_AS(tsp.infer(cop::make_problem(cop::generate_instance(Kind::OP, 10, 1))), std::invalid_argument);
}

TEST_CASE("item encoder") {
  HeuristicModel m(small_config(Kind::MKP, PheromoneModel::Items));
  const auto inst = cop::generate_instance(Kind::MKP, 12, 5);
  const auto p = cop::make_problem(inst, PheromoneModel::Items);
  const auto f = m.infer(p)[0];
  for (int j = 1; j <= 12; ++j) {
    CHECK(f.at(0, j) > 0.0);
    CHECK(f.at(0, j) < 1.0);
  }

  SUBCASE("permuting items permutes the measures") {
    std::vector<int> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(2);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> values(12), weights(5 * 12);
    for (int j = 0; j < 12; ++j) {
      values[j] = inst.values[perm[j] + 1];
      for (int c = 0; c < 5; ++c) weights[c * 12 + j] = inst.item_weight(c, perm[j] + 1);
    }
    const auto q = cop::make_problem(cop::make_mkp(values, weights, inst.capacities), PheromoneModel::Items);
    const auto fq = m.infer(q)[0];
    for (int j = 0; j < 12; ++j) CHECK(std::abs(fq.at(0, j + 1) - f.at(0, perm[j] + 1)) < 1e-9);
  }
  SUBCASE("duplicated items get identical measures") {
    std::vector<double> values = {0.3, 0.7, 0.3};
    std::vector<double> weights = {0.2, 0.5, 0.2, 0.4, 0.1, 0.4, 0.3, 0.3, 0.3, 0.1, 0.9, 0.1, 0.6, 0.2, 0.6};
    const auto q = cop::make_problem(cop::make_mkp(values, weights, {0.6, 0.6, 0.6, 0.6, 0.6}), PheromoneModel::Items);
    const auto fq = m.infer(q)[0];
    CHECK(fq.at(0, 1) == fq.at(0, 3));
  }
  SUBCASE("zero weights give one half everywhere") {
    zero_params(m, "");
    for (auto& p : m.params().params())
      if (p.name.find("norm.gain") != std::string::npos) p.value.fill(1.0);
    const auto fz = m.infer(p)[0];
    for (int j = 1; j <= 12; ++j) CHECK(fz.at(0, j) == 0.5);
  }
  SUBCASE("non-knapsack instances are rejected") {
    CHECK_THROWS(HeuristicModel{small_config(Kind::TSP, PheromoneModel::Items)});
  }
}

TEST_CASE("finite differences through embedding and decoder") {
  for (auto [kind, pm] : {std::pair{Kind::TSP, PheromoneModel::Successor}, std::pair{Kind::MKP, PheromoneModel::Items}}) {
    auto cfg = ModelConfig::for_problem(kind, pm);
    cfg.layers = 1;
    cfg.hidden = 4;
    cfg.decoder_hidden = 4;
    cfg.seed = 9;
    HeuristicModel m(cfg);
    // Non-trivial norm parameters so their gradients are exercised.
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto& p : m.params().params())
      if (p.name.find("norm") != std::string::npos)
        for (auto& v : p.value.values()) v += u(rng);
    const auto p = cop::make_problem(cop::generate_instance(kind, 6, 1), pm);
    const auto r = oracle::finite_difference(m.params(), [&](Tape& t, ad::ParamStore&) {
      auto y = m.forward(t, p)[0];
      std::mt19937_64 wr(5);
      Tensor w(y.rows(), 1);
      for (auto& v : w.values()) v = u(wr);
      return ad::sum(ad::mul(y, t.constant(w)));
    });
    INFO(cop::to_string(kind) << " worst " << r.where);
    CHECK(r.worst < 1e-4);
  }
}

TEST_CASE("non-finite activations name the layer") {
  HeuristicModel m(small_config(Kind::TSP));
  m.params().at("layer1.U").value.fill(std::numeric_limits<double>::quiet_NaN());
  const auto p = cop::make_problem(cop::generate_instance(Kind::TSP, 10, 2));
  Tape tape;
  try {
    m.embed(tape, p);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
  }
}

TEST_CASE("model checkpoints") {
  const auto path = std::filesystem::temp_directory_path() / "deepaco_model_test.ckpt";
  HeuristicModel m(small_config(Kind::TSP, PheromoneModel::Successor, 2));
  m.save(path, {{"note", "test"}});
  const auto back = HeuristicModel::load(path);
  CHECK(back.config().heads == 2);
  CHECK(back.config().hidden == 8);
  const auto p = cop::make_problem(cop::generate_instance(Kind::TSP, 10, 2));
  auto copy = back;
  CHECK(copy.infer(p)[1].values == m.infer(p)[1].values);
  const auto ck = ad::load_checkpoint(path);
  CHECK(ck.metadata["normalization"] == "layer");
  CHECK(ck.metadata["note"] == "test");

  auto other = small_config(Kind::TSP);
  other.hidden = 16;
  CHECK_THROWS_AS(HeuristicModel(other, ck.params), ShapeError);
  std::filesystem::remove(path);
}
