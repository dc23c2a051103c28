// Finite-difference cases for the autodiff primitives, shared by the unit tests and the
// acceptance run.
#pragma once

#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "deepaco/autodiff.hpp"

namespace fd {

using namespace deepaco::ad;

inline Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(r, c);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Fixed random weights so every scalar readout mixes all output entries.
inline Var readout(Tape& tape, const Var& x, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return sum(mul(x, tape.constant(random_tensor(x.rows(), x.cols(), rng))));
}

using Build = std::function<Var(Tape&, ParamStore&)>;

inline Var P(Tape& t, ParamStore& s, const char* name) { return t.param(s, name); }

// Fills `store` with the leaves the cases read.
inline std::vector<std::pair<std::string, Build>> primitive_cases(ParamStore& store) {
  std::mt19937_64 rng(1);
  store.add("a", random_tensor(3, 4, rng));
  store.add("b", random_tensor(4, 2, rng));
  store.add("c", random_tensor(3, 4, rng));
  store.add("row", random_tensor(1, 4, rng));
  store.add("s", random_tensor(1, 1, rng));
  store.add("pos", random_tensor(3, 4, rng, 0.2, 2.0));
  store.add("col", random_tensor(6, 1, rng, 0.2, 2.0));
  store.add("gain", random_tensor(1, 4, rng));
  store.add("bias", random_tensor(1, 4, rng));

  return {
      {"matmul", [](Tape& t, ParamStore& s) { return readout(t, matmul(P(t, s, "a"), P(t, s, "b"))); }},
      {"transpose", [](Tape& t, ParamStore& s) { return readout(t, transpose(P(t, s, "a"))); }},
      {"add", [](Tape& t, ParamStore& s) { return readout(t, add(P(t, s, "a"), P(t, s, "c"))); }},
      {"add row", [](Tape& t, ParamStore& s) { return readout(t, add(P(t, s, "a"), P(t, s, "row"))); }},
      {"sub scalar", [](Tape& t, ParamStore& s) { return readout(t, sub(P(t, s, "a"), P(t, s, "s"))); }},
      {"mul", [](Tape& t, ParamStore& s) { return readout(t, mul(P(t, s, "a"), P(t, s, "c"))); }},
      {"mul row", [](Tape& t, ParamStore& s) { return readout(t, mul(P(t, s, "a"), P(t, s, "row"))); }},
      {"mul scalar", [](Tape& t, ParamStore& s) { return readout(t, mul(P(t, s, "a"), P(t, s, "s"))); }},
      {"scale", [](Tape& t, ParamStore& s) { return readout(t, add_scalar(scale(P(t, s, "a"), -1.7), 0.3)); }},
      {"sigmoid", [](Tape& t, ParamStore& s) { return readout(t, sigmoid(P(t, s, "a"))); }},
      {"silu", [](Tape& t, ParamStore& s) { return readout(t, silu(P(t, s, "a"))); }},
      {"log", [](Tape& t, ParamStore& s) { return readout(t, log(P(t, s, "pos"))); }},
      {"exp", [](Tape& t, ParamStore& s) { return readout(t, exp(P(t, s, "a"))); }},
      {"mean", [](Tape& t, ParamStore& s) { return scale(mean(mul(P(t, s, "a"), P(t, s, "a"))), 2.0); }},
      {"layer_norm",
       [](Tape& t, ParamStore& s) {
         return readout(t, layer_norm(P(t, s, "a"), P(t, s, "gain"), P(t, s, "bias")));
       }},
      {"softmax_rows", [](Tape& t, ParamStore& s) { return readout(t, softmax_rows(P(t, s, "a"))); }},
      {"concat/slice",
       [](Tape& t, ParamStore& s) {
         auto c = concat_cols({P(t, s, "a"), P(t, s, "c")});
         return readout(t, slice_cols(c, 2, 5));
       }},
      {"gather_rows", [](Tape& t, ParamStore& s) { return readout(t, gather_rows(P(t, s, "a"), {2, 0, 2, 1, 2})); }},
      {"segment_mean",
       [](Tape& t, ParamStore& s) { return readout(t, segment_mean(P(t, s, "a"), {1, 1, 3}, 4)); }},
      {"segment_sum",
       [](Tape& t, ParamStore& s) { return readout(t, segment_sum(P(t, s, "a"), {0, 2, 0}, 3)); }},
      {"segment_normalize",
       [](Tape& t, ParamStore& s) {
         return readout(t, segment_normalize(P(t, s, "col"), {0, 0, 1, 1, 1, 2}, 3));
       }},
  };
}

}  // namespace fd
