#include "deepaco/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "deepaco/checkpoint.hpp"
#include "deepaco/error.hpp"

namespace deepaco::nn {

using ad::Tape;
using ad::Tensor;
using ad::Var;
using cop::Kind;
using cop::PheromoneModel;

void ModelConfig::validate() const {
  if (layers < 1) throw std::invalid_argument("ModelConfig: layers must be >= 1");
  if (hidden < 2) throw std::invalid_argument("ModelConfig: hidden width must be >= 2");
  if (decoder_hidden < 1) throw std::invalid_argument("ModelConfig: decoder width must be >= 1");
  if (heads < 1) throw std::invalid_argument("ModelConfig: heads must be >= 1");
  if (input_features < 1) throw std::invalid_argument("ModelConfig: input_features must be >= 1");
  if (model == PheromoneModel::Items) {
    if (kind != Kind::MKP) throw std::invalid_argument("ModelConfig: the item model only supports MKP");
    if (attention_heads < 1 || hidden % attention_heads != 0) {
      throw std::invalid_argument("ModelConfig: hidden width must split evenly across attention heads");
    }
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"kind", cop::to_string(kind)},
          {"pheromone_model", cop::to_string(model)},
          {"input_features", input_features},
          {"layers", layers},
          {"hidden", hidden},
          {"decoder_hidden", decoder_hidden},
          {"heads", heads},
          {"attention_heads", attention_heads},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.kind = cop::parse_kind(j.at("kind").get<std::string>());
  c.model = cop::parse_pheromone_model(j.at("pheromone_model").get<std::string>());
  c.input_features = j.at("input_features").get<int>();
  c.layers = j.value("layers", c.layers);
  c.hidden = j.value("hidden", c.hidden);
  c.decoder_hidden = j.value("decoder_hidden", c.decoder_hidden);
  c.heads = j.value("heads", c.heads);
  c.attention_heads = j.value("attention_heads", c.attention_heads);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

ModelConfig ModelConfig::for_problem(Kind kind, PheromoneModel model, int mkp_constraints) {
  ModelConfig c;
  c.kind = kind;
  c.model = model;
  if (kind == Kind::MKP) {
    c.input_features = model == PheromoneModel::Items ? mkp_constraints + 1 : mkp_constraints;
  } else {
    c.input_features = 2;
  }
  c.validate();
  return c;
}

// ---- inputs --------------------------------------------------------------

GraphInputs graph_inputs(const cop::Problem& problem) {
  const auto& inst = problem.instance;
  const auto& g = problem.graph;
  const int nodes = problem.nodes();
  const int f = inst.kind == Kind::MKP ? inst.constraints : 2;
  GraphInputs in;
  in.node_features = Tensor(nodes, f);
  for (int i = 0; i < nodes; ++i) {
    switch (inst.kind) {
      case Kind::TSP:
        in.node_features(i, 0) = inst.coords[2 * i];
        in.node_features(i, 1) = inst.coords[2 * i + 1];
        break;
      case Kind::OP:
        in.node_features(i, 0) = inst.prize[i];
        in.node_features(i, 1) = inst.distance(0, i);
        break;
      case Kind::PCTSP:
        in.node_features(i, 0) = inst.prize[i];
        in.node_features(i, 1) = inst.penalty[i];
        break;
      case Kind::SMTWTP:
        in.node_features(i, 0) = inst.due[i] / inst.n;
        in.node_features(i, 1) = inst.weight[i];
        break;
      case Kind::MKP:
        for (int c = 0; c < inst.constraints; ++c) in.node_features(i, c) = inst.item_weight(c, i);
        break;
    }
  }
  in.edge_features = Tensor(g.edge_count(), 1);
  in.src = g.sources;
  in.dst = g.targets;
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    const int i = g.sources[e], j = g.targets[e];
    double attr = 0.0;
    if (inst.is_routing()) attr = inst.distance(i, j);
    else if (inst.kind == Kind::SMTWTP) attr = inst.processing[j];
    else attr = inst.values[i];
    in.edge_features(e, 0) = attr;
  }
  return in;
}

Tensor item_inputs(const cop::Instance& inst) {
  if (inst.kind != Kind::MKP) throw std::invalid_argument("item_inputs: needs an MKP instance");
  Tensor x(inst.n, inst.constraints + 1);
  for (int j = 0; j < inst.n; ++j) {
    x(j, 0) = inst.values[j + 1];
    for (int c = 0; c < inst.constraints; ++c) x(j, c + 1) = inst.item_weight(c, j + 1) / inst.capacities[c];
  }
  return x;
}

// ---- parameters ----------------------------------------------------------

namespace {

std::string layer_name(int l, const char* what) { return "layer" + std::to_string(l) + "." + what; }
std::string head_name(int h, const char* what) { return "head" + std::to_string(h) + "." + what; }

void add_linear(ad::ParamStore& s, const std::string& name, int in, int out, std::mt19937_64& rng) {
  s.add_uniform(name + ".W", in, out, in, rng);
  s.add_uniform(name + ".b", 1, out, in, rng);
}

void add_norm(ad::ParamStore& s, const std::string& name, int width) {
  s.add(name + ".gain", Tensor(1, width, 1.0));
  s.add(name + ".bias", Tensor(1, width, 0.0));
}

Var linear(Tape& t, ad::ParamStore& s, const Var& x, const std::string& name) {
  return ad::matmul(x, t.param(s, name + ".W")) + t.param(s, name + ".b");
}

Var norm(Tape& t, ad::ParamStore& s, const Var& x, const std::string& name) {
  return ad::layer_norm(x, t.param(s, name + ".gain"), t.param(s, name + ".bias"));
}

Var mlp_head(Tape& t, ad::ParamStore& s, Var x, int head) {
  x = ad::silu(linear(t, s, x, head_name(head, "fc1")));
  x = ad::silu(linear(t, s, x, head_name(head, "fc2")));
  return ad::sigmoid(linear(t, s, x, head_name(head, "out")));
}

}  // namespace

HeuristicModel::HeuristicModel(ModelConfig config) : config_(config) {
  config_.validate();
  init_params();
}

HeuristicModel::HeuristicModel(ModelConfig config, ad::ParamStore params) : config_(config) {
  config_.validate();
  init_params();
  const auto& expected = params_.params();
  if (params.size() != expected.size()) {
    throw ShapeError("model: checkpoint has " + std::to_string(params.size()) + " tensors, config expects " +
                     std::to_string(expected.size()));
  }
  for (const auto& p : expected) {
    if (!params.contains(p.name)) throw ShapeError("model: checkpoint lacks parameter '" + p.name + "'");
    const auto& got = params.at(p.name).value;
    if (!got.same_shape(p.value)) {
      throw ShapeError("model: parameter '" + p.name + "' has shape " + got.shape_string() + ", config expects " +
                       p.value.shape_string());
    }
  }
  params_ = std::move(params);
}

void HeuristicModel::init_params() {
  std::mt19937_64 rng(config_.seed);
  const int d = config_.hidden;
  const int dh = config_.decoder_hidden;
  auto& s = params_;
  if (config_.model == PheromoneModel::Successor) {
    add_linear(s, "node_in", config_.input_features, d, rng);
    add_linear(s, "edge_in", 1, d, rng);
    for (int l = 0; l < config_.layers; ++l) {
      for (const char* m : {"U", "V", "P", "Q", "R"}) s.add_uniform(layer_name(l, m), d, d, d, rng);
      add_norm(s, layer_name(l, "node_norm"), d);
      add_norm(s, layer_name(l, "edge_norm"), d);
    }
    for (int h = 0; h < config_.heads; ++h) {
      add_linear(s, head_name(h, "fc1"), 3 * d, dh, rng);
      add_linear(s, head_name(h, "fc2"), dh, dh, rng);
      add_linear(s, head_name(h, "out"), dh, 1, rng);
    }
    return;
  }
  add_linear(s, "item_in", config_.input_features, d, rng);
  for (int l = 0; l < config_.layers; ++l) {
    for (const char* m : {"query", "key", "value", "attn_out"}) add_linear(s, layer_name(l, m), d, d, rng);
    add_norm(s, layer_name(l, "attn_norm"), d);
    add_linear(s, layer_name(l, "ff1"), d, 2 * d, rng);
    add_linear(s, layer_name(l, "ff2"), 2 * d, d, rng);
    add_norm(s, layer_name(l, "ff_norm"), d);
  }
  for (int h = 0; h < config_.heads; ++h) {
    add_linear(s, head_name(h, "fc1"), d, dh, rng);
    add_linear(s, head_name(h, "fc2"), dh, dh, rng);
    add_linear(s, head_name(h, "out"), dh, 1, rng);
  }
}

void HeuristicModel::check_problem(const cop::Problem& problem) const {
  if (problem.kind() != config_.kind || problem.model != config_.model) {
    throw std::invalid_argument("model trained for " + cop::to_string(config_.kind) + "/" +
                                cop::to_string(config_.model) + " cannot serve " +
                                cop::to_string(problem.kind()) + "/" + cop::to_string(problem.model));
  }
  const int expected = config_.model == PheromoneModel::Items
                           ? problem.instance.constraints + 1
                           : (problem.kind() == Kind::MKP ? problem.instance.constraints : 2);
  if (expected != config_.input_features) {
    throw ShapeError("model expects " + std::to_string(config_.input_features) + " input features, instance gives " +
                     std::to_string(expected));
  }
}

// ---- forward -------------------------------------------------------------

Embeddings HeuristicModel::embed(Tape& tape, const cop::Problem& problem) {
  check_problem(problem);
  if (config_.model != PheromoneModel::Successor) throw std::invalid_argument("embed: needs the successor model");
  auto in = graph_inputs(problem);
  auto& s = params_;
  const auto nodes = static_cast<std::size_t>(problem.nodes());
  Var h = linear(tape, s, tape.constant(std::move(in.node_features)), "node_in");
  Var e = linear(tape, s, tape.constant(std::move(in.edge_features)), "edge_in");
  for (int l = 0; l < config_.layers; ++l) {
    try {
      Var hu = ad::matmul(h, tape.param(s, layer_name(l, "U")));
      Var hv = ad::matmul(h, tape.param(s, layer_name(l, "V")));
      Var messages = ad::sigmoid(e) * ad::gather_rows(hv, in.dst);
      Var agg = ad::segment_mean(messages, in.src, nodes);
      Var h_next = h + ad::silu(norm(tape, s, hu + agg, layer_name(l, "node_norm")));

      Var ep = ad::matmul(e, tape.param(s, layer_name(l, "P")));
      Var hq = ad::gather_rows(ad::matmul(h, tape.param(s, layer_name(l, "Q"))), in.src);
      Var hr = ad::gather_rows(ad::matmul(h, tape.param(s, layer_name(l, "R"))), in.dst);
      Var e_next = e + ad::silu(norm(tape, s, ep + hq + hr, layer_name(l, "edge_norm")));
      h = h_next;
      e = e_next;
    } catch (const NumericError& err) {
      throw NumericError("gnn layer " + std::to_string(l) + ": " + err.what());
    }
  }
  return {h, e};
}

Var HeuristicModel::decode_edges(Tape& tape, const Embeddings& emb, const cop::Problem& problem, int head) {
  if (head < 0 || head >= config_.heads) throw std::out_of_range("decode_edges: no head " + std::to_string(head));
  const auto& g = problem.graph;
  Var x = ad::concat_cols({emb.edges, ad::gather_rows(emb.nodes, g.sources), ad::gather_rows(emb.nodes, g.targets)});
  return mlp_head(tape, params_, x, head);
}

std::vector<Var> HeuristicModel::forward_items(Tape& tape, const cop::Problem& problem) {
  auto& s = params_;
  const int d = config_.hidden;
  const int heads = config_.attention_heads;
  const int dk = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  Var x = linear(tape, s, tape.constant(item_inputs(problem.instance)), "item_in");
  for (int l = 0; l < config_.layers; ++l) {
    Var q = linear(tape, s, x, layer_name(l, "query"));
    Var k = linear(tape, s, x, layer_name(l, "key"));
    Var v = linear(tape, s, x, layer_name(l, "value"));
    std::vector<Var> parts;
    for (int a = 0; a < heads; ++a) {
      const auto off = static_cast<std::size_t>(a * dk);
      Var qa = ad::slice_cols(q, off, dk);
      Var ka = ad::slice_cols(k, off, dk);
      Var va = ad::slice_cols(v, off, dk);
      Var att = ad::softmax_rows(ad::scale(ad::matmul(qa, ad::transpose(ka)), inv_sqrt));
      parts.push_back(ad::matmul(att, va));
    }
    Var attn = linear(tape, s, ad::concat_cols(parts), layer_name(l, "attn_out"));
    x = norm(tape, s, x + attn, layer_name(l, "attn_norm"));
    Var ff = linear(tape, s, ad::silu(linear(tape, s, x, layer_name(l, "ff1"))), layer_name(l, "ff2"));
    x = norm(tape, s, x + ff, layer_name(l, "ff_norm"));
  }
  std::vector<Var> out;
  for (int h = 0; h < config_.heads; ++h) out.push_back(mlp_head(tape, s, x, h));
  return out;
}

std::vector<Var> HeuristicModel::forward(Tape& tape, const cop::Problem& problem) {
  check_problem(problem);
  if (config_.model == PheromoneModel::Items) return forward_items(tape, problem);
  auto emb = embed(tape, problem);
  std::vector<Var> out;
  for (int h = 0; h < config_.heads; ++h) out.push_back(decode_edges(tape, emb, problem, h));
  return out;
}

cop::HeuristicField to_field(const Tensor& values, const cop::Problem& problem, int head) {
  const int nodes = problem.nodes();
  auto f = cop::HeuristicField::uniform(problem.model, nodes, 0.0);
  f.provenance = cop::Provenance::Learned;
  f.head = head;
  if (problem.model == PheromoneModel::Items) {
    if (values.size() != static_cast<std::size_t>(nodes - 1)) throw ShapeError("to_field: item count mismatch");
    for (int j = 1; j < nodes; ++j) f.values[j] = values[j - 1];
    return f;
  }
  const auto& g = problem.graph;
  if (values.size() != g.edge_count()) throw ShapeError("to_field: edge count mismatch");
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    f.values[static_cast<std::size_t>(g.sources[e]) * nodes + g.targets[e]] = values[e];
  }
  return f;
}

std::vector<cop::HeuristicField> HeuristicModel::infer(const cop::Problem& problem) {
  Tape tape;
  auto outs = forward(tape, problem);
  std::vector<cop::HeuristicField> fields;
  for (std::size_t h = 0; h < outs.size(); ++h) fields.push_back(to_field(outs[h].value(), problem, static_cast<int>(h)));
  return fields;
}

// ---- persistence ---------------------------------------------------------

void HeuristicModel::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
  nlohmann::json meta = extra.is_object() ? extra : nlohmann::json::object();
  meta["format"] = "deepaco-model";
  meta["config"] = config_.to_json();
  meta["normalization"] = "layer";
  meta["normalization_note"] = "per-row layer normalization replaces batch normalization";
  meta["seed"] = config_.seed;
  ad::save_checkpoint(path, params_, meta);
}

HeuristicModel HeuristicModel::load(const std::filesystem::path& path) {
  auto ck = ad::load_checkpoint(path);
  if (ck.metadata.value("format", std::string()) != "deepaco-model" || !ck.metadata.contains("config")) {
    throw FormatError("checkpoint " + path.string() + " does not hold a heuristic model");
  }
  return HeuristicModel(ModelConfig::from_json(ck.metadata.at("config")), std::move(ck.params));
}

}  // namespace deepaco::nn
