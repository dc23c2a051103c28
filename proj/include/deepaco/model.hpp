#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "deepaco/autodiff.hpp"
#include "deepaco/problem.hpp"
#include "json.hpp"

namespace deepaco::nn {

struct ModelConfig {
  cop::Kind kind = cop::Kind::TSP;
  cop::PheromoneModel model = cop::PheromoneModel::Successor;
  int input_features = 2;   // per node (successor) or per item (items)
  int layers = 3;           // GNN layers, or encoder layers for the item model
  int hidden = 32;
  int decoder_hidden = 32;
  int heads = 1;            // decoder heads
  int attention_heads = 2;  // item model only
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  // Input width fixed by the problem kind (MKP depends on its constraint count).
  static ModelConfig for_problem(cop::Kind kind, cop::PheromoneModel model, int mkp_constraints = 5);
};

// Problem-native inputs of the edge-gated GNN.
struct GraphInputs {
  ad::Tensor node_features;  // nodes x input_features
  ad::Tensor edge_features;  // edges x 1, graph edge order
  std::vector<int> src;
  std::vector<int> dst;
};
GraphInputs graph_inputs(const cop::Problem& problem);
// Item model inputs: value and capacity-normalized weights, one row per item.
ad::Tensor item_inputs(const cop::Instance& instance);

struct Embeddings {
  ad::Var nodes;  // nodes x hidden
  ad::Var edges;  // edges x hidden
};

class HeuristicModel {
 public:
  explicit HeuristicModel(ModelConfig config);
  // Adopts trained parameters; throws ShapeError when they do not fit the config.
  HeuristicModel(ModelConfig config, ad::ParamStore params);

  const ModelConfig& config() const { return config_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

  // Per-head measures in (0,1): one row per graph edge (successor model) or per item
  // (items model, row j is node j + 1).
  std::vector<ad::Var> forward(ad::Tape& tape, const cop::Problem& problem);
  Embeddings embed(ad::Tape& tape, const cop::Problem& problem);
  ad::Var decode_edges(ad::Tape& tape, const Embeddings& emb, const cop::Problem& problem, int head);

  // Heuristic fields for ACO, one per head.
  std::vector<cop::HeuristicField> infer(const cop::Problem& problem);

  void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
  static HeuristicModel load(const std::filesystem::path& path);

 private:
  void init_params();
  void check_problem(const cop::Problem& problem) const;
  std::vector<ad::Var> forward_items(ad::Tape& tape, const cop::Problem& problem);

  ModelConfig config_;
  ad::ParamStore params_;
};

// Converts per-head outputs of forward() into fields shaped for the problem.
cop::HeuristicField to_field(const ad::Tensor& values, const cop::Problem& problem, int head);

}  // namespace deepaco::nn
