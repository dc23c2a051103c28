#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "deepaco/tensor.hpp"

namespace deepaco::ad {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor first_moment;
  Tensor second_moment;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Named trainable tensors with matching gradient buffers and Adam state.
// Insertion order is preserved so that serialization and updates are deterministic.
class ParamStore {
 public:
  Param& add(const std::string& name, Tensor value);
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Param& add_uniform(const std::string& name, std::size_t rows, std::size_t cols,
                     std::size_t fan_in, std::mt19937_64& rng);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  std::uint64_t step_count() const { return steps_; }

  // One Adam update of every parameter from its accumulated gradient; gradients are zeroed.
  // Throws std::invalid_argument when lr <= 0.
  void adam_step(double lr, const AdamConfig& cfg = {});

 private:
  std::vector<Param> params_;
  std::map<std::string, std::size_t> index_;
  std::uint64_t steps_ = 0;
};

}  // namespace deepaco::ad
