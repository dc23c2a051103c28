#include "deepaco/params.hpp"

#include <cmath>
#include <stdexcept>

namespace deepaco::ad {

Param& ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
  Param p;
  p.name = name;
  p.grad = Tensor(value.rows(), value.cols());
  p.first_moment = Tensor(value.rows(), value.cols());
  p.second_moment = Tensor(value.rows(), value.cols());
  p.value = std::move(value);
  index_.emplace(name, params_.size());
  params_.push_back(std::move(p));
  return params_.back();
}

Param& ParamStore::add_uniform(const std::string& name, std::size_t rows, std::size_t cols,
                               std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(rows, cols);
  for (auto& v : t.values()) v = dist(rng);
  return add(name, std::move(t));
}

Param& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamStore: no parameter '" + name + "'");
  return params_[it->second];
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamStore: no parameter '" + name + "'");
  return params_[it->second];
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

void ParamStore::adam_step(double lr, const AdamConfig& cfg) {
  if (!(lr > 0.0)) throw std::invalid_argument("adam_step: learning rate must be positive");
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& p : params_) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      double& m = p.first_moment[i];
      double& v = p.second_moment[i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m / correction1;
      const double v_hat = v / correction2;
      p.value[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
    p.grad.fill(0.0);
  }
}

}  // namespace deepaco::ad
