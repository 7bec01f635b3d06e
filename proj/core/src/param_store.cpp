#include "qmvos/param_store.hpp"

#include <cmath>

#include "qmvos/error.hpp"

namespace qmvos {

void ParamStore::add(const std::string& name, Tensor t) {
  if (params_.count(name)) throw config_error("parameter already exists: " + name);
  params_.emplace(name, std::move(t));
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw config_error("unknown parameter: " + name);
  return it->second;
}

void ParamStore::set(const std::string& name, Tensor t) {
  auto it = params_.find(name);
  if (it == params_.end()) throw config_error("unknown parameter: " + name);
  if (!shape_eq(it->second.shape(), t.shape())) {
    throw shape_error("parameter " + name + ": shape " + shape_str(t.shape()) +
                      " does not match " + shape_str(it->second.shape()));
  }
  it->second = std::move(t);
}

bool ParamStore::has(const std::string& name) const { return params_.count(name) > 0; }

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) out.push_back(name);
  return out;
}

std::vector<double>& ParamStore::moment1(const std::string& name) {
  auto it = m1_.find(name);
  if (it == m1_.end()) {
    it = m1_.emplace(name, std::vector<double>(static_cast<size_t>(get(name).size()), 0.0)).first;
  }
  return it->second;
}

std::vector<double>& ParamStore::moment2(const std::string& name) {
  auto it = m2_.find(name);
  if (it == m2_.end()) {
    it = m2_.emplace(name, std::vector<double>(static_cast<size_t>(get(name).size()), 0.0)).first;
  }
  return it->second;
}

void adamw_step(ParamStore& params, const std::map<std::string, Tensor>& grads,
                const AdamWConfig& cfg) {
  params.bump_step();
  const auto step = static_cast<double>(params.step_count());
  const double bias1 = 1.0 - std::pow(cfg.beta1, step);
  const double bias2 = 1.0 - std::pow(cfg.beta2, step);
  for (const auto& [name, p] : params.items()) {
    auto git = grads.find(name);
    if (git == grads.end()) throw config_error("adamw_step: missing gradient for " + name);
    const Tensor& g = git->second;
    if (!shape_eq(g.shape(), p.shape())) {
      throw shape_error("adamw_step: gradient shape mismatch for " + name);
    }
    auto& m = params.moment1(name);
    auto& v = params.moment2(name);
    const auto& gd = g.data();
    std::vector<double> out = p.data();
    for (size_t i = 0; i < out.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gd[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gd[i] * gd[i];
      const double mhat = m[i] / bias1;
      const double vhat = v[i] / bias2;
      out[i] = out[i] * (1.0 - cfg.lr * cfg.weight_decay) -
               cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    params.set(name, Tensor(p.shape(), std::move(out)));
  }
}

std::map<std::string, Tensor> collect_grads(const ParamStore& params, const Tape& tape) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, p] : params.items()) out.emplace(name, tape.grad(p));
  return out;
}

}  // namespace qmvos
