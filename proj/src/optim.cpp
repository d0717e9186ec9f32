#include "minigcn/optim.hpp"

#include <cmath>
#include <string>

namespace minigcn {

namespace {

template <typename Param, typename Grad>
void check_same(const Param& p, const Grad& g, const char* what) {
  if (p.rows() != g.rows() || p.cols() != g.cols()) {
    throw ShapeError(std::string("adam_step: ") + what + " " + shape_string(p) + " vs gradient " + shape_string(g));
  }
}

template <typename Param, typename Grad>
void update(Param& p, const Grad& g, Grad& m, Grad& v, const AdamState& s, double lr) {
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step_count));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step_count));
  m = s.beta1 * m + (1.0 - s.beta1) * g;
  v = s.beta2 * v + (1.0 - s.beta2) * g.cwiseProduct(g);
  p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + s.eps);
}

}  // namespace

AdamState make_adam_state(const std::vector<LayerParams>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.push_back(zero_grads(p));
    s.v.push_back(zero_grads(p));
  }
  return s;
}

void adam_step(std::vector<LayerParams>& params, const std::vector<LayerGrads>& grads, AdamState& state, double lr) {
  if (!(lr >= 0.0)) throw ContractError("adam_step: learning rate must be non-negative");
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("adam_step: " + std::to_string(params.size()) + " layers vs " +
                        std::to_string(grads.size()) + " gradients and " + std::to_string(state.m.size()) +
                        " moment sets");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    check_same(params[i].weights, grads[i].weights, "weights");
    check_same(params[i].bias, grads[i].bias, "bias");
    check_same(params[i].bn_gamma, grads[i].bn_gamma, "gamma");
    check_same(params[i].bn_beta, grads[i].bn_beta, "beta");
    check_same(params[i].weights, state.m[i].weights, "weights");
  }
  ++state.step_count;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto& g = grads[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    update(p.weights, g.weights, m.weights, v.weights, state, lr);
    update(p.bias, g.bias, m.bias, v.bias, state, lr);
    update(p.bn_gamma, g.bn_gamma, m.bn_gamma, v.bn_gamma, state, lr);
    update(p.bn_beta, g.bn_beta, m.bn_beta, v.bn_beta, state, lr);
  }
}

double schedule_lr(const LrPolicy& policy, std::int64_t epoch) {
  if (policy.max_iter < 1 || policy.interval < 1) throw ConfigError("schedule_lr: max_iter and interval must be >= 1");
  if (epoch < 0 || epoch > policy.max_iter) {
    throw ContractError("schedule_lr: epoch " + std::to_string(epoch) + " outside 0.." +
                        std::to_string(policy.max_iter));
  }
  const std::int64_t boundary = (epoch / policy.interval) * policy.interval;
  const double remaining = 1.0 - static_cast<double>(boundary) / static_cast<double>(policy.max_iter);
  return policy.base_lr * std::sqrt(std::max(0.0, remaining));
}

}  // namespace minigcn
