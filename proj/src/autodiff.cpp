#include "sopa/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sopa/error.hpp"

namespace sopa::autodiff {

Var Tape::push(double value) {
  nodes_.push_back({value, static_cast<std::uint32_t>(edges_.size()), 0});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::edge_to_node(Var target, double partial) {
  edges_.push_back({target.id, false, partial});
  ++nodes_.back().edge_count;
}

void Tape::edge_to_param(std::size_t index, double partial) {
  edges_.push_back({static_cast<std::uint32_t>(index), true, partial});
  ++nodes_.back().edge_count;
}

Var Tape::constant(double value) { return push(value); }

Var Tape::parameter(double value, std::size_t index) {
  Var v = push(value);
  edge_to_param(index, 1.0);
  return v;
}

Var Tape::add(Var a, Var b) {
  const double va = value(a), vb = value(b);
  Var out = push(va + vb);
  edge_to_node(a, 1.0);
  edge_to_node(b, 1.0);
  return out;
}

Var Tape::mul(Var a, Var b) {
  const double va = value(a), vb = value(b);
  Var out = push(va * vb);
  edge_to_node(a, vb);
  edge_to_node(b, va);
  return out;
}

Var Tape::scale(Var a, double factor) {
  const double va = value(a);
  Var out = push(va * factor);
  edge_to_node(a, factor);
  return out;
}

Var Tape::sigmoid(Var a) {
  const double s = 1.0 / (1.0 + std::exp(-value(a)));
  Var out = push(s);
  edge_to_node(a, s * (1.0 - s));
  return out;
}

Var Tape::relu(Var a) {
  const double va = value(a);
  Var out = push(va > 0.0 ? va : 0.0);
  edge_to_node(a, va > 0.0 ? 1.0 : 0.0);
  return out;
}

Var Tape::dot_affine(std::span<const double> weights, std::size_t weight_index,
                     std::span<const double> x, double bias, std::size_t bias_index) {
  double s = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) s += weights[k] * x[k];
  Var out = push(s + bias);
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (x[k] != 0.0) edge_to_param(weight_index + k, x[k]);
  }
  edge_to_param(bias_index, 1.0);
  return out;
}

Var Tape::linear(std::span<const Var> inputs, std::span<const double> weights,
                 std::size_t weight_index, std::size_t stride, double bias,
                 std::size_t bias_index) {
  double s = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) s += weights[i * stride] * value(inputs[i]);
  s += bias;
  Var out = push(s);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    edge_to_node(inputs[i], weights[i * stride]);
    edge_to_param(weight_index + i * stride, value(inputs[i]));
  }
  edge_to_param(bias_index, 1.0);
  return out;
}

Var Tape::softmax_cross_entropy(std::span<const Var> logits, int label,
                                std::vector<double>* probabilities) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw Error("softmax_cross_entropy: label out of range");
  }
  double top = -std::numeric_limits<double>::infinity();
  for (Var l : logits) top = std::max(top, value(l));
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(value(logits[i]) - top);
    z += p[i];
  }
  for (double& pi : p) pi /= z;
  const double loss = -(value(logits[static_cast<std::size_t>(label)]) - top - std::log(z));
  Var out = push(loss);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    edge_to_node(logits[i], p[i] - (static_cast<int>(i) == label ? 1.0 : 0.0));
  }
  if (probabilities) *probabilities = std::move(p);
  return out;
}

void Tape::clear() {
  nodes_.clear();
  edges_.clear();
}

void Tape::backward(Var root, std::span<double> param_grads) {
  if (nodes_.empty() || root.id >= nodes_.size()) {
    throw Error("backward: root was not recorded on this tape (run the forward pass first)");
  }
  adjoint_.assign(root.id + 1, 0.0);
  adjoint_[root.id] = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    const double a = adjoint_[i];
    if (a == 0.0) continue;
    const Node& node = nodes_[i];
    for (std::uint32_t e = node.edge_begin; e < node.edge_begin + node.edge_count; ++e) {
      const Edge& edge = edges_[e];
      if (edge.is_param) {
        param_grads[edge.target] += a * edge.partial;
      } else {
        adjoint_[edge.target] += a * edge.partial;
      }
    }
  }
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               double learning_rate, const std::function<std::string(std::size_t)>& name_of) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw Error("adam_step: parameter, gradient and moment sizes differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (std::isnan(grads[i])) {
      throw Error("adam_step: NaN gradient for parameter " +
                  (name_of ? name_of(i) : std::to_string(i)));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

FdReport finite_difference_check(const std::function<double()>& loss, std::span<double> params,
                                 std::span<const double> analytic, double step,
                                 std::size_t keep_worst,
                                 const std::function<std::string(std::size_t)>& name_of) {
  if (params.size() != analytic.size()) throw Error("finite_difference_check: size mismatch");
  FdReport report;
  std::vector<FdOffender> all;
  all.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + step;
    const double up = loss();
    params[i] = saved - step;
    const double down = loss();
    params[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double err = relative_error(analytic[i], numeric);
    all.push_back({i, name_of ? name_of(i) : std::to_string(i), analytic[i], numeric, err});
    report.max_rel_error = std::max(report.max_rel_error, err);
  }
  report.checked = all.size();
  std::stable_sort(all.begin(), all.end(),
                   [](const FdOffender& a, const FdOffender& b) { return a.rel_error > b.rel_error; });
  if (all.size() > keep_worst) all.resize(keep_worst);
  report.worst = std::move(all);
  return report;
}

}  // namespace sopa::autodiff
