#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace sopa::autodiff {

/// Handle to a value recorded on a Tape.
struct Var {
  std::uint32_t id = 0;
  bool operator==(const Var&) const = default;
};

/// Define-by-run reverse-mode tape over scalars.
///
/// Nodes are appended in evaluation order, so the node index is already a
/// topological order. Each node stores its local partial derivatives with
/// respect to earlier nodes, or directly with respect to entries of a flat
/// parameter vector (trainable leaves never become nodes). Under max
/// semirings the caller selects the winning operand instead of recording a
/// max node, which routes the whole adjoint to the argmax.
class Tape {
 public:
  Var constant(double value);
  // value = params[index]; d/dparams[index] = 1.
  Var parameter(double value, std::size_t index);

  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var sigmoid(Var a);
  Var relu(Var a);

  /// weights . x + bias, where weights and bias are parameters at
  /// `weight_index` (contiguous) and `bias_index`; x is constant.
  Var dot_affine(std::span<const double> weights, std::size_t weight_index,
                 std::span<const double> x, double bias, std::size_t bias_index);

  /// sum_i weights[i * stride] * inputs[i] + bias. Weights and bias are
  /// parameters: weights[i * stride] lives at weight_index + i * stride.
  Var linear(std::span<const Var> inputs, std::span<const double> weights,
             std::size_t weight_index, std::size_t stride, double bias, std::size_t bias_index);

  /// -log softmax(logits)[label]. `probabilities` receives the softmax.
  Var softmax_cross_entropy(std::span<const Var> logits, int label,
                            std::vector<double>* probabilities = nullptr);

  double value(Var v) const { return nodes_.at(v.id).value; }
  std::size_t size() const { return nodes_.size(); }
  void clear();

  /// Accumulates d(root)/d(params) into `param_grads`. Visits each node at
  /// most once, in reverse order. Throws if `root` was never recorded.
  void backward(Var root, std::span<double> param_grads);

 private:
  struct Node {
    double value;
    std::uint32_t edge_begin;
    std::uint32_t edge_count;
  };
  struct Edge {
    std::uint32_t target;
    bool is_param;
    double partial;
  };

  Var push(double value);
  void edge_to_node(Var target, double partial);
  void edge_to_param(std::size_t index, double partial);

  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::vector<double> adjoint_;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit AdamState(std::size_t size = 0) : m(size, 0.0), v(size, 0.0) {}
};

/// Bias-corrected Adam update, in place. `name_of(i)` names parameter i in
/// error messages (NaN gradient).
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               double learning_rate,
               const std::function<std::string(std::size_t)>& name_of = {});

struct FdOffender {
  std::size_t index = 0;
  std::string name;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct FdReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::vector<FdOffender> worst;  // descending rel_error
};

/// |a - b| / max(|a|, |b|, floor). The floor keeps gradients that are zero
/// up to round-off from reporting huge relative errors.
double relative_error(double a, double b, double floor = 1e-6);

/// Central differences of `loss` with respect to each entry of `params`
/// (perturbed in place and restored), compared against `analytic`.
FdReport finite_difference_check(const std::function<double()>& loss, std::span<double> params,
                                 std::span<const double> analytic, double step = 1e-5,
                                 std::size_t keep_worst = 5,
                                 const std::function<std::string(std::size_t)>& name_of = {});

}  // namespace sopa::autodiff
