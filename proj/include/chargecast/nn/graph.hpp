#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <string>

namespace chargecast::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A learnable tensor with its accumulated gradient.
struct ParamTensor {
  std::string name;
  Matrix value;
  Matrix grad;

  ParamTensor() = default;
  ParamTensor(std::string tensor_name, Eigen::Index rows, Eigen::Index cols);

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

/// Handle to a node inside a Graph.
class Var {
 public:
  Var() = default;
  explicit Var(std::size_t index) : index_(index) {}

  std::size_t index() const { return index_; }
  bool valid() const { return index_ != kInvalid; }

 private:
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t index_ = kInvalid;
};

/// Tape of operations recorded during one forward pass.
///
/// Nodes are appended in evaluation order, so reverse iteration is a valid
/// topological order for backpropagation. In inference mode no backward
/// closures or gradient buffers are created, and parameters are referenced
/// without copying.
class Graph {
 public:
  enum class Mode { kTrain, kInference };

  /// Accumulates the gradient of this node's output into its inputs.
  using Backward = std::function<void(Graph&, const Matrix& out_grad)>;

  explicit Graph(Mode mode = Mode::kTrain) : mode_(mode) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return mode_ == Mode::kTrain; }

  Var constant(Matrix value);
  /// Differentiable input whose gradient can be read back after backward().
  Var variable(Matrix value);
  Var param(ParamTensor& p);
  Var param(const ParamTensor& p);

  const Matrix& value(Var v) const;
  double scalar(Var v) const;
  /// Gradient of a node; zero-sized if nothing flowed into it.
  const Matrix& grad(Var v) const;
  bool needs_grad(Var v) const;

  /// Backpropagates from a 1x1 node, seeding its gradient with `seed`.
  void backward(Var loss, double seed = 1.0);

  /// Records a result node. `back` is stored only when any input needs a
  /// gradient and the graph is recording.
  Var emit(Matrix value, bool needs_grad, Backward back);

  void accumulate(Var v, const Matrix& delta);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix own;
    const Matrix* external = nullptr;
    Matrix grad;
    Matrix* external_grad = nullptr;
    bool needs_grad = false;
    Backward back;
  };

  Node& node(Var v);
  const Node& node(Var v) const;

  Mode mode_;
  std::deque<Node> nodes_;
};

}  // namespace chargecast::nn
