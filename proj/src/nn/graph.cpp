#include "chargecast/nn/graph.hpp"

#include "chargecast/errors.hpp"

namespace chargecast::nn {

ParamTensor::ParamTensor(std::string tensor_name, Eigen::Index rows, Eigen::Index cols)
    : name(std::move(tensor_name)), value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

Graph::Node& Graph::node(Var v) {
  if (!v.valid() || v.index() >= nodes_.size()) throw ConfigError("graph: invalid node handle");
  return nodes_[v.index()];
}

const Graph::Node& Graph::node(Var v) const {
  if (!v.valid() || v.index() >= nodes_.size()) throw ConfigError("graph: invalid node handle");
  return nodes_[v.index()];
}

Var Graph::constant(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.own = std::move(value);
  return Var(nodes_.size() - 1);
}

Var Graph::variable(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.own = std::move(value);
  n.needs_grad = recording();
  return Var(nodes_.size() - 1);
}

Var Graph::param(ParamTensor& p) {
  Node& n = nodes_.emplace_back();
  n.external = &p.value;
  if (recording()) {
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
      p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
    }
    n.external_grad = &p.grad;
    n.needs_grad = true;
  }
  return Var(nodes_.size() - 1);
}

Var Graph::param(const ParamTensor& p) {
  Node& n = nodes_.emplace_back();
  n.external = &p.value;
  return Var(nodes_.size() - 1);
}

const Matrix& Graph::value(Var v) const {
  const Node& n = node(v);
  return n.external != nullptr ? *n.external : n.own;
}

double Graph::scalar(Var v) const {
  const Matrix& m = value(v);
  if (m.size() != 1) throw ConfigError("graph: scalar() on a non-scalar node");
  return m(0, 0);
}

const Matrix& Graph::grad(Var v) const {
  const Node& n = node(v);
  return n.external_grad != nullptr ? *n.external_grad : n.grad;
}

bool Graph::needs_grad(Var v) const { return node(v).needs_grad; }

Var Graph::emit(Matrix value, bool needs_grad, Backward back) {
  Node& n = nodes_.emplace_back();
  n.own = std::move(value);
  n.needs_grad = recording() && needs_grad;
  if (n.needs_grad) n.back = std::move(back);
  return Var(nodes_.size() - 1);
}

void Graph::accumulate(Var v, const Matrix& delta) {
  Node& n = node(v);
  if (!n.needs_grad) return;
  Matrix& target = n.external_grad != nullptr ? *n.external_grad : n.grad;
  if (n.external_grad == nullptr && target.size() == 0) {
    target = delta;
    return;
  }
  if (target.rows() != delta.rows() || target.cols() != delta.cols()) {
    throw ConfigError("graph: gradient shape mismatch");
  }
  target += delta;
}

void Graph::backward(Var loss, double seed) {
  if (!recording()) throw ConfigError("graph: backward() on an inference graph");
  if (value(loss).size() != 1) throw ConfigError("graph: backward() requires a scalar loss");
  accumulate(loss, Matrix::Constant(1, 1, seed));
  for (std::size_t i = loss.index() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.back || n.grad.size() == 0) continue;
    const Matrix out_grad = std::move(n.grad);
    n.back(*this, out_grad);
  }
}

}  // namespace chargecast::nn
