#pragma once

#include "chargecast/nn/graph.hpp"
#include "chargecast/nn/ops.hpp"
#include "chargecast/random.hpp"

#include <string>
#include <vector>

namespace chargecast::nn {

/// Fills with U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
void init_uniform(ParamTensor& p, Eigen::Index fan_in, Rng& rng);

/// y = x W^T + b, applied to every row of x. W is out x in.
struct Linear {
  ParamTensor weight;
  ParamTensor bias;

  Linear() = default;
  Linear(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng);

  Var operator()(Graph& g, Var x) { return apply(*this, g, x); }
  Var operator()(Graph& g, Var x) const { return apply(*this, g, x); }

  std::vector<ParamTensor*> parameters() { return {&weight, &bias}; }

 private:
  template <class Self>
  static Var apply(Self& self, Graph& g, Var x) {
    return add_row(g, matmul_nt(g, x, g.param(self.weight)), g.param(self.bias));
  }
};

struct Lstm {
  ParamTensor w_ih;  // 4H x in
  ParamTensor w_hh;  // 4H x H
  ParamTensor bias;  // 1 x 4H

  Lstm() = default;
  Lstm(const std::string& name, Eigen::Index in, Eigen::Index hidden, Rng& rng);

  Var operator()(Graph& g, Var xs) { return apply(*this, g, xs); }
  Var operator()(Graph& g, Var xs) const { return apply(*this, g, xs); }

  Eigen::Index hidden() const { return w_hh.value.cols(); }
  std::vector<ParamTensor*> parameters() { return {&w_ih, &w_hh, &bias}; }

 private:
  template <class Self>
  static Var apply(Self& self, Graph& g, Var xs) {
    return lstm(g, xs, g.param(self.w_ih), g.param(self.w_hh), g.param(self.bias));
  }
};

/// Multi-head attention block: bias-free Q/K/V projections followed by one
/// output projection. Queries and keys/values may come from different
/// sequences; self-attention passes the same node twice.
struct AttentionBlock {
  ParamTensor w_q;
  ParamTensor w_k;
  ParamTensor w_v;
  Linear out;
  int heads = 1;

  AttentionBlock() = default;
  AttentionBlock(const std::string& name, Eigen::Index dim, int head_count, Rng& rng);

  Var operator()(Graph& g, Var query_source, Var kv_source) { return apply(*this, g, query_source, kv_source); }
  Var operator()(Graph& g, Var query_source, Var kv_source) const {
    return apply(*this, g, query_source, kv_source);
  }

  std::vector<ParamTensor*> parameters() { return {&w_q, &w_k, &w_v, &out.weight, &out.bias}; }

 private:
  template <class Self>
  static Var apply(Self& self, Graph& g, Var query_source, Var kv_source) {
    const Var q = matmul_nt(g, query_source, g.param(self.w_q));
    const Var k = matmul_nt(g, kv_source, g.param(self.w_k));
    const Var v = matmul_nt(g, kv_source, g.param(self.w_v));
    return self.out(g, attention(g, q, k, v, self.heads));
  }
};

}  // namespace chargecast::nn
