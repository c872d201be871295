#include "chargecast/nn/ops.hpp"

#include "chargecast/errors.hpp"

#include <array>
#include <cmath>
#include <memory>
#include <string>

namespace chargecast::nn {
namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + shape(a) + " vs " + shape(b));
  }
}

bool any_grad(const Graph& g, std::initializer_list<Var> vars) {
  for (Var v : vars) {
    if (g.needs_grad(v)) return true;
  }
  return false;
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix softmax_rows_value(const Matrix& s) {
  Matrix p(s.rows(), s.cols());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double m = s.row(r).maxCoeff();
    p.row(r) = (s.row(r).array() - m).exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

// dS = P * (dP - rowsum(dP * P))
Matrix softmax_rows_backward(const Matrix& p, const Matrix& dp) {
  Matrix ds = dp;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const double dot = p.row(r).dot(dp.row(r));
    ds.row(r) = p.row(r).array() * (dp.row(r).array() - dot);
  }
  return ds;
}

}  // namespace

Var matmul(Graph& g, Var a, Var b) {
  const Matrix& va = g.value(a);
  const Matrix& vb = g.value(b);
  if (va.cols() != vb.rows()) throw ConfigError("matmul: " + shape(va) + " * " + shape(vb));
  return g.emit(va * vb, any_grad(g, {a, b}), [a, b](Graph& gr, const Matrix& dout) {
    if (gr.needs_grad(a)) gr.accumulate(a, dout * gr.value(b).transpose());
    if (gr.needs_grad(b)) gr.accumulate(b, gr.value(a).transpose() * dout);
  });
}

Var matmul_nt(Graph& g, Var a, Var b) {
  const Matrix& va = g.value(a);
  const Matrix& vb = g.value(b);
  if (va.cols() != vb.cols()) throw ConfigError("matmul_nt: " + shape(va) + " * (" + shape(vb) + ")^T");
  return g.emit(va * vb.transpose(), any_grad(g, {a, b}), [a, b](Graph& gr, const Matrix& dout) {
    if (gr.needs_grad(a)) gr.accumulate(a, dout * gr.value(b));
    if (gr.needs_grad(b)) gr.accumulate(b, dout.transpose() * gr.value(a));
  });
}

Var add(Graph& g, Var a, Var b) {
  require_same_shape(g.value(a), g.value(b), "add");
  return g.emit(g.value(a) + g.value(b), any_grad(g, {a, b}), [a, b](Graph& gr, const Matrix& dout) {
    gr.accumulate(a, dout);
    gr.accumulate(b, dout);
  });
}

Var sub(Graph& g, Var a, Var b) {
  require_same_shape(g.value(a), g.value(b), "sub");
  return g.emit(g.value(a) - g.value(b), any_grad(g, {a, b}), [a, b](Graph& gr, const Matrix& dout) {
    gr.accumulate(a, dout);
    if (gr.needs_grad(b)) gr.accumulate(b, -dout);
  });
}

Var mul(Graph& g, Var a, Var b) {
  require_same_shape(g.value(a), g.value(b), "mul");
  Matrix out = g.value(a).cwiseProduct(g.value(b));
  return g.emit(std::move(out), any_grad(g, {a, b}), [a, b](Graph& gr, const Matrix& dout) {
    if (gr.needs_grad(a)) gr.accumulate(a, dout.cwiseProduct(gr.value(b)));
    if (gr.needs_grad(b)) gr.accumulate(b, dout.cwiseProduct(gr.value(a)));
  });
}

Var scale(Graph& g, Var a, double factor) {
  return g.emit(g.value(a) * factor, g.needs_grad(a), [a, factor](Graph& gr, const Matrix& dout) {
    gr.accumulate(a, dout * factor);
  });
}

Var add_row(Graph& g, Var a, Var row) {
  const Matrix& va = g.value(a);
  const Matrix& vr = g.value(row);
  if (vr.rows() != 1 || vr.cols() != va.cols()) {
    throw ConfigError("add_row: " + shape(va) + " + row " + shape(vr));
  }
  Matrix out = va.rowwise() + vr.row(0);
  return g.emit(std::move(out), any_grad(g, {a, row}), [a, row](Graph& gr, const Matrix& dout) {
    gr.accumulate(a, dout);
    if (gr.needs_grad(row)) gr.accumulate(row, dout.colwise().sum());
  });
}

Var sigmoid(Graph& g, Var a) {
  Matrix out = g.value(a).unaryExpr(&sigmoid_scalar);
  Matrix local = out.array() * (1.0 - out.array());
  return g.emit(std::move(out), g.needs_grad(a),
                [a, local = std::move(local)](Graph& gr, const Matrix& dout) {
                  gr.accumulate(a, dout.cwiseProduct(local));
                });
}

Var tanh(Graph& g, Var a) {
  Matrix out = g.value(a).array().tanh();
  Matrix local = 1.0 - out.array().square();
  return g.emit(std::move(out), g.needs_grad(a),
                [a, local = std::move(local)](Graph& gr, const Matrix& dout) {
                  gr.accumulate(a, dout.cwiseProduct(local));
                });
}

Var softmax_rows(Graph& g, Var a) {
  Matrix p = softmax_rows_value(g.value(a));
  Matrix cache = g.recording() ? p : Matrix();
  return g.emit(std::move(p), g.needs_grad(a), [a, cache = std::move(cache)](Graph& gr, const Matrix& dout) {
    gr.accumulate(a, softmax_rows_backward(cache, dout));
  });
}

Var concat_rows(Graph& g, std::span<const Var> parts) {
  if (parts.empty()) throw ConfigError("concat_rows: no inputs");
  const Eigen::Index cols = g.value(parts[0]).cols();
  Eigen::Index rows = 0;
  bool needs = false;
  for (Var p : parts) {
    if (g.value(p).cols() != cols) throw ConfigError("concat_rows: column mismatch");
    rows += g.value(p).rows();
    needs = needs || g.needs_grad(p);
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    const Matrix& v = g.value(p);
    out.middleRows(at, v.rows()) = v;
    at += v.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return g.emit(std::move(out), needs, [inputs = std::move(inputs)](Graph& gr, const Matrix& dout) {
    Eigen::Index offset = 0;
    for (Var p : inputs) {
      const Eigen::Index n = gr.value(p).rows();
      if (gr.needs_grad(p)) gr.accumulate(p, dout.middleRows(offset, n));
      offset += n;
    }
  });
}

Var slice_rows(Graph& g, Var a, Eigen::Index first, Eigen::Index count) {
  const Matrix& va = g.value(a);
  if (first < 0 || count < 0 || first + count > va.rows()) {
    throw ConfigError("slice_rows: range out of bounds for " + shape(va));
  }
  const Eigen::Index rows = va.rows();
  return g.emit(va.middleRows(first, count), g.needs_grad(a),
                [a, first, count, rows](Graph& gr, const Matrix& dout) {
                  Matrix full = Matrix::Zero(rows, dout.cols());
                  full.middleRows(first, count) = dout;
                  gr.accumulate(a, full);
                });
}

Var reshape(Graph& g, Var a, Eigen::Index rows, Eigen::Index cols) {
  const Matrix& va = g.value(a);
  if (rows * cols != va.size()) throw ConfigError("reshape: cannot view " + shape(va) + " as " +
                                                  std::to_string(rows) + "x" + std::to_string(cols));
  Matrix out = Eigen::Map<const Matrix>(va.data(), rows, cols);
  const Eigen::Index in_rows = va.rows();
  const Eigen::Index in_cols = va.cols();
  return g.emit(std::move(out), g.needs_grad(a), [a, in_rows, in_cols](Graph& gr, const Matrix& dout) {
    gr.accumulate(a, Eigen::Map<const Matrix>(dout.data(), in_rows, in_cols));
  });
}

Var flatten(Graph& g, Var a) { return reshape(g, a, 1, g.value(a).size()); }

Var sum_squares(Graph& g, Var a) {
  Matrix out = Matrix::Constant(1, 1, g.value(a).squaredNorm());
  return g.emit(std::move(out), g.needs_grad(a), [a](Graph& gr, const Matrix& dout) {
    gr.accumulate(a, gr.value(a) * (2.0 * dout(0, 0)));
  });
}

Var pinball_sum(Graph& g, Var pred, const Matrix& truth, std::span<const double> levels) {
  const Matrix& vp = g.value(pred);
  if (truth.rows() != 1 || truth.cols() != vp.cols() || static_cast<Eigen::Index>(levels.size()) != vp.rows()) {
    throw ConfigError("pinball_sum: prediction " + shape(vp) + " incompatible with truth " + shape(truth));
  }
  double total = 0.0;
  Matrix local(vp.rows(), vp.cols());
  for (Eigen::Index k = 0; k < vp.rows(); ++k) {
    const double q = levels[static_cast<std::size_t>(k)];
    for (Eigen::Index j = 0; j < vp.cols(); ++j) {
      const double diff = truth(0, j) - vp(k, j);
      if (diff >= 0.0) {
        total += q * diff;
        local(k, j) = -q;
      } else {
        total += (q - 1.0) * diff;
        local(k, j) = 1.0 - q;
      }
    }
  }
  return g.emit(Matrix::Constant(1, 1, total), g.needs_grad(pred),
                [pred, local = std::move(local)](Graph& gr, const Matrix& dout) {
                  gr.accumulate(pred, local * dout(0, 0));
                });
}

Var lstm(Graph& g, Var xs, Var w_ih, Var w_hh, Var bias) {
  const Matrix& x = g.value(xs);
  const Matrix& wi = g.value(w_ih);
  const Matrix& wh = g.value(w_hh);
  const Matrix& b = g.value(bias);
  const Eigen::Index steps = x.rows();
  const Eigen::Index hidden = wh.cols();
  if (steps == 0) throw DomainError("lstm: empty input sequence");
  if (wi.rows() != 4 * hidden || wh.rows() != 4 * hidden || wi.cols() != x.cols() || b.rows() != 1 ||
      b.cols() != 4 * hidden) {
    throw ConfigError("lstm: weights " + shape(wi) + ", " + shape(wh) + ", bias " + shape(b) +
                      " incompatible with input " + shape(x));
  }

  const bool record = g.recording() && any_grad(g, {xs, w_ih, w_hh, bias});
  Matrix pre = x * wi.transpose();
  pre.rowwise() += b.row(0);

  // gates: activated i, f, g, o stacked column-wise per step.
  Matrix gates(steps, 4 * hidden);
  Matrix cells(steps, hidden);
  Matrix tanh_cells(steps, hidden);
  Matrix hs(steps, hidden);
  Eigen::RowVectorXd h = Eigen::RowVectorXd::Zero(hidden);
  Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(hidden);
  for (Eigen::Index t = 0; t < steps; ++t) {
    Eigen::RowVectorXd a = pre.row(t) + h * wh.transpose();
    for (Eigen::Index j = 0; j < hidden; ++j) {
      a(j) = sigmoid_scalar(a(j));
      a(hidden + j) = sigmoid_scalar(a(hidden + j));
      a(2 * hidden + j) = std::tanh(a(2 * hidden + j));
      a(3 * hidden + j) = sigmoid_scalar(a(3 * hidden + j));
    }
    c = a.segment(hidden, hidden).cwiseProduct(c) + a.segment(0, hidden).cwiseProduct(a.segment(2 * hidden, hidden));
    const Eigen::RowVectorXd tc = c.array().tanh();
    h = a.segment(3 * hidden, hidden).cwiseProduct(tc);
    hs.row(t) = h;
    if (record) {
      gates.row(t) = a;
      cells.row(t) = c;
      tanh_cells.row(t) = tc;
    }
  }

  Matrix out = hs;
  if (!record) return g.emit(std::move(out), false, {});

  auto cache = std::make_shared<const std::array<Matrix, 4>>(
      std::array<Matrix, 4>{std::move(gates), std::move(cells), std::move(tanh_cells), std::move(hs)});
  return g.emit(std::move(out), true,
                [xs, w_ih, w_hh, bias, cache, steps, hidden](Graph& gr, const Matrix& dout) {
                  const auto& [gt, cs, tcs, hsv] = *cache;
                  const Matrix& whh = gr.value(w_hh);
                  Matrix da(steps, 4 * hidden);
                  Matrix dwhh = Matrix::Zero(4 * hidden, hidden);
                  Eigen::RowVectorXd dh_next = Eigen::RowVectorXd::Zero(hidden);
                  Eigen::RowVectorXd dc_next = Eigen::RowVectorXd::Zero(hidden);
                  for (Eigen::Index t = steps; t-- > 0;) {
                    const auto i = gt.row(t).segment(0, hidden).array();
                    const auto f = gt.row(t).segment(hidden, hidden).array();
                    const auto gc = gt.row(t).segment(2 * hidden, hidden).array();
                    const auto o = gt.row(t).segment(3 * hidden, hidden).array();
                    const auto tc = tcs.row(t).array();
                    const Eigen::ArrayXXd c_prev =
                        t > 0 ? Eigen::ArrayXXd(cs.row(t - 1).array()) : Eigen::ArrayXXd::Zero(1, hidden);
                    const Eigen::ArrayXXd dh = dout.row(t).array() + dh_next.array();
                    const Eigen::ArrayXXd dc = dh * o * (1.0 - tc.square()) + dc_next.array();
                    da.row(t).segment(0, hidden) = (dc * gc * i * (1.0 - i)).matrix();
                    da.row(t).segment(hidden, hidden) = (dc * c_prev * f * (1.0 - f)).matrix();
                    da.row(t).segment(2 * hidden, hidden) = (dc * i * (1.0 - gc.square())).matrix();
                    da.row(t).segment(3 * hidden, hidden) = (dh * tc * o * (1.0 - o)).matrix();
                    dc_next = (dc * f).matrix();
                    dh_next = da.row(t) * whh;
                    if (t > 0) dwhh.noalias() += da.row(t).transpose() * hsv.row(t - 1);
                  }
                  if (gr.needs_grad(w_hh)) gr.accumulate(w_hh, dwhh);
                  if (gr.needs_grad(w_ih)) gr.accumulate(w_ih, da.transpose() * gr.value(xs));
                  if (gr.needs_grad(bias)) gr.accumulate(bias, da.colwise().sum());
                  if (gr.needs_grad(xs)) gr.accumulate(xs, da * gr.value(w_ih));
                });
}

Var attention(Graph& g, Var q, Var k, Var v, int head_count) {
  const Matrix& vq = g.value(q);
  const Matrix& vk = g.value(k);
  const Matrix& vv = g.value(v);
  if (head_count <= 0 || vq.cols() % head_count != 0 || vv.cols() % head_count != 0) {
    throw ConfigError("attention: hidden dims " + std::to_string(vq.cols()) + "/" + std::to_string(vv.cols()) +
                      " not divisible by " + std::to_string(head_count) + " heads");
  }
  if (vq.cols() != vk.cols() || vk.rows() != vv.rows() || vk.rows() == 0) {
    throw ConfigError("attention: Q " + shape(vq) + ", K " + shape(vk) + ", V " + shape(vv));
  }
  const Eigen::Index dk = vq.cols() / head_count;
  const Eigen::Index dv = vv.cols() / head_count;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  const bool record = g.recording() && any_grad(g, {q, k, v});

  Matrix out(vq.rows(), vv.cols());
  std::vector<Matrix> probs;
  if (record) probs.reserve(static_cast<std::size_t>(head_count));
  for (int h = 0; h < head_count; ++h) {
    Matrix s = (vq.middleCols(h * dk, dk) * vk.middleCols(h * dk, dk).transpose()) * inv_sqrt;
    Matrix p = softmax_rows_value(s);
    out.middleCols(h * dv, dv).noalias() = p * vv.middleCols(h * dv, dv);
    if (record) probs.push_back(std::move(p));
  }
  if (!record) return g.emit(std::move(out), false, {});

  auto cache = std::make_shared<const std::vector<Matrix>>(std::move(probs));
  return g.emit(std::move(out), true,
                [q, k, v, head_count, dk, dv, inv_sqrt, cache](Graph& gr, const Matrix& dout) {
                  const Matrix& mq = gr.value(q);
                  const Matrix& mk = gr.value(k);
                  const Matrix& mv = gr.value(v);
                  Matrix dq = Matrix::Zero(mq.rows(), mq.cols());
                  Matrix dk_m = Matrix::Zero(mk.rows(), mk.cols());
                  Matrix dv_m = Matrix::Zero(mv.rows(), mv.cols());
                  for (int h = 0; h < head_count; ++h) {
                    const Matrix& p = (*cache)[static_cast<std::size_t>(h)];
                    const auto dout_h = dout.middleCols(h * dv, dv);
                    dv_m.middleCols(h * dv, dv).noalias() = p.transpose() * dout_h;
                    const Matrix dp = dout_h * mv.middleCols(h * dv, dv).transpose();
                    const Matrix ds = softmax_rows_backward(p, dp) * inv_sqrt;
                    dq.middleCols(h * dk, dk).noalias() = ds * mk.middleCols(h * dk, dk);
                    dk_m.middleCols(h * dk, dk).noalias() = ds.transpose() * mq.middleCols(h * dk, dk);
                  }
                  if (gr.needs_grad(q)) gr.accumulate(q, dq);
                  if (gr.needs_grad(k)) gr.accumulate(k, dk_m);
                  if (gr.needs_grad(v)) gr.accumulate(v, dv_m);
                });
}

}  // namespace chargecast::nn
