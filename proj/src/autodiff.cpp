#include "ram/autodiff.hpp"

#include <cmath>
#include <limits>

namespace ram::ad {

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(const Parameter& p) {
  nodes_.push_back(Node{Matrix{}, {}, {}, &p, record_});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Tape::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) {
    const Matrix& v = value(id);
    n.grad.setZero(v.rows(), v.cols());
  }
  return n.grad;
}

Var Tape::push(Matrix value, std::span<const Var> inputs, Backward back) {
  bool needs = false;
  if (record_) {
    for (const Var& in : inputs) {
      if (in.tape() != this) throw Error("tape mismatch");
      needs = needs || nodes_[in.id()].needs_grad;
    }
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(back) : Backward{}, nullptr, needs});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(Var out) {
  if (!record_) throw Error("backward on a non-recording tape");
  if (out.tape() != this || out.rows() != 1 || out.cols() != 1) {
    throw Error("backward needs a scalar output on this tape");
  }
  if (!nodes_[out.id()].needs_grad) return;
  grad(out.id())(0, 0) += 1.0;
  for (int id = out.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      n.param->grad += n.grad;
    } else if (n.back) {
      n.back(*this, id);
    }
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
}

// ---------------------------------------------------------------------------

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw Error("matmul: shape mismatch");
  Matrix out;
  out.noalias() = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  const Var ins[] = {a, b};
  return a.tape()->push(std::move(out), ins, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia).noalias() += g * t.value(ib).transpose();
    if (t.needs_grad(ib)) t.grad(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  const int ia = a.id(), ib = b.id();
  const Var ins[] = {a, b};
  return a.tape()->push(a.value() + b.value(), ins, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia) += g;
    if (t.needs_grad(ib)) t.grad(ib) += g;
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  const Var ins[] = {a, b};
  return a.tape()->push(a.value() - b.value(), ins, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia) += g;
    if (t.needs_grad(ib)) t.grad(ib) -= g;
  });
}

Var add_row(Var a, Var b) {
  if (b.rows() != 1 || b.cols() != a.cols()) throw Error("add_row: shape mismatch");
  Matrix out = a.value().rowwise() + b.value().row(0);
  const int ia = a.id(), ib = b.id();
  const Var ins[] = {a, b};
  return a.tape()->push(std::move(out), ins, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia) += g;
    if (t.needs_grad(ib)) t.grad(ib) += g.colwise().sum();
  });
}

Var scale(Var a, double s) {
  const int ia = a.id();
  const Var ins[] = {a};
  return a.tape()->push(a.value() * s, ins, [ia, s](Tape& t, int self) {
    t.grad(ia) += t.grad(self) * s;
  });
}

Var transpose(Var a) {
  const int ia = a.id();
  const Var ins[] = {a};
  return a.tape()->push(a.value().transpose(), ins, [ia](Tape& t, int self) {
    t.grad(ia) += t.grad(self).transpose();
  });
}

namespace {
constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kA = 0.044715;
}  // namespace

Var gelu(Var a) {
  const Matrix& x = a.value();
  const Matrix th = (kC * (x.array() + kA * x.array().cube())).tanh().matrix();
  Matrix out = (0.5 * x.array() * (1.0 + th.array())).matrix();
  const int ia = a.id();
  const Var ins[] = {a};
  return a.tape()->push(std::move(out), ins, [ia, th](Tape& t, int self) {
    const auto x = t.value(ia).array();
    const auto d = 0.5 * (1.0 + th.array()) +
                   0.5 * x * (1.0 - th.array().square()) * kC * (1.0 + 3.0 * kA * x.square());
    t.grad(ia).array() += t.grad(self).array() * d;
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Eigen::Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw Error("layer_norm: shape mismatch");
  }
  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), n);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv_std(i);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  const int ix = x.id(), ig = gain.id(), ib = bias.id();
  const Var ins[] = {x, gain, bias};
  return x.tape()->push(std::move(out), ins, [ix, ig, ib, xhat, inv_std](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ig)) t.grad(ig) += (g.array() * xhat.array()).colwise().sum().matrix();
    if (t.needs_grad(ib)) t.grad(ib) += g.colwise().sum();
    if (t.needs_grad(ix)) {
      const Matrix dxhat = (g.array().rowwise() * t.value(ig).row(0).array()).matrix();
      Matrix& gx = t.grad(ix);
      for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
        const double m1 = dxhat.row(i).mean();
        const double m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
        gx.row(i).array() += inv_std(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
      }
    }
  });
}

Var attention(Var q, Var k, Var v, int n_heads, std::span<const int> blocks, bool causal) {
  require_same_shape(q, k, "attention");
  require_same_shape(q, v, "attention");
  const Eigen::Index d = q.cols();
  if (n_heads <= 0 || d % n_heads != 0) throw Error("attention: heads must divide width");
  Eigen::Index total = 0;
  for (int b : blocks) {
    if (b <= 0) throw Error("attention: empty block");
    total += b;
  }
  if (total != q.rows()) throw Error("attention: blocks do not cover rows");

  const Eigen::Index dh = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Matrix& Q = q.value();
  const Matrix& K = k.value();
  const Matrix& V = v.value();
  Matrix out(Q.rows(), d);
  std::vector<Matrix> probs;
  probs.reserve(blocks.size() * n_heads);

  Eigen::Index start = 0;
  for (int len : blocks) {
    for (int h = 0; h < n_heads; ++h) {
      Matrix s;
      s.noalias() = Q.block(start, h * dh, len, dh) * K.block(start, h * dh, len, dh).transpose();
      s *= inv_sqrt;
      for (Eigen::Index i = 0; i < len; ++i) {
        const Eigen::Index visible = causal ? i + 1 : len;
        const double m = s.row(i).head(visible).maxCoeff();
        s.row(i).head(visible) = (s.row(i).head(visible).array() - m).exp().matrix();
        s.row(i).head(visible) /= s.row(i).head(visible).sum();
        if (visible < len) s.row(i).tail(len - visible).setZero();
      }
      out.block(start, h * dh, len, dh).noalias() = s * V.block(start, h * dh, len, dh);
      probs.push_back(std::move(s));
    }
    start += len;
  }

  std::vector<int> block_vec(blocks.begin(), blocks.end());
  const int iq = q.id(), ik = k.id(), iv = v.id();
  const Var ins[] = {q, k, v};
  return q.tape()->push(
      std::move(out), ins,
      [iq, ik, iv, n_heads, dh, inv_sqrt, block_vec, probs = std::move(probs)](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& Q = t.value(iq);
        const Matrix& K = t.value(ik);
        const Matrix& V = t.value(iv);
        const bool gq = t.needs_grad(iq), gk = t.needs_grad(ik), gv = t.needs_grad(iv);
        Eigen::Index start = 0;
        std::size_t pi = 0;
        for (int len : block_vec) {
          for (int h = 0; h < n_heads; ++h, ++pi) {
            const Matrix& p = probs[pi];
            const auto go = g.block(start, h * dh, len, dh);
            if (gv) t.grad(iv).block(start, h * dh, len, dh).noalias() += p.transpose() * go;
            if (!gq && !gk) continue;
            Matrix dp;
            dp.noalias() = go * V.block(start, h * dh, len, dh).transpose();
            const Eigen::VectorXd row_dot = (dp.array() * p.array()).rowwise().sum();
            Matrix ds = (p.array() * (dp.array().colwise() - row_dot.array())).matrix() * inv_sqrt;
            if (gq) t.grad(iq).block(start, h * dh, len, dh).noalias() += ds * K.block(start, h * dh, len, dh);
            if (gk) {
              t.grad(ik).block(start, h * dh, len, dh).noalias() +=
                  ds.transpose() * Q.block(start, h * dh, len, dh);
            }
          }
          start += len;
        }
      });
}

Var gather_rows(Var table, std::span<const int> ids) {
  const Matrix& tv = table.value();
  Matrix out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows()) throw Error("bad token id");
    out.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  const int it = table.id();
  const Var ins[] = {table};
  return table.tape()->push(std::move(out), ins, [it, idv](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix& gt = t.grad(it);
    for (std::size_t i = 0; i < idv.size(); ++i) gt.row(idv[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var vstack(std::span<const Var> parts) {
  if (parts.empty()) throw Error("vstack: no inputs");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw Error("vstack: width mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  layout.reserve(parts.size());
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    layout.emplace_back(p.id(), p.rows());
    r += p.rows();
  }
  return parts.front().tape()->push(std::move(out), parts, [layout](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Eigen::Index r = 0;
    for (const auto& [id, n] : layout) {
      if (t.needs_grad(id)) t.grad(id) += g.middleRows(r, n);
      r += n;
    }
  });
}

Var slice_rows(Var x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > x.rows()) throw Error("slice_rows: out of range");
  const int ix = x.id();
  const Var ins[] = {x};
  return x.tape()->push(x.value().middleRows(start, count), ins, [ix, start, count](Tape& t, int self) {
    t.grad(ix).middleRows(start, count) += t.grad(self);
  });
}

Var mean_rows(Var x) {
  if (x.rows() == 0) throw Error("empty sequence");
  const double inv = 1.0 / static_cast<double>(x.rows());
  const int ix = x.id();
  const Var ins[] = {x};
  return x.tape()->push(x.value().colwise().sum() * inv, ins, [ix, inv](Tape& t, int self) {
    t.grad(ix).rowwise() += t.grad(self).row(0) * inv;
  });
}

namespace {

Var cosine_impl(Var x, Var r, bool strict_rows) {
  if (r.rows() != 1 || r.cols() != x.cols()) throw Error("cosine: shape mismatch");
  const Matrix& xv = x.value();
  const double rn = r.value().norm();
  if (!(rn > 0.0)) throw Error(strict_rows ? "degenerate query" : "degenerate vector");
  const Eigen::VectorXd xn = xv.rowwise().norm();
  Matrix out(1, xv.rows());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    if (!(xn(i) > 0.0)) {
      if (strict_rows) throw Error("degenerate segment");
      out(0, i) = -1.0;
    } else {
      out(0, i) = xv.row(i).dot(r.value().row(0)) / (xn(i) * rn);
    }
  }
  const int ix = x.id(), ir = r.id();
  const Var ins[] = {x, r};
  return x.tape()->push(out, ins, [ix, ir, xn, rn, out](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& xv = t.value(ix);
    const auto rv = t.value(ir).row(0);
    for (Eigen::Index i = 0; i < xv.rows(); ++i) {
      if (!(xn(i) > 0.0)) continue;
      const double c = out(0, i);
      const double gi = g(0, i);
      if (t.needs_grad(ix)) {
        t.grad(ix).row(i) += gi * (rv / (xn(i) * rn) - c * xv.row(i) / (xn(i) * xn(i)));
      }
      if (t.needs_grad(ir)) {
        t.grad(ir).row(0) += gi * (xv.row(i) / (xn(i) * rn) - c * rv / (rn * rn));
      }
    }
  });
}

}  // namespace

Var row_cosine(Var x, Var r) { return cosine_impl(x, r, false); }

Var cosine_rows(Var a, Var b) { return cosine_impl(b, a, true); }

Var softmax_rows(Var x) {
  Matrix out = x.value();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i).array() -= out.row(i).maxCoeff();
    out.row(i) = out.row(i).array().exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  const int ix = x.id();
  const Var ins[] = {x};
  return x.tape()->push(out, ins, [ix, out](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Eigen::VectorXd dot = (g.array() * out.array()).rowwise().sum();
    t.grad(ix).array() += out.array() * (g.array().colwise() - dot.array());
  });
}

Var log_softmax_rows(Var x) {
  Matrix out = x.value();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i).array() -= log_sum_exp(out.row(i));
  }
  const int ix = x.id();
  const Var ins[] = {x};
  return x.tape()->push(out, ins, [ix, out](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Eigen::VectorXd gsum = g.rowwise().sum();
    t.grad(ix).array() += g.array() - out.array().exp().colwise() * gsum.array();
  });
}

Var pick_mean(Var x, std::span<const std::pair<int, int>> entries) {
  if (entries.empty()) throw Error("pick_mean: no entries");
  double s = 0.0;
  for (const auto& [r, c] : entries) {
    if (r < 0 || r >= x.rows() || c < 0 || c >= x.cols()) throw Error("pick_mean: index out of range");
    s += x.value()(r, c);
  }
  const double inv = 1.0 / static_cast<double>(entries.size());
  std::vector<std::pair<int, int>> ev(entries.begin(), entries.end());
  const int ix = x.id();
  const Var ins[] = {x};
  return x.tape()->push(Matrix::Constant(1, 1, s * inv), ins, [ix, ev, inv](Tape& t, int self) {
    const double g = t.grad(self)(0, 0) * inv;
    Matrix& gx = t.grad(ix);
    for (const auto& [r, c] : ev) gx(r, c) += g;
  });
}

Var sum_scalars(std::span<const Var> xs) {
  if (xs.empty()) throw Error("sum_scalars: no inputs");
  double s = 0.0;
  std::vector<int> ids;
  ids.reserve(xs.size());
  for (const Var& x : xs) {
    if (x.rows() != 1 || x.cols() != 1) throw Error("sum_scalars: non-scalar input");
    s += x.scalar();
    ids.push_back(x.id());
  }
  return xs.front().tape()->push(Matrix::Constant(1, 1, s), xs, [ids](Tape& t, int self) {
    const double g = t.grad(self)(0, 0);
    for (int id : ids) {
      if (t.needs_grad(id)) t.grad(id)(0, 0) += g;
    }
  });
}

}  // namespace ram::ad
