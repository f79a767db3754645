#include "proper/autodiff.hpp"

#include <cmath>
#include <limits>

#include "proper/errors.hpp"

namespace proper::ad {

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back({std::move(value), {}, {}, false, false});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::leaf(Matrix value) {
  nodes_.push_back({std::move(value), {}, {}, true, false});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  bool needs = false;
  for (const auto& p : parents) needs = needs || requires_grad(p.id());
  nodes_.push_back({std::move(value), {}, needs ? std::move(backward) : Backward{}, needs, false});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, bool requires_grad, Backward backward) {
  nodes_.push_back({std::move(value), {}, requires_grad ? std::move(backward) : Backward{}, requires_grad, false});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return;
  if (n.has_grad) {
    n.grad += g;
  } else {
    n.grad = g;
    n.has_grad = true;
  }
}

void Tape::accumulate_block(int id, Eigen::Index row, Eigen::Index col, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  n.grad.block(row, col, g.rows(), g.cols()) += g;
}

void Tape::accumulate_outer(int id, const Matrix& u, const Matrix& v) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return;
  if (n.backward) {
    accumulate(id, u * v.transpose());
    return;
  }
  int& slot = pending_slot_[static_cast<std::size_t>(id)];
  if (slot < 0) {
    slot = static_cast<int>(pending_.size());
    pending_.push_back({id, {}});
  }
  Outer& o = pending_[static_cast<std::size_t>(slot)].second;
  o.u.push_back(u);
  o.v.push_back(v);
  o.columns += u.cols();
}

void Tape::backward(const Var& root) {
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  pending_.clear();
  pending_slot_.assign(nodes_.size(), -1);
  accumulate(root.id(), Matrix::Ones(1, 1));
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad || !n.backward) continue;
    Matrix g = std::move(n.grad);
    n.backward(*this, g);
    n.grad = std::move(g);
  }
  for (auto& [id, o] : pending_) {
    const Matrix& first_u = o.u.front();
    const Matrix& first_v = o.v.front();
    Matrix u(first_u.rows(), o.columns);
    Matrix v(first_v.rows(), o.columns);
    Eigen::Index c = 0;
    for (std::size_t k = 0; k < o.u.size(); ++k) {
      u.middleCols(c, o.u[k].cols()) = o.u[k];
      v.middleCols(c, o.v[k].cols()) = o.v[k];
      c += o.u[k].cols();
    }
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad) {
      n.grad = Matrix::Zero(u.rows(), v.rows());
      n.has_grad = true;
    }
    n.grad.noalias() += u * v.transpose();
  }
  pending_.clear();
}

Matrix Tape::grad(const Var& v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (!n.has_grad) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var add(const Var& a, const Var& b) {
  const int ia = a.id(), ib = b.id();
  return a.tape().record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(const Var& a, const Var& b) {
  const int ia = a.id(), ib = b.id();
  return a.tape().record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  const int ia = a.id(), ib = b.id();
  return a.tape().record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var scale(const Var& a, double s) {
  const int ia = a.id();
  return a.tape().record(a.value() * s, {a}, [ia, s](Tape& t, const Matrix& g) { t.accumulate(ia, g * s); });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var add_scalar(const Var& a, double s) {
  const int ia = a.id();
  return a.tape().record(a.value().array() + s, {a}, [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g); });
}

Var matmul(const Var& a, const Var& b) {
  const int ia = a.id(), ib = b.id();
  return a.tape().record(a.value() * b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate_outer(ia, g, t.value(ib));
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var transpose(const Var& a) {
  const int ia = a.id();
  return a.tape().record(a.value().transpose(), {a},
                         [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g.transpose()); });
}

Var tanh(const Var& a) {
  const int ia = a.id();
  Matrix y = a.value().array().tanh();
  Matrix dy = 1.0 - y.array().square();
  return a.tape().record(std::move(y), {a},
                         [ia, dy = std::move(dy)](Tape& t, const Matrix& g) { t.accumulate(ia, g.cwiseProduct(dy)); });
}

Var sigmoid(const Var& a) {
  const int ia = a.id();
  Matrix y = (1.0 + (-a.value().array()).exp()).inverse();
  Matrix dy = y.array() * (1.0 - y.array());
  return a.tape().record(std::move(y), {a},
                         [ia, dy = std::move(dy)](Tape& t, const Matrix& g) { t.accumulate(ia, g.cwiseProduct(dy)); });
}

Var exp(const Var& a) {
  const int ia = a.id();
  Matrix y = a.value().array().exp();
  Matrix keep = y;
  return a.tape().record(std::move(y), {a},
                         [ia, keep = std::move(keep)](Tape& t, const Matrix& g) { t.accumulate(ia, g.cwiseProduct(keep)); });
}

Var log(const Var& a) {
  const int ia = a.id();
  return a.tape().record(a.value().array().log(), {a}, [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseQuotient(t.value(ia)));
  });
}

Var square(const Var& a) { return mul(a, a); }

Var sum(const Var& a) {
  const int ia = a.id();
  const auto r = a.rows(), c = a.cols();
  return a.tape().record(Matrix::Constant(1, 1, a.value().sum()), {a},
                         [ia, r, c](Tape& t, const Matrix& g) { t.accumulate(ia, Matrix::Constant(r, c, g(0, 0))); });
}

Var dot(const Var& a, const Var& b) {
  const int ia = a.id(), ib = b.id();
  return a.tape().record(Matrix::Constant(1, 1, a.value().cwiseProduct(b.value()).sum()), {a, b},
                         [ia, ib](Tape& t, const Matrix& g) {
                           t.accumulate(ia, t.value(ib) * g(0, 0));
                           t.accumulate(ib, t.value(ia) * g(0, 0));
                         });
}

Var concat_rows(std::span<const Var> parts) {
  Tape& tape = parts.front().tape();
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const auto& p : parts) rows += p.rows();
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index r = 0;
  bool needs = false;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    spans.emplace_back(p.id(), p.rows());
    needs = needs || tape.requires_grad(p.id());
    r += p.rows();
  }
  auto backward = [spans = std::move(spans)](Tape& t, const Matrix& g) {
    Eigen::Index at = 0;
    for (const auto& [id, n] : spans) {
      if (t.requires_grad(id)) t.accumulate(id, g.middleRows(at, n));
      at += n;
    }
  };
  return tape.record(std::move(out), needs, std::move(backward));
}

Var concat_cols(std::span<const Var> parts) {
  Tape& tape = parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) cols += p.cols();
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index c = 0;
  bool needs = false;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    spans.emplace_back(p.id(), p.cols());
    needs = needs || tape.requires_grad(p.id());
    c += p.cols();
  }
  auto backward = [spans = std::move(spans)](Tape& t, const Matrix& g) {
    Eigen::Index at = 0;
    for (const auto& [id, n] : spans) {
      if (t.requires_grad(id)) t.accumulate(id, g.middleCols(at, n));
      at += n;
    }
  };
  return tape.record(std::move(out), needs, std::move(backward));
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  const int ia = a.id();
  return a.tape().record(a.value().middleRows(start, count), {a},
                         [ia, start](Tape& t, const Matrix& g) { t.accumulate_block(ia, start, 0, g); });
}

Var column(const Var& a, Eigen::Index j) {
  const int ia = a.id();
  return a.tape().record(a.value().col(j), {a}, [ia, j](Tape& t, const Matrix& g) { t.accumulate_block(ia, 0, j, g); });
}

Var element(const Var& a, Eigen::Index i) {
  const int ia = a.id();
  return a.tape().record(Matrix::Constant(1, 1, a.value()(i, 0)), {a},
                         [ia, i](Tape& t, const Matrix& g) { t.accumulate_block(ia, i, 0, g); });
}

Var gather_cols(const Var& a, std::span<const int> index) {
  const int ia = a.id();
  Matrix out = Matrix::Zero(a.rows(), static_cast<Eigen::Index>(index.size()));
  std::vector<int> idx(index.begin(), index.end());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= 0) out.col(static_cast<Eigen::Index>(k)) = a.value().col(idx[k]);
  }
  return a.tape().record(std::move(out), {a}, [ia, idx = std::move(idx)](Tape& t, const Matrix& g) {
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] >= 0) t.accumulate_block(ia, 0, idx[k], g.col(static_cast<Eigen::Index>(k)));
    }
  });
}

Var add_col_broadcast(const Var& m, const Var& col) {
  const int im = m.id(), ic = col.id();
  Matrix out = m.value().colwise() + col.value().col(0);
  return m.tape().record(std::move(out), {m, col}, [im, ic](Tape& t, const Matrix& g) {
    t.accumulate(im, g);
    if (t.requires_grad(ic)) t.accumulate(ic, g.rowwise().sum());
  });
}

Var mean_cols(const Var& m) {
  const int im = m.id();
  const auto c = m.cols();
  return m.tape().record(m.value().rowwise().mean(), {m}, [im, c](Tape& t, const Matrix& g) {
    t.accumulate(im, g.replicate(1, c) / static_cast<double>(c));
  });
}

Var softmax(const Var& logits) {
  const int il = logits.id();
  const auto& x = logits.value();
  Matrix y = (x.array() - x.maxCoeff()).exp();
  y /= y.sum();
  Matrix keep = y;
  return logits.tape().record(std::move(y), {logits}, [il, keep = std::move(keep)](Tape& t, const Matrix& g) {
    const double s = keep.cwiseProduct(g).sum();
    t.accumulate(il, keep.cwiseProduct((g.array() - s).matrix()));
  });
}

Var log_softmax(const Var& logits, std::span<const char> mask) {
  const int il = logits.id();
  const auto& x = logits.value();
  const Eigen::Index n = x.rows();
  std::vector<char> on(static_cast<std::size_t>(n), 1);
  if (!mask.empty()) on.assign(mask.begin(), mask.end());

  double m = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (on[static_cast<std::size_t>(i)]) m = std::max(m, x(i, 0));
  }
  double z = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (on[static_cast<std::size_t>(i)]) z += std::exp(x(i, 0) - m);
  }
  const double lse = m + std::log(z);
  Matrix y(n, 1);
  Matrix p = Matrix::Zero(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (on[static_cast<std::size_t>(i)]) {
      y(i, 0) = x(i, 0) - lse;
      p(i, 0) = std::exp(y(i, 0));
    } else {
      y(i, 0) = -std::numeric_limits<double>::infinity();
    }
  }
  return logits.tape().record(std::move(y), {logits},
                              [il, p = std::move(p), on = std::move(on)](Tape& t, const Matrix& g) {
                                double s = 0.0;
                                for (Eigen::Index i = 0; i < g.rows(); ++i) {
                                  if (on[static_cast<std::size_t>(i)]) s += g(i, 0);
                                }
                                Matrix gi = Matrix::Zero(g.rows(), 1);
                                for (Eigen::Index i = 0; i < g.rows(); ++i) {
                                  if (on[static_cast<std::size_t>(i)]) gi(i, 0) = g(i, 0) - p(i, 0) * s;
                                }
                                t.accumulate(il, gi);
                              });
}

Var logsumexp(const Var& v) {
  const int iv = v.id();
  const auto& x = v.value();
  const double m = x.maxCoeff();
  Matrix p = (x.array() - m).exp();
  const double z = p.sum();
  p /= z;
  return v.tape().record(Matrix::Constant(1, 1, m + std::log(z)), {v},
                         [iv, p = std::move(p)](Tape& t, const Matrix& g) { t.accumulate(iv, p * g(0, 0)); });
}

Var cosine(const Var& a, const Var& b) {
  const int ia = a.id(), ib = b.id();
  const double na = a.value().norm();
  const double nb = b.value().norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw Error(Errc::kZeroNormVector, "cosine similarity of a zero vector");
  const double c = a.value().cwiseProduct(b.value()).sum() / (na * nb);
  return a.tape().record(Matrix::Constant(1, 1, c), {a, b}, [ia, ib, na, nb, c](Tape& t, const Matrix& g) {
    const Matrix& av = t.value(ia);
    const Matrix& bv = t.value(ib);
    const double s = g(0, 0);
    if (t.requires_grad(ia)) t.accumulate(ia, s * (bv / (na * nb) - c * av / (na * na)));
    if (t.requires_grad(ib)) t.accumulate(ib, s * (av / (na * nb) - c * bv / (nb * nb)));
  });
}

Var stop_gradient(const Var& a) { return a.tape().constant(a.value()); }

Var gru_cell(const Var& x, const Var& h, const Var& wx, const Var& wh, const Var& b) {
  const Eigen::Index d = h.rows();
  const Matrix gx = wx.value() * x.value() + b.value();
  const Matrix gh = wh.value() * h.value();
  const auto sig = [](const Matrix& m) -> Matrix { return (1.0 + (-m.array()).exp()).inverse(); };
  Matrix r = sig(gx.topRows(d) + gh.topRows(d));
  Matrix z = sig(gx.middleRows(d, d) + gh.middleRows(d, d));
  Matrix ghn = gh.bottomRows(d);
  Matrix n = (gx.bottomRows(d) + r.cwiseProduct(ghn)).array().tanh();
  Matrix out = n + z.cwiseProduct(h.value() - n);

  const int ix = x.id(), ih = h.id(), iwx = wx.id(), iwh = wh.id(), ib = b.id();
  return x.tape().record(
      std::move(out), {x, h, wx, wh, b},
      [=, r = std::move(r), z = std::move(z), n = std::move(n), ghn = std::move(ghn)](Tape& t, const Matrix& g) {
        const Matrix& hv = t.value(ih);
        const Matrix dn = g.cwiseProduct((1.0 - z.array()).matrix());
        const Matrix dz = g.cwiseProduct(hv - n);
        const Matrix dpre_n = dn.cwiseProduct((1.0 - n.array().square()).matrix());
        const Matrix dr = dpre_n.cwiseProduct(ghn);
        Matrix dgx(3 * d, 1);
        dgx.topRows(d) = dr.cwiseProduct((r.array() * (1.0 - r.array())).matrix());
        dgx.middleRows(d, d) = dz.cwiseProduct((z.array() * (1.0 - z.array())).matrix());
        dgx.bottomRows(d) = dpre_n;
        Matrix dgh = dgx;
        dgh.bottomRows(d) = dpre_n.cwiseProduct(r);

        if (t.requires_grad(iwx)) t.accumulate_outer(iwx, dgx, t.value(ix));
        if (t.requires_grad(ib)) t.accumulate(ib, dgx);
        if (t.requires_grad(ix)) t.accumulate(ix, t.value(iwx).transpose() * dgx);
        if (t.requires_grad(iwh)) t.accumulate_outer(iwh, dgh, hv);
        if (t.requires_grad(ih)) t.accumulate(ih, t.value(iwh).transpose() * dgh + g.cwiseProduct(z));
      });
}

Var attend(const Var& keys, const Var& query) {
  const int ik = keys.id(), iq = query.id();
  const Matrix& k = keys.value();
  const Matrix s = k.transpose() * query.value();
  Matrix alpha = (s.array() - s.maxCoeff()).exp();
  alpha /= alpha.sum();
  Matrix out = k * alpha;
  return keys.tape().record(std::move(out), {keys, query}, [ik, iq, alpha = std::move(alpha)](Tape& t, const Matrix& g) {
    const Matrix& kv = t.value(ik);
    const Matrix da = kv.transpose() * g;
    const double mean = alpha.cwiseProduct(da).sum();
    const Matrix ds = alpha.cwiseProduct((da.array() - mean).matrix());
    if (t.requires_grad(ik)) t.accumulate(ik, g * alpha.transpose() + t.value(iq) * ds.transpose());
    if (t.requires_grad(iq)) t.accumulate(iq, kv * ds);
  });
}

}  // namespace proper::ad
