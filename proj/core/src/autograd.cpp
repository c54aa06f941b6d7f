// SPDX-License-Identifier: Apache-2.0
#include "macaw/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "macaw/error.hpp"

namespace macaw {

std::size_t ParamStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw Error(Errc::ConfigError, "duplicate parameter " + name);
  const std::size_t idx = values_.size();
  index_.emplace(name, idx);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return idx;
}

std::size_t ParamStore::numel() const noexcept {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t ParamStore::index_of(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(Errc::ConfigError, "unknown parameter " + std::string(name));
  return it->second;
}

Gradients zero_gradients(const ParamStore& params) {
  Gradients g;
  g.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) g.emplace_back(params[i].shape());
  return g;
}

double global_norm(const Gradients& grads) {
  double ss = 0.0;
  for (const auto& g : grads)
    for (double v : g.data()) ss += v * v;
  return std::sqrt(ss);
}

namespace ag {

const Tensor& Var::value() const {
  if (!tape_) throw Error(Errc::NotAttached, "value() on a detached Var");
  return tape_->value(id_);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, -1, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(const ParamStore& params, std::size_t index) {
  if (bound_params_ && bound_params_ != &params) {
    throw Error(Errc::NotAttached, "tape is already bound to a different parameter store");
  }
  bound_params_ = &params;
  if (auto it = param_nodes_.find(index); it != param_nodes_.end()) return Var(this, it->second);
  nodes_.push_back(Node{params[index], {}, false, true, static_cast<std::ptrdiff_t>(index), {}});
  const std::size_t id = nodes_.size() - 1;
  param_nodes_.emplace(index, id);
  return Var(this, id);
}

void Tape::check_owned(const Var& v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) {
    throw Error(Errc::NotAttached, "variable does not belong to this tape");
  }
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> parents, BackwardFn backward) {
  bool needs = false;
  for (const auto& p : parents) {
    check_owned(p);
    needs = needs || nodes_[p.id()].requires_grad;
  }
  Node node{std::move(value), {}, false, needs, -1, {}};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

Gradients Tape::backward(Var loss, const ParamStore& params) {
  if (loss.tape() != this || loss.id() >= nodes_.size()) {
    throw Error(Errc::NotAttached, "loss was not recorded on this tape");
  }
  if (!nodes_[loss.id()].requires_grad) {
    throw Error(Errc::NotAttached, "loss has no recorded dependence on any parameter");
  }
  if (bound_params_ != &params) {
    throw Error(Errc::NotAttached, "loss was recorded against a different parameter store");
  }
  if (loss.value().size() != 1) {
    throw Error(Errc::ShapeMismatch, "backward() needs a scalar loss, got " + shape_string(loss.shape()));
  }
  for (auto& n : nodes_) n.has_grad = false;
  grad(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.requires_grad || !n.backward) continue;
    n.backward(*this, id);
  }
  Gradients out = zero_gradients(params);
  for (const auto& [index, node_id] : param_nodes_) {
    if (nodes_[node_id].has_grad) out[index] = nodes_[node_id].grad;
  }
  return out;
}

namespace {

Tape& same_tape(std::initializer_list<Var> vars) {
  Tape* t = nullptr;
  for (const auto& v : vars) {
    if (!v.attached()) throw Error(Errc::NotAttached, "operation on an unattached Var");
    if (t && v.tape() != t) throw Error(Errc::NotAttached, "operands live on different tapes");
    t = v.tape();
  }
  return *t;
}

void accumulate(Tape& tape, std::size_t id, const Tensor& g) {
  if (tape.requires_grad(id)) tape.grad(id) += g;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape({a, b});
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(macaw::matmul(a.value(), b.value()), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.grad(ia) += macaw::matmul_nt(g, tp.value(ib));
    if (tp.requires_grad(ib)) tp.grad(ib) += macaw::matmul_tn(tp.value(ia), g);
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape({a, b});
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(macaw::matmul_nt(a.value(), b.value()), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.grad(ia) += macaw::matmul(g, tp.value(ib));
    if (tp.requires_grad(ib)) tp.grad(ib) += macaw::matmul_tn(g, tp.value(ia));
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape({a, b});
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(macaw::add(a.value(), b.value()), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    accumulate(tp, ia, g);
    accumulate(tp, ib, g);
  });
}

Var add_bias(Var x, Var b) {
  Tape& t = same_tape({x, b});
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  if (xv.rank() != 2 || bv.size() != xv.cols()) {
    throw Error(Errc::ShapeMismatch, "add_bias " + shape_string(xv.shape()) + " + " + shape_string(bv.shape()));
  }
  Tensor y = xv;
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += bv[j];
  const std::size_t ix = x.id(), ib = b.id();
  return t.record(std::move(y), {x, b}, [ix, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    accumulate(tp, ix, g);
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.grad(ib);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(i, j);
    }
  });
}

Var scale(Var x, double s) {
  Tape& t = same_tape({x});
  const std::size_t ix = x.id();
  return t.record(macaw::scale(x.value(), s), {x}, [ix, s](Tape& tp, std::size_t self) {
    if (tp.requires_grad(ix)) tp.grad(ix) += macaw::scale(tp.grad(self), s);
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw Error(Errc::ShapeMismatch, "mul " + shape_string(av.shape()) + " * " + shape_string(bv.shape()));
  }
  Tensor y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(y), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& va = tp.value(ia);
    const Tensor& vb = tp.value(ib);
    if (tp.requires_grad(ia)) {
      Tensor& ga = tp.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

Var sum(Var x) {
  Tape& t = same_tape({x});
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const std::size_t ix = x.id();
  return t.record(Tensor::scalar(s), {x}, [ix](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ix)) return;
    const double g = tp.grad(self)[0];
    for (double& v : tp.grad(ix).data()) v += g;
  });
}

namespace {

constexpr double kGeluCoeff = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

}  // namespace

Var gelu(Var x) {
  Tape& t = same_tape({x});
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = xv[i];
    y[i] = 0.5 * v * (1.0 + std::tanh(kSqrt2OverPi * (v + kGeluCoeff * v * v * v)));
  }
  const std::size_t ix = x.id();
  return t.record(std::move(y), {x}, [ix](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ix)) return;
    const Tensor& g = tp.grad(self);
    const Tensor& xv = tp.value(ix);
    Tensor& gx = tp.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      const double th = std::tanh(kSqrt2OverPi * (v + kGeluCoeff * v * v * v));
      const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCoeff * v * v);
      gx[i] += g[i] * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du);
    }
  });
}

namespace {

// dx = y * (dy - <y, dy>) row by row; covers the causal variant too since
// masked probabilities are exactly zero.
void softmax_backward(Tape& tp, std::size_t self, std::size_t ix) {
  if (!tp.requires_grad(ix)) return;
  const Tensor& y = tp.value(self);
  const Tensor& g = tp.grad(self);
  Tensor& gx = tp.grad(ix);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto yr = y.row(i);
    auto gr = g.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < yr.size(); ++j) dot += yr[j] * gr[j];
    auto out = gx.row(i);
    for (std::size_t j = 0; j < yr.size(); ++j) out[j] += yr[j] * (gr[j] - dot);
  }
}

}  // namespace

Var softmax_rows(Var x) {
  Tape& t = same_tape({x});
  const std::size_t ix = x.id();
  return t.record(macaw::softmax_rows(x.value()), {x},
                  [ix](Tape& tp, std::size_t self) { softmax_backward(tp, self, ix); });
}

Var causal_softmax_rows(Var x) {
  Tape& t = same_tape({x});
  const std::size_t ix = x.id();
  return t.record(macaw::causal_softmax_rows(x.value()), {x},
                  [ix](Tape& tp, std::size_t self) { softmax_backward(tp, self, ix); });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& t = same_tape({x, gain, bias});
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), d = xv.cols();
  if (xv.rank() != 2 || gain.value().size() != d || bias.value().size() != d) {
    throw Error(Errc::ShapeMismatch, "layer_norm on " + shape_string(xv.shape()));
  }
  Tensor y({n, d});
  Tensor xhat({n, d});
  std::vector<double> inv_std(n);
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t i = 0; i < n; ++i) {
    auto r = xv.row(i);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat(i, j) = (r[j] - mean) * inv_std[i];
      y(i, j) = xhat(i, j) * gv[j] + bv[j];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return t.record(std::move(y), {x, gain, bias},
                  [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    const Tensor& gv = tp.value(ig);
                    const std::size_t n = g.rows(), d = g.cols();
                    if (tp.requires_grad(ib)) {
                      Tensor& gb = tp.grad(ib);
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < d; ++j) gb[j] += g(i, j);
                    }
                    if (tp.requires_grad(ig)) {
                      Tensor& gg = tp.grad(ig);
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < d; ++j) gg[j] += g(i, j) * xhat(i, j);
                    }
                    if (tp.requires_grad(ix)) {
                      Tensor& gx = tp.grad(ix);
                      const double inv_d = 1.0 / static_cast<double>(d);
                      for (std::size_t i = 0; i < n; ++i) {
                        double mean_dh = 0.0, mean_dh_xh = 0.0;
                        for (std::size_t j = 0; j < d; ++j) {
                          const double dh = g(i, j) * gv[j];
                          mean_dh += dh;
                          mean_dh_xh += dh * xhat(i, j);
                        }
                        mean_dh *= inv_d;
                        mean_dh_xh *= inv_d;
                        for (std::size_t j = 0; j < d; ++j) {
                          const double dh = g(i, j) * gv[j];
                          gx(i, j) += inv_std[i] * (dh - mean_dh - xhat(i, j) * mean_dh_xh);
                        }
                      }
                    }
                  });
}

Var conv1d(Var x, Var w, Var bias, std::size_t stride) {
  Tape& t = same_tape({x, w, bias});
  Tensor y = macaw::conv1d(x.value(), w.value(), bias.value(), stride);
  const std::size_t ix = x.id(), iw = w.id(), ib = bias.id();
  return t.record(std::move(y), {x, w, bias}, [ix, iw, ib, stride](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& xv = tp.value(ix);
    const Tensor& wv = tp.value(iw);
    const std::size_t k = wv.dim(0), d_in = wv.dim(1), d_out = wv.dim(2);
    const std::size_t l_out = g.rows();
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.grad(ib);
      for (std::size_t p = 0; p < l_out; ++p)
        for (std::size_t o = 0; o < d_out; ++o) gb[o] += g(p, o);
    }
    const bool need_w = tp.requires_grad(iw);
    const bool need_x = tp.requires_grad(ix);
    Tensor* gw = need_w ? &tp.grad(iw) : nullptr;
    Tensor* gx = need_x ? &tp.grad(ix) : nullptr;
    for (std::size_t p = 0; p < l_out; ++p) {
      auto grow = g.row(p);
      for (std::size_t tt = 0; tt < k; ++tt) {
        const std::size_t src = p * stride + tt;
        for (std::size_t c = 0; c < d_in; ++c) {
          const std::size_t base = (tt * d_in + c) * d_out;
          if (need_w) {
            const double xv_c = xv(src, c);
            for (std::size_t o = 0; o < d_out; ++o) (*gw)[base + o] += xv_c * grow[o];
          }
          if (need_x) {
            double acc = 0.0;
            for (std::size_t o = 0; o < d_out; ++o) acc += wv[base + o] * grow[o];
            (*gx)(src, c) += acc;
          }
        }
      }
    }
  });
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
  Tape& t = same_tape({table});
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw Error(Errc::ShapeMismatch, "gather_rows needs a matrix table");
  if (ids.empty()) throw Error(Errc::ShapeMismatch, "gather_rows with no ids");
  const std::size_t d = tv.cols();
  Tensor y({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= tv.rows()) {
      throw Error(Errc::InvalidId, "row " + std::to_string(ids[r]) + " out of " + std::to_string(tv.rows()));
    }
    std::copy_n(tv.row(ids[r]).begin(), d, y.row(r).begin());
  }
  const std::size_t it = table.id();
  return t.record(std::move(y), {table},
                  [it, ids = std::vector<std::size_t>(ids.begin(), ids.end())](Tape& tp, std::size_t self) {
                    if (!tp.requires_grad(it)) return;
                    const Tensor& g = tp.grad(self);
                    Tensor& gt = tp.grad(it);
                    for (std::size_t r = 0; r < ids.size(); ++r) {
                      auto src = g.row(r);
                      auto dst = gt.row(ids[r]);
                      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
                    }
                  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  Tape& t = same_tape({x});
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || count == 0 || begin + count > xv.rows()) {
    throw Error(Errc::ShapeMismatch, "slice_rows [" + std::to_string(begin) + ", +" + std::to_string(count) +
                                         ") of " + shape_string(xv.shape()));
  }
  const std::size_t d = xv.cols();
  Tensor y({count, d});
  std::copy_n(xv.data().begin() + static_cast<std::ptrdiff_t>(begin * d), count * d, y.data().begin());
  const std::size_t ix = x.id();
  return t.record(std::move(y), {x}, [ix, begin](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ix)) return;
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(ix);
    const std::size_t off = begin * g.cols();
    for (std::size_t i = 0; i < g.size(); ++i) gx[off + i] += g[i];
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  Tape& t = same_tape({x});
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || count == 0 || begin + count > xv.cols()) {
    throw Error(Errc::ShapeMismatch, "slice_cols [" + std::to_string(begin) + ", +" + std::to_string(count) +
                                         ") of " + shape_string(xv.shape()));
  }
  Tensor y({xv.rows(), count});
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) y(i, j) = xv(i, begin + j);
  const std::size_t ix = x.id();
  return t.record(std::move(y), {x}, [ix, begin](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ix)) return;
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(ix);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) gx(i, begin + j) += g(i, j);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw Error(Errc::ShapeMismatch, "concat_rows of nothing");
  Tape& t = *parts.front().tape();
  const std::size_t d = parts.front().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.value().rank() != 2 || p.cols() != d) {
      throw Error(Errc::ShapeMismatch, "concat_rows width mismatch: " + shape_string(p.shape()));
    }
    total += p.rows();
  }
  Tensor y({total, d});
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), y.data().begin() + static_cast<std::ptrdiff_t>(off * d));
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.rows();
  }
  return t.record(std::move(y), parts, [ids, offsets](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const std::size_t d = g.cols();
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp.requires_grad(ids[k])) continue;
      Tensor& gp = tp.grad(ids[k]);
      const std::size_t base = offsets[k] * d;
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[base + i];
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw Error(Errc::ShapeMismatch, "concat_cols of nothing");
  Tape& t = *parts.front().tape();
  const std::size_t n = parts.front().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.value().rank() != 2 || p.rows() != n) {
      throw Error(Errc::ShapeMismatch, "concat_cols height mismatch: " + shape_string(p.shape()));
    }
    total += p.cols();
  }
  Tensor y({n, total});
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) y(i, off + j) = v(i, j);
    ids.push_back(p.id());
    offsets.push_back(off);
    off += v.cols();
  }
  return t.record(std::move(y), parts, [ids, offsets](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp.requires_grad(ids[k])) continue;
      Tensor& gp = tp.grad(ids[k]);
      for (std::size_t i = 0; i < gp.rows(); ++i)
        for (std::size_t j = 0; j < gp.cols(); ++j) gp(i, j) += g(i, offsets[k] + j);
    }
  });
}

Var detach(Var x) {
  Tape& t = same_tape({x});
  return t.constant(x.value());
}

Var weighted_nll(Var logits, std::span<const std::size_t> targets, std::span<const double> weights) {
  Tape& t = same_tape({logits});
  const Tensor& z = logits.value();
  const std::size_t n = z.rows(), v = z.cols();
  if (z.rank() != 2 || targets.size() != n || weights.size() != n) {
    throw Error(Errc::ShapeMismatch, "weighted_nll: logits " + shape_string(z.shape()) + " with " +
                                         std::to_string(targets.size()) + " targets");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (weights[i] == 0.0) continue;
    if (targets[i] >= v) throw Error(Errc::InvalidId, "target " + std::to_string(targets[i]));
    auto r = z.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double se = 0.0;
    for (double x : r) se += std::exp(x - mx);
    loss += weights[i] * (mx + std::log(se) - r[targets[i]]);
  }
  const std::size_t iz = logits.id();
  return t.record(Tensor::scalar(loss), {logits},
                  [iz, tg = std::vector<std::size_t>(targets.begin(), targets.end()),
                   w = std::vector<double>(weights.begin(), weights.end())](Tape& tp, std::size_t self) {
                    if (!tp.requires_grad(iz)) return;
                    const double g = tp.grad(self)[0];
                    const Tensor& z = tp.value(iz);
                    Tensor& gz = tp.grad(iz);
                    for (std::size_t i = 0; i < z.rows(); ++i) {
                      if (w[i] == 0.0) continue;
                      auto r = z.row(i);
                      const double mx = *std::max_element(r.begin(), r.end());
                      double se = 0.0;
                      for (double x : r) se += std::exp(x - mx);
                      auto out = gz.row(i);
                      const double coef = g * w[i];
                      for (std::size_t j = 0; j < r.size(); ++j) out[j] += coef * std::exp(r[j] - mx) / se;
                      out[tg[i]] -= coef;
                    }
                  });
}

}  // namespace ag
}  // namespace macaw
