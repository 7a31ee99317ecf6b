#include "sashimi/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "sashimi/nn_kernels.hpp"

namespace sashimi::ad {

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::leaf(Tensor value) {
  value.check_finite("leaf");
  const bool rg = value.requires_grad();
  nodes_.push_back(Node{"leaf", std::move(value), {}, nullptr, rg, true});
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  value.set_requires_grad(false);
  return leaf(std::move(value));
}

Var Tape::record(std::string op, Tensor value, std::vector<NodeId> inputs, BackwardFn backward) {
  value.check_finite(op.c_str());
  bool rg = false;
  for (auto id : inputs) {
    if (id >= nodes_.size()) throw std::logic_error("tape input recorded out of order");
    rg = rg || nodes_[id].requires_grad;
  }
  value.set_requires_grad(rg);
  nodes_.push_back(Node{std::move(op), std::move(value), std::move(inputs), rg ? std::move(backward) : nullptr, rg,
                        false});
  return Var{this, nodes_.size() - 1};
}

std::map<NodeId, Tensor> Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("loss belongs to another tape");
  if (value(loss.id).numel() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " + shape_string(value(loss.id).shape()));
  }
  std::vector<Tensor> grads(nodes_.size());
  std::vector<bool> has(nodes_.size(), false);
  grads[loss.id] = Tensor(value(loss.id).shape(), std::vector<double>{1.0});
  has[loss.id] = true;
  last_visits_ = 0;

  for (NodeId id = loss.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!has[id] || node.is_leaf || !node.requires_grad) continue;
    grads[id].check_finite(("backward of " + node.op).c_str());
    std::vector<Tensor*> slots(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const NodeId in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      if (!has[in]) {
        grads[in] = Tensor(nodes_[in].value.shape());
        has[in] = true;
      }
      slots[k] = &grads[in];
    }
    node.backward(grads[id], slots);
    ++last_visits_;
  }

  std::map<NodeId, Tensor> out;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const Node& node = nodes_[id];
    if (!node.is_leaf || !node.requires_grad) continue;
    if (has[id]) {
      grads[id].check_finite("leaf gradient");
      out.emplace(id, std::move(grads[id]));
    } else {
      out.emplace(id, Tensor(node.value.shape()));
    }
  }
  return out;
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::invalid_argument("vars from different tapes");
  return *a.tape;
}

void require_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw std::invalid_argument(std::string(what) + " expects a rank-2 tensor, got " + shape_string(t.shape()));
}

}  // namespace

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.shape() != y.shape()) {
    throw std::invalid_argument("add: shape mismatch " + shape_string(x.shape()) + " vs " + shape_string(y.shape()));
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[i] + y[i];
  return tape.record("add", std::move(out), {a.id, b.id}, [](const Tensor& g, std::span<Tensor* const> gi) {
    for (Tensor* t : gi) {
      if (!t) continue;
      for (std::size_t i = 0; i < g.numel(); ++i) (*t)[i] += g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor x = a.value();
  const Tensor y = b.value();
  if (x.shape() != y.shape()) throw std::invalid_argument("mul: shape mismatch");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[i] * y[i];
  return tape.record("mul", std::move(out), {a.id, b.id}, [x, y](const Tensor& g, std::span<Tensor* const> gi) {
    if (gi[0])
      for (std::size_t i = 0; i < g.numel(); ++i) (*gi[0])[i] += g[i] * y[i];
    if (gi[1])
      for (std::size_t i = 0; i < g.numel(); ++i) (*gi[1])[i] += g[i] * x[i];
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= s;
  return a.tape->record("scale", std::move(out), {a.id}, [s](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t i = 0; i < g.numel(); ++i) (*gi[0])[i] += s * g[i];
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape->record("sum", Tensor::scalar(s), {a.id}, [](const Tensor& g, std::span<Tensor* const> gi) {
    const double gv = g[0];
    for (auto& v : gi[0]->data()) v += gv;
  });
}

Var linear(Var x, Var w, Var b) {
  Tape& tape = same_tape(x, w);
  const bool has_bias = b.tape != nullptr;
  const Tensor xs = x.value();
  const Tensor ws = w.value();
  require_rank2(xs, "linear input");
  require_rank2(ws, "linear weight");
  const std::size_t rows = xs.dim(0), in = xs.dim(1), out_dim = ws.dim(1);
  if (ws.dim(0) != in) {
    throw std::invalid_argument("linear: input width " + std::to_string(in) + " vs weight " + shape_string(ws.shape()));
  }
  if (has_bias && b.value().numel() != out_dim) throw std::invalid_argument("linear: bias size mismatch");
  Tensor out({rows, out_dim});
  const std::span<const double> bias = has_bias ? b.value().data() : std::span<const double>{};
  for (std::size_t r = 0; r < rows; ++r) kernels::linear_row(xs.row(r), ws.data(), bias, out.row(r));

  std::vector<NodeId> inputs{x.id, w.id};
  if (has_bias) inputs.push_back(b.id);
  return tape.record("linear", std::move(out), std::move(inputs),
                     [xs, ws, rows, in, out_dim](const Tensor& g, std::span<Tensor* const> gi) {
                       if (gi[0]) {
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t i = 0; i < in; ++i) {
                             double acc = 0.0;
                             for (std::size_t j = 0; j < out_dim; ++j) acc += g.at(r, j) * ws.at(i, j);
                             gi[0]->at(r, i) += acc;
                           }
                         }
                       }
                       if (gi[1]) {
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t i = 0; i < in; ++i) {
                             const double xv = xs.at(r, i);
                             for (std::size_t j = 0; j < out_dim; ++j) gi[1]->at(i, j) += xv * g.at(r, j);
                           }
                         }
                       }
                       if (gi.size() > 2 && gi[2]) {
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t j = 0; j < out_dim; ++j) (*gi[2])[j] += g.at(r, j);
                       }
                     });
}

Var layer_norm(Var x, Var gain, Var bias) {
  Tape& tape = same_tape(x, gain);
  const Tensor& xs = x.value();
  require_rank2(xs, "layer_norm");
  const std::size_t rows = xs.dim(0), h = xs.dim(1);
  if (gain.value().numel() != h || bias.value().numel() != h) throw std::invalid_argument("layer_norm: gain/bias size");
  Tensor out({rows, h});
  Tensor xhat({rows, h});
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    rstd[r] = kernels::layer_norm_row(xs.row(r), gain.value().data(), bias.value().data(), xhat.row(r), out.row(r));
  }
  const Tensor gv = gain.value();
  return tape.record(
      "layer_norm", std::move(out), {x.id, gain.id, bias.id},
      [xhat, rstd, gv, rows, h](const Tensor& g, std::span<Tensor* const> gi) {
        std::vector<double> gx(h);
        for (std::size_t r = 0; r < rows; ++r) {
          if (gi[1])
            for (std::size_t i = 0; i < h; ++i) (*gi[1])[i] += g.at(r, i) * xhat.at(r, i);
          if (gi[2])
            for (std::size_t i = 0; i < h; ++i) (*gi[2])[i] += g.at(r, i);
          if (!gi[0]) continue;
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t i = 0; i < h; ++i) {
            gx[i] = g.at(r, i) * gv[i];
            m1 += gx[i];
            m2 += gx[i] * xhat.at(r, i);
          }
          m1 /= static_cast<double>(h);
          m2 /= static_cast<double>(h);
          for (std::size_t i = 0; i < h; ++i) gi[0]->at(r, i) += rstd[r] * (gx[i] - m1 - xhat.at(r, i) * m2);
        }
      });
}

Var gelu(Var x) {
  const Tensor xs = x.value();
  Tensor out(xs.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = kernels::gelu(xs[i]);
  return x.tape->record("gelu", std::move(out), {x.id}, [xs](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t i = 0; i < g.numel(); ++i) (*gi[0])[i] += g[i] * kernels::gelu_grad(xs[i]);
  });
}

Var glu(Var x) {
  const Tensor xs = x.value();
  require_rank2(xs, "glu");
  const std::size_t rows = xs.dim(0), w = xs.dim(1);
  if (w % 2 != 0) throw std::invalid_argument("glu needs an even width");
  const std::size_t k = w / 2;
  Tensor out({rows, k});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < k; ++i) out.at(r, i) = xs.at(r, i) * kernels::sigmoid(xs.at(r, k + i));
  return x.tape->record("glu", std::move(out), {x.id}, [xs, rows, k](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t i = 0; i < k; ++i) {
        const double a = xs.at(r, i);
        const double s = kernels::sigmoid(xs.at(r, k + i));
        gi[0]->at(r, i) += g.at(r, i) * s;
        gi[0]->at(r, k + i) += g.at(r, i) * a * s * (1.0 - s);
      }
    }
  });
}

Var embedding(Var table, std::span<const std::uint8_t> tokens) {
  const Tensor& tb = table.value();
  require_rank2(tb, "embedding");
  const std::size_t h = tb.dim(1);
  Tensor out({tokens.size(), h});
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] >= tb.dim(0)) throw std::out_of_range("embedding index out of range");
    for (std::size_t i = 0; i < h; ++i) out.at(t, i) = tb.at(tokens[t], i);
  }
  std::vector<std::uint8_t> toks(tokens.begin(), tokens.end());
  return table.tape->record("embedding", std::move(out), {table.id},
                            [toks, h](const Tensor& g, std::span<Tensor* const> gi) {
                              for (std::size_t t = 0; t < toks.size(); ++t)
                                for (std::size_t i = 0; i < h; ++i) gi[0]->at(toks[t], i) += g.at(t, i);
                            });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape->record("reshape", std::move(out), {x.id}, [](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t i = 0; i < g.numel(); ++i) (*gi[0])[i] += g[i];
  });
}

Var shift_rows(Var x, std::size_t k) {
  const Tensor& xs = x.value();
  require_rank2(xs, "shift_rows");
  const std::size_t rows = xs.dim(0), w = xs.dim(1);
  Tensor out({rows, w});
  for (std::size_t t = k; t < rows; ++t)
    for (std::size_t i = 0; i < w; ++i) out.at(t, i) = xs.at(t - k, i);
  return x.tape->record("shift_rows", std::move(out), {x.id}, [k, rows, w](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t t = k; t < rows; ++t)
      for (std::size_t i = 0; i < w; ++i) gi[0]->at(t - k, i) += g.at(t, i);
  });
}

Var reverse_rows(Var x) {
  const Tensor& xs = x.value();
  require_rank2(xs, "reverse_rows");
  const std::size_t rows = xs.dim(0), w = xs.dim(1);
  Tensor out({rows, w});
  for (std::size_t t = 0; t < rows; ++t)
    for (std::size_t i = 0; i < w; ++i) out.at(t, i) = xs.at(rows - 1 - t, i);
  return x.tape->record("reverse_rows", std::move(out), {x.id}, [rows, w](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t t = 0; t < rows; ++t)
      for (std::size_t i = 0; i < w; ++i) gi[0]->at(rows - 1 - t, i) += g.at(t, i);
  });
}

Var concat_cols(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_rank2(x, "concat_cols");
  require_rank2(y, "concat_cols");
  if (x.dim(0) != y.dim(0)) throw std::invalid_argument("concat_cols: row count mismatch");
  const std::size_t rows = x.dim(0), wa = x.dim(1), wb = y.dim(1);
  Tensor out({rows, wa + wb});
  for (std::size_t t = 0; t < rows; ++t) {
    for (std::size_t i = 0; i < wa; ++i) out.at(t, i) = x.at(t, i);
    for (std::size_t i = 0; i < wb; ++i) out.at(t, wa + i) = y.at(t, i);
  }
  return tape.record("concat_cols", std::move(out), {a.id, b.id},
                     [rows, wa, wb](const Tensor& g, std::span<Tensor* const> gi) {
                       for (std::size_t t = 0; t < rows; ++t) {
                         if (gi[0])
                           for (std::size_t i = 0; i < wa; ++i) gi[0]->at(t, i) += g.at(t, i);
                         if (gi[1])
                           for (std::size_t i = 0; i < wb; ++i) gi[1]->at(t, i) += g.at(t, wa + i);
                       }
                     });
}

Var nll_bits(Var logits, std::span<const std::uint8_t> targets) {
  const Tensor& lg = logits.value();
  require_rank2(lg, "nll_bits");
  const std::size_t rows = lg.dim(0), k = lg.dim(1);
  if (targets.size() != rows) throw std::invalid_argument("nll_bits: target count does not match logits rows");
  if (rows == 0) throw std::invalid_argument("nll_bits: empty sequence");
  Tensor probs({rows, k});
  double total = 0.0;
  for (std::size_t t = 0; t < rows; ++t) {
    if (targets[t] >= k) throw std::out_of_range("nll_bits: target out of range");
    const auto lsm = log_softmax(lg.row(t));
    total += neg_log2_prob(lg.row(t), targets[t]);
    for (std::size_t i = 0; i < k; ++i) probs.at(t, i) = std::exp(lsm[i]);
  }
  const double denom = static_cast<double>(rows) * std::numbers::ln2;
  std::vector<std::uint8_t> tg(targets.begin(), targets.end());
  return logits.tape->record("nll_bits", Tensor::scalar(total / static_cast<double>(rows)), {logits.id},
                             [probs, tg, rows, k, denom](const Tensor& g, std::span<Tensor* const> gi) {
                               const double s = g[0] / denom;
                               for (std::size_t t = 0; t < rows; ++t) {
                                 for (std::size_t i = 0; i < k; ++i) gi[0]->at(t, i) += s * probs.at(t, i);
                                 gi[0]->at(t, tg[t]) -= s;
                               }
                             });
}

}  // namespace sashimi::ad
