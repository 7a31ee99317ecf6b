#include "sashimi/ssm_op.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace sashimi::ssm {
namespace {

cplx get_c(const Tensor& t, std::size_t i) { return cplx(t[2 * i], t[2 * i + 1]); }

void add_c(Tensor& t, std::size_t i, cplx g) {
  t[2 * i] += g.real();
  t[2 * i + 1] += g.imag();
}

void check_layout(const LayerTensors& t) {
  const std::size_t h = t.d->numel();
  const std::size_t n = t.lambda_im->shape().back();
  const std::size_t groups = t.lambda_im->numel() / n;
  if (t.lambda_re_raw->shape() != t.lambda_im->shape()) throw std::invalid_argument("ssm layer: lambda parts differ");
  if (groups != 1 && groups != h) throw std::invalid_argument("ssm layer: lambda groups must be 1 or H");
  if (t.p->rank() != 3 || t.p->dim(0) != n || t.p->dim(2) != 2) throw std::invalid_argument("ssm layer: p must be [N, r, 2]");
  if (t.mode == Mode::untied && (!t.q || t.q->shape() != t.p->shape())) {
    throw std::invalid_argument("ssm layer: untied mode needs q shaped like p");
  }
  if (t.b->numel() != 2 * n) throw std::invalid_argument("ssm layer: b must be [N, 2]");
  if (t.c->numel() != 2 * n * h) throw std::invalid_argument("ssm layer: c must be [H, N, 2]");
  if (t.log_delta->numel() != h) throw std::invalid_argument("ssm layer: log_delta must be [H]");
}

}  // namespace

SsmParams channel_params(const LayerTensors& t, std::size_t channel) {
  const std::size_t n = t.lambda_im->shape().back();
  const std::size_t groups = t.lambda_im->numel() / n;
  const std::size_t g = groups == 1 ? 0 : channel;
  const std::size_t r = t.p->dim(1);
  SsmParams sp;
  sp.mode = t.mode;
  sp.conj_pairs = t.conj_pairs;
  sp.lambda_re_raw.assign(t.lambda_re_raw->data().begin() + g * n, t.lambda_re_raw->data().begin() + (g + 1) * n);
  sp.lambda_im.assign(t.lambda_im->data().begin() + g * n, t.lambda_im->data().begin() + (g + 1) * n);
  sp.p = CMatrix(n, r);
  for (std::size_t i = 0; i < n * r; ++i) sp.p.data()[i] = get_c(*t.p, i);
  if (t.mode == Mode::untied) {
    sp.q = CMatrix(n, r);
    for (std::size_t i = 0; i < n * r; ++i) sp.q.data()[i] = get_c(*t.q, i);
  }
  sp.b.resize(n);
  sp.c.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    sp.b[i] = get_c(*t.b, i);
    sp.c[i] = get_c(*t.c, channel * n + i);
  }
  sp.d = (*t.d)[channel];
  sp.delta = std::exp((*t.log_delta)[channel]);
  return sp;
}

ad::Var ssm_conv(ad::Var x, const LayerVars& vars, Mode mode, bool conj_pairs) {
  ad::Tape& tape = *x.tape;
  const bool untied = mode == Mode::untied;
  LayerTensors lt{&vars.lambda_re_raw.value(),
                  &vars.lambda_im.value(),
                  &vars.p.value(),
                  untied ? &vars.q.value() : nullptr,
                  &vars.b.value(),
                  &vars.c.value(),
                  &vars.d.value(),
                  &vars.log_delta.value(),
                  mode,
                  conj_pairs};
  check_layout(lt);
  const Tensor& xs = x.value();
  if (xs.rank() != 2 || xs.dim(1) != lt.channels()) {
    throw std::invalid_argument("ssm_conv: input " + shape_string(xs.shape()) + " does not match " +
                                std::to_string(lt.channels()) + " channels");
  }
  const std::size_t t_len = xs.dim(0), h = xs.dim(1);

  Tensor out({t_len, h});
  std::vector<double> col(t_len);
  for (std::size_t ch = 0; ch < h; ++ch) {
    const SsmParams sp = channel_params(lt, ch);
    const DiscreteSsm ds = discretize(sp);
    for (std::size_t t = 0; t < t_len; ++t) col[t] = xs.at(t, ch);
    const auto y = causal_conv(materialize_kernel(ds, t_len, conj_pairs), sp.d, col);
    for (std::size_t t = 0; t < t_len; ++t) out.at(t, ch) = y[t];
  }

  std::vector<ad::NodeId> inputs{x.id,         vars.lambda_re_raw.id, vars.lambda_im.id, vars.p.id,
                                 untied ? vars.q.id : vars.p.id, vars.b.id, vars.c.id, vars.d.id,
                                 vars.log_delta.id};
  // Owned copies for the backward closure.
  struct Saved {
    Tensor x, lre, lim, p, q, b, c, d, log_delta;
  };
  auto saved = std::make_shared<Saved>(Saved{xs, *lt.lambda_re_raw, *lt.lambda_im, *lt.p,
                                             untied ? *lt.q : Tensor(), *lt.b, *lt.c, *lt.d, *lt.log_delta});

  return tape.record("ssm_conv", std::move(out), std::move(inputs),
                     [saved, mode, conj_pairs, untied, t_len, h](const Tensor& gy, std::span<Tensor* const> gi) {
    const Saved& s = *saved;
    LayerTensors st{&s.lre, &s.lim, &s.p, untied ? &s.q : nullptr, &s.b, &s.c, &s.d, &s.log_delta, mode, conj_pairs};
    Tensor* g_x = gi[0];
    Tensor* g_lre = gi[1];
    Tensor* g_lim = gi[2];
    Tensor* g_p = gi[3];
    // In tied modes slot 4 aliases p; the p gradient is written through slot 3 only.
    Tensor* g_q = untied ? gi[4] : nullptr;
    Tensor* g_b = gi[5];
    Tensor* g_c = gi[6];
    Tensor* g_d = gi[7];
    Tensor* g_ld = gi[8];
    const bool need_structure = g_lre || g_lim || g_p || g_q || g_b || g_ld;
    const double scale = conj_pairs ? 2.0 : 1.0;
    const std::size_t n = s.lim.shape().back();
    const std::size_t groups = s.lim.numel() / n;
    const std::size_t r = s.p.dim(1);

    std::vector<double> col(t_len), gcol(t_len), gk(t_len);
    std::vector<CVector> states;
    for (std::size_t ch = 0; ch < h; ++ch) {
      const SsmParams sp = channel_params(st, ch);
      const CMatrix a = materialize_a(sp);
      const DiscreteSsm ds = discretize(sp);
      const Kernel k = materialize_kernel(ds, t_len, conj_pairs, &states);
      for (std::size_t t = 0; t < t_len; ++t) {
        col[t] = s.x.at(t, ch);
        gcol[t] = gy.at(t, ch);
      }
      // Convolution adjoints.
      if (g_d) {
        double acc = 0.0;
        for (std::size_t t = 0; t < t_len; ++t) acc += gcol[t] * col[t];
        (*g_d)[ch] += acc;
      }
      if (g_x) {
        for (std::size_t u = 0; u < t_len; ++u) {
          double acc = sp.d * gcol[u];
          for (std::size_t t = u; t < t_len; ++t) acc += gcol[t] * k.taps[t - u];
          g_x->at(u, ch) += acc;
        }
      }
      if (!g_c && !need_structure) continue;
      for (std::size_t i = 0; i < t_len; ++i) {
        double acc = 0.0;
        for (std::size_t t = i; t < t_len; ++t) acc += gcol[t] * col[t - i];
        gk[i] = scale * acc;
      }
      if (g_c) {
        for (std::size_t j = 0; j < n; ++j) {
          cplx acc{};
          for (std::size_t i = 0; i < t_len; ++i) acc += gk[i] * std::conj(states[i][j]);
          add_c(*g_c, ch * n + j, acc);
        }
      }
      if (!need_structure) continue;

      // Reverse sweep through v_{i+1} = A_bar v_i.
      const CMatrix abar_h = ds.a_bar.adjoint();
      CMatrix g_abar(n, n);
      CVector adj(n), tmp(n);
      for (std::size_t i = t_len; i-- > 0;) {
        if (i + 1 < t_len) {
          for (std::size_t p_ = 0; p_ < n; ++p_)
            for (std::size_t q_ = 0; q_ < n; ++q_) g_abar(p_, q_) += adj[p_] * std::conj(states[i][q_]);
          matvec_into(abar_h, adj, tmp);
        } else {
          std::fill(tmp.begin(), tmp.end(), cplx{});
        }
        for (std::size_t j = 0; j < n; ++j) adj[j] = tmp[j] + gk[i] * std::conj(sp.c[j]);
      }
      // adj now holds dL/dB_bar. Back through the resolvent M = I - delta/2 A.
      const double half = 0.5 * sp.delta;
      const CMatrix m_h = (CMatrix::identity(n) - cplx(half) * a).adjoint();
      CMatrix rhs(n, n + 1);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) rhs(i, j) = g_abar(i, j);
        rhs(i, n) = adj[i];
      }
      const CMatrix sol = lu_solve(m_h, rhs);
      CMatrix w1(n, n);
      CVector w2(n);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) w1(i, j) = sol(i, j);
        w2[i] = sol(i, n);
      }
      CMatrix g_a = w1 + w1 * abar_h;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) g_a(i, j) += w2[i] * std::conj(ds.b_bar[j]);
      g_a = cplx(half) * g_a;

      if (g_b) {
        for (std::size_t i = 0; i < n; ++i) add_c(*g_b, i, sp.delta * w2[i]);
      }
      if (g_ld) {
        double gdelta = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j) gdelta += (std::conj(g_a(i, j)) * a(i, j)).real() / sp.delta;
          gdelta += (std::conj(w2[i]) * sp.b[i]).real();
        }
        (*g_ld)[ch] += gdelta * sp.delta;
      }
      const std::size_t g = groups == 1 ? 0 : ch;
      for (std::size_t i = 0; i < n; ++i) {
        if (g_lre) (*g_lre)[g * n + i] += g_a(i, i).real() * lambda_real_grad(mode, sp.lambda_re_raw[i]);
        if (g_lim) (*g_lim)[g * n + i] += g_a(i, i).imag();
      }
      if (g_p || g_q) {
        const CMatrix g_a_h = g_a.adjoint();
        if (untied) {
          if (g_p) {
            const CMatrix gp = g_a * sp.q;
            for (std::size_t i = 0; i < n * r; ++i) add_c(*g_p, i, gp.data()[i]);
          }
          if (g_q) {
            const CMatrix gq = g_a_h * sp.p;
            for (std::size_t i = 0; i < n * r; ++i) add_c(*g_q, i, gq.data()[i]);
          }
        } else if (g_p) {
          const CMatrix gp = (g_a + g_a_h) * sp.p;
          for (std::size_t i = 0; i < n * r; ++i) add_c(*g_p, i, -gp.data()[i]);
        }
      }
    }
  });
}

}  // namespace sashimi::ssm
