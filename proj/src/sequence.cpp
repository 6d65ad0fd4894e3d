#include "hifdta/sequence.hpp"

#include <cmath>

#include "hifdta/errors.hpp"

namespace hifdta {

namespace {

double sigm(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor lstm_scan(const Tensor& gates_x, const Tensor& w_hh, const std::vector<std::size_t>& lengths, bool reverse,
                 kernels::Exec exec) {
  if (gates_x.rank() != 3 || w_hh.rank() != 2 || w_hh.dim(1) != 4 * w_hh.dim(0) ||
      gates_x.dim(2) != w_hh.dim(1) || lengths.size() != gates_x.dim(0))
    throw DimensionError("lstm_scan: gates " + shape_str(gates_x.shape()) + ", w_hh " + shape_str(w_hh.shape()) +
                         ", " + std::to_string(lengths.size()) + " lengths");
  const std::size_t batch = gates_x.dim(0), steps = gates_x.dim(1), hidden = w_hh.dim(0);
  const std::size_t g4 = 4 * hidden;
  for (auto len : lengths)
    if (len > steps) throw DimensionError("lstm_scan: length exceeds padded steps");

  const double* gx = gates_x.data().data();
  const double* whh = w_hh.data().data();
  // Saved activations per (b, t): post-nonlinearity gates, cell, tanh(cell), h.
  auto act = std::make_shared<std::vector<double>>(batch * steps * g4, 0.0);
  auto cell = std::make_shared<std::vector<double>>(batch * steps * hidden, 0.0);
  std::vector<double> out(batch * steps * hidden, 0.0);
  const bool parallel = exec == kernels::Exec::Parallel;

#pragma omp parallel for schedule(dynamic) if (parallel && batch > 1)
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<double> h(hidden, 0.0), c(hidden, 0.0), pre(g4);
    const std::size_t len = lengths[b];
    for (std::size_t s = 0; s < len; ++s) {
      const std::size_t t = reverse ? len - 1 - s : s;
      const std::size_t bt = b * steps + t;
      for (std::size_t j = 0; j < g4; ++j) pre[j] = gx[bt * g4 + j];
      for (std::size_t k = 0; k < hidden; ++k) {
        const double hk = h[k];
        if (hk == 0.0) continue;
        const double* row = whh + k * g4;
        for (std::size_t j = 0; j < g4; ++j) pre[j] += hk * row[j];
      }
      double* a = act->data() + bt * g4;
      for (std::size_t j = 0; j < hidden; ++j) {
        a[j] = sigm(pre[j]);
        a[hidden + j] = sigm(pre[hidden + j]);
        a[2 * hidden + j] = std::tanh(pre[2 * hidden + j]);
        a[3 * hidden + j] = sigm(pre[3 * hidden + j]);
        c[j] = a[hidden + j] * c[j] + a[j] * a[2 * hidden + j];
        h[j] = a[3 * hidden + j] * std::tanh(c[j]);
        (*cell)[bt * hidden + j] = c[j];
        out[bt * hidden + j] = h[j];
      }
    }
  }

  return make_op_result(
      "lstm_scan", {batch, steps, hidden}, std::move(out), {gates_x, w_hh},
      [=](TensorNode& self) {
        auto* ggx = input_grad(self, 0);
        auto* gwhh = input_grad(self, 1);
        const double* dy = self.grad.data();
        const double* hout = self.value.data();
        const double* whh = self.inputs[1]->value.data();
        std::vector<double> dgates(batch * steps * g4, 0.0);
        std::vector<double> dw_part(gwhh ? batch * hidden * g4 : 0, 0.0);

#pragma omp parallel for schedule(dynamic) if (parallel && batch > 1)
        for (std::size_t b = 0; b < batch; ++b) {
          std::vector<double> dh(hidden, 0.0), dc(hidden, 0.0);
          const std::size_t len = lengths[b];
          for (std::size_t s = len; s-- > 0;) {
            const std::size_t t = reverse ? len - 1 - s : s;
            const std::size_t bt = b * steps + t;
            // Position of the previous step in recurrence order, if any.
            const bool has_prev = s > 0;
            const std::size_t tp = reverse ? t + 1 : t - 1;
            const std::size_t btp = b * steps + (has_prev ? tp : 0);
            const double* a = act->data() + bt * g4;
            double* dg = dgates.data() + bt * g4;
            for (std::size_t j = 0; j < hidden; ++j) {
              const double cj = (*cell)[bt * hidden + j];
              const double tc = std::tanh(cj);
              const double dhj = dy[bt * hidden + j] + dh[j];
              const double i = a[j], f = a[hidden + j], g = a[2 * hidden + j], o = a[3 * hidden + j];
              const double dcj = dc[j] + dhj * o * (1.0 - tc * tc);
              const double c_prev = has_prev ? (*cell)[btp * hidden + j] : 0.0;
              dg[j] = dcj * g * i * (1.0 - i);
              dg[hidden + j] = dcj * c_prev * f * (1.0 - f);
              dg[2 * hidden + j] = dcj * i * (1.0 - g * g);
              dg[3 * hidden + j] = dhj * tc * o * (1.0 - o);
              dc[j] = dcj * f;
            }
            // dh_prev = W_hh dg ; dW_hh += h_prev^T dg
            for (std::size_t k = 0; k < hidden; ++k) {
              const double* row = whh + k * g4;
              double acc = 0.0;
              for (std::size_t j = 0; j < g4; ++j) acc += row[j] * dg[j];
              dh[k] = acc;
            }
            if (gwhh && has_prev) {
              double* dw = dw_part.data() + b * hidden * g4;
              for (std::size_t k = 0; k < hidden; ++k) {
                const double hk = hout[btp * hidden + k];
                if (hk == 0.0) continue;
                for (std::size_t j = 0; j < g4; ++j) dw[k * g4 + j] += hk * dg[j];
              }
            }
          }
        }
        if (ggx)
          for (std::size_t i = 0; i < dgates.size(); ++i) (*ggx)[i] += dgates[i];
        if (gwhh)
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < hidden * g4; ++i) (*gwhh)[i] += dw_part[b * hidden * g4 + i];
      });
}

Tensor ssm_scan(const Tensor& x, const Tensor& delta, const Tensor& b_in, const Tensor& c_out, const Tensor& a,
                const Tensor& d_skip, const Mask& mask, kernels::Exec exec) {
  if (x.rank() != 3 || delta.shape() != x.shape() || b_in.rank() != 3 || c_out.shape() != b_in.shape() ||
      b_in.dim(0) != x.dim(0) || b_in.dim(1) != x.dim(1) || a.rank() != 2 || a.dim(0) != x.dim(2) ||
      a.dim(1) != b_in.dim(2) || d_skip.numel() != x.dim(2) || mask.size() != x.dim(0) * x.dim(1))
    throw DimensionError("ssm_scan: x " + shape_str(x.shape()) + ", delta " + shape_str(delta.shape()) + ", B " +
                         shape_str(b_in.shape()) + ", C " + shape_str(c_out.shape()) + ", A " +
                         shape_str(a.shape()) + ", D " + shape_str(d_skip.shape()));
  const std::size_t batch = x.dim(0), steps = x.dim(1), d = x.dim(2), n = a.dim(1);
  const double* xv = x.data().data();
  const double* dv = delta.data().data();
  const double* bv = b_in.data().data();
  const double* cv = c_out.data().data();
  const double* av = a.data().data();
  const double* skip = d_skip.data().data();
  // State after every step, needed by the adjoint.
  auto states = std::make_shared<std::vector<double>>(batch * steps * d * n, 0.0);
  std::vector<double> out(batch * steps * d, 0.0);
  const bool parallel = exec == kernels::Exec::Parallel;

#pragma omp parallel for schedule(dynamic) if (parallel && batch > 1)
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<double> h(d * n, 0.0);
    for (std::size_t t = 0; t < steps; ++t) {
      const std::size_t bt = b * steps + t;
      if (mask[bt]) {
        for (std::size_t c = 0; c < d; ++c) {
          const double dt = dv[bt * d + c];
          const double xt = xv[bt * d + c];
          double y = skip[c] * xt;
          for (std::size_t s = 0; s < n; ++s) {
            double& hs = h[c * n + s];
            hs = std::exp(dt * av[c * n + s]) * hs + dt * bv[bt * n + s] * xt;
            y += cv[bt * n + s] * hs;
          }
          out[bt * d + c] = y;
        }
      }
      std::copy(h.begin(), h.end(), states->begin() + static_cast<std::ptrdiff_t>(bt * d * n));
    }
  }

  return make_op_result(
      "ssm_scan", x.shape(), std::move(out), {x, delta, b_in, c_out, a, d_skip},
      [=, mask = mask](TensorNode& self) {
        const double* xv = self.inputs[0]->value.data();
        const double* dv = self.inputs[1]->value.data();
        const double* bv = self.inputs[2]->value.data();
        const double* cv = self.inputs[3]->value.data();
        const double* av = self.inputs[4]->value.data();
        const double* skip = self.inputs[5]->value.data();
        const double* dy = self.grad.data();
        std::vector<double> gx(batch * steps * d, 0.0), gdelta(batch * steps * d, 0.0);
        std::vector<double> gb(batch * steps * n, 0.0), gc(batch * steps * n, 0.0);
        std::vector<double> ga_part(batch * d * n, 0.0), gd_part(batch * d, 0.0);

#pragma omp parallel for schedule(dynamic) if (parallel && batch > 1)
        for (std::size_t b = 0; b < batch; ++b) {
          std::vector<double> gh(d * n, 0.0);
          double* ga = ga_part.data() + b * d * n;
          double* gd = gd_part.data() + b * d;
          for (std::size_t t = steps; t-- > 0;) {
            const std::size_t bt = b * steps + t;
            if (!mask[bt]) continue;
            const double* h = states->data() + bt * d * n;
            const double* hp = t > 0 ? states->data() + (bt - 1) * d * n : nullptr;
            for (std::size_t c = 0; c < d; ++c) {
              const double dyc = dy[bt * d + c];
              const double xt = xv[bt * d + c];
              const double dt = dv[bt * d + c];
              gd[c] += dyc * xt;
              double gxc = dyc * skip[c];
              double gdt = 0.0;
              for (std::size_t s = 0; s < n; ++s) {
                const std::size_t cs = c * n + s;
                gc[bt * n + s] += dyc * h[cs];
                const double g = gh[cs] + dyc * cv[bt * n + s];
                const double decay = std::exp(dt * av[cs]);
                const double hprev = hp ? hp[cs] : 0.0;
                gdt += g * (hprev * decay * av[cs] + bv[bt * n + s] * xt);
                ga[cs] += g * hprev * decay * dt;
                gb[bt * n + s] += g * dt * xt;
                gxc += g * dt * bv[bt * n + s];
                gh[cs] = g * decay;
              }
              gx[bt * d + c] += gxc;
              gdelta[bt * d + c] += gdt;
            }
          }
        }
        auto add_into = [&](std::size_t i, const std::vector<double>& src) {
          if (auto* g = input_grad(self, i))
            for (std::size_t k = 0; k < src.size(); ++k) (*g)[k] += src[k];
        };
        add_into(0, gx);
        add_into(1, gdelta);
        add_into(2, gb);
        add_into(3, gc);
        if (auto* g = input_grad(self, 4))
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t k = 0; k < d * n; ++k) (*g)[k] += ga_part[b * d * n + k];
        if (auto* g = input_grad(self, 5))
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t k = 0; k < d; ++k) (*g)[k] += gd_part[b * d + k];
      });
}

}  // namespace hifdta
