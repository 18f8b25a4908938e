#pragma once

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "cop/binio.hpp"
#include "cop/rng.hpp"

namespace cop {

// Small fully-connected net: affine layers with max(0,x) between them,
// final layer affine. Parameters live in one flat vector (per layer:
// weights row-major [out x in], then biases) so optimizer state and
// finite-difference probes can address any coordinate uniformly.
class Mlp {
 public:
  Mlp() = default;

  explicit Mlp(std::vector<int> dims) : dims_(std::move(dims)) {
    if (dims_.size() < 2) throw std::invalid_argument("Mlp: need >= 2 dims");
    int total = 0;
    for (size_t l = 0; l + 1 < dims_.size(); ++l)
      total += dims_[l] * dims_[l + 1] + dims_[l + 1];
    params_.assign(total, 0.0);
  }

  // scaled-normal init on weights, zero biases
  Mlp(std::vector<int> dims, Rng& rng) : Mlp(std::move(dims)) {
    int off = 0;
    for (size_t l = 0; l + 1 < dims_.size(); ++l) {
      const int in = dims_[l], out = dims_[l + 1];
      const double scale = std::sqrt(2.0 / in);
      for (int i = 0; i < out * in; ++i) params_[off + i] = scale * rng.normal();
      off += out * in + out;
    }
  }

  const std::vector<int>& dims() const { return dims_; }
  int in_dim() const { return dims_.front(); }
  int out_dim() const { return dims_.back(); }
  int param_count() const { return static_cast<int>(params_.size()); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  bool all_finite() const {
    for (double p : params_)
      if (!std::isfinite(p)) return false;
    return true;
  }

  // activations[l] is the input to layer l; activations.back() the output
  struct Trace {
    std::vector<std::vector<double>> activations;
  };

  std::vector<double> forward(const std::vector<double>& x) const {
    Trace t;
    return forward(x, t);
  }

  std::vector<double> forward(const std::vector<double>& x, Trace& t) const {
    if (static_cast<int>(x.size()) != in_dim())
      throw std::invalid_argument("Mlp::forward: input size mismatch");
    t.activations.clear();
    t.activations.push_back(x);
    int off = 0;
    for (size_t l = 0; l + 1 < dims_.size(); ++l) {
      const int in = dims_[l], out = dims_[l + 1];
      const bool last = (l + 2 == dims_.size());
      const std::vector<double>& a = t.activations.back();
      std::vector<double> z(out);
      for (int o = 0; o < out; ++o) {
        double s = params_[off + out * in + o];  // bias
        const double* w = &params_[off + o * in];
        for (int i = 0; i < in; ++i) s += w[i] * a[i];
        z[o] = (!last && s < 0.0) ? 0.0 : s;
      }
      t.activations.push_back(std::move(z));
      off += out * in + out;
    }
    return t.activations.back();
  }

  // Backprop from dL/dy; accumulates into grad (flat, same layout as
  // params) and returns dL/dx. The rectifier mask is recovered from the
  // stored post-activation (z > 0 iff activation > 0).
  std::vector<double> backward(const Trace& t, const std::vector<double>& dy,
                               std::vector<double>& grad) const {
    if (grad.size() != params_.size())
      throw std::invalid_argument("Mlp::backward: grad size mismatch");
    std::vector<double> dz = dy;
    int off = param_count();
    for (size_t l = dims_.size() - 1; l-- > 0;) {
      const int in = dims_[l], out = dims_[l + 1];
      off -= out * in + out;
      const std::vector<double>& a = t.activations[l];
      for (int o = 0; o < out; ++o) {
        grad[off + out * in + o] += dz[o];
        double* gw = &grad[off + o * in];
        for (int i = 0; i < in; ++i) gw[i] += dz[o] * a[i];
      }
      if (l == 0) break;
      std::vector<double> da(in, 0.0);
      for (int o = 0; o < out; ++o) {
        const double* w = &params_[off + o * in];
        for (int i = 0; i < in; ++i) da[i] += dz[o] * w[i];
      }
      for (int i = 0; i < in; ++i)
        if (t.activations[l][i] <= 0.0) da[i] = 0.0;  // rectifier gate
      dz = std::move(da);
    }
    // dL/dx of the first layer (without any gating: the input is raw)
    {
      const int in = dims_[0], out = dims_[1];
      std::vector<double> dx(in, 0.0);
      for (int o = 0; o < out; ++o) {
        const double* w = &params_[o * in];
        for (int i = 0; i < in; ++i) dx[i] += dz[o] * w[i];
      }
      return dx;
    }
  }

  void save(std::ostream& os) const {
    binio::put_u32(os, static_cast<uint32_t>(dims_.size()));
    for (int d : dims_) binio::put_u32(os, static_cast<uint32_t>(d));
    binio::put_u64(os, params_.size());
    for (double p : params_) binio::put_f64(os, p);
  }

  static Mlp load(std::istream& is) {
    uint32_t nd = binio::get_u32(is);
    if (nd < 2 || nd > 64) throw std::runtime_error("Mlp::load: bad rank");
    std::vector<int> dims(nd);
    for (auto& d : dims) {
      d = static_cast<int>(binio::get_u32(is));
      if (d < 1 || d > (1 << 20)) throw std::runtime_error("Mlp::load: bad dim");
    }
    Mlp net(dims);
    uint64_t n = binio::get_u64(is);
    if (n != net.params_.size())
      throw std::runtime_error("Mlp::load: parameter count mismatch");
    for (auto& p : net.params_) p = binio::get_f64(is);
    return net;
  }

 private:
  std::vector<int> dims_;
  std::vector<double> params_;
};

// Bias-corrected adaptive-moment optimizer.
class Adam {
 public:
  explicit Adam(double lr = 2e-4, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  double lr() const { return lr_; }

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    if (m_.empty()) {
      m_.assign(params.size(), 0.0);
      v_.assign(params.size(), 0.0);
    }
    if (params.size() != grad.size() || params.size() != m_.size())
      throw std::invalid_argument("Adam::step: size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      params[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace cop
