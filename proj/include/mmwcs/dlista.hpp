// SPDX-License-Identifier: Apache-2.0
#pragma once

// Unrolled ISTA with per-layer step, threshold and dictionary, trained end to
// end on the NMSE objective.
//
// Layer k (z_0 = 0):
//   r = y - Phi Psi_k z_k
//   z_{k+1} = eta_{theta_k}(z_k + gamma_k (Phi Psi_k)^H r)
// and the output is h_hat = Psi_K z_K.
//
// Gradients of the real loss with respect to a complex parameter W are
// reported as dL/dRe(W) + i dL/dIm(W), which is what a finite difference on
// the real and imaginary parts measures and what Adam consumes componentwise.

#include "mmwcs/measurement.hpp"
#include "mmwcs/operators.hpp"
#include "mmwcs/pursuit.hpp"
#include "mmwcs/recovery.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <vector>

namespace mmwcs {

inline double softplus(double x) {
  return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
inline double softplus_inverse(double y) {
  require(y >= 0.0, "softplus_inverse: value must be >= 0");
  return y > 30.0 ? y + std::log(-std::expm1(-y)) : std::log(std::expm1(y));
}
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct DlistaParams {
  std::vector<double> gamma;      // per layer
  std::vector<double> theta_raw;  // per layer, theta = softplus(theta_raw)
  std::vector<CMat> psi;          // K matrices, or a single one when shared
  CMat psi_final;
  bool shared = false;

  int layers() const { return int(gamma.size()); }
  const CMat& layer_psi(int k) const { return shared ? psi.front() : psi[std::size_t(k)]; }
  double theta(int k) const { return softplus(theta_raw[std::size_t(k)]); }
  Index channel_dim() const { return psi_final.rows(); }
  Index atoms() const { return psi_final.cols(); }

  /// Every layer starts from `dict`, with the same step and threshold.
  static DlistaParams from_dictionary(const CMat& dict, int layers, double gamma, double theta,
                                      bool shared) {
    require(layers >= 1, "dlista: need at least one layer");
    DlistaParams p;
    p.gamma.assign(std::size_t(layers), gamma);
    p.theta_raw.assign(std::size_t(layers), softplus_inverse(theta));
    p.psi.assign(shared ? 1 : std::size_t(layers), dict);
    p.psi_final = dict;
    p.shared = shared;
    return p;
  }

  void validate() const {
    require(!gamma.empty() && gamma.size() == theta_raw.size(), "dlista: layer count mismatch");
    require(psi.size() == (shared ? 1 : gamma.size()), "dlista: psi count mismatch");
    for (const auto& m : psi)
      require_dims(m.rows() == psi_final.rows() && m.cols() == psi_final.cols(),
                   "dlista: psi shapes differ");
  }
};

/// Forward pass for one sample. `z_trace`, if given, receives z_0 .. z_K.
inline CVec dlista_forward(const CVec& y, const SensingMatrix& phi, const DlistaParams& p,
                           std::vector<CVec>* z_trace = nullptr) {
  p.validate();
  require_dims(y.size() == phi.rows() && phi.cols() == p.channel_dim(), "dlista: dimension mismatch");
  CVec z = CVec::Zero(p.atoms());
  if (z_trace) z_trace->push_back(z);
  for (int k = 0; k < p.layers(); ++k) {
    const CMat& psi = p.layer_psi(k);
    const CVec r = y - phi.apply(psi * z);
    const CVec g = p.gamma[std::size_t(k)] * (psi.adjoint() * phi.apply_adjoint(r));
    z = soft_threshold(z + g, p.theta(k));
    if (z_trace) z_trace->push_back(z);
  }
  return p.psi_final * z;
}

/// Normalizes by ||y||, runs the network, and undoes the scaling.
inline CVec dlista_estimate(const CVec& y, const SensingMatrix& phi, const DlistaParams& p) {
  const double n = y.norm();
  if (n == 0.0) return CVec::Zero(p.channel_dim());
  return n * dlista_forward(y / n, phi, p);
}

struct DlistaGradients {
  std::vector<double> gamma;
  std::vector<double> theta_raw;
  std::vector<CMat> psi;
  CMat psi_final;
  double loss = 0.0;     // scaled NMSE in dB over the valid samples
  int valid_samples = 0;

  static DlistaGradients zeros_like(const DlistaParams& p) {
    DlistaGradients g;
    g.gamma.assign(p.gamma.size(), 0.0);
    g.theta_raw.assign(p.theta_raw.size(), 0.0);
    for (const auto& m : p.psi) g.psi.push_back(CMat::Zero(m.rows(), m.cols()));
    g.psi_final = CMat::Zero(p.psi_final.rows(), p.psi_final.cols());
    return g;
  }
};

namespace detail {

struct BatchForward {
  std::vector<CMat> z;  // z_0 .. z_K, each atoms x B
  std::vector<CMat> u;  // pre-threshold, per layer
  std::vector<CMat> q;  // Phi^H r, per layer
  std::vector<CMat> p;  // Psi_k^H q, per layer
  CMat h_hat;
};

inline BatchForward batch_forward(std::span<const Sample> batch, const DlistaParams& prm) {
  const Index b_count = Index(batch.size());
  const Index n = prm.channel_dim();
  BatchForward f;
  f.z.push_back(CMat::Zero(prm.atoms(), b_count));
  for (int k = 0; k < prm.layers(); ++k) {
    const CMat& psi = prm.layer_psi(k);
    const CMat s = psi * f.z.back();
    CMat q(n, b_count);
    for (Index b = 0; b < b_count; ++b) {
      const Sample& smp = batch[std::size_t(b)];
      const CVec r = smp.y - smp.phi.apply(s.col(b));
      q.col(b) = smp.phi.apply_adjoint(r);
    }
    CMat pk = psi.adjoint() * q;
    CMat u = f.z.back() + prm.gamma[std::size_t(k)] * pk;
    const double theta = prm.theta(k);
    CMat z(u.rows(), u.cols());
    for (Index j = 0; j < u.cols(); ++j)
      for (Index i = 0; i < u.rows(); ++i) z(i, j) = soft_threshold(u(i, j), theta);
    f.q.push_back(std::move(q));
    f.p.push_back(std::move(pk));
    f.u.push_back(std::move(u));
    f.z.push_back(std::move(z));
  }
  f.h_hat = prm.psi_final * f.z.back();
  return f;
}

}  // namespace detail

/// Loss 10 log10(mean_i ||h_i - h_hat_i||^2 / ||h_i||^2), times `loss_scale`,
/// and its gradients. Samples with an all-zero target are skipped; a batch
/// without valid samples yields zero loss and zero gradients. At the
/// soft-threshold kink (|u| == theta) the zero subgradient is used.
inline DlistaGradients dlista_gradients(std::span<const Sample> batch, const DlistaParams& prm,
                                        double loss_scale = 1.0) {
  prm.validate();
  require(!batch.empty(), "dlista_gradients: empty batch");
  DlistaGradients g = DlistaGradients::zeros_like(prm);
  const detail::BatchForward f = detail::batch_forward(batch, prm);
  const Index b_count = Index(batch.size());
  const Index n = prm.channel_dim();

  std::vector<double> denom(batch.size(), 0.0);
  double mu = 0.0;
  for (Index b = 0; b < b_count; ++b) {
    denom[std::size_t(b)] = batch[std::size_t(b)].h.squaredNorm();
    if (denom[std::size_t(b)] > 0.0) {
      mu += (batch[std::size_t(b)].h - f.h_hat.col(b)).squaredNorm() / denom[std::size_t(b)];
      ++g.valid_samples;
    }
  }
  if (g.valid_samples == 0) return g;
  mu /= g.valid_samples;
  g.loss = loss_scale * lin2db(mu);
  if (!std::isfinite(g.loss)) {
    std::ostringstream msg;
    msg << "dlista: non-finite loss (mu=" << mu << ", batch=" << batch.size()
        << ", valid=" << g.valid_samples << ")";
    throw std::runtime_error(msg.str());
  }

  // dL/dh_hat
  const double c = loss_scale * (10.0 / std::log(10.0)) / (mu * g.valid_samples);
  CMat h_bar = CMat::Zero(n, b_count);
  for (Index b = 0; b < b_count; ++b)
    if (denom[std::size_t(b)] > 0.0)
      h_bar.col(b) = (2.0 * c / denom[std::size_t(b)]) * (f.h_hat.col(b) - batch[std::size_t(b)].h);

  g.psi_final = h_bar * f.z.back().adjoint();
  CMat z_bar = prm.psi_final.adjoint() * h_bar;

  for (int k = prm.layers() - 1; k >= 0; --k) {
    const std::size_t ks = std::size_t(k);
    const CMat& psi = prm.layer_psi(k);
    CMat& psi_grad = prm.shared ? g.psi.front() : g.psi[ks];
    const double theta = prm.theta(k);
    const CMat& u = f.u[ks];

    CMat u_bar = CMat::Zero(u.rows(), u.cols());
    double theta_bar = 0.0;
    for (Index j = 0; j < u.cols(); ++j) {
      for (Index i = 0; i < u.rows(); ++i) {
        const double mag = std::abs(u(i, j));
        if (mag <= theta) continue;
        const cdouble e = u(i, j) / mag;
        const cdouble zb = z_bar(i, j);
        const double radial = std::real(zb * std::conj(e));
        u_bar(i, j) = radial * e + (1.0 - theta / mag) * (zb - radial * e);
        theta_bar -= radial;
      }
    }
    g.theta_raw[ks] = theta_bar * sigmoid(prm.theta_raw[ks]);

    // u = z + gamma p, p = Psi^H q
    g.gamma[ks] = (u_bar.conjugate().cwiseProduct(f.p[ks])).real().sum();
    const CMat p_bar = prm.gamma[ks] * u_bar;
    const CMat q_bar = psi * p_bar;
    psi_grad.noalias() += f.q[ks] * p_bar.adjoint();

    // q = Phi^H (y - Phi Psi z)
    CMat s_bar(n, b_count);
    for (Index b = 0; b < b_count; ++b) {
      const SensingMatrix& phi = batch[std::size_t(b)].phi;
      s_bar.col(b) = -phi.apply_adjoint(phi.apply(q_bar.col(b)));
    }
    psi_grad.noalias() += s_bar * f.z[ks].adjoint();
    z_bar = u_bar + psi.adjoint() * s_bar;
  }
  return g;
}

/// NMSE (dB, batch mean) of the network over a sample set.
inline double dlista_nmse_db(std::span<const Sample> data, const DlistaParams& prm) {
  require(!data.empty(), "dlista_nmse_db: empty set");
  const detail::BatchForward f = detail::batch_forward(data, prm);
  double acc = 0.0;
  int valid = 0;
  for (std::size_t b = 0; b < data.size(); ++b) {
    if (data[b].h.squaredNorm() <= 0.0) continue;
    acc += nmse_ratio(data[b].h, f.h_hat.col(Index(b)));
    ++valid;
  }
  return valid ? lin2db(acc / valid) : 0.0;
}

/// 1 / mean_i ||Phi_i D||^2 over the samples: a step that keeps the first layer stable.
inline double default_step(std::span<const Sample> data, const CMat& dict) {
  require(!data.empty(), "default_step: empty set");
  double acc = 0.0;
  for (const auto& s : data) acc += lipschitz_estimate(make_operator(s.phi, dict));
  return double(data.size()) / acc;
}

// ---------------------------------------------------------------------------
// Training

struct AdamConfig {
  double lr_scalar = 1e-2;  // gamma and theta
  double lr_psi = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay_psi = 0.0;  // L2 penalty added to the dictionary gradients
};

struct TrainConfig {
  int epochs = 200;
  int batch_size = 32;
  AdamConfig adam;
  int patience = 20;
  double split_train = 0.75;
  double split_val = 0.08;
  double split_test = 0.17;
  std::uint64_t rng_seed = 1;
  bool freeze_psi = false;

  void validate() const {
    require(epochs >= 0 && batch_size >= 1 && patience >= 1, "train config: bad epochs/batch/patience");
    require(split_train >= 0 && split_val >= 0 && split_test >= 0 &&
                std::abs(split_train + split_val + split_test - 1.0) < 1e-9,
            "train config: split ratios must sum to 1");
    require(adam.lr_scalar >= 0 && adam.lr_psi >= 0 && adam.weight_decay_psi >= 0,
            "train config: negative learning rate or weight decay");
  }
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded shuffle of [0, n) cut by the configured ratios.
inline Split split_indices(std::size_t n, const TrainConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(cfg.rng_seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = std::size_t(std::llround(cfg.split_train * double(n)));
  const auto n_val = std::min(n - std::min(n, n_train), std::size_t(std::llround(cfg.split_val * double(n))));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + std::ptrdiff_t(std::min(n, n_train)));
  s.val.assign(idx.begin() + std::ptrdiff_t(s.train.size()),
               idx.begin() + std::ptrdiff_t(s.train.size() + n_val));
  s.test.assign(idx.begin() + std::ptrdiff_t(s.train.size() + n_val), idx.end());
  return s;
}

struct EpochMetrics {
  int epoch = 0;
  double train_nmse_db = 0.0;
  double val_nmse_db = 0.0;
  double lr_scalar = 0.0;
  double lr_psi = 0.0;
};

struct TrainResult {
  DlistaParams best;
  std::vector<EpochMetrics> history;  // entry 0 is the untrained model
  double initial_val_nmse_db = 0.0;
  double best_val_nmse_db = 0.0;
  int best_epoch = 0;
};

namespace detail {

class Adam {
 public:
  Adam(const AdamConfig& cfg, const DlistaParams& p) : cfg_(cfg) {
    const std::size_t scalars = p.gamma.size() + p.theta_raw.size();
    ms_.assign(scalars, 0.0);
    vs_.assign(scalars, 0.0);
    for (const auto& m : p.psi) add_matrix(m);
    add_matrix(p.psi_final);
  }

  void step(DlistaParams& p, const DlistaGradients& g, bool update_psi) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    std::size_t s = 0;
    for (std::size_t k = 0; k < p.gamma.size(); ++k, ++s)
      update(&p.gamma[k], &g.gamma[k], 1, &ms_[s], &vs_[s], cfg_.lr_scalar, bc1, bc2, 0.0);
    for (std::size_t k = 0; k < p.theta_raw.size(); ++k, ++s)
      update(&p.theta_raw[k], &g.theta_raw[k], 1, &ms_[s], &vs_[s], cfg_.lr_scalar, bc1, bc2, 0.0);
    if (!update_psi) return;
    std::size_t mi = 0;
    for (std::size_t k = 0; k < p.psi.size(); ++k, ++mi) update_matrix(p.psi[k], g.psi[k], mi, bc1, bc2);
    update_matrix(p.psi_final, g.psi_final, mi, bc1, bc2);
  }

 private:
  void add_matrix(const CMat& m) {
    mm_.emplace_back(std::size_t(2 * m.size()), 0.0);
    vm_.emplace_back(std::size_t(2 * m.size()), 0.0);
  }

  void update_matrix(CMat& w, const CMat& grad, std::size_t mi, double bc1, double bc2) {
    update(reinterpret_cast<double*>(w.data()), reinterpret_cast<const double*>(grad.data()),
           std::size_t(2 * w.size()), mm_[mi].data(), vm_[mi].data(), cfg_.lr_psi, bc1, bc2,
           cfg_.weight_decay_psi);
  }

  void update(double* w, const double* grad, std::size_t n, double* m, double* v, double lr,
              double bc1, double bc2, double wd) const {
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = grad[i] + wd * w[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
    }
  }

  AdamConfig cfg_;
  int t_ = 0;
  std::vector<double> ms_, vs_;
  std::vector<std::vector<double>> mm_, vm_;
};

}  // namespace detail

/// Mini-batch Adam on the NMSE loss with early stopping on validation NMSE.
/// Keeps the parameters of the best validation epoch.
inline TrainResult train_dlista(std::span<const Sample> train, std::span<const Sample> val,
                                DlistaParams init, const TrainConfig& cfg) {
  cfg.validate();
  init.validate();
  require(!train.empty(), "train_dlista: empty training split");
  require(!val.empty(), "train_dlista: empty validation split");

  TrainResult res;
  DlistaParams cur = std::move(init);
  res.initial_val_nmse_db = dlista_nmse_db(val, cur);
  res.best_val_nmse_db = res.initial_val_nmse_db;
  res.best = cur;
  res.history.push_back({0, dlista_nmse_db(train, cur), res.initial_val_nmse_db, cfg.adam.lr_scalar,
                         cfg.freeze_psi ? 0.0 : cfg.adam.lr_psi});

  detail::Adam adam(cfg.adam, cur);
  Rng rng(cfg.rng_seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Sample> batch;
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + std::size_t(cfg.batch_size));
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(train[order[i]]);
      const DlistaGradients g = dlista_gradients(batch, cur);
      if (g.valid_samples == 0) continue;
      adam.step(cur, g, !cfg.freeze_psi);
    }
    const double val_db = dlista_nmse_db(val, cur);
    res.history.push_back({epoch, dlista_nmse_db(train, cur), val_db, cfg.adam.lr_scalar,
                           cfg.freeze_psi ? 0.0 : cfg.adam.lr_psi});
    if (val_db < res.best_val_nmse_db) {
      res.best_val_nmse_db = val_db;
      res.best = cur;
      res.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return res;
}

}  // namespace mmwcs
