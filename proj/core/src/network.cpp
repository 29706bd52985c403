#include "caafp/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace caafp::nn {

namespace {

// Bernoulli keep mask with inverted-dropout scaling baked into the values:
// entries are 0 or 1/(1-rate). Eval mode is handled by the caller (no mask).
std::vector<double> keep_mask(std::size_t n, double rate, std::uint64_t seed) {
  std::vector<double> k(n, 1.0);
  if (rate <= 0.0) return k;
  Rng rng = make_rng(seed);
  const double scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < n; ++i) k[i] = unit_double(rng) < rate ? 0.0 : scale;
  return k;
}

}  // namespace

// Everything the backward pass needs, in forward order. Pool argmax offsets
// are stored instead of recomputing the comparisons.
struct Network::Trace {
  std::vector<double> z1, p1, d1;           // conv1 pre-relu, pooled, dropped
  std::vector<std::uint8_t> arg1;           // offset of the max within each pool window
  std::vector<double> z2, p2, d2;
  std::vector<std::uint8_t> arg2;
  std::vector<double> zd, hd;               // dense pre-relu, dropped activation
  std::vector<double> logits, probs;
  std::vector<double> k1, k2, kd;           // dropout keep masks (scaled)
};

Network::Network(const ArchitectureSpec& spec) : layout_(std::make_shared<Layout>(spec)) {}

ParamSet Network::init_params(std::uint64_t seed) const {
  ParamSet p = zeros_like(layout_);
  Rng rng = make_rng(seed_mix({seed, seed_tag::init}));
  const ArchitectureSpec& a = layout_->spec();
  for (const TensorSlot& s : layout_->slots()) {
    if (!s.prunable) continue;  // biases start at zero
    int fan_in;
    if (s.name == "conv1.kernel")
      fan_in = a.kernel_size * a.channels;
    else if (s.name == "conv2.kernel")
      fan_in = a.kernel_size * a.conv_filters;
    else if (s.name == "dense.kernel")
      fan_in = a.flatten_size();
    else
      fan_in = a.dense_units;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < s.size; ++i)
      p.values[s.offset + i] = uniform_double(rng, -limit, limit);
  }
  return p;
}

void Network::check_batch(const ParamSet& params, const Batch& batch) const {
  const ArchitectureSpec& a = layout_->spec();
  if (!params.layout || !(*params.layout == *layout_))
    throw ConfigError("network: params built for a different architecture");
  if (batch.timesteps != a.timesteps || batch.channels != a.channels)
    throw ConfigError("network: batch shape does not match architecture");
  if (batch.x.size() != static_cast<std::size_t>(batch.count) * a.timesteps * a.channels)
    throw ConfigError("network: batch buffer size mismatch");
}

void Network::run_forward(const ParamSet& params, const Batch& batch,
                          const ForwardOptions& opts, Trace& tr) const {
  const ArchitectureSpec& a = layout_->spec();
  const int n = batch.count;
  const int F = a.conv_filters;
  const int K = a.kernel_size;
  const int C = a.channels;
  const int T1 = a.conv1_len(), P1 = a.pool1_len();
  const int T2 = a.conv2_len(), P2 = a.pool2_len();
  const int FL = a.flatten_size();
  const int U = a.dense_units;
  const int NC = a.num_classes;
  const int pool = a.pool_size;

  const double* w1 = params.values.data() + layout_->slot("conv1.kernel").offset;
  const double* b1 = params.values.data() + layout_->slot("conv1.bias").offset;
  const double* w2 = params.values.data() + layout_->slot("conv2.kernel").offset;
  const double* b2 = params.values.data() + layout_->slot("conv2.bias").offset;
  const double* wd = params.values.data() + layout_->slot("dense.kernel").offset;
  const double* bd = params.values.data() + layout_->slot("dense.bias").offset;
  const double* wh = params.values.data() + layout_->slot("head.kernel").offset;
  const double* bh = params.values.data() + layout_->slot("head.bias").offset;

  tr.z1.assign(static_cast<std::size_t>(n) * T1 * F, 0.0);
  tr.p1.assign(static_cast<std::size_t>(n) * P1 * F, 0.0);
  tr.arg1.assign(static_cast<std::size_t>(n) * P1 * F, 0);
  tr.z2.assign(static_cast<std::size_t>(n) * T2 * F, 0.0);
  tr.p2.assign(static_cast<std::size_t>(n) * P2 * F, 0.0);
  tr.arg2.assign(static_cast<std::size_t>(n) * P2 * F, 0);
  tr.zd.assign(static_cast<std::size_t>(n) * U, 0.0);
  tr.hd.assign(static_cast<std::size_t>(n) * U, 0.0);
  tr.logits.assign(static_cast<std::size_t>(n) * NC, 0.0);
  tr.probs.assign(static_cast<std::size_t>(n) * NC, 0.0);

  if (opts.training) {
    tr.k1 = keep_mask(tr.p1.size(), a.dropout_conv1, seed_mix({opts.dropout_seed, 1}));
    tr.k2 = keep_mask(tr.p2.size(), a.dropout_conv2, seed_mix({opts.dropout_seed, 2}));
    tr.kd = keep_mask(tr.zd.size(), a.dropout_dense, seed_mix({opts.dropout_seed, 3}));
  } else {
    tr.k1.assign(tr.p1.size(), 1.0);
    tr.k2.assign(tr.p2.size(), 1.0);
    tr.kd.assign(tr.zd.size(), 1.0);
  }
  tr.d1.assign(tr.p1.size(), 0.0);
  tr.d2.assign(tr.p2.size(), 0.0);

  for (int i = 0; i < n; ++i) {
    // conv block 1
    double* z1 = tr.z1.data() + static_cast<std::size_t>(i) * T1 * F;
    for (int t = 0; t < T1; ++t) {
      double* zrow = z1 + static_cast<std::size_t>(t) * F;
      for (int f = 0; f < F; ++f) zrow[f] = b1[f];
      for (int dt = 0; dt < K; ++dt) {
        for (int ci = 0; ci < C; ++ci) {
          const double xv = batch.at(i, t + dt, ci);
          const double* wrow = w1 + (static_cast<std::size_t>(dt) * C + ci) * F;
          for (int f = 0; f < F; ++f) zrow[f] += xv * wrow[f];
        }
      }
    }
    double* p1v = tr.p1.data() + static_cast<std::size_t>(i) * P1 * F;
    std::uint8_t* a1v = tr.arg1.data() + static_cast<std::size_t>(i) * P1 * F;
    for (int t = 0; t < P1; ++t) {
      for (int f = 0; f < F; ++f) {
        double best = -1.0;  // relu output is >= 0, so -1 loses to any window
        std::uint8_t arg = 0;
        for (int o = 0; o < pool; ++o) {
          const double v = std::max(0.0, z1[(static_cast<std::size_t>(t * pool + o)) * F + f]);
          if (v > best) {
            best = v;
            arg = static_cast<std::uint8_t>(o);
          }
        }
        p1v[static_cast<std::size_t>(t) * F + f] = best;
        a1v[static_cast<std::size_t>(t) * F + f] = arg;
      }
    }
    double* d1 = tr.d1.data() + static_cast<std::size_t>(i) * P1 * F;
    const double* k1 = tr.k1.data() + static_cast<std::size_t>(i) * P1 * F;
    for (int j = 0; j < P1 * F; ++j) d1[j] = p1v[j] * k1[j];

    // conv block 2
    double* z2 = tr.z2.data() + static_cast<std::size_t>(i) * T2 * F;
    for (int t = 0; t < T2; ++t) {
      double* zrow = z2 + static_cast<std::size_t>(t) * F;
      for (int f = 0; f < F; ++f) zrow[f] = b2[f];
      for (int dt = 0; dt < K; ++dt) {
        const double* drow = d1 + static_cast<std::size_t>(t + dt) * F;
        for (int fi = 0; fi < F; ++fi) {
          const double xv = drow[fi];
          if (xv == 0.0) continue;
          const double* wrow = w2 + (static_cast<std::size_t>(dt) * F + fi) * F;
          for (int f = 0; f < F; ++f) zrow[f] += xv * wrow[f];
        }
      }
    }
    double* p2v = tr.p2.data() + static_cast<std::size_t>(i) * P2 * F;
    std::uint8_t* a2v = tr.arg2.data() + static_cast<std::size_t>(i) * P2 * F;
    for (int t = 0; t < P2; ++t) {
      for (int f = 0; f < F; ++f) {
        double best = -1.0;
        std::uint8_t arg = 0;
        for (int o = 0; o < pool; ++o) {
          const double v = std::max(0.0, z2[(static_cast<std::size_t>(t * pool + o)) * F + f]);
          if (v > best) {
            best = v;
            arg = static_cast<std::uint8_t>(o);
          }
        }
        p2v[static_cast<std::size_t>(t) * F + f] = best;
        a2v[static_cast<std::size_t>(t) * F + f] = arg;
      }
    }
    double* d2 = tr.d2.data() + static_cast<std::size_t>(i) * P2 * F;
    const double* k2 = tr.k2.data() + static_cast<std::size_t>(i) * P2 * F;
    for (int j = 0; j < P2 * F; ++j) d2[j] = p2v[j] * k2[j];

    // dense + head; d2 doubles as the flattened vector
    double* zd = tr.zd.data() + static_cast<std::size_t>(i) * U;
    for (int u = 0; u < U; ++u) zd[u] = bd[u];
    for (int j = 0; j < FL; ++j) {
      const double xv = d2[j];
      if (xv == 0.0) continue;
      const double* wrow = wd + static_cast<std::size_t>(j) * U;
      for (int u = 0; u < U; ++u) zd[u] += xv * wrow[u];
    }
    double* hd = tr.hd.data() + static_cast<std::size_t>(i) * U;
    const double* kd = tr.kd.data() + static_cast<std::size_t>(i) * U;
    for (int u = 0; u < U; ++u) hd[u] = std::max(0.0, zd[u]) * kd[u];

    double* lg = tr.logits.data() + static_cast<std::size_t>(i) * NC;
    for (int c = 0; c < NC; ++c) lg[c] = bh[c];
    for (int u = 0; u < U; ++u) {
      const double hv = hd[u];
      if (hv == 0.0) continue;
      const double* wrow = wh + static_cast<std::size_t>(u) * NC;
      for (int c = 0; c < NC; ++c) lg[c] += hv * wrow[c];
    }

    double* pr = tr.probs.data() + static_cast<std::size_t>(i) * NC;
    double mx = lg[0];
    for (int c = 1; c < NC; ++c) mx = std::max(mx, lg[c]);
    double sum = 0.0;
    for (int c = 0; c < NC; ++c) {
      pr[c] = std::exp(lg[c] - mx);
      sum += pr[c];
    }
    for (int c = 0; c < NC; ++c) pr[c] /= sum;
  }
}

std::vector<double> Network::forward(const ParamSet& params, const Batch& batch,
                                     const ForwardOptions& opts) const {
  check_batch(params, batch);
  if (batch.count == 0) return {};
  Trace tr;
  run_forward(params, batch, opts, tr);
  return std::move(tr.probs);
}

LossResult Network::loss_and_grad(const ParamSet& params, const Batch& batch,
                                  std::span<const int> labels, const ParamSet* reference,
                                  double lambda, const ForwardOptions& opts) const {
  check_batch(params, batch);
  if (lambda < 0.0) throw ConfigError("loss_and_grad: negative lambda");
  if (lambda > 0.0 && reference == nullptr)
    throw ConfigError("loss_and_grad: lambda > 0 requires reference params");
  if (labels.size() != static_cast<std::size_t>(batch.count))
    throw ConfigError("loss_and_grad: label count does not match batch");
  if (batch.count == 0) throw DataError("loss_and_grad: empty batch");

  const ArchitectureSpec& a = layout_->spec();
  const int NC = a.num_classes;
  for (int y : labels)
    if (y < 0 || y >= NC) throw DataError("loss_and_grad: label out of range");

  Trace tr;
  run_forward(params, batch, opts, tr);

  const int n = batch.count;
  const int F = a.conv_filters;
  const int K = a.kernel_size;
  const int C = a.channels;
  const int T1 = a.conv1_len(), P1 = a.pool1_len();
  const int T2 = a.conv2_len(), P2 = a.pool2_len();
  const int FL = a.flatten_size();
  const int U = a.dense_units;
  const int pool = a.pool_size;

  LossResult out;
  out.grads.assign(layout_->total_size(), 0.0);

  const double* w2 = params.values.data() + layout_->slot("conv2.kernel").offset;
  const double* wd = params.values.data() + layout_->slot("dense.kernel").offset;
  const double* wh = params.values.data() + layout_->slot("head.kernel").offset;
  double* gw1 = out.grads.data() + layout_->slot("conv1.kernel").offset;
  double* gb1 = out.grads.data() + layout_->slot("conv1.bias").offset;
  double* gw2 = out.grads.data() + layout_->slot("conv2.kernel").offset;
  double* gb2 = out.grads.data() + layout_->slot("conv2.bias").offset;
  double* gwd = out.grads.data() + layout_->slot("dense.kernel").offset;
  double* gbd = out.grads.data() + layout_->slot("dense.bias").offset;
  double* gwh = out.grads.data() + layout_->slot("head.kernel").offset;
  double* gbh = out.grads.data() + layout_->slot("head.bias").offset;

  const double inv_n = 1.0 / static_cast<double>(n);

  std::vector<double> dlg(NC), dhd(U), dzd(U), dflat(FL), dp2(P2 * F), dz2(T2 * F),
      dd1(P1 * F), dz1(T1 * F);

  for (int i = 0; i < n; ++i) {
    const double* pr = tr.probs.data() + static_cast<std::size_t>(i) * NC;
    out.loss -= std::log(std::max(pr[labels[i]], 1e-300)) * inv_n;

    for (int c = 0; c < NC; ++c) dlg[c] = (pr[c] - (c == labels[i] ? 1.0 : 0.0)) * inv_n;

    const double* hd = tr.hd.data() + static_cast<std::size_t>(i) * U;
    for (int c = 0; c < NC; ++c) gbh[c] += dlg[c];
    for (int u = 0; u < U; ++u) {
      const double* wrow = wh + static_cast<std::size_t>(u) * NC;
      double acc = 0.0;
      for (int c = 0; c < NC; ++c) {
        gwh[static_cast<std::size_t>(u) * NC + c] += hd[u] * dlg[c];
        acc += wrow[c] * dlg[c];
      }
      dhd[u] = acc;
    }

    const double* zd = tr.zd.data() + static_cast<std::size_t>(i) * U;
    const double* kd = tr.kd.data() + static_cast<std::size_t>(i) * U;
    for (int u = 0; u < U; ++u) dzd[u] = zd[u] > 0.0 ? dhd[u] * kd[u] : 0.0;

    const double* d2 = tr.d2.data() + static_cast<std::size_t>(i) * P2 * F;
    for (int u = 0; u < U; ++u) gbd[u] += dzd[u];
    for (int j = 0; j < FL; ++j) {
      const double* wrow = wd + static_cast<std::size_t>(j) * U;
      double acc = 0.0;
      const double xv = d2[j];
      double* grow = gwd + static_cast<std::size_t>(j) * U;
      for (int u = 0; u < U; ++u) {
        grow[u] += xv * dzd[u];
        acc += wrow[u] * dzd[u];
      }
      dflat[j] = acc;
    }

    // back through dropout2 + pool2 + relu2
    const double* k2 = tr.k2.data() + static_cast<std::size_t>(i) * P2 * F;
    for (int j = 0; j < P2 * F; ++j) dp2[j] = dflat[j] * k2[j];
    std::fill(dz2.begin(), dz2.end(), 0.0);
    const double* z2 = tr.z2.data() + static_cast<std::size_t>(i) * T2 * F;
    const std::uint8_t* a2v = tr.arg2.data() + static_cast<std::size_t>(i) * P2 * F;
    for (int t = 0; t < P2; ++t) {
      for (int f = 0; f < F; ++f) {
        const int src = (t * pool + a2v[static_cast<std::size_t>(t) * F + f]) * F + f;
        if (z2[src] > 0.0) dz2[src] += dp2[static_cast<std::size_t>(t) * F + f];
      }
    }

    // conv2 params + input gradient
    const double* d1 = tr.d1.data() + static_cast<std::size_t>(i) * P1 * F;
    std::fill(dd1.begin(), dd1.end(), 0.0);
    for (int t = 0; t < T2; ++t) {
      const double* dzrow = dz2.data() + static_cast<std::size_t>(t) * F;
      for (int f = 0; f < F; ++f) gb2[f] += dzrow[f];
      for (int dt = 0; dt < K; ++dt) {
        const double* drow = d1 + static_cast<std::size_t>(t + dt) * F;
        double* ddrow = dd1.data() + static_cast<std::size_t>(t + dt) * F;
        for (int fi = 0; fi < F; ++fi) {
          const double xv = drow[fi];
          const double* wrow = w2 + (static_cast<std::size_t>(dt) * F + fi) * F;
          double* grow = gw2 + (static_cast<std::size_t>(dt) * F + fi) * F;
          double acc = 0.0;
          for (int f = 0; f < F; ++f) {
            grow[f] += xv * dzrow[f];
            acc += wrow[f] * dzrow[f];
          }
          ddrow[fi] += acc;
        }
      }
    }

    // back through dropout1 + pool1 + relu1
    const double* k1 = tr.k1.data() + static_cast<std::size_t>(i) * P1 * F;
    std::fill(dz1.begin(), dz1.end(), 0.0);
    const double* z1 = tr.z1.data() + static_cast<std::size_t>(i) * T1 * F;
    const std::uint8_t* a1v = tr.arg1.data() + static_cast<std::size_t>(i) * P1 * F;
    for (int t = 0; t < P1; ++t) {
      for (int f = 0; f < F; ++f) {
        const double g = dd1[static_cast<std::size_t>(t) * F + f] * k1[static_cast<std::size_t>(t) * F + f];
        const int src = (t * pool + a1v[static_cast<std::size_t>(t) * F + f]) * F + f;
        if (z1[src] > 0.0) dz1[src] += g;
      }
    }

    for (int t = 0; t < T1; ++t) {
      const double* dzrow = dz1.data() + static_cast<std::size_t>(t) * F;
      for (int f = 0; f < F; ++f) gb1[f] += dzrow[f];
      for (int dt = 0; dt < K; ++dt) {
        for (int ci = 0; ci < C; ++ci) {
          const double xv = batch.at(i, t + dt, ci);
          double* grow = gw1 + (static_cast<std::size_t>(dt) * C + ci) * F;
          for (int f = 0; f < F; ++f) grow[f] += xv * dzrow[f];
        }
      }
    }
  }

  if (lambda > 0.0) {
    if (reference->values.size() != params.values.size())
      throw ConfigError("loss_and_grad: reference size mismatch");
    double reg = 0.0;
    for (std::size_t j = 0; j < params.values.size(); ++j) {
      const double d = params.values[j] - reference->values[j];
      reg += d * d;
      out.grads[j] += lambda * d;
    }
    out.loss += 0.5 * lambda * reg;
  }

  return out;
}

double Network::evaluate(const ParamSet& params, const Batch& batch,
                         std::span<const int> labels) const {
  if (batch.count == 0) throw DataError("evaluate: empty batch");
  if (labels.size() != static_cast<std::size_t>(batch.count))
    throw ConfigError("evaluate: label count does not match batch");
  const std::vector<double> probs = forward(params, batch, {});
  const int NC = layout_->spec().num_classes;
  int correct = 0;
  for (int i = 0; i < batch.count; ++i) {
    const double* pr = probs.data() + static_cast<std::size_t>(i) * NC;
    int best = 0;
    for (int c = 1; c < NC; ++c)
      if (pr[c] > pr[best]) best = c;
    correct += best == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(batch.count);
}

}  // namespace caafp::nn
