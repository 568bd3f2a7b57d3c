#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "error.hpp"
#include "features.hpp"
#include "freq.hpp"
#include "image.hpp"
#include "rng.hpp"
#include "sfmask.hpp"

namespace bandgauge {

// Two independent conv branches (HFM and LFM), three stride-2 3x3 layers
// each. Global-average-pooled layer-1 and layer-3 features of both branches
// are concatenated and fed through FC(hidden) -> ReLU -> FC(1) -> sigmoid.
struct Architecture {
  int patch_size = 64;
  std::array<int, 3> widths{8, 16, 32};
  int hidden = 128;
  // Fixed input normalisation: HFM rescaled so a step edge of k gray levels
  // reads about k; LFM centred on zero.
  float hfm_gain = static_cast<float>(255.0 / (4.0 + 2.0 * std::numbers::sqrt2));
  float lfm_offset = 0.5f;

  int feature_width() const { return 2 * (widths[0] + widths[2]); }
  bool operator==(const Architecture&) const = default;

  void validate() const {
    require(patch_size >= 8, "patch size must be at least 8");
    for (int w : widths) require(w >= 1, "layer widths must be positive");
    require(hidden >= 1, "hidden width must be positive");
    require(std::isfinite(hfm_gain) && hfm_gain > 0 && std::isfinite(lfm_offset), "invalid input normalisation");
  }
};

struct TensorInfo {
  std::string name;
  std::vector<int> dims;
  std::size_t offset = 0;
  std::size_t size = 0;
};

inline std::vector<TensorInfo> parameter_layout(const Architecture& a) {
  std::vector<TensorInfo> t;
  std::size_t off = 0;
  auto add = [&](std::string name, std::vector<int> dims) {
    std::size_t n = 1;
    for (int d : dims) n *= static_cast<std::size_t>(d);
    t.push_back({std::move(name), std::move(dims), off, n});
    off += n;
  };
  for (const char* br : {"h", "l"}) {
    int in = 1;
    for (int k = 0; k < 3; ++k) {
      const std::string p = std::string(br) + ".conv" + std::to_string(k + 1);
      add(p + ".w", {a.widths[static_cast<std::size_t>(k)], in, 3, 3});
      add(p + ".b", {a.widths[static_cast<std::size_t>(k)]});
      in = a.widths[static_cast<std::size_t>(k)];
    }
  }
  add("head.fc1.w", {a.hidden, a.feature_width()});
  add("head.fc1.b", {a.hidden});
  add("head.fc2.w", {1, a.hidden});
  add("head.fc2.b", {1});
  return t;
}

inline std::size_t parameter_count(const Architecture& a) {
  const auto t = parameter_layout(a);
  return t.back().offset + t.back().size;
}

template <class T>
struct DualNetParams {
  Architecture arch;
  std::vector<T> values;  // all tensors, in parameter_layout order
  std::uint64_t seed = 0;
  std::uint32_t epochs = 0;

  bool operator==(const DualNetParams&) const = default;

  // Tensor indices into parameter_layout: branch b (0 = HFM, 1 = LFM), layer k.
  static std::size_t conv_w(int branch, int k) { return static_cast<std::size_t>(branch * 6 + 2 * k); }
  static std::size_t conv_b(int branch, int k) { return conv_w(branch, k) + 1; }
  static constexpr std::size_t kFc1W = 12, kFc1B = 13, kFc2W = 14, kFc2B = 15;

  void check() const {
    arch.validate();
    require(values.size() == parameter_count(arch), "parameter vector does not match architecture");
    for (T v : values)
      if (!std::isfinite(static_cast<double>(v))) fail_numeric("non-finite network weight");
  }

  template <class U>
  DualNetParams<U> cast() const {
    DualNetParams<U> out;
    out.arch = arch;
    out.seed = seed;
    out.epochs = epochs;
    out.values.assign(values.begin(), values.end());
    return out;
  }
};

// Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases.
template <class T>
DualNetParams<T> init_params(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  DualNetParams<T> p;
  p.arch = arch;
  p.seed = seed;
  p.values.assign(parameter_count(arch), T(0));
  Rng rng(substream(seed, "init"));
  for (const auto& t : parameter_layout(arch)) {
    if (t.dims.size() == 1) continue;
    const std::size_t receptive = t.dims.size() == 4 ? 9 : 1;
    const double fan_out = static_cast<double>(t.dims[0]) * static_cast<double>(receptive);
    const double fan_in = static_cast<double>(t.dims[1]) * static_cast<double>(receptive);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::size_t i = 0; i < t.size; ++i) p.values[t.offset + i] = static_cast<T>(rng.uniform(-limit, limit));
  }
  return p;
}

namespace nn {

inline int conv_out(int n) { return (n - 1) / 2 + 1; }  // 3x3, stride 2, pad 1

// in: [cin][n][n], out: [cout][m][m], m = conv_out(n).
template <class T>
void conv_forward(const T* in, int cin, int n, const T* w, const T* b, int cout, T* out) {
  const int m = conv_out(n);
  for (int oc = 0; oc < cout; ++oc) {
    T* o = out + static_cast<std::size_t>(oc) * m * m;
    std::fill(o, o + static_cast<std::size_t>(m) * m, b[oc]);
    for (int ic = 0; ic < cin; ++ic) {
      const T* src = in + static_cast<std::size_t>(ic) * n * n;
      const T* k = w + (static_cast<std::size_t>(oc) * cin + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const T kv = k[ky * 3 + kx];
          for (int oy = 0; oy < m; ++oy) {
            const int iy = 2 * oy + ky - 1;
            if (iy < 0 || iy >= n) continue;
            const T* row = src + static_cast<std::size_t>(iy) * n;
            T* orow = o + static_cast<std::size_t>(oy) * m;
            for (int ox = 0; ox < m; ++ox) {
              const int ix = 2 * ox + kx - 1;
              if (ix < 0 || ix >= n) continue;
              orow[ox] += kv * row[ix];
            }
          }
        }
      }
    }
  }
}

// Accumulates dW, dB and (if din != nullptr) dIn from dOut.
template <class T>
void conv_backward(const T* in, int cin, int n, const T* w, int cout, const T* dout, T* dw, T* db, T* din) {
  const int m = conv_out(n);
  for (int oc = 0; oc < cout; ++oc) {
    const T* g = dout + static_cast<std::size_t>(oc) * m * m;
    T bsum = 0;
    for (int i = 0; i < m * m; ++i) bsum += g[i];
    db[oc] += bsum;
    for (int ic = 0; ic < cin; ++ic) {
      const T* src = in + static_cast<std::size_t>(ic) * n * n;
      T* dsrc = din ? din + static_cast<std::size_t>(ic) * n * n : nullptr;
      const T* k = w + (static_cast<std::size_t>(oc) * cin + ic) * 9;
      T* dk = dw + (static_cast<std::size_t>(oc) * cin + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const T kv = k[ky * 3 + kx];
          T acc = 0;
          for (int oy = 0; oy < m; ++oy) {
            const int iy = 2 * oy + ky - 1;
            if (iy < 0 || iy >= n) continue;
            const T* row = src + static_cast<std::size_t>(iy) * n;
            const T* grow = g + static_cast<std::size_t>(oy) * m;
            T* drow = dsrc ? dsrc + static_cast<std::size_t>(iy) * n : nullptr;
            for (int ox = 0; ox < m; ++ox) {
              const int ix = 2 * ox + kx - 1;
              if (ix < 0 || ix >= n) continue;
              acc += grow[ox] * row[ix];
              if (drow) drow[ix] += kv * grow[ox];
            }
          }
          dk[ky * 3 + kx] += acc;
        }
      }
    }
  }
}

template <class T>
struct BranchCache {
  std::vector<T> input;
  std::array<std::vector<T>, 3> act;  // post-ReLU outputs
};

template <class T>
struct ForwardCache {
  std::array<BranchCache<T>, 2> branch;
  std::vector<T> features;
  std::vector<T> hidden;  // post-ReLU
  T logit = 0;
};

template <class T>
T sigmoid(T z) {
  return z >= 0 ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
}

// Numerically stable binary cross-entropy on a logit.
template <class T>
T bce_with_logit(T z, T y) {
  return std::max(z, T(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
}

template <class T>
void forward_cached(const DualNetParams<T>& p, std::span<const T> hfm, std::span<const T> lfm, ForwardCache<T>& c) {
  const auto& a = p.arch;
  static thread_local std::vector<TensorInfo> layout_cache;
  static thread_local Architecture layout_arch{0, {0, 0, 0}, 0, 0.0f, 0.0f};
  if (!(layout_arch == a)) layout_cache = parameter_layout(a), layout_arch = a;
  const auto& L = layout_cache;
  const T* v = p.values.data();
  c.features.assign(static_cast<std::size_t>(a.feature_width()), T(0));
  std::size_t fpos = 0;
  for (int br = 0; br < 2; ++br) {
    auto& bc = c.branch[static_cast<std::size_t>(br)];
    const auto src = br == 0 ? hfm : lfm;
    bc.input.resize(src.size());
    const T gain = br == 0 ? T(a.hfm_gain) : T(1), shift = br == 0 ? T(0) : T(a.lfm_offset);
    for (std::size_t i = 0; i < src.size(); ++i) bc.input[i] = gain * src[i] - shift;
    const T* in = bc.input.data();
    int n = a.patch_size, cin = 1;
    for (int k = 0; k < 3; ++k) {
      const int cout = a.widths[static_cast<std::size_t>(k)];
      const int m = conv_out(n);
      auto& out = bc.act[static_cast<std::size_t>(k)];
      out.assign(static_cast<std::size_t>(cout) * m * m, T(0));
      conv_forward(in, cin, n, v + L[DualNetParams<T>::conv_w(br, k)].offset, v + L[DualNetParams<T>::conv_b(br, k)].offset,
                   cout, out.data());
      for (auto& x : out) x = std::max(x, T(0));
      in = out.data();
      n = m;
      cin = cout;
    }
    // GAP of layer 1 then layer 3.
    for (int k : {0, 2}) {
      const auto& act = bc.act[static_cast<std::size_t>(k)];
      const int cout = a.widths[static_cast<std::size_t>(k)];
      const std::size_t area = act.size() / static_cast<std::size_t>(cout);
      for (int ch = 0; ch < cout; ++ch) {
        T s = 0;
        for (std::size_t i = 0; i < area; ++i) s += act[static_cast<std::size_t>(ch) * area + i];
        c.features[fpos++] = s / static_cast<T>(area);
      }
    }
  }
  const int fw = a.feature_width();
  const T* w1 = v + L[DualNetParams<T>::kFc1W].offset;
  const T* b1 = v + L[DualNetParams<T>::kFc1B].offset;
  c.hidden.assign(static_cast<std::size_t>(a.hidden), T(0));
  for (int h = 0; h < a.hidden; ++h) {
    T s = b1[h];
    for (int i = 0; i < fw; ++i) s += w1[static_cast<std::size_t>(h) * fw + i] * c.features[static_cast<std::size_t>(i)];
    c.hidden[static_cast<std::size_t>(h)] = std::max(s, T(0));
  }
  const T* w2 = v + L[DualNetParams<T>::kFc2W].offset;
  T z = v[L[DualNetParams<T>::kFc2B].offset];
  for (int h = 0; h < a.hidden; ++h) z += w2[h] * c.hidden[static_cast<std::size_t>(h)];
  c.logit = z;
}

// Adds dLoss/dParams for one sample (BCE on the sigmoid output) into grad; returns the loss.
template <class T>
T backward(const DualNetParams<T>& p, const ForwardCache<T>& c, T label, std::vector<T>& grad) {
  const auto& a = p.arch;
  const auto L = parameter_layout(a);
  const T* v = p.values.data();
  T* g = grad.data();
  const T loss = bce_with_logit(c.logit, label);
  const T dz = sigmoid(c.logit) - label;

  const int fw = a.feature_width();
  const T* w1 = v + L[DualNetParams<T>::kFc1W].offset;
  const T* w2 = v + L[DualNetParams<T>::kFc2W].offset;
  g[L[DualNetParams<T>::kFc2B].offset] += dz;
  std::vector<T> dhidden(static_cast<std::size_t>(a.hidden));
  for (int h = 0; h < a.hidden; ++h) {
    g[L[DualNetParams<T>::kFc2W].offset + static_cast<std::size_t>(h)] += dz * c.hidden[static_cast<std::size_t>(h)];
    dhidden[static_cast<std::size_t>(h)] = c.hidden[static_cast<std::size_t>(h)] > 0 ? dz * w2[h] : T(0);
  }
  std::vector<T> dfeat(static_cast<std::size_t>(fw), T(0));
  T* gw1 = g + L[DualNetParams<T>::kFc1W].offset;
  T* gb1 = g + L[DualNetParams<T>::kFc1B].offset;
  for (int h = 0; h < a.hidden; ++h) {
    const T d = dhidden[static_cast<std::size_t>(h)];
    if (d == T(0)) continue;
    gb1[h] += d;
    for (int i = 0; i < fw; ++i) {
      gw1[static_cast<std::size_t>(h) * fw + i] += d * c.features[static_cast<std::size_t>(i)];
      dfeat[static_cast<std::size_t>(i)] += d * w1[static_cast<std::size_t>(h) * fw + i];
    }
  }

  std::size_t fpos = 0;
  for (int br = 0; br < 2; ++br) {
    const auto& bc = c.branch[static_cast<std::size_t>(br)];
    std::array<std::vector<T>, 3> dact;
    for (int k = 0; k < 3; ++k) dact[static_cast<std::size_t>(k)].assign(bc.act[static_cast<std::size_t>(k)].size(), T(0));
    for (int k : {0, 2}) {
      const int cout = a.widths[static_cast<std::size_t>(k)];
      auto& d = dact[static_cast<std::size_t>(k)];
      const std::size_t area = d.size() / static_cast<std::size_t>(cout);
      for (int ch = 0; ch < cout; ++ch) {
        const T share = dfeat[fpos++] / static_cast<T>(area);
        for (std::size_t i = 0; i < area; ++i) d[static_cast<std::size_t>(ch) * area + i] += share;
      }
    }
    std::array<int, 4> sizes{a.patch_size, 0, 0, 0};
    for (int k = 0; k < 3; ++k) sizes[static_cast<std::size_t>(k) + 1] = conv_out(sizes[static_cast<std::size_t>(k)]);
    for (int k = 2; k >= 0; --k) {
      auto& d = dact[static_cast<std::size_t>(k)];
      const auto& act = bc.act[static_cast<std::size_t>(k)];
      for (std::size_t i = 0; i < d.size(); ++i)
        if (!(act[i] > 0)) d[i] = 0;
      const int cin = k == 0 ? 1 : a.widths[static_cast<std::size_t>(k) - 1];
      const T* in = k == 0 ? bc.input.data() : bc.act[static_cast<std::size_t>(k) - 1].data();
      T* din = k == 0 ? nullptr : dact[static_cast<std::size_t>(k) - 1].data();
      conv_backward(in, cin, sizes[static_cast<std::size_t>(k)], v + L[DualNetParams<T>::conv_w(br, k)].offset,
                    a.widths[static_cast<std::size_t>(k)], d.data(), g + L[DualNetParams<T>::conv_w(br, k)].offset,
                    g + L[DualNetParams<T>::conv_b(br, k)].offset, din);
    }
  }
  return loss;
}

}  // namespace nn

template <class T>
T forward_logit(const DualNetParams<T>& params, std::span<const T> hfm, std::span<const T> lfm) {
  const auto n = static_cast<std::size_t>(params.arch.patch_size);
  require(hfm.size() == n * n && lfm.size() == n * n, "forward: input size does not match the model patch size");
  nn::ForwardCache<T> cache;
  nn::forward_cached(params, hfm, lfm, cache);
  return cache.logit;
}

// Banded probability for one patch.
template <class T>
T forward(const DualNetParams<T>& params, std::span<const T> hfm, std::span<const T> lfm) {
  return nn::sigmoid(forward_logit(params, hfm, lfm));
}

namespace detail {
template <class T>
std::vector<T> as_scalar(const PlaneF& p) {
  return std::vector<T>(p.data.begin(), p.data.end());
}
}  // namespace detail

template <class T>
T forward(const DualNetParams<T>& params, const HighFreqMap& hfm, const LowFreqMap& lfm) {
  require(hfm.width == params.arch.patch_size && hfm.height == params.arch.patch_size && lfm.width == hfm.width &&
              lfm.height == hfm.height,
          "forward: map dimensions do not match the model patch size");
  if constexpr (std::is_same_v<T, float>) {
    return forward<T>(params, std::span<const float>(hfm.data), std::span<const float>(lfm.data));
  } else {
    const auto h = detail::as_scalar<T>(hfm), l = detail::as_scalar<T>(lfm);
    return forward<T>(params, std::span<const T>(h), std::span<const T>(l));
  }
}

template <class T>
T forward_logit(const DualNetParams<T>& params, const HighFreqMap& hfm, const LowFreqMap& lfm) {
  if constexpr (std::is_same_v<T, float>) {
    return forward_logit<T>(params, std::span<const float>(hfm.data), std::span<const float>(lfm.data));
  } else {
    const auto h = detail::as_scalar<T>(hfm), l = detail::as_scalar<T>(lfm);
    return forward_logit<T>(params, std::span<const T>(h), std::span<const T>(l));
  }
}

template <class T>
std::vector<T> forward_batch(const DualNetParams<T>& params, std::span<const PatchSample> batch) {
  std::vector<T> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(forward(params, s.hfm, s.lfm));
  return out;
}

// p > 0.5 is banded; a tie goes to non_banded.
inline PatchLabel label_from_probability(double p) {
  return {p > 0.5 ? Label::banded : Label::non_banded, std::max(p, 1.0 - p)};
}

template <class T>
PatchLabel predict(const DualNetParams<T>& params, const PlaneF& luma_patch, const FreqConfig& freq = {}) {
  require(luma_patch.width == params.arch.patch_size && luma_patch.height == params.arch.patch_size,
          "predict: patch size does not match the model");
  const auto s = frequency_pair(luma_patch, freq);
  return label_from_probability(static_cast<double>(forward(params, s.hfm, s.lfm)));
}

// ---------------------------------------------------------------------------
// Training.

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  int epochs = 25;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double split_train = 0.8;
  double split_val = 0.1;
  double split_test = 0.1;
  unsigned threads = 1;
  Architecture arch;

  void validate() const {
    require(epochs >= 1, "epochs must be at least 1");
    require(batch_size >= 1, "batch size must be at least 1");
    require(learning_rate > 0, "learning rate must be positive");
    require(split_train >= 0 && split_val >= 0 && split_test >= 0 &&
                std::abs(split_train + split_val + split_test - 1.0) < 1e-9,
            "split fractions must sum to 1");
  }
};

struct EpochReport {
  int epoch = 0;
  double train_loss = 0;
  double train_acc = 0;
  double val_loss = 0;
  double val_acc = 0;
};

struct TrainResult {
  DualNetParams<float> params;
  std::vector<EpochReport> history;
  int best_epoch = 0;
};

struct EvalStats {
  double loss = 0;
  double accuracy = 0;
};

template <class T>
EvalStats evaluate(const DualNetParams<T>& params, std::span<const PatchSample> set) {
  if (set.empty()) return {};
  double loss = 0;
  std::size_t ok = 0;
  for (const auto& s : set) {
    const double z = static_cast<double>(forward_logit(params, s.hfm, s.lfm));
    const double y = s.label.banded() ? 1.0 : 0.0;
    loss += nn::bce_with_logit(z, y);
    ok += static_cast<std::size_t>(label_from_probability(nn::sigmoid(z)).value == s.label.value);
  }
  return {loss / static_cast<double>(set.size()), static_cast<double>(ok) / static_cast<double>(set.size())};
}

namespace detail {

inline void check_training_set(std::span<const PatchSample> set, int patch_size) {
  require(!set.empty(), "training set is empty");
  bool pos = false, neg = false;
  for (const auto& s : set) {
    require(s.hfm.width == patch_size && s.hfm.height == patch_size && s.lfm.width == patch_size &&
                s.lfm.height == patch_size,
            "training sample size does not match the configured patch size");
    (s.label.banded() ? pos : neg) = true;
  }
  require(pos && neg, "training set must contain both banded and non-banded samples");
}

}  // namespace detail

// Mini-batch Adam on binary cross-entropy. Per-sample gradients are computed
// (optionally on several threads) into separate buffers and summed in sample
// order, so the result is identical for any thread count. Returns the
// parameters of the epoch with the best validation accuracy (earliest on ties).
inline TrainResult train(std::span<const PatchSample> train_set, std::span<const PatchSample> val_set,
                         const TrainConfig& cfg, const std::function<void(const EpochReport&)>& on_epoch = {}) {
  cfg.validate();
  detail::check_training_set(train_set, cfg.arch.patch_size);
  auto params = init_params<float>(cfg.arch, cfg.seed);
  const std::size_t np = params.values.size();
  std::vector<double> m(np, 0.0), v(np, 0.0);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(substream(cfg.seed, "train"));

  const unsigned threads = std::max(1u, cfg.threads);
  std::vector<std::vector<float>> sample_grads(cfg.batch_size, std::vector<float>(np));
  std::vector<double> sample_loss(cfg.batch_size);
  std::vector<int> sample_ok(cfg.batch_size);
  std::vector<double> grad(np);

  TrainResult result;
  double best_acc = -1;
  std::uint64_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0;
    std::size_t ok_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t bs = std::min(cfg.batch_size, order.size() - start);
      auto work = [&](std::size_t first, std::size_t stride) {
        nn::ForwardCache<float> cache;
        for (std::size_t i = first; i < bs; i += stride) {
          const auto& s = train_set[order[start + i]];
          auto& g = sample_grads[i];
          std::fill(g.begin(), g.end(), 0.0f);
          nn::forward_cached(params, std::span<const float>(s.hfm.data), std::span<const float>(s.lfm.data), cache);
          const float y = s.label.banded() ? 1.0f : 0.0f;
          sample_loss[i] = nn::backward(params, cache, y, g);
          sample_ok[i] = (nn::sigmoid(cache.logit) > 0.5f) == s.label.banded();
        }
      };
      if (threads == 1) {
        work(0, 1);
      } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
        for (auto& th : pool) th.join();
      }
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = 0; i < bs; ++i) {
        if (!std::isfinite(sample_loss[i]))
          fail_numeric("training loss became non-finite at epoch " + std::to_string(epoch));
        loss_sum += sample_loss[i];
        ok_sum += static_cast<std::size_t>(sample_ok[i]);
        for (std::size_t j = 0; j < np; ++j) grad[j] += sample_grads[i][j];
      }
      ++step;
      const double b1t = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
      const double b2t = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
      for (std::size_t j = 0; j < np; ++j) {
        const double gj = grad[j] / static_cast<double>(bs);
        m[j] = cfg.adam_beta1 * m[j] + (1.0 - cfg.adam_beta1) * gj;
        v[j] = cfg.adam_beta2 * v[j] + (1.0 - cfg.adam_beta2) * gj * gj;
        params.values[j] -= static_cast<float>(cfg.learning_rate * (m[j] / b1t) / (std::sqrt(v[j] / b2t) + cfg.adam_eps));
      }
    }
    EpochReport rep;
    rep.epoch = epoch;
    rep.train_loss = loss_sum / static_cast<double>(order.size());
    rep.train_acc = static_cast<double>(ok_sum) / static_cast<double>(order.size());
    const auto val = evaluate(params, val_set.empty() ? train_set : val_set);
    rep.val_loss = val.loss;
    rep.val_acc = val.accuracy;
    if (!std::isfinite(rep.val_loss)) fail_numeric("validation loss became non-finite at epoch " + std::to_string(epoch));
    result.history.push_back(rep);
    if (on_epoch) on_epoch(rep);
    if (rep.val_acc > best_acc) {
      best_acc = rep.val_acc;
      result.best_epoch = epoch;
      result.params = params;
      result.params.epochs = static_cast<std::uint32_t>(epoch);
    }
  }
  return result;
}

// Splits one list by cfg's fractions (seeded) and trains on the first two parts.
inline TrainResult train(std::span<const PatchSample> dataset, const TrainConfig& cfg,
                         std::vector<PatchSample>* held_out_test = nullptr) {
  cfg.validate();
  std::vector<std::size_t> idx(dataset.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(substream(cfg.seed, "split"));
  rng.shuffle(idx.begin(), idx.end());
  const auto n = dataset.size();
  const auto n_train = static_cast<std::size_t>(std::floor(cfg.split_train * static_cast<double>(n) + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(cfg.split_val * static_cast<double>(n) + 1e-9));
  std::vector<PatchSample> tr, va;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = dataset[idx[i]];
    if (i < n_train) tr.push_back(s);
    else if (i < n_train + n_val) va.push_back(s);
    else if (held_out_test) held_out_test->push_back(s);
  }
  return train(tr, va, cfg);
}

// ---------------------------------------------------------------------------
// Training-free baseline: gradient energy present, but the patch is not busy.

struct BaselineConfig {
  double hfm_mean_min = 0.001; // mean HFM on [0,1] luma
  double sf_max = 11.5;        // spatial frequency on the 0-255 scale
};

inline PatchLabel baseline_predict(const PlaneF& luma_patch, const BaselineConfig& cfg = {}) {
  require(luma_patch.width >= 8 && luma_patch.height >= 8, "baseline needs a patch of at least 8x8");
  const auto h = sobel_hfm(luma_patch);
  double sum = 0;
  for (float x : h.data) sum += x;
  const double mean_hfm = sum / static_cast<double>(h.size());
  PlaneF scaled = luma_patch;
  for (auto& x : scaled.data) x *= 255.0f;
  const double sf = spatial_frequency(scaled).sf;
  const bool banded = mean_hfm > cfg.hfm_mean_min && sf < cfg.sf_max;
  return {banded ? Label::banded : Label::non_banded, 1.0};
}

// ---------------------------------------------------------------------------
// Weight container:
//   "BGNN" | u32 version | u32 patch | u32 w1 w2 w3 | u32 hidden | f32 hfm_gain | f32 lfm_offset
//   | u64 seed | u32 epochs
//   | u32 tensor count | per tensor: u32 name length, name, u32 ndim, u32 dims...
//   | f32 values (little-endian) | u32 CRC-32 of everything before it

class ModelFormatError : public InputError {
 public:
  enum class Kind { magic, version, checksum, shape };
  ModelFormatError(Kind k, const std::string& what) : InputError(what), kind_(k) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xFFFFFFFFu;
  for (auto b : bytes) c = table[(c ^ b) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

struct Writer {
  std::vector<std::uint8_t> buf;
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    u32(u);
  }
  void bytes(const std::string& s) { buf.insert(buf.end(), s.begin(), s.end()); }
};

struct Reader {
  std::span<const std::uint8_t> buf;
  std::size_t pos = 0;
  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw ModelFormatError(ModelFormatError::Kind::checksum, "model file is truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + static_cast<std::size_t>(i)]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    return lo | (static_cast<std::uint64_t>(u32()) << 32);
  }
  float f32() {
    const std::uint32_t u = u32();
    float f;
    std::memcpy(&f, &u, 4);
    return f;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_params(const DualNetParams<float>& p) {
  p.check();
  detail::Writer w;
  w.bytes("BGNN");
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(p.arch.patch_size));
  for (int x : p.arch.widths) w.u32(static_cast<std::uint32_t>(x));
  w.u32(static_cast<std::uint32_t>(p.arch.hidden));
  w.f32(p.arch.hfm_gain);
  w.f32(p.arch.lfm_offset);
  w.u64(p.seed);
  w.u32(p.epochs);
  const auto layout = parameter_layout(p.arch);
  w.u32(static_cast<std::uint32_t>(layout.size()));
  for (const auto& t : layout) {
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name);
    w.u32(static_cast<std::uint32_t>(t.dims.size()));
    for (int d : t.dims) w.u32(static_cast<std::uint32_t>(d));
  }
  for (float f : p.values) w.f32(f);
  w.u32(detail::crc32(w.buf));
  return w.buf;
}

inline DualNetParams<float> deserialize_params(std::span<const std::uint8_t> bytes) {
  using K = ModelFormatError::Kind;
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "BGNN", 4) != 0) throw ModelFormatError(K::magic, "not a model file");
  detail::Reader r{bytes, 4};
  const auto version = r.u32();
  if (version != kModelVersion)
    throw ModelFormatError(K::version, "unknown model file version " + std::to_string(version));
  if (bytes.size() < 12) throw ModelFormatError(K::checksum, "model file is truncated");
  const auto body = bytes.first(bytes.size() - 4);
  detail::Reader tail{bytes, bytes.size() - 4};
  if (detail::crc32(body) != tail.u32()) throw ModelFormatError(K::checksum, "model file checksum mismatch");

  r.buf = body;
  DualNetParams<float> p;
  p.arch.patch_size = static_cast<int>(r.u32());
  for (auto& x : p.arch.widths) x = static_cast<int>(r.u32());
  p.arch.hidden = static_cast<int>(r.u32());
  p.arch.hfm_gain = r.f32();
  p.arch.lfm_offset = r.f32();
  p.seed = r.u64();
  p.epochs = r.u32();
  try {
    p.arch.validate();
  } catch (const InputError& e) {
    throw ModelFormatError(K::shape, std::string("invalid architecture: ") + e.what());
  }
  const auto layout = parameter_layout(p.arch);
  if (r.u32() != layout.size()) throw ModelFormatError(K::shape, "tensor count does not match architecture");
  for (const auto& t : layout) {
    const auto len = r.u32();
    if (len > 256) throw ModelFormatError(K::shape, "tensor name too long");
    if (r.str(len) != t.name) throw ModelFormatError(K::shape, "unexpected tensor " + t.name);
    if (r.u32() != t.dims.size()) throw ModelFormatError(K::shape, "rank mismatch for " + t.name);
    for (int d : t.dims)
      if (r.u32() != static_cast<std::uint32_t>(d)) throw ModelFormatError(K::shape, "shape mismatch for " + t.name);
  }
  const auto count = parameter_count(p.arch);
  if (body.size() - r.pos != count * 4) throw ModelFormatError(K::shape, "weight payload size mismatch");
  p.values.resize(count);
  for (auto& f : p.values) f = r.f32();
  p.check();
  return p;
}

inline void save_params(const DualNetParams<float>& p, const std::filesystem::path& path) {
  const auto bytes = serialize_params(p);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_input("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail_input("write failed for " + path.string());
}

inline DualNetParams<float> load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_input("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_params(bytes);
}

}  // namespace bandgauge
