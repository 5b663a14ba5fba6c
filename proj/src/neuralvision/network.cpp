#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "fvx/neuralvision.hpp"
#include "fvx/rng.hpp"

namespace fvx::neuralvision {

namespace {

void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
          const float* b, std::size_t ldb, float beta, float* c, std::size_t ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0f, a, static_cast<int>(lda), b,
              static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double beta, double* c, std::size_t ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0, a, static_cast<int>(lda), b,
              static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

// Reference kernel for extended precision, where no BLAS routine exists.
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const long double* a,
          std::size_t lda, const long double* b, std::size_t ldb, long double beta, long double* c,
          std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double acc = 0.0L;
      for (std::size_t p = 0; p < k; ++p)
        acc += (ta ? a[p * lda + i] : a[i * lda + p]) * (tb ? b[j * ldb + p] : b[p * ldb + j]);
      c[i * ldc + j] = beta * c[i * ldc + j] + acc;
    }
}

// Rows are output pixels (sample, oh, ow); columns are (ki, kj, channel).
template <typename T>
void im2col(const T* x, std::size_t n, const Shape3& in, std::size_t kh, std::size_t kw, T* col) {
  const std::size_t ho = in.h - kh + 1;
  const std::size_t wo = in.w - kw + 1;
  const std::size_t seg = kw * in.c;
  const std::size_t k = kh * seg;
  for (std::size_t s = 0; s < n; ++s) {
    const T* xs = x + s * in.size();
    for (std::size_t oh = 0; oh < ho; ++oh)
      for (std::size_t ow = 0; ow < wo; ++ow) {
        T* row = col + ((s * ho + oh) * wo + ow) * k;
        for (std::size_t ki = 0; ki < kh; ++ki)
          std::memcpy(row + ki * seg, xs + ((oh + ki) * in.w + ow) * in.c, seg * sizeof(T));
      }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t n, const Shape3& in, std::size_t kh, std::size_t kw, T* dx) {
  const std::size_t ho = in.h - kh + 1;
  const std::size_t wo = in.w - kw + 1;
  const std::size_t seg = kw * in.c;
  const std::size_t k = kh * seg;
  for (std::size_t s = 0; s < n; ++s) {
    T* ds = dx + s * in.size();
    for (std::size_t oh = 0; oh < ho; ++oh)
      for (std::size_t ow = 0; ow < wo; ++ow) {
        const T* row = col + ((s * ho + oh) * wo + ow) * k;
        for (std::size_t ki = 0; ki < kh; ++ki) {
          T* dst = ds + ((oh + ki) * in.w + ow) * in.c;
          const T* src = row + ki * seg;
          for (std::size_t j = 0; j < seg; ++j) dst[j] += src[j];
        }
      }
  }
}

template <typename T>
void bias_activation(T* y, std::size_t rows, std::size_t cols, const T* bias, Activation act) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* yr = y + r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      const T v = yr[c] + bias[c];
      yr[c] = act == Activation::relu ? std::max(v, T(0)) : v;
    }
  }
}

template <typename T>
void relu_mask(T* dy, const T* y, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i)
    if (!(y[i] > T(0))) dy[i] = T(0);
}

template <typename T>
void column_sums(const T* dy, std::size_t rows, std::size_t cols, T* out) {
  std::vector<double> acc(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) acc[c] += dy[r * cols + c];
  for (std::size_t c = 0; c < cols; ++c) out[c] = static_cast<T>(acc[c]);
}

}  // namespace

std::string to_string(Loss l) { return l == Loss::mae ? "mae" : "mse"; }

Loss loss_from_string(const std::string& s) {
  if (s == "mae") return Loss::mae;
  if (s == "mse") return Loss::mse;
  throw ValidationError("loss", "unknown loss '" + s + "'");
}

template <typename T>
double batch_loss(std::span<const T> pred, std::span<const T> target, Loss loss) {
  if (pred.size() != target.size()) throw ValidationError("loss", "prediction/target size mismatch");
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    sum += loss == Loss::mae ? std::abs(d) : d * d;
  }
  return sum / static_cast<double>(pred.size());
}

template double batch_loss<float>(std::span<const float>, std::span<const float>, Loss);
template double batch_loss<double>(std::span<const double>, std::span<const double>, Loss);

long double batch_loss_extended(std::span<const long double> pred, std::span<const long double> target,
                                Loss loss) {
  long double sum = 0.0L;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const long double d = pred[i] - target[i];
    sum += loss == Loss::mae ? (d < 0 ? -d : d) : d * d;
  }
  return pred.empty() ? 0.0L : sum / static_cast<long double>(pred.size());
}

template <typename T>
struct Network<T>::Cache {
  const Tensor<T>* input = nullptr;
  std::vector<Tensor<T>> outputs;                    // one per layer
  std::vector<std::vector<std::uint32_t>> winners;  // pooling argmax, per layer
};

template <typename T>
Network<T>::Network(Architecture arch) : arch_(std::move(arch)) {
  const auto shapes = arch_.output_shapes();
  Shape3 in = arch_.input;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
    const auto& l = arch_.layers[i];
    std::size_t wc = 0;
    std::size_t bc = 0;
    if (l.kind == LayerKind::conv2d) {
      wc = l.kh * l.kw * in.c * l.units;
      bc = l.units;
    } else if (l.kind == LayerKind::dense) {
      wc = in.size() * l.units;
      bc = l.units;
    }
    weight_offset_.push_back(offset);
    weight_count_.push_back(wc);
    bias_offset_.push_back(offset + wc);
    bias_count_.push_back(bc);
    offset += wc + bc;
    in = shapes[i];
  }
  params_.assign(offset, T(0));
}

template <typename T>
std::span<T> Network<T>::weights(std::size_t layer) {
  return {params_.data() + weight_offset_.at(layer), weight_count_.at(layer)};
}
template <typename T>
std::span<T> Network<T>::biases(std::size_t layer) {
  return {params_.data() + bias_offset_.at(layer), bias_count_.at(layer)};
}
template <typename T>
std::span<const T> Network<T>::weights(std::size_t layer) const {
  return {params_.data() + weight_offset_.at(layer), weight_count_.at(layer)};
}
template <typename T>
std::span<const T> Network<T>::biases(std::size_t layer) const {
  return {params_.data() + bias_offset_.at(layer), bias_count_.at(layer)};
}

template <typename T>
void Network<T>::initialize(std::uint64_t seed_value) {
  seed = seed_value;
  epochs_seen = 0;
  const auto shapes = arch_.output_shapes();
  Shape3 in = arch_.input;
  for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
    const auto& l = arch_.layers[i];
    double fan_in = 0.0;
    double fan_out = 0.0;
    if (l.kind == LayerKind::conv2d) {
      fan_in = static_cast<double>(l.kh * l.kw * in.c);
      fan_out = static_cast<double>(l.kh * l.kw * l.units);
    } else if (l.kind == LayerKind::dense) {
      fan_in = static_cast<double>(in.size());
      fan_out = static_cast<double>(l.units);
    }
    if (fan_in > 0.0) {
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      CounterRng rng(seed_value, i);
      for (T& w : weights(i)) w = static_cast<T>(rng.uniform(-limit, limit));
      for (T& b : biases(i)) b = T(0);
    }
    in = shapes[i];
  }
}

template <typename T>
void Network<T>::run(const Tensor<T>& x, Cache& cache, std::vector<Shape3>* shapes) const {
  if (!(x.shape == arch_.input))
    throw ValidationError("input", "expected " + arch_.input.str() + ", got " + x.shape.str());
  if (x.data.size() != x.n * x.shape.size()) throw ValidationError("input", "tensor size mismatch");
  const std::size_t n = x.n;
  cache.input = &x;
  cache.outputs.clear();
  cache.outputs.reserve(arch_.layers.size());
  cache.winners.assign(arch_.layers.size(), {});
  const auto out_shapes = arch_.output_shapes();

  std::vector<T> col;
  for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
    const auto& l = arch_.layers[i];
    const Tensor<T>& in = i == 0 ? x : cache.outputs[i - 1];
    Tensor<T> out(n, out_shapes[i]);
    switch (l.kind) {
      case LayerKind::conv2d: {
        const std::size_t rows = n * out.shape.h * out.shape.w;
        const std::size_t k = l.kh * l.kw * in.shape.c;
        col.resize(rows * k);
        im2col(in.data.data(), n, in.shape, l.kh, l.kw, col.data());
        gemm(false, false, rows, l.units, k, col.data(), k, weights(i).data(), l.units, T(0),
             out.data.data(), l.units);
        bias_activation(out.data.data(), rows, l.units, biases(i).data(), l.activation);
        break;
      }
      case LayerKind::maxpool2d: {
        auto& win = cache.winners[i];
        win.resize(out.data.size());
        const Shape3& is = in.shape;
        const Shape3& os = out.shape;
        for (std::size_t s = 0; s < n; ++s) {
          const T* xs = in.data.data() + s * is.size();
          T* ys = out.data.data() + s * os.size();
          std::uint32_t* ws = win.data() + s * os.size();
          for (std::size_t oh = 0; oh < os.h; ++oh)
            for (std::size_t ow = 0; ow < os.w; ++ow)
              for (std::size_t c = 0; c < os.c; ++c) {
                std::size_t best = ((oh * l.kh) * is.w + ow * l.kw) * is.c + c;
                T m = xs[best];
                for (std::size_t ki = 0; ki < l.kh; ++ki)
                  for (std::size_t kj = 0; kj < l.kw; ++kj) {
                    const std::size_t idx = ((oh * l.kh + ki) * is.w + ow * l.kw + kj) * is.c + c;
                    if (xs[idx] > m) {
                      m = xs[idx];
                      best = idx;
                    }
                  }
                const std::size_t o = (oh * os.w + ow) * os.c + c;
                ys[o] = m;
                ws[o] = static_cast<std::uint32_t>(best);
              }
        }
        break;
      }
      case LayerKind::dense: {
        const std::size_t fan_in = in.shape.size();
        gemm(false, false, n, l.units, fan_in, in.data.data(), fan_in, weights(i).data(), l.units, T(0),
             out.data.data(), l.units);
        bias_activation(out.data.data(), n, l.units, biases(i).data(), l.activation);
        break;
      }
      case LayerKind::flatten:
      case LayerKind::reshape: out.data = in.data; break;
    }
    if (shapes) shapes->push_back(out.shape);
    cache.outputs.push_back(std::move(out));
  }
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& x, std::vector<Shape3>* shapes) const {
  if (arch_.layers.empty()) return x;
  Cache cache;
  run(x, cache, shapes);
  return std::move(cache.outputs.back());
}

template <typename T>
double Network<T>::loss_and_gradient(const Tensor<T>& x, const Tensor<T>& target, Loss loss,
                                     std::vector<T>& grad) const {
  if (arch_.layers.empty()) throw ValidationError("architecture", "no layers");
  Cache cache;
  run(x, cache, nullptr);
  const Tensor<T>& pred = cache.outputs.back();
  if (target.n != pred.n || !(target.shape == pred.shape))
    throw ValidationError("target", "expected " + std::to_string(pred.n) + " x " + pred.shape.str() +
                                        ", got " + std::to_string(target.n) + " x " + target.shape.str());

  const double loss_value =
      batch_loss<T>(std::span<const T>(pred.data), std::span<const T>(target.data), loss);
  grad.assign(params_.size(), T(0));

  const double scale = 1.0 / static_cast<double>(pred.data.size());
  std::vector<T> dy(pred.data.size());
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    dy[i] = loss == Loss::mae ? static_cast<T>(((d > 0) - (d < 0)) * scale) : static_cast<T>(2.0 * d * scale);
  }

  const std::size_t n = x.n;
  std::vector<T> col;
  std::vector<T> dcol;
  for (std::size_t ii = arch_.layers.size(); ii-- > 0;) {
    const auto& l = arch_.layers[ii];
    const Tensor<T>& in = ii == 0 ? x : cache.outputs[ii - 1];
    const Tensor<T>& out = cache.outputs[ii];
    const bool need_dx = ii > 0;
    std::vector<T> dx;
    switch (l.kind) {
      case LayerKind::conv2d: {
        if (l.activation == Activation::relu) relu_mask(dy.data(), out.data.data(), dy.size());
        const std::size_t rows = n * out.shape.h * out.shape.w;
        const std::size_t k = l.kh * l.kw * in.shape.c;
        col.resize(rows * k);
        im2col(in.data.data(), n, in.shape, l.kh, l.kw, col.data());
        gemm(true, false, k, l.units, rows, col.data(), k, dy.data(), l.units, T(0),
             grad.data() + weight_offset_[ii], l.units);
        column_sums(dy.data(), rows, l.units, grad.data() + bias_offset_[ii]);
        if (need_dx) {
          dcol.resize(rows * k);
          gemm(false, true, rows, k, l.units, dy.data(), l.units, weights(ii).data(), l.units, T(0),
               dcol.data(), k);
          dx.assign(in.data.size(), T(0));
          col2im_add(dcol.data(), n, in.shape, l.kh, l.kw, dx.data());
        }
        break;
      }
      case LayerKind::maxpool2d: {
        if (need_dx) {
          dx.assign(in.data.size(), T(0));
          const auto& win = cache.winners[ii];
          const std::size_t is = in.shape.size();
          const std::size_t os = out.shape.size();
          for (std::size_t s = 0; s < n; ++s)
            for (std::size_t o = 0; o < os; ++o) dx[s * is + win[s * os + o]] += dy[s * os + o];
        }
        break;
      }
      case LayerKind::dense: {
        if (l.activation == Activation::relu) relu_mask(dy.data(), out.data.data(), dy.size());
        const std::size_t fan_in = in.shape.size();
        gemm(true, false, fan_in, l.units, n, in.data.data(), fan_in, dy.data(), l.units, T(0),
             grad.data() + weight_offset_[ii], l.units);
        column_sums(dy.data(), n, l.units, grad.data() + bias_offset_[ii]);
        if (need_dx) {
          dx.resize(in.data.size());
          gemm(false, true, n, fan_in, l.units, dy.data(), l.units, weights(ii).data(), l.units, T(0),
               dx.data(), fan_in);
        }
        break;
      }
      case LayerKind::flatten:
      case LayerKind::reshape:
        if (need_dx) dx = std::move(dy);
        break;
    }
    dy = std::move(dx);
  }
  return loss_value;
}

template <typename T>
std::vector<std::uint32_t> Network<T>::activation_pattern(const Tensor<T>& x, const Tensor<T>& target) const {
  Cache cache;
  run(x, cache, nullptr);
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
    const auto& l = arch_.layers[i];
    if (l.has_parameters() && l.activation == Activation::relu)
      for (T v : cache.outputs[i].data) out.push_back(v > T(0));
    if (l.kind == LayerKind::maxpool2d) out.insert(out.end(), cache.winners[i].begin(), cache.winners[i].end());
  }
  const auto& pred = cache.outputs.back().data;
  for (std::size_t i = 0; i < pred.size() && i < target.data.size(); ++i)
    out.push_back(pred[i] > target.data[i] ? 2u : (pred[i] < target.data[i] ? 0u : 1u));
  return out;
}

template class Network<float>;
template class Network<double>;
template class Network<long double>;

}  // namespace fvx::neuralvision
