#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fvx/metrics.hpp"
#include "fvx/neuralvision.hpp"
#include "fvx/rng.hpp"

namespace fvx::neuralvision {

namespace {

// Stream offset separating shuffle draws from initialisation draws.
constexpr std::uint64_t kShuffleStream = 0x5348554646000000ULL;

void check_dataset(const Network<float>& net, const Dataset& d, const char* what) {
  if (!(d.input_shape == net.architecture().input))
    throw ValidationError(what, "input shape " + d.input_shape.str() + " does not match network input " +
                                    net.architecture().input.str());
  if (!(d.target_shape == net.architecture().output_shape()))
    throw ValidationError(what, "target shape " + d.target_shape.str() + " does not match network output " +
                                    net.architecture().output_shape().str());
}

double dataset_mape(const std::vector<float>& pred, const Dataset& d, double vs_norm_max) {
  const std::size_t per = d.target_shape.size();
  const std::size_t n = d.size();
  double sum = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    GridD p(d.target_shape.h, d.target_shape.w * d.target_shape.c);
    GridD t(p.rows(), p.cols());
    for (std::size_t j = 0; j < per; ++j) {
      p.data()[j] = static_cast<double>(pred[s * per + j]) * vs_norm_max;
      t.data()[j] = static_cast<double>(d.targets[s * per + j]) * vs_norm_max;
    }
    sum += metrics::mape(p, t);
  }
  return sum / static_cast<double>(n);
}

}  // namespace

void Dataset::add(std::span<const float> input, std::span<const float> target) {
  if (input.size() != input_shape.size())
    throw ValidationError("dataset", "input has " + std::to_string(input.size()) + " values, expected " +
                                         std::to_string(input_shape.size()));
  if (target.size() != target_shape.size())
    throw ValidationError("dataset", "target has " + std::to_string(target.size()) + " values, expected " +
                                         std::to_string(target_shape.size()));
  inputs.insert(inputs.end(), input.begin(), input.end());
  targets.insert(targets.end(), target.begin(), target.end());
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw RangeError("dataset slice out of range");
  Dataset out;
  out.input_shape = input_shape;
  out.target_shape = target_shape;
  out.inputs.assign(inputs.begin() + static_cast<std::ptrdiff_t>(begin * input_shape.size()),
                    inputs.begin() + static_cast<std::ptrdiff_t>(end * input_shape.size()));
  out.targets.assign(targets.begin() + static_cast<std::ptrdiff_t>(begin * target_shape.size()),
                     targets.begin() + static_cast<std::ptrdiff_t>(end * target_shape.size()));
  return out;
}

Tensor<float> Dataset::input_batch(std::span<const std::size_t> indices) const {
  Tensor<float> t(indices.size(), input_shape);
  const std::size_t per = input_shape.size();
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy_n(inputs.begin() + static_cast<std::ptrdiff_t>(indices[i] * per), per, t.data.begin() + static_cast<std::ptrdiff_t>(i * per));
  return t;
}

Tensor<float> Dataset::target_batch(std::span<const std::size_t> indices) const {
  Tensor<float> t(indices.size(), target_shape);
  const std::size_t per = target_shape.size();
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy_n(targets.begin() + static_cast<std::ptrdiff_t>(indices[i] * per), per, t.data.begin() + static_cast<std::ptrdiff_t>(i * per));
  return t;
}

SplitRanges split_ranges(std::size_t n, const std::array<double, 3>& f) {
  for (double v : f)
    if (!(v >= 0.0)) throw ValidationError("split", "fractions must be nonnegative");
  if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) throw ValidationError("split", "fractions must sum to 1");
  const auto a = static_cast<std::size_t>(std::llround(f[0] * static_cast<double>(n)));
  const auto b = std::min(n, a + static_cast<std::size_t>(std::llround(f[1] * static_cast<double>(n))));
  return {{0, a}, {a, b}, {b, n}};
}

std::string to_string(Optimizer o) { return o == Optimizer::adam ? "adam" : "sgd"; }

Optimizer optimizer_from_string(const std::string& s) {
  if (s == "adam") return Optimizer::adam;
  if (s == "sgd") return Optimizer::sgd;
  throw ValidationError("optimizer", "unknown optimizer '" + s + "'");
}

void validate(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0)) throw ValidationError("learning_rate", "must be positive");
  if (c.batch_size == 0) throw ValidationError("batch_size", "must be positive");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0)) throw ValidationError("beta1", "must be in [0, 1)");
  if (!(c.beta2 >= 0.0 && c.beta2 < 1.0)) throw ValidationError("beta2", "must be in [0, 1)");
  if (!(c.epsilon > 0.0)) throw ValidationError("epsilon", "must be positive");
  double sum = 0.0;
  for (double v : c.split) {
    if (!(v >= 0.0)) throw ValidationError("split", "fractions must be nonnegative");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("split", "fractions must sum to 1");
  if (!(c.vs_norm_max >= 0.0)) throw ValidationError("vs_norm_max", "must be positive");
}

std::vector<float> predict_all(const Network<float>& net, const Dataset& data, std::size_t batch) {
  const std::size_t n = data.size();
  const std::size_t per = net.architecture().output_shape().size();
  std::vector<float> out(n * per);
  batch = std::max<std::size_t>(batch, 1);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += batch) {
    idx.resize(std::min(batch, n - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto y = net.forward(data.input_batch(idx));
    std::copy(y.data.begin(), y.data.end(), out.begin() + static_cast<std::ptrdiff_t>(start * per));
  }
  return out;
}

std::vector<EpochRecord> train(Network<float>& net, const Dataset& train_set, const Dataset* validation,
                               const TrainConfig& cfg, const EpochHook& hook) {
  validate(cfg);
  if (train_set.size() == 0) throw DataError("training set is empty");
  check_dataset(net, train_set, "training set");
  if (validation && validation->size() > 0) check_dataset(net, *validation, "validation set");
  if (cfg.vs_norm_max > 0.0) net.vs_norm_max = cfg.vs_norm_max;

  auto& params = net.parameters();
  std::vector<float> m(params.size(), 0.0f);
  std::vector<float> v(params.size(), 0.0f);
  std::vector<float> grad;
  std::uint64_t step = 0;

  const std::size_t n = train_set.size();
  std::vector<std::size_t> order(n);
  std::vector<EpochRecord> history;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    CounterRng rng(cfg.seed, kShuffleStream + net.epochs_seen);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      const std::span<const std::size_t> idx(order.data() + start, count);
      const double loss = net.loss_and_gradient(train_set.input_batch(idx), train_set.target_batch(idx),
                                                cfg.loss, grad);
      if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "non-finite training loss at epoch " << epoch << ", batch " << batch_index;
        throw NumericalError(os.str());
      }
      loss_sum += loss * static_cast<double>(count);

      ++step;
      if (cfg.optimizer == Optimizer::adam) {
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
        const auto b1 = static_cast<float>(cfg.beta1);
        const auto b2 = static_cast<float>(cfg.beta2);
        const auto lr_t = static_cast<float>(cfg.learning_rate * std::sqrt(c2) / c1);
        const auto eps_t = static_cast<float>(cfg.epsilon * std::sqrt(c2));
        for (std::size_t p = 0; p < params.size(); ++p) {
          const float g = grad[p];
          m[p] = b1 * m[p] + (1.0f - b1) * g;
          v[p] = b2 * v[p] + (1.0f - b2) * g * g;
          params[p] -= lr_t * m[p] / (std::sqrt(v[p]) + eps_t);
        }
      } else {
        const auto lr = static_cast<float>(cfg.learning_rate);
        for (std::size_t p = 0; p < params.size(); ++p) params[p] -= lr * grad[p];
      }
    }
    ++net.epochs_seen;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    if (validation && validation->size() > 0) {
      const auto pred = predict_all(net, *validation, cfg.batch_size);
      rec.validation_loss = batch_loss<float>(std::span<const float>(pred),
                                              std::span<const float>(validation->targets), cfg.loss);
      if (net.vs_norm_max > 0.0) rec.validation_mape = dataset_mape(pred, *validation, net.vs_norm_max);
    }
    history.push_back(rec);
    if (hook && !hook(rec, net)) break;
  }
  return history;
}

VsImagePrediction predict(const Network<float>& net, std::span<const float> input,
                          const std::string& network_id, const std::string& input_id) {
  const auto& arch = net.architecture();
  if (input.size() != arch.input.size())
    throw ValidationError("input", "expected " + arch.input.str() + " (" + std::to_string(arch.input.size()) +
                                       " values), got " + std::to_string(input.size()) + " values");
  Tensor<float> x(1, arch.input);
  std::copy(input.begin(), input.end(), x.data.begin());
  const auto y = net.forward(x);
  VsImagePrediction p;
  p.normalized = GridD(y.shape.h, y.shape.w * y.shape.c);
  p.vs_mps = GridD(p.normalized.rows(), p.normalized.cols());
  p.vs_norm_max = net.vs_norm_max;
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    p.normalized.data()[i] = static_cast<double>(y.data[i]);
    p.vs_mps.data()[i] = p.normalized.data()[i] * net.vs_norm_max;
  }
  p.network_id = network_id;
  p.input_id = input_id;
  return p;
}

GradientCheckResult gradient_check(const Network<double>& net, const Tensor<double>& x,
                                   const Tensor<double>& target, Loss loss, std::size_t max_parameters,
                                   std::uint64_t seed, double step, double floor) {
  std::vector<double> analytic;
  net.loss_and_gradient(x, target, loss, analytic);
  const std::size_t total = net.parameters().size();
  std::vector<std::size_t> chosen(total);
  std::iota(chosen.begin(), chosen.end(), 0);
  if (total > max_parameters) {
    CounterRng rng(seed, 0);
    for (std::size_t i = 0; i < max_parameters; ++i) std::swap(chosen[i], chosen[i + rng.below(total - i)]);
    chosen.resize(max_parameters);
    std::sort(chosen.begin(), chosen.end());
  }

  GradientCheckResult result;
  Network<long double> probe = net.converted<long double>();
  Tensor<long double> xe(x.n, x.shape);
  Tensor<long double> te(target.n, target.shape);
  std::copy(x.data.begin(), x.data.end(), xe.data.begin());
  std::copy(target.data.begin(), target.data.end(), te.data.begin());
  const auto base_pattern = probe.activation_pattern(xe, te);
  auto loss_at = [&](std::size_t p, long double value, bool& same_region) {
    probe.parameters()[p] = value;
    same_region = probe.activation_pattern(xe, te) == base_pattern;
    const auto y = probe.forward(xe);
    return batch_loss_extended(y.data, te.data, loss);
  };
  for (std::size_t p : chosen) {
    const long double original = net.parameters()[p];
    bool same_plus = false;
    bool same_minus = false;
    const long double lp = loss_at(p, original + step, same_plus);
    const long double lm = loss_at(p, original - step, same_minus);
    probe.parameters()[p] = original;
    if (!same_plus || !same_minus) {
      ++result.skipped;
      continue;
    }
    const auto numeric = static_cast<double>((lp - lm) / (2.0L * step));
    const double denom = std::max({std::abs(analytic[p]), std::abs(numeric), floor});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(analytic[p] - numeric) / denom);
    ++result.checked;
  }
  return result;
}

}  // namespace fvx::neuralvision
