#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fvx/common.hpp"
#include "fvx/fvbin.hpp"

namespace fvx::neuralvision {

/// Height x width x channels of one sample; data is stored channel-fastest.
struct Shape3 {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t c = 0;

  std::size_t size() const noexcept { return h * w * c; }
  std::string str() const;
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

enum class LayerKind : std::uint8_t { conv2d, maxpool2d, flatten, dense, reshape };
enum class Activation : std::uint8_t { relu, linear };

std::string to_string(LayerKind k);
std::string to_string(Activation a);

struct LayerSpec {
  LayerKind kind = LayerKind::flatten;
  std::size_t kh = 1;  // kernel or pooling window
  std::size_t kw = 1;
  std::size_t units = 0;  // output channels (conv) or width (dense)
  Activation activation = Activation::linear;
  Shape3 target{};  // reshape only

  static LayerSpec conv(std::size_t kh, std::size_t kw, std::size_t channels,
                        Activation act = Activation::relu);
  static LayerSpec pool(std::size_t ph, std::size_t pw);
  static LayerSpec flatten();
  static LayerSpec dense(std::size_t units, Activation act = Activation::linear);
  static LayerSpec reshape(std::size_t h, std::size_t w);

  bool has_parameters() const noexcept { return kind == LayerKind::conv2d || kind == LayerKind::dense; }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Valid stride-1 convolutions, non-overlapping floor pooling.
struct Architecture {
  std::string name;
  Shape3 input;
  std::vector<LayerSpec> layers;

  /// Output shape after every layer; throws ValidationError if a layer does not fit.
  std::vector<Shape3> output_shapes() const;
  Shape3 output_shape() const;
  std::size_t parameter_count() const;
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// 400 velocities x 76 frequencies -> 24 x 48 Vs image.
Architecture frequency_velocity_architecture();
/// 48 receivers x 800 samples -> 24 x 48 Vs image.
Architecture time_distance_architecture();

nlohmann::json to_json(const Architecture& arch);
Architecture architecture_from_json(const nlohmann::json& j);

/// Batch of samples, [n][h][w][c].
template <typename T>
struct Tensor {
  std::size_t n = 0;
  Shape3 shape;
  std::vector<T> data;

  Tensor() = default;
  Tensor(std::size_t count, Shape3 s) : n(count), shape(s), data(count * s.size()) {}

  std::span<T> sample(std::size_t i) { return {data.data() + i * shape.size(), shape.size()}; }
  std::span<const T> sample(std::size_t i) const { return {data.data() + i * shape.size(), shape.size()}; }
};

enum class Loss : std::uint8_t { mae, mse };
std::string to_string(Loss l);
Loss loss_from_string(const std::string& s);

template <typename T>
class Network {
 public:
  Network() = default;
  /// All parameters zero.
  explicit Network(Architecture arch);

  const Architecture& architecture() const noexcept { return arch_; }
  std::vector<T>& parameters() noexcept { return params_; }
  const std::vector<T>& parameters() const noexcept { return params_; }
  std::span<T> weights(std::size_t layer);
  std::span<T> biases(std::size_t layer);
  std::span<const T> weights(std::size_t layer) const;
  std::span<const T> biases(std::size_t layer) const;

  /// Glorot-uniform kernels, zero biases, one counter stream per layer.
  void initialize(std::uint64_t seed);

  /// Reentrant. `shapes`, if given, receives the output shape of every layer.
  Tensor<T> forward(const Tensor<T>& x, std::vector<Shape3>* shapes = nullptr) const;

  /// Mean loss over the batch; `grad` receives dLoss/dparameters.
  double loss_and_gradient(const Tensor<T>& x, const Tensor<T>& target, Loss loss,
                           std::vector<T>& grad) const;

  /// Identifies the piecewise-linear region of the loss at these parameters:
  /// ReLU on/off pattern, pooling winners and residual signs.
  std::vector<std::uint32_t> activation_pattern(const Tensor<T>& x, const Tensor<T>& target) const;

  template <typename U>
  Network<U> converted() const {
    Network<U> out(arch_);
    for (std::size_t i = 0; i < params_.size(); ++i) out.parameters()[i] = static_cast<U>(params_[i]);
    out.seed = seed;
    out.epochs_seen = epochs_seen;
    out.vs_norm_max = vs_norm_max;
    return out;
  }

  std::uint64_t seed = 0;
  std::uint64_t epochs_seen = 0;
  double vs_norm_max = 0.0;  // targets were divided by this before training

 private:
  struct Cache;
  void run(const Tensor<T>& x, Cache& cache, std::vector<Shape3>* shapes) const;

  Architecture arch_;
  std::vector<T> params_;
  std::vector<std::size_t> weight_offset_, weight_count_, bias_offset_, bias_count_;
};

extern template class Network<float>;
extern template class Network<double>;
extern template class Network<long double>;

/// Mean of |pred - target| (mae) or (pred - target)^2 (mse).
template <typename T>
double batch_loss(std::span<const T> pred, std::span<const T> target, Loss loss);
long double batch_loss_extended(std::span<const long double> pred, std::span<const long double> target,
                                Loss loss);

/// Normalised input/target pairs held contiguously in float32.
struct Dataset {
  Shape3 input_shape;
  Shape3 target_shape;
  std::vector<float> inputs;
  std::vector<float> targets;

  std::size_t size() const noexcept {
    return input_shape.size() == 0 ? 0 : inputs.size() / input_shape.size();
  }
  void add(std::span<const float> input, std::span<const float> target);
  /// Samples [begin, end).
  Dataset slice(std::size_t begin, std::size_t end) const;
  Tensor<float> input_batch(std::span<const std::size_t> indices) const;
  Tensor<float> target_batch(std::span<const std::size_t> indices) const;
};

/// Contiguous train/validation/test ranges from fractions summing to 1.
struct SplitRanges {
  std::array<std::size_t, 2> train;
  std::array<std::size_t, 2> validation;
  std::array<std::size_t, 2> test;
};
SplitRanges split_ranges(std::size_t n, const std::array<double, 3>& fractions);

enum class Optimizer : std::uint8_t { adam, sgd };
std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& s);

struct TrainConfig {
  double learning_rate = 5e-4;
  std::size_t batch_size = 16;
  std::size_t epochs = 40;
  Optimizer optimizer = Optimizer::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Loss loss = Loss::mae;
  std::array<double, 3> split{0.7, 0.1, 0.2};
  double vs_norm_max = 0.0;  // required for MAPE reporting
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;  // mean over the epoch's minibatches
  double validation_loss = std::numeric_limits<double>::quiet_NaN();
  double validation_mape = std::numeric_limits<double>::quiet_NaN();  // percent, physical units
};

/// Called after every epoch; returning false stops training early.
using EpochHook = std::function<bool(const EpochRecord&, const Network<float>&)>;

/// Minibatch training with a seed-determined shuffle per epoch.
/// Throws NumericalError naming the epoch and batch on a non-finite loss.
std::vector<EpochRecord> train(Network<float>& net, const Dataset& train_set, const Dataset* validation,
                               const TrainConfig& cfg, const EpochHook& hook = {});

/// Batched inference over a whole dataset; returns predictions in target layout.
std::vector<float> predict_all(const Network<float>& net, const Dataset& data, std::size_t batch = 16);

struct VsImagePrediction {
  GridD normalized;  // 24 x 48
  GridD vs_mps;      // normalized * vs_norm_max
  double vs_norm_max = 0.0;
  std::string network_id;
  std::string input_id;
};

/// Single-input inference with denormalisation.
VsImagePrediction predict(const Network<float>& net, std::span<const float> input,
                          const std::string& network_id = {}, const std::string& input_id = {});

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // perturbation crossed a kink or tie
};

/// Central finite differences against the analytic gradient on a random subset
/// of parameters. Relative error is |a - n| / max(|a|, |n|, floor). The
/// differences are evaluated in extended precision so that rounding in the
/// oracle stays far below the tolerances of interest.
GradientCheckResult gradient_check(const Network<double>& net, const Tensor<double>& x,
                                   const Tensor<double>& target, Loss loss = Loss::mae,
                                   std::size_t max_parameters = 256, std::uint64_t seed = 0,
                                   double step = 1e-5, double floor = 1e-6);

fvbin::File to_fvbin(const Network<float>& net);
/// Rejects files whose blocks disagree with the stored architecture.
Network<float> from_fvbin(const fvbin::File& file);
void save(const Network<float>& net, const std::filesystem::path& path);
Network<float> load(const std::filesystem::path& path);
/// Also rejects a stored architecture different from `expected`.
Network<float> load(const std::filesystem::path& path, const Architecture& expected);

}  // namespace fvx::neuralvision
