#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gapccot/ops.hpp"
#include "gapccot/random.hpp"
#include "gapccot/sensing.hpp"
#include "gapccot/tensor.hpp"

namespace gapccot {

inline constexpr double kLeakySlope = 0.01;

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
};

/// Convolution with weight [out, in/groups, k, k] and bias [out].
/// Weights start uniform in +-sqrt(1/fan_in), bias at zero.
template <typename T>
struct Conv2dLayer {
  Conv2dLayer() = default;
  Conv2dLayer(std::size_t in, std::size_t out, std::size_t kernel, Conv2dOptions options,
              Rng& rng);

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, options); }
  void collect(const std::string& prefix, std::vector<Parameter<T>>& out) const;

  Tensor<T> weight;
  Tensor<T> bias;
  Conv2dOptions options;
};

/// Squeeze-and-excitation style gate: x * sigmoid(W2 lrelu(W1 avgpool(x))).
template <typename T>
struct ChannelAttention {
  ChannelAttention() = default;
  ChannelAttention(std::size_t channels, std::size_t reduction, Rng& rng);

  Tensor<T> gate(const Tensor<T>& x) const;
  Tensor<T> operator()(const Tensor<T>& x) const { return mul(x, gate(x)); }
  void collect(const std::string& prefix, std::vector<Parameter<T>>& out) const;

  Conv2dLayer<T> reduce;
  Conv2dLayer<T> expand;
};

struct CCoTBlockConfig {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t stride = 2;
  std::size_t cot_kernel = 3;
  std::size_t heads = 4;
  std::size_t reduction = 4;  // channel-attention squeeze ratio

  /// Throws ConfigError on an invalid combination.
  void validate() const;
  std::size_t branch_channels() const { return out_channels / 2; }
};

/// Strided conv -> LeakyReLU -> channel attention -> LeakyReLU.
template <typename T>
struct ConvBranch {
  ConvBranch() = default;
  ConvBranch(const CCoTBlockConfig& cfg, Rng& rng);

  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(const std::string& prefix, std::vector<Parameter<T>>& out) const;

  Conv2dLayer<T> down;
  ChannelAttention<T> attention;
  std::size_t stride = 1;
};

/// Intermediate values of one contextual-transformer pass, for inspection.
template <typename T>
struct CotTrace {
  Tensor<T> static_key;  // K1 = grouped k x k conv of x
  Tensor<T> query;
  Tensor<T> value;
  Tensor<T> attention;  // [N, heads, k*k, H, W], softmax over the window axis
  Tensor<T> dynamic;    // K2 = window-weighted sum of value
  Tensor<T> gate;       // [N, C, 1, 1], weight given to K1
  Tensor<T> output;     // gate * K1 + (1 - gate) * K2
};

/// Contextual transformer block on C channels (shape preserving).
template <typename T>
struct CotBlock {
  CotBlock() = default;
  CotBlock(std::size_t channels, std::size_t kernel, std::size_t heads, Rng& rng);

  CotTrace<T> trace(const Tensor<T>& x) const;
  Tensor<T> operator()(const Tensor<T>& x) const { return trace(x).output; }
  void collect(const std::string& prefix, std::vector<Parameter<T>>& out) const;

  Conv2dLayer<T> key;    // grouped k x k
  Conv2dLayer<T> query;  // 1x1
  Conv2dLayer<T> value;  // 1x1
  Conv2dLayer<T> theta;  // 1x1, 2C -> C
  Conv2dLayer<T> delta;  // 1x1, C -> k*k*heads
  Conv2dLayer<T> fuse;   // 1x1, C -> C
  std::size_t kernel = 3;
  std::size_t heads = 1;
};

/// Down-sampling layer (same form as the conv branch's) followed by a CoT block.
template <typename T>
struct CotBranch {
  CotBranch() = default;
  CotBranch(const CCoTBlockConfig& cfg, Rng& rng);

  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(const std::string& prefix, std::vector<Parameter<T>>& out) const;

  Conv2dLayer<T> down;
  CotBlock<T> cot;
  std::size_t stride = 1;
};

/// Parallel conv and contextual-transformer branches, concatenated on channels.
template <typename T>
struct CCoTBlock {
  CCoTBlock() = default;
  CCoTBlock(const CCoTBlockConfig& cfg, Rng& rng);

  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(const std::string& prefix, std::vector<Parameter<T>>& out) const;

  CCoTBlockConfig config;
  ConvBranch<T> conv_branch;
  CotBranch<T> cot_branch;
};

struct DenoiserNetConfig {
  std::size_t bands = 4;
  std::size_t base_channels = 8;
  std::size_t cot_kernel = 3;
  std::size_t heads = 4;
  std::size_t reduction = 4;
  bool residual = false;  // output = input + net(input)

  void validate() const;
  /// Required divisor of the spatial dims.
  static constexpr std::size_t kSpatialMultiple = 8;
};

/// U-net style denoiser: three stride-2 CCoT blocks (C, 2C, 4C channels),
/// three pixel-shuffle + 3x3 conv up blocks, each concatenated with a 1x1
/// projection of the matching contracting output (the input for the last),
/// and a final 1x1 conv back to the band count.
template <typename T>
struct DenoiserNet {
  DenoiserNet() = default;
  DenoiserNet(const DenoiserNetConfig& cfg, Rng& rng);

  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(const std::string& prefix, std::vector<Parameter<T>>& out) const;
  std::vector<Parameter<T>> parameters() const;

  DenoiserNetConfig config;
  CCoTBlock<T> enc1, enc2, enc3;
  Conv2dLayer<T> up3, up2, up1;        // 3x3 after pixel shuffle
  Conv2dLayer<T> skip3, skip2, skip1;  // 1x1 on e2, e1, input
  Conv2dLayer<T> head;                 // 1x1 to bands
};

/// Closed-form parameter count of a denoiser built from `cfg`.
std::size_t denoiser_parameter_count(const DenoiserNetConfig& cfg);

struct GapCcotConfig {
  std::size_t stages = 2;
  DenoiserNetConfig denoiser;
  /// Start from H^T(y / psi) instead of H^T y.
  bool normalized_init = false;
};

/// K-stage unfolded GAP network with one independent denoiser per stage.
template <typename T>
class GapCcotNet {
 public:
  GapCcotNet(const GapCcotConfig& cfg, std::uint64_t seed);

  /// Batched, differentiable reconstruction. Output is [N, bands, rows, cols].
  /// If `projected` is non-null it receives x_k after every projection.
  Tensor<T> forward(std::span<const Measurement> ys, const SensingOperator& op,
                    std::vector<Tensor<T>>* projected = nullptr) const;

  /// Inference on a single measurement, no graph recorded.
  SpectralCube reconstruct(const Measurement& y, const SensingOperator& op) const;

  /// All parameters sorted by name.
  std::vector<Parameter<T>> parameters() const;

  const GapCcotConfig& config() const { return config_; }
  std::vector<DenoiserNet<T>>& stages() { return stages_; }
  const std::vector<DenoiserNet<T>>& stages() const { return stages_; }

 private:
  GapCcotConfig config_;
  std::vector<DenoiserNet<T>> stages_;
};

/// Differentiable Euclidean projection on a [N, bands, rows, cols] batch.
/// Backward applies the same (symmetric) projector: g - H^T((H g) / psi).
template <typename T>
Tensor<T> project_batch(const Tensor<T>& v, std::span<const Measurement> ys,
                        const SensingOperator& op);

template <typename T>
Tensor<T> cubes_to_tensor(std::span<const SpectralCube> cubes, bool requires_grad = false);

template <typename T>
SpectralCube tensor_to_cube(const Tensor<T>& t, std::size_t sample);

extern template struct Conv2dLayer<float>;
extern template struct Conv2dLayer<double>;
extern template class GapCcotNet<float>;
extern template class GapCcotNet<double>;

}  // namespace gapccot
