#include "gapccot/network.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "gapccot/errors.hpp"
#include "gapccot/gap.hpp"

namespace gapccot {

namespace {

template <typename T>
T slope() {
  return static_cast<T>(kLeakySlope);
}

template <typename T>
Tensor<T> cat2(const Tensor<T>& a, const Tensor<T>& b) {
  std::array<Tensor<T>, 2> xs{a, b};
  return concat<T>(xs, 1);
}

void check_divisible(const Shape& s, std::size_t multiple, const char* where) {
  if (s.size() != 4) {
    throw DimensionError(std::string(where) + ": expected [N,C,H,W], got " + to_string(s));
  }
  if (s[2] % multiple != 0 || s[3] % multiple != 0) {
    throw DimensionError(std::string(where) + ": spatial dims " + std::to_string(s[2]) + "x" +
                         std::to_string(s[3]) + " must be multiples of " +
                         std::to_string(multiple));
  }
}

std::size_t conv_params(std::size_t in, std::size_t out, std::size_t k, std::size_t groups = 1) {
  return out * (in / groups) * k * k + out;
}

}  // namespace

// ---------------------------------------------------------------- layers

template <typename T>
Conv2dLayer<T>::Conv2dLayer(std::size_t in, std::size_t out, std::size_t kernel,
                            Conv2dOptions opt, Rng& rng)
    : options(opt) {
  const std::size_t fan_in = (in / opt.groups) * kernel * kernel;
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::vector<T> w(out * (in / opt.groups) * kernel * kernel);
  for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
  weight = Tensor<T>({out, in / opt.groups, kernel, kernel}, std::move(w), true);
  bias = Tensor<T>::zeros({out}, true);
}

template <typename T>
void Conv2dLayer<T>::collect(const std::string& prefix, std::vector<Parameter<T>>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

template <typename T>
ChannelAttention<T>::ChannelAttention(std::size_t channels, std::size_t reduction, Rng& rng) {
  const std::size_t hidden = std::max<std::size_t>(1, channels / std::max<std::size_t>(1, reduction));
  reduce = Conv2dLayer<T>(channels, hidden, 1, {}, rng);
  expand = Conv2dLayer<T>(hidden, channels, 1, {}, rng);
}

template <typename T>
Tensor<T> ChannelAttention<T>::gate(const Tensor<T>& x) const {
  return sigmoid(expand(leaky_relu(reduce(global_avg_pool(x)), slope<T>())));
}

template <typename T>
void ChannelAttention<T>::collect(const std::string& prefix,
                                  std::vector<Parameter<T>>& out) const {
  reduce.collect(prefix + ".reduce", out);
  expand.collect(prefix + ".expand", out);
}

void CCoTBlockConfig::validate() const {
  if (in_channels == 0) throw ConfigError("CCoT block: in_channels must be >= 1");
  if (out_channels == 0 || out_channels % 2 != 0)
    throw ConfigError("CCoT block: out_channels must be even, got " + std::to_string(out_channels));
  if (stride == 0) throw ConfigError("CCoT block: stride must be >= 1");
  if (cot_kernel % 2 == 0) throw ConfigError("CCoT block: cot_kernel must be odd");
  if (heads == 0 || branch_channels() % heads != 0)
    throw ConfigError("CCoT block: branch channels " + std::to_string(branch_channels()) +
                      " not divisible by heads " + std::to_string(heads));
}

template <typename T>
ConvBranch<T>::ConvBranch(const CCoTBlockConfig& cfg, Rng& rng)
    : down(cfg.in_channels, cfg.branch_channels(), 3, {cfg.stride, 1, 1}, rng),
      attention(cfg.branch_channels(), cfg.reduction, rng),
      stride(cfg.stride) {}

template <typename T>
Tensor<T> ConvBranch<T>::operator()(const Tensor<T>& x) const {
  check_divisible(x.shape(), stride, "conv branch");
  return leaky_relu(attention(leaky_relu(down(x), slope<T>())), slope<T>());
}

template <typename T>
void ConvBranch<T>::collect(const std::string& prefix, std::vector<Parameter<T>>& out) const {
  down.collect(prefix + ".down", out);
  attention.collect(prefix + ".attention", out);
}

template <typename T>
CotBlock<T>::CotBlock(std::size_t channels, std::size_t k, std::size_t h, Rng& rng)
    : kernel(k), heads(h) {
  if (h == 0 || channels % h != 0) {
    throw ConfigError("CoT block: channels " + std::to_string(channels) +
                      " not divisible by heads " + std::to_string(h));
  }
  if (k % 2 == 0) throw ConfigError("CoT block: kernel must be odd");
  key = Conv2dLayer<T>(channels, channels, k, {1, k / 2, h}, rng);
  query = Conv2dLayer<T>(channels, channels, 1, {}, rng);
  value = Conv2dLayer<T>(channels, channels, 1, {}, rng);
  theta = Conv2dLayer<T>(2 * channels, channels, 1, {}, rng);
  delta = Conv2dLayer<T>(channels, k * k * h, 1, {}, rng);
  fuse = Conv2dLayer<T>(channels, channels, 1, {}, rng);
}

template <typename T>
CotTrace<T> CotBlock<T>::trace(const Tensor<T>& x) const {
  if (x.rank() != 4 || x.dim(1) != key.weight.dim(0)) {
    throw DimensionError("CoT block: expected " + std::to_string(key.weight.dim(0)) +
                         " input channels, got shape " + to_string(x.shape()));
  }
  const std::size_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
  CotTrace<T> t;
  t.static_key = key(x);
  t.query = query(x);
  t.value = value(x);
  Tensor<T> logits =
      delta(leaky_relu(theta(cat2(t.static_key, t.query)), slope<T>()));
  t.attention = softmax(reshape(logits, {N, heads, kernel * kernel, H, W}), 2);
  t.dynamic = window_attention(t.attention, t.value, kernel);
  t.gate = sigmoid(fuse(global_avg_pool(add(t.static_key, t.dynamic))));
  t.output = add(t.dynamic, mul(t.gate, sub(t.static_key, t.dynamic)));
  return t;
}

template <typename T>
void CotBlock<T>::collect(const std::string& prefix, std::vector<Parameter<T>>& out) const {
  key.collect(prefix + ".key", out);
  query.collect(prefix + ".query", out);
  value.collect(prefix + ".value", out);
  theta.collect(prefix + ".theta", out);
  delta.collect(prefix + ".delta", out);
  fuse.collect(prefix + ".fuse", out);
}

template <typename T>
CotBranch<T>::CotBranch(const CCoTBlockConfig& cfg, Rng& rng)
    : down(cfg.in_channels, cfg.branch_channels(), 3, {cfg.stride, 1, 1}, rng),
      cot(cfg.branch_channels(), cfg.cot_kernel, cfg.heads, rng),
      stride(cfg.stride) {}

template <typename T>
Tensor<T> CotBranch<T>::operator()(const Tensor<T>& x) const {
  check_divisible(x.shape(), stride, "CoT branch");
  return cot(leaky_relu(down(x), slope<T>()));
}

template <typename T>
void CotBranch<T>::collect(const std::string& prefix, std::vector<Parameter<T>>& out) const {
  down.collect(prefix + ".down", out);
  cot.collect(prefix + ".cot", out);
}

template <typename T>
CCoTBlock<T>::CCoTBlock(const CCoTBlockConfig& cfg, Rng& rng) : config(cfg) {
  cfg.validate();
  conv_branch = ConvBranch<T>(cfg, rng);
  cot_branch = CotBranch<T>(cfg, rng);
}

template <typename T>
Tensor<T> CCoTBlock<T>::operator()(const Tensor<T>& x) const {
  return cat2(conv_branch(x), cot_branch(x));
}

template <typename T>
void CCoTBlock<T>::collect(const std::string& prefix, std::vector<Parameter<T>>& out) const {
  conv_branch.collect(prefix + ".conv_branch", out);
  cot_branch.collect(prefix + ".cot_branch", out);
}

// ---------------------------------------------------------------- denoiser

void DenoiserNetConfig::validate() const {
  if (bands == 0) throw ConfigError("denoiser: bands must be >= 1");
  if (base_channels < 2 || base_channels % 2 != 0)
    throw ConfigError("denoiser: base_channels must be even, got " + std::to_string(base_channels));
  if (cot_kernel % 2 == 0) throw ConfigError("denoiser: cot_kernel must be odd");
  if (heads == 0 || (base_channels / 2) % heads != 0)
    throw ConfigError("denoiser: base_channels/2 = " + std::to_string(base_channels / 2) +
                      " not divisible by heads " + std::to_string(heads));
  if (reduction == 0) throw ConfigError("denoiser: reduction must be >= 1");
}

namespace {
CCoTBlockConfig block_config(const DenoiserNetConfig& cfg, std::size_t in, std::size_t out) {
  return {in, out, 2, cfg.cot_kernel, cfg.heads, cfg.reduction};
}
}  // namespace

template <typename T>
DenoiserNet<T>::DenoiserNet(const DenoiserNetConfig& cfg, Rng& rng) : config(cfg) {
  cfg.validate();
  const std::size_t C = cfg.base_channels;
  enc1 = CCoTBlock<T>(block_config(cfg, cfg.bands, C), rng);
  enc2 = CCoTBlock<T>(block_config(cfg, C, 2 * C), rng);
  enc3 = CCoTBlock<T>(block_config(cfg, 2 * C, 4 * C), rng);
  up3 = Conv2dLayer<T>(C, 2 * C, 3, {1, 1, 1}, rng);
  skip3 = Conv2dLayer<T>(2 * C, 2 * C, 1, {}, rng);
  up2 = Conv2dLayer<T>(C, C, 3, {1, 1, 1}, rng);
  skip2 = Conv2dLayer<T>(C, C, 1, {}, rng);
  up1 = Conv2dLayer<T>(C / 2, C, 3, {1, 1, 1}, rng);
  skip1 = Conv2dLayer<T>(cfg.bands, C, 1, {}, rng);
  head = Conv2dLayer<T>(2 * C, cfg.bands, 1, {}, rng);
}

template <typename T>
Tensor<T> DenoiserNet<T>::operator()(const Tensor<T>& x) const {
  check_divisible(x.shape(), DenoiserNetConfig::kSpatialMultiple, "denoiser");
  if (x.dim(1) != config.bands) {
    throw DimensionError("denoiser: expected " + std::to_string(config.bands) +
                         " channels (axis 1), got " + std::to_string(x.dim(1)));
  }
  const T s = slope<T>();
  Tensor<T> e1 = enc1(x);
  Tensor<T> e2 = enc2(e1);
  Tensor<T> e3 = enc3(e2);
  Tensor<T> d3 = cat2(leaky_relu(up3(pixel_shuffle(e3, 2)), s), skip3(e2));
  Tensor<T> d2 = cat2(leaky_relu(up2(pixel_shuffle(d3, 2)), s), skip2(e1));
  Tensor<T> d1 = cat2(leaky_relu(up1(pixel_shuffle(d2, 2)), s), skip1(x));
  Tensor<T> out = head(d1);
  return config.residual ? add(x, out) : out;
}

template <typename T>
void DenoiserNet<T>::collect(const std::string& prefix, std::vector<Parameter<T>>& out) const {
  enc1.collect(prefix + ".enc1", out);
  enc2.collect(prefix + ".enc2", out);
  enc3.collect(prefix + ".enc3", out);
  up3.collect(prefix + ".up3", out);
  up2.collect(prefix + ".up2", out);
  up1.collect(prefix + ".up1", out);
  skip3.collect(prefix + ".skip3", out);
  skip2.collect(prefix + ".skip2", out);
  skip1.collect(prefix + ".skip1", out);
  head.collect(prefix + ".head", out);
}

template <typename T>
std::vector<Parameter<T>> DenoiserNet<T>::parameters() const {
  std::vector<Parameter<T>> out;
  collect("net", out);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return out;
}

std::size_t denoiser_parameter_count(const DenoiserNetConfig& cfg) {
  cfg.validate();
  auto block = [&](std::size_t in, std::size_t out) {
    const std::size_t h = out / 2;
    const std::size_t hidden = std::max<std::size_t>(1, h / cfg.reduction);
    const std::size_t k = cfg.cot_kernel;
    const std::size_t conv = conv_params(in, h, 3) + conv_params(h, hidden, 1) +
                             conv_params(hidden, h, 1);
    const std::size_t cot = conv_params(in, h, 3) + conv_params(h, h, k, cfg.heads) +
                            2 * conv_params(h, h, 1) + conv_params(2 * h, h, 1) +
                            conv_params(h, k * k * cfg.heads, 1) + conv_params(h, h, 1);
    return conv + cot;
  };
  const std::size_t C = cfg.base_channels;
  return block(cfg.bands, C) + block(C, 2 * C) + block(2 * C, 4 * C) +
         conv_params(C, 2 * C, 3) + conv_params(2 * C, 2 * C, 1) + conv_params(C, C, 3) +
         conv_params(C, C, 1) + conv_params(C / 2, C, 3) + conv_params(cfg.bands, C, 1) +
         conv_params(2 * C, cfg.bands, 1);
}

// ---------------------------------------------------------------- unfolding

template <typename T>
Tensor<T> cubes_to_tensor(std::span<const SpectralCube> cubes, bool requires_grad) {
  if (cubes.empty()) throw UsageError("cubes_to_tensor: empty batch");
  const auto& c0 = cubes[0];
  const std::size_t N = cubes.size(), B = c0.bands, H = c0.rows, W = c0.cols;
  std::vector<T> data(N * B * H * W);
  for (std::size_t n = 0; n < N; ++n) {
    if (!cubes[n].same_dims(c0)) throw DimensionError("cubes_to_tensor: mixed cube dims");
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c)
          data[((n * B + b) * H + r) * W + c] = static_cast<T>(cubes[n].at(r, c, b));
  }
  return Tensor<T>({N, B, H, W}, std::move(data), requires_grad);
}

namespace {
template <typename T>
SpectralCube plane_to_cube(const T* src, std::size_t B, std::size_t H, std::size_t W) {
  SpectralCube cube(H, W, B);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t c = 0; c < W; ++c)
        cube.at(r, c, b) = static_cast<double>(src[(b * H + r) * W + c]);
  return cube;
}

template <typename T>
void cube_to_plane(const SpectralCube& cube, T* dst) {
  const std::size_t B = cube.bands, H = cube.rows, W = cube.cols;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t c = 0; c < W; ++c)
        dst[(b * H + r) * W + c] = static_cast<T>(cube.at(r, c, b));
}
}  // namespace

template <typename T>
SpectralCube tensor_to_cube(const Tensor<T>& t, std::size_t sample) {
  if (t.rank() != 4 || sample >= t.dim(0)) {
    throw DimensionError("tensor_to_cube: bad shape " + to_string(t.shape()) + " for sample " +
                         std::to_string(sample));
  }
  const std::size_t B = t.dim(1), H = t.dim(2), W = t.dim(3);
  return plane_to_cube(t.data().data() + sample * B * H * W, B, H, W);
}

template <typename T>
Tensor<T> project_batch(const Tensor<T>& v, std::span<const Measurement> ys,
                        const SensingOperator& op) {
  if (v.rank() != 4 || v.dim(0) != ys.size() || v.dim(1) != op.bands() ||
      v.dim(2) != op.rows() || v.dim(3) != op.cols()) {
    throw DimensionError("project_batch: tensor " + to_string(v.shape()) +
                         " does not match operator / batch of " + std::to_string(ys.size()));
  }
  const std::size_t B = v.dim(1), H = v.dim(2), W = v.dim(3), plane = B * H * W;
  std::vector<T> out(v.numel());
  for (std::size_t n = 0; n < ys.size(); ++n) {
    SpectralCube x = project(plane_to_cube(v.data().data() + n * plane, B, H, W), ys[n], op);
    cube_to_plane(x, out.data() + n * plane);
  }
  return Tensor<T>::from_op(v.shape(), std::move(out), {v.node_ptr()},
                            [op, N = ys.size(), B, H, W, plane](TensorNode<T>& self) {
                              auto& g = grad_buffer(*self.parents[0]);
                              for (std::size_t n = 0; n < N; ++n) {
                                SpectralCube gc =
                                    plane_to_cube(self.grad.data() + n * plane, B, H, W);
                                Measurement hg = op.forward(gc);
                                SpectralCube corr = normalized_adjoint(hg, op);
                                for (std::size_t i = 0; i < gc.data.size(); ++i)
                                  gc.data[i] -= corr.data[i];
                                std::vector<T> tmp(plane);
                                cube_to_plane(gc, tmp.data());
                                for (std::size_t i = 0; i < plane; ++i) g[n * plane + i] += tmp[i];
                              }
                            });
}

template <typename T>
GapCcotNet<T>::GapCcotNet(const GapCcotConfig& cfg, std::uint64_t seed) : config_(cfg) {
  if (cfg.stages == 0) throw ConfigError("GAP-CCoT: stages must be >= 1");
  cfg.denoiser.validate();
  for (std::size_t k = 0; k < cfg.stages; ++k) {
    Rng rng(derive_seed(seed, k));
    stages_.emplace_back(cfg.denoiser, rng);
  }
}

template <typename T>
Tensor<T> GapCcotNet<T>::forward(std::span<const Measurement> ys, const SensingOperator& op,
                                 std::vector<Tensor<T>>* projected) const {
  if (ys.empty()) throw UsageError("GAP-CCoT forward: empty batch");
  if (op.bands() != config_.denoiser.bands) {
    throw DimensionError("GAP-CCoT forward: operator has " + std::to_string(op.bands()) +
                         " bands, network expects " + std::to_string(config_.denoiser.bands));
  }
  std::vector<SpectralCube> init;
  init.reserve(ys.size());
  for (const auto& y : ys)
    init.push_back(config_.normalized_init ? normalized_adjoint(y, op) : op.adjoint(y));
  Tensor<T> v = cubes_to_tensor<T>(init);
  for (const auto& stage : stages_) {
    Tensor<T> x = project_batch(v, ys, op);
    if (projected) projected->push_back(x);
    v = stage(x);
  }
  return v;
}

template <typename T>
SpectralCube GapCcotNet<T>::reconstruct(const Measurement& y, const SensingOperator& op) const {
  NoGradGuard no_grad;
  std::array<Measurement, 1> ys{y};
  return tensor_to_cube(forward(ys, op), 0);
}

template <typename T>
std::vector<Parameter<T>> GapCcotNet<T>::parameters() const {
  std::vector<Parameter<T>> out;
  for (std::size_t k = 0; k < stages_.size(); ++k) stages_[k].collect("stage" + std::to_string(k), out);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return out;
}

#define GAPCCOT_INSTANTIATE_NETWORK(T)                                                       \
  template struct Conv2dLayer<T>;                                                            \
  template struct ChannelAttention<T>;                                                       \
  template struct ConvBranch<T>;                                                             \
  template struct CotBlock<T>;                                                               \
  template struct CotBranch<T>;                                                              \
  template struct CCoTBlock<T>;                                                              \
  template struct DenoiserNet<T>;                                                            \
  template class GapCcotNet<T>;                                                              \
  template Tensor<T> project_batch(const Tensor<T>&, std::span<const Measurement>,           \
                                   const SensingOperator&);                                  \
  template Tensor<T> cubes_to_tensor(std::span<const SpectralCube>, bool);                   \
  template SpectralCube tensor_to_cube(const Tensor<T>&, std::size_t);

GAPCCOT_INSTANTIATE_NETWORK(float)
GAPCCOT_INSTANTIATE_NETWORK(double)

}  // namespace gapccot
