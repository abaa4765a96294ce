#include "gapccot/gradcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "gapccot/ops.hpp"
#include "gapccot/random.hpp"

namespace gapccot {

double gradient_relative_error(const ScalarFn& fn, std::vector<Tensor<double>>& inputs,
                               double step) {
  for (auto& t : inputs) t.zero_grad();
  fn(inputs).backward();

  double worst = 0.0;
  NoGradGuard no_grad;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    auto data = t.mutable_data();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + step;
      const double plus = fn(inputs).item();
      data[i] = saved - step;
      const double minus = fn(inputs).item();
      data[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    worst = std::max(worst, std::sqrt(diff2) / denom);
  }
  return worst;
}

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, bool requires_grad = true) {
  std::vector<double> data(numel(shape));
  for (auto& v : data) v = rng.uniform(-1.0, 1.0);
  return Tensor<double>(std::move(shape), std::move(data), requires_grad);
}

// Values bounded away from zero so kinked ops are differentiable at every sample.
Tensor<double> off_zero_tensor(Shape shape, Rng& rng) {
  std::vector<double> data(numel(shape));
  for (auto& v : data) v = (rng.coin() ? 1.0 : -1.0) * rng.uniform(0.1, 1.0);
  return Tensor<double>(std::move(shape), std::move(data), true);
}

// Contracts an op output against a fixed random tensor so every output
// element contributes a distinct weight to the scalar.
Tensor<double> project(const Tensor<double>& out, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(out, random_tensor(out.shape(), rng, false)));
}

}  // namespace

std::vector<GradcheckResult> run_primitive_gradchecks(std::uint64_t seed, double tolerance) {
  std::vector<GradcheckResult> results;
  Rng rng(seed);
  const std::uint64_t proj = derive_seed(seed, 99);

  auto check = [&](const std::string& name, std::vector<Tensor<double>> inputs,
                   const ScalarFn& fn) {
    const double err = gradient_relative_error(fn, inputs);
    results.push_back({name, err, std::isfinite(err) && err < tolerance});
  };

  check("conv2d", {random_tensor({2, 3, 5, 5}, rng), random_tensor({4, 3, 3, 3}, rng),
                   random_tensor({4}, rng)},
        [&](const auto& in) { return project(conv2d(in[0], in[1], in[2], {1, 1, 1}), proj); });
  check("conv2d_strided_grouped",
        {random_tensor({1, 4, 6, 6}, rng), random_tensor({6, 2, 3, 3}, rng),
         random_tensor({6}, rng)},
        [&](const auto& in) { return project(conv2d(in[0], in[1], in[2], {2, 1, 2}), proj); });
  check("matmul_1x1",
        {random_tensor({2, 3, 4, 4}, rng), random_tensor({5, 3}, rng), random_tensor({5}, rng)},
        [&](const auto& in) { return project(matmul_1x1(in[0], in[1], in[2]), proj); });
  check("leaky_relu", {off_zero_tensor({2, 3, 4, 4}, rng)},
        [&](const auto& in) { return project(leaky_relu(in[0], 0.01), proj); });
  check("sigmoid", {random_tensor({2, 3, 4}, rng)},
        [&](const auto& in) { return project(sigmoid(in[0]), proj); });
  check("softmax", {random_tensor({2, 4, 3, 3}, rng)},
        [&](const auto& in) { return project(softmax(in[0], 1), proj); });
  check("global_avg_pool", {random_tensor({2, 3, 4, 5}, rng)},
        [&](const auto& in) { return project(global_avg_pool(in[0]), proj); });
  check("concat", {random_tensor({2, 2, 3, 3}, rng), random_tensor({2, 3, 3, 3}, rng)},
        [&](const auto& in) {
          std::array<Tensor<double>, 2> xs{in[0], in[1]};
          return project(concat<double>(xs, 1), proj);
        });
  check("add", {random_tensor({2, 3, 4, 4}, rng), random_tensor({2, 3, 4, 4}, rng)},
        [&](const auto& in) { return project(add(in[0], in[1]), proj); });
  check("sub", {random_tensor({2, 3, 4, 4}, rng), random_tensor({2, 3, 1, 1}, rng)},
        [&](const auto& in) { return project(sub(in[0], in[1]), proj); });
  check("mul_broadcast", {random_tensor({2, 3, 1, 1}, rng), random_tensor({2, 3, 4, 4}, rng)},
        [&](const auto& in) { return project(mul(in[0], in[1]), proj); });
  check("scale", {random_tensor({3, 4}, rng)},
        [&](const auto& in) { return project(scale(in[0], -1.7), proj); });
  check("reshape", {random_tensor({2, 3, 4}, rng)},
        [&](const auto& in) { return project(reshape(in[0], {4, 6}), proj); });
  check("pixel_shuffle", {random_tensor({2, 8, 3, 3}, rng)},
        [&](const auto& in) { return project(pixel_shuffle(in[0], 2), proj); });
  check("pixel_unshuffle", {random_tensor({1, 2, 4, 6}, rng)},
        [&](const auto& in) { return project(pixel_unshuffle(in[0], 2), proj); });
  check("mse_loss", {random_tensor({2, 3, 4}, rng), random_tensor({2, 3, 4}, rng)},
        [](const auto& in) { return mse_loss(in[0], in[1]); });
  check("sum", {random_tensor({3, 5}, rng)}, [](const auto& in) { return sum(in[0]); });
  check("window_attention",
        {random_tensor({2, 2, 9, 4, 5}, rng), random_tensor({2, 4, 4, 5}, rng)},
        [&](const auto& in) { return project(window_attention(in[0], in[1], 3), proj); });
  return results;
}

}  // namespace gapccot
