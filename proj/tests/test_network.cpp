#include <doctest.h>

#include <cmath>
#include <set>

#include "gapccot/errors.hpp"
#include "gapccot/gap.hpp"
#include "gapccot/network.hpp"
#include "support.hpp"

using namespace gapccot;
using namespace testsupport;

namespace {

using TD = Tensor<double>;

TD random_tensor(Shape shape, Rng& rng) {
  std::vector<double> d(numel(shape));
  for (auto& v : d) v = rng.uniform(-1.0, 1.0);
  return TD(std::move(shape), std::move(d));
}

void fill(TD& t, double v) {
  for (auto& e : t.mutable_data()) e = v;
}

// Saturates a sigmoid gate to exactly 0 or 1 in double precision.
constexpr double kSaturate = 800.0;

}  // namespace

TEST_SUITE("ccot_network") {
  TEST_CASE("conv branch output dims and identity path") {
    Rng rng(1);
    CCoTBlockConfig cfg{4, 8, 2, 3, 4, 4};
    ConvBranch<double> br(cfg, rng);
    auto y = br(random_tensor({1, 4, 32, 32}, rng));
    CHECK(y.shape() == Shape{1, 4, 16, 16});

    // Stride 1, delta kernel, gate forced open -> LeakyReLU(x).
    CCoTBlockConfig c1{2, 4, 1, 3, 1, 1};
    ConvBranch<double> id(c1, rng);
    fill(id.down.weight, 0.0);
    fill(id.down.bias, 0.0);
    for (std::size_t c = 0; c < 2; ++c) id.down.weight.mutable_data()[((c * 2 + c) * 3 + 1) * 3 + 1] = 1.0;
    fill(id.attention.expand.weight, 0.0);
    fill(id.attention.expand.bias, kSaturate);
    auto x = random_tensor({1, 2, 4, 4}, rng);
    auto out = id(x);
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const double v = x.data()[i];
      CHECK(std::abs(out.data()[i] - (v > 0 ? v : 0.01 * 0.01 * v)) < 1e-12);
    }

    // A closed gate zeroes its channel.
    fill(id.attention.expand.bias, 0.0);
    id.attention.expand.bias.mutable_data()[1] = -kSaturate;
    auto z = id(x);
    for (std::size_t i = 16; i < 32; ++i) CHECK(z.data()[i] == 0.0);

    CHECK_THROWS_AS(br(random_tensor({1, 4, 5, 6}, rng)), DimensionError);
  }

  TEST_CASE("cot block with delta attention and K2 fusion returns V") {
    Rng rng(2);
    CotBlock<double> blk(4, 3, 2, rng);
    fill(blk.delta.weight, 0.0);
    fill(blk.delta.bias, -kSaturate);
    for (std::size_t h = 0; h < 2; ++h) blk.delta.bias.mutable_data()[h * 9 + 4] = kSaturate;
    fill(blk.fuse.weight, 0.0);
    fill(blk.fuse.bias, -kSaturate);
    auto x = random_tensor({1, 4, 5, 5}, rng);
    auto t = blk.trace(x);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(t.output.data()[i] - t.value.data()[i]) < 1e-12);
  }

  TEST_CASE("cot block fused fully to K1 ignores Q and V") {
    Rng rng(3);
    CotBlock<double> blk(4, 3, 2, rng);
    fill(blk.fuse.weight, 0.0);
    fill(blk.fuse.bias, kSaturate);
    auto x = random_tensor({1, 4, 5, 5}, rng);
    auto before = blk(x);
    auto k1 = blk.key(x);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(before.data()[i] - k1.data()[i]) < 1e-12);
    for (auto& v : blk.value.weight.mutable_data()) v = rng.uniform(-1.0, 1.0);
    for (auto& v : blk.query.weight.mutable_data()) v = rng.uniform(-1.0, 1.0);
    auto after = blk(x);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(after.data()[i] - before.data()[i]) < 1e-12);
  }

  TEST_CASE("cot block matches the per-pixel oracle") {
    Rng rng(4);
    for (std::size_t k : {3u, 5u})
      for (std::size_t heads : {1u, 2u}) {
        const std::size_t C = 4, H = 8, W = 8;
        CotBlock<double> blk(C, k, heads, rng);
        for (auto* layer : {&blk.key, &blk.query, &blk.value, &blk.theta, &blk.delta, &blk.fuse})
          for (auto& v : layer->bias.mutable_data()) v = rng.uniform(-0.5, 0.5);
        auto x = random_tensor({1, C, H, W}, rng);
        auto t = blk.trace(x);
        auto ref = naive_cot(blk, std::vector<double>(x.data().begin(), x.data().end()), C, H, W);
        double worst_dyn = 0.0, worst_out = 0.0;
        for (std::size_t i = 0; i < ref.dynamic.size(); ++i) {
          worst_dyn = std::max(worst_dyn, std::abs(t.dynamic.data()[i] - ref.dynamic[i]));
          worst_out = std::max(worst_out, std::abs(t.output.data()[i] - ref.output[i]));
        }
        INFO("k=" << k << " heads=" << heads);
        CHECK(worst_dyn < 1e-12);
        CHECK(worst_out < 1e-12);
      }
  }

  TEST_CASE("3x3 input with a single head") {
    Rng rng(5);
    CotBlock<double> blk(2, 3, 1, rng);
    auto x = random_tensor({1, 2, 3, 3}, rng);
    auto t = blk.trace(x);
    auto ref = naive_cot(blk, std::vector<double>(x.data().begin(), x.data().end()), 2, 3, 3);
    for (std::size_t i = 0; i < ref.dynamic.size(); ++i) CHECK(std::abs(t.dynamic.data()[i] - ref.dynamic[i]) < 1e-12);
  }

  TEST_CASE("configuration errors") {
    Rng rng(6);
    CHECK_THROWS_AS(CotBlock<double>(6, 3, 4, rng), ConfigError);
    CHECK_THROWS_AS(CotBlock<double>(4, 2, 1, rng), ConfigError);
    CHECK_THROWS_AS(CCoTBlockConfig({4, 7, 2, 3, 1, 1}).validate(), ConfigError);
    CHECK_THROWS_AS(CCoTBlockConfig({4, 8, 2, 3, 3, 1}).validate(), ConfigError);
  }

  TEST_CASE("ccot block concatenates two equal halves") {
    Rng rng(7);
    CCoTBlockConfig cfg{4, 8, 2, 3, 2, 2};
    CCoTBlock<double> blk(cfg, rng);
    auto x = random_tensor({2, 4, 8, 8}, rng);
    auto y = blk(x);
    CHECK(y.shape() == Shape{2, 8, 4, 4});
    auto a = blk.conv_branch(x), b = blk.cot_branch(x);
    CHECK(a.dim(1) == 4);
    CHECK(b.dim(1) == 4);
    for (std::size_t i = 0; i < 4 * 16; ++i) {
      CHECK(y.data()[i] == a.data()[i]);
      CHECK(y.data()[64 + i] == b.data()[i]);
    }
    auto z1 = blk(TD::zeros({1, 4, 8, 8})), z2 = blk(TD::zeros({1, 4, 8, 8}));
    CHECK(values(z1) == values(z2));
  }

  TEST_CASE("ccot block gradients match finite differences") {
    CHECK(ccot_block_gradcheck(11) < 1e-3);
    CHECK(ccot_block_gradcheck(12, 1, 5) < 1e-3);
  }

  TEST_CASE("denoiser shape, purity and parameter count") {
    Rng rng(8);
    DenoiserNetConfig cfg;
    DenoiserNet<double> net(cfg, rng);
    auto x = random_tensor({1, 4, 32, 32}, rng);
    auto a = net(x), b = net(x);
    CHECK(a.shape() == x.shape());
    CHECK(values(a) == values(b));
    CHECK_THROWS_AS(net(random_tensor({1, 4, 12, 16}, rng)), DimensionError);
    CHECK_THROWS_AS(net(random_tensor({1, 3, 16, 16}, rng)), DimensionError);

    // Counted by hand from the layer shapes of the default toy config.
    CHECK(denoiser_parameter_count(cfg) == 12499);
    std::size_t total = 0;
    for (const auto& p : net.parameters()) total += p.tensor.numel();
    CHECK(total == 12499);

    DenoiserNetConfig other{2, 16, 5, 2, 4, false};
    DenoiserNet<double> net2(other, rng);
    total = 0;
    for (const auto& p : net2.parameters()) total += p.tensor.numel();
    CHECK(total == denoiser_parameter_count(other));
  }

  TEST_CASE("one stage with a zeroed head") {
    Rng rng(9);
    auto op = SensingOperator::cassi(random_mask(16, 16, rng), 4, 2);
    SpectralCube x(16, 16, 4);
    for (auto& v : x.data) v = rng.uniform();
    auto y = op.forward(x);

    GapCcotConfig cfg;
    cfg.stages = 1;
    cfg.denoiser.residual = true;
    GapCcotNet<double> net(cfg, 3);
    fill(net.stages()[0].head.weight, 0.0);
    fill(net.stages()[0].head.bias, 0.0);
    auto out = net.reconstruct(y, op);
    auto expect = project(op.adjoint(y), y, op);
    for (std::size_t i = 0; i < expect.data.size(); ++i) CHECK(std::abs(out.data[i] - expect.data[i]) < 1e-12);

    cfg.denoiser.residual = false;
    GapCcotNet<double> plain(cfg, 3);
    fill(plain.stages()[0].head.weight, 0.0);
    fill(plain.stages()[0].head.bias, 0.0);
    for (double v : plain.reconstruct(y, op).data) CHECK(v == 0.0);
  }

  TEST_CASE("measurement is met after every projection") {
    Rng rng(10);
    auto op = SensingOperator::cassi(random_mask(16, 16, rng, true), 4, 2);
    SpectralCube x(16, 16, 4);
    for (auto& v : x.data) v = rng.uniform();
    std::vector<Measurement> ys{op.forward(x)};
    GapCcotConfig cfg;
    cfg.stages = 3;
    GapCcotNet<double> net(cfg, 4);
    std::vector<TD> projected;
    net.forward(ys, op, &projected);
    REQUIRE(projected.size() == 3);
    for (const auto& p : projected) CHECK(measurement_residual(tensor_to_cube(p, 0), ys[0], op) < 1e-10);
  }

  TEST_CASE("stages are parameter-disjoint") {
    GapCcotConfig cfg;
    cfg.stages = 3;
    GapCcotNet<double> net(cfg, 5);
    std::set<const void*> nodes;
    std::set<std::string> names;
    for (const auto& p : net.parameters()) {
      nodes.insert(p.tensor.node());
      names.insert(p.name);
    }
    CHECK(nodes.size() == net.parameters().size());
    CHECK(names.size() == net.parameters().size());

    Rng rng(11);
    auto x = random_tensor({1, 4, 16, 16}, rng);
    auto before0 = net.stages()[0](x), before2 = net.stages()[2](x);
    for (auto& v : net.stages()[1].head.weight.mutable_data()) v += 1.0;
    CHECK(values(net.stages()[0](x)) == values(before0));
    CHECK(values(net.stages()[2](x)) == values(before2));
    // Different seeds per stage.
    CHECK(values(net.stages()[0].head.weight) != values(net.stages()[2].head.weight));
  }

  TEST_CASE("any compatible mask is accepted") {
    GapCcotConfig cfg;
    GapCcotNet<double> net(cfg, 6);
    Rng rng(12);
    for (int t = 0; t < 3; ++t) {
      auto op = SensingOperator::cassi(random_mask(16, 16, rng, t == 1), 4, 2);
      auto out = net.reconstruct(op.forward(SpectralCube(16, 16, 4, 0.5)), op);
      for (double v : out.data) CHECK(std::isfinite(v));
    }
    auto wrong = SensingOperator::cassi(random_mask(16, 16, rng), 3, 2);
    CHECK_THROWS_AS(net.reconstruct(wrong.forward(SpectralCube(16, 16, 3)), wrong), DimensionError);
  }

  TEST_CASE("full network gradient on sampled parameters") {
    Rng rng(13);
    GapCcotConfig cfg;
    cfg.stages = 2;
    cfg.denoiser.bands = 2;
    GapCcotNet<double> net(cfg, 7);
    auto op = SensingOperator::cassi(random_mask(16, 16, rng), 2, 2);
    SpectralCube x(16, 16, 2);
    for (auto& v : x.data) v = rng.uniform();
    std::vector<Measurement> ys{op.forward(x)};
    std::vector<SpectralCube> truth{x};
    auto target = cubes_to_tensor<double>(truth);
    auto params = net.parameters();
    for (auto& p : params)
      for (auto& v : p.tensor.mutable_data()) v += rng.uniform(-0.05, 0.05);
    auto loss_value = [&] {
      NoGradGuard guard;
      return mse_loss(net.forward(ys, op), target).item();
    };
    for (auto& p : params) p.tensor.zero_grad();
    mse_loss(net.forward(ys, op), target).backward();

    std::vector<double> analytic, numeric;
    for (int s = 0; s < 20; ++s) {
      auto& p = params[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(params.size()) - 1))];
      const auto i = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(p.tensor.numel()) - 1));
      const double h = 1e-5, orig = p.tensor.data()[i];
      p.tensor.mutable_data()[i] = orig + h;
      const double up = loss_value();
      p.tensor.mutable_data()[i] = orig - h;
      const double down = loss_value();
      p.tensor.mutable_data()[i] = orig;
      analytic.push_back(p.tensor.has_grad() ? p.tensor.grad()[i] : 0.0);
      numeric.push_back((up - down) / (2 * h));
    }
    std::vector<double> diff(analytic.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = analytic[i] - numeric[i];
    const double rel = norm(diff) / std::max({norm(analytic), norm(numeric), 1e-12});
    CHECK(rel < 1e-3);
  }
}
