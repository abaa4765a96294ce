#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "gapccot/checkpoint.hpp"
#include "gapccot/errors.hpp"
#include "gapccot/harness.hpp"
#include "gapccot/io.hpp"
#include "gapccot/metrics.hpp"
#include "gapccot/training.hpp"
#include "support.hpp"

using namespace gapccot;
using namespace testsupport;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "gapccot_toolkit_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

SpectralCube random_unit_cube(std::size_t r, std::size_t c, std::size_t b, Rng& rng) {
  SpectralCube x(r, c, b);
  for (auto& v : x.data) v = rng.uniform();
  return x;
}

// SSIM from its definition: explicit Gaussian window, weighted moments
// around the window mean, every fully contained window position.
double naive_ssim_band(const SpectralCube& x, const SpectralCube& y, std::size_t band) {
  const int n = 11;
  const double sigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double w[11][11], total = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) total += w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * sigma * sigma));
  for (auto& row : w)
    for (double& v : row) v /= total;
  double acc = 0.0;
  int count = 0;
  for (std::size_t r0 = 0; r0 + n <= x.rows; ++r0)
    for (std::size_t c0 = 0; c0 + n <= x.cols; ++c0) {
      double mx = 0, my = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          mx += w[i][j] * x.at(r0 + i, c0 + j, band);
          my += w[i][j] * y.at(r0 + i, c0 + j, band);
        }
      double vx = 0, vy = 0, cxy = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double dx = x.at(r0 + i, c0 + j, band) - mx, dy = y.at(r0 + i, c0 + j, band) - my;
          vx += w[i][j] * dx * dx;
          vy += w[i][j] * dy * dy;
          cxy += w[i][j] * dx * dy;
        }
      acc += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return acc / count;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("psnr") {
    Rng rng(1);
    auto x = random_unit_cube(8, 8, 3, rng);
    CHECK(std::isinf(psnr(x, x)));
    CHECK(psnr(x, x) > 0);
    auto y = x;
    for (auto& v : y.data) v += 0.1;
    CHECK(psnr(y, x) == doctest::Approx(20.0).epsilon(1e-9));
    auto per = psnr_per_band(y, x);
    REQUIRE(per.size() == 3);
    for (double p : per) CHECK(p == doctest::Approx(20.0).epsilon(1e-9));
    CHECK_THROWS_AS(psnr(x, SpectralCube(8, 8, 2)), DimensionError);
  }

  TEST_CASE("ssim") {
    Rng rng(2);
    auto x = random_unit_cube(16, 16, 2, rng);
    CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    auto inv = x;
    for (auto& v : inv.data) v = 1.0 - v;
    CHECK(ssim(inv, x) < 1.0);
    CHECK(ssim(inv, x) < 0.0);
    CHECK_THROWS_AS(ssim(random_unit_cube(10, 16, 1, rng), random_unit_cube(10, 16, 1, rng)), UsageError);
  }

  TEST_CASE("ssim matches the direct definition") {
    Rng rng(3);
    for (int t = 0; t < 3; ++t) {
      auto a = random_unit_cube(16, 16, 1, rng);
      auto b = a;
      for (auto& v : b.data) v = std::clamp(v + rng.normal(0.0, 0.1 * (t + 1)), 0.0, 1.0);
      CHECK(std::abs(ssim(b, a) - naive_ssim_band(b, a, 0)) < 1e-9);
    }
    auto a = random_unit_cube(13, 17, 3, rng), b = random_unit_cube(13, 17, 3, rng);
    double mean = 0.0;
    auto per = ssim_per_band(a, b);
    for (std::size_t band = 0; band < 3; ++band) {
      CHECK(std::abs(per[band] - naive_ssim_band(a, b, band)) < 1e-9);
      mean += per[band] / 3.0;
    }
    CHECK(ssim(a, b) == doctest::Approx(mean).epsilon(1e-12));
  }

  TEST_CASE("evaluate bundles both metrics") {
    Rng rng(4);
    auto a = random_unit_cube(12, 12, 2, rng), b = random_unit_cube(12, 12, 2, rng);
    auto rep = evaluate(a, b);
    CHECK(rep.psnr_db == psnr(a, b));
    CHECK(rep.ssim == ssim(a, b));
    CHECK(rep.psnr_per_band.size() == 2);
    CHECK(rep.ssim_per_band.size() == 2);
  }
}

TEST_SUITE("formats") {
  TEST_CASE("HSIC round trip is bit exact") {
    Rng rng(5);
    SpectralCube x = random_cube(5, 7, 3, rng);
    x.data[0] = -0.0;
    x.data[1] = std::numeric_limits<double>::denorm_min();
    auto back = decode_cube(encode_cube(x, DType::F64));
    CHECK(back.same_dims(x));
    CHECK(std::memcmp(back.data.data(), x.data.data(), x.data.size() * sizeof(double)) == 0);

    SpectralCube f(3, 2, 4);
    for (auto& v : f.data) v = static_cast<float>(rng.uniform());
    auto fb = decode_cube(encode_cube(f, DType::F32));
    CHECK(fb.data == f.data);
    auto path = scratch("cube.hsic");
    write_cube(path, x);
    CHECK(read_cube(path).data == x.data);
  }

  TEST_CASE("HSIC byte layout") {
    SpectralCube x(1, 2, 1);
    x.data = {1.0, 0.5};
    auto bytes = encode_cube(x, DType::F32);
    REQUIRE(bytes.size() == 4 + 2 + 12 + 1 + 8);
    CHECK(bytes.substr(0, 4) == "HSIC");
    CHECK(static_cast<unsigned char>(bytes[4]) == 1);
    CHECK(static_cast<unsigned char>(bytes[5]) == 0);
    CHECK(static_cast<unsigned char>(bytes[6]) == 1);   // rows
    CHECK(static_cast<unsigned char>(bytes[10]) == 2);  // cols
    CHECK(static_cast<unsigned char>(bytes[14]) == 1);  // bands
    CHECK(static_cast<unsigned char>(bytes[18]) == 1);  // f32
    float v;
    std::memcpy(&v, bytes.data() + 23, 4);
    CHECK(v == 0.5f);
  }

  TEST_CASE("HSIC rejects corruption") {
    auto good = encode_cube(SpectralCube(2, 2, 2, 0.25));
    auto bad = good;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_cube(bad), FormatError);
    CHECK_THROWS_AS(decode_cube(good.substr(0, good.size() - 1)), FormatError);
    CHECK_THROWS_AS(decode_cube(good + "x"), FormatError);
    auto wrong_version = good;
    wrong_version[4] = 9;
    CHECK_THROWS_AS(decode_cube(wrong_version), FormatError);
    auto wrong_dtype = good;
    wrong_dtype[18] = 7;
    CHECK_THROWS_AS(decode_cube(wrong_dtype), FormatError);
    CHECK_THROWS_AS(decode_cube(""), FormatError);
    try {
      read_cube(scratch("does_not_exist.hsic"));
      FAIL("expected an error");
    } catch (const std::exception& e) {
      CHECK(std::string(e.what()).find("does_not_exist.hsic") != std::string::npos);
    }
  }

  TEST_CASE("masks and measurements use the 2-d form") {
    Rng rng(6);
    auto m = random_mask(4, 5, rng);
    write_mask(scratch("m.hsic"), m);
    CHECK(read_mask(scratch("m.hsic")).data == m.data);
    auto y = random_measurement(3, 9, rng);
    write_measurement(scratch("y.hsic"), y);
    auto yb = read_measurement(scratch("y.hsic"));
    CHECK(yb.cols == 9);
    CHECK(yb.data == y.data);
    write_cube(scratch("c3.hsic"), SpectralCube(2, 2, 3));
    CHECK_THROWS_AS(read_mask(scratch("c3.hsic")), FormatError);
  }

  TEST_CASE("PGM export") {
    SpectralCube x(2, 3, 2);
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] = i / 11.0;
    x.data[0] = 2.0;  // clamped
    auto paths = export_bands_pgm(scratch("img").string(), x);
    REQUIRE(paths.size() == 2);
    CHECK(paths[1].filename() == "img_band01.pgm");
    auto text = read_file(paths[0]);
    const std::string header = "P5\n3 2\n65535\n";
    REQUIRE(text.substr(0, header.size()) == header);
    CHECK(text.size() == header.size() + 12);
    CHECK(static_cast<unsigned char>(text[header.size()]) == 0xff);
    CHECK(static_cast<unsigned char>(text[header.size() + 1]) == 0xff);
  }

  TEST_CASE("GCOT1 round trip") {
    GapCcotConfig cfg;
    cfg.stages = 2;
    cfg.denoiser.base_channels = 4;
    cfg.denoiser.heads = 2;
    cfg.denoiser.reduction = 2;
    cfg.normalized_init = true;
    GapCcotNet<float> a(cfg, 1), b(cfg, 2);
    auto bytes = encode_checkpoint(a);
    CHECK(bytes.substr(0, 5) == "GCOT1");
    decode_checkpoint(bytes, b);
    CHECK(encode_checkpoint(b) == bytes);
    auto pa = a.parameters(), pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(values(pa[i].tensor) == values(pb[i].tensor));

    auto c = checkpoint_config(bytes);
    CHECK(c.stages == 2);
    CHECK(c.denoiser.base_channels == 4);
    CHECK(c.denoiser.heads == 2);
    CHECK(c.normalized_init);

    save_checkpoint(a, scratch("net.gcot"));
    auto loaded = load_network(scratch("net.gcot"));
    CHECK(encode_checkpoint(loaded) == bytes);
  }

  TEST_CASE("GCOT1 rejects corruption and mismatched architectures") {
    GapCcotConfig cfg;
    cfg.denoiser.base_channels = 4;
    cfg.denoiser.heads = 2;
    cfg.denoiser.reduction = 2;
    GapCcotNet<float> a(cfg, 1);
    auto bytes = encode_checkpoint(a);
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad, a), FormatError);
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() / 2), a), FormatError);
    CHECK_THROWS_AS(decode_checkpoint(bytes + "junk", a), FormatError);

    GapCcotConfig other = cfg;
    other.denoiser.base_channels = 8;
    other.denoiser.heads = 4;
    GapCcotNet<float> wider(other, 1);
    CHECK_THROWS_AS(decode_checkpoint(bytes, wider), FormatError);
    other = cfg;
    other.stages = 3;
    GapCcotNet<float> deeper(other, 1);
    CHECK_THROWS_AS(decode_checkpoint(bytes, deeper), FormatError);
  }
}

TEST_SUITE("harness") {
  TEST_CASE("mask table and training-mask row") {
    SyntheticFamily fam{16, 16, 4, 3};
    auto eval = fam.samples(100, 3);
    auto masks = cropped_masks(16, 16, 3, 5);
    REQUIRE(masks.size() == 3);
    GapCcotNet<float> net(GapCcotConfig{}, 1);
    auto rows = mask_flexibility_harness<float>(net, masks, eval, 2);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].mask_id == "train");
    CHECK(rows[1].mask_id == "new1");
    auto op = SensingOperator::cassi(masks[0], 4, 2);
    auto direct = evaluate_network(net, op, eval);
    CHECK(rows[0].psnr == direct.mean_psnr);
    CHECK(rows[0].ssim == direct.mean_ssim);

    std::vector<Mask> same{masks[1], masks[1]};
    auto twin = mask_flexibility_harness<float>(net, same, eval, 2);
    CHECK(twin[0].psnr == twin[1].psnr);

    auto table = format_mask_table(rows);
    CHECK(table.rfind("mask\tpsnr_db\tssim\tdrop_db\n", 0) == 0);
    CHECK(std::count(table.begin(), table.end(), '\n') == 4);
    CHECK(table.find("train\t") != std::string::npos);

    std::vector<Mask> wrong{Mask(8, 8, 1.0)};
    CHECK_THROWS_AS(mask_flexibility_harness<float>(net, wrong, eval, 2), DimensionError);
  }

  TEST_CASE("stage sweep is deterministic and has one row per K") {
    SyntheticFamily fam{16, 16, 4, 3};
    Rng rng(2);
    auto op = SensingOperator::cassi(random_binary_mask(16, 16, rng), 4, 2);
    TrainConfig tc;
    tc.epochs = 1;
    tc.samples = 2;
    tc.augment = AugmentFlags::none();
    auto eval = fam.samples(50, 2);
    const std::vector<std::size_t> one{1};
    auto r1 = stage_sweep_harness(fam, op, one, DenoiserNetConfig{}, tc, eval);
    REQUIRE(r1.size() == 1);
    CHECK(r1[0].stages == 1);
    const std::vector<std::size_t> ks{1, 2};
    auto a = stage_sweep_harness(fam, op, ks, DenoiserNetConfig{}, tc, eval);
    auto b = stage_sweep_harness(fam, op, ks, DenoiserNetConfig{}, tc, eval);
    CHECK(format_stage_table(a) == format_stage_table(b));
    CHECK(a[0].psnr == r1[0].psnr);
  }

  TEST_CASE("GAP-TV evaluation") {
    SyntheticFamily fam{32, 32, 4, 3};
    Rng rng(3);
    auto op = SensingOperator::cassi(random_binary_mask(32, 32, rng), 4, 2);
    auto eval = fam.samples(0, 2);
    auto s = evaluate_gap_tv(op, eval, 5);
    CHECK(std::isfinite(s.mean_psnr));
    CHECK(s.mean_ssim <= 1.0);
  }
}
