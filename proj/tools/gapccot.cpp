// gapccot command-line front end.
//
// Exit codes: 0 success, 1 I/O or numeric failure, 2 usage error.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gapccot/checkpoint.hpp"
#include "gapccot/errors.hpp"
#include "gapccot/gap.hpp"
#include "gapccot/gradcheck.hpp"
#include "gapccot/harness.hpp"
#include "gapccot/io.hpp"
#include "gapccot/metrics.hpp"
#include "gapccot/training.hpp"

using namespace gapccot;
namespace fs = std::filesystem;

namespace {

std::string number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

struct NoiseOpts {
  std::string kind = "none";
  double sigma = 0.01;
  double peak = 1000.0;

  void add(CLI::App* app) {
    app->add_option("--noise", kind, "none, gaussian or shot")
        ->check(CLI::IsMember({"none", "gaussian", "shot"}));
    app->add_option("--sigma", sigma, "Gaussian noise standard deviation");
    app->add_option("--peak", peak, "shot noise photon scale");
  }
  NoiseSpec spec() const {
    if (kind == "gaussian") return NoiseSpec::gaussian(sigma);
    if (kind == "shot") return NoiseSpec::shot(peak);
    return NoiseSpec::none();
  }
};

struct NetOpts {
  std::size_t stages = 2;
  std::size_t base = 8;
  std::size_t kernel = 3;
  std::size_t heads = 4;
  std::size_t reduction = 4;
  bool residual = false;
  bool normalized_init = false;

  void add(CLI::App* app) {
    app->add_option("--stages", stages, "unfolded stages K");
    app->add_option("--base-channels", base, "channels of the first CCoT block");
    app->add_option("--cot-kernel", kernel, "static key kernel size");
    app->add_option("--heads", heads, "attention heads");
    app->add_option("--reduction", reduction, "channel attention squeeze ratio");
    app->add_flag("--residual", residual, "add the stage input to each denoiser output");
    app->add_flag("--normalized-init", normalized_init, "start from H^T(y/psi)");
  }
  GapCcotConfig config(std::size_t bands) const {
    GapCcotConfig cfg;
    cfg.stages = stages;
    cfg.normalized_init = normalized_init;
    cfg.denoiser = {bands, base, kernel, heads, reduction, residual};
    return cfg;
  }
};

struct TrainOpts {
  double lr = 1e-3;
  std::size_t epochs = 50;
  std::size_t batch = 1;
  std::size_t samples = 200;
  std::uint64_t family_seed = 7;
  bool no_augment = false;
  std::size_t crop = 0;
  double clip = 0.0;

  void add(CLI::App* app) {
    app->add_option("--lr", lr, "initial learning rate");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--batch", batch, "batch size");
    app->add_option("--samples", samples, "synthetic training scenes");
    app->add_option("--family-seed", family_seed, "seed of the synthetic scene family");
    app->add_flag("--no-augment", no_augment, "disable crop, rotation and flips");
    app->add_option("--crop", crop, "crop size (defaults to the mask size)");
    app->add_option("--clip-grad", clip, "global gradient norm limit, 0 disables");
  }
  TrainConfig config(std::uint64_t seed, const NoiseSpec& noise, std::size_t rows) const {
    TrainConfig tc;
    tc.lr0 = lr;
    tc.epochs = epochs;
    tc.batch = batch;
    tc.samples = samples;
    tc.seed = seed;
    tc.noise = noise;
    tc.clip_grad_norm = clip;
    tc.augment = no_augment ? AugmentFlags::none() : AugmentFlags{};
    tc.augment.crop_size = crop ? crop : rows;
    return tc;
  }
};

SensingOperator load_operator(const fs::path& mask_path, std::size_t bands, std::size_t d,
                              const std::string& kind) {
  if (kind == "video") {
    // Frames are stored as the bands of one cube.
    const SpectralCube frames = read_cube(mask_path);
    std::vector<Mask> masks;
    for (std::size_t t = 0; t < frames.bands; ++t) {
      Mask m(frames.rows, frames.cols);
      for (std::size_t r = 0; r < frames.rows; ++r)
        for (std::size_t c = 0; c < frames.cols; ++c) m.at(r, c) = frames.at(r, c, t);
      masks.push_back(std::move(m));
    }
    return SensingOperator::video(std::move(masks));
  }
  return SensingOperator::cassi(read_mask(mask_path), bands, d);
}

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    const auto v = std::stoul(item, &pos);
    if (pos != item.size()) throw UsageError("not a number: " + item);
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("empty list");
  return out;
}

void emit(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
  } else {
    write_file(path, text);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Snapshot compressive imaging: simulation, GAP-TV and GAP-CCoT reconstruction"};
  app.set_config("--config", "", "TOML or INI file; command-line flags take precedence");
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", seed, "random seed"); };

  // generate
  auto* gen = app.add_subcommand("generate", "write a synthetic scene and/or a random binary mask");
  std::string gen_cube, gen_mask;
  std::size_t gen_rows = 32, gen_cols = 32, gen_bands = 4, gen_index = 0;
  std::uint64_t gen_family = 7;
  double gen_density = 0.5;
  gen->add_option("--cube", gen_cube, "output cube path");
  gen->add_option("--mask", gen_mask, "output mask path");
  gen->add_option("--rows", gen_rows);
  gen->add_option("--cols", gen_cols);
  gen->add_option("--bands", gen_bands);
  gen->add_option("--index", gen_index, "scene index within the family");
  gen->add_option("--family-seed", gen_family);
  gen->add_option("--density", gen_density, "fraction of open mask pixels");
  add_seed(gen);

  // simulate
  auto* sim = app.add_subcommand("simulate", "apply the forward model to a cube");
  std::string sim_cube, sim_mask, sim_out, sim_kind = "cassi";
  std::size_t sim_d = 2;
  NoiseOpts sim_noise;
  sim->add_option("--cube", sim_cube)->required();
  sim->add_option("--mask", sim_mask)->required();
  sim->add_option("--out", sim_out)->required();
  sim->add_option("--d", sim_d, "dispersion step in columns per band");
  sim->add_option("--kind", sim_kind, "cassi or video")->check(CLI::IsMember({"cassi", "video"}));
  sim_noise.add(sim);
  add_seed(sim);

  // reconstruct
  auto* rec = app.add_subcommand("reconstruct", "recover a cube from a measurement");
  std::string rec_alg = "gap-tv", rec_y, rec_mask, rec_out, rec_ckpt, rec_pgm, rec_trace,
              rec_kind = "cassi";
  std::size_t rec_d = 2, rec_bands = 4, rec_stages = 30, rec_tv_iters = 30;
  double rec_tv_weight = 0.1;
  rec->add_option("--alg", rec_alg)->check(CLI::IsMember({"gap-tv", "gap-ccot"}));
  rec->add_option("--measurement", rec_y)->required();
  rec->add_option("--mask", rec_mask)->required();
  rec->add_option("--out", rec_out)->required();
  rec->add_option("--d", rec_d);
  rec->add_option("--bands", rec_bands, "spectral bands (CASSI, gap-tv)");
  rec->add_option("--kind", rec_kind)->check(CLI::IsMember({"cassi", "video"}));
  rec->add_option("--stages", rec_stages, "GAP-TV iterations");
  rec->add_option("--tv-weight", rec_tv_weight);
  rec->add_option("--tv-iters", rec_tv_iters);
  rec->add_option("--checkpoint", rec_ckpt, "trained network (gap-ccot)");
  rec->add_option("--export-pgm", rec_pgm, "write one 16-bit PGM per band with this prefix");
  rec->add_option("--trace", rec_trace, "write per-stage measurement residuals (gap-tv)");
  add_seed(rec);

  // train
  auto* trn = app.add_subcommand("train", "train GAP-CCoT on the synthetic family");
  std::string trn_mask, trn_ckpt, trn_curve;
  std::size_t trn_d = 2, trn_bands = 4;
  NetOpts trn_net;
  TrainOpts trn_opts;
  NoiseOpts trn_noise;
  trn->add_option("--mask", trn_mask)->required();
  trn->add_option("--checkpoint", trn_ckpt)->required();
  trn->add_option("--loss-curve", trn_curve);
  trn->add_option("--d", trn_d);
  trn->add_option("--bands", trn_bands);
  trn_net.add(trn);
  trn_opts.add(trn);
  trn_noise.add(trn);
  add_seed(trn);

  // eval
  auto* ev = app.add_subcommand("eval", "PSNR and SSIM of reconstructions");
  std::string ev_x, ev_ref, ev_dir, ev_ref_dir;
  ev->add_option("--x", ev_x, "reconstruction");
  ev->add_option("--ref", ev_ref, "ground truth");
  ev->add_option("--dir", ev_dir, "directory of reconstructions (*.hsic)");
  ev->add_option("--ref-dir", ev_ref_dir, "directory with same-named ground truth");
  add_seed(ev);

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every autodiff primitive");
  double gc_tol = 1e-4;
  gc->add_option("--tol", gc_tol);
  add_seed(gc);

  // sweep
  auto* sw = app.add_subcommand("sweep", "stage-count or mask-flexibility experiments");
  sw->require_subcommand(1);
  auto* sw_stages = sw->add_subcommand("stages", "train one net per stage count");
  std::string sws_mask, sws_list = "1,2,3", sws_out;
  std::size_t sws_d = 2, sws_bands = 4, sws_eval = 20;
  NetOpts sws_net;
  TrainOpts sws_opts;
  sw_stages->add_option("--mask", sws_mask)->required();
  sw_stages->add_option("--ks", sws_list, "comma-separated stage counts");
  sw_stages->add_option("--out", sws_out, "TSV report path (stdout if omitted)");
  sw_stages->add_option("--d", sws_d);
  sw_stages->add_option("--bands", sws_bands);
  sw_stages->add_option("--eval-count", sws_eval, "held-out scenes");
  sws_net.add(sw_stages);
  sws_opts.add(sw_stages);
  add_seed(sw_stages);
  auto* sw_masks = sw->add_subcommand("masks", "evaluate a trained net under unseen masks");
  std::string swm_ckpt, swm_mask, swm_out;
  std::size_t swm_d = 2, swm_count = 5, swm_eval = 20;
  std::uint64_t swm_family = 7;
  sw_masks->add_option("--checkpoint", swm_ckpt)->required();
  sw_masks->add_option("--mask", swm_mask, "training mask")->required();
  sw_masks->add_option("--count", swm_count, "unseen masks");
  sw_masks->add_option("--out", swm_out);
  sw_masks->add_option("--d", swm_d);
  sw_masks->add_option("--eval-count", swm_eval);
  sw_masks->add_option("--family-seed", swm_family);
  add_seed(sw_masks);

  // info
  auto* inf = app.add_subcommand("info", "describe a checkpoint");
  std::string inf_ckpt;
  inf->add_option("--checkpoint", inf_ckpt)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) {
      if (gen_cube.empty() && gen_mask.empty()) throw UsageError("generate: give --cube and/or --mask");
      if (!gen_cube.empty()) write_cube(gen_cube, SyntheticFamily{gen_rows, gen_cols, gen_bands, gen_family}.sample(gen_index));
      if (!gen_mask.empty()) {
        Rng rng(seed);
        write_mask(gen_mask, random_binary_mask(gen_rows, gen_cols, rng, gen_density));
      }
    } else if (*sim) {
      const SpectralCube x = read_cube(sim_cube);
      const auto op = load_operator(sim_mask, x.bands, sim_d, sim_kind);
      Rng rng(seed);
      write_measurement(sim_out, op.forward(x, sim_noise.spec(), rng));
    } else if (*rec) {
      const Measurement y = read_measurement(rec_y);
      SpectralCube x;
      if (rec_alg == "gap-tv") {
        const auto op = load_operator(rec_mask, rec_bands, rec_d, rec_kind);
        GapConfig cfg = gap_tv_config(rec_stages, rec_tv_weight, rec_tv_iters);
        cfg.record_trace = !rec_trace.empty();
        auto res = gap_reconstruct(y, op, cfg);
        x = std::move(res.cube);
        if (!rec_trace.empty()) {
          std::string text;
          for (std::size_t k = 0; k < res.trace.size(); ++k)
            text += std::to_string(k + 1) + "\t" + number(res.trace[k]) + "\n";
          write_file(rec_trace, text);
        }
      } else {
        if (rec_ckpt.empty()) throw UsageError("reconstruct: gap-ccot needs --checkpoint");
        const auto net = load_network(rec_ckpt);
        const auto op = load_operator(rec_mask, net.config().denoiser.bands, rec_d, rec_kind);
        x = net.reconstruct(y, op);
        clip01(x);
      }
      write_cube(rec_out, x);
      if (!rec_pgm.empty()) export_bands_pgm(rec_pgm, x);
    } else if (*trn) {
      const auto op = SensingOperator::cassi(read_mask(trn_mask), trn_bands, trn_d);
      GapCcotNet<float> net(trn_net.config(trn_bands), seed);
      const SyntheticFamily family{op.rows(), op.cols(), trn_bands, trn_opts.family_seed};
      TrainOutputs outs{fs::path(trn_ckpt), std::nullopt};
      if (!trn_curve.empty()) outs.loss_curve = fs::path(trn_curve);
      const auto rep = train(net, family, op, trn_opts.config(seed, trn_noise.spec(), op.rows()), outs);
      std::cout << "epochs\t" << rep.epoch_loss.size() << "\nfinal_loss\t" << number(rep.epoch_loss.back()) << "\n";
    } else if (*ev) {
      if (!ev_dir.empty()) {
        if (ev_ref_dir.empty()) throw UsageError("eval: --dir needs --ref-dir");
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(ev_dir))
          if (e.is_regular_file() && e.path().extension() == ".hsic") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        if (files.empty()) throw std::runtime_error(ev_dir + ": no .hsic files");
        std::string out = "file\tpsnr_db\tssim\n";
        double mp = 0.0, ms = 0.0;
        for (const auto& f : files) {
          const auto q = evaluate(read_cube(f), read_cube(fs::path(ev_ref_dir) / f.filename()));
          out += f.filename().string() + "\t" + number(q.psnr_db) + "\t" + number(q.ssim) + "\n";
          mp += q.psnr_db / static_cast<double>(files.size());
          ms += q.ssim / static_cast<double>(files.size());
        }
        out += "mean\t" + number(mp) + "\t" + number(ms) + "\n";
        std::cout << out;
      } else {
        if (ev_x.empty() || ev_ref.empty()) throw UsageError("eval: give --x and --ref, or --dir and --ref-dir");
        const auto q = evaluate(read_cube(ev_x), read_cube(ev_ref));
        std::cout << "PSNR\t" << number(q.psnr_db) << "\nSSIM\t" << number(q.ssim) << "\n";
      }
    } else if (*gc) {
      bool all = true;
      for (const auto& r : run_primitive_gradchecks(seed, gc_tol)) {
        std::printf("%s\t%.3e\t%s\n", r.name.c_str(), r.relative_error, r.passed ? "ok" : "FAIL");
        all = all && r.passed;
      }
      return all ? 0 : 1;
    } else if (*sw_stages) {
      const auto op = SensingOperator::cassi(read_mask(sws_mask), sws_bands, sws_d);
      const SyntheticFamily family{op.rows(), op.cols(), sws_bands, sws_opts.family_seed};
      const auto eval = family.samples(1000000, sws_eval);
      const auto ks = parse_list(sws_list);
      const auto rows = stage_sweep_harness(family, op, ks, sws_net.config(sws_bands).denoiser,
                                            sws_opts.config(seed, NoiseSpec::none(), op.rows()), eval);
      emit(format_stage_table(rows), sws_out);
    } else if (*sw_masks) {
      const auto net = load_network(swm_ckpt);
      const Mask train_mask = read_mask(swm_mask);
      std::vector<Mask> masks{train_mask};
      for (auto& m : cropped_masks(train_mask.rows, train_mask.cols, swm_count, seed)) masks.push_back(std::move(m));
      const SyntheticFamily family{train_mask.rows, train_mask.cols, net.config().denoiser.bands, swm_family};
      const auto eval = family.samples(1000000, swm_eval);
      emit(format_mask_table(mask_flexibility_harness<float>(net, masks, eval, swm_d)), swm_out);
    } else if (*inf) {
      const std::string bytes = read_file(inf_ckpt);
      const auto cfg = checkpoint_config(bytes);
      GapCcotNet<float> net(cfg, 0);
      decode_checkpoint(bytes, net);
      std::cout << "stages\t" << cfg.stages << "\nbands\t" << cfg.denoiser.bands << "\nbase_channels\t"
                << cfg.denoiser.base_channels << "\nparameters_per_stage\t"
                << denoiser_parameter_count(cfg.denoiser) << "\n";
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
