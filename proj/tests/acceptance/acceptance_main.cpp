// Acceptance suite: one line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdarg>
#include <cstring>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "sinet/grad_check.hpp"
#include "sinet/trainer.hpp"
#include "sinet/weights_io.hpp"
#include "support/oracles.hpp"

using namespace sinet;

namespace {

int g_failures = 0;

struct Criterion {
  std::string name;
  std::chrono::steady_clock::time_point start;

  explicit Criterion(std::string n) : name(std::move(n)) {
    start = std::chrono::steady_clock::now();
  }
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  void report(bool ok, const std::string& detail) const {
    std::printf("%s %-24s %7.2fs  %s\n", ok ? "PASS" : "FAIL", name.c_str(), seconds(),
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
  }
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

void jitter(ParamList<double>& ps, Rng& rng) {
  for (auto& p : ps) {
    for (auto& v : p.tensor.mut_data()) {
      v += rng.uniform(0.05, 0.35) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    }
  }
}

// ---------------------------------------------------------------------------

void criterion_params_portrait() {
  Criterion c("portrait-params");
  Model m = build_sinet("portrait", 2, DecoderKind::IB);
  const long total = m.count_params().total_params;
  const bool in_band = total >= 82555 && total <= 91245;
  const bool in_time = c.seconds() < 1.0;
  c.report(in_band && in_time,
           fmt("params=%ld, target 86900 +-5%% [82555, 91245]", total));
}

void criterion_flops_portrait() {
  Criterion c("portrait-flops");
  Model m = build_sinet("portrait", 2, DecoderKind::IB);
  ModelSummary s = m.count_flops(224, 224);
  const double mac = s.flops(FlopConvention::MAC) / 1e9;
  const double two = s.flops(FlopConvention::TwoMAC) / 1e9;
  const double err_mac = std::abs(mac - 0.064) / 0.064;
  const double err_two = std::abs(two - 0.064) / 0.064;
  const bool ok = std::min(err_mac, err_two) <= 0.15 && c.seconds() < 1.0;
  c.report(ok, fmt("flops=%.4fG (mac) / %.4fG (2mac); best err %.1f%% vs 0.064G", mac, two,
                   100.0 * std::min(err_mac, err_two)));
}

void criterion_cityscapes() {
  Criterion c("cityscapes-summary");
  Model m = build_sinet("cityscapes", 20, DecoderKind::IB);
  const long params = m.count_params().total_params;
  const bool params_ok = params >= 108000 && params <= 132000;
  const double full = m.count_flops(1024, 2048).flops(FlopConvention::MAC) / 1e9;
  const double half = m.count_flops(512, 2048).flops(FlopConvention::MAC) / 1e9;
  const double err_full = std::abs(full - 1.2) / 1.2;
  const double err_half = std::abs(half - 1.2) / 1.2;
  const bool flops_ok = std::min(err_full, err_half) <= 0.20;
  const bool ok = params_ok && flops_ok && c.seconds() < 5.0;
  c.report(ok, fmt("params=%ld [108000, 132000]; flops 2048x1024=%.3fG, 2048x512=%.3fG "
                   "(1.2G +-20%% at one)",
                   params, full, half));
}

void criterion_shape_audit() {
  Criterion c("shape-audit");
  bool ok = true;
  std::string detail;
  try {
    Model p = build_sinet("portrait", 2, DecoderKind::IB);
    Model ct = build_sinet("cityscapes", 20, DecoderKind::IB);
    ok = p.table().rows.size() == 14 && ct.table().rows.size() == 18;
    detail = fmt("portrait %zu rows, cityscapes %zu rows, all declared shapes reproduced",
                 p.table().rows.size(), ct.table().rows.size());
  } catch (const std::exception& e) {
    ok = false;
    detail = e.what();
  }
  // A deliberately broken declaration must be caught exactly.
  try {
    ArchTable broken = arch_preset("portrait");
    broken.rows[8].out_w = 27;
    build_sinet(broken, 2, DecoderKind::IB);
    ok = false;
    detail += "; tampered table was NOT rejected";
  } catch (const ConfigError&) {
  }
  c.report(ok, detail);
}

using GradCase = std::function<double(uint64_t seed)>;

double conv_case(uint64_t seed, int in_c, int out_c, int k_h, int k_w, int stride,
                 int pad_h, int pad_w, int dilation, int groups, bool bias) {
  Rng rng(seed);
  TensorD x = TensorD::rand_uniform({2, in_c, 7, 7}, rng);
  TensorD w = TensorD::rand_uniform({out_c, in_c / groups, k_h, k_w}, rng);
  ConvSpec spec{.in_channels = in_c, .out_channels = out_c, .kh = k_h, .kw = k_w,
                .sh = stride, .sw = stride, .ph = pad_h, .pw = pad_w, .dh = dilation,
                .dw = dilation, .groups = groups, .has_bias = bias};
  std::vector<TensorD> inputs{x, w};
  std::optional<TensorD> b;
  if (bias) {
    b = TensorD::rand_uniform({1, out_c, 1, 1}, rng);
    inputs.push_back(*b);
  }
  auto res = grad_check(
      [&](const std::vector<TensorD>& in) {
        return conv2d(in[0], in[1], bias ? std::optional<TensorD>(in[2]) : std::nullopt,
                      spec);
      },
      inputs, 1e-4, seed * 31 + 7);
  return res.max_rel_err;
}

void criterion_gradient_suite() {
  Criterion c("gradient-suite");
  struct Family {
    std::string name;
    GradCase run;
  };
  std::vector<Family> families;

  families.push_back({"conv 3x3 s2", [](uint64_t s) {
    return conv_case(s, 4, 6, 3, 3, 2, 1, 1, 1, 1, false);
  }});
  families.push_back({"conv pointwise g2", [](uint64_t s) {
    return conv_case(s, 4, 6, 1, 1, 1, 0, 0, 1, 2, false);
  }});
  families.push_back({"conv pointwise bias", [](uint64_t s) {
    return conv_case(s, 4, 4, 1, 1, 1, 0, 0, 1, 1, true);
  }});
  families.push_back({"conv depthwise 5x5", [](uint64_t s) {
    return conv_case(s, 4, 4, 5, 5, 1, 2, 2, 1, 4, false);
  }});
  families.push_back({"conv depthwise dilated", [](uint64_t s) {
    return conv_case(s, 4, 4, 3, 3, 1, 2, 2, 2, 4, false);
  }});
  families.push_back({"conv asymmetric 3x1", [](uint64_t s) {
    return conv_case(s, 4, 4, 3, 1, 1, 1, 0, 1, 4, false);
  }});
  families.push_back({"avg_pool", [](uint64_t s) {
    Rng rng(s);
    TensorD x = TensorD::rand_uniform({2, 3, 8, 8}, rng);
    return grad_check([](const std::vector<TensorD>& in) { return avg_pool2d(in[0], 2); },
                      {x}, 1e-4, s)
        .max_rel_err;
  }});
  families.push_back({"bilinear_upsample", [](uint64_t s) {
    Rng rng(s);
    TensorD x = TensorD::rand_uniform({2, 3, 5, 7}, rng);
    return grad_check(
               [](const std::vector<TensorD>& in) { return bilinear_upsample(in[0], 11, 13); },
               {x}, 1e-4, s)
        .max_rel_err;
  }});
  families.push_back({"batch_norm train", [](uint64_t s) {
    Rng rng(s);
    TensorD x = TensorD::rand_uniform({3, 4, 5, 5}, rng);
    TensorD g = TensorD::rand_uniform({1, 4, 1, 1}, rng, 0.5, 1.5);
    TensorD b = TensorD::rand_uniform({1, 4, 1, 1}, rng, -0.5, 0.5);
    return grad_check(
               [](const std::vector<TensorD>& in) {
                 return batch_norm<double>(in[0], in[1], in[2], nullptr, nullptr, true, 0.1, 1e-5);
               },
               {x, g, b}, 1e-4, s)
        .max_rel_err;
  }});
  families.push_back({"prelu", [](uint64_t s) {
    Rng rng(s);
    TensorD x = TensorD::rand_uniform({2, 4, 6, 6}, rng);
    TensorD a = TensorD::rand_uniform({1, 4, 1, 1}, rng, 0.1, 0.4);
    return grad_check(
               [](const std::vector<TensorD>& in) { return prelu(in[0], in[1]); },
               {x, a}, 1e-4, s)
        .max_rel_err;
  }});
  families.push_back({"squeeze_excite", [](uint64_t s) {
    Rng rng(s);
    SqueezeExcite<double> se(8, 4, rng);
    ParamList<double> ps;
    se.collect_params("se", ps);
    jitter(ps, rng);
    TensorD x = TensorD::rand_uniform({2, 8, 4, 4}, rng);
    std::vector<TensorD> inputs{x};
    for (auto& p : ps) inputs.push_back(p.tensor);
    return grad_check(
               [&](const std::vector<TensorD>& in) { return se.forward(in[0]); }, inputs,
               1e-4, s)
        .max_rel_err;
  }});
  families.push_back({"s2_block", [](uint64_t s) {
    Rng rng(s);
    S2Block<double> blk(6, 6, {6, 3, 2, false}, rng);
    ParamList<double> ps;
    blk.collect_params("b", ps);
    jitter(ps, rng);
    TensorD x = TensorD::rand_uniform({1, 6, 8, 8}, rng);
    std::vector<TensorD> inputs{x};
    for (auto& p : ps) inputs.push_back(p.tensor);
    return grad_check(
               [&](const std::vector<TensorD>& in) { return blk.forward(in[0], true); },
               inputs, 1e-4, s)
        .max_rel_err;
  }});
  families.push_back({"s2_module", [](uint64_t s) {
    Rng rng(s);
    S2ModuleConfig cfg;
    cfg.in_channels = 8;
    cfg.out_channels = 8;
    cfg.block_a = {4, 3, 1, false};
    cfg.block_b = {4, 5, 2, false};
    cfg.residual = true;
    S2Module<double> m(cfg, rng);
    ParamList<double> ps;
    m.collect_params("m", ps);
    jitter(ps, rng);
    TensorD x = TensorD::rand_uniform({1, 8, 8, 8}, rng);
    std::vector<TensorD> inputs{x};
    for (auto& p : ps) inputs.push_back(p.tensor);
    return grad_check(
               [&](const std::vector<TensorD>& in) { return m.forward(in[0], true); },
               inputs, 1e-4, s)
        .max_rel_err;
  }});
  for (DecoderKind kind : {DecoderKind::IB, DecoderKind::ReverseIB, DecoderKind::RemoveIB,
                           DecoderKind::GAU}) {
    families.push_back({"decoder " + decoder_kind_name(kind), [kind](uint64_t s) {
      Rng rng(s);
      DecoderStage<double> stage(kind, 4, 2, rng);
      ParamList<double> ps;
      stage.collect_params("d", ps);
      jitter(ps, rng);
      TensorD low = TensorD::rand_uniform({2, 2, 3, 3}, rng);
      TensorD high = TensorD::rand_uniform({2, 4, 6, 6}, rng);
      std::vector<TensorD> inputs{low, high};
      for (auto& p : ps) inputs.push_back(p.tensor);
      return grad_check(
                 [&](const std::vector<TensorD>& in) {
                   return stage.forward(in[0], in[1], true);
                 },
                 inputs, 1e-4, s)
          .max_rel_err;
    }});
  }
  families.push_back({"boundary loss", [](uint64_t s) {
    Rng rng(s);
    TensorD logits = TensorD::rand_uniform({2, 2, 12, 12}, rng, -2.0, 2.0);
    std::vector<BinaryMask> masks;
    for (int n = 0; n < 2; ++n) {
      BinaryMask m = BinaryMask::zeros(12, 12);
      for (auto& v : m.v) v = rng.uniform() < 0.5 ? 1 : 0;
      masks.push_back(std::move(m));
    }
    LossConfig cfg;
    cfg.structuring_size = 5;
    std::vector<BinaryMask> bands;
    for (const auto& m : masks) bands.push_back(boundary_band(m, cfg.structuring_size));
    return grad_check(
               [&](const std::vector<TensorD>& in) {
                 return boundary_weighted_ce(in[0], masks, cfg, &bands);
               },
               {logits}, 1e-4, s)
        .max_rel_err;
  }});

  bool all_ok = true;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& family : families) {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
      const double err = family.run(seed * 1001);
      if (err > worst) {
        worst = err;
        worst_name = family.name + " seed " + std::to_string(seed);
      }
      if (err >= 1e-4) all_ok = false;
    }
  }
  c.report(all_ok, fmt("%zu families x 20 seeds; worst %.3e (%s), bound 1e-4",
                       families.size(), worst, worst_name.c_str()));
}

void criterion_morphology() {
  Criterion c("morphology-loss");
  Rng rng(404);
  bool ok = true;
  for (int trial = 0; trial < 200; ++trial) {
    BinaryMask m = BinaryMask::zeros(32, 32);
    const double density = rng.uniform(0.05, 0.95);
    for (auto& v : m.v) v = rng.uniform() < density ? 1 : 0;
    const int size = 2 * static_cast<int>(rng.uniform_index(8)) + 1;  // odd in [1, 15]
    if (boundary_band(m, size).v != oracle::band_ref(m.v, 32, 32, size)) {
      ok = false;
      break;
    }
  }
  BinaryMask mask = BinaryMask::zeros(32, 32);
  for (long y = 10; y < 22; ++y) {
    for (long x = 10; x < 22; ++x) mask.set(y, x, 1);
  }
  TensorF logits = TensorF::zeros({1, 2, 32, 32});
  LossConfig plain;
  plain.lambda = 0.0;
  const double l0 = boundary_weighted_ce(logits, {mask}, plain).data()[0];
  LossConfig weighted;
  weighted.lambda = 0.5;
  const double l5 = boundary_weighted_ce(logits, {mask}, weighted).data()[0];
  const bool loss_ok = std::abs(l0 - std::log(2.0)) <= 1e-6 &&
                       std::abs(l5 - 1.5 * std::log(2.0)) <= 1e-6;
  c.report(ok && loss_ok,
           fmt("200 masks exact vs oracle; loss(0)=%.8f vs ln2, loss(0.5)=%.8f vs 1.5ln2",
               l0, l5));
}

void criterion_ib_invariant() {
  Criterion c("ib-blocking");
  Rng rng(77);
  DecoderStage<double> ib(DecoderKind::IB, 6, 2, rng);
  DecoderStage<double> remove(DecoderKind::RemoveIB, 6, 2, rng);
  remove.proj = ib.proj;

  TensorD low = TensorD::zeros({1, 2, 4, 4});
  for (long i = 0; i < 16; ++i) {
    low.mut_data()[static_cast<size_t>(i)] = 30.0;
    low.mut_data()[static_cast<size_t>(16 + i)] = -30.0;
  }
  // Confidence saturates: 1 - c below 1e-9 everywhere.
  auto maps = make_confidence_maps(bilinear_upsample(low, 8, 8));
  double max_blocking = 0.0;
  for (double b : maps.blocking.data()) max_blocking = std::max(max_blocking, b);

  TensorD high = TensorD::rand_uniform({1, 6, 8, 8}, rng);
  TensorD high_up = affine(high, 1.0, 10.0);
  TensorD high_dn = affine(high, 1.0, -10.0);

  double ib_delta = 0.0;
  TensorD base = ib.forward(low, high, false);
  for (const TensorD& variant : {high_up, high_dn}) {
    TensorD out = ib.forward(low, variant, false);
    for (long i = 0; i < out.numel(); ++i) {
      ib_delta = std::max(ib_delta, std::abs(out.data()[i] - base.data()[i]));
    }
  }

  // RemoveIB must move by exactly the projected perturbation.
  TensorD r_base = remove.forward(low, high, false);
  TensorD r_up = remove.forward(low, high_up, false);
  TensorD p_base = remove.proj.forward(high, false);
  TensorD p_up = remove.proj.forward(high_up, false);
  double remove_err = 0.0, remove_mag = 0.0;
  for (long i = 0; i < r_base.numel(); ++i) {
    const double got = r_up.data()[i] - r_base.data()[i];
    const double want = p_up.data()[i] - p_base.data()[i];
    remove_err = std::max(remove_err, std::abs(got - want));
    remove_mag = std::max(remove_mag, std::abs(want));
  }
  const bool ok = max_blocking <= 1e-9 && ib_delta <= 1e-6 && remove_err <= 1e-9 &&
                  remove_mag > 1e-3;
  c.report(ok, fmt("blocking<=%.1e; IB moves %.1e (<=1e-6); RemoveIB moves by the "
                   "projection (err %.1e, magnitude %.2f)",
                   max_blocking, ib_delta, remove_err, remove_mag));
}

void criterion_toy_overfit() {
  Criterion c("toy-overfit");
  ToyDatasetConfig dcfg;
  dcfg.count = 8;
  dcfg.image_size = 64;
  dcfg.seed = 7;
  auto data = make_toy_dataset(dcfg);
  Model m = build_sinet("toy", 2, DecoderKind::IB, 42);
  TwoStageSchedule sched{40, 100, 4, 4};
  OptimConfig optim;
  optim.seed = 1;
  TrainReport r = train_two_stage(m, data, sched, optim, {});
  const bool ok = r.best_stage2_miou > 0.95 && c.seconds() < 300.0;
  c.report(ok, fmt("training mIoU %.4f (> 0.95), schedule 40/100 on 8 images",
                   r.best_stage2_miou));
}

void criterion_rotation_direction() {
  Criterion c("rotation-ablation");
  ToyDatasetConfig dcfg;
  dcfg.count = 8;
  dcfg.image_size = 64;
  dcfg.seed = 7;
  auto train_data = make_toy_dataset(dcfg);
  ToyDatasetConfig ecfg = dcfg;
  ecfg.count = 48;
  ecfg.seed = 1007;
  auto eval_data = make_toy_dataset(ecfg);  // held-out, like rotated validation images
  TwoStageSchedule sched{40, 100, 4, 4};

  std::vector<double> ib_drops, remove_drops;
  for (uint64_t seed : {1, 2, 3}) {
    for (DecoderKind kind : {DecoderKind::IB, DecoderKind::RemoveIB}) {
      Model m = build_sinet("toy", 2, kind, seed);
      OptimConfig optim;
      optim.seed = seed;
      train_two_stage(m, train_data, sched, optim, {});
      const double at0 = eval_rotation(m, eval_data, 0.0, seed + 1);
      const double at90 = eval_rotation(m, eval_data, 90.0, seed + 1);
      (kind == DecoderKind::IB ? ib_drops : remove_drops).push_back(at0 - at90);
    }
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const double ib_med = median(ib_drops);
  const double rm_med = median(remove_drops);
  const bool ok = ib_med <= rm_med && c.seconds() < 1200.0;
  c.report(ok, fmt("median 0->90 drop: IB %.4f vs RemoveIB %.4f over 3 seeds", ib_med,
                   rm_med));
}

void criterion_serialization() {
  Criterion c("weights-roundtrip");
  Model m = build_sinet("portrait", 2, DecoderKind::IB, 42);
  const std::string path = "/tmp/sinet_acceptance_portrait.sinw";
  save_weights(m, path);
  Model back = load_weights(path);

  bool ok = true;
  auto pa = m.named_params(false);
  auto pb = back.named_params(false);
  ok = ok && pa.size() == pb.size();
  long tensors = 0;
  for (size_t i = 0; ok && i < pa.size(); ++i) {
    ok = pa[i].name == pb[i].name &&
         std::memcmp(pa[i].tensor.data().data(), pb[i].tensor.data().data(),
                     pa[i].tensor.numel() * sizeof(float)) == 0;
    ++tensors;
  }
  auto ba = m.named_buffers(false);
  auto bb = back.named_buffers(false);
  ok = ok && ba.size() == bb.size();
  for (size_t i = 0; ok && i < ba.size(); ++i) {
    ok = std::memcmp(ba[i].data->data(), bb[i].data->data(),
                     ba[i].data->size() * sizeof(float)) == 0;
    ++tensors;
  }
  const std::string path2 = "/tmp/sinet_acceptance_portrait2.sinw";
  save_weights(back, path2);
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  ok = ok && slurp(path) == slurp(path2);
  std::remove(path.c_str());
  std::remove(path2.c_str());
  c.report(ok, fmt("%ld tensors bitwise identical after save/load/save", tensors));
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  criterion_params_portrait();
  criterion_flops_portrait();
  criterion_cityscapes();
  criterion_shape_audit();
  criterion_gradient_suite();
  criterion_morphology();
  criterion_ib_invariant();
  criterion_toy_overfit();
  criterion_rotation_direction();
  criterion_serialization();
  if (g_failures > 0) {
    std::printf("%d criterion(s) FAILED\n", g_failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
