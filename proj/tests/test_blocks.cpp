#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sinet/blocks.hpp"
#include "sinet/grad_check.hpp"
#include "support/oracles.hpp"

using namespace sinet;

namespace {

// Finite differences need a generic evaluation point: zero-initialized biases
// otherwise park activations exactly on the PReLU kink.
void jitter_params(ParamList<double>& ps, Rng& rng) {
  for (auto& p : ps) {
    for (auto& v : p.tensor.mut_data()) v += rng.uniform(0.05, 0.35) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  }
}

template <class L>
std::vector<TensorD> with_params(const TensorD& x, L& layer, Rng& rng) {
  ParamList<double> ps;
  layer.collect_params("p", ps);
  jitter_params(ps, rng);
  std::vector<TensorD> ins{x};
  for (auto& p : ps) ins.push_back(p.tensor);
  return ins;
}

void zero_params(ParamList<double>& ps) {
  for (auto& p : ps) {
    std::fill(p.tensor.mut_data().begin(), p.tensor.mut_data().end(), 0.0);
  }
}

template <class T>
void make_bn_neutral(BatchNorm2d<T>& bn) {
  bn.eps = 0.0;
  std::fill(bn.gamma.mut_data().begin(), bn.gamma.mut_data().end(), T(1));
  std::fill(bn.beta.mut_data().begin(), bn.beta.mut_data().end(), T(0));
  std::fill(bn.running_mean.begin(), bn.running_mean.end(), T(0));
  std::fill(bn.running_var.begin(), bn.running_var.end(), T(1));
}

}  // namespace

TEST_CASE("cbr halves spatial dims per the table rows") {
  Rng rng(1);
  CbrBlock<float> portrait(3, 12, 3, 2, rng);
  TensorF x = TensorF::rand_uniform({1, 3, 224, 224}, rng);
  CHECK(portrait.forward(x, false).shape() == Shape{1, 12, 112, 112});

  CbrBlock<float> city(3, 16, 3, 2, rng);
  TensorF big = TensorF::zeros({1, 3, 1024, 2048});
  CHECK(city.forward(big, false).shape() == Shape{1, 16, 512, 1024});
}

TEST_CASE("cbr maps zero input to zero output") {
  Rng rng(2);
  CbrBlock<float> blk(3, 8, 3, 2, rng);
  TensorF zero = TensorF::zeros({1, 3, 16, 16});
  TensorF y = blk.forward(zero, false);
  for (float v : y.data()) CHECK(v == 0.0f);
}

TEST_CASE("se_block gate closed forms") {
  Rng rng(3);
  SqueezeExcite<float> se(16, 4, rng);
  TensorF x = TensorF::rand_uniform({1, 16, 4, 4}, rng);

  SUBCASE("zero gate logits halve the input") {
    std::fill(se.expand.weight.mut_data().begin(), se.expand.weight.mut_data().end(), 0.0f);
    std::fill(se.expand.bias->mut_data().begin(), se.expand.bias->mut_data().end(), 0.0f);
    TensorF y = se.forward(x);
    for (long i = 0; i < x.numel(); ++i) {
      CHECK(y.data()[i] == doctest::Approx(0.5f * x.data()[i]));
    }
  }
  SUBCASE("saturated gate passes the input through") {
    std::fill(se.expand.weight.mut_data().begin(), se.expand.weight.mut_data().end(), 0.0f);
    std::fill(se.expand.bias->mut_data().begin(), se.expand.bias->mut_data().end(), 30.0f);
    TensorF y = se.forward(x);
    for (long i = 0; i < x.numel(); ++i) {
      CHECK(y.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-3));
    }
  }
  SUBCASE("random weights match the scalar reference") {
    TensorF y = se.forward(x);
    std::vector<double> xd(x.data().begin(), x.data().end());
    auto as_d = [](const std::vector<float>& v) {
      return std::vector<double>(v.begin(), v.end());
    };
    auto ref = oracle::se_ref(xd, {1, 16, 4, 4}, as_d(se.reduce.weight.data()),
                              as_d(se.reduce.bias->data()), as_d(se.reduce_act.slope.data()),
                              as_d(se.expand.weight.data()), as_d(se.expand.bias->data()), 4);
    for (size_t i = 0; i < ref.size(); ++i) {
      CHECK(static_cast<double>(y.data()[i]) == doctest::Approx(ref[i]).epsilon(1e-5));
    }
  }
}

TEST_CASE("dsconv_se shapes follow the downsampling rows") {
  Rng rng(4);
  DsConvSe<float> r2(12, 16, rng);
  TensorF x = TensorF::rand_uniform({1, 12, 112, 112}, rng);
  CHECK(r2.forward(x, false).shape() == Shape{1, 16, 56, 56});

  DsConvSe<float> r5(64, 48, rng);
  TensorF cat = TensorF::rand_uniform({1, 64, 56, 56}, rng);
  CHECK(r5.forward(cat, false).shape() == Shape{1, 48, 28, 28});
}

TEST_CASE("dsconv_se gradient check") {
  Rng rng(5);
  DsConvSe<double> blk(4, 6, rng);
  TensorD x = TensorD::rand_uniform({1, 4, 8, 8}, rng);
  auto res = grad_check(
      [&](const std::vector<TensorD>& in) { return blk.forward(in[0], true); },
      with_params(x, blk, rng));
  CHECK_MESSAGE(res.max_rel_err < 1e-4, res.worst_location);
}

TEST_CASE("s2_block keeps spatial dims for every pool size") {
  Rng rng(6);
  S2Block<float> b1(24, 24, {24, 3, 1, false}, rng);
  TensorF x1 = TensorF::rand_uniform({1, 24, 56, 56}, rng);
  CHECK(b1.forward(x1, false).shape() == Shape{1, 24, 56, 56});

  S2Block<float> b4(48, 48, {48, 3, 4, false}, rng);
  TensorF x4 = TensorF::rand_uniform({1, 48, 28, 28}, rng);
  CHECK(b4.forward(x4, false).shape() == Shape{1, 48, 28, 28});

  for (int p : {1, 2, 4}) {
    for (long hw : {11L, 16L, 23L}) {
      if (hw < p) continue;
      S2Block<float> blk(8, 8, {8, 5, p, false}, rng);
      TensorF x = TensorF::rand_uniform({1, 8, hw, hw + 3}, rng);
      CHECK(blk.forward(x, false).shape() == Shape{1, 8, hw, hw + 3});
    }
  }

  S2Block<float> too_big(8, 8, {8, 3, 8, false}, rng);
  TensorF tiny = TensorF::rand_uniform({1, 8, 4, 4}, rng);
  CHECK_THROWS_AS(too_big.forward(tiny, false), ConfigError);
}

TEST_CASE("s2_block propagates constants when BN is bypassed") {
  Rng rng(7);
  S2Block<float> blk(4, 4, {4, 3, 8, false}, rng);
  make_bn_neutral(blk.bn1);
  make_bn_neutral(blk.bn2);
  std::fill(blk.dw.weight.mut_data().begin(), blk.dw.weight.mut_data().end(), 1.0f);
  // Identity-like pointwise conv.
  std::fill(blk.pw.weight.mut_data().begin(), blk.pw.weight.mut_data().end(), 0.0f);
  for (long o = 0; o < 4; ++o) blk.pw.weight.at_mut(o, o, 0, 0) = 1.0f;
  TensorF x = TensorF::full({1, 4, 8, 8}, 1.5f);
  TensorF y = blk.forward(x, false);
  CHECK(y.shape() == Shape{1, 4, 8, 8});
  for (float v : y.data()) CHECK(v == doctest::Approx(1.5f));
}

TEST_CASE("factorized s2_block uses 2k instead of k^2 depthwise weights") {
  Rng rng(8);
  const int k = 5, c = 12;
  S2Block<float> square(c, c, {c, k, 1, false}, rng);
  S2Block<float> fact(c, c, {c, k, 1, true}, rng);
  auto dw_params = [](S2Block<float>& b) {
    ParamList<float> ps;
    b.collect_params("b", ps);
    long n = 0;
    for (auto& p : ps) {
      if (p.name.find(".dw") != std::string::npos && p.name.find("weight") != std::string::npos) {
        n += p.tensor.numel();
      }
    }
    return n;
  };
  CHECK(dw_params(square) == c * k * k);
  CHECK(dw_params(fact) == c * 2 * k);
  CHECK(dw_params(fact) < dw_params(square));

  // p = 0 falls back to the plain depthwise conv even when factorized.
  S2Block<float> p0(c, c, {c, k, 0, true}, rng);
  CHECK(dw_params(p0) == c * k * k);
  TensorF x = TensorF::rand_uniform({1, c, 10, 10}, rng);
  CHECK(fact.forward(x, false).shape() == x.shape());
  CHECK(p0.forward(x, false).shape() == x.shape());
}

TEST_CASE("s2_module output channels follow the table") {
  Rng rng(9);
  S2ModuleConfig row6;
  row6.in_channels = 48;
  row6.out_channels = 96;
  row6.block_a = {48, 3, 1, false};
  row6.block_b = {48, 5, 1, false};
  S2Module<float> m6(row6, rng);
  TensorF x6 = TensorF::rand_uniform({1, 48, 28, 28}, rng);
  CHECK(m6.forward(x6, false).shape() == Shape{1, 96, 28, 28});

  S2ModuleConfig row7 = row6;
  row7.in_channels = 96;
  row7.residual = true;
  S2Module<float> m7(row7, rng);
  TensorF x7 = TensorF::rand_uniform({1, 96, 28, 28}, rng);
  CHECK(m7.forward(x7, false).shape() == Shape{1, 96, 28, 28});

  S2ModuleConfig row3;
  row3.in_channels = 16;
  row3.out_channels = 48;
  row3.block_a = {24, 3, 1, false};
  row3.block_b = {24, 5, 1, false};
  S2Module<float> m3(row3, rng);
  TensorF x3 = TensorF::rand_uniform({1, 16, 56, 56}, rng);
  CHECK(m3.forward(x3, false).shape() == Shape{1, 48, 56, 56});

  S2ModuleConfig bad = row6;
  bad.residual = true;  // 48 != 96
  CHECK_THROWS_AS(S2Module<float>(bad, rng), ConfigError);
}

TEST_CASE("s2_module with zeroed blocks reduces to PReLU of the input") {
  Rng rng(10);
  S2ModuleConfig cfg;
  cfg.in_channels = 16;
  cfg.out_channels = 16;
  cfg.block_a = {8, 3, 1, false};
  cfg.block_b = {8, 3, 2, false};
  cfg.residual = true;
  S2Module<double> m(cfg, rng);
  ParamList<double> block_params;
  m.block_a.collect_params("a", block_params);
  m.block_b.collect_params("b", block_params);
  m.c1.collect_params("c1", block_params);
  zero_params(block_params);
  make_bn_neutral(m.bn);
  TensorD x = TensorD::rand_uniform({2, 16, 8, 8}, rng);
  TensorD y = m.forward(x, false);
  TensorD expected = prelu(x, m.act.slope);
  for (long i = 0; i < x.numel(); ++i) {
    CHECK(y.data()[i] == doctest::Approx(expected.data()[i]));
  }
}

TEST_CASE("s2_module gradient check") {
  Rng rng(11);
  S2ModuleConfig cfg;
  cfg.in_channels = 16;
  cfg.out_channels = 16;
  cfg.block_a = {8, 3, 1, false};
  cfg.block_b = {8, 5, 2, false};
  cfg.residual = true;
  S2Module<double> m(cfg, rng);
  TensorD x = TensorD::rand_uniform({1, 16, 8, 8}, rng);
  auto res = grad_check(
      [&](const std::vector<TensorD>& in) { return m.forward(in[0], true); },
      with_params(x, m, rng));
  CHECK_MESSAGE(res.max_rel_err < 1e-4, res.worst_location);
}

TEST_CASE("confidence maps partition probability mass") {
  Rng rng(12);
  TensorD logits = TensorD::rand_uniform({2, 2, 6, 6}, rng, -4.0, 4.0);
  auto maps = make_confidence_maps(logits);
  for (long i = 0; i < maps.confidence.numel(); ++i) {
    const double c = maps.confidence.data()[i];
    CHECK(c >= 0.5);  // two classes
    CHECK(c <= 1.0);
    CHECK(maps.blocking.data()[i] + c == 1.0);  // exact for c >= 0.5
    CHECK(maps.blocking.data()[i] >= 0.0);
  }
  TensorD wide = TensorD::rand_uniform({1, 5, 4, 4}, rng, -4.0, 4.0);
  auto maps5 = make_confidence_maps(wide);
  for (long i = 0; i < maps5.confidence.numel(); ++i) {
    const double c = maps5.confidence.data()[i];
    CHECK(c >= 1.0 / 5.0);
    CHECK(std::abs(maps5.blocking.data()[i] + c - 1.0) < 1e-12);
  }
}

TEST_CASE("decoder: saturated confidence blocks the high-res path") {
  Rng rng(13);
  DecoderStage<double> stage(DecoderKind::IB, 6, 2, rng);
  DecoderStage<double> remove(DecoderKind::RemoveIB, 6, 2, rng);
  remove.proj = stage.proj;  // share the projection to compare outputs

  TensorD low = TensorD::zeros({1, 2, 4, 4});
  for (long i = 0; i < 16; ++i) {
    low.mut_data()[static_cast<size_t>(i)] = 25.0;        // class 0 logits
    low.mut_data()[static_cast<size_t>(16 + i)] = -25.0;  // class 1 logits
  }
  TensorD high = TensorD::rand_uniform({1, 6, 8, 8}, rng);

  TensorD up = bilinear_upsample(low, 8, 8);
  TensorD out = stage.forward(low, high, false);
  for (long i = 0; i < out.numel(); ++i) {
    CHECK(std::abs(out.data()[i] - up.data()[i]) < 1e-6);
  }

  // Perturbing the high-res features moves RemoveIB but not IB.
  TensorD high_shift = affine(high, 1.0, 10.0);
  TensorD out_shift = stage.forward(low, high_shift, false);
  double ib_delta = 0.0;
  for (long i = 0; i < out.numel(); ++i) {
    ib_delta = std::max(ib_delta, std::abs(out_shift.data()[i] - out.data()[i]));
  }
  CHECK(ib_delta <= 1e-6);

  TensorD r0 = remove.forward(low, high, false);
  TensorD r1 = remove.forward(low, high_shift, false);
  double remove_delta = 0.0;
  for (long i = 0; i < r0.numel(); ++i) {
    remove_delta = std::max(remove_delta, std::abs(r1.data()[i] - r0.data()[i]));
  }
  CHECK(remove_delta > 1e-3);
}

TEST_CASE("decoder: uniform logits make IB and ReverseIB coincide") {
  Rng rng(14);
  DecoderStage<double> stage(DecoderKind::IB, 4, 2, rng);
  TensorD low = TensorD::zeros({1, 2, 4, 4});
  TensorD high = TensorD::rand_uniform({1, 4, 8, 8}, rng);
  TensorD ib = stage.forward(low, high, false);
  stage.kind = DecoderKind::ReverseIB;
  TensorD rib = stage.forward(low, high, false);
  for (long i = 0; i < ib.numel(); ++i) {
    CHECK(ib.data()[i] == doctest::Approx(rib.data()[i]));
  }
  // Blocking map is exactly 0.5 everywhere.
  auto maps = make_confidence_maps(bilinear_upsample(low, 8, 8));
  for (long i = 0; i < maps.blocking.numel(); ++i) {
    CHECK(maps.blocking.data()[i] == doctest::Approx(0.5));
  }
}

TEST_CASE("decoder: IB + ReverseIB - 2*up recovers the projection") {
  Rng rng(15);
  DecoderStage<double> stage(DecoderKind::IB, 5, 3, rng);
  TensorD low = TensorD::rand_uniform({2, 3, 4, 4}, rng);
  TensorD high = TensorD::rand_uniform({2, 5, 8, 8}, rng);
  TensorD ib = stage.forward(low, high, false);
  stage.kind = DecoderKind::ReverseIB;
  TensorD rib = stage.forward(low, high, false);
  TensorD up = bilinear_upsample(low, 8, 8);
  TensorD projected = stage.proj.forward(high, false);
  for (long i = 0; i < ib.numel(); ++i) {
    const double lhs = ib.data()[i] + rib.data()[i] - 2.0 * up.data()[i];
    CHECK(lhs == doctest::Approx(projected.data()[i]).epsilon(1e-9));
  }
}

TEST_CASE("decoder: every kind passes a gradient check") {
  for (DecoderKind kind : {DecoderKind::IB, DecoderKind::ReverseIB, DecoderKind::RemoveIB,
                           DecoderKind::GAU}) {
    Rng rng(16);
    DecoderStage<double> stage(kind, 4, 2, rng);
    TensorD low = TensorD::rand_uniform({2, 2, 3, 3}, rng);
    TensorD high = TensorD::rand_uniform({2, 4, 6, 6}, rng);
    ParamList<double> ps;
    stage.collect_params("d", ps);
    jitter_params(ps, rng);
    std::vector<TensorD> inputs{low, high};
    for (auto& p : ps) inputs.push_back(p.tensor);
    auto res = grad_check(
        [&](const std::vector<TensorD>& in) { return stage.forward(in[0], in[1], true); },
        inputs);
    CHECK_MESSAGE(res.max_rel_err < 1e-4,
                  decoder_kind_name(kind), " at ", res.worst_location);
  }
}

TEST_CASE("decoder rejects non-2x spatial ratios") {
  Rng rng(17);
  DecoderStage<float> stage(DecoderKind::IB, 4, 2, rng);
  TensorF low = TensorF::rand_uniform({1, 2, 4, 4}, rng);
  TensorF high = TensorF::rand_uniform({1, 4, 12, 12}, rng);
  CHECK_THROWS_AS(stage.forward(low, high, false), ConfigError);
}
