#include "sinet/model.hpp"

#include <algorithm>

namespace sinet {

namespace {

long resolve_c(long c, int num_class) { return c == ArchRow::kNumClass ? num_class : c; }

int module_groups(const ArchTable& table, long in_c) {
  if (table.pw_groups > 0) return table.pw_groups;
  return in_c % 2 == 0 ? 2 : 1;
}

std::string row_label(const ArchRow& row) {
  return "row" + std::to_string(row.index) + "." + arch_op_name(row.op);
}

}  // namespace

int preset_default_classes(const std::string& preset) {
  return preset == "cityscapes" ? 20 : 2;
}

Model build_sinet(const ArchTable& table, int num_class, DecoderKind kind, uint64_t seed) {
  if (num_class < 2) throw ConfigError("build: num_class must be >= 2");
  Model m;
  m.table_ = table;
  m.num_class_ = num_class;
  m.kind_ = kind;
  Rng rng(seed);

  struct ShapeCHW {
    long c, h, w;
  };
  std::vector<ShapeCHW> outputs;
  std::vector<ShapeCHW> inputs;

  for (const auto& row : table.rows) {
    // Resolve this row's input: previous row output, or channel-concat of the
    // listed source rows.
    ShapeCHW in{};
    if (row.index == 1) {
      in = {resolve_c(row.in_c, num_class), row.in_h, row.in_w};
      if (in.c != 3) throw ConfigError("build: row 1 must take a 3-channel image");
    } else if (!row.concat_sources.empty()) {
      long csum = 0;
      const ShapeCHW& first = outputs[static_cast<size_t>(row.concat_sources[0] - 1)];
      for (int src : row.concat_sources) {
        const ShapeCHW& s = outputs[static_cast<size_t>(src - 1)];
        if (s.h != first.h || s.w != first.w) {
          throw ConfigError("build: " + row_label(row) + " concat sources disagree on size");
        }
        csum += s.c;
      }
      in = {csum, first.h, first.w};
    } else {
      in = outputs.back();
    }
    const long want_in_c = resolve_c(row.in_c, num_class);
    if (in.c != want_in_c || in.h != row.in_h || in.w != row.in_w) {
      throw ConfigError("build: " + row_label(row) + " computed input (" +
                        std::to_string(in.c) + "," + std::to_string(in.h) + "," +
                        std::to_string(in.w) + ") does not match declared (" +
                        std::to_string(want_in_c) + "," + std::to_string(row.in_h) + "," +
                        std::to_string(row.in_w) + ")");
    }
    inputs.push_back(in);

    const long want_out_c = resolve_c(row.out_c, num_class);
    ShapeCHW out{};
    Model::Row built{row, {}};
    switch (row.op) {
      case ArchOp::CBR: {
        CbrBlock<float> blk(static_cast<int>(in.c), static_cast<int>(want_out_c), 3, 2, rng);
        auto [oh, ow] = blk.conv.spec.out_hw(in.h, in.w);
        out = {want_out_c, oh, ow};
        built.layer = std::move(blk);
        break;
      }
      case ArchOp::DSConvSE: {
        DsConvSe<float> blk(static_cast<int>(in.c), static_cast<int>(want_out_c), rng);
        auto [oh, ow] = blk.dw.spec.out_hw(in.h, in.w);
        out = {want_out_c, oh, ow};
        built.layer = std::move(blk);
        break;
      }
      case ArchOp::S2Module: {
        S2ModuleConfig cfg;
        cfg.in_channels = static_cast<int>(in.c);
        cfg.out_channels = static_cast<int>(want_out_c);
        cfg.block_a = {static_cast<int>(want_out_c) / 2, row.ka, row.pa, table.factorized};
        cfg.block_b = {static_cast<int>(want_out_c) / 2, row.kb, row.pb, table.factorized};
        cfg.groups = module_groups(table, in.c);
        cfg.residual = row.concat_sources.empty() && in.c == want_out_c;
        built.layer = S2Module<float>(cfg, rng);
        out = {want_out_c, in.h, in.w};
        break;
      }
      case ArchOp::PointwiseConv: {
        Conv2dLayer<float> conv(ConvSpec{.in_channels = static_cast<int>(in.c),
                                         .out_channels = static_cast<int>(want_out_c)},
                                rng);
        out = {want_out_c, in.h, in.w};
        built.layer = std::move(conv);
        break;
      }
    }
    if (out.c != want_out_c || out.h != row.out_h || out.w != row.out_w) {
      throw ConfigError("build: " + row_label(row) + " produces (" + std::to_string(out.c) +
                        "," + std::to_string(out.h) + "," + std::to_string(out.w) +
                        ") but the table declares (" + std::to_string(want_out_c) + "," +
                        std::to_string(row.out_h) + "," + std::to_string(row.out_w) + ")");
    }
    outputs.push_back(out);
    m.rows_.push_back(std::move(built));
  }

  const ShapeCHW last = outputs.back();
  if (last.c != num_class) {
    throw ConfigError("build: final row must emit num_class channels, got " +
                      std::to_string(last.c));
  }
  m.stride_ = table.rows.front().in_h / last.h;
  if (m.stride_ < 1 || table.rows.front().in_h % last.h != 0 ||
      table.rows.front().in_w / last.w != m.stride_) {
    throw ConfigError("build: encoder stride is not uniform");
  }

  // Decoder stages double the logits resolution; each tap row's input is the
  // matching high-resolution feature.
  ShapeCHW cur = last;
  for (int tap : table.decoder_taps) {
    const ShapeCHW& high = inputs[static_cast<size_t>(tap - 1)];
    if (high.h != 2 * cur.h || high.w != 2 * cur.w) {
      throw ConfigError("build: decoder tap row " + std::to_string(tap) + " input " +
                        std::to_string(high.h) + "x" + std::to_string(high.w) +
                        " is not 2x the logits " + std::to_string(cur.h) + "x" +
                        std::to_string(cur.w));
    }
    m.decoder_stages_.emplace_back(kind, static_cast<int>(high.c), num_class, rng);
    cur = {static_cast<long>(num_class), high.h, high.w};
  }

  const int ck = table.classifier_kernel;
  m.classifier_ = Conv2dLayer<float>(ConvSpec{.in_channels = num_class,
                                              .out_channels = num_class,
                                              .kh = ck,
                                              .kw = ck,
                                              .ph = (ck - 1) / 2,
                                              .pw = (ck - 1) / 2},
                                     rng);
  return m;
}

Model build_sinet(const std::string& preset, int num_class, DecoderKind kind,
                  uint64_t seed) {
  return build_sinet(arch_preset(preset), num_class, kind, seed);
}

void Model::check_input(const Shape& s) const {
  if (s.c != 3) {
    throw DimensionError("forward: image channel axis must be 3, got " + std::to_string(s.c));
  }
  if (s.h % stride_ != 0 || s.w % stride_ != 0) {
    throw ConfigError("forward: input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                      " must be divisible by the encoder stride " + std::to_string(stride_));
  }
}

Model::EncoderState Model::run_encoder(const TensorF& image, bool training) {
  EncoderState st;
  st.row_outputs.reserve(rows_.size());
  st.row_inputs.reserve(rows_.size());
  for (auto& row : rows_) {
    TensorF in;
    if (row.arch.index == 1) {
      in = image;
    } else if (!row.arch.concat_sources.empty()) {
      std::vector<TensorF> parts;
      for (int src : row.arch.concat_sources) {
        parts.push_back(st.row_outputs[static_cast<size_t>(src - 1)]);
      }
      in = concat_channels(parts);
    } else {
      in = st.row_outputs.back();
    }
    st.row_inputs.push_back(in);
    TensorF out = std::visit(
        [&](auto& layer) -> TensorF {
          using L = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<L, Conv2dLayer<float>>) {
            return layer.forward(in);
          } else {
            return layer.forward(in, training);
          }
        },
        row.layer);
    st.row_outputs.push_back(std::move(out));
  }
  return st;
}

TensorF Model::encoder_forward(const TensorF& image, bool training) {
  check_input(image.shape());
  return run_encoder(image, training).row_outputs.back();
}

TensorF Model::forward(const TensorF& image, bool training) {
  check_input(image.shape());
  EncoderState st = run_encoder(image, training);
  TensorF logits = st.row_outputs.back();
  for (size_t i = 0; i < decoder_stages_.size(); ++i) {
    const int tap = table_.decoder_taps[i];
    logits = decoder_stages_[i].forward(logits, st.row_inputs[static_cast<size_t>(tap - 1)],
                                        training);
  }
  logits = classifier_.forward(logits);
  return bilinear_upsample(logits, image.shape().h, image.shape().w);
}

ParamList<float> Model::named_params(bool encoder_only) {
  ParamList<float> out;
  for (auto& row : rows_) {
    const std::string prefix = "enc.r" + std::to_string(row.arch.index);
    std::visit([&](auto& layer) { layer.collect_params(prefix, out); }, row.layer);
  }
  if (!encoder_only) {
    for (size_t i = 0; i < decoder_stages_.size(); ++i) {
      decoder_stages_[i].collect_params("dec.s" + std::to_string(i), out);
    }
    classifier_.collect_params("cls", out);
  }
  return out;
}

BufferList<float> Model::named_buffers(bool encoder_only) {
  BufferList<float> out;
  for (auto& row : rows_) {
    const std::string prefix = "enc.r" + std::to_string(row.arch.index);
    std::visit([&](auto& layer) { layer.collect_buffers(prefix, out); }, row.layer);
  }
  if (!encoder_only) {
    for (size_t i = 0; i < decoder_stages_.size(); ++i) {
      decoder_stages_[i].collect_buffers("dec.s" + std::to_string(i), out);
    }
  }
  return out;
}

namespace {

long param_count_of(ParamList<float>& params) {
  long total = 0;
  for (auto& p : params) total += p.tensor.numel();
  return total;
}

}  // namespace

ModelSummary Model::count_params() {
  ModelSummary summary;
  for (auto& row : rows_) {
    ParamList<float> params;
    const std::string label = row_label(row.arch);
    std::visit([&](auto& layer) { layer.collect_params(label, params); }, row.layer);
    summary.rows.push_back({label, param_count_of(params), 0});
  }
  for (size_t i = 0; i < decoder_stages_.size(); ++i) {
    ParamList<float> params;
    const std::string label = "decoder" + std::to_string(i) + "." +
                              decoder_kind_name(decoder_stages_[i].kind);
    decoder_stages_[i].collect_params(label, params);
    summary.rows.push_back({label, param_count_of(params), 0});
  }
  {
    ParamList<float> params;
    classifier_.collect_params("classifier", params);
    summary.rows.push_back({"classifier", param_count_of(params), 0});
  }
  for (const auto& r : summary.rows) summary.total_params += r.params;
  return summary;
}

ModelSummary Model::count_flops(long input_h, long input_w) {
  if (input_h % stride_ != 0 || input_w % stride_ != 0) {
    throw ConfigError("count_flops: input " + std::to_string(input_h) + "x" +
                      std::to_string(input_w) + " must be divisible by stride " +
                      std::to_string(stride_));
  }
  ModelSummary summary = count_params();
  summary.input_h = input_h;
  summary.input_w = input_w;

  struct HW {
    long h, w;
  };
  std::vector<HW> out_sizes;
  std::vector<HW> in_sizes;
  size_t idx = 0;
  for (auto& row : rows_) {
    HW in{};
    if (row.arch.index == 1) {
      in = {input_h, input_w};
    } else if (!row.arch.concat_sources.empty()) {
      in = out_sizes[static_cast<size_t>(row.arch.concat_sources[0] - 1)];
    } else {
      in = out_sizes.back();
    }
    in_sizes.push_back(in);
    HW out = in;
    long macs = 0;
    std::visit(
        [&](auto& layer) {
          using L = std::decay_t<decltype(layer)>;
          macs = layer.macs(in.h, in.w);
          if constexpr (std::is_same_v<L, CbrBlock<float>>) {
            auto [oh, ow] = layer.conv.spec.out_hw(in.h, in.w);
            out = {oh, ow};
          } else if constexpr (std::is_same_v<L, DsConvSe<float>>) {
            auto [oh, ow] = layer.dw.spec.out_hw(in.h, in.w);
            out = {oh, ow};
          }
        },
        row.layer);
    summary.rows[idx++].macs = macs;
    out_sizes.push_back(out);
  }
  HW cur = out_sizes.back();
  for (size_t i = 0; i < decoder_stages_.size(); ++i) {
    const int tap = table_.decoder_taps[i];
    const HW high = in_sizes[static_cast<size_t>(tap - 1)];
    summary.rows[idx++].macs = decoder_stages_[i].macs(high.h, high.w);
    cur = high;
  }
  summary.rows[idx++].macs = classifier_.macs(cur.h, cur.w);
  summary.total_macs = 0;
  for (const auto& r : summary.rows) summary.total_macs += r.macs;
  return summary;
}

}  // namespace sinet
