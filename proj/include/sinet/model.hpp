#pragma once

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "sinet/arch.hpp"
#include "sinet/blocks.hpp"

namespace sinet {

enum class FlopConvention { MAC, TwoMAC };

inline std::string flop_convention_name(FlopConvention c) {
  return c == FlopConvention::MAC ? "mac" : "2mac";
}

struct SummaryRow {
  std::string name;
  long params = 0;
  long macs = 0;
};

struct ModelSummary {
  std::vector<SummaryRow> rows;
  long total_params = 0;
  long total_macs = 0;
  long input_h = 0, input_w = 0;

  double flops(FlopConvention conv) const {
    return conv == FlopConvention::MAC ? static_cast<double>(total_macs)
                                       : 2.0 * static_cast<double>(total_macs);
  }
};

// A built network: encoder rows from an architecture table, one or more
// decoder fusion stages, a small classifier head and a final bilinear
// upsample back to the input resolution.
class Model {
 public:
  using RowLayer =
      std::variant<CbrBlock<float>, DsConvSe<float>, S2Module<float>, Conv2dLayer<float>>;

  struct Row {
    ArchRow arch;
    RowLayer layer;
  };

  Model() = default;

  // Full forward pass to per-pixel class logits at the input resolution.
  TensorF forward(const TensorF& image, bool training = false);
  // Encoder rows only; returns the final row's logits (low resolution).
  TensorF encoder_forward(const TensorF& image, bool training = false);

  ParamList<float> named_params(bool encoder_only = false);
  BufferList<float> named_buffers(bool encoder_only = false);

  ModelSummary count_params();
  ModelSummary count_flops(long input_h, long input_w);

  const ArchTable& table() const { return table_; }
  int num_class() const { return num_class_; }
  DecoderKind decoder_kind() const { return kind_; }
  long encoder_stride() const { return stride_; }
  long reference_h() const { return table_.rows.front().in_h; }
  long reference_w() const { return table_.rows.front().in_w; }

  std::vector<Row>& rows() { return rows_; }
  std::vector<DecoderStage<float>>& decoder_stages() { return decoder_stages_; }
  Conv2dLayer<float>& classifier() { return classifier_; }

 private:
  friend Model build_sinet(const ArchTable&, int, DecoderKind, uint64_t);

  struct EncoderState {
    std::vector<TensorF> row_outputs;
    std::vector<TensorF> row_inputs;
  };
  EncoderState run_encoder(const TensorF& image, bool training);
  void check_input(const Shape& s) const;

  ArchTable table_;
  int num_class_ = 2;
  DecoderKind kind_ = DecoderKind::IB;
  long stride_ = 1;
  std::vector<Row> rows_;
  std::vector<DecoderStage<float>> decoder_stages_;
  Conv2dLayer<float> classifier_;
};

// Builds a model from a table, audits every declared shape at the table's
// reference input size and throws a ConfigError naming the first row that
// disagrees. `nc` channel fields resolve to num_class.
Model build_sinet(const ArchTable& table, int num_class, DecoderKind kind,
                  uint64_t seed = 42);
Model build_sinet(const std::string& preset, int num_class, DecoderKind kind,
                  uint64_t seed = 42);

// Default class count for a preset (2 for portrait/toy, 20 for cityscapes).
int preset_default_classes(const std::string& preset);

}  // namespace sinet
