#pragma once

#include <string>
#include <vector>

#include "sinet/error.hpp"

namespace sinet {

enum class ArchOp { CBR, DSConvSE, S2Module, PointwiseConv };

std::string arch_op_name(ArchOp op);
ArchOp arch_op_from_name(const std::string& s);

// One row of an architecture table. Channel fields equal to kNumClass stand
// for the class count and are resolved when a model is built.
struct ArchRow {
  static constexpr long kNumClass = -1;

  int index = 0;
  ArchOp op = ArchOp::CBR;
  long in_c = 0, in_h = 0, in_w = 0;
  long out_c = 0, out_h = 0, out_w = 0;
  bool has_blocks = false;
  int ka = 0, pa = 0, kb = 0, pb = 0;
  std::vector<int> concat_sources;
};

struct ArchTable {
  std::string name;
  bool factorized = false;
  std::vector<int> decoder_taps;  // rows whose *input* feeds each decode stage
  int classifier_kernel = 3;
  int pw_groups = 0;  // 0 = auto: 2 when the module input width is even, else 1
  std::vector<ArchRow> rows;
};

// Plain-text table grammar (see docs/formats.md):
//   directives:  @name X | @factorized true|false | @decoder_taps 5[,3]
//                | @classifier_kernel 1|3 | @pw_groups N
//   rows (CSV):  index,op,inC,inH,inW,outC,outH,outW[,kA,pA,kB,pB][,concat=A+B]
//   channel fields accept the literal `nc` for the class count; `#` comments.
ArchTable parse_arch_table(const std::string& text);
ArchTable load_arch_table(const std::string& path);
std::string arch_table_to_text(const ArchTable& table);

// Built-in presets: "portrait", "cityscapes", "toy".
const std::string& arch_preset_text(const std::string& name);
ArchTable arch_preset(const std::string& name);

}  // namespace sinet
