#include "sinet/arch.hpp"

#include <fstream>
#include <sstream>

namespace sinet {

namespace {

const char* kPortraitTable = R"(@name portrait
@decoder_taps 5
@classifier_kernel 3
1,CBR,3,224,224,12,112,112
2,DSConvSE,12,112,112,16,56,56
3,S2Module,16,56,56,48,56,56,3,1,5,1
4,S2Module,48,56,56,48,56,56,3,1,3,1
5,DSConvSE,64,56,56,48,28,28,concat=2+4
6,S2Module,48,28,28,96,28,28,3,1,5,1
7,S2Module,96,28,28,96,28,28,3,1,3,1
8,S2Module,96,28,28,96,28,28,5,1,3,2
9,S2Module,96,28,28,96,28,28,5,2,3,4
10,S2Module,96,28,28,96,28,28,3,1,3,1
11,S2Module,96,28,28,96,28,28,5,1,5,1
12,S2Module,96,28,28,96,28,28,3,2,3,4
13,S2Module,96,28,28,96,28,28,3,1,5,2
14,PointwiseConv,144,28,28,nc,28,28,concat=5+13
)";

const char* kCityscapesTable = R"(@name cityscapes
@factorized true
@decoder_taps 7,3
@classifier_kernel 1
1,CBR,3,1024,2048,16,512,1024
2,DSConvSE,16,512,1024,nc,256,512
3,DSConvSE,nc,256,512,24,128,256
4,S2Module,24,128,256,60,128,256,3,1,5,1
5,S2Module,60,128,256,60,128,256,3,0,3,1
6,S2Module,60,128,256,60,128,256,3,0,3,1
7,DSConvSE,84,128,256,60,64,128,concat=3+6
8,S2Module,60,64,128,84,64,128,3,1,5,1
9,S2Module,84,64,128,84,64,128,3,0,3,1
10,S2Module,84,64,128,84,64,128,5,1,5,4
11,S2Module,84,64,128,84,64,128,3,2,5,8
12,S2Module,84,64,128,108,64,128,3,1,5,1
13,S2Module,108,64,128,108,64,128,3,1,5,1
14,S2Module,108,64,128,108,64,128,3,0,3,1
15,S2Module,108,64,128,108,64,128,5,1,5,8
16,S2Module,108,64,128,108,64,128,3,2,5,4
17,S2Module,108,64,128,108,64,128,3,0,5,2
18,PointwiseConv,168,64,128,nc,64,128,concat=7+17
)";

const char* kToyTable = R"(@name toy
@decoder_taps 5
@classifier_kernel 3
1,CBR,3,64,64,8,32,32
2,DSConvSE,8,32,32,12,16,16
3,S2Module,12,16,16,16,16,16,3,1,5,1
4,S2Module,16,16,16,16,16,16,3,1,3,2
5,DSConvSE,28,16,16,24,8,8,concat=2+4
6,S2Module,24,8,8,32,8,8,3,1,5,1
7,S2Module,32,8,8,32,8,8,3,1,3,2
8,PointwiseConv,56,8,8,nc,8,8,concat=5+7
)";

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

long parse_channels(const std::string& field, int line_no) {
  if (field == "nc") return ArchRow::kNumClass;
  try {
    return std::stol(field);
  } catch (...) {
    throw FormatError("arch table line " + std::to_string(line_no) +
                      ": bad channel field '" + field + "'");
  }
}

long parse_long(const std::string& field, int line_no) {
  try {
    return std::stol(field);
  } catch (...) {
    throw FormatError("arch table line " + std::to_string(line_no) + ": bad number '" +
                      field + "'");
  }
}

std::string channels_to_text(long c) {
  return c == ArchRow::kNumClass ? "nc" : std::to_string(c);
}

}  // namespace

std::string arch_op_name(ArchOp op) {
  switch (op) {
    case ArchOp::CBR: return "CBR";
    case ArchOp::DSConvSE: return "DSConvSE";
    case ArchOp::S2Module: return "S2Module";
    case ArchOp::PointwiseConv: return "PointwiseConv";
  }
  return "?";
}

ArchOp arch_op_from_name(const std::string& s) {
  if (s == "CBR") return ArchOp::CBR;
  if (s == "DSConvSE") return ArchOp::DSConvSE;
  if (s == "S2Module") return ArchOp::S2Module;
  if (s == "PointwiseConv") return ArchOp::PointwiseConv;
  throw FormatError("unknown arch op '" + s + "'");
}

ArchTable parse_arch_table(const std::string& text) {
  ArchTable table;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line[0] == '@') {
      const auto sp = line.find(' ');
      const std::string key = sp == std::string::npos ? line : line.substr(0, sp);
      const std::string val = sp == std::string::npos ? "" : trim(line.substr(sp + 1));
      if (key == "@name") {
        table.name = val;
      } else if (key == "@factorized") {
        table.factorized = (val == "true" || val == "1");
      } else if (key == "@decoder_taps") {
        table.decoder_taps.clear();
        for (const auto& f : split(val, ',')) {
          table.decoder_taps.push_back(static_cast<int>(parse_long(f, line_no)));
        }
      } else if (key == "@classifier_kernel") {
        table.classifier_kernel = static_cast<int>(parse_long(val, line_no));
        if (table.classifier_kernel != 1 && table.classifier_kernel != 3) {
          throw FormatError("arch table: classifier kernel must be 1 or 3");
        }
      } else if (key == "@pw_groups") {
        table.pw_groups = static_cast<int>(parse_long(val, line_no));
      } else {
        throw FormatError("arch table line " + std::to_string(line_no) +
                          ": unknown directive '" + key + "'");
      }
      continue;
    }
    auto fields = split(line, ',');
    if (fields.size() < 8) {
      throw FormatError("arch table line " + std::to_string(line_no) +
                        ": expected at least 8 fields, got " +
                        std::to_string(fields.size()));
    }
    ArchRow row;
    row.index = static_cast<int>(parse_long(fields[0], line_no));
    row.op = arch_op_from_name(fields[1]);
    row.in_c = parse_channels(fields[2], line_no);
    row.in_h = parse_long(fields[3], line_no);
    row.in_w = parse_long(fields[4], line_no);
    row.out_c = parse_channels(fields[5], line_no);
    row.out_h = parse_long(fields[6], line_no);
    row.out_w = parse_long(fields[7], line_no);
    size_t next = 8;
    if (row.op == ArchOp::S2Module) {
      if (fields.size() < 12) {
        throw FormatError("arch table line " + std::to_string(line_no) +
                          ": S2Module rows need kA,pA,kB,pB");
      }
      row.has_blocks = true;
      row.ka = static_cast<int>(parse_long(fields[8], line_no));
      row.pa = static_cast<int>(parse_long(fields[9], line_no));
      row.kb = static_cast<int>(parse_long(fields[10], line_no));
      row.pb = static_cast<int>(parse_long(fields[11], line_no));
      next = 12;
    }
    for (size_t i = next; i < fields.size(); ++i) {
      const std::string& f = fields[i];
      if (f.rfind("concat=", 0) == 0) {
        for (const auto& src : split(f.substr(7), '+')) {
          row.concat_sources.push_back(static_cast<int>(parse_long(src, line_no)));
        }
      } else if (!f.empty()) {
        throw FormatError("arch table line " + std::to_string(line_no) +
                          ": unexpected field '" + f + "'");
      }
    }
    table.rows.push_back(row);
  }
  if (table.rows.empty()) throw FormatError("arch table: no rows");
  for (size_t i = 0; i < table.rows.size(); ++i) {
    if (table.rows[i].index != static_cast<int>(i) + 1) {
      throw FormatError("arch table: row indices must be contiguous from 1, got " +
                        std::to_string(table.rows[i].index) + " at position " +
                        std::to_string(i + 1));
    }
    for (int src : table.rows[i].concat_sources) {
      if (src < 1 || src >= table.rows[i].index) {
        throw FormatError("arch table: row " + std::to_string(table.rows[i].index) +
                          " concat source " + std::to_string(src) + " out of range");
      }
    }
  }
  for (int tap : table.decoder_taps) {
    if (tap < 1 || tap > static_cast<int>(table.rows.size())) {
      throw FormatError("arch table: decoder tap row " + std::to_string(tap) +
                        " out of range");
    }
  }
  return table;
}

ArchTable load_arch_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open arch table file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_arch_table(ss.str());
}

std::string arch_table_to_text(const ArchTable& table) {
  std::string out;
  out += "@name " + table.name + "\n";
  if (table.factorized) out += "@factorized true\n";
  if (!table.decoder_taps.empty()) {
    out += "@decoder_taps ";
    for (size_t i = 0; i < table.decoder_taps.size(); ++i) {
      if (i) out += ",";
      out += std::to_string(table.decoder_taps[i]);
    }
    out += "\n";
  }
  out += "@classifier_kernel " + std::to_string(table.classifier_kernel) + "\n";
  if (table.pw_groups != 0) out += "@pw_groups " + std::to_string(table.pw_groups) + "\n";
  for (const auto& r : table.rows) {
    out += std::to_string(r.index) + "," + arch_op_name(r.op) + "," +
           channels_to_text(r.in_c) + "," + std::to_string(r.in_h) + "," +
           std::to_string(r.in_w) + "," + channels_to_text(r.out_c) + "," +
           std::to_string(r.out_h) + "," + std::to_string(r.out_w);
    if (r.has_blocks) {
      out += "," + std::to_string(r.ka) + "," + std::to_string(r.pa) + "," +
             std::to_string(r.kb) + "," + std::to_string(r.pb);
    }
    if (!r.concat_sources.empty()) {
      out += ",concat=";
      for (size_t i = 0; i < r.concat_sources.size(); ++i) {
        if (i) out += "+";
        out += std::to_string(r.concat_sources[i]);
      }
    }
    out += "\n";
  }
  return out;
}

const std::string& arch_preset_text(const std::string& name) {
  static const std::string portrait = kPortraitTable;
  static const std::string cityscapes = kCityscapesTable;
  static const std::string toy = kToyTable;
  if (name == "portrait") return portrait;
  if (name == "cityscapes") return cityscapes;
  if (name == "toy") return toy;
  throw ConfigError("unknown preset '" + name + "' (expected portrait, cityscapes or toy)");
}

ArchTable arch_preset(const std::string& name) {
  return parse_arch_table(arch_preset_text(name));
}

}  // namespace sinet
