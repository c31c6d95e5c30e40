#include "sinet/weights_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace sinet {

namespace {

constexpr const char* kMagic = "SINW1";

struct Entry {
  std::string name;
  std::string dtype;
  Shape shape;
  uint64_t offset = 0;
  uint64_t nbytes = 0;
};

struct TensorRef {
  std::string name;
  float* data = nullptr;
  long numel = 0;
  Shape shape;
};

std::vector<TensorRef> tensor_refs(Model& model) {
  std::vector<TensorRef> refs;
  for (auto& p : model.named_params(false)) {
    refs.push_back({p.name, p.tensor.mut_data().data(), p.tensor.numel(), p.tensor.shape()});
  }
  for (auto& b : model.named_buffers(false)) {
    const long len = static_cast<long>(b.data->size());
    refs.push_back({b.name, b.data->data(), len, Shape{1, len, 1, 1}});
  }
  return refs;
}

}  // namespace

void save_weights(Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");

  auto refs = tensor_refs(model);
  std::ostringstream header;
  header << kMagic << "\n";
  header << "meta num_class " << model.num_class() << "\n";
  header << "meta decoder " << decoder_kind_name(model.decoder_kind()) << "\n";
  {
    std::istringstream table(arch_table_to_text(model.table()));
    std::string line;
    while (std::getline(table, line)) header << "arch " << line << "\n";
  }
  uint64_t offset = 0;
  for (const auto& r : refs) {
    const uint64_t nbytes = static_cast<uint64_t>(r.numel) * sizeof(float);
    header << "tensor " << r.name << " f32 " << r.shape.n << " " << r.shape.c << " "
           << r.shape.h << " " << r.shape.w << " " << offset << " " << nbytes << "\n";
    offset += nbytes;
  }
  header << "end\n";
  const std::string h = header.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& r : refs) {
    out.write(reinterpret_cast<const char*>(r.data),
              static_cast<std::streamsize>(r.numel * sizeof(float)));
  }
  if (!out) throw FormatError("short write to '" + path + "'");
}

Model load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::istringstream ss(content);
  std::string line;
  if (!std::getline(ss, line) || line != kMagic) {
    throw FormatError("weight container: bad magic (expected " + std::string(kMagic) + ")");
  }

  int num_class = 0;
  DecoderKind kind = DecoderKind::IB;
  std::string arch_text;
  std::vector<Entry> entries;
  bool saw_end = false;
  while (std::getline(ss, line)) {
    if (line == "end") {
      saw_end = true;
      break;
    }
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "meta") {
      std::string key;
      ls >> key;
      if (key == "num_class") {
        ls >> num_class;
      } else if (key == "decoder") {
        std::string v;
        ls >> v;
        kind = decoder_kind_from_name(v);
      }
    } else if (tag == "arch") {
      arch_text += line.substr(5) + "\n";
    } else if (tag == "tensor") {
      Entry e;
      ls >> e.name >> e.dtype >> e.shape.n >> e.shape.c >> e.shape.h >> e.shape.w >>
          e.offset >> e.nbytes;
      if (!ls) throw FormatError("weight container: malformed tensor line '" + line + "'");
      if (e.dtype != "f32") {
        throw FormatError("weight container: unsupported dtype '" + e.dtype + "' for " +
                          e.name);
      }
      entries.push_back(e);
    } else {
      throw FormatError("weight container: unknown header line '" + line + "'");
    }
  }
  if (!saw_end) throw FormatError("weight container: truncated header (no end marker)");
  if (num_class < 2) throw FormatError("weight container: missing num_class");
  if (arch_text.empty()) throw FormatError("weight container: missing architecture table");

  const size_t payload_start = content.find("\nend\n");
  if (payload_start == std::string::npos) throw FormatError("weight container: no payload");
  const char* payload = content.data() + payload_start + 5;
  const uint64_t payload_size = content.size() - (payload_start + 5);

  // Index entries must be in-bounds and non-overlapping.
  std::vector<std::pair<uint64_t, uint64_t>> spans;
  for (const auto& e : entries) {
    if (e.offset + e.nbytes > payload_size) {
      throw FormatError("weight container: payload out of bounds for tensor '" + e.name +
                        "' (needs " + std::to_string(e.offset + e.nbytes) + " bytes, file has " +
                        std::to_string(payload_size) + ")");
    }
    spans.emplace_back(e.offset, e.offset + e.nbytes);
  }
  std::sort(spans.begin(), spans.end());
  for (size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].first < spans[i - 1].second) {
      throw FormatError("weight container: overlapping tensor payloads");
    }
  }

  Model model = build_sinet(parse_arch_table(arch_text), num_class, kind, 0);
  auto refs = tensor_refs(model);
  if (refs.size() != entries.size()) {
    throw FormatError("weight container: tensor count " + std::to_string(entries.size()) +
                      " does not match the architecture (" + std::to_string(refs.size()) + ")");
  }
  for (size_t i = 0; i < refs.size(); ++i) {
    const Entry& e = entries[i];
    TensorRef& r = refs[i];
    if (e.name != r.name) {
      throw FormatError("weight container: tensor '" + e.name + "' does not match expected '" +
                        r.name + "'");
    }
    if (!(e.shape == r.shape)) {
      throw DimensionError("weight container: tensor '" + e.name + "' has shape " +
                           e.shape.str() + ", architecture expects " + r.shape.str());
    }
    if (e.nbytes != static_cast<uint64_t>(r.numel) * sizeof(float)) {
      throw FormatError("weight container: byte count mismatch for tensor '" + e.name + "'");
    }
    std::memcpy(r.data, payload + e.offset, e.nbytes);
  }
  return model;
}

}  // namespace sinet
