#pragma once

#include <string>

#include "sinet/model.hpp"

namespace sinet {

// Weight container ("SINW1"): a textual header carrying the architecture
// table, class count and decoder kind plus one index line per tensor, then a
// raw little-endian IEEE-754 payload. Round trips are bit exact; see
// docs/formats.md for the byte-level layout.
void save_weights(Model& model, const std::string& path);
Model load_weights(const std::string& path);

}  // namespace sinet
