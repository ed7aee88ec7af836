#pragma once

#include <string>
#include <utility>

#include <json.hpp>

#include "repudf/tape.hpp"

namespace repudf {

// Checkpoint layout, all integers little-endian:
//   bytes 0..7   magic "RPUDFCK1"
//   bytes 8..15  uint64 manifest length in bytes
//   manifest     UTF-8 JSON {"tensors": [{name, rows, cols, offset}...],
//                "meta": {...}}; offset counts doubles into the payload
//   payload      raw IEEE-754 doubles, column-major per tensor
// Values round-trip bit-exactly.
void save_checkpoint(const std::string& path, const ParamStore& params,
                     const nlohmann::json& meta);

std::pair<ParamStore, nlohmann::json> load_checkpoint(const std::string& path);

}  // namespace repudf
