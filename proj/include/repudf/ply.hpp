#pragma once

#include <string>

#include "repudf/types.hpp"

namespace repudf {

// Point-cloud PLY with float32 x/y/z, optional uchar red/green/blue, optional
// float32 udf. Binary files are little-endian; `ascii` selects the text
// format. Writing then reading then writing again reproduces the first file
// byte for byte.
void write_ply(const std::string& path, const PointCloud& cloud, bool ascii = false);

// Accepts ascii and binary_little_endian 1.0 with one vertex element whose
// properties are any order of the supported set (x, y, z required). Anything
// else raises ParseError with the offending byte offset.
PointCloud read_ply(const std::string& path);

}  // namespace repudf
