#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "repudf/ply.hpp"
#include "repudf/rng.hpp"
#include "repudf/types.hpp"

using namespace repudf;

namespace {

PointCloud sample_cloud(Index n, std::uint64_t seed, bool colors, bool udf) {
  Rng rng(seed);
  PointCloud c;
  c.positions.resize(n, 3);
  for (Index i = 0; i < n; ++i) c.positions.row(i) = (rng.normal_vec3() * 1.7).transpose();
  if (colors) {
    c.colors.resize(n, 3);
    // Exact byte grid so the uchar round trip is lossless.
    for (Index i = 0; i < n; ++i)
      for (int j = 0; j < 3; ++j)
        c.colors(i, j) = static_cast<double>(rng.uniform_int(0, 255)) / 255.0;
  }
  if (udf) {
    c.udf.resize(n);
    for (Index i = 0; i < n; ++i) c.udf[i] = rng.uniform(0.0, 0.4);
  }
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

float as_float(double v) { return static_cast<float>(v); }

}  // namespace

TEST_CASE("binary ply round trips through the float grid") {
  for (bool colors : {false, true})
    for (bool udf : {false, true}) {
      PointCloud c = sample_cloud(37, colors ? 5u : 6u, colors, udf);
      const std::string path = "io_bin.ply";
      write_ply(path, c);
      PointCloud back = read_ply(path);
      REQUIRE(back.size() == 37);
      CHECK(back.has_colors() == colors);
      CHECK(back.has_udf() == udf);
      for (Index i = 0; i < back.size(); ++i) {
        for (int j = 0; j < 3; ++j)
          CHECK(back.positions(i, j) == static_cast<double>(as_float(c.positions(i, j))));
        if (udf) CHECK(back.udf[i] == static_cast<double>(as_float(c.udf[i])));
      }
      if (colors) CHECK(back.colors == c.colors);

      // write - read - write is byte stable.
      const std::string path2 = "io_bin2.ply";
      write_ply(path2, back);
      CHECK(slurp(path) == slurp(path2));
      std::remove(path.c_str());
      std::remove(path2.c_str());
    }
}

TEST_CASE("ascii ply round trips") {
  PointCloud c = sample_cloud(21, 9, true, true);
  const std::string path = "io_ascii.ply";
  write_ply(path, c, true);
  std::string text = slurp(path);
  CHECK(text.find("format ascii 1.0") != std::string::npos);
  PointCloud back = read_ply(path);
  REQUIRE(back.size() == 21);
  CHECK(back.colors == c.colors);
  const std::string path2 = "io_ascii2.ply";
  write_ply(path2, back, true);
  CHECK(text == slurp(path2));
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("ascii and binary agree on the parsed values") {
  PointCloud c = sample_cloud(12, 14, true, false);
  write_ply("io_a.ply", c, true);
  write_ply("io_b.ply", c, false);
  PointCloud a = read_ply("io_a.ply");
  PointCloud b = read_ply("io_b.ply");
  // %.9g prints float32 values exactly, so both paths land on the same doubles.
  CHECK(a.positions == b.positions);
  CHECK(a.colors == b.colors);
  std::remove("io_a.ply");
  std::remove("io_b.ply");
}

TEST_CASE("empty clouds are writable") {
  PointCloud empty;
  empty.positions.resize(0, 3);
  write_ply("io_empty.ply", empty);
  PointCloud back = read_ply("io_empty.ply");
  CHECK(back.size() == 0);
  CHECK_FALSE(back.has_colors());
  std::remove("io_empty.ply");
}

TEST_CASE("missing magic is rejected at byte zero") {
  spit("io_bad.ply", "plx\nformat ascii 1.0\nend_header\n");
  try {
    read_ply("io_bad.ply");
    FAIL("expected throw");
  } catch (const ParseError& e) {
    CHECK(e.byte_offset == 0);
  }
  std::remove("io_bad.ply");
}

TEST_CASE("unsupported header lines point at their own offset") {
  const std::string head = "ply\nformat ascii 1.0\n";
  const std::string bad_line = "element face 0\n";
  spit("io_face.ply",
       head + "element vertex 0\nproperty float x\nproperty float y\nproperty float z\n" +
           bad_line + "end_header\n");
  try {
    read_ply("io_face.ply");
    FAIL("expected throw");
  } catch (const ParseError& e) {
    const std::string text = slurp("io_face.ply");
    CHECK(e.byte_offset == text.find(bad_line));
  }
  std::remove("io_face.ply");

  spit("io_prop.ply", head + "element vertex 1\nproperty float x\nproperty float y\n" +
                          "property float z\nproperty double weight\nend_header\n0 0 0 1\n");
  try {
    read_ply("io_prop.ply");
    FAIL("expected throw");
  } catch (const ParseError& e) {
    const std::string text = slurp("io_prop.ply");
    CHECK(e.byte_offset == text.find("property double"));
  }
  std::remove("io_prop.ply");
}

TEST_CASE("incomplete position properties are rejected") {
  spit("io_xy.ply",
       "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
       "end_header\n0 0\n");
  CHECK_THROWS_AS(read_ply("io_xy.ply"), ParseError);
  std::remove("io_xy.ply");
  // Colors must come as a complete triple.
  spit("io_rg.ply",
       "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
       "property float z\nproperty uchar red\nproperty uchar green\nend_header\n0 0 0 1 2\n");
  CHECK_THROWS_AS(read_ply("io_rg.ply"), ParseError);
  std::remove("io_rg.ply");
}

TEST_CASE("binary truncation points at the end of the file") {
  PointCloud c = sample_cloud(10, 31, true, true);
  write_ply("io_trunc.ply", c);
  std::string bytes = slurp("io_trunc.ply");
  std::string cut = bytes.substr(0, bytes.size() - 7);
  spit("io_trunc.ply", cut);
  try {
    read_ply("io_trunc.ply");
    FAIL("expected throw");
  } catch (const ParseError& e) {
    CHECK(e.byte_offset == cut.size());
  }
  // Extra bytes after the payload are also an error.
  spit("io_trunc.ply", bytes + "!!");
  try {
    read_ply("io_trunc.ply");
    FAIL("expected throw");
  } catch (const ParseError& e) {
    CHECK(e.byte_offset == bytes.size());
  }
  std::remove("io_trunc.ply");
}

TEST_CASE("ascii payload errors carry offsets") {
  const std::string head =
      "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
      "property float z\nend_header\n";
  spit("io_tok.ply", head + "0 0 0\n1 oops 1\n");
  try {
    read_ply("io_tok.ply");
    FAIL("expected throw");
  } catch (const ParseError& e) {
    CHECK(e.byte_offset >= head.size());
  }
  std::remove("io_tok.ply");

  // Too few rows.
  spit("io_short.ply", head + "0 0 0\n");
  CHECK_THROWS_AS(read_ply("io_short.ply"), ParseError);
  std::remove("io_short.ply");

  // Trailing garbage after the last row.
  spit("io_tail.ply", head + "0 0 0\n1 1 1\nleftover\n");
  CHECK_THROWS_AS(read_ply("io_tail.ply"), ParseError);
  std::remove("io_tail.ply");
}

TEST_CASE("ascii colors must be integral bytes") {
  const std::string head =
      "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
      "property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n"
      "end_header\n";
  spit("io_c300.ply", head + "0 0 0 300 0 0\n");
  CHECK_THROWS_AS(read_ply("io_c300.ply"), ParseError);
  std::remove("io_c300.ply");
  spit("io_cneg.ply", head + "0 0 0 -1 0 0\n");
  CHECK_THROWS_AS(read_ply("io_cneg.ply"), ParseError);
  std::remove("io_cneg.ply");
  spit("io_cfrac.ply", head + "0 0 0 1.5 0 0\n");
  CHECK_THROWS_AS(read_ply("io_cfrac.ply"), ParseError);
  std::remove("io_cfrac.ply");
  spit("io_cok.ply", head + "0 0 0 255 0 17\n");
  PointCloud ok = read_ply("io_cok.ply");
  CHECK(ok.colors(0, 0) == 1.0);
  CHECK(ok.colors(0, 2) == doctest::Approx(17.0 / 255.0));
  std::remove("io_cok.ply");
}

TEST_CASE("missing files and wrong formats are runtime errors") {
  CHECK_THROWS_AS(read_ply("does_not_exist.ply"), std::runtime_error);
  spit("io_fmt.ply", "ply\nformat binary_big_endian 1.0\nend_header\n");
  CHECK_THROWS_AS(read_ply("io_fmt.ply"), ParseError);
  std::remove("io_fmt.ply");
}

TEST_CASE("properties may come in any order") {
  spit("io_order.ply",
       "ply\nformat ascii 1.0\nelement vertex 1\nproperty float z\nproperty float x\n"
       "property float y\nend_header\n3 1 2\n");
  PointCloud c = read_ply("io_order.ply");
  CHECK(c.positions(0, 0) == 1.0);
  CHECK(c.positions(0, 1) == 2.0);
  CHECK(c.positions(0, 2) == 3.0);
  std::remove("io_order.ply");
}
