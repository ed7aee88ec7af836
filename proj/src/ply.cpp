#include "repudf/ply.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace repudf {

static_assert(std::endian::native == std::endian::little,
              "binary PLY i/o assumes a little-endian host");

namespace {

unsigned char to_byte(double c) {
  const long v = std::lround(c * 255.0);
  return static_cast<unsigned char>(std::clamp(v, 0L, 255L));
}

void append_float(std::string& out, float v) {
  char raw[4];
  std::memcpy(raw, &v, 4);
  out.append(raw, 4);
}

// Shortest text that scans back to the same float32.
void append_float_text(std::string& out, float v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  out += buf;
}

}  // namespace

void write_ply(const std::string& path, const PointCloud& cloud, bool ascii) {
  cloud.validate();
  std::string out;
  out += "ply\n";
  out += ascii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n";
  out += "element vertex " + std::to_string(cloud.size()) + "\n";
  out += "property float x\nproperty float y\nproperty float z\n";
  if (cloud.has_colors()) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (cloud.has_udf()) out += "property float udf\n";
  out += "end_header\n";

  for (Index i = 0; i < cloud.size(); ++i) {
    if (ascii) {
      for (int a = 0; a < 3; ++a) {
        if (a) out += ' ';
        append_float_text(out, static_cast<float>(cloud.positions(i, a)));
      }
      if (cloud.has_colors())
        for (int a = 0; a < 3; ++a)
          out += ' ' + std::to_string(static_cast<int>(to_byte(cloud.colors(i, a))));
      if (cloud.has_udf()) {
        out += ' ';
        append_float_text(out, static_cast<float>(cloud.udf[i]));
      }
      out += '\n';
    } else {
      for (int a = 0; a < 3; ++a) append_float(out, static_cast<float>(cloud.positions(i, a)));
      if (cloud.has_colors())
        for (int a = 0; a < 3; ++a) out += static_cast<char>(to_byte(cloud.colors(i, a)));
      if (cloud.has_udf()) append_float(out, static_cast<float>(cloud.udf[i]));
    }
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

namespace {

enum class Prop { X, Y, Z, Red, Green, Blue, Udf };

struct PropSpec {
  Prop prop;
  bool is_float;  // float32 vs uchar
};

struct HeaderInfo {
  bool ascii = false;
  Index count = 0;
  std::vector<PropSpec> props;
  std::size_t data_offset = 0;
};

// Reads one \n-terminated line; pos is left after the newline.
std::string next_line(const std::string& text, std::size_t& pos) {
  const std::size_t start = pos;
  const std::size_t nl = text.find('\n', start);
  if (nl == std::string::npos) throw ParseError("unterminated header line", start);
  pos = nl + 1;
  return text.substr(start, nl - start);
}

HeaderInfo parse_header(const std::string& text) {
  std::size_t pos = 0;
  std::size_t line_start = pos;
  if (next_line(text, pos) != "ply") throw ParseError("missing ply magic", line_start);

  HeaderInfo info;
  bool have_format = false, have_element = false, done = false;
  while (!done) {
    line_start = pos;
    if (pos >= text.size()) throw ParseError("header without end_header", text.size());
    const std::string line = next_line(text, pos);
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word == "comment") continue;
    if (word == "format") {
      std::string fmt, version;
      ss >> fmt >> version;
      if (version != "1.0" || (fmt != "ascii" && fmt != "binary_little_endian"))
        throw ParseError("unsupported format: " + line, line_start);
      info.ascii = fmt == "ascii";
      have_format = true;
    } else if (word == "element") {
      std::string kind;
      long long n = -1;
      ss >> kind >> n;
      if (kind != "vertex" || have_element || n < 0)
        throw ParseError("unsupported element: " + line, line_start);
      info.count = static_cast<Index>(n);
      have_element = true;
    } else if (word == "property") {
      if (!have_element) throw ParseError("property before element: " + line, line_start);
      std::string type, name;
      ss >> type >> name;
      static const std::pair<const char*, PropSpec> known[] = {
          {"x", {Prop::X, true}},     {"y", {Prop::Y, true}},      {"z", {Prop::Z, true}},
          {"red", {Prop::Red, false}}, {"green", {Prop::Green, false}},
          {"blue", {Prop::Blue, false}}, {"udf", {Prop::Udf, true}}};
      bool found = false;
      for (const auto& [n2, spec] : known)
        if (name == n2) {
          const char* want = spec.is_float ? "float" : "uchar";
          if (type != want) throw ParseError("unsupported property type: " + line, line_start);
          info.props.push_back(spec);
          found = true;
          break;
        }
      if (!found) throw ParseError("unsupported property: " + line, line_start);
    } else if (word == "end_header") {
      done = true;
    } else {
      throw ParseError("unrecognized header line: " + line, line_start);
    }
  }
  if (!have_format) throw ParseError("header missing format", pos);
  if (!have_element) throw ParseError("header missing vertex element", pos);
  info.data_offset = pos;

  auto has = [&](Prop p) {
    for (const PropSpec& s : info.props)
      if (s.prop == p) return true;
    return false;
  };
  if (!has(Prop::X) || !has(Prop::Y) || !has(Prop::Z))
    throw ParseError("vertex element lacks x/y/z", pos);
  const int colors = has(Prop::Red) + has(Prop::Green) + has(Prop::Blue);
  if (colors != 0 && colors != 3) throw ParseError("incomplete color properties", pos);
  return info;
}

}  // namespace

PointCloud read_ply(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  const HeaderInfo info = parse_header(text);

  PointCloud cloud;
  cloud.positions.resize(info.count, 3);
  bool any_color = false, any_udf = false;
  for (const PropSpec& s : info.props) {
    any_color |= s.prop == Prop::Red;
    any_udf |= s.prop == Prop::Udf;
  }
  if (any_color) cloud.colors.resize(info.count, 3);
  if (any_udf) cloud.udf.resize(info.count);

  auto store = [&](Index row, Prop p, double v) {
    switch (p) {
      case Prop::X: cloud.positions(row, 0) = v; break;
      case Prop::Y: cloud.positions(row, 1) = v; break;
      case Prop::Z: cloud.positions(row, 2) = v; break;
      case Prop::Red: cloud.colors(row, 0) = v / 255.0; break;
      case Prop::Green: cloud.colors(row, 1) = v / 255.0; break;
      case Prop::Blue: cloud.colors(row, 2) = v / 255.0; break;
      case Prop::Udf: cloud.udf[row] = v; break;
    }
  };

  if (!info.ascii) {
    std::size_t stride = 0;
    for (const PropSpec& s : info.props) stride += s.is_float ? 4 : 1;
    const std::size_t need = static_cast<std::size_t>(info.count) * stride;
    if (text.size() - info.data_offset < need)
      throw ParseError("vertex data truncated", text.size());
    if (text.size() - info.data_offset > need)
      throw ParseError("trailing bytes after vertex data", info.data_offset + need);
    std::size_t pos = info.data_offset;
    for (Index row = 0; row < info.count; ++row)
      for (const PropSpec& s : info.props) {
        if (s.is_float) {
          float v;
          std::memcpy(&v, text.data() + pos, 4);
          store(row, s.prop, static_cast<double>(v));
          pos += 4;
        } else {
          store(row, s.prop, static_cast<double>(static_cast<unsigned char>(text[pos])));
          pos += 1;
        }
      }
  } else {
    std::size_t pos = info.data_offset;
    auto skip_space = [&] {
      while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\n' || text[pos] == '\r' ||
                                   text[pos] == '\t'))
        ++pos;
    };
    for (Index row = 0; row < info.count; ++row)
      for (const PropSpec& s : info.props) {
        skip_space();
        if (pos >= text.size()) throw ParseError("vertex data truncated", text.size());
        const char* begin = text.data() + pos;
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (end == begin) throw ParseError("malformed number in vertex data", pos);
        if (!s.is_float && (v != std::floor(v) || v < 0.0 || v > 255.0))
          throw ParseError("color value out of range", pos);
        // Declared float32 properties land on the same doubles as the binary path.
        store(row, s.prop, s.is_float ? static_cast<double>(static_cast<float>(v)) : v);
        pos += static_cast<std::size_t>(end - begin);
      }
    skip_space();
    if (pos != text.size()) throw ParseError("trailing bytes after vertex data", pos);
  }
  return cloud;
}

}  // namespace repudf
