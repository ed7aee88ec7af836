#include "repudf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace repudf {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {
constexpr char kMagic[8] = {'R', 'P', 'U', 'D', 'F', 'C', 'K', '1'};
}

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const nlohmann::json& meta) {
  nlohmann::json manifest;
  manifest["meta"] = meta;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& name : params.names()) {
    const MatX& p = params.at(name);
    manifest["tensors"].push_back({{"name", name},
                                   {"rows", p.rows()},
                                   {"cols", p.cols()},
                                   {"offset", offset}});
    offset += static_cast<std::uint64_t>(p.size());
  }
  const std::string text = manifest.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, 8);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& name : params.names()) {
    const MatX& p = params.at(name);
    out.write(reinterpret_cast<const char*>(p.data()),
              static_cast<std::streamsize>(sizeof(double) * p.size()));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::pair<ParamStore, nlohmann::json> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw ParseError("checkpoint: bad magic in " + path, 0);
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 8);
  if (!in) throw ParseError("checkpoint: truncated manifest length", 8);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParseError("checkpoint: truncated manifest", 16);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("checkpoint: manifest is not valid JSON: " + std::string(e.what()),
                     16 + e.byte);
  }
  ParamStore params;
  const std::uint64_t payload_start = 16 + len;
  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const Index rows = entry.at("rows").get<Index>();
    const Index cols = entry.at("cols").get<Index>();
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    if (rows < 0 || cols < 0)
      throw ParseError("checkpoint: negative shape for " + name, payload_start);
    MatX m(rows, cols);
    in.seekg(static_cast<std::streamoff>(payload_start + sizeof(double) * offset));
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!in)
      throw ParseError("checkpoint: truncated payload for " + name,
                       payload_start + sizeof(double) * offset);
    params.add(name, std::move(m));
  }
  return {std::move(params), manifest.value("meta", nlohmann::json::object())};
}

}  // namespace repudf
