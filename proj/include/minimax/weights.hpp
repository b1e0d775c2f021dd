#pragma once

// Weight archive: a directory holding
//   manifest.txt  one line per tensor: <name> <n>,<c>,<h>,<w> float32 <byte offset>
//   weights.bin   the tensors back to back as little-endian IEEE float32
// Lines beginning with '#' are comments.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "minimax/model.hpp"

namespace minimax {

struct ManifestEntry {
  std::string name;
  Shape shape;
  std::string dtype;
  std::uint64_t offset = 0;
};

namespace detail {

inline std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
  return v;
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open manifest " + file.string());
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string dims;
    if (!(ls >> e.name >> dims >> e.dtype >> e.offset))
      throw IoError(file.string() + ":" + std::to_string(lineno) + ": malformed manifest line");
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream ds(dims);
    if (!(ds >> e.shape.n >> c1 >> e.shape.c >> c2 >> e.shape.h >> c3 >> e.shape.w) ||
        c1 != ',' || c2 != ',' || c3 != ',')
      throw IoError(file.string() + ":" + std::to_string(lineno) + ": bad shape '" + dims + "'");
    if (e.dtype != "float32")
      throw IoError(file.string() + ": unsupported dtype " + e.dtype + " for " + e.name);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace detail

template <typename Scalar>
void save_weights(Model<Scalar>& model, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ofstream manifest(dir / "manifest.txt");
  std::ofstream blob(dir / "weights.bin", std::ios::binary);
  if (!manifest || !blob) throw IoError("cannot write weight archive in " + dir.string());
  manifest << "# name shape dtype offset\n";
  std::uint64_t offset = 0;
  model.visit([&](const std::string& name, Var<Scalar>& v) {
    const auto& t = v.value();
    const Shape s = t.shape();
    manifest << name << ' ' << s.n << ',' << s.c << ',' << s.h << ',' << s.w << " float32 "
             << offset << '\n';
    for (Index i = 0; i < t.size(); ++i) {
      const auto bits = detail::to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(t[i])));
      blob.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
    }
    offset += static_cast<std::uint64_t>(t.size()) * 4;
  });
  if (!manifest || !blob) throw IoError("write failed for weight archive " + dir.string());
}

// Loads every tensor of `model` by name. Names absent from the archive are an
// error unless `allow_partial` is set (e.g. ingesting encoder-only weights).
template <typename Scalar>
void load_weights(Model<Scalar>& model, const std::filesystem::path& dir,
                  bool allow_partial = false) {
  const auto entries = detail::read_manifest(dir / "manifest.txt");
  std::map<std::string, const ManifestEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  std::ifstream blob(dir / "weights.bin", std::ios::binary);
  if (!blob) throw IoError("cannot open " + (dir / "weights.bin").string());
  model.visit([&](const std::string& name, Var<Scalar>& v) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      if (allow_partial) return;
      throw IoError("weight archive " + dir.string() + " lacks tensor " + name);
    }
    const ManifestEntry& e = *it->second;
    if (!(e.shape == v.shape()))
      throw ConfigError("tensor " + name + " has shape " + to_string(e.shape) +
                        " in archive but model expects " + to_string(v.shape()));
    Tensor<Scalar>& t = v.mutable_value();
    blob.seekg(static_cast<std::streamoff>(e.offset));
    for (Index i = 0; i < t.size(); ++i) {
      std::uint32_t bits = 0;
      blob.read(reinterpret_cast<char*>(&bits), sizeof(bits));
      t[i] = static_cast<Scalar>(std::bit_cast<float>(detail::to_little_endian(bits)));
    }
    if (!blob) throw IoError("weight blob truncated while reading " + name);
  });
}

}  // namespace minimax
