#pragma once

// Tensor container: a text header line, a JSON manifest (name -> shape,
// dtype, byte offset), then the raw little-endian float64 payloads in
// manifest order.
//
//   formlink-tensors <version> <manifest-bytes>\n
//   {"tensors":[{"name":..,"shape":[..],"dtype":"f64le","offset":..,"bytes":..},..],"meta":{..}}
//   <payload>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "formlink/error.hpp"
#include "formlink/tensorcore/tensor.hpp"

namespace formlink::tc {

inline constexpr int kContainerVersion = 1;
inline constexpr const char* kContainerMagic = "formlink-tensors";

struct TensorContainer {
  std::vector<std::pair<std::string, Tensor>> tensors;
  nlohmann::json meta = nlohmann::json::object();

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

namespace detail {

inline void put_le64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline double get_le64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace detail

inline std::string serialize_container(const TensorContainer& c) {
  nlohmann::json entries = nlohmann::json::array();
  std::string payload;
  for (const auto& [name, t] : c.tensors) {
    entries.push_back({{"name", name},
                       {"shape", t.shape()},
                       {"dtype", "f64le"},
                       {"offset", payload.size()},
                       {"bytes", t.size() * 8}});
    for (double v : t.values()) detail::put_le64(payload, v);
  }
  nlohmann::json manifest = {{"tensors", entries}, {"meta", c.meta}};
  const std::string m = manifest.dump();
  std::string out = std::string(kContainerMagic) + " " + std::to_string(kContainerVersion) + " " +
                    std::to_string(m.size()) + "\n";
  out += m;
  out += payload;
  return out;
}

inline TensorContainer parse_container(const std::string& bytes, const std::string& source = "<memory>") {
  auto fail = [&](const std::string& why) -> LoadError { return LoadError(source + ": " + why); };
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw fail("missing container header");
  std::istringstream header(bytes.substr(0, nl));
  std::string magic;
  int version = 0;
  std::size_t mlen = 0;
  if (!(header >> magic >> version >> mlen) || magic != kContainerMagic) throw fail("not a tensor container");
  if (version != kContainerVersion) throw fail("unsupported container version " + std::to_string(version));
  if (bytes.size() < nl + 1 + mlen) throw fail("truncated manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(nl + 1),
                                     bytes.begin() + static_cast<std::ptrdiff_t>(nl + 1 + mlen));
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("corrupt manifest: ") + e.what());
  }
  const std::size_t base = nl + 1 + mlen;
  const std::size_t payload_size = bytes.size() - base;
  TensorContainer c;
  try {
    c.meta = manifest.at("meta");
    std::size_t expected_offset = 0;
    for (const auto& e : manifest.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto nbytes = e.at("bytes").get<std::size_t>();
      if (e.at("dtype").get<std::string>() != "f64le") throw fail("tensor " + name + ": unsupported dtype");
      if (shape.empty() || shape_numel(shape) * 8 != nbytes) throw fail("tensor " + name + ": shape/size mismatch");
      if (offset != expected_offset) throw fail("tensor " + name + ": offsets out of manifest order");
      if (offset + nbytes > payload_size) throw fail("tensor " + name + ": payload truncated");
      std::vector<double> vals(nbytes / 8);
      const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + base + offset);
      for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = detail::get_le64(p + 8 * i);
      c.tensors.emplace_back(name, Tensor(shape, std::move(vals)));
      expected_offset += nbytes;
    }
    if (expected_offset != payload_size) throw fail("trailing bytes after payload");
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("corrupt manifest: ") + e.what());
  } catch (const ContractError& e) {
    throw fail(std::string("corrupt manifest: ") + e.what());
  }
  return c;
}

/// Writes atomically: the file either has the full container or is left untouched.
inline void save_container(const std::filesystem::path& path, const TensorContainer& c) {
  const std::string bytes = serialize_container(c);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw LoadError("cannot open " + tmp.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw LoadError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline TensorContainer load_container(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_container(bytes, path.string());
}

}  // namespace formlink::tc
