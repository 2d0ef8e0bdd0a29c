#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "eua/tensor.hpp"

namespace eua {

// Insertion-ordered JSON so serialized headers are byte-stable.
using Json = nlohmann::ordered_json;

void append_u32le(std::string& out, std::uint32_t v);
std::uint32_t read_u32le(const unsigned char* p);

// IEEE CRC-32 (reflected, poly 0xEDB88320), as used by zip/png.
std::uint32_t crc32(const void* data, std::size_t n);

// FNV-1a 64-bit content hash; used to fingerprint input artifacts.
std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t fnv1a64_file(const std::string& path);
std::string hex64(std::uint64_t v);

// Single-tensor blob: "EUT1", u8 rank, rank x u32le dims, f32le payload.
std::string encode_tensor(const Tensor& t);
// Decodes one blob starting at data[0]; *consumed (optional) receives its size.
Tensor decode_tensor(const unsigned char* data, std::size_t size,
                     std::size_t* consumed = nullptr);
Tensor decode_tensor(const std::string& blob);

// Named-tensor container: "EUC1", u32le header length, JSON header, then the
// tensor blobs back to back. The header carries kind/meta plus a manifest of
// byte offsets (relative to the blob region) so tools can seek without
// decoding everything.
struct Container {
  std::string kind;
  Json meta = Json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  void add(const std::string& name, Tensor t) {
    tensors.emplace_back(name, std::move(t));
  }
  bool has(const std::string& name) const;
  const Tensor& tensor(const std::string& name) const;  // throws FormatError
};

std::string encode_container(const Container& c);
Container decode_container(const std::string& bytes);
void save_container(const std::string& path, const Container& c);
Container load_container(const std::string& path);
// Loads and checks the kind tag, giving a path-bearing error on mismatch.
Container load_container(const std::string& path, const std::string& expect_kind);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

// Binary portable pixmaps for quick visual inspection. Inputs are float
// images with values in [0,1]; out-of-range values are clamped. write_pgm
// accepts (H,W) or (1,H,W); write_ppm accepts (3,H,W).
void write_pgm(const std::string& path, const Tensor& img);
void write_ppm(const std::string& path, const Tensor& img);

}  // namespace eua
