#include "eua/serialize.hpp"

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace eua {

void append_u32le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> t{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    t[i] = c;
  }
  return t;
}

}  // namespace

std::uint32_t crc32(const void* data, std::size_t n) {
  static const std::array<std::uint32_t, 256> table = make_crc_table();
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) c = table[(c ^ p[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  std::string bytes = read_file(path);
  return fnv1a64(bytes.data(), bytes.size());
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string encode_tensor(const Tensor& t) {
  if (t.rank() < 1 || t.rank() > 255)
    throw FormatError("tensor blob: unsupported rank " + std::to_string(t.rank()));
  std::string out;
  out.reserve(5 + 4 * static_cast<std::size_t>(t.rank()) +
              4 * static_cast<std::size_t>(t.numel()));
  out += "EUT1";
  out.push_back(static_cast<char>(t.rank()));
  for (int d : t.shape()) append_u32le(out, static_cast<std::uint32_t>(d));
  static_assert(sizeof(float) == 4);
  const std::size_t payload = 4 * static_cast<std::size_t>(t.numel());
  const std::size_t base = out.size();
  out.resize(base + payload);
  // Assumes little-endian float layout, which holds on every target we build.
  std::memcpy(out.data() + base, t.data(), payload);
  return out;
}

Tensor decode_tensor(const unsigned char* data, std::size_t size, std::size_t* consumed) {
  if (size < 5) throw FormatError("tensor blob: truncated header");
  if (std::memcmp(data, "EUT1", 4) != 0)
    throw FormatError("tensor blob: bad magic (expected EUT1)");
  const int rank = data[4];
  if (rank < 1) throw FormatError("tensor blob: zero rank");
  std::size_t off = 5;
  if (size < off + 4 * static_cast<std::size_t>(rank))
    throw FormatError("tensor blob: truncated dims");
  Shape shape(static_cast<std::size_t>(rank));
  std::int64_t numel = 1;
  for (int i = 0; i < rank; ++i) {
    const std::uint32_t d = read_u32le(data + off);
    off += 4;
    if (d == 0 || d > 0x7FFFFFFFu)
      throw FormatError("tensor blob: invalid dimension " + std::to_string(d));
    shape[static_cast<std::size_t>(i)] = static_cast<int>(d);
    numel *= d;
  }
  const std::size_t payload = 4 * static_cast<std::size_t>(numel);
  if (size < off + payload) throw FormatError("tensor blob: truncated payload");
  std::vector<float> v(static_cast<std::size_t>(numel));
  std::memcpy(v.data(), data + off, payload);
  if (consumed) *consumed = off + payload;
  return Tensor(std::move(shape), std::move(v));
}

Tensor decode_tensor(const std::string& blob) {
  return decode_tensor(reinterpret_cast<const unsigned char*>(blob.data()),
                       blob.size(), nullptr);
}

bool Container::has(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

const Tensor& Container::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw FormatError("container: no tensor named '" + name + "'");
}

std::string encode_container(const Container& c) {
  Json header;
  header["version"] = "v1";
  header["kind"] = c.kind;
  header["meta"] = c.meta;
  Json manifest = Json::array();
  std::string blobs;
  for (const auto& [name, t] : c.tensors) {
    std::string b = encode_tensor(t);
    Json entry;
    entry["name"] = name;
    entry["offset"] = blobs.size();
    entry["bytes"] = b.size();
    manifest.push_back(std::move(entry));
    blobs += b;
  }
  header["tensors"] = std::move(manifest);
  const std::string hdr = header.dump();
  std::string out = "EUC1";
  append_u32le(out, static_cast<std::uint32_t>(hdr.size()));
  out += hdr;
  out += blobs;
  return out;
}

Container decode_container(const std::string& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 8) throw FormatError("container: truncated header");
  if (std::memcmp(p, "EUC1", 4) != 0)
    throw FormatError("container: bad magic (expected EUC1)");
  const std::uint32_t hdr_len = read_u32le(p + 4);
  if (bytes.size() < 8 + static_cast<std::size_t>(hdr_len))
    throw FormatError("container: truncated JSON header");
  Json header;
  try {
    header = Json::parse(bytes.substr(8, hdr_len));
  } catch (const std::exception& e) {
    throw FormatError(std::string("container: unparsable header: ") + e.what());
  }
  Container c;
  try {
    c.kind = header.at("kind").get<std::string>();
    c.meta = header.value("meta", Json::object());
    const std::size_t blob_base = 8 + hdr_len;
    for (const auto& entry : header.at("tensors")) {
      const std::string name = entry.at("name").get<std::string>();
      const std::size_t off = entry.at("offset").get<std::size_t>();
      const std::size_t len = entry.at("bytes").get<std::size_t>();
      if (blob_base + off + len > bytes.size())
        throw FormatError("container: tensor '" + name + "' extends past end of file");
      std::size_t consumed = 0;
      Tensor t = decode_tensor(p + blob_base + off, len, &consumed);
      if (consumed != len)
        throw FormatError("container: tensor '" + name + "' length mismatch");
      c.tensors.emplace_back(name, std::move(t));
    }
  } catch (const Json::exception& e) {
    throw FormatError(std::string("container: malformed header: ") + e.what());
  }
  return c;
}

void save_container(const std::string& path, const Container& c) {
  write_file(path, encode_container(c));
}

Container load_container(const std::string& path) {
  try {
    return decode_container(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

Container load_container(const std::string& path, const std::string& expect_kind) {
  Container c = load_container(path);
  if (c.kind != expect_kind)
    throw FormatError(path + ": container kind '" + c.kind + "', expected '" +
                      expect_kind + "'");
  return c;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("read failed: " + path);
  return bytes;
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  f.flush();
  if (!f) throw IoError("write failed: " + path);
}

namespace {

unsigned char to_byte(float v) {
  float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  return static_cast<unsigned char>(c * 255.0f + 0.5f);
}

}  // namespace

void write_pgm(const std::string& path, const Tensor& img) {
  Shape s = img.shape();
  if (s.size() == 3 && s[0] == 1) s = {s[1], s[2]};
  if (s.size() != 2)
    throw ShapeError("pgm: need (H,W) or (1,H,W), got " + shape_str(img.shape()));
  std::string out = "P5\n" + std::to_string(s[1]) + " " + std::to_string(s[0]) + "\n255\n";
  for (std::int64_t i = 0; i < img.numel(); ++i)
    out.push_back(static_cast<char>(to_byte(img[i])));
  write_file(path, out);
}

void write_ppm(const std::string& path, const Tensor& img) {
  if (img.rank() != 3 || img.dim(0) != 3)
    throw ShapeError("ppm: need (3,H,W), got " + shape_str(img.shape()));
  const int h = img.dim(1), w = img.dim(2);
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (std::int64_t i = 0; i < plane; ++i)
    for (int ch = 0; ch < 3; ++ch)
      out.push_back(static_cast<char>(to_byte(img[ch * plane + i])));
  write_file(path, out);
}

}  // namespace eua
