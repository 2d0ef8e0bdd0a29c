#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "eua/network.hpp"
#include "eua/tensor.hpp"

namespace eua {

// Frame decode failures get distinct types so callers can tell a corrupt
// payload from a short read from a foreign byte stream.
struct BadMagicError : FormatError {
  using FormatError::FormatError;
};
struct CrcMismatchError : FormatError {
  using FormatError::FormatError;
};
struct TruncatedFrameError : FormatError {
  using FormatError::FormatError;
};
struct TransportError : IoError {
  using IoError::IoError;
};

// Feature frame: "EUF1", u32le sequence id, u8 rank, rank x u32le dims,
// f32le payload, u32le CRC-32 of the payload bytes.
std::string encode_frame(const Tensor& h, std::uint32_t seq);
struct Frame {
  Tensor features;
  std::uint32_t seq = 0;
};
Frame decode_frame(const std::string& bytes);

// Ordered, reliable, single-producer single-consumer byte transport.
class ByteChannel {
 public:
  virtual ~ByteChannel() = default;
  virtual void send(const std::string& frame) = 0;
  virtual std::string receive() = 0;  // throws TransportError when drained/closed
  virtual void close() = 0;
};

class QueueChannel final : public ByteChannel {
 public:
  void send(const std::string& frame) override;
  std::string receive() override;
  void close() override { closed_ = true; }

 private:
  std::deque<std::string> queue_;
  bool closed_ = false;
};

// Length-prefixed records appended to a file; receive() replays them in
// order. Doubles as a frame dump for offline inspection.
class FileChannel final : public ByteChannel {
 public:
  explicit FileChannel(std::string path) : path_(std::move(path)) {}
  void send(const std::string& frame) override;
  std::string receive() override;
  void close() override { closed_ = true; }

 private:
  std::string path_;
  std::size_t read_offset_ = 0;
  bool closed_ = false;
};

struct SplitConfig {
  int depth = 4;                 // split point index into the key layers, 1-based
  std::vector<int> edge_layers;  // key layers up to and including the split point
};

// The attacker-visible half: layers up to the split point plus tap access.
// Cloud parameters and logits are unreachable from this type by construction.
class EdgeNode {
 public:
  EdgeNode(Model edge_model, SplitConfig cfg)
      : model_(std::move(edge_model)), cfg_(std::move(cfg)) {}

  const Model& model() const { return model_; }
  const SplitConfig& config() const { return cfg_; }

  // Features at the split layer for one batch.
  Tensor extract(const Tensor& batch) const;
  // Features at every edge key layer.
  std::map<int, Tensor> extract_taps(const Tensor& batch) const;

  void send(ByteChannel& ch, const Tensor& h);
  std::uint64_t bytes_sent() const { return bytes_sent_; }

 private:
  Model model_;
  SplitConfig cfg_;
  std::uint32_t next_seq_ = 0;
  std::uint64_t bytes_sent_ = 0;
};

class CloudNode {
 public:
  explicit CloudNode(Model cloud_model) : model_(std::move(cloud_model)) {}

  const Model& model() const { return model_; }

  Tensor finish(const Tensor& h) const;  // remaining layers + head
  Tensor receive(ByteChannel& ch);
  std::uint64_t bytes_received() const { return bytes_received_; }

 private:
  Model model_;
  std::uint64_t bytes_received_ = 0;
};

// Partitions at key layer `depth` (1-based). Warns (stderr) on an untrained
// model; throws on an out-of-range depth.
std::pair<EdgeNode, CloudNode> split_model(const Model& m, int depth);

// Edge extract -> frame -> channel -> cloud finish. Logits equal the
// monolithic forward bitwise because both halves run the same interpreter.
Tensor remote_infer(EdgeNode& edge, CloudNode& cloud, const Tensor& batch,
                    ByteChannel& ch);
Tensor remote_infer(EdgeNode& edge, CloudNode& cloud, const Tensor& batch);

}  // namespace eua
