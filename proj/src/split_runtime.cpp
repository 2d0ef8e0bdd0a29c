#include "eua/split_runtime.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>

#include "eua/serialize.hpp"

namespace eua {

std::string encode_frame(const Tensor& h, std::uint32_t seq) {
  if (h.rank() < 1 || h.rank() > 255)
    throw FormatError("frame: unsupported rank " + std::to_string(h.rank()));
  std::string out = "EUF1";
  append_u32le(out, seq);
  out.push_back(static_cast<char>(h.rank()));
  for (int d : h.shape()) append_u32le(out, static_cast<std::uint32_t>(d));
  const std::size_t payload = 4 * static_cast<std::size_t>(h.numel());
  const std::size_t base = out.size();
  out.resize(base + payload);
  std::memcpy(out.data() + base, h.data(), payload);
  append_u32le(out, crc32(out.data() + base, payload));
  return out;
}

Frame decode_frame(const std::string& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 4) throw TruncatedFrameError("frame: short header");
  if (std::memcmp(p, "EUF1", 4) != 0)
    throw BadMagicError("frame: bad magic (expected EUF1)");
  if (bytes.size() < 9) throw TruncatedFrameError("frame: short header");
  const std::uint32_t seq = read_u32le(p + 4);
  const int rank = p[8];
  if (rank < 1) throw TruncatedFrameError("frame: zero rank");
  std::size_t off = 9;
  if (bytes.size() < off + 4 * static_cast<std::size_t>(rank))
    throw TruncatedFrameError("frame: truncated dims");
  Shape shape(static_cast<std::size_t>(rank));
  std::int64_t numel = 1;
  for (int i = 0; i < rank; ++i) {
    const std::uint32_t d = read_u32le(p + off);
    off += 4;
    if (d == 0 || d > 0x7FFFFFFFu)
      throw TruncatedFrameError("frame: invalid dimension " + std::to_string(d));
    shape[static_cast<std::size_t>(i)] = static_cast<int>(d);
    numel *= d;
  }
  const std::size_t payload = 4 * static_cast<std::size_t>(numel);
  if (bytes.size() < off + payload + 4)
    throw TruncatedFrameError("frame: truncated payload");
  const std::uint32_t want_crc = read_u32le(p + off + payload);
  const std::uint32_t got_crc = crc32(p + off, payload);
  if (want_crc != got_crc)
    throw CrcMismatchError("frame: CRC mismatch (stored " + hex64(want_crc) +
                           ", computed " + hex64(got_crc) + ")");
  std::vector<float> v(static_cast<std::size_t>(numel));
  std::memcpy(v.data(), p + off, payload);
  Frame f;
  f.features = Tensor(std::move(shape), std::move(v));
  f.seq = seq;
  return f;
}

void QueueChannel::send(const std::string& frame) {
  if (closed_) throw TransportError("channel: send on closed channel");
  queue_.push_back(frame);
}

std::string QueueChannel::receive() {
  if (queue_.empty()) {
    if (closed_) throw TransportError("channel: receive on closed channel");
    throw TransportError("channel: receive on empty channel");
  }
  std::string out = std::move(queue_.front());
  queue_.pop_front();
  return out;
}

void FileChannel::send(const std::string& frame) {
  if (closed_) throw TransportError("channel: send on closed channel");
  std::ofstream f(path_, std::ios::binary | std::ios::app);
  if (!f) throw TransportError("channel: cannot append to " + path_);
  std::string rec;
  append_u32le(rec, static_cast<std::uint32_t>(frame.size()));
  rec += frame;
  f.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  if (!f) throw TransportError("channel: write failed on " + path_);
}

std::string FileChannel::receive() {
  if (closed_) throw TransportError("channel: receive on closed channel");
  std::ifstream f(path_, std::ios::binary);
  if (!f) throw TransportError("channel: cannot read " + path_);
  f.seekg(static_cast<std::streamoff>(read_offset_));
  unsigned char lenbuf[4];
  if (!f.read(reinterpret_cast<char*>(lenbuf), 4))
    throw TransportError("channel: no more records in " + path_);
  const std::uint32_t len = read_u32le(lenbuf);
  std::string out(len, '\0');
  if (!f.read(out.data(), static_cast<std::streamsize>(len)))
    throw TransportError("channel: truncated record in " + path_);
  read_offset_ += 4 + len;
  return out;
}

Tensor EdgeNode::extract(const Tensor& batch) const {
  return run_layers(model_, batch, 0, static_cast<int>(model_.spec.layers.size()));
}

std::map<int, Tensor> EdgeNode::extract_taps(const Tensor& batch) const {
  std::map<int, Tensor> taps;
  run_layers(model_, batch, 0, static_cast<int>(model_.spec.layers.size()),
             cfg_.edge_layers, &taps);
  return taps;
}

void EdgeNode::send(ByteChannel& ch, const Tensor& h) {
  const std::string frame = encode_frame(h, next_seq_++);
  bytes_sent_ += frame.size();
  ch.send(frame);
}

Tensor CloudNode::finish(const Tensor& h) const {
  return run_layers(model_, h, 0, static_cast<int>(model_.spec.layers.size()));
}

Tensor CloudNode::receive(ByteChannel& ch) {
  const std::string frame = ch.receive();
  bytes_received_ += frame.size();
  return decode_frame(frame).features;
}

std::pair<EdgeNode, CloudNode> split_model(const Model& m, int depth) {
  const int nk = static_cast<int>(m.spec.key_layers.size());
  if (depth < 1 || depth > nk)
    throw ShapeError("split_model: depth " + std::to_string(depth) +
                     " out of range 1.." + std::to_string(nk));
  if (!m.trained)
    std::fprintf(stderr, "split_model: warning: splitting an untrained model\n");

  const int cut = m.spec.key_layers[static_cast<std::size_t>(depth - 1)];
  const int total = static_cast<int>(m.spec.layers.size());

  auto collect_params = [&](const Model& src, Model& dst) {
    for (const auto& layer : dst.spec.layers) {
      if (layer.param.empty()) continue;
      for (const char* suffix : {".w", ".b"})
        dst.params.emplace(layer.param + suffix, src.params.at(layer.param + suffix));
    }
  };

  Model edge;
  edge.spec.arch = m.spec.arch + "#edge" + std::to_string(depth);
  edge.spec.num_classes = m.spec.num_classes;
  edge.spec.input_shape = m.spec.input_shape;
  edge.spec.norm_mean = m.spec.norm_mean;
  edge.spec.norm_std = m.spec.norm_std;
  edge.spec.layers.assign(m.spec.layers.begin(), m.spec.layers.begin() + cut + 1);
  for (int k : m.spec.key_layers)
    if (k <= cut) edge.spec.key_layers.push_back(k);
  collect_params(m, edge);
  edge.trained = m.trained;

  Model cloud;
  cloud.spec.arch = m.spec.arch + "#cloud" + std::to_string(depth);
  cloud.spec.num_classes = m.spec.num_classes;
  cloud.spec.input_shape = layer_output_shape(m.spec, cut);
  cloud.spec.layers.assign(m.spec.layers.begin() + cut + 1, m.spec.layers.end());
  for (auto& layer : cloud.spec.layers)
    if (layer.kind == LayerKind::AddSkip) layer.skip_from -= cut + 1;
  for (int k : m.spec.key_layers)
    if (k > cut) cloud.spec.key_layers.push_back(k - cut - 1);
  collect_params(m, cloud);
  cloud.trained = m.trained;

  if (static_cast<int>(edge.spec.layers.size() + cloud.spec.layers.size()) != total)
    throw ShapeError("split_model: layer partition does not cover the model");

  SplitConfig cfg;
  cfg.depth = depth;
  cfg.edge_layers = edge.spec.key_layers;
  return {EdgeNode(std::move(edge), std::move(cfg)), CloudNode(std::move(cloud))};
}

Tensor remote_infer(EdgeNode& edge, CloudNode& cloud, const Tensor& batch,
                    ByteChannel& ch) {
  edge.send(ch, edge.extract(batch));
  return cloud.finish(cloud.receive(ch));
}

Tensor remote_infer(EdgeNode& edge, CloudNode& cloud, const Tensor& batch) {
  QueueChannel ch;
  return remote_infer(edge, cloud, batch, ch);
}

}  // namespace eua
