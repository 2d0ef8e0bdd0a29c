#include "eua/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>

#include "eua/serialize.hpp"

namespace eua {

Shape Dataset::sample_shape() const {
  if (images.rank() != 4)
    throw ShapeError("dataset: empty or malformed image tensor");
  return {images.dim(1), images.dim(2), images.dim(3)};
}

namespace {

std::uint32_t read_u32be(const unsigned char* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) |
         (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

std::string hex32(std::uint32_t v) {
  char buf[11];
  std::snprintf(buf, sizeof(buf), "0x%08x", v);
  return buf;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const std::string img = read_file(images_path);
  const std::string lab = read_file(labels_path);
  const auto* ip = reinterpret_cast<const unsigned char*>(img.data());
  const auto* lp = reinterpret_cast<const unsigned char*>(lab.data());

  if (img.size() < 16)
    throw FormatError(images_path + ": truncated IDX image header");
  const std::uint32_t imagic = read_u32be(ip);
  if (imagic != 0x00000803u)
    throw FormatError(images_path + ": bad IDX magic " + hex32(imagic) +
                      ", expected 0x00000803");
  const std::uint32_t n = read_u32be(ip + 4);
  const std::uint32_t rows = read_u32be(ip + 8);
  const std::uint32_t cols = read_u32be(ip + 12);
  const std::size_t need = 16 + static_cast<std::size_t>(n) * rows * cols;
  if (img.size() < need)
    throw FormatError(images_path + ": truncated IDX payload (have " +
                      std::to_string(img.size()) + " bytes, need " +
                      std::to_string(need) + ")");

  if (lab.size() < 8)
    throw FormatError(labels_path + ": truncated IDX label header");
  const std::uint32_t lmagic = read_u32be(lp);
  if (lmagic != 0x00000801u)
    throw FormatError(labels_path + ": bad IDX magic " + hex32(lmagic) +
                      ", expected 0x00000801");
  const std::uint32_t ln = read_u32be(lp + 4);
  if (ln != n)
    throw FormatError("IDX count mismatch: " + std::to_string(n) + " images vs " +
                      std::to_string(ln) + " labels");
  if (lab.size() < 8 + static_cast<std::size_t>(ln))
    throw FormatError(labels_path + ": truncated IDX label payload");

  Dataset d;
  if (n == 0) return d;
  std::vector<float> px(static_cast<std::size_t>(n) * rows * cols);
  for (std::size_t i = 0; i < px.size(); ++i)
    px[i] = static_cast<float>(ip[16 + i]) / 255.0f;
  d.images = Tensor({static_cast<int>(n), 1, static_cast<int>(rows),
                     static_cast<int>(cols)},
                    std::move(px));
  d.labels.resize(n);
  int max_label = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    d.labels[i] = lp[8 + i];
    max_label = std::max(max_label, d.labels[i]);
  }
  d.class_count = max_label + 1;
  return d;
}

Dataset generate_synthetic(int classes, int per_class, const Shape& sample_shape,
                           std::uint64_t seed) {
  if (classes < 2)
    throw ShapeError("generate_synthetic: need at least 2 classes, got " +
                     std::to_string(classes));
  if (sample_shape.size() != 3)
    throw ShapeError("generate_synthetic: sample shape must be (C,H,W), got " +
                     shape_str(sample_shape));
  Dataset d;
  d.class_count = classes;
  if (per_class == 0) {
    std::fprintf(stderr, "generate_synthetic: per_class=0, returning empty dataset\n");
    return d;
  }
  const int C = sample_shape[0], H = sample_shape[1], W = sample_shape[2];
  const int n = classes * per_class;
  const double pi = 3.14159265358979323846;
  std::vector<float> px(static_cast<std::size_t>(n) * C * H * W);
  d.labels.resize(static_cast<std::size_t>(n));

  for (int c = 0; c < classes; ++c) {
    const double theta = pi * c / classes;
    const double freq = 2.0 + (c % 5);
    const double ct = std::cos(theta), st = std::sin(theta);
    // per-class brightness: a small DC offset graded across a rotated class
    // order, the one cue that survives spatial averaging at every depth of
    // the network. The rotation keeps brightness order and label order
    // distinct, so no class sits at a brightness extreme of the label range
    // and a flat brightness shift cannot imitate any one class.
    const int rank = (c + 1) % classes;
    const double dc = 0.06 * (rank / (classes - 1.0) - 0.5);
    // blob centers rotate around a ring so position also carries the label
    const double ring = 2.0 * pi * c / classes;
    const double bx0 = 0.5 * W + 0.30 * W * std::cos(ring);
    const double by0 = 0.5 * H + 0.30 * H * std::sin(ring);
    for (int k = 0; k < per_class; ++k) {
      const int idx = c * per_class + k;
      Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(idx)));
      d.labels[static_cast<std::size_t>(idx)] = c;
      const double phase = rng.uniform() * 2.0 * pi;
      const double bx = bx0 + rng.normal(0.0f, 1.2f);
      const double by = by0 + rng.normal(0.0f, 1.2f);
      float* base = px.data() + static_cast<std::size_t>(idx) * C * H * W;
      // Class-signal amplitudes are deliberately small next to the noise:
      // matched filtering still separates the classes by a wide statistical
      // margin, but the margin in raw pixel space stays within reach of a
      // low-budget additive perturbation, as with natural images. Cranking
      // these up makes every classifier trivially robust and every attack
      // futile.
      for (int ch = 0; ch < C; ++ch) {
        const double chphase = phase + 0.7 * ch;
        float* plane = base + static_cast<std::size_t>(ch) * H * W;
        for (int y = 0; y < H; ++y) {
          for (int x = 0; x < W; ++x) {
            const double u = (x * ct + y * st) / W;
            double v = 0.5 + dc + 0.08 * std::sin(2.0 * pi * freq * u + chphase);
            const double dx = x - bx, dy = y - by;
            v += 0.12 * std::exp(-(dx * dx + dy * dy) / (2.0 * 2.5 * 2.5));
            v += rng.normal(0.0f, 0.08f);
            plane[y * W + x] =
                static_cast<float>(std::min(1.0, std::max(0.0, v)));
          }
        }
      }
    }
  }
  d.images = Tensor({n, C, H, W}, std::move(px));
  return d;
}

Dataset gather(const Dataset& d, const std::vector<int>& indices) {
  Dataset out;
  out.class_count = d.class_count;
  if (indices.empty()) return out;
  const Shape ss = d.sample_shape();
  const std::int64_t stride = shape_numel(ss);
  std::vector<float> px(static_cast<std::size_t>(stride) * indices.size());
  if (!d.labels.empty()) out.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int src = indices[i];
    if (src < 0 || src >= d.size())
      throw ShapeError("gather: index " + std::to_string(src) + " out of range [0," +
                       std::to_string(d.size()) + ")");
    std::memcpy(px.data() + i * static_cast<std::size_t>(stride),
                d.images.data() + src * stride,
                static_cast<std::size_t>(stride) * sizeof(float));
    if (!d.labels.empty()) out.labels[i] = d.labels[static_cast<std::size_t>(src)];
  }
  Shape full = {static_cast<int>(indices.size()), ss[0], ss[1], ss[2]};
  out.images = Tensor(std::move(full), std::move(px));
  return out;
}

Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  if (a.sample_shape() != b.sample_shape())
    throw ShapeError("concat: sample shapes differ, " + shape_str(a.sample_shape()) +
                     " vs " + shape_str(b.sample_shape()));
  if (a.class_count != b.class_count)
    throw ShapeError("concat: class counts differ");
  if (a.labels.empty() != b.labels.empty())
    throw ShapeError("concat: cannot mix labeled and unlabeled sets");
  const Shape ss = a.sample_shape();
  Dataset out;
  out.class_count = a.class_count;
  out.images = Tensor({a.size() + b.size(), ss[0], ss[1], ss[2]});
  std::memcpy(out.images.data(), a.images.data(),
              static_cast<std::size_t>(a.images.numel()) * sizeof(float));
  std::memcpy(out.images.data() + a.images.numel(), b.images.data(),
              static_cast<std::size_t>(b.images.numel()) * sizeof(float));
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

Tensor sample_image(const Dataset& d, int i) {
  if (i < 0 || i >= d.size())
    throw ShapeError("sample_image: index " + std::to_string(i) + " out of range");
  const Shape ss = d.sample_shape();
  const std::int64_t stride = shape_numel(ss);
  std::vector<float> px(d.images.data() + i * stride,
                        d.images.data() + (i + 1) * stride);
  return Tensor(ss, std::move(px));
}

namespace {

// Takes `count` samples balanced over `classes`, consuming from per-class
// pools at `cursor`. Remainders go round-robin by ascending class index.
std::vector<int> take_balanced(const std::vector<std::vector<int>>& pools,
                               std::vector<std::size_t>& cursor,
                               const std::vector<int>& classes, int count,
                               const char* split_name) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(count));
  const int k = static_cast<int>(classes.size());
  const int base = count / k;
  const int rem = count % k;
  for (int j = 0; j < k; ++j) {
    const int c = classes[static_cast<std::size_t>(j)];
    const int want = base + (j < rem ? 1 : 0);
    const auto& pool = pools[static_cast<std::size_t>(c)];
    std::size_t& cur = cursor[static_cast<std::size_t>(c)];
    if (cur + static_cast<std::size_t>(want) > pool.size())
      throw ShapeError(std::string("make_attack_splits: ") + split_name +
                       " needs " + std::to_string(want) + " samples of class " +
                       std::to_string(c) + ", only " +
                       std::to_string(pool.size() - cur) + " left");
    for (int t = 0; t < want; ++t) out.push_back(pool[cur++]);
  }
  return out;
}

}  // namespace

AttackSplits make_attack_splits(const Dataset& d, int target_class, int n_t, int n_o,
                                int n_opt, int n_test, std::uint64_t seed,
                                bool opt_excludes_target) {
  if (d.class_count < 2)
    throw ShapeError("make_attack_splits: need at least 2 classes");
  if (static_cast<int>(d.labels.size()) != d.size())
    throw ShapeError("make_attack_splits: pool must be labeled");
  if (target_class < 0 || target_class >= d.class_count)
    throw ShapeError("make_attack_splits: target class " +
                     std::to_string(target_class) + " out of range [0," +
                     std::to_string(d.class_count) + ")");

  std::vector<std::vector<int>> pools(static_cast<std::size_t>(d.class_count));
  for (int i = 0; i < d.size(); ++i)
    pools[static_cast<std::size_t>(d.labels[static_cast<std::size_t>(i)])].push_back(i);
  for (int c = 0; c < d.class_count; ++c) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(c)));
    rng.shuffle(pools[static_cast<std::size_t>(c)]);
  }
  std::vector<std::size_t> cursor(static_cast<std::size_t>(d.class_count), 0);

  std::vector<int> all_classes, other_classes;
  for (int c = 0; c < d.class_count; ++c) {
    all_classes.push_back(c);
    if (c != target_class) other_classes.push_back(c);
  }

  AttackSplits s;
  s.target_class = target_class;
  s.seed = seed;

  std::vector<int> t_idx =
      take_balanced(pools, cursor, {target_class}, n_t, "d_t");
  std::vector<int> o_idx = take_balanced(pools, cursor, other_classes, n_o, "d_o");
  std::vector<int> opt_idx = take_balanced(
      pools, cursor, opt_excludes_target ? other_classes : all_classes, n_opt,
      "d_opt");
  std::vector<int> test_idx =
      take_balanced(pools, cursor, all_classes, n_test, "test");

  s.d_t = gather(d, t_idx);
  s.d_o = gather(d, o_idx);
  s.d_opt = gather(d, opt_idx);
  s.test = gather(d, test_idx);
  return s;
}

void save_dataset(const std::string& path, const Dataset& d) {
  Container c;
  c.kind = "dataset";
  c.meta["class_count"] = d.class_count;
  c.meta["count"] = d.size();
  if (d.size() > 0) {
    if (static_cast<int>(d.labels.size()) != d.size())
      throw ShapeError("save_dataset: unlabeled sets cannot be saved");
    c.add("images", d.images);
    std::vector<float> lf(d.labels.begin(), d.labels.end());
    c.add("labels", Tensor({d.size()}, std::move(lf)));
  }
  save_container(path, c);
}

Dataset load_dataset(const std::string& path) {
  Container c = load_container(path, "dataset");
  Dataset d;
  d.class_count = c.meta.at("class_count").get<int>();
  const int n = c.meta.at("count").get<int>();
  if (n == 0) return d;
  d.images = c.tensor("images");
  const Tensor& lt = c.tensor("labels");
  if (lt.numel() != n || d.images.rank() != 4 || d.images.dim(0) != n)
    throw FormatError(path + ": dataset tensor counts disagree with header");
  d.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    d.labels[static_cast<std::size_t>(i)] = static_cast<int>(lt[i]);
    if (d.labels[static_cast<std::size_t>(i)] < 0 ||
        d.labels[static_cast<std::size_t>(i)] >= d.class_count)
      throw FormatError(path + ": label out of range");
  }
  return d;
}

}  // namespace eua
