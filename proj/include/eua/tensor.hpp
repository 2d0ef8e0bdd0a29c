#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace eua {

// Shape/op mismatch (bad dims, incompatible operands).
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN/Inf encountered where only finite values are legal.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed file or wire payload.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem failure (missing file, unwritable path, short read).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tape misuse (backward twice, empty trace, bad node id).
struct GraphError : std::logic_error {
  using std::logic_error::logic_error;
};

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(s[i]);
  }
  return out.empty() ? "scalar" : out;
}

// Dense row-major float32 array. Value semantics; ops never mutate inputs.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(static_cast<std::size_t>(shape_numel(shape_)), 0.0f);
  }

  Tensor(Shape shape, std::vector<float> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_))
      throw ShapeError("tensor: data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, float v) {
    Tensor t(std::move(shape));
    for (float& x : t.data_) x = v;
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& vec() { return data_; }
  const std::vector<float>& vec() const { return data_; }

  float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (float v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  // Elementwise max |x_i|.
  float max_abs() const {
    float m = 0.0f;
    for (float v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  double l2_norm() const {
    double s = 0.0;
    for (float v : data_) s += static_cast<double>(v) * v;
    return std::sqrt(s);
  }

  Tensor reshaped(Shape new_shape) const {
    if (shape_numel(new_shape) != numel())
      throw ShapeError("reshape: cannot view " + shape_str(shape_) + " as " +
                       shape_str(new_shape));
    return Tensor(std::move(new_shape), data_);
  }

  bool operator==(const Tensor& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

 private:
  void validate_shape() const {
    for (int d : shape_)
      if (d <= 0)
        throw ShapeError("tensor: non-positive dimension in shape " + shape_str(shape_));
  }

  Shape shape_;
  std::vector<float> data_;
};

inline void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite())
    throw NumericError(std::string(op) + ": non-finite output (shape " +
                       shape_str(t.shape()) + ")");
}

// Seeded RNG with pinned algorithms so sequences do not depend on the
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // splitmix warmup so nearby seeds diverge immediately
    next_u64();
  }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // [0,1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  float uniform_float(float lo, float hi) {
    return lo + static_cast<float>(uniform()) * (hi - lo);
  }

  // [0,n)
  int uniform_int(int n) {
    return static_cast<int>(uniform() * static_cast<double>(n));
  }

  float normal(float mean, float sd) {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sd * static_cast<float>(r * std::cos(6.283185307179586 * u2));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i)
      std::swap(v[static_cast<std::size_t>(i)],
                v[static_cast<std::size_t>(uniform_int(i + 1))]);
  }

  // Independent sub-seed for a named stream.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    Rng r(seed ^ (0xD6E8FEB86659FD93ull * (stream + 1)));
    return r.next_u64();
  }

 private:
  std::uint64_t state_;
};

}  // namespace eua
