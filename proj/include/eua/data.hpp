#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eua/tensor.hpp"

namespace eua {

// Image set. images is (N,C,H,W) with pixels in [0,1]; an empty set is a
// default-constructed tensor plus an empty label list. labels either matches
// the image count or is empty, the latter marking an unlabeled set (the
// attacker's optimization pool carries no ground truth).
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  int class_count = 0;

  int size() const {
    if (!labels.empty()) return static_cast<int>(labels.size());
    return images.rank() == 4 ? static_cast<int>(images.dim(0)) : 0;
  }
  // (C,H,W) of one sample; throws on an empty set.
  Shape sample_shape() const;
};

// Classic IDX image/label pair (big-endian dims), pixels scaled by 1/255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Self-contained corpus: each class is an oriented grating at a
// class-specific frequency plus a bright blob whose position rotates with the
// class, with per-sample phase/position jitter and Gaussian pixel noise.
// Linear models do poorly on it; a small CNN separates it cleanly.
Dataset generate_synthetic(int classes, int per_class, const Shape& sample_shape,
                           std::uint64_t seed);

// Subset by sample index, preserving order. Indices must be in range.
Dataset gather(const Dataset& d, const std::vector<int>& indices);

// a followed by b; shapes and class counts must agree.
Dataset concat(const Dataset& a, const Dataset& b);

// Copy of one (C,H,W) image.
Tensor sample_image(const Dataset& d, int i);

// The attacker's working sets: d_t (target class only), d_o (everything but
// the target), d_opt (perturbation optimization set), and the held-out test
// set. All four are drawn from disjoint sample indices.
struct AttackSplits {
  Dataset d_t;
  Dataset d_o;
  Dataset d_opt;
  Dataset test;
  int target_class = 0;
  std::uint64_t seed = 0;
};

AttackSplits make_attack_splits(const Dataset& d, int target_class, int n_t, int n_o,
                                int n_opt, int n_test, std::uint64_t seed,
                                bool opt_excludes_target = false);

// Container round-trip so a generated corpus can be reused as a fixture.
void save_dataset(const std::string& path, const Dataset& d);
Dataset load_dataset(const std::string& path);

}  // namespace eua
