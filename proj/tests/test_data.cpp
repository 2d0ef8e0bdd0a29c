#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "eua/data.hpp"
#include "eua/serialize.hpp"
#include "eua/tensor.hpp"

using namespace eua;
namespace fs = std::filesystem;

namespace {

std::string scratch(const char* name) {
  const fs::path dir = fs::path("test_data_out");
  fs::create_directories(dir);
  return (dir / name).string();
}

void append_u32be(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>(v & 0xFF));
}

std::string idx_image_bytes(int n, int rows, int cols,
                            const std::vector<unsigned char>& pixels) {
  std::string b;
  append_u32be(b, 0x00000803u);
  append_u32be(b, static_cast<std::uint32_t>(n));
  append_u32be(b, static_cast<std::uint32_t>(rows));
  append_u32be(b, static_cast<std::uint32_t>(cols));
  for (unsigned char p : pixels) b.push_back(static_cast<char>(p));
  return b;
}

std::string idx_label_bytes(const std::vector<unsigned char>& labels) {
  std::string b;
  append_u32be(b, 0x00000801u);
  append_u32be(b, static_cast<std::uint32_t>(labels.size()));
  for (unsigned char l : labels) b.push_back(static_cast<char>(l));
  return b;
}

// Pool whose images encode their own index, so split membership can be
// traced back exactly: sample i is constant i/1000 with label i % classes.
Dataset traceable_pool(int n, int classes) {
  Dataset d;
  d.class_count = classes;
  d.images = Tensor({n, 1, 4, 4});
  d.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    d.labels[static_cast<std::size_t>(i)] = i % classes;
    for (int j = 0; j < 16; ++j)
      d.images[i * 16 + j] = static_cast<float>(i) / 1000.0f;
  }
  return d;
}

int recover_index(const Dataset& d, int i) {
  return static_cast<int>(std::lround(d.images[i * 16] * 1000.0f));
}

std::multiset<int> class_counts_of(const Dataset& d) {
  return {d.labels.begin(), d.labels.end()};
}

}  // namespace

// ---------------------------------------------------------------------------
// IDX loading
// ---------------------------------------------------------------------------

TEST_CASE("idx pair loads with 1/255 scaling and max-label class count") {
  const std::string ip = scratch("ok-images.idx");
  const std::string lp = scratch("ok-labels.idx");
  write_file(ip, idx_image_bytes(3, 2, 2,
                                 {0, 255, 128, 64,    //
                                  1, 2, 3, 4,         //
                                  10, 20, 30, 40}));
  write_file(lp, idx_label_bytes({1, 0, 3}));

  const Dataset d = load_idx(ip, lp);
  REQUIRE(d.size() == 3);
  CHECK(d.images.shape() == Shape{3, 1, 2, 2});
  CHECK(d.images[0] == 0.0f);
  CHECK(d.images[1] == 1.0f);
  CHECK(d.images[2] == 128.0f / 255.0f);
  CHECK(d.labels == std::vector<int>{1, 0, 3});
  CHECK(d.class_count == 4);
}

TEST_CASE("idx errors name the offending file") {
  const std::string ip = scratch("bad-images.idx");
  const std::string lp = scratch("bad-labels.idx");

  SUBCASE("wrong image magic") {
    std::string b = idx_image_bytes(1, 2, 2, {1, 2, 3, 4});
    b[3] = 0x01;  // label magic in the image slot
    write_file(ip, b);
    write_file(lp, idx_label_bytes({0}));
    CHECK_THROWS_WITH_AS(load_idx(ip, lp), doctest::Contains("0x00000803"),
                         FormatError);
  }
  SUBCASE("wrong label magic") {
    write_file(ip, idx_image_bytes(1, 2, 2, {1, 2, 3, 4}));
    std::string b = idx_label_bytes({0});
    b[3] = 0x03;
    write_file(lp, b);
    CHECK_THROWS_WITH_AS(load_idx(ip, lp), doctest::Contains(lp.c_str()),
                         FormatError);
  }
  SUBCASE("truncated image payload") {
    std::string b = idx_image_bytes(2, 2, 2, {1, 2, 3, 4});  // promises 2 images
    write_file(ip, b);
    write_file(lp, idx_label_bytes({0, 1}));
    CHECK_THROWS_WITH_AS(load_idx(ip, lp), doctest::Contains("truncated"),
                         FormatError);
  }
  SUBCASE("count mismatch") {
    write_file(ip, idx_image_bytes(1, 2, 2, {1, 2, 3, 4}));
    write_file(lp, idx_label_bytes({0, 1}));
    CHECK_THROWS_WITH_AS(load_idx(ip, lp), doctest::Contains("mismatch"),
                         FormatError);
  }
  SUBCASE("truncated label payload") {
    write_file(ip, idx_image_bytes(2, 2, 2, {1, 2, 3, 4, 5, 6, 7, 8}));
    std::string b = idx_label_bytes({0, 1});
    write_file(lp, b.substr(0, b.size() - 1));
    CHECK_THROWS_AS(load_idx(ip, lp), FormatError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_idx("no/such.idx", "no/such2.idx"), IoError);
  }
}

// ---------------------------------------------------------------------------
// synthetic corpus
// ---------------------------------------------------------------------------

TEST_CASE("synthetic corpus is deterministic, in range, class-major") {
  const Dataset a = generate_synthetic(4, 3, {1, 16, 16}, 9);
  const Dataset b = generate_synthetic(4, 3, {1, 16, 16}, 9);
  REQUIRE(a.size() == 12);
  CHECK(a.images.shape() == Shape{12, 1, 16, 16});
  CHECK(a.class_count == 4);
  CHECK(a.images == b.images);
  CHECK(a.labels == b.labels);

  for (std::int64_t i = 0; i < a.images.numel(); ++i) {
    CHECK(a.images[i] >= 0.0f);
    CHECK(a.images[i] <= 1.0f);
  }
  // class-major layout: three samples of each class in order
  CHECK(a.labels == std::vector<int>{0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3});

  const Dataset c = generate_synthetic(4, 3, {1, 16, 16}, 10);
  CHECK_FALSE(a.images == c.images);
}

TEST_CASE("synthetic corpus edge cases") {
  const Dataset empty = generate_synthetic(3, 0, {1, 8, 8}, 1);
  CHECK(empty.size() == 0);
  CHECK(empty.class_count == 3);
  CHECK_THROWS_AS(generate_synthetic(1, 5, {1, 8, 8}, 1), ShapeError);
  CHECK_THROWS_AS(generate_synthetic(3, 5, {1, 8}, 1), ShapeError);
}

// ---------------------------------------------------------------------------
// gather / concat
// ---------------------------------------------------------------------------

TEST_CASE("gather subsets by index, preserving order") {
  const Dataset pool = traceable_pool(10, 2);
  const Dataset sub = gather(pool, {7, 2, 2});
  REQUIRE(sub.size() == 3);
  CHECK(recover_index(sub, 0) == 7);
  CHECK(recover_index(sub, 1) == 2);
  CHECK(recover_index(sub, 2) == 2);
  CHECK(sub.labels == std::vector<int>{1, 0, 0});
  CHECK(sub.class_count == 2);
  CHECK(gather(pool, {}).size() == 0);
  CHECK_THROWS_AS(gather(pool, {10}), ShapeError);
  CHECK_THROWS_AS(gather(pool, {-1}), ShapeError);
}

TEST_CASE("gather keeps unlabeled sets unlabeled") {
  Dataset pool = traceable_pool(6, 2);
  pool.labels.clear();
  CHECK(pool.size() == 6);  // falls back to the image count
  const Dataset sub = gather(pool, {1, 4});
  CHECK(sub.size() == 2);
  CHECK(sub.labels.empty());
  CHECK(recover_index(sub, 1) == 4);
}

TEST_CASE("concat appends samples and labels") {
  const Dataset pool = traceable_pool(10, 2);
  const Dataset a = gather(pool, {0, 3});
  const Dataset b = gather(pool, {5});
  const Dataset ab = concat(a, b);
  REQUIRE(ab.size() == 3);
  CHECK(recover_index(ab, 0) == 0);
  CHECK(recover_index(ab, 1) == 3);
  CHECK(recover_index(ab, 2) == 5);
  CHECK(ab.labels == std::vector<int>{0, 1, 1});

  CHECK(concat(Dataset{}, b).size() == 1);
  CHECK(concat(a, Dataset{}).size() == 2);

  Dataset other_shape = traceable_pool(2, 2);
  other_shape.images = Tensor({2, 1, 2, 2});
  CHECK_THROWS_AS(concat(a, other_shape), ShapeError);
  Dataset other_classes = gather(pool, {1});
  other_classes.class_count = 5;
  CHECK_THROWS_AS(concat(a, other_classes), ShapeError);
  Dataset unlabeled = gather(pool, {1});
  unlabeled.labels.clear();
  CHECK_THROWS_AS(concat(a, unlabeled), ShapeError);
}

// ---------------------------------------------------------------------------
// attack splits
// ---------------------------------------------------------------------------

TEST_CASE("attack splits are pure, balanced and disjoint") {
  const Dataset pool = traceable_pool(120, 4);  // 30 per class
  const AttackSplits s = make_attack_splits(pool, /*target=*/1, /*n_t=*/6,
                                            /*n_o=*/10, /*n_opt=*/8,
                                            /*n_test=*/12, /*seed=*/5);

  REQUIRE(s.d_t.size() == 6);
  REQUIRE(s.d_o.size() == 10);
  REQUIRE(s.d_opt.size() == 8);
  REQUIRE(s.test.size() == 12);
  CHECK(s.target_class == 1);

  for (int l : s.d_t.labels) CHECK(l == 1);
  for (int l : s.d_o.labels) CHECK(l != 1);

  // d_o remainder goes round-robin by ascending class: 10 over {0,2,3} = 4,3,3
  CHECK(class_counts_of(s.d_o) == std::multiset<int>{0, 0, 0, 0, 2, 2, 2, 3, 3, 3});
  // d_opt spans all classes evenly: 8 over 4 classes = 2 each
  CHECK(class_counts_of(s.d_opt) ==
        std::multiset<int>{0, 0, 1, 1, 2, 2, 3, 3});
  // test: 12 over 4 = 3 each
  CHECK(class_counts_of(s.test) ==
        std::multiset<int>{0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3});

  std::set<int> seen;
  int total = 0;
  for (const Dataset* d : {&s.d_t, &s.d_o, &s.d_opt, &s.test})
    for (int i = 0; i < d->size(); ++i) {
      seen.insert(recover_index(*d, i));
      ++total;
    }
  CHECK(total == 36);
  CHECK(seen.size() == 36);  // no sample lands in two splits
}

TEST_CASE("attack splits can exclude the target from d_opt") {
  const Dataset pool = traceable_pool(120, 4);
  const AttackSplits s =
      make_attack_splits(pool, 1, 6, 10, 8, 12, 5, /*opt_excludes_target=*/true);
  for (int l : s.d_opt.labels) CHECK(l != 1);
  // 8 over {0,2,3} = 3,3,2 with the remainder on the two lowest classes
  CHECK(class_counts_of(s.d_opt) == std::multiset<int>{0, 0, 0, 2, 2, 2, 3, 3});
}

TEST_CASE("attack splits are seed-deterministic") {
  const Dataset pool = traceable_pool(120, 4);
  const AttackSplits a = make_attack_splits(pool, 1, 6, 10, 8, 12, 5);
  const AttackSplits b = make_attack_splits(pool, 1, 6, 10, 8, 12, 5);
  const AttackSplits c = make_attack_splits(pool, 1, 6, 10, 8, 12, 6);
  CHECK(a.d_t.images == b.d_t.images);
  CHECK(a.d_opt.images == b.d_opt.images);
  CHECK(a.test.images == b.test.images);
  CHECK_FALSE(a.test.images == c.test.images);
}

TEST_CASE("attack splits validate their inputs") {
  const Dataset pool = traceable_pool(120, 4);
  // class 1 holds 30 samples; asking d_t for 31 must fail naming the split
  CHECK_THROWS_WITH_AS(make_attack_splits(pool, 1, 31, 10, 8, 12, 5),
                       doctest::Contains("d_t"), ShapeError);
  // downstream splits notice earlier consumption: d_t and d_opt leave class 1
  // with 8 samples, so a 40-sample test split (10 per class) cannot be built
  CHECK_THROWS_WITH_AS(make_attack_splits(pool, 1, 20, 10, 8, 40, 5),
                       doctest::Contains("test"), ShapeError);
  CHECK_THROWS_AS(make_attack_splits(pool, -1, 6, 10, 8, 12, 5), ShapeError);
  CHECK_THROWS_AS(make_attack_splits(pool, 4, 6, 10, 8, 12, 5), ShapeError);

  Dataset unlabeled = pool;
  unlabeled.labels.clear();
  CHECK_THROWS_AS(make_attack_splits(unlabeled, 1, 6, 10, 8, 12, 5), ShapeError);

  Dataset one_class = pool;
  one_class.class_count = 1;
  CHECK_THROWS_AS(make_attack_splits(one_class, 0, 6, 10, 8, 12, 5), ShapeError);
}

// ---------------------------------------------------------------------------
// dataset files
// ---------------------------------------------------------------------------

TEST_CASE("dataset container roundtrip is exact") {
  const Dataset d = generate_synthetic(3, 4, {1, 16, 16}, 2);
  const std::string path = scratch("corpus.ckpt");
  save_dataset(path, d);
  const Dataset back = load_dataset(path);
  CHECK(back.images == d.images);
  CHECK(back.labels == d.labels);
  CHECK(back.class_count == d.class_count);

  // empty datasets survive too
  save_dataset(scratch("empty.ckpt"), Dataset{});
  CHECK(load_dataset(scratch("empty.ckpt")).size() == 0);

  Dataset unlabeled = d;
  unlabeled.labels.clear();
  CHECK_THROWS_AS(save_dataset(scratch("x.ckpt"), unlabeled), ShapeError);
}

TEST_CASE("dataset loader rejects inconsistent containers") {
  SUBCASE("count disagrees with tensors") {
    Container c;
    c.kind = "dataset";
    c.meta["class_count"] = 2;
    c.meta["count"] = 2;
    c.add("images", Tensor({1, 1, 2, 2}));
    c.add("labels", Tensor({1}, {0.0f}));
    const std::string path = scratch("badcount.ckpt");
    save_container(path, c);
    CHECK_THROWS_AS(load_dataset(path), FormatError);
  }
  SUBCASE("label out of range") {
    Container c;
    c.kind = "dataset";
    c.meta["class_count"] = 2;
    c.meta["count"] = 1;
    c.add("images", Tensor({1, 1, 2, 2}));
    c.add("labels", Tensor({1}, {9.0f}));
    const std::string path = scratch("badlabel.ckpt");
    save_container(path, c);
    CHECK_THROWS_AS(load_dataset(path), FormatError);
  }
  SUBCASE("wrong kind") {
    Container c;
    c.kind = "model";
    const std::string path = scratch("wrongkind.ckpt");
    save_container(path, c);
    CHECK_THROWS_AS(load_dataset(path), FormatError);
  }
}

TEST_CASE("sample_image copies one sample") {
  const Dataset pool = traceable_pool(5, 2);
  const Tensor img = sample_image(pool, 3);
  CHECK(img.shape() == Shape{1, 4, 4});
  CHECK(img[0] == 3.0f / 1000.0f);
  CHECK_THROWS_AS(sample_image(pool, 5), ShapeError);
}
