#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "mexit/curriculum.hpp"
#include "mexit/dataset.hpp"
#include "mexit/error.hpp"
#include "mexit/training.hpp"

using namespace mexit;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("mexit_test_data_" + name); }

/// CIFAR record: label byte(s), then pixel (c, y, x) at 1 + c*1024 + y*32 + x.
std::vector<unsigned char> cifar_record(std::size_t label_bytes, std::vector<unsigned char> labels,
                                        unsigned char (*pixel)(std::size_t, std::size_t, std::size_t)) {
  std::vector<unsigned char> rec(labels.begin(), labels.end());
  rec.resize(label_bytes + 3072);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) rec[label_bytes + c * 1024 + y * 32 + x] = pixel(c, y, x);
  return rec;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("cifar10 record decodes label and channel-major pixels") {
  auto rec = cifar_record(1, {7}, [](std::size_t c, std::size_t y, std::size_t x) {
    return static_cast<unsigned char>((c * 50 + y * 3 + x) % 256);
  });
  const auto path = temp_path("one.bin");
  write_bytes(path, rec);
  Dataset d = load_cifar_binary({path}, CifarVariant::cifar10);
  REQUIRE(d.size() == 1);
  CHECK(d.labels[0] == 7);
  CHECK(d.classes == 10);
  CHECK(d.sample_shape() == Shape{3, 32, 32});
  const auto s = d.inputs.sample(0);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x)
        CHECK(s[c * 1024 + y * 32 + x] == static_cast<double>(rec[1 + c * 1024 + y * 32 + x]) / 255.0);
  fs::remove(path);
}

TEST_CASE("all-255 record scales to 1.0") {
  auto rec = cifar_record(1, {3}, [](std::size_t, std::size_t, std::size_t) -> unsigned char { return 255; });
  const auto path = temp_path("white.bin");
  write_bytes(path, rec);
  Dataset d = load_cifar_binary({path}, CifarVariant::cifar10);
  for (double v : d.inputs.data()) CHECK(v == 1.0);
  fs::remove(path);
}

TEST_CASE("cifar100 uses the fine label") {
  auto rec = cifar_record(2, {4, 83}, [](std::size_t, std::size_t, std::size_t) -> unsigned char { return 0; });
  const auto path = temp_path("c100.bin");
  write_bytes(path, rec);
  Dataset d = load_cifar_binary({path}, CifarVariant::cifar100);
  CHECK(d.labels[0] == 83);
  CHECK(d.classes == 100);
  fs::remove(path);
}

TEST_CASE("many records, several files and max_records") {
  std::vector<unsigned char> bytes;
  for (int i = 0; i < 30; ++i) {
    auto r = cifar_record(1, {static_cast<unsigned char>(i % 10)},
                          [](std::size_t, std::size_t, std::size_t) -> unsigned char { return 1; });
    bytes.insert(bytes.end(), r.begin(), r.end());
  }
  const auto a = temp_path("a.bin"), b = temp_path("b.bin");
  write_bytes(a, bytes);
  write_bytes(b, bytes);
  CHECK(load_cifar_binary({a, b}, CifarVariant::cifar10).size() == 60);
  Dataset d = load_cifar_binary({a, b}, CifarVariant::cifar10, 45);
  CHECK(d.size() == 45);
  CHECK(d.labels[44] == 44 % 30 % 10);
  fs::remove(a);
  fs::remove(b);
}

TEST_CASE("truncated cifar file reports the byte offset") {
  auto rec = cifar_record(1, {1}, [](std::size_t, std::size_t, std::size_t) -> unsigned char { return 9; });
  rec.resize(rec.size() + 100);
  const auto path = temp_path("trunc.bin");
  write_bytes(path, rec);
  try {
    load_cifar_binary({path}, CifarVariant::cifar10);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("3073") != std::string::npos);
  }
  std::vector<unsigned char> bad{200};
  bad.resize(3073, 0);
  write_bytes(path, bad);
  CHECK_THROWS_AS(load_cifar_binary({path}, CifarVariant::cifar10), FormatError);
  CHECK_THROWS_AS(load_cifar_binary({temp_path("missing.bin")}, CifarVariant::cifar10), IoError);
  fs::remove(path);
}

TEST_CASE("synthetic data is deterministic and labelled in range") {
  SyntheticSpec spec;
  spec.samples = 300;
  spec.hard_fraction = 0.2;
  spec.hard_label_flip = 0.5;
  spec.seed = 4;
  Dataset a = generate_synthetic(spec), b = generate_synthetic(spec);
  CHECK(a.inputs == b.inputs);
  CHECK(a.labels == b.labels);
  CHECK(a.hard == b.hard);
  CHECK(std::count(a.hard.begin(), a.hard.end(), 1) == 60);
  for (auto l : a.labels) CHECK(l < 10);
  spec.seed = 5;
  CHECK_FALSE(generate_synthetic(spec).inputs == a.inputs);
}

TEST_CASE("zero-noise clusters are separated by a linear classifier") {
  SyntheticSpec spec;
  spec.samples = 200;
  spec.noise = 0.0;
  spec.sample_shape = {16};
  spec.seed = 9;
  Dataset d = generate_synthetic(spec);
  // Nearest-center rule written as a linear map: argmax_k (c_k . x - |c_k|^2 / 2).
  std::vector<std::vector<double>> centers(10);
  for (std::size_t n = 0; n < d.size(); ++n) {
    auto x = d.inputs.sample(n);
    centers[d.labels[n]].assign(x.begin(), x.end());
  }
  for (std::size_t n = 0; n < d.size(); ++n) {
    auto x = d.inputs.sample(n);
    std::size_t best = 0;
    double best_score = -1e300;
    for (std::size_t k = 0; k < 10; ++k) {
      double s = 0.0, norm = 0.0;
      for (std::size_t j = 0; j < 16; ++j) {
        s += centers[k][j] * x[j];
        norm += centers[k][j] * centers[k][j];
      }
      s -= norm / 2;
      if (s > best_score) best_score = s, best = k;
    }
    CHECK(best == d.labels[n]);
  }
}

TEST_CASE("hard samples rank as harder under a trained teacher") {
  SyntheticSpec spec;
  spec.samples = 1000;
  spec.hard_fraction = 0.2;
  spec.hard_noise_multiplier = 3.0;
  spec.sample_shape = {16};
  spec.center_scale = 1.0;
  spec.seed = 21;
  Dataset d = generate_synthetic(spec);
  Network teacher = make_network("t", {16}, {LayerSpec::dense(32), LayerSpec::relu(), LayerSpec::dense(10),
                                             LayerSpec::softmax()}, 3);
  auto stream = ScheduleStream::vanilla(d.size(), 32, 15, 5);
  FitOptions opts;
  opts.optimizer.kind = OptimizerKind::adam;
  opts.optimizer.learning_rate = 1e-2;
  opts.epochs = 15;
  fit(teacher, [&](std::span<const std::size_t> r) { return gather_rows(d.inputs, r); }, d.labels, stream, opts);
  const DifficultyOrder order = score_with_teacher(teacher, d);
  std::vector<std::size_t> rank(d.size());
  for (std::size_t r = 0; r < d.size(); ++r) rank[order.permutation[r]] = r;
  double hard = 0, easy = 0;
  std::size_t nh = 0, ne = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.hard[i]) hard += static_cast<double>(rank[i]), ++nh;
    else easy += static_cast<double>(rank[i]), ++ne;
  }
  CHECK(hard / static_cast<double>(nh) > easy / static_cast<double>(ne));
}

TEST_CASE("dataset validation") {
  Dataset d;
  d.inputs = Tensor({2, 3});
  d.labels = {0, 1};
  d.classes = 2;
  CHECK_NOTHROW(d.validate());
  d.labels = {0, 2};
  CHECK_THROWS_AS(d.validate(), InvalidArgument);
  d.labels = {0};
  CHECK_THROWS_AS(d.validate(), InvalidArgument);
}

TEST_CASE("text round trip") {
  SyntheticSpec spec;
  spec.samples = 50;
  spec.sample_shape = {2, 3};
  spec.seed = 8;
  Dataset d = generate_synthetic(spec);
  const auto path = temp_path("round.txt");
  write_text_dataset(path, d);
  Dataset back = read_text_dataset(path);
  CHECK(back.labels == d.labels);
  CHECK(back.classes == d.classes);
  CHECK(back.sample_shape() == d.sample_shape());
  for (std::size_t i = 0; i < d.inputs.size(); ++i) CHECK(std::abs(back.inputs[i] - d.inputs[i]) <= 1e-12);
  std::ofstream(path) << "2,3,2\n1,2,0\n1,2\n";
  CHECK_THROWS_AS(read_text_dataset(path), FormatError);
  fs::remove(path);
}

TEST_CASE("split sizes 60/10/10/20") {
  SplitSpec spec{0.6, 0.1, 0.1, 0.2, 3};
  auto idx = split_indices(100, spec);
  CHECK(idx.train.size() == 60);
  CHECK(idx.validation.size() == 10);
  CHECK(idx.test.size() == 10);
  CHECK(idx.hyper.size() == 20);
  auto again = split_indices(100, spec);
  CHECK(again.train == idx.train);
  CHECK(again.hyper == idx.hyper);
}

TEST_CASE("splits are disjoint and cover the data for random fractions") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    double w[4];
    double total = 0;
    for (double& x : w) total += (x = rng.uniform(0.01, 1.0));
    SplitSpec spec{w[0] / total, w[1] / total, w[2] / total, w[3] / total, rng.next_u64()};
    const std::size_t n = 1 + rng.index(500);
    auto idx = split_indices(n, spec);
    std::vector<std::size_t> all;
    for (auto* part : {&idx.train, &idx.validation, &idx.test, &idx.hyper}) all.insert(all.end(), part->begin(), part->end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expect(n);
    std::iota(expect.begin(), expect.end(), std::size_t{0});
    REQUIRE(all == expect);
    CHECK(idx.validation.size() == static_cast<std::size_t>(spec.validation * static_cast<double>(n) + 1e-9));
  }
}

TEST_CASE("invalid split specs are rejected") {
  CHECK_THROWS_AS((SplitSpec{0.5, 0.5, 0.5, 0.0, 0}.validate()), InvalidArgument);
  CHECK_THROWS_AS((SplitSpec{-0.1, 0.5, 0.5, 0.1, 0}.validate()), InvalidArgument);
}
