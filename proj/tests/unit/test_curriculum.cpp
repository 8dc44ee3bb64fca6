#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "mexit/curriculum.hpp"
#include "mexit/error.hpp"
#include "mexit/pacing.hpp"

using namespace mexit;

namespace {

std::vector<std::size_t> identity(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

TEST_CASE("fixed exponential pacing") {
  PacingFunction f(PacingConfig::fixed_exponential(0.04, 1.9, 300));
  CHECK(f(0) == doctest::Approx(0.04).epsilon(1e-15));
  CHECK(f(299) == f(0));
  CHECK(f(300) == doctest::Approx(0.076).epsilon(1e-14));
  CHECK(f(900) == doctest::Approx(0.27436).epsilon(1e-14));
  CHECK(f(100000) == 1.0);
  CHECK(f.label() == "FEP(300)");
}

TEST_CASE("single step pacing") {
  PacingFunction f(PacingConfig::single_step(0.30, 300));
  CHECK(f(0) == 0.30);
  CHECK(f(299) == 0.30);
  CHECK(f(300) == 1.0);
  CHECK(f.saturation() == 300u);
  CHECK(f.label() == "SSP(300)");
}

TEST_CASE("continuous pacing functions") {
  CHECK(PacingFunction(PacingConfig::continuous(PacingKind::linear, 0.2, 100))(50) == doctest::Approx(0.6));
  CHECK(PacingFunction(PacingConfig::continuous(PacingKind::root, 0.2, 100))(50) ==
        doctest::Approx(std::sqrt(0.52)).epsilon(1e-14));
  CHECK(PacingFunction(PacingConfig::continuous(PacingKind::geometric, 0.25, 2))(1) ==
        doctest::Approx(0.5).epsilon(1e-14));
  // p = 2 root_p is the plain root.
  CHECK(PacingFunction(PacingConfig::continuous(PacingKind::root_p, 0.2, 100, 2.0))(50) ==
        doctest::Approx(std::sqrt(0.52)).epsilon(1e-14));
  // p-th root of (l0^p + (1 - l0^p) t / T)
  const double l0 = 0.3, p = 3.0;
  CHECK(PacingFunction(PacingConfig::continuous(PacingKind::root_p, l0, 10, p))(4) ==
        doctest::Approx(std::cbrt(0.027 + 0.973 * 0.4)).epsilon(1e-14));
  for (auto k : {PacingKind::linear, PacingKind::root, PacingKind::root_p, PacingKind::geometric}) {
    PacingFunction f(PacingConfig::continuous(k, 0.1, 37));
    CHECK(f(37) == 1.0);
    CHECK(f(1000) == 1.0);
  }
}

TEST_CASE("bucketed pacing") {
  PacingFunction bs(PacingConfig::bucketed(PacingKind::baby_step, 5, 10));
  CHECK(bs(0) == doctest::Approx(0.2));
  CHECK(bs(10) == doctest::Approx(0.4));
  CHECK(bs(40) == 1.0);
  CHECK(bs(400) == 1.0);
  PacingFunction op(PacingConfig::bucketed(PacingKind::one_pass, 5, 10));
  CHECK_FALSE(op.saturation().has_value());
  CHECK(active_range(op, 10, 100, 8) == IndexRange{20, 40});
  CHECK(active_range(op, 0, 100, 8) == IndexRange{0, 20});
  CHECK(active_range(op, 49, 100, 8) == IndexRange{80, 100});
}

TEST_CASE("invalid pacing configs fail at construction") {
  CHECK_THROWS_AS(PacingFunction(PacingConfig::fixed_exponential(0.0, 1.9, 300)), InvalidArgument);
  CHECK_THROWS_AS(PacingFunction(PacingConfig::fixed_exponential(0.04, 1.0, 300)), InvalidArgument);
  CHECK_THROWS_AS(PacingFunction(PacingConfig::fixed_exponential(0.04, 1.9, 0)), InvalidArgument);
  CHECK_THROWS_AS(PacingFunction(PacingConfig::single_step(1.5, 300)), InvalidArgument);
  CHECK_THROWS_AS(PacingFunction(PacingConfig::continuous(PacingKind::linear, 0.2, 0.5)), InvalidArgument);
  CHECK_THROWS_AS(PacingFunction(PacingConfig::bucketed(PacingKind::baby_step, 0, 10)), InvalidArgument);
}

TEST_CASE("pacing kind names") {
  for (auto k : {PacingKind::linear, PacingKind::root, PacingKind::root_p, PacingKind::geometric,
                 PacingKind::fixed_exponential, PacingKind::single_step, PacingKind::baby_step, PacingKind::one_pass}) {
    CHECK(pacing_kind_from_string(to_string(k)) == k);
  }
  CHECK(pacing_kind_from_string("fep") == PacingKind::fixed_exponential);
  CHECK(pacing_kind_from_string("ssp") == PacingKind::single_step);
  CHECK_THROWS_AS(pacing_kind_from_string("cosine"), InvalidArgument);
}

TEST_CASE("active range for prefix kinds") {
  PacingFunction one(PacingConfig::single_step(1.0, 5));
  CHECK(active_range(one, 0, 10, 4) == IndexRange{0, 10});
  PacingFunction half(PacingConfig::single_step(0.5, 1000));
  CHECK(active_range(half, 0, 100, 50) == IndexRange{0, 50});
  CHECK(active_range(half, 0, 100, 8) == IndexRange{0, 50});
  // Batch-size floor.
  PacingFunction tiny(PacingConfig::fixed_exponential(0.04, 1.9, 100));
  CHECK(active_range(tiny, 0, 100, 32) == IndexRange{0, 32});
  CHECK(active_range(tiny, 0, 10, 32) == IndexRange{0, 10});
  CHECK(active_range(tiny, 0, 1000, 32) == IndexRange{0, 40});
}

TEST_CASE("pacing curve dump") {
  std::ostringstream out;
  write_pacing_curve(out, PacingFunction(PacingConfig::single_step(0.3, 2)), 3);
  CHECK(out.str() == "t,lambda\n0,0.29999999999999999\n1,0.29999999999999999\n2,1\n");
}

TEST_CASE("difficulty order is a stable ascending sort") {
  CHECK(DifficultyOrder::from_scores({0.5, 0.1, 0.9}).permutation == std::vector<std::size_t>{1, 0, 2});
  CHECK(DifficultyOrder::from_scores({0.3, 0.3}).permutation == std::vector<std::size_t>{0, 1});
  CHECK(DifficultyOrder::from_scores(std::vector<double>(6, 0.0)).permutation == identity(6));
}

TEST_CASE("strategy permutations") {
  auto order = DifficultyOrder::from_scores({0.5, 0.1, 0.9});
  CHECK(order_for_strategy(order, StrategyKind::curriculum, 0) == std::vector<std::size_t>{1, 0, 2});
  CHECK(order_for_strategy(order, StrategyKind::anti_curriculum, 0) == std::vector<std::size_t>{2, 0, 1});
  CHECK(order_for_strategy(order, StrategyKind::vanilla, 0) == identity(3));

  Rng rng(3);
  std::vector<double> scores(200);
  for (double& s : scores) s = rng.uniform();
  auto big = DifficultyOrder::from_scores(scores);
  auto cur = order_for_strategy(big, StrategyKind::curriculum, 0);
  auto anti = order_for_strategy(big, StrategyKind::anti_curriculum, 0);
  std::reverse(anti.begin(), anti.end());
  CHECK(anti == cur);
  auto r1 = order_for_strategy(big, StrategyKind::random_curriculum, 17);
  auto r2 = order_for_strategy(big, StrategyKind::random_curriculum, 17);
  CHECK(r1 == r2);
  CHECK(r1 != order_for_strategy(big, StrategyKind::random_curriculum, 18));
  std::sort(r1.begin(), r1.end());
  CHECK(r1 == identity(200));
}

TEST_CASE("strategy names") {
  CHECK(strategy_kind_from_string("anti") == StrategyKind::anti_curriculum);
  CHECK(strategy_kind_from_string("random_curriculum") == StrategyKind::random_curriculum);
  CHECK(to_string(StrategyKind::curriculum) == "curriculum");
  CHECK_THROWS_AS(strategy_kind_from_string("reverse"), InvalidArgument);
}

TEST_CASE("score file round trip and validation") {
  const auto path = std::filesystem::temp_directory_path() / "mexit_test_scores.csv";
  auto order = DifficultyOrder::from_scores({0.25, 1e-300, 3.5});
  write_score_file(path, order);
  auto back = read_score_file(path);
  CHECK(back.scores == order.scores);
  CHECK(back.permutation == order.permutation);
  std::ofstream(path) << "0,0.1\n2,0.3\n";
  CHECK_THROWS_AS(read_score_file(path), FormatError);
  std::ofstream(path) << "0,-0.1\n";
  CHECK_THROWS(read_score_file(path));
  std::filesystem::remove(path);
}

TEST_CASE("sample_batch") {
  Rng rng(1);
  auto b = sample_batch({0, 50}, 16, rng);
  CHECK(b.size() == 16);
  for (auto i : b) CHECK(i < 50);
  CHECK(std::set<std::size_t>(b.begin(), b.end()).size() == 16);
  auto full = sample_batch({10, 20}, 10, rng);
  std::sort(full.begin(), full.end());
  std::vector<std::size_t> expect(10);
  std::iota(expect.begin(), expect.end(), std::size_t{10});
  CHECK(full == expect);
  auto with_rep = sample_batch({0, 3}, 10, rng);
  CHECK(with_rep.size() == 10);
  for (auto i : with_rep) CHECK(i < 3);
  CHECK_THROWS_AS(sample_batch({5, 5}, 4, rng), InvalidArgument);
}

TEST_CASE("sample_batch is uniform over [0,100)") {
  Rng rng(2024);
  std::vector<double> counts(100, 0.0);
  for (int k = 0; k < 1000; ++k)
    for (auto i : sample_batch({0, 100}, 10, rng)) counts[i] += 1;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - 100.0) * (c - 100.0) / 100.0;
  CHECK(chi2 < 134.642);  // chi-square 0.99 quantile, 99 dof
}

TEST_CASE("vanilla stream covers each sample once per epoch") {
  auto s = ScheduleStream::vanilla(100, 10, 2, 5);
  CHECK(s.total_batches() == 20);
  std::vector<int> seen(100, 0);
  for (int k = 0; k < 10; ++k) {
    const auto batch = s.next();
    for (auto i : *batch) seen[i]++;
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  for (int k = 0; k < 10; ++k) CHECK(s.next().has_value());
  CHECK_FALSE(s.next().has_value());
  // Remainder samples are dropped: 105 samples, 10 batches of 10.
  auto r = ScheduleStream::vanilla(105, 10, 1, 5);
  CHECK(r.batches_per_epoch() == 10);
}

TEST_CASE("lambda 1 with identity permutation equals the vanilla stream") {
  auto v = ScheduleStream::vanilla(97, 8, 4, 33);
  auto p = ScheduleStream::paced(identity(97), PacingFunction(PacingConfig::single_step(1.0, 1)), 8, 4, 33);
  CHECK(v.total_batches() == p.total_batches());
  while (auto a = v.next()) {
    auto b = p.next();
    REQUIRE(b.has_value());
    CHECK(*a == *b);
  }
  CHECK_FALSE(p.next().has_value());
}

TEST_CASE("FEP stream stays in its prefix for the first delta batches") {
  Rng rng(6);
  std::vector<std::size_t> perm = identity(1000);
  rng.shuffle(perm);
  std::vector<std::size_t> position(1000);
  for (std::size_t i = 0; i < 1000; ++i) position[perm[i]] = i;
  PacingFunction f(PacingConfig::fixed_exponential(0.04, 1.9, 100));
  auto s = ScheduleStream::paced(perm, f, 16, 20, 4);
  std::size_t t = 0;
  while (auto b = s.next()) {
    const IndexRange r = active_range(f, t, 1000, 16);
    CHECK(s.last_range() == r);
    for (auto i : *b) REQUIRE(r.contains(position[i]));
    if (t < 100) CHECK(r.hi == 40);
    ++t;
  }
  CHECK(t == 20 * (1000 / 16));
}

TEST_CASE("paced stream rejects a non-bijection") {
  PacingFunction f(PacingConfig::single_step(0.5, 10));
  CHECK_THROWS_AS(ScheduleStream::paced({0, 1, 1}, f, 1, 1, 0), InvalidArgument);
  CHECK_THROWS_AS(ScheduleStream::paced({0, 1, 3}, f, 1, 1, 0), InvalidArgument);
}

TEST_CASE("schedule_stream dispatch") {
  auto v = schedule_stream(StrategyKind::vanilla, identity(20), std::nullopt, 5, 1, 1);
  CHECK(v.batches_per_epoch() == 4);
  CHECK_THROWS(schedule_stream(StrategyKind::curriculum, identity(20), std::nullopt, 5, 1, 1));
}
