#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "cpt/data.hpp"
#include "cpt/errors.hpp"
#include "doctest.h"

using namespace cpt;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& text) {
  const fs::path dir = fs::temp_directory_path() / "cpt_data_tests";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

}  // namespace

TEST_CASE("delimited loader") {
  SUBCASE("label first, comma separated") {
    const Dataset d = load_delimited(write_temp("a.csv", "1,2.0,3.0\n0,1.0,4.0\n"));
    CHECK(d.size() == 2);
    CHECK(d.feature_dim() == 2);
    CHECK(d.task.class_count == 2);
    CHECK(d.classes == std::vector<std::size_t>{1, 0});
    CHECK(d.row(0)[0] == 2.0);
    CHECK(d.row(0)[2] == 1.0);
  }
  SUBCASE("tabs, header and a label in the last column") {
    const Dataset d = load_delimited(write_temp("b.tsv", "x\ty\tlabel\n0.5\t1.5\t7\n2\t3\t9\n"),
                                     DelimitedOptions{true, 2, TaskKind::regression, {}});
    CHECK(d.targets == std::vector<double>{7.0, 9.0});
    CHECK(d.feature_names == std::vector<std::string>{"x", "y"});
    CHECK(d.row(1)[1] == 3.0);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(load_delimited(write_temp("empty.csv", "")), DataError);
    try {
      load_delimited(write_temp("ragged.csv", "1,2,3\n0,1,2\n1,2\n"));
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
    CHECK_THROWS_AS(load_delimited(write_temp("word.csv", "1,2,abc\n")), ParseError);
    CHECK_THROWS_AS(load_delimited(write_temp("nan.csv", "1,2,nan\n")), ParseError);
    CHECK_THROWS_AS(load_delimited(write_temp("unknown.csv", "5,1\n"), DelimitedOptions{false, 0, TaskKind::classification, {0.0, 1.0}}),
                    DataError);
    CHECK_THROWS_AS(load_delimited("/nonexistent/file.csv"), DataError);
  }
  SUBCASE("write then read") {
    const Dataset d = synth_circles(25, 0.3, 0.6, 9);
    const fs::path p = write_temp("round.csv", "");
    write_delimited(d, p);
    const Dataset back = load_delimited(p);
    CHECK(back.features == d.features);
    CHECK(back.classes == d.classes);
  }
}

TEST_CASE("sparse loader") {
  SUBCASE("densifies to the largest index") {
    const Dataset d = load_sparse(write_temp("s1.txt", "1 3:0.5\n"));
    CHECK(d.feature_dim() == 3);
    CHECK(d.features == std::vector<double>{0.0, 0.0, 0.5, 1.0});
  }
  SUBCASE("minus one becomes class zero") {
    const Dataset d = load_sparse(write_temp("s2.txt", "-1 1:2.0\n+1 2:1\n"));
    CHECK(d.classes == std::vector<std::size_t>{0, 1});
    CHECK(d.class_values == std::vector<double>{-1.0, 1.0});
  }
  SUBCASE("padding and comments") {
    const Dataset d = load_sparse(write_temp("s3.txt", "# header\n0 1:1 # trailing\n\n1 2:2\n"),
                                  SparseOptions{TaskKind::classification, {}, 5});
    CHECK(d.size() == 2);
    CHECK(d.feature_dim() == 5);
  }
  SUBCASE("index errors") {
    CHECK_THROWS_AS(load_sparse(write_temp("s4.txt", "1 2:1 1:3\n")), ParseError);
    CHECK_THROWS_AS(load_sparse(write_temp("s5.txt", "1 2:1 2:3\n")), ParseError);
    CHECK_THROWS_AS(load_sparse(write_temp("s6.txt", "1 0:1\n")), ParseError);
    CHECK_THROWS_AS(load_sparse(write_temp("s7.txt", "1 2-1\n")), ParseError);
    CHECK_THROWS_AS(load_sparse(write_temp("s8.txt", "")), DataError);
  }
  SUBCASE("ten lines round-trip") {
    std::mt19937_64 rng(61);
    std::string text;
    for (int i = 0; i < 10; ++i) {
      text += std::to_string(i % 2);
      for (int j = 1; j <= 6; ++j) {
        if (rng() % 2) text += " " + std::to_string(j) + ":" + std::to_string(static_cast<int>(rng() % 100) - 50) + ".25";
      }
      text += "\n";
    }
    const Dataset d = load_sparse(write_temp("s9.txt", text), SparseOptions{TaskKind::classification, {}, 6});
    const fs::path p = write_temp("s10.txt", "");
    write_sparse(d, p);
    const Dataset back = load_sparse(p, SparseOptions{TaskKind::classification, {}, 6});
    CHECK(back.features == d.features);
    CHECK(back.classes == d.classes);
    CHECK(back.size() == 10);
  }
}

TEST_CASE("standardization") {
  const Dataset d = make_dataset(Task::regression(), 2, std::vector<double>{0, 5, 2, 5}, std::vector<double>{1, 2});
  const auto [train, s] = standardize(d);
  CHECK(train.row(0)[0] == -1.0);
  CHECK(train.row(1)[0] == 1.0);
  CHECK(train.row(0)[1] == 5.0);
  CHECK(train.row(1)[2] == 1.0);
  SUBCASE("applying twice differs from once") {
    const Dataset twice = s.apply(train);
    CHECK(twice.row(0)[0] == -2.0);
  }
  SUBCASE("other data uses the training statistics") {
    const Dataset test = make_dataset(Task::regression(), 2, std::vector<double>{4, 1}, std::vector<double>{0});
    const Dataset t = s.apply(test);
    CHECK(t.row(0)[0] == 3.0);
    CHECK(t.row(0)[1] == 1.0);
  }
  SUBCASE("dimension mismatch") {
    const Dataset other = make_dataset(Task::regression(), 1, std::vector<double>{4}, std::vector<double>{0});
    CHECK_THROWS_AS(s.apply(other), DimensionError);
  }
}

TEST_CASE("concentric circles") {
  SUBCASE("paper size and reproducibility") {
    const Dataset a = synth_circles(2000, 0.45, 0.85, 3);
    const Dataset b = synth_circles(2000, 0.45, 0.85, 3);
    CHECK(a.size() == 2000);
    CHECK(a.features == b.features);
    CHECK(a.classes == b.classes);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(std::abs(a.row(i)[0]) <= 1.0);
      CHECK(std::abs(a.row(i)[1]) <= 1.0);
    }
  }
  SUBCASE("label fraction matches the annulus area") {
    const double r_in = 0.45, r_out = 0.85;
    const double expected = std::numbers::pi * (r_out * r_out - r_in * r_in) / 4.0;
    const double se = std::sqrt(expected * (1 - expected) / 100000.0);
    for (std::uint64_t seed : {1u, 2u}) {
      const Dataset d = synth_circles(100000, r_in, r_out, seed);
      double ones = 0.0;
      for (std::size_t c : d.classes) ones += c;
      CHECK(std::abs(ones / 100000.0 - expected) < 3 * se);
    }
  }
  SUBCASE("origin is outside the ring") {
    // the inner disc never carries label 1
    const Dataset d = synth_circles(5000, 0.45, 0.85, 4);
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (std::hypot(d.row(i)[0], d.row(i)[1]) < 0.45) CHECK(d.classes[i] == 0);
    }
  }
  SUBCASE("invalid radii") {
    CHECK_THROWS_AS(synth_circles(10, 0.0, 0.5, 1), std::invalid_argument);
    CHECK_THROWS_AS(synth_circles(10, 0.6, 0.5, 1), std::invalid_argument);
  }
}

TEST_CASE("splits") {
  const Dataset d = synth_circles(100, 0.45, 0.85, 5);
  const DataSplit s = split_dataset(d, 0.2, 0.1, 8);
  CHECK(s.valid.size() == 20);
  CHECK(s.test.size() == 10);
  CHECK(s.train.size() == 70);
  const DataSplit again = split_dataset(d, 0.2, 0.1, 8);
  CHECK(again.train.features == s.train.features);
  CHECK_THROWS_AS(split_dataset(d, 0.6, 0.5, 1), std::invalid_argument);
}

TEST_CASE("dataset invariants") {
  Dataset d = synth_circles(10, 0.45, 0.85, 6);
  CHECK_NOTHROW(check_dataset(d));
  d.row(3)[2] = 0.5;
  CHECK_THROWS(check_dataset(d));
  d = synth_circles(10, 0.45, 0.85, 6);
  d.classes[0] = 7;
  CHECK_THROWS(check_dataset(d));
}
