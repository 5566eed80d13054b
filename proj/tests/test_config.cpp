#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "vsr/bench.hpp"
#include "vsr/config.hpp"

using namespace vsr;

TEST_CASE("parser handles sections, comments, and whitespace") {
  const ConfigMap cm = parse_config_text(
      "top = 1\n"
      "# full-line comment\n"
      "[grid]\n"
      "  frames =  7   # inline comment\n"
      "cols=3\n"
      "\n"
      "[bench]\n"
      "seed = 42\n");
  CHECK(cm.raw("top") == "1");
  CHECK(cm.get_size("grid.frames", 0) == 7);
  CHECK(cm.get_size("grid.cols", 0) == 3);
  CHECK(cm.get_int("bench.seed", 0) == 42);
  CHECK_FALSE(cm.has("grid.rows"));
  CHECK(cm.get_size("grid.rows", 9) == 9);
}

TEST_CASE("parser rejects malformed input") {
  CHECK_THROWS_AS(parse_config_text("a = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("novalue\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[]\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[open\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("= 3\n"), ConfigError);
}

TEST_CASE("typed getters validate their values") {
  const ConfigMap cm = parse_config_text(
      "i = 12\nbad = 12x\nd = 1.5\nb1 = on\nb0 = false\nneg = -3\n");
  CHECK(cm.get_int("i", 0) == 12);
  CHECK_THROWS_AS(cm.get_int("bad", 0), ConfigError);
  CHECK(cm.get_double("d", 0.0) == doctest::Approx(1.5));
  CHECK(cm.get_bool("b1", false));
  CHECK_FALSE(cm.get_bool("b0", true));
  CHECK_THROWS_AS(cm.get_bool("i", false), ConfigError);
  CHECK_THROWS_AS(cm.get_size("neg", 0), ConfigError);
}

TEST_CASE("bench config rejects unknown keys and bad values") {
  CHECK_THROWS_AS(BenchConfig::from_config(parse_config_text("[grid]\nframez = 2\n")),
                  ConfigError);
  const BenchConfig bc = BenchConfig::from_config(parse_config_text(
      "[grid]\nframes = 2\nrows = 16\ncols = 16\n"
      "[stream]\nevict = headwise\nlocality = preserved\n"
      "[bench]\nreps = 3\n"));
  CHECK(bc.frames == 2);
  CHECK(bc.strategy == EvictStrategy::head_wise);
  CHECK(bc.locality == "preserved");
  CHECK(bc.reps == 3);
  CHECK_THROWS_AS(
      BenchConfig::from_config(parse_config_text("[attention]\nd_head = 7\n")),
      ConfigError);
  CHECK_THROWS_AS(
      BenchConfig::from_config(parse_config_text("[stream]\nlocality = sideways\n")),
      ConfigError);
}

TEST_CASE("density to top-k rounding") {
  CHECK(topk_for_density(0.125, 64) == 8);
  CHECK(topk_for_density(0.136, 64) == 9);
  CHECK(topk_for_density(1.0, 64) == 64);
  CHECK(topk_for_density(0.001, 64) == 1);
  CHECK_THROWS_AS(topk_for_density(0.0, 64), ConfigError);
  CHECK_THROWS_AS(topk_for_density(1.5, 64), ConfigError);
}

TEST_CASE("csv rows match their headers") {
  const auto commas = [](const std::string& s) {
    return std::count(s.begin(), s.end(), ',');
  };
  SparsityRow sr;
  sr.k = 4;
  CHECK(commas(sparsity_csv_header()) == commas(sparsity_csv_row(sr)));
  StreamDemoRow dr;
  dr.t = 2;
  CHECK(commas(stream_csv_header()) == commas(stream_csv_row(dr)));
  CHECK(sparsity_csv_row(sr).rfind("4,", 0) == 0);
  CHECK(stream_csv_row(dr).rfind("2,", 0) == 0);
}
