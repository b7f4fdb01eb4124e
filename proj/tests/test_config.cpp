#include <doctest.h>

#include <sstream>
#include <string>

#include "spiked/config.hpp"
#include "spiked/error.hpp"

using namespace spiked;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is, "t.cfg");
}

std::string parse_error(const std::string& text) {
  try {
    parse(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

std::string validate_error(const std::string& text) {
  try {
    parse(text).validate();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

const char* kBase =
    "# experiment\n"
    "noise = quartic\n"
    "prior = sparse_rademacher   # sparse\n"
    "prior.epsilon = 0.5\n"
    "lambda_grid = 1.5, 2, 3\n"
    "n = 300\n"
    "trials = 4\n"
    "seed = 7\n"
    "tap.tau = 0.8\n"
    "tap.onsager = adaptive\n";

}  // namespace

TEST_CASE("parsing a well-formed file") {
  const ExperimentConfig c = parse(kBase);
  CHECK(c.noise.kind == "quartic");
  CHECK(c.prior.kind == "sparse_rademacher");
  CHECK(c.prior.params.at("epsilon") == 0.5);
  CHECK(c.lambda_grid == std::vector<double>{1.5, 2.0, 3.0});
  CHECK(c.n == 300);
  CHECK(c.trials == 4);
  CHECK(c.seed == 7);
  CHECK(c.tap.tau == 0.8);
  CHECK(c.tap.onsager_mode == OnsagerMode::adaptive);
  CHECK(c.echo.size() == 9);
  CHECK(c.echo.front().first == "noise");
  CHECK_NOTHROW(c.validate());
  CHECK_THROWS_AS(c.single_lambda(), ValidationError);

  const ExperimentConfig d = parse("lambda = 2.5\n");
  CHECK(d.single_lambda() == 2.5);
  CHECK(d.tap.onsager_mode == OnsagerMode::fixed_from_replica);
  CHECK(parse("lambda_grid = 4\n").single_lambda() == 4.0);
}

TEST_CASE("parse errors carry the line number") {
  CHECK(parse_error("n = 100\nbogus = 1\n") == "t.cfg:2: unknown key 'bogus'");
  CHECK(parse_error("n = 100\n\nn = 200\n") == "t.cfg:3: duplicate key 'n' (first set on line 1)");
  CHECK(parse_error("# c\njust words\n") == "t.cfg:2: expected 'key = value'");
  CHECK(parse_error("n =\n") == "t.cfg:1: missing value for 'n'");
  CHECK(parse_error("= 3\n") == "t.cfg:1: missing key");
  CHECK(parse_error("n = 1.5\n").rfind("t.cfg:1: ", 0) == 0);
  CHECK(parse_error("tap.tau = abc\n").rfind("t.cfg:1: ", 0) == 0);
  CHECK(parse_error("\n\nlambda_grid = 1, , 2\n").rfind("t.cfg:3: ", 0) == 0);
  CHECK(parse_error("tap.onsager = sometimes\n").rfind("t.cfg:1: ", 0) == 0);
  CHECK(parse_error("noise.potential = guessed\n").rfind("t.cfg:1: ", 0) == 0);
}

TEST_CASE("lambda grids") {
  CHECK(parse_lambda_grid("0.5, 1, 2") == std::vector<double>{0.5, 1.0, 2.0});
  const std::vector<double> r = parse_lambda_grid("0:1:0.25");
  REQUIRE(r.size() == 5);
  CHECK(r.back() == 1.0);
  CHECK(r[1] == 0.25);
  CHECK(parse_lambda_grid("0.1:0.3:0.1").size() == 3);
  CHECK_THROWS_AS(parse_lambda_grid("0:1"), ValidationError);
  CHECK_THROWS_AS(parse_lambda_grid("0:1:0"), ValidationError);
  CHECK_THROWS_AS(parse_lambda_grid("2:1:0.5"), ValidationError);
}

TEST_CASE("manifest hash") {
  const ExperimentConfig a = parse(kBase);
  const ExperimentConfig b = parse(std::string(kBase) + "workers = 3\n");
  CHECK(a.hash() == b.hash());
  const ExperimentConfig c = parse(std::string(kBase) + "tap.max_iter = 10\n");
  CHECK(a.hash() != c.hash());
  // Key order in the file does not matter.
  const ExperimentConfig d = parse("seed = 7\nn = 300\nnoise = quartic\n");
  const ExperimentConfig e = parse("noise = quartic\nseed = 7\nn = 300\n");
  CHECK(d.hash() == e.hash());
  CHECK(d.canonical() == e.canonical());
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("validation") {
  CHECK(validate_error("n = 32\n") == "n must be at least 64");
  CHECK(validate_error("trials = 0\n") == "trials must be at least 1");
  CHECK(validate_error("lambda_grid = 2, 1\n") == "lambda_grid must be strictly increasing");
  CHECK(validate_error("lambda_grid = 1, 1\n") == "lambda_grid must be strictly increasing");
  CHECK(validate_error("lambda_grid = -1, 1\n") == "lambda_grid entries must be nonnegative");
  CHECK(validate_error("seed = 3\nsurrogate.seed = 4\n").find("surrogate.seed must equal seed") == 0);
  CHECK(validate_error("seed = 3\nsurrogate.seed = 3\n").empty());
  CHECK(validate_error("noise = file\n") == "noise = file needs noise.file");
  CHECK(validate_error("prior = file\n") == "prior = file needs prior.file");
  CHECK(validate_error("replica.damping = 1\n") == "replica.damping must lie in [0, 1)");
  CHECK(validate_error("tap.tau = 1\n") == "tap.tau must lie in [0, 1)");
  CHECK(validate_error("tap.init = informative\ntap.init_correlation = 0\n") ==
        "tap.init_correlation must lie in (0, 1]");
  CHECK(validate_error(kBase).empty());
}

TEST_CASE("missing config file") {
  CHECK_THROWS_AS(load_config("/nonexistent/dir/x.cfg"), ValidationError);
}
