#include <doctest.h>

#include "amem/config.hpp"

using namespace amem;

TEST_CASE("parses scalars, lists and comments") {
  const auto c = ConfigFile::parse(R"(
# leading comment
seed = 17
eta = 2.5e-2   # trailing comment
prior = "two_point"
flag = true
grid = [125, 500, 2000]
names = ["a", "b"]
empty = []
)");
  CHECK(c.integer("seed") == 17);
  CHECK(c.number("eta") == doctest::Approx(0.025));
  CHECK(c.string("prior") == "two_point");
  CHECK(c.boolean("flag", false));
  CHECK(c.numbers("grid") == std::vector<double>{125, 500, 2000});
  CHECK(c.numbers("empty").empty());
  CHECK(c.has("names"));
  CHECK_FALSE(c.has("missing"));
  CHECK(c.number("missing", 3.0) == 3.0);
  CHECK(c.string("missing", "x") == "x");
  CHECK(c.numbers("missing", {1.0}) == std::vector<double>{1.0});
  CHECK(c.keys().size() == 7);
}

TEST_CASE("rejects malformed input") {
  CHECK_THROWS_AS(ConfigFile::parse("a = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(ConfigFile::parse("just a line\n"), ConfigError);
  CHECK_THROWS_AS(ConfigFile::parse("a = \"unterminated\n"), ConfigError);
  CHECK_THROWS_AS(ConfigFile::parse("a = [1, 2\n"), ConfigError);
  CHECK_THROWS_AS(ConfigFile::parse("a = bogus\n"), ConfigError);
  CHECK_THROWS_AS(ConfigFile::parse("= 3\n"), ConfigError);
  CHECK_THROWS_AS(ConfigFile::load("/nonexistent/config.toml"), ConfigError);
}

TEST_CASE("type errors are reported") {
  const auto c = ConfigFile::parse("s = \"text\"\nx = 1.5\nl = [1, 2]\n");
  CHECK_THROWS_AS(c.number("s"), ConfigError);
  CHECK_THROWS_AS(c.integer("x"), ConfigError);
  CHECK_THROWS_AS(c.string("x"), ConfigError);
  CHECK_THROWS_AS(c.number("l"), ConfigError);
  CHECK_THROWS_AS(c.number("absent"), ConfigError);
  CHECK(c.numbers("x") == std::vector<double>{1.5});
}

TEST_CASE("numeric overrides") {
  auto c = ConfigFile::parse("seed = 1\n");
  c.set_number("seed", 99);
  c.set_number("eta", 0.5);
  CHECK(c.integer("seed") == 99);
  CHECK(c.number("eta") == 0.5);
}
