#include <doctest.h>

#include <sstream>

#include "afflab/error.hpp"
#include "afflab/keyvalue.hpp"
#include "test_util.hpp"

using namespace afflab;

TEST_CASE("sections, comments and last-wins lookup") {
  std::istringstream in(
      "top = 1\n"
      "# comment\n"
      "[shape block]\n"
      "height = 0.03   # trailing\n"
      "height = 0.04\n"
      "[counts]\n"
      "instances=10\n");
  const auto file = parse_key_value(in);
  REQUIRE(file.sections.size() == 3);
  CHECK(file.sections[0].name.empty());
  CHECK(file.sections[0].get("top") == "1");
  const auto* shape = file.find("shape");
  REQUIRE(shape);
  CHECK(shape->arg == "block");
  CHECK(shape->get("height") == "0.04");
  CHECK(file.find("counts")->get("instances") == "10");
  CHECK_FALSE(file.find("missing"));
}

TEST_CASE("malformed lines report their line number") {
  std::istringstream in("[bin]\nwidth 0.2\n");
  try {
    parse_key_value(in);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInvalidArgument);
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
}

TEST_CASE("write then parse reproduces the file") {
  KeyValueFile f;
  f.section("global").set("seed", "3");
  f.section("train").set("lr", "0.001");
  f.section("train").set("task", "grasp");
  std::ostringstream out;
  write_key_value(out, f);
  std::istringstream in(out.str());
  const auto g = parse_key_value(in);
  CHECK(g.find("global")->get("seed") == "3");
  CHECK(g.find("train")->get("lr") == "0.001");
  CHECK(g.find("train")->get("task") == "grasp");
}

TEST_CASE("strict number parsing") {
  CHECK(parse_double("0.25", "x") == 0.25);
  CHECK(parse_int("-7", "x") == -7);
  CHECK_THROWS_AS(parse_double("0.25m", "x"), Error);
  CHECK_THROWS_AS(parse_int("1.5", "x"), Error);
  CHECK_THROWS_AS(parse_int("", "x"), Error);
  const auto v = parse_doubles("0.1, 0.2 0.3", "x");
  REQUIRE(v.size() == 3);
  CHECK(v[2] == 0.3);
}

TEST_CASE("missing file is an io error") {
  try {
    load_key_value("/nonexistent/afflab/config.txt");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
  }
}
