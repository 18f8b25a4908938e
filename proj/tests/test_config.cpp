#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "cop/config.hpp"
#include "doctest.h"

using namespace cop;

TEST_CASE("globals, sections, and typed accessors") {
  Config cfg = Config::parse_text(
      "seed = 7\n"
      "out = runs/demo\n"
      "lambda = 0.5\n"
      "flip = true\n"
      "\n"
      "[task]\n"
      "name = t1\n"
      "epochs = 12\n"
      "mean = -0.9, 0.01, 0.0\n"
      "\n"
      "[task]\n"
      "name = t2\n"
      "supervised = false\n");

  CHECK(cfg.globals.get_int("seed") == 7);
  CHECK(cfg.globals.get("out") == "runs/demo");
  CHECK(cfg.globals.get_double("lambda") == 0.5);
  CHECK(cfg.globals.get_bool("flip"));
  CHECK(cfg.globals.get_bool_or("missing", false) == false);
  CHECK(cfg.globals.get_int_or("missing", 42) == 42);
  CHECK(cfg.globals.get_double_or("missing", 1.5) == 1.5);
  CHECK(cfg.globals.get_or("missing", "dflt") == "dflt");

  auto tasks = cfg.sections_named("task");
  REQUIRE(tasks.size() == 2);
  CHECK(tasks[0]->get("name") == "t1");
  CHECK(tasks[0]->get_int("epochs") == 12);
  Vec3 m = tasks[0]->get_vec3("mean");
  CHECK(m[0] == -0.9);
  CHECK(m[1] == 0.01);
  CHECK(m[2] == 0.0);
  CHECK(tasks[1]->get("name") == "t2");
  CHECK_FALSE(tasks[1]->get_bool("supervised"));
}

TEST_CASE("comments, blank lines, whitespace, and CRLF") {
  Config cfg = Config::parse_text(
      "# leading comment\n"
      "  a   =   1  # trailing comment\r\n"
      "\r\n"
      "[ sec ]\n"  // spaces inside brackets belong to the name after trim of the line only
      "b=2\n");
  CHECK(cfg.globals.get_int("a") == 1);
  REQUIRE(cfg.sections.size() == 1);
  CHECK(cfg.sections[0].name == " sec ");
  CHECK(cfg.sections[0].get_int("b") == 2);
}

TEST_CASE("booleans accept the usual spellings") {
  Config cfg = Config::parse_text("a=yes\nb=off\nc=1\nd=0\n");
  CHECK(cfg.globals.get_bool("a"));
  CHECK_FALSE(cfg.globals.get_bool("b"));
  CHECK(cfg.globals.get_bool("c"));
  CHECK_FALSE(cfg.globals.get_bool("d"));
}

TEST_CASE("errors carry line numbers and key names") {
  CHECK_THROWS_WITH_AS(Config::parse_text("novalue\n"),
                       doctest::Contains("line 1"), std::runtime_error);
  CHECK_THROWS_WITH_AS(Config::parse_text("x=1\n[unterminated\n"),
                       doctest::Contains("line 2"), std::runtime_error);
  CHECK_THROWS_WITH_AS(Config::parse_text("[]\n"),
                       doctest::Contains("empty section"), std::runtime_error);
  CHECK_THROWS_WITH_AS(Config::parse_text(" = 3\n"),
                       doctest::Contains("empty key"), std::runtime_error);

  Config cfg = Config::parse_text("n=abc\nv=1,2\nb=perhaps\n");
  CHECK_THROWS_WITH_AS(cfg.globals.get_int("n"), doctest::Contains("'n'"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(cfg.globals.get_double("n"), doctest::Contains("not a number"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(cfg.globals.get_vec3("v"), doctest::Contains("3 comma-separated"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(cfg.globals.get_bool("b"), doctest::Contains("boolean"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(cfg.globals.get("absent"), doctest::Contains("missing key"),
                       std::runtime_error);
}

TEST_CASE("repeated keys keep file order; later sections do not leak") {
  Config cfg = Config::parse_text(
      "[task]\n"
      "k = first\n"
      "k = second\n"
      "[task]\n"
      "k = third\n");
  auto tasks = cfg.sections_named("task");
  REQUIRE(tasks.size() == 2);
  CHECK(tasks[0]->get("k") == "first");  // get returns the first occurrence
  CHECK(tasks[0]->entries.size() == 2);
  CHECK(tasks[1]->get("k") == "third");
  CHECK_FALSE(cfg.globals.has("k"));
}
