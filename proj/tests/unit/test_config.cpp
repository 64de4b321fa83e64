#include <doctest.h>

#include <string>

#include "slad/config.hpp"

using namespace slad;
using nlohmann::json;

namespace {

std::string error_of(const json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

TEST_CASE("FNV-1a reference vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("defaults parse and round-trip through JSON") {
  const RunConfig c = parse_config(json::object());
  CHECK(c.schedule.T == 1000);
  CHECK(c.distill.train.k == 100);
  CHECK(c.distill.train.k_phi == 20);
  const RunConfig again = parse_config(to_json(c));
  CHECK(to_json(again) == to_json(c));
  CHECK(config_hash(again) == config_hash(c));
  CHECK(config_hash(c).size() == 16);
}

TEST_CASE("the root seed reaches both training stages") {
  const RunConfig c = parse_config(json{{"seed", 42}});
  CHECK(c.seed == 42);
  CHECK(c.teacher.train.seed == 42);
  CHECK(c.distill.train.seed == 42);
}

TEST_CASE("unknown keys are reported with their full path") {
  CHECK(starts_with(error_of(json{{"distill", {{"kphi", 20}}}}), "distill.kphi"));
  CHECK(starts_with(error_of(json{{"bogus", 1}}), "bogus"));
  CHECK(starts_with(error_of(json{{"model", {{"widht", 3}}}}), "model.widht"));
}

TEST_CASE("bad values are reported with their key") {
  CHECK(starts_with(error_of(json{{"distill", {{"k", 100}, {"k_phi", 30}}}}), "distill.k_phi"));
  CHECK(starts_with(error_of(json{{"distill", {{"k", "ten"}}}}), "distill.k"));
  CHECK(starts_with(error_of(json{{"seed", -1}}), "seed"));
  CHECK(starts_with(error_of(json{{"distill", {{"mode", "slam"}}}}), "distill.mode"));
  CHECK_FALSE(error_of(json{{"schedule", {{"beta_end", 2.0}}}}).empty());
  CHECK_FALSE(error_of(json{{"eval", {{"sample_grid", {500, 700}}}}}).empty());
}

TEST_CASE("hash ignores run length but not other settings") {
  RunConfig a = parse_config(json::object());
  RunConfig b = parse_config(json{{"teacher", {{"steps", 99}}}, {"distill", {{"iterations", 7}}}});
  CHECK(config_hash(a) == config_hash(b));
  RunConfig c = parse_config(json{{"distill", {{"mu", 0.9}}}});
  CHECK(config_hash(a) != config_hash(c));
  RunConfig d = parse_config(json{{"seed", 1}});
  CHECK(config_hash(a) != config_hash(d));
}

TEST_CASE("model dimensions follow the dataset") {
  const RunConfig c = parse_config(json{{"dataset", {{"n_modes", 5}}}});
  CHECK(c.resolved_model().num_labels == 5);
  CHECK(c.resolved_model().dim == 2);
  const RunConfig cb = parse_config(json{{"dataset", {{"kind", "checkerboard"}}}});
  CHECK(cb.resolved_model().num_labels == 8);
}

TEST_CASE("missing config file is a config error") {
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}
