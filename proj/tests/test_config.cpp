#include <fstream>

#include "doctest.h"

#include "evoscen/config.hpp"
#include "evoscen/errors.hpp"

using namespace evoscen;
using Json = nlohmann::ordered_json;

TEST_CASE("config snapshot round-trips") {
  for (const char* name : {"desk", "paper"}) {
    const RunConfig c = preset_config(name);
    CHECK_NOTHROW(c.validate());
    const Json j = config_to_json(c);
    CHECK(config_to_json(config_from_json(j)) == j);
    CHECK(j["preset"] == name);
    CHECK(j["schema"] == 1);
  }
}

TEST_CASE("full-scale preset values") {
  const Json j = config_to_json(preset_config("paper"));
  const Json& t = j["td3"];
  CHECK(t["buffer_max"] == 40000);
  CHECK(t["lr_actor"] == 1e-4);
  CHECK(t["lr_critic1"] == 1e-4);
  CHECK(t["lr_critic2"] == 1e-4);
  CHECK(t["batch"] == 10);
  CHECK(t["iters_per_round"] == 2);
  CHECK(t["tau"] == 0.095);
  CHECK(t["gamma"] == 0.9);
  CHECK(j["stages"]["rounds"]["level1"] == 90000);
  CHECK(j["stages"]["others"] == 12);
  CHECK(j["stages"]["agents"] == 12);
  CHECK(j["simulate"]["rounds"] == 500);
  CHECK(j["max_steps"] == 600);
}

TEST_CASE("desk preset") {
  const RunConfig c = preset_config("desk");
  CHECK(c.stage_rounds.at(Stage::Level1) == 2000);
  CHECK(c.train.others == 6);
  CHECK(c.train.agents == 6);
  CHECK(c.simulate_rounds == 100);
  CHECK(c.stage_config(Stage::Level1).td3.rounds == 2000);
  CHECK(c.train.sim.map.segments.size() == 1);
  CHECK_THROWS_AS(preset_config("laptop"), ConfigError);
}

TEST_CASE("partial documents override the preset") {
  const Json doc = Json::parse(R"({"schema": 1, "preset": "paper", "td3": {"batch": 32}, "simulate": {"jobs": 4}})");
  const RunConfig c = config_from_json(doc);
  CHECK(c.preset == "paper");
  CHECK(c.train.td3.batch == 32);
  CHECK(c.train.td3.tau == 0.095);
  CHECK(c.jobs == 4);
  CHECK(c.simulate_rounds == 500);
  CHECK(config_from_json(doc, std::string("desk")).simulate_rounds == 100);
}

TEST_CASE("config errors") {
  auto bad = [](const char* text) { return config_from_json(Json::parse(text)); };
  CHECK_THROWS_AS(bad(R"({"td3": {}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"schema": 2})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"schema": 1, "td3": {"batchsize": 4}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"schema": 1, "extra": 1})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"schema": 1, "td3": {"batch": "ten"}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"schema": 1, "td3": {"tau": 0}})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"schema": 1, "preset": "laptop"})"), ConfigError);
  CHECK_THROWS_AS(bad(R"({"schema": 1, "map": {"segments": [{"kind": "spiral", "length": 10}]}})"), ConfigError);
  try {
    bad(R"({"schema": 1, "reward": {"mu": true}})");
    FAIL("type mismatch accepted");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("mu") != std::string::npos);
  }

  const auto path = std::filesystem::temp_directory_path() / "evoscen_config_test.json";
  {
    std::ofstream out(path);
    out << "{\"schema\": 1,";
  }
  CHECK_THROWS_AS(load_config(path), ConfigError);
  {
    std::ofstream out(path);
    out << "{\"schema\": 1, \"stages\": {\"rounds\": {\"level1\": 50}}}";
  }
  CHECK(load_config(path).stage_rounds.at(Stage::Level1) == 50);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config(path), ConfigError);
}
