// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>

#include "doctest.h"

#include "asgn/run_config.hpp"

using namespace asgn;
namespace fs = std::filesystem;

TEST_CASE("defaults carry the reference hyperparameters") {
  const RunConfig c;
  CHECK(c.train.window == 8);
  CHECK(c.train.khop == 3);
  CHECK(c.train.radius_km == 50.0);
  CHECK(c.train.tau == 0.5);
  CHECK(c.train.hidden == 32);
  const SplitBounds s = chronological_split(c.sim.steps);
  CHECK(s.train_end * 10 == c.sim.steps * 6);
  CHECK((s.val_end - s.train_end) * 10 == c.sim.steps * 2);
  CHECK(c.eval.vi_length == 24);
  CHECK(c.eval.seeds == std::vector<std::uint64_t>{1, 2, 3});
}

TEST_CASE("sections are optional and missing keys keep defaults") {
  const auto c = run_config_from_json(nlohmann::json::parse(R"({"train": {"tau": 1.5}})"));
  CHECK(c.train.tau == 1.5);
  CHECK(c.train.hidden == 32);
  CHECK(c.sim == SimConfig{});
  CHECK(run_config_from_json(nlohmann::json::object()) == RunConfig{});
}

TEST_CASE("unknown keys and bad values are rejected with their path") {
  auto fails_with = [](const char* text, const char* needle) {
    try {
      run_config_from_json(nlohmann::json::parse(text));
    } catch (const ConfigError& e) {
      return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
  };
  CHECK(fails_with(R"({"model": {}})", "model"));
  CHECK(fails_with(R"({"train": {"hiden": 3}})", "hiden"));
  CHECK(fails_with(R"({"sim": {"grid_nx": -1}})", "grid_nx"));
  CHECK(fails_with(R"({"eval": {"vi_variable": 9}})", "vi_variable"));
  CHECK(fails_with(R"({"eval": {"seeds": []}})", "seeds"));
  CHECK(fails_with(R"({"train": {"tau": "hot"}})", "tau"));
}

TEST_CASE("resolved configs reload to the same values") {
  RunConfig c;
  c.sim.grid_nx = 9;
  c.train.variant = model::Variant::kFixedGraph;
  c.train.jobs = 2;
  c.eval.sweep_tau = {0.25, 4.0};
  const fs::path path = fs::temp_directory_path() / "asgn-test-config.json";
  write_resolved_config(c, path);
  CHECK(load_run_config(path) == c);
  fs::remove(path);
  CHECK_THROWS_AS(load_run_config(path), ConfigError);
}

TEST_CASE("malformed JSON files raise ConfigError") {
  const fs::path path = fs::temp_directory_path() / "asgn-test-bad.json";
  std::ofstream(path) << "{\"train\": ";
  CHECK_THROWS_AS(load_run_config(path), ConfigError);
  fs::remove(path);
}
