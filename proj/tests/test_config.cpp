#include <filesystem>

#include "doctest.h"
#include "qmvos/config.hpp"
#include "qmvos/error.hpp"

using namespace qmvos;
namespace fs = std::filesystem;

TEST_CASE("defaults parse and round-trip identically") {
  RunConfig cfg;
  cfg.sim_interaction = false;
  cfg.qcim_cross_source = CrossSource::kF16;
  cfg.mem_similarity = MemSimilarity::kL2;
  cfg.seed = 42;
  cfg.lr = 1e-5;
  cfg.steps = 123;

  const RunConfig back = parse_config_text(config_to_string(cfg));
  CHECK(config_to_string(back) == config_to_string(cfg));
  CHECK(back.sim_interaction == false);
  CHECK(back.qcim_cross_source == CrossSource::kF16);
  CHECK(back.mem_similarity == MemSimilarity::kL2);
  CHECK(back.seed == 42);
  CHECK(back.lr == 1e-5);
}

TEST_CASE("file round-trip through disk") {
  RunConfig cfg;
  cfg.query_propagation = false;
  cfg.lr = 0.0003;
  const std::string path = (fs::temp_directory_path() / "qmvos_cfg_test.cfg").string();
  write_config(cfg, path);
  const RunConfig back = read_config(path);
  CHECK(config_to_string(back) == config_to_string(cfg));
  fs::remove(path);
}

TEST_CASE("unknown keys are errors, comments are not") {
  CHECK_THROWS_AS(parse_config_text("ck = 32\nsim_interactoin = true\n"), config_error);
  CHECK_NOTHROW(parse_config_text("# comment\n\nck = 32\n"));
  CHECK_THROWS_AS(parse_config_text("ck 32\n"), config_error);
  CHECK_THROWS_AS(parse_config_text("ck = thirty\n"), config_error);
  CHECK_THROWS_AS(parse_config_text("sim_interaction = yes\n"), config_error);
  CHECK_THROWS_AS(parse_config_text("qcim_cross_source = f\n"), config_error);
}

TEST_CASE("validation names the offending field") {
  RunConfig cfg;
  cfg.mem_interval = 0;
  try {
    cfg.validate();
    FAIL("expected config_error");
  } catch (const config_error& e) {
    CHECK(std::string(e.what()).find("mem_interval") != std::string::npos);
  }

  RunConfig f16;
  f16.qcim_cross_source = CrossSource::kF16;
  f16.c16 = 32;  // cv stays 64
  CHECK_THROWS_AS(f16.validate(), config_error);
}
