#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "unifield/errors.hpp"
#include "unifield/run_config.hpp"

using namespace unifield;
using nlohmann::json;

TEST_CASE("defaults") {
    const auto rc = run_config_from_json(json::object());
    CHECK(rc.model == ModelConfig{});
    CHECK(rc.train.steps == 1000);
    CHECK(rc.train.batch_size == 4);
    CHECK(rc.train.points_per_sample == 32768);
    CHECK(rc.train.adam.lr == 1e-3);
    CHECK(rc.train.clip_norm == 1.0);
    CHECK(rc.train.final_lr_fraction == 0.1);
    CHECK_FALSE(rc.data.balance_domains);
}

TEST_CASE("a preset is not overridden by default widths") {
    json j;
    apply_override(j, "model.scale_preset=tiny");
    const auto rc = run_config_from_json(j);
    CHECK(rc.model.stages == 2);
    CHECK(rc.model.base_channels == 8);

    apply_override(j, "model.base_channels=12");
    CHECK(run_config_from_json(j).model.base_channels == 12);
}

TEST_CASE("resolved config parses back to the same run") {
    json j;
    apply_override(j, "model.scale_preset=small");
    apply_override(j, "model.k=9");
    apply_override(j, "train.lr=0.003");
    apply_override(j, "data.manifests=[\"a.json\",\"b.json\"]");
    apply_override(j, "data.balance_domains=true");
    apply_override(j, "seed=7");
    apply_override(j, "out_dir=runs/x");
    const auto rc = run_config_from_json(j);
    CHECK(rc.model.seed == 7);
    CHECK(rc.train.seed == 7);
    CHECK(rc.out_dir == "runs/x");
    CHECK(rc.data.manifests == std::vector<std::string>{"a.json", "b.json"});
    const auto again = run_config_from_json(to_json(rc));
    CHECK(again.model == rc.model);
    CHECK(to_json(again) == to_json(rc));
}

TEST_CASE("override values") {
    json j;
    apply_override(j, "out_dir=plain string");
    CHECK(j["out_dir"] == "plain string");
    apply_override(j, "train.steps=12");
    CHECK(j["train"]["steps"] == 12);
    CHECK_THROWS_AS(apply_override(j, "train.nope=1"), ConfigError);
    CHECK_THROWS_AS(apply_override(j, "steps"), ConfigError);
    CHECK_THROWS_AS(apply_override(j, "=3"), ConfigError);
}

TEST_CASE("rejections") {
    CHECK_THROWS_AS(run_config_from_json(json{{"bogus", 1}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(json{{"train", {{"stpes", 3}}}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(json{{"model", {{"seed", 3}}}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(json{{"model", {{"widht", 3}}}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(json{{"train", {{"lr", -1}}}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(json{{"train", {{"batch_size", 0}}}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(json{{"train", {{"steps", "many"}}}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(json{{"model", {{"k", 0}}}}), ConfigError);
}
