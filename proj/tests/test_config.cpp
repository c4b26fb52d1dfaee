#include "doctest.h"

#include "manga/config.hpp"
#include "manga/error.hpp"

using namespace manga;

TEST_CASE("shipped configs parse") {
    const auto desk = load_config(MANGA_SOURCE_DIR "/configs/desk.json");
    CHECK(desk.k_max == 4);
    CHECK(desk.model.k_max == 4);
    CHECK(desk.model.latent_height == 8);
    CHECK(desk.model.latent_width == 6);
    CHECK(desk.model.num_timesteps == 1000);
    CHECK(desk.optimizer.lr_schedule == "warmup_cosine");

    const auto full = load_config(MANGA_SOURCE_DIR "/configs/full_scale.json");
    CHECK(full.k_max == 8);
    CHECK(full.model.latent_height == 64);
    CHECK(full.model.latent_width == 48);
    CHECK(full.model.grid_height() == 32);
    CHECK(full.model.tokens_per_panel() == 32 * 24);
}

TEST_CASE("defaults and derived fields") {
    const auto c = parse_config("{}");
    CHECK(c.page_height == 64);
    CHECK(c.model.k_max == c.k_max);
    const auto big = parse_config(R"({"page_height": 128, "page_width": 96, "k_max": 6})");
    CHECK(big.model.latent_height == 16);
    CHECK(big.model.latent_width == 12);
    CHECK(big.model.k_max == 6);
}

TEST_CASE("round trip through JSON") {
    auto c = load_config(MANGA_SOURCE_DIR "/configs/desk.json");
    c.seed = 99;
    c.model.caption_in_inter_block = true;
    const auto back = parse_config(config_to_json(c));
    CHECK(config_to_json(back) == config_to_json(c));
    CHECK(back.seed == 99);
    CHECK(back.model.caption_in_inter_block);
}

TEST_CASE("config errors") {
    CHECK_THROWS_AS(parse_config(R"({"bogus": 1})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"model": {"dmodel": 64}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"k_max": 4, "model": {"k_max": 5}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"schedule": {"steps": 10}, "model": {"num_timesteps": 20}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"page_height": 60})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"data": {"token_stride": 8}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"optimizer": {"lr_schedule": "step"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"k_max": "four"})"), ConfigError);
    CHECK_THROWS_AS(parse_config("{"), ConfigError);
    CHECK_THROWS_AS(parse_config("[]"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"model": {"d_model": 30}})"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}
