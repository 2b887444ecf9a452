#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "tgq/config.hpp"
#include "tgq/errors.hpp"

using namespace tgq;

TEST_CASE("defaults") {
  const Config c;
  CHECK(c.hqc.kernel == 5);
  CHECK(c.hqc.stride == 5);
  CHECK(c.hqc.T_r == 3);
  CHECK(c.encoder.max_title_tokens == 50);
  CHECK(c.train.tau == 0.07);
  CHECK(c.train.lambda_rr == 1.0);
  CHECK(c.train.warmup_frac == 0.1);
  CHECK(c.fusion.d_out == 256);
  c.validate();
}

TEST_CASE("parse, override and reject") {
  const Config c = parse_config("# comment\nhqc.T_r = 4\n\ntrain.variant = c\nhqc.self_attention=false\n");
  CHECK(c.hqc.T_r == 4);
  CHECK(c.train.variant == Variant::c);
  CHECK_FALSE(c.hqc.self_attention);
  CHECK_THROWS_AS(parse_config("nope.key = 1"), ConfigError);
  CHECK_THROWS_AS(parse_config("hqc.T_r = banana"), ConfigError);
  CHECK_THROWS_AS(parse_config("hqc.T_r"), ConfigError);
  Config bad;
  bad.train.tau = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("text round trip") {
  Config c;
  c.set("train.lr", "0.001");
  c.set("corpus.corrupt_severity", "heavy");
  const Config back = parse_config(c.to_text());
  CHECK(back.entries() == c.entries());
  CHECK_THROWS_AS(load_config("/nonexistent/cfg.txt"), IoError);
}

TEST_CASE("variants") {
  CHECK(flags_of(Variant::a).exploratory);
  CHECK_FALSE(flags_of(Variant::a).semantic);
  CHECK_FALSE(flags_of(Variant::c).gates);
  CHECK(flags_of(Variant::d).gates);
  CHECK_FALSE(flags_of(Variant::d).rr);
  CHECK(flags_of(Variant::e).rr);
  CHECK(parse_variant("full") == Variant::e);
  CHECK(variant_letter(Variant::d) == 'd');
  CHECK_THROWS_AS(parse_variant("f"), UsageError);
}
