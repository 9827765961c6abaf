#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "sqlsynth/kb_builder.hpp"
#include "support/expected_kb.hpp"
#include "support/fixture_db.hpp"
#include "support/scripting.hpp"

using namespace sqlsynth;

namespace {

struct Fixture {
  std::string db_path;
  db::DatabaseSchema schema;
  db::InstanceSample sample;
};

Fixture& fx() {
  static Fixture f = [] {
    auto dir = fixtures::fresh_dir("kb_builder_db");
    Fixture out;
    out.db_path = fixtures::build_fixture_db(dir);
    out.schema = fixtures::fixture_schema(out.db_path);
    out.sample = fixtures::fixture_sample(out.schema, out.db_path);
    return out;
  }();
  return f;
}

// Scripts all six stage prompts up front. Clean responses reproduce the
// expected layers exactly, so the expected KB doubles as every stage's prior.
void script_all_stages(fixtures::ScriptHarness& h) {
  kb::KnowledgeBase prior = fixtures::expected_kb();
  for (int stage = 1; stage <= 6; ++stage) {
    auto req = kb::stage_request(stage, fx().schema, fx().sample, prior);
    h.provider->script(req, fixtures::stage_response_text(stage));
  }
}

}  // namespace

TEST_CASE("staged build reproduces the authored knowledge base") {
  fixtures::ScriptHarness h;
  kb::KnowledgeBase built =
      fixtures::script_kb_build(h, fx().schema, fx().sample);
  kb::KnowledgeBase expected = fixtures::expected_kb();

  CHECK(built.complete());
  CHECK(built.same_content(expected));
  for (int stage = 1; stage <= 6; ++stage) {
    REQUIRE(built.provenance[stage - 1].has_value());
    CHECK(built.provenance[stage - 1]->stage == stage);
    CHECK(built.provenance[stage - 1]->model_id == "scripted-model");
    CHECK_FALSE(built.provenance[stage - 1]->prompt_fingerprint.empty());
    CHECK(built.provenance[stage - 1]->content_fingerprint ==
          kb::layer_fingerprint(built, stage));
  }
}

TEST_CASE("clean responses need no repair") {
  fixtures::ScriptHarness h;
  script_all_stages(h);
  auto outcome = kb::build(fx().schema, fx().sample, h.gateway);
  REQUIRE(outcome.is_ok());
  CHECK(outcome.value().stages_run == 6);
  CHECK(outcome.value().stages_skipped == 0);
  CHECK(outcome.value().log.empty());
  CHECK(outcome.value().kb.same_content(fixtures::expected_kb()));
}

TEST_CASE("stages refuse to run without their inputs") {
  fixtures::ScriptHarness h;
  kb::KnowledgeBase empty;

  auto st = kb::run_stage(4, fx().schema, fx().sample, empty, h.gateway);
  REQUIRE_FALSE(st.is_ok());
  CHECK(st.error().code == Errc::missing_prior_layer);
  CHECK(st.error().message.find("K1") != std::string::npos);

  auto bad = kb::run_stage(7, fx().schema, fx().sample, empty, h.gateway);
  REQUIRE_FALSE(bad.is_ok());
  CHECK(bad.error().code == Errc::config_invalid);
}

TEST_CASE("stage six requires the middle layers, not k1 directly") {
  auto reqs = kb::stage_prior_requirements(6);
  CHECK(reqs == std::vector<int>{3, 4, 5});
  CHECK(kb::stage_prior_requirements(1).empty());
  CHECK(kb::stage_prior_requirements(4) == std::vector<int>{1, 2, 3});
}

TEST_CASE("a failed stage keeps the partial build on disk") {
  auto dir = fixtures::fresh_dir("kb_partial");
  kb::KbStore store(dir / "kb");

  fixtures::ScriptHarness h;
  kb::KnowledgeBase prior = fixtures::expected_kb();
  for (int stage = 1; stage <= 2; ++stage) {
    auto req = kb::stage_request(stage, fx().schema, fx().sample, prior);
    h.provider->script(req, fixtures::stage_response_text(stage));
  }

  auto failed = kb::build(fx().schema, fx().sample, h.gateway, &store);
  REQUIRE_FALSE(failed.is_ok());
  CHECK(failed.error().code == Errc::script_miss);
  CHECK(failed.error().message.rfind("stage 3: ", 0) == 0);

  auto partial = store.load();
  REQUIRE(partial.is_ok());
  CHECK(partial.value().has_layer(1));
  CHECK(partial.value().has_layer(2));
  CHECK_FALSE(partial.value().has_layer(3));

  // Completing the script and resuming reruns only the missing stages.
  fixtures::ScriptHarness h2;
  for (int stage = 3; stage <= 6; ++stage) {
    auto req = kb::stage_request(stage, fx().schema, fx().sample, prior);
    h2.provider->script(req, fixtures::stage_response_text(stage));
  }
  kb::KnowledgeBase resume = partial.value();
  auto finished =
      kb::build(fx().schema, fx().sample, h2.gateway, &store, &resume);
  REQUIRE(finished.is_ok());
  CHECK(finished.value().stages_skipped == 2);
  CHECK(finished.value().stages_run == 4);
  CHECK(finished.value().kb.same_content(fixtures::expected_kb()));
}

TEST_CASE("resume skips every stage when nothing changed") {
  auto dir = fixtures::fresh_dir("kb_resume");
  kb::KbStore store(dir / "kb");

  fixtures::ScriptHarness h;
  script_all_stages(h);
  auto first = kb::build(fx().schema, fx().sample, h.gateway, &store);
  REQUIRE(first.is_ok());

  auto reloaded = store.load();
  REQUIRE(reloaded.is_ok());

  // A provider with no script proves no request is ever issued.
  fixtures::ScriptHarness silent;
  kb::KnowledgeBase resume = reloaded.value();
  auto second =
      kb::build(fx().schema, fx().sample, silent.gateway, &store, &resume);
  REQUIRE(second.is_ok());
  CHECK(second.value().stages_run == 0);
  CHECK(second.value().stages_skipped == 6);
  CHECK(second.value().kb.same_content(first.value().kb));
  int reused = 0;
  for (const auto& line : second.value().log)
    if (line.find("reused (unchanged inputs)") != std::string::npos) ++reused;
  CHECK(reused == 6);
}

TEST_CASE("a changed sample invalidates exactly the stages that read it") {
  auto dir = fixtures::fresh_dir("kb_invalidate");
  kb::KbStore store(dir / "kb");

  fixtures::ScriptHarness h;
  script_all_stages(h);
  auto first = kb::build(fx().schema, fx().sample, h.gateway, &store);
  REQUIRE(first.is_ok());

  auto reloaded = store.load();
  REQUIRE(reloaded.is_ok());

  // Shrinking the row cap changes the sampled-rows block, which feeds
  // stages 1 and 3 only; the other stages see identical prompts.
  db::InstanceSample small =
      fixtures::fixture_sample(fx().schema, fx().db_path, 3);
  REQUIRE(db::sample_to_text(small) != db::sample_to_text(fx().sample));

  fixtures::ScriptHarness h2;
  kb::KnowledgeBase prior = fixtures::expected_kb();
  for (int stage : {1, 3}) {
    auto req = kb::stage_request(stage, fx().schema, small, prior);
    h2.provider->script(req, fixtures::stage_response_text(stage));
  }
  kb::KnowledgeBase resume = reloaded.value();
  auto second =
      kb::build(fx().schema, small, h2.gateway, &store, &resume);
  REQUIRE(second.is_ok());
  CHECK(second.value().stages_run == 2);
  CHECK(second.value().stages_skipped == 4);
  CHECK(second.value().kb.same_content(first.value().kb));
}
