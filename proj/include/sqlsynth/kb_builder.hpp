#pragma once

// Staged knowledge-base construction. Each stage sees exactly its declared
// input context, the response is validated and repaired against the schema,
// and a prompt fingerprint is recorded so interrupted builds resume at the
// first stage whose inputs changed.

#include <chrono>
#include <ctime>
#include <string>
#include <vector>

#include "sqlsynth/knowledge_base.hpp"
#include "sqlsynth/llm_gateway.hpp"
#include "sqlsynth/prompts.hpp"

namespace sqlsynth::kb {

inline std::vector<int> stage_prior_requirements(int stage) {
  switch (stage) {
    case 1: return {};
    case 2: return {1};
    case 3: return {1};
    case 4: return {1, 2, 3};
    case 5: return {1, 2, 3, 4};
    case 6: return {3, 4, 5};
  }
  return {};
}

inline std::string layer_block_label(int stage) {
  switch (stage) {
    case 1: return "Table metadata";
    case 2: return "Domain constraints";
    case 3: return "Field types";
    case 4: return "Column semantics";
    case 5: return "Table constraints";
    case 6: return "Cross-table relations";
  }
  return "Layer";
}

inline std::vector<prompts::Block> stage_input_blocks(
    int stage, const db::DatabaseSchema& schema,
    const db::InstanceSample& sample, const KnowledgeBase& prior) {
  std::vector<prompts::Block> blocks;
  auto layer_block = [&](int t) {
    blocks.emplace_back(layer_block_label(t),
                        serialize_layer(prior, t).dump(2));
  };
  switch (stage) {
    case 1:
      blocks.emplace_back("Database schema", db::schema_to_ddl_text(schema));
      blocks.emplace_back("Sampled rows", db::sample_to_text(sample));
      break;
    case 2:
      blocks.emplace_back("Database schema", db::schema_to_ddl_text(schema));
      layer_block(1);
      break;
    case 3:
      layer_block(1);
      blocks.emplace_back("Sampled rows", db::sample_to_text(sample));
      break;
    case 4:
      layer_block(1);
      layer_block(2);
      layer_block(3);
      break;
    case 5:
      layer_block(1);
      layer_block(2);
      layer_block(3);
      layer_block(4);
      break;
    case 6:
      layer_block(3);
      layer_block(4);
      layer_block(5);
      break;
  }
  return blocks;
}

inline llm::ChatRequest stage_request(int stage,
                                      const db::DatabaseSchema& schema,
                                      const db::InstanceSample& sample,
                                      const KnowledgeBase& prior) {
  return prompts::kb_stage_request(stage,
                                   stage_input_blocks(stage, schema, sample,
                                                      prior));
}

inline std::string utc_timestamp() {
  std::time_t now = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  std::tm tm{};
#if defined(_WIN32)
  gmtime_s(&tm, &now);
#else
  gmtime_r(&now, &tm);
#endif
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct StageOutcome {
  int stage = 0;
  std::vector<std::string> repair_log;
};

// Runs one extraction stage and installs the validated layer into `kb`.
inline Result<StageOutcome> run_stage(int stage,
                                      const db::DatabaseSchema& schema,
                                      const db::InstanceSample& sample,
                                      KnowledgeBase& kb,
                                      llm::Gateway& gateway) {
  if (stage < 1 || stage > 6)
    return make_error(Errc::config_invalid,
                      "stage index " + std::to_string(stage) +
                          " outside 1..6");
  for (int req : stage_prior_requirements(stage)) {
    if (!kb.has_layer(req))
      return make_error(Errc::missing_prior_layer,
                        "stage " + std::to_string(stage) +
                            " requires layer K" + std::to_string(req) +
                            " which is not present");
  }
  llm::ChatRequest req = stage_request(stage, schema, sample, kb);
  std::string prompt_fp = hex64(llm::request_fingerprint(req));
  auto response = gateway.complete_structured(req);
  if (!response.is_ok()) return response.error();
  const Json& raw = response.value();

  StageOutcome outcome;
  outcome.stage = stage;
  Status applied = Status::ok_status();
  switch (stage) {
    case 1: {
      auto parsed = parse_k1(raw);
      if (!parsed.is_ok()) return parsed.error();
      kb.k1 = std::move(parsed).value();
      applied = validate_k1(kb.k1, schema, outcome.repair_log);
      break;
    }
    case 2: {
      auto parsed = parse_k2(raw);
      if (!parsed.is_ok()) return parsed.error();
      kb.k2 = std::move(parsed).value();
      applied = validate_k2(kb.k2, schema, outcome.repair_log);
      break;
    }
    case 3: {
      auto parsed = parse_k3(raw);
      if (!parsed.is_ok()) return parsed.error();
      kb.k3 = std::move(parsed).value();
      applied = validate_k3(kb.k3, schema, outcome.repair_log);
      break;
    }
    case 4: {
      auto parsed = parse_k4(raw);
      if (!parsed.is_ok()) return parsed.error();
      kb.k4 = std::move(parsed).value();
      applied = validate_k4(kb.k4, schema, kb.k3, outcome.repair_log);
      break;
    }
    case 5: {
      auto parsed = parse_k5(raw);
      if (!parsed.is_ok()) return parsed.error();
      kb.k5 = std::move(parsed).value();
      applied = validate_k5(kb.k5, schema, outcome.repair_log);
      break;
    }
    case 6: {
      auto parsed = parse_k6(raw);
      if (!parsed.is_ok()) return parsed.error();
      kb.k6 = std::move(parsed).value();
      applied = validate_k6(kb.k6, schema, outcome.repair_log);
      break;
    }
  }
  if (!applied.is_ok()) return applied.error();

  kb.present[stage - 1] = true;
  StageProvenance prov;
  prov.stage = stage;
  prov.prompt_fingerprint = prompt_fp;
  prov.content_fingerprint = layer_fingerprint(kb, stage);
  prov.model_id = gateway.model_id();
  prov.timestamp = utc_timestamp();
  kb.provenance[stage - 1] = std::move(prov);
  return outcome;
}

struct BuildOutcome {
  KnowledgeBase kb;
  std::vector<std::string> log;
  int stages_run = 0;
  int stages_skipped = 0;
};

// Full build with per-stage persistence. With `resume_from`, stages whose
// prompt fingerprints still match are kept; a stage whose inputs changed
// re-runs, which transitively invalidates dependents through their own
// fingerprints.
inline Result<BuildOutcome> build(const db::DatabaseSchema& schema,
                                  const db::InstanceSample& sample,
                                  llm::Gateway& gateway,
                                  const KbStore* store = nullptr,
                                  const KnowledgeBase* resume_from = nullptr) {
  BuildOutcome outcome;
  KnowledgeBase resume;
  if (resume_from) resume = *resume_from;
  for (int stage = 1; stage <= 6; ++stage) {
    bool skippable = false;
    if (resume_from && resume.has_layer(stage) &&
        resume.provenance[stage - 1].has_value()) {
      llm::ChatRequest req =
          stage_request(stage, schema, sample, outcome.kb);
      std::string fp = hex64(llm::request_fingerprint(req));
      if (fp == resume.provenance[stage - 1]->prompt_fingerprint)
        skippable = true;
    }
    if (skippable) {
      Status copied = KbStore::apply_layer(
          outcome.kb, stage, serialize_layer(resume, stage));
      if (!copied.is_ok()) return copied.error();
      outcome.kb.present[stage - 1] = true;
      outcome.kb.provenance[stage - 1] = resume.provenance[stage - 1];
      ++outcome.stages_skipped;
      outcome.log.push_back("stage " + std::to_string(stage) +
                            ": reused (unchanged inputs)");
      continue;
    }
    auto result = run_stage(stage, schema, sample, outcome.kb, gateway);
    if (!result.is_ok()) {
      if (store) {
        store->save(outcome.kb, schema.db_name);  // keep the partial build
      }
      Error err = result.error();
      err.message = "stage " + std::to_string(stage) + ": " + err.message;
      return err;
    }
    ++outcome.stages_run;
    for (const auto& note : result.value().repair_log)
      outcome.log.push_back(note);
    if (store) {
      Status saved = store->save_layer(outcome.kb, stage);
      if (!saved.is_ok()) return saved.error();
      saved = store->save_manifest(outcome.kb, schema.db_name);
      if (!saved.is_ok()) return saved.error();
    }
  }
  Status closure = check_closure(outcome.kb);
  if (!closure.is_ok()) return closure.error();
  if (store) {
    Status saved = store->save(outcome.kb, schema.db_name);
    if (!saved.is_ok()) return saved.error();
  }
  return outcome;
}

}  // namespace sqlsynth::kb
