#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "taste/backend.hpp"
#include "taste/detail/rng.hpp"
#include "taste/detail/text.hpp"
#include "taste/error.hpp"
#include "taste/prompt.hpp"

namespace taste {

enum class OverrideKind { None, AllGood, AllBad, RandomSeeded, Blank };

/// Replaces the stage-1 assessment before refinement (label-role ablation).
struct LabelOverride {
  OverrideKind kind = OverrideKind::None;
  std::uint64_t seed = 0; // RandomSeeded only

  static LabelOverride none() { return {}; }
  static LabelOverride all_good() { return {OverrideKind::AllGood, 0}; }
  static LabelOverride all_bad() { return {OverrideKind::AllBad, 0}; }
  static LabelOverride random(std::uint64_t seed) {
    return {OverrideKind::RandomSeeded, seed};
  }
  static LabelOverride blank() { return {OverrideKind::Blank, 0}; }

  bool tc_only() const {
    return kind == OverrideKind::AllGood || kind == OverrideKind::AllBad ||
           kind == OverrideKind::RandomSeeded;
  }

  std::string name() const {
    switch (kind) {
    case OverrideKind::None: return "none";
    case OverrideKind::AllGood: return "good";
    case OverrideKind::AllBad: return "bad";
    case OverrideKind::RandomSeeded: return "random";
    case OverrideKind::Blank: return "blank";
    }
    return "none";
  }

  static LabelOverride parse(std::string_view name, std::uint64_t seed = 0) {
    if (name == "none") return none();
    if (name == "good") return all_good();
    if (name == "bad") return all_bad();
    if (name == "random") return random(seed);
    if (name == "blank") return blank();
    throw Error(ErrorCode::InvalidOverride,
                "unknown label override '" + std::string(name) + "'");
  }
};

/// Per-segment trace of a two-stage run.
struct ReflectionRecord {
  std::size_t id = 0;
  std::string source;
  std::string draft;                            // y
  std::optional<QualityAssessment> quality;      // q as predicted in stage 1
  std::optional<QualityAssessment> hint_quality; // token placed in the hint
  std::optional<std::string> refined;           // y'
  std::string stage1_prompt;                    // w
  std::string stage2_prompt;                    // w'
  std::string stage1_raw;
  double stage1_latency_ms = 0.0;
  double stage2_latency_ms = 0.0;
  std::optional<Error> error;

  bool ok() const { return !error.has_value(); }
};

namespace pipeline_detail {

inline Error wrap(ErrorCode code, std::string_view stage, const Error &cause) {
  return Error(code, std::string(stage) + ": " + cause.what())
      .with_status(cause.http_status())
      .with_attempts(cause.attempts());
}

inline bool is_transport(const Error &e) {
  return e.code() == ErrorCode::TransportError || e.code() == ErrorCode::Timeout;
}

// Runs `prompts[k]` for records[index[k]]; calls on_ok / on_fail per slot.
template <typename OnOk, typename OnFail>
void run_stage(const Backend &backend, const std::vector<RenderedPrompt> &prompts,
               const std::vector<std::size_t> &index, OnOk &&on_ok,
               OnFail &&on_fail) {
  const auto results = generate_batch(backend, prompts);
  for (std::size_t k = 0; k < results.size(); ++k) {
    if (results[k].ok())
      on_ok(index[k], results[k].value());
    else
      on_fail(index[k], results[k].error());
  }
}

inline void check_all_transport_failed(const std::vector<ReflectionRecord> &records,
                                       std::size_t attempted,
                                       std::size_t transport_failures) {
  if (attempted > 0 && transport_failures == attempted)
    throw Error(ErrorCode::BackendUnavailable,
                "every stage-1 request failed to reach the backend (" +
                    std::to_string(records.size()) + " records)");
}

inline void validate_override(const LabelOverride &ov, QualityMode mode) {
  if (ov.tc_only() && mode != QualityMode::TC)
    throw Error(ErrorCode::InvalidOverride,
                "override '" + ov.name() + "' requires TC mode");
}

/// Applies the override to each parsed record and runs refinement.
inline void refine_stage(std::vector<ReflectionRecord> &records,
                         const LanguagePair &pair, QualityMode mode,
                         const LabelOverride &ov, const Backend &backend) {
  detail::SeededRng rng(ov.seed);
  std::vector<RenderedPrompt> prompts;
  std::vector<std::size_t> index;
  for (auto &rec : records) {
    // One draw per record, failed or not, keeps the label sequence stable.
    std::optional<Label> random_label;
    if (ov.kind == OverrideKind::RandomSeeded)
      random_label = kAllLabels[rng.below(kAllLabels.size())];
    if (!rec.ok())
      continue;

    switch (ov.kind) {
    case OverrideKind::None: rec.hint_quality = rec.quality; break;
    case OverrideKind::AllGood: rec.hint_quality = QualityAssessment::label(Label::Good); break;
    case OverrideKind::AllBad: rec.hint_quality = QualityAssessment::label(Label::Bad); break;
    case OverrideKind::RandomSeeded: rec.hint_quality = QualityAssessment::label(*random_label); break;
    case OverrideKind::Blank: rec.hint_quality.reset(); break;
    }
    try {
      auto p = render_draft_refinement(pair, rec.source, rec.draft, mode, rec.hint_quality);
      rec.stage2_prompt = p.text;
      prompts.push_back(std::move(p));
      index.push_back(rec.id);
    } catch (const Error &e) {
      rec.error = wrap(ErrorCode::Stage2Error, "stage 2", e);
    }
  }

  run_stage(
      backend, prompts, index,
      [&](std::size_t i, const GenerationResult &r) {
        records[i].stage2_latency_ms = r.latency_ms;
        try {
          records[i].refined = parse_refined_output(r.text);
        } catch (const Error &e) {
          records[i].error = wrap(ErrorCode::Stage2Error, "stage 2", e);
        }
      },
      [&](std::size_t i, const Error &e) {
        records[i].error = wrap(ErrorCode::Stage2Error, "stage 2", e);
      });
}

inline std::vector<ReflectionRecord> seed_records(const std::vector<std::string> &sources) {
  std::vector<ReflectionRecord> records(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    records[i].id = i;
    records[i].source = sources[i];
  }
  return records;
}

} // namespace pipeline_detail

/// Two-stage self-reflective translation: stage 1 drafts and assesses,
/// stage 2 refines the draft given its (possibly overridden) assessment.
/// Stage 1 runs for all items before any stage 2 request is issued.
inline std::vector<ReflectionRecord>
reflect(const std::vector<std::string> &sources, const LanguagePair &pair,
        QualityMode mode, const LabelOverride &ov, const Backend &backend) {
  using namespace pipeline_detail;
  pair.validate();
  validate_override(ov, mode);
  auto records = seed_records(sources);

  std::vector<RenderedPrompt> prompts;
  std::vector<std::size_t> index;
  for (auto &rec : records) {
    try {
      auto p = render_quality_prediction(pair, rec.source, mode);
      rec.stage1_prompt = p.text;
      prompts.push_back(std::move(p));
      index.push_back(rec.id);
    } catch (const Error &e) {
      rec.error = e;
    }
  }

  std::size_t transport_failures = 0;
  run_stage(
      backend, prompts, index,
      [&](std::size_t i, const GenerationResult &r) {
        auto &rec = records[i];
        rec.stage1_raw = r.text;
        rec.stage1_latency_ms = r.latency_ms;
        try {
          auto parsed = parse_stage1_output(r.text, mode);
          rec.draft = std::string(detail::trim(parsed.draft));
          if (rec.draft.empty())
            throw Error(ErrorCode::EmptyDraft, "stage-1 draft is empty");
          rec.quality = parsed.quality;
        } catch (const Error &e) {
          rec.error = wrap(ErrorCode::Stage1ParseError, "stage 1", e);
        }
      },
      [&](std::size_t i, const Error &e) {
        transport_failures += is_transport(e) ? 1 : 0;
        records[i].error = e;
      });
  check_all_transport_failed(records, prompts.size(), transport_failures);

  refine_stage(records, pair, mode, ov, backend);
  return records;
}

/// Automatic post-editing: an external base translation is appended to the
/// stage-1 prompt, the model answers only with the quality token, and
/// refinement proceeds as in reflect().
inline std::vector<ReflectionRecord>
ape(const std::vector<std::string> &sources, const std::vector<std::string> &bases,
    const LanguagePair &pair, QualityMode mode, const Backend &backend,
    const LabelOverride &ov = LabelOverride::none()) {
  using namespace pipeline_detail;
  if (sources.size() != bases.size())
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(sources.size()) + " sources but " +
                    std::to_string(bases.size()) + " base translations");
  pair.validate();
  validate_override(ov, mode);
  auto records = seed_records(sources);

  std::vector<RenderedPrompt> prompts;
  std::vector<std::size_t> index;
  for (auto &rec : records) {
    try {
      if (detail::trim(bases[rec.id]).empty())
        throw Error(ErrorCode::EmptyDraft,
                    "base translation " + std::to_string(rec.id) + " is empty");
      auto p = render_quality_prediction(pair, rec.source, mode);
      p.text += bases[rec.id];
      rec.stage1_prompt = p.text;
      rec.draft = bases[rec.id];
      prompts.push_back(std::move(p));
      index.push_back(rec.id);
    } catch (const Error &e) {
      rec.error = e;
    }
  }

  std::size_t transport_failures = 0;
  run_stage(
      backend, prompts, index,
      [&](std::size_t i, const GenerationResult &r) {
        auto &rec = records[i];
        rec.stage1_raw = r.text;
        rec.stage1_latency_ms = r.latency_ms;
        try {
          rec.quality = parse_quality_token(r.text, mode);
        } catch (const Error &e) {
          rec.error = wrap(ErrorCode::Stage1ParseError, "stage 1", e);
        }
      },
      [&](std::size_t i, const Error &e) {
        transport_failures += is_transport(e) ? 1 : 0;
        records[i].error = e;
      });
  check_all_transport_failed(records, prompts.size(), transport_failures);

  refine_stage(records, pair, mode, ov, backend);
  return records;
}

/// Single-stage comparator: Basic Translation prompt, output trimmed.
/// Records carry only the draft.
inline std::vector<ReflectionRecord>
baseline_translate(const std::vector<std::string> &sources, const LanguagePair &pair,
                   const Backend &backend) {
  using namespace pipeline_detail;
  pair.validate();
  auto records = seed_records(sources);

  std::vector<RenderedPrompt> prompts;
  std::vector<std::size_t> index;
  for (auto &rec : records) {
    try {
      auto p = render_basic_translation(pair, rec.source);
      rec.stage1_prompt = p.text;
      prompts.push_back(std::move(p));
      index.push_back(rec.id);
    } catch (const Error &e) {
      rec.error = e;
    }
  }
  run_stage(
      backend, prompts, index,
      [&](std::size_t i, const GenerationResult &r) {
        records[i].stage1_raw = r.text;
        records[i].stage1_latency_ms = r.latency_ms;
        try {
          records[i].draft = parse_refined_output(r.text);
        } catch (const Error &e) {
          records[i].error = e;
        }
      },
      [&](std::size_t i, const Error &e) { records[i].error = e; });
  return records;
}

// ---------------------------------------------------------------------------
// Run output JSONL

inline nlohmann::ordered_json quality_to_json(const std::optional<QualityAssessment> &q) {
  if (!q)
    return nullptr;
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(q->mode()));
  if (q->mode() == QualityMode::TC)
    j["value"] = std::string(to_string(q->label_value()));
  else
    j["value"] = q->score_value();
  return j;
}

inline std::optional<QualityAssessment> quality_from_json(const nlohmann::json &j) {
  if (j.is_null())
    return std::nullopt;
  const auto mode = quality_mode_from_string(j.at("kind").get<std::string>());
  if (!mode)
    throw Error(ErrorCode::MalformedLine, "unknown quality kind");
  if (*mode == QualityMode::TC) {
    const auto label = label_from_string(j.at("value").get<std::string>());
    if (!label)
      throw Error(ErrorCode::UnknownLabel, "unknown label in record");
    return QualityAssessment::label(*label);
  }
  return QualityAssessment::score(j.at("value").get<int>());
}

/// Latencies are deliberately absent so that equal runs give equal bytes.
inline nlohmann::ordered_json to_json(const ReflectionRecord &rec) {
  nlohmann::ordered_json j;
  j["id"] = rec.id;
  j["source"] = rec.source;
  j["draft"] = rec.draft.empty() ? nlohmann::ordered_json(nullptr)
                                 : nlohmann::ordered_json(rec.draft);
  j["quality"] = quality_to_json(rec.quality);
  j["refined"] = rec.refined ? nlohmann::ordered_json(*rec.refined)
                             : nlohmann::ordered_json(nullptr);
  if (rec.error) {
    j["error"] = {{"code", std::string(to_string(rec.error->code()))},
                  {"message", rec.error->what()}};
  } else {
    j["error"] = nullptr;
  }
  j["hint_quality"] = quality_to_json(rec.hint_quality);
  j["stage1_prompt"] = rec.stage1_prompt;
  j["stage2_prompt"] = rec.stage2_prompt;
  j["stage1_raw"] = rec.stage1_raw;
  return j;
}

/// Rebuilds a record from its JSONL form (latencies are not stored).
inline ReflectionRecord record_from_json(const nlohmann::json &j) {
  ReflectionRecord rec;
  rec.id = j.at("id").get<std::size_t>();
  rec.source = j.value("source", "");
  if (j.contains("draft") && j["draft"].is_string())
    rec.draft = j["draft"].get<std::string>();
  if (j.contains("quality"))
    rec.quality = quality_from_json(j["quality"]);
  if (j.contains("hint_quality"))
    rec.hint_quality = quality_from_json(j["hint_quality"]);
  if (j.contains("refined") && j["refined"].is_string())
    rec.refined = j["refined"].get<std::string>();
  if (j.contains("error") && j["error"].is_object()) {
    const auto name = j["error"].value("code", "");
    auto message = j["error"].value("message", "failed record");
    if (message.rfind(name + ": ", 0) == 0)
      message.erase(0, name.size() + 2);
    rec.error = Error(error_code_from_string(name).value_or(ErrorCode::Stage2Error), message);
  }
  rec.stage1_prompt = j.value("stage1_prompt", "");
  rec.stage2_prompt = j.value("stage2_prompt", "");
  rec.stage1_raw = j.value("stage1_raw", "");
  return rec;
}

inline void write_records(const std::vector<ReflectionRecord> &records, std::ostream &out) {
  for (const auto &rec : records)
    out << to_json(rec).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace)
        << '\n';
}

inline std::vector<ReflectionRecord> read_records(std::istream &in) {
  std::vector<ReflectionRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty())
      continue;
    try {
      records.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception &e) {
      throw Error(ErrorCode::MalformedLine,
                  "record line " + std::to_string(lineno) + ": " + e.what())
          .with_line(lineno);
    }
  }
  return records;
}

} // namespace taste
