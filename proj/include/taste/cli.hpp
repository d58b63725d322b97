#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "taste/backend.hpp"
#include "taste/corpus.hpp"
#include "taste/dataset.hpp"
#include "taste/detail/digest.hpp"
#include "taste/detail/io.hpp"
#include "taste/detail/rng.hpp"
#include "taste/error.hpp"
#include "taste/metrics.hpp"
#include "taste/pipeline.hpp"
#include "taste/prompt.hpp"
#include "taste/scorer.hpp"

namespace taste::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

inline constexpr std::string_view kPrecedence =
    "Config precedence: flags > environment > config file.";

struct BackendSection {
  std::string endpoint;
  std::string model;
  std::string mock_script;
  int max_new_tokens = 512;
  double temperature = 0.0;
  double top_p = 1.0;
  double timeout_seconds = 120.0;
  int max_retries = 3;
  std::size_t max_in_flight = 4;
};

struct ScorerSection {
  std::string kind = "lexical"; // lexical | remote
  std::string endpoint;
  double timeout_seconds = 300.0;
  std::size_t batch_size = 64;
};

struct BuildDataSection {
  std::string task = "all"; // all | basic | qp | dr
  std::string parallel;
  std::string candidates;
  std::string out_dir = "taste-data";
  std::vector<std::size_t> quota_qp{30000, 30000, 30000};
  std::vector<std::size_t> quota_dr{8000, 8000, 4000};
  bool allow_undersample = false;
};

struct TranslateSection {
  std::string mode = "taste"; // taste | baseline
  std::string override_labels = "none";
  std::string input;
  std::string base;
  std::string output = "records.jsonl";
};

struct EvaluateSection {
  std::string run;
  std::string references;
  std::string hypothesis = "refined"; // refined | draft
  std::string alignments;
  std::string gold_labels;
  std::string gold_scores;
  std::vector<std::string> sections;
  std::string output = "report.json";
};

/// Fully resolved configuration of one invocation. Its JSON form is the
/// config-file schema, and manifests embed it under "config".
struct RunConfig {
  std::string src_lang;
  std::string tgt_lang;
  std::string quality_mode = "tc"; // tc | qe | both
  std::uint64_t seed = 1;
  BackendSection backend;
  ScorerSection scorer;
  BuildDataSection build_data;
  TranslateSection translate;
  EvaluateSection evaluate;
  // Never serialized.
  std::string api_key;
};

inline ordered_json to_json(const RunConfig &c) {
  ordered_json j;
  j["src_lang"] = c.src_lang;
  j["tgt_lang"] = c.tgt_lang;
  j["quality_mode"] = c.quality_mode;
  j["seed"] = c.seed;
  j["backend"] = {{"endpoint", c.backend.endpoint},
                  {"model", c.backend.model},
                  {"mock_script", c.backend.mock_script},
                  {"max_new_tokens", c.backend.max_new_tokens},
                  {"temperature", c.backend.temperature},
                  {"top_p", c.backend.top_p},
                  {"timeout_seconds", c.backend.timeout_seconds},
                  {"max_retries", c.backend.max_retries},
                  {"max_in_flight", c.backend.max_in_flight}};
  j["scorer"] = {{"kind", c.scorer.kind},
                 {"endpoint", c.scorer.endpoint},
                 {"timeout_seconds", c.scorer.timeout_seconds},
                 {"batch_size", c.scorer.batch_size}};
  j["build_data"] = {{"task", c.build_data.task},
                     {"parallel", c.build_data.parallel},
                     {"candidates", c.build_data.candidates},
                     {"out_dir", c.build_data.out_dir},
                     {"quota_qp", c.build_data.quota_qp},
                     {"quota_dr", c.build_data.quota_dr},
                     {"allow_undersample", c.build_data.allow_undersample}};
  j["translate"] = {{"mode", c.translate.mode},
                    {"override", c.translate.override_labels},
                    {"input", c.translate.input},
                    {"base", c.translate.base},
                    {"output", c.translate.output}};
  j["evaluate"] = {{"run", c.evaluate.run},
                   {"references", c.evaluate.references},
                   {"hypothesis", c.evaluate.hypothesis},
                   {"alignments", c.evaluate.alignments},
                   {"gold_labels", c.evaluate.gold_labels},
                   {"gold_scores", c.evaluate.gold_scores},
                   {"sections", c.evaluate.sections},
                   {"output", c.evaluate.output}};
  return j;
}

inline RunConfig config_from_json(const json &j) {
  RunConfig c;
  try {
    c.src_lang = j.value("src_lang", c.src_lang);
    c.tgt_lang = j.value("tgt_lang", c.tgt_lang);
    c.quality_mode = j.value("quality_mode", c.quality_mode);
    c.seed = j.value("seed", c.seed);
    const auto b = j.value("backend", json::object());
    c.backend.endpoint = b.value("endpoint", c.backend.endpoint);
    c.backend.model = b.value("model", c.backend.model);
    c.backend.mock_script = b.value("mock_script", c.backend.mock_script);
    c.backend.max_new_tokens = b.value("max_new_tokens", c.backend.max_new_tokens);
    c.backend.temperature = b.value("temperature", c.backend.temperature);
    c.backend.top_p = b.value("top_p", c.backend.top_p);
    c.backend.timeout_seconds = b.value("timeout_seconds", c.backend.timeout_seconds);
    c.backend.max_retries = b.value("max_retries", c.backend.max_retries);
    c.backend.max_in_flight = b.value("max_in_flight", c.backend.max_in_flight);
    const auto s = j.value("scorer", json::object());
    c.scorer.kind = s.value("kind", c.scorer.kind);
    c.scorer.endpoint = s.value("endpoint", c.scorer.endpoint);
    c.scorer.timeout_seconds = s.value("timeout_seconds", c.scorer.timeout_seconds);
    c.scorer.batch_size = s.value("batch_size", c.scorer.batch_size);
    const auto d = j.value("build_data", json::object());
    c.build_data.task = d.value("task", c.build_data.task);
    c.build_data.parallel = d.value("parallel", c.build_data.parallel);
    c.build_data.candidates = d.value("candidates", c.build_data.candidates);
    c.build_data.out_dir = d.value("out_dir", c.build_data.out_dir);
    c.build_data.quota_qp = d.value("quota_qp", c.build_data.quota_qp);
    c.build_data.quota_dr = d.value("quota_dr", c.build_data.quota_dr);
    c.build_data.allow_undersample = d.value("allow_undersample", c.build_data.allow_undersample);
    const auto t = j.value("translate", json::object());
    c.translate.mode = t.value("mode", c.translate.mode);
    c.translate.override_labels = t.value("override", c.translate.override_labels);
    c.translate.input = t.value("input", c.translate.input);
    c.translate.base = t.value("base", c.translate.base);
    c.translate.output = t.value("output", c.translate.output);
    const auto e = j.value("evaluate", json::object());
    c.evaluate.run = e.value("run", c.evaluate.run);
    c.evaluate.references = e.value("references", c.evaluate.references);
    c.evaluate.hypothesis = e.value("hypothesis", c.evaluate.hypothesis);
    c.evaluate.alignments = e.value("alignments", c.evaluate.alignments);
    c.evaluate.gold_labels = e.value("gold_labels", c.evaluate.gold_labels);
    c.evaluate.gold_scores = e.value("gold_scores", c.evaluate.gold_scores);
    c.evaluate.sections = e.value("sections", c.evaluate.sections);
    c.evaluate.output = e.value("output", c.evaluate.output);
  } catch (const json::exception &ex) {
    throw Error(ErrorCode::ConfigError, std::string("invalid config: ") + ex.what());
  }
  return c;
}

using EnvLookup = std::function<std::optional<std::string>(const char *)>;

inline EnvLookup process_env() {
  return [](const char *name) -> std::optional<std::string> {
    if (const char *v = std::getenv(name); v && *v)
      return std::string(v);
    return std::nullopt;
  };
}

/// Environment overlay. TASTE_API_KEY is read separately and never stored.
inline json env_overlay(const EnvLookup &env) {
  json j = json::object();
  if (auto v = env("TASTE_ENDPOINT"))
    j["backend"]["endpoint"] = *v;
  if (auto v = env("TASTE_MODEL"))
    j["backend"]["model"] = *v;
  if (auto v = env("TASTE_SCORER"))
    j["scorer"]["kind"] = *v;
  if (auto v = env("TASTE_SCORER_URL"))
    j["scorer"]["endpoint"] = *v;
  return j;
}

/// Reads a config file. A run manifest is accepted too: its "config" member
/// is the resolved config of the run that wrote it.
inline json load_config_file(const fs::path &path) {
  if (!fs::exists(path))
    throw Error(ErrorCode::IoError, "config file not found: " + path.string());
  auto in = detail::open_input(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error &e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  if (j.is_object() && j.contains("config") && j.value("tool", "") == "taste")
    return j["config"];
  return j;
}

/// defaults <- file <- env <- flags.
inline RunConfig resolve_config(const std::optional<fs::path> &config_file,
                                const json &flags, const EnvLookup &env) {
  json merged = to_json(RunConfig{});
  if (config_file)
    merged.merge_patch(load_config_file(*config_file));
  merged.merge_patch(env_overlay(env));
  merged.merge_patch(flags);
  auto cfg = config_from_json(merged);
  cfg.api_key = env("TASTE_API_KEY").value_or("");
  return cfg;
}

// ---------------------------------------------------------------------------

namespace detail_cli {

inline void require_file(const std::string &path, std::string_view flag) {
  if (path.empty())
    throw Error(ErrorCode::ConfigError, "missing required input " + std::string(flag));
  if (!fs::exists(path))
    throw Error(ErrorCode::IoError, "input file not found: " + path + " (" + std::string(flag) + ")");
}

inline int report(const Error &e, std::ostream &err) {
  err << "error: " << e.what() << '\n';
  switch (e.code()) {
  case ErrorCode::ConfigError:
  case ErrorCode::IoError:
  case ErrorCode::LengthMismatch:
  case ErrorCode::InvalidOverride:
  case ErrorCode::UnknownLanguage:
  case ErrorCode::EmptyPair:
    return kExitUsage;
  default:
    return kExitFailure;
  }
}

inline TierQuota quota_from(const std::vector<std::size_t> &v, std::string_view name) {
  if (v.size() == 1)
    return {v[0], v[0], v[0]};
  if (v.size() == 3)
    return {v[0], v[1], v[2]};
  throw Error(ErrorCode::ConfigError,
              std::string(name) + " takes one count or three (Good,Medium,Bad)");
}

inline std::vector<QualityMode> modes_of(const std::string &mode, bool allow_both) {
  if (mode == "both" && allow_both)
    return {QualityMode::TC, QualityMode::QE};
  if (auto m = quality_mode_from_string(mode))
    return {*m};
  throw Error(ErrorCode::ConfigError, "quality mode must be tc or qe" +
                                          std::string(allow_both ? " or both" : ""));
}

inline ordered_json base_manifest(std::string_view command, const RunConfig &cfg) {
  ordered_json m;
  m["tool"] = "taste";
  m["command"] = std::string(command);
  m["config"] = to_json(cfg);
  return m;
}

inline void write_json(const fs::path &path, const ordered_json &j) {
  detail::write_text(path, j.dump(2, ' ', false, json::error_handler_t::replace) + "\n");
}

inline std::unique_ptr<Backend> make_backend(const RunConfig &cfg) {
  if (!cfg.backend.mock_script.empty()) {
    require_file(cfg.backend.mock_script, "--mock");
    return mock_from_script(fs::path(cfg.backend.mock_script), cfg.backend.max_in_flight);
  }
  if (cfg.backend.endpoint.empty())
    throw Error(ErrorCode::ConfigError, "no backend: set --endpoint or --mock");
  BackendConfig bc;
  bc.endpoint = cfg.backend.endpoint;
  bc.model = cfg.backend.model;
  bc.decoding = {cfg.backend.max_new_tokens, cfg.backend.temperature, cfg.backend.top_p};
  bc.timeout_seconds = cfg.backend.timeout_seconds;
  bc.max_retries = cfg.backend.max_retries;
  bc.max_in_flight = cfg.backend.max_in_flight;
  bc.api_key = cfg.api_key;
  return std::make_unique<HttpBackend>(bc);
}

inline std::unique_ptr<Scorer> make_configured_scorer(const RunConfig &cfg) {
  ScorerKind kind;
  if (cfg.scorer.kind == "remote") {
    if (cfg.scorer.endpoint.empty())
      throw Error(ErrorCode::ConfigError, "remote scorer needs --scorer-url or TASTE_SCORER_URL");
    kind.type = ScorerKind::Type::RemoteNeural;
    kind.remote.endpoint = cfg.scorer.endpoint;
    kind.remote.timeout_seconds = cfg.scorer.timeout_seconds;
    kind.remote.batch_size = cfg.scorer.batch_size;
  } else if (cfg.scorer.kind != "lexical") {
    throw Error(ErrorCode::ConfigError, "scorer kind must be lexical or remote");
  }
  return make_scorer(kind);
}

inline std::size_t count_failed(const std::vector<ReflectionRecord> &records) {
  std::size_t n = 0;
  for (const auto &r : records)
    n += r.ok() ? 0 : 1;
  return n;
}

inline int finish_run(std::string_view command, const RunConfig &cfg,
                      const std::vector<ReflectionRecord> &records, const Backend &backend,
                      const ordered_json &inputs, std::ostream &out) {
  {
    auto f = detail::open_output(cfg.translate.output);
    write_records(records, f);
    if (!f)
      throw Error(ErrorCode::IoError, "write failed for " + cfg.translate.output);
  }
  const auto failed = count_failed(records);
  auto m = base_manifest(command, cfg);
  m["backend"] = backend.identity();
  m["inputs"] = inputs;
  m["outputs"] = {{cfg.translate.output, detail::sha256_file(cfg.translate.output)}};
  m["counters"] = {{"records", records.size()}, {"failed", failed}};
  write_json(cfg.translate.output + ".manifest.json", m);
  out << ordered_json{{"records", records.size()}, {"failed", failed},
                      {"output", cfg.translate.output}}
             .dump()
      << '\n';
  return kExitOk;
}

} // namespace detail_cli

/// Ingests corpora, tiers candidates, builds the requested datasets, and
/// writes them with a manifest into build_data.out_dir.
inline int cmd_build_data(const RunConfig &cfg, std::ostream &out = std::cout,
                          std::ostream &err = std::cerr) {
  using namespace detail_cli;
  try {
    const auto &bd = cfg.build_data;
    const bool want_basic = bd.task == "all" || bd.task == "basic";
    const bool want_qp = bd.task == "all" || bd.task == "qp";
    const bool want_dr = bd.task == "all" || bd.task == "dr";
    if (!want_basic && !want_qp && !want_dr)
      throw Error(ErrorCode::ConfigError, "task must be all, basic, qp or dr");
    const auto modes = modes_of(cfg.quality_mode, true);
    if (want_basic)
      require_file(bd.parallel, "--parallel");
    if (want_qp || want_dr)
      require_file(bd.candidates, "--candidates");

    QuotaConfig quota;
    quota.qp_per_tier = quota_from(bd.quota_qp, "quota_qp");
    quota.dr_per_tier = quota_from(bd.quota_dr, "quota_dr");
    quota.seed = cfg.seed;
    quota.allow_undersample = bd.allow_undersample;

    ordered_json inputs = ordered_json::object();
    ordered_json outputs = ordered_json::object();
    ordered_json counters = ordered_json::object();

    // Everything is built before the first file is written.
    std::vector<std::pair<std::string, std::vector<SftInstance>>> built;
    auto emit = [&](std::vector<SftInstance> instances, const std::string &name) {
      built.emplace_back(name, std::move(instances));
    };

    if (want_basic) {
      inputs[bd.parallel] = detail::sha256_file(bd.parallel);
      emit(build_basic_translation(ingest_parallel(fs::path(bd.parallel))),
           std::string(to_string(TaskKind::BasicTranslation)));
    }
    if (want_qp || want_dr) {
      inputs[bd.candidates] = detail::sha256_file(bd.candidates);
      const auto pools = ingest_candidates(fs::path(bd.candidates));
      const auto tiers = assign_tiers(pools);
      counters["tiers"] = {{"Good", tiers.count(QualityTier::Good)},
                           {"Medium", tiers.count(QualityTier::Medium)},
                           {"Bad", tiers.count(QualityTier::Bad)}};
      for (auto mode : modes) {
        if (want_qp) {
          auto r = build_quality_prediction(pools, tiers, mode, quota);
          const auto name = std::string(to_string(quality_prediction_task(mode)));
          counters[name] = {{"undersampled_tiers", r.undersampled_tiers}};
          emit(std::move(r.instances), name);
        }
        if (want_dr) {
          auto r = build_draft_refinement(pools, tiers, mode, quota);
          const auto name = std::string(to_string(draft_refinement_task(mode)));
          counters[name] = {{"undersampled_tiers", r.undersampled_tiers},
                            {"skipped_pools", r.skipped_pools}};
          emit(std::move(r.instances), name);
        }
      }
    }

    fs::create_directories(bd.out_dir);
    for (const auto &[name, instances] : built) {
      const auto path = fs::path(bd.out_dir) / (name + ".jsonl");
      const auto n = emit_jsonl(instances, path);
      outputs[name + ".jsonl"] = {{"instances", n}, {"sha256", detail::sha256_file(path)}};
    }

    auto m = base_manifest("build-data", cfg);
    m["rng"] = std::string(detail::kRngAlgorithm);
    m["seed"] = cfg.seed;
    m["quotas"] = {{"qp", bd.quota_qp}, {"dr", bd.quota_dr}};
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["counters"] = counters;
    write_json(fs::path(bd.out_dir) / "manifest.json", m);
    out << outputs.dump() << '\n';
    return kExitOk;
  } catch (const Error &e) {
    return report(e, err);
  } catch (const std::exception &e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

/// Two-stage reflection (mode "taste") or single-stage baseline.
inline int cmd_translate(const RunConfig &cfg, std::ostream &out = std::cout,
                         std::ostream &err = std::cerr) {
  using namespace detail_cli;
  try {
    require_file(cfg.translate.input, "--input");
    const auto pair = language_pair_from_codes(cfg.src_lang, cfg.tgt_lang);
    const auto sources = detail::read_lines(cfg.translate.input);
    const auto backend = make_backend(cfg);
    ordered_json inputs = {{cfg.translate.input, detail::sha256_file(cfg.translate.input)}};

    std::vector<ReflectionRecord> records;
    if (cfg.translate.mode == "baseline") {
      records = baseline_translate(sources, pair, *backend);
    } else if (cfg.translate.mode == "taste") {
      const auto mode = modes_of(cfg.quality_mode, false).front();
      const auto ov = LabelOverride::parse(cfg.translate.override_labels, cfg.seed);
      records = reflect(sources, pair, mode, ov, *backend);
    } else {
      throw Error(ErrorCode::ConfigError, "translate mode must be taste or baseline");
    }
    const int rc = finish_run("translate", cfg, records, *backend, inputs, out);
    if (const auto failed = count_failed(records))
      err << "warning: " << failed << " record(s) failed\n";
    return rc;
  } catch (const Error &e) {
    return report(e, err);
  } catch (const std::exception &e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

/// Post-editing of externally produced translations.
inline int cmd_ape(const RunConfig &cfg, std::ostream &out = std::cout,
                   std::ostream &err = std::cerr) {
  using namespace detail_cli;
  try {
    require_file(cfg.translate.input, "--input");
    require_file(cfg.translate.base, "--base");
    const auto pair = language_pair_from_codes(cfg.src_lang, cfg.tgt_lang);
    const auto sources = detail::read_lines(cfg.translate.input);
    const auto bases = detail::read_lines(cfg.translate.base);
    if (sources.size() != bases.size())
      throw Error(ErrorCode::LengthMismatch,
                  std::to_string(sources.size()) + " sources but " +
                      std::to_string(bases.size()) + " base translations");
    const auto backend = make_backend(cfg);
    const auto mode = modes_of(cfg.quality_mode, false).front();
    const auto ov = LabelOverride::parse(cfg.translate.override_labels, cfg.seed);
    const auto records = ape(sources, bases, pair, mode, *backend, ov);
    ordered_json inputs = {{cfg.translate.input, detail::sha256_file(cfg.translate.input)},
                           {cfg.translate.base, detail::sha256_file(cfg.translate.base)}};
    const int rc = finish_run("ape", cfg, records, *backend, inputs, out);
    if (const auto failed = count_failed(records))
      err << "warning: " << failed << " record(s) failed\n";
    return rc;
  } catch (const Error &e) {
    return report(e, err);
  } catch (const std::exception &e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

/// Computes the requested report sections over a run's records.
inline int cmd_evaluate(const RunConfig &cfg, std::ostream &out = std::cout,
                        std::ostream &err = std::cerr) {
  using namespace detail_cli;
  try {
    const auto &ev = cfg.evaluate;
    auto wants = [&](std::string_view s) {
      return std::find(ev.sections.begin(), ev.sections.end(), s) != ev.sections.end();
    };
    for (const auto &s : ev.sections)
      if (s != "bleu" && s != "edit-dist" && s != "labels" && s != "pearson" &&
          s != "utw" && s != "delta")
        throw Error(ErrorCode::ConfigError, "unknown evaluate section '" + s + "'");
    if (ev.sections.empty())
      throw Error(ErrorCode::ConfigError,
                  "no sections requested (--bleu --edit-dist --labels --pearson --utw --delta)");
    if (ev.hypothesis != "refined" && ev.hypothesis != "draft")
      throw Error(ErrorCode::ConfigError, "hypothesis must be refined or draft");

    // Gate every section on its inputs before doing any work.
    require_file(ev.run, "--run");
    if (wants("bleu") || wants("delta"))
      require_file(ev.references, "--refs");
    if (wants("utw"))
      require_file(ev.alignments, "--alignments");
    if (wants("pearson"))
      require_file(ev.gold_scores, "--gold-scores");
    if (wants("labels")) {
      if (ev.gold_labels.empty() && ev.gold_scores.empty())
        throw Error(ErrorCode::ConfigError, "--labels needs --gold-labels or --gold-scores");
      require_file(ev.gold_labels.empty() ? ev.gold_scores : ev.gold_labels,
                   ev.gold_labels.empty() ? "--gold-scores" : "--gold-labels");
    }

    auto in = detail::open_input(ev.run);
    const auto records = read_records(in);
    const auto digest = [](const std::string &p) { return detail::sha256_file(p); };
    const ordered_json run_digest = {{ev.run, digest(ev.run)}};

    auto hypothesis_of = [&](const ReflectionRecord &r) -> std::string {
      if (ev.hypothesis == "refined" && r.refined)
        return *r.refined;
      return r.draft;
    };

    auto read_numbers = [](const std::string &path) {
      std::vector<double> v;
      for (const auto &line : detail::read_lines(path)) {
        try {
          v.push_back(std::stod(line));
        } catch (const std::exception &) {
          throw Error(ErrorCode::MalformedLine, path + ": not a number: '" + line + "'");
        }
      }
      return v;
    };

    EvalReport report_out;
    std::size_t skipped = 0;

    if (wants("bleu")) {
      const auto refs = detail::read_lines(ev.references);
      std::vector<std::string> hyps;
      for (const auto &r : records)
        hyps.push_back(hypothesis_of(r));
      report_out.bleu = corpus_bleu(hyps, refs);
      auto inputs = run_digest;
      inputs[ev.references] = digest(ev.references);
      report_out.inputs["bleu"] = inputs;
    }

    if (wants("edit-dist")) {
      std::vector<std::pair<std::string, std::string>> pairs;
      for (const auto &r : records)
        if (r.ok() && r.refined && !r.draft.empty())
          pairs.emplace_back(r.draft, *r.refined);
      report_out.edit_distance = avg_edit_distance(pairs);
      report_out.inputs["edit_distance"] = run_digest;
    }

    if (wants("labels")) {
      std::vector<Label> gold;
      auto inputs = run_digest;
      if (!ev.gold_labels.empty()) {
        for (const auto &line : detail::read_lines(ev.gold_labels)) {
          auto l = label_from_string(detail::trim(line));
          if (!l)
            throw Error(ErrorCode::UnknownLabel, ev.gold_labels + ": '" + line + "'");
          gold.push_back(*l);
        }
        inputs[ev.gold_labels] = digest(ev.gold_labels);
      } else {
        gold = assign_tiers_by_score(read_numbers(ev.gold_scores));
        inputs[ev.gold_scores] = digest(ev.gold_scores);
      }
      if (gold.size() != records.size())
        throw Error(ErrorCode::LengthMismatch, "gold labels and records differ in length");
      ConfusionMatrix3 m;
      for (std::size_t i = 0; i < records.size(); ++i) {
        const auto &q = records[i].quality;
        if (!q || q->mode() != QualityMode::TC) {
          ++skipped;
          continue;
        }
        m.add(gold[records[i].id], q->label_value());
      }
      report_out.labels = classification_metrics(m);
      report_out.inputs["labels"] = inputs;
    }

    if (wants("pearson")) {
      const auto gold = read_numbers(ev.gold_scores);
      if (gold.size() != records.size())
        throw Error(ErrorCode::LengthMismatch, "gold scores and records differ in length");
      std::vector<double> xs, ys;
      for (const auto &r : records) {
        if (!r.quality || r.quality->mode() != QualityMode::QE)
          continue;
        xs.push_back(r.quality->score_value());
        ys.push_back(gold[r.id]);
      }
      report_out.pearson = PearsonResult{pearson_r(xs, ys), xs.size()};
      auto inputs = run_digest;
      inputs[ev.gold_scores] = digest(ev.gold_scores);
      report_out.inputs["pearson"] = inputs;
    }

    if (wants("utw")) {
      std::vector<AlignmentSet> alignments;
      std::size_t lineno = 0;
      for (const auto &line : detail::read_lines(ev.alignments)) {
        ++lineno;
        try {
          alignments.push_back(parse_pharaoh_line(line));
        } catch (Error &e) {
          throw e.with_line(lineno);
        }
      }
      std::vector<std::vector<std::string>> tokens;
      for (const auto &r : records)
        tokens.push_back(detail::split_ascii_whitespace(hypothesis_of(r)));
      report_out.utw = utw_rate(tokens, alignments);
      auto inputs = run_digest;
      inputs[ev.alignments] = digest(ev.alignments);
      report_out.inputs["utw"] = inputs;
    }

    if (wants("delta")) {
      const auto refs = detail::read_lines(ev.references);
      auto scorer = make_configured_scorer(cfg);
      report_out.scorer_kind = scorer->kind();
      report_out.delta = delta_by_label(records, refs, *scorer);
      auto inputs = run_digest;
      inputs[ev.references] = digest(ev.references);
      report_out.inputs["delta"] = inputs;
    }

    auto m = base_manifest("evaluate", cfg);
    m["report"] = to_json(report_out);
    if (skipped)
      m["skipped_records"] = skipped;
    write_json(ev.output, m);
    out << to_table(report_out);
    return kExitOk;
  } catch (const Error &e) {
    return report(e, err);
  } catch (const std::exception &e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

inline int run_command(std::string_view command, const RunConfig &cfg,
                       std::ostream &out = std::cout, std::ostream &err = std::cerr) {
  if (command == "build-data")
    return cmd_build_data(cfg, out, err);
  if (command == "translate")
    return cmd_translate(cfg, out, err);
  if (command == "ape")
    return cmd_ape(cfg, out, err);
  if (command == "evaluate")
    return cmd_evaluate(cfg, out, err);
  err << "error: unknown command '" << command << "'\n";
  return kExitUsage;
}

} // namespace taste::cli
