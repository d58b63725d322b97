// Command-line entry point. Options are collected into a JSON overlay that
// is merged over the config file and environment (see taste/cli.hpp).

#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "taste/cli.hpp"

namespace {

using nlohmann::json;

// A string option that is only written to the overlay when given.
struct Opt {
  std::string value;
  CLI::Option *opt = nullptr;
  bool given() const { return opt && opt->count() > 0; }
};

std::vector<std::size_t> parse_quota(const std::string &text, const char *flag) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(part, &pos);
      if (pos != part.size())
        throw std::invalid_argument(part);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception &) {
      throw taste::Error(taste::ErrorCode::ConfigError,
                         std::string(flag) + " expects N or G,M,B, got '" + text + "'");
    }
  }
  if (out.size() != 1 && out.size() != 3)
    throw taste::Error(taste::ErrorCode::ConfigError,
                       std::string(flag) + " expects N or G,M,B, got '" + text + "'");
  if (out.size() == 1)
    out = {out[0], out[0], out[0]};
  return out;
}

struct Common {
  Opt config, src, tgt, seed;
  Opt endpoint, model, mock, max_new_tokens, temperature, top_p, timeout, retries,
      concurrency;
  Opt scorer, scorer_url;
  bool tc = false, qe = false, both = false;
  CLI::Option *tc_opt = nullptr, *qe_opt = nullptr, *both_opt = nullptr;
};

void add_common(CLI::App &sub, Common &c, bool allow_both) {
  c.config.opt = sub.add_option("--config", c.config.value,
                                "JSON config file or a previous run manifest");
  c.src.opt = sub.add_option("--src", c.src.value, "Source language code (e.g. zh)");
  c.tgt.opt = sub.add_option("--tgt", c.tgt.value, "Target language code (e.g. en)");
  c.seed.opt = sub.add_option("--seed", c.seed.value, "RNG seed");
  c.tc_opt = sub.add_flag("--tc", c.tc, "Quality as Good/Medium/Bad labels");
  c.qe_opt = sub.add_flag("--qe", c.qe, "Quality as 0-100 scores");
  if (allow_both)
    c.both_opt = sub.add_flag("--both", c.both, "Build TC and QE datasets");

  c.endpoint.opt = sub.add_option("--endpoint", c.endpoint.value,
                                  "Chat-completions URL (env TASTE_ENDPOINT)");
  c.model.opt = sub.add_option("--model", c.model.value, "Model name (env TASTE_MODEL)");
  c.mock.opt = sub.add_option("--mock", c.mock.value, "Scripted mock backend rules (JSONL)");
  c.max_new_tokens.opt = sub.add_option("--max-new-tokens", c.max_new_tokens.value);
  c.temperature.opt = sub.add_option("--temperature", c.temperature.value);
  c.top_p.opt = sub.add_option("--top-p", c.top_p.value);
  c.timeout.opt = sub.add_option("--timeout", c.timeout.value, "Request timeout in seconds");
  c.retries.opt = sub.add_option("--max-retries", c.retries.value);
  c.concurrency.opt = sub.add_option("--concurrency", c.concurrency.value,
                                     "Maximum requests in flight");
  c.scorer.opt = sub.add_option("--scorer", c.scorer.value,
                                "lexical or remote (env TASTE_SCORER)");
  c.scorer_url.opt = sub.add_option("--scorer-url", c.scorer_url.value,
                                    "Scorer service URL (env TASTE_SCORER_URL)");
}

template <typename T> T as(const Opt &o, const char *flag) {
  try {
    if constexpr (std::is_same_v<T, std::string>)
      return o.value;
    else if constexpr (std::is_integral_v<T>) {
      std::size_t pos = 0;
      const auto v = std::stoll(o.value, &pos);
      if (pos != o.value.size() || v < 0)
        throw std::invalid_argument(o.value);
      return static_cast<T>(v);
    } else {
      std::size_t pos = 0;
      const auto v = std::stod(o.value, &pos);
      if (pos != o.value.size())
        throw std::invalid_argument(o.value);
      return static_cast<T>(v);
    }
  } catch (const std::exception &) {
    throw taste::Error(taste::ErrorCode::ConfigError,
                       std::string("invalid value for ") + flag + ": '" + o.value + "'");
  }
}

json common_overlay(const Common &c) {
  json j = json::object();
  if (c.src.given()) j["src_lang"] = c.src.value;
  if (c.tgt.given()) j["tgt_lang"] = c.tgt.value;
  if (c.seed.given()) j["seed"] = as<std::uint64_t>(c.seed, "--seed");
  const int modes = (c.tc ? 1 : 0) + (c.qe ? 1 : 0) + (c.both ? 1 : 0);
  if (modes > 1)
    throw taste::Error(taste::ErrorCode::ConfigError, "--tc, --qe and --both are exclusive");
  if (c.tc) j["quality_mode"] = "tc";
  if (c.qe) j["quality_mode"] = "qe";
  if (c.both) j["quality_mode"] = "both";
  if (c.endpoint.given()) j["backend"]["endpoint"] = c.endpoint.value;
  if (c.model.given()) j["backend"]["model"] = c.model.value;
  if (c.mock.given()) j["backend"]["mock_script"] = c.mock.value;
  if (c.max_new_tokens.given())
    j["backend"]["max_new_tokens"] = as<int>(c.max_new_tokens, "--max-new-tokens");
  if (c.temperature.given())
    j["backend"]["temperature"] = as<double>(c.temperature, "--temperature");
  if (c.top_p.given()) j["backend"]["top_p"] = as<double>(c.top_p, "--top-p");
  if (c.timeout.given()) j["backend"]["timeout_seconds"] = as<double>(c.timeout, "--timeout");
  if (c.retries.given()) j["backend"]["max_retries"] = as<int>(c.retries, "--max-retries");
  if (c.concurrency.given())
    j["backend"]["max_in_flight"] = as<std::size_t>(c.concurrency, "--concurrency");
  if (c.scorer.given()) j["scorer"]["kind"] = c.scorer.value;
  if (c.scorer_url.given()) j["scorer"]["endpoint"] = c.scorer_url.value;
  return j;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"taste: data building, two-stage translation and evaluation toolkit"};
  app.footer(std::string(taste::cli::kPrecedence) +
             "\nEnvironment: TASTE_API_KEY, TASTE_ENDPOINT, TASTE_MODEL, TASTE_SCORER, "
             "TASTE_SCORER_URL.");
  app.require_subcommand(1);

  // build-data
  Common bd_c;
  Opt bd_task, bd_parallel, bd_candidates, bd_out, bd_qp, bd_dr;
  bool bd_undersample = false;
  auto *bd = app.add_subcommand("build-data", "Build fine-tuning datasets from corpora");
  add_common(*bd, bd_c, true);
  bd_task.opt = bd->add_option("--task", bd_task.value, "all, basic, qp or dr");
  bd_parallel.opt = bd->add_option("--parallel", bd_parallel.value, "Parallel corpus JSONL");
  bd_candidates.opt =
      bd->add_option("--candidates", bd_candidates.value, "Scored candidate pools JSONL");
  bd_out.opt = bd->add_option("--out-dir", bd_out.value, "Output directory");
  bd_qp.opt = bd->add_option("--quota-qp", bd_qp.value, "Per-tier count: N or G,M,B");
  bd_dr.opt = bd->add_option("--quota-dr", bd_dr.value, "Per-tier count: N or G,M,B");
  auto *bd_us = bd->add_flag("--allow-undersample", bd_undersample,
                             "Emit short tiers instead of failing");

  // translate
  Common tr_c;
  Opt tr_mode, tr_override, tr_input, tr_output;
  auto *tr = app.add_subcommand("translate", "Translate a source file");
  add_common(*tr, tr_c, false);
  tr_mode.opt = tr->add_option("--mode", tr_mode.value, "taste or baseline");
  tr_override.opt = tr->add_option("--override", tr_override.value,
                                   "none, good, bad, random or blank");
  tr_input.opt = tr->add_option("--input", tr_input.value, "Source sentences, one per line");
  tr_output.opt = tr->add_option("--output", tr_output.value, "Records JSONL");

  // ape
  Common ap_c;
  Opt ap_override, ap_input, ap_base, ap_output;
  auto *ap = app.add_subcommand("ape", "Post-edit external translations");
  add_common(*ap, ap_c, false);
  ap_override.opt = ap->add_option("--override", ap_override.value,
                                   "none, good, bad, random or blank");
  ap_input.opt = ap->add_option("--input", ap_input.value, "Source sentences, one per line");
  ap_base.opt = ap->add_option("--base", ap_base.value, "Base translations, one per line");
  ap_output.opt = ap->add_option("--output", ap_output.value, "Records JSONL");

  // evaluate
  Common ev_c;
  Opt ev_run, ev_refs, ev_hyp, ev_align, ev_gold_labels, ev_gold_scores, ev_output;
  std::map<std::string, bool> ev_sections = {{"bleu", false},   {"edit-dist", false},
                                             {"labels", false}, {"pearson", false},
                                             {"utw", false},    {"delta", false}};
  auto *ev = app.add_subcommand("evaluate", "Score a run");
  add_common(*ev, ev_c, false);
  ev_run.opt = ev->add_option("--run", ev_run.value, "Records JSONL from translate or ape");
  ev_refs.opt = ev->add_option("--refs", ev_refs.value, "References, one per line");
  ev_hyp.opt = ev->add_option("--hypothesis", ev_hyp.value, "refined or draft");
  ev_align.opt = ev->add_option("--alignments", ev_align.value, "Pharaoh alignments");
  ev_gold_labels.opt = ev->add_option("--gold-labels", ev_gold_labels.value);
  ev_gold_scores.opt = ev->add_option("--gold-scores", ev_gold_scores.value);
  ev_output.opt = ev->add_option("--output", ev_output.value, "Report JSON");
  std::vector<CLI::Option *> section_opts;
  for (auto &[name, on] : ev_sections)
    section_opts.push_back(ev->add_flag("--" + name, on, "Report section " + name));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return taste::cli::kExitUsage;
  }

  try {
    auto *sub = app.get_subcommands().front();
    const std::string command = sub->get_name();
    Common *c = command == "build-data"  ? &bd_c
                : command == "translate" ? &tr_c
                : command == "ape"       ? &ap_c
                                         : &ev_c;
    json flags = common_overlay(*c);

    if (command == "build-data") {
      auto &d = flags["build_data"];
      d = json::object();
      if (bd_task.given()) d["task"] = bd_task.value;
      if (bd_parallel.given()) d["parallel"] = bd_parallel.value;
      if (bd_candidates.given()) d["candidates"] = bd_candidates.value;
      if (bd_out.given()) d["out_dir"] = bd_out.value;
      if (bd_qp.given()) d["quota_qp"] = parse_quota(bd_qp.value, "--quota-qp");
      if (bd_dr.given()) d["quota_dr"] = parse_quota(bd_dr.value, "--quota-dr");
      if (bd_us->count()) d["allow_undersample"] = bd_undersample;
    } else if (command == "translate" || command == "ape") {
      auto &t = flags["translate"];
      t = json::object();
      const bool is_ape = command == "ape";
      if (!is_ape && tr_mode.given()) t["mode"] = tr_mode.value;
      const Opt &ov = is_ape ? ap_override : tr_override;
      const Opt &in = is_ape ? ap_input : tr_input;
      const Opt &out = is_ape ? ap_output : tr_output;
      if (ov.given()) t["override"] = ov.value;
      if (in.given()) t["input"] = in.value;
      if (out.given()) t["output"] = out.value;
      if (is_ape && ap_base.given()) t["base"] = ap_base.value;
    } else {
      auto &e = flags["evaluate"];
      e = json::object();
      if (ev_run.given()) e["run"] = ev_run.value;
      if (ev_refs.given()) e["references"] = ev_refs.value;
      if (ev_hyp.given()) e["hypothesis"] = ev_hyp.value;
      if (ev_align.given()) e["alignments"] = ev_align.value;
      if (ev_gold_labels.given()) e["gold_labels"] = ev_gold_labels.value;
      if (ev_gold_scores.given()) e["gold_scores"] = ev_gold_scores.value;
      if (ev_output.given()) e["output"] = ev_output.value;
      std::vector<std::string> sections;
      for (const auto &[name, on] : ev_sections)
        if (on)
          sections.push_back(name);
      if (!sections.empty())
        e["sections"] = sections;
    }

    std::optional<std::filesystem::path> config_file;
    if (c->config.given())
      config_file = c->config.value;
    const auto cfg =
        taste::cli::resolve_config(config_file, flags, taste::cli::process_env());
    return taste::cli::run_command(command, cfg);
  } catch (const taste::Error &e) {
    std::cerr << "error: " << e.what() << '\n';
    return taste::cli::kExitUsage;
  }
}
