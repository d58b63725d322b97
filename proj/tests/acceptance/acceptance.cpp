// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails or runs over its time budget.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "oracles/oracles.hpp"
#include "support.hpp"
#include "taste/taste.hpp"

using namespace taste;
using testing_support::golden;

namespace {

// Collects the first few failure messages of one criterion.
class Check {
public:
  void expect(bool ok, const std::string &what) {
    if (ok)
      return;
    ++failures_;
    if (notes_.size() < 3)
      notes_.push_back(what);
  }
  bool ok() const { return failures_ == 0; }
  std::string summary() const {
    std::string s = std::to_string(failures_) + " failure(s)";
    for (const auto &n : notes_)
      s += "; " + n;
    return s;
  }

private:
  std::size_t failures_ = 0;
  std::vector<std::string> notes_;
};

struct Criterion {
  std::string name;
  double budget_seconds; // 0 means no limit
  std::function<void(Check &)> body;
};

const LanguagePair kZhEn{"Chinese", "English"};

// --- prompts ----------------------------------------------------------------

void prompt_goldens(Check &c) {
  const std::string tennis = "虽然朱雨玲连追3分，但丁宁还是利用发球以11：9拿下首局。";
  const std::string draft = "Although he had only three points, he took the ball to 11:9.";
  const std::vector<std::pair<RenderedPrompt, std::string>> cases = {
      {render_basic_translation(
           kZhEn, "一辆 1948 年的福特水星汽车穿过佐治亚州门罗小镇的一群围观者，朝着小小的摩尔滩桥隆隆奔行。"),
       "basic_translation.txt"},
      {render_quality_prediction(kZhEn, "北京大兴国际机场首航开启了北京“双机场”时代。",
                                 QualityMode::TC),
       "quality_prediction_tc.txt"},
      {render_quality_prediction(kZhEn, "7月26日在上海拍摄的公共卫生防疫专业委员会成立仪式现场。",
                                 QualityMode::QE),
       "quality_prediction_qe.txt"},
      {render_draft_refinement(kZhEn, tennis, draft, QualityMode::TC,
                               QualityAssessment::label(Label::Bad)),
       "draft_refinement_tc.txt"},
      {render_draft_refinement(kZhEn, tennis, draft, QualityMode::QE, QualityAssessment::score(35)),
       "draft_refinement_qe.txt"},
      {render_draft_refinement(kZhEn, tennis, draft, QualityMode::TC, std::nullopt),
       "draft_refinement_blank.txt"},
  };
  for (const auto &[prompt, file] : cases) {
    const auto want = golden(file);
    c.expect(!want.empty(), file + " missing");
    c.expect(prompt.text == want, file + " differs");
  }
}

// --- tiers ------------------------------------------------------------------

void tier_proportions(Check &c) {
  const auto tiers = assign_tiers(testing_support::synthetic_pools(100, 10));
  c.expect(tiers.count(Label::Good) == 100, "Good != 100");
  c.expect(tiers.count(Label::Medium) == 400, "Medium != 400");
  c.expect(tiers.count(Label::Bad) == 500, "Bad != 500");

  std::mt19937_64 gen(2024);
  for (int iter = 0; iter < 60; ++iter) {
    const std::size_t n = 1 + gen() % 5000;
    CandidatePool pool;
    pool.langs = {"zh", "en"};
    pool.source = "s";
    for (std::size_t i = 0; i < n; ++i)
      pool.candidates.push_back({"c" + std::to_string(i),
                                 std::uniform_real_distribution<double>(0, 1)(gen), "sys", i});
    const auto t = assign_tiers({pool});
    const std::size_t good = (n + 9) / 10, bad = n / 2;
    c.expect(t.count(Label::Good) == good && t.count(Label::Bad) == bad &&
                 t.count(Label::Medium) == n - good - bad,
             "N=" + std::to_string(n));
  }
}

// --- datasets ---------------------------------------------------------------

std::string dump(const std::vector<SftInstance> &xs) {
  std::ostringstream out;
  emit_jsonl(xs, out);
  return out.str();
}

std::size_t count_completion_token(const std::vector<SftInstance> &xs, const std::string &tok) {
  std::size_t n = 0;
  for (const auto &x : xs)
    if (x.completion.ends_with("[" + tok + "]"))
      ++n;
  return n;
}

std::size_t count_hint_label(const std::vector<SftInstance> &xs, const std::string &tok) {
  std::size_t n = 0;
  for (const auto &x : xs)
    if (x.prompt.find("Draft with quality label:\n[" + tok + "] ") != std::string::npos)
      ++n;
  return n;
}

void dataset_quotas(Check &c) {
  const auto pools = testing_support::synthetic_pools(100, 10);
  const auto tiers = assign_tiers(pools);
  QuotaConfig q;
  q.qp_per_tier = {30, 30, 30};
  q.dr_per_tier = {8, 8, 4};
  q.seed = 11;

  const auto qp = build_quality_prediction(pools, tiers, QualityMode::TC, q);
  c.expect(qp.instances.size() == 90, "QP size");
  for (const char *tok : {"Good", "Medium", "Bad"})
    c.expect(count_completion_token(qp.instances, tok) == 30, std::string("QP ") + tok);

  const auto dr = build_draft_refinement(pools, tiers, QualityMode::TC, q);
  c.expect(dr.instances.size() == 20, "DR size");
  c.expect(count_hint_label(dr.instances, "Good") == 8, "DR Good");
  c.expect(count_hint_label(dr.instances, "Medium") == 8, "DR Medium");
  c.expect(count_hint_label(dr.instances, "Bad") == 4, "DR Bad");

  c.expect(dump(qp.instances) ==
               dump(build_quality_prediction(pools, tiers, QualityMode::TC, q).instances),
           "QP rerun differs");
  c.expect(dump(dr.instances) ==
               dump(build_draft_refinement(pools, tiers, QualityMode::TC, q).instances),
           "DR rerun differs");
}

// --- metrics ----------------------------------------------------------------

std::u32string random_word(std::mt19937_64 &gen) {
  std::u32string s(gen() % 13, U'a');
  for (auto &ch : s)
    ch = U'a' + static_cast<char32_t>(gen() % 4);
  return s;
}

void edit_distance_oracle(Check &c) {
  std::mt19937_64 gen(31337);
  for (int i = 0; i < 1500; ++i) {
    const auto a = random_word(gen), b = random_word(gen);
    c.expect(indel_distance(a, b) == oracle::dp_indel(a, b), "oracle mismatch");
    c.expect(indel_distance(a, b) == indel_distance(b, a), "asymmetric");
    c.expect(indel_distance(a, a) == 0, "d(a,a) != 0");
  }
}

void pearson_checks(Check &c) {
  std::mt19937_64 gen(4242);
  std::normal_distribution<double> dist(0.0, 10.0);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> x(5 + gen() % 80), y, neg;
    for (auto &v : x)
      v = dist(gen);
    for (double v : x) {
      y.push_back(0.5 * v + dist(gen));
      neg.push_back(-v);
    }
    c.expect(std::abs(pearson_r(x, y) - oracle::pearson_direct(x, y)) <= 1e-9, "r off");
    c.expect(pearson_r(x, x) == 1.0, "r(x,x) != 1");
    c.expect(pearson_r(x, neg) == -1.0, "r(x,-x) != -1");
  }
}

void weighted_prf_checks(Check &c) {
  ConfusionMatrix3 m;
  m.counts = {{{5, 3, 2}, {1, 7, 2}, {0, 2, 8}}};
  const auto r = classification_metrics(m);
  // Good p=5/6 r=1/2, Medium p=7/12 r=7/10, Bad p=2/3 r=4/5, each support 10.
  const double p = (5.0 / 6 + 7.0 / 12 + 2.0 / 3) / 3;
  const double f = (0.625 + 2 * (7.0 / 12) * 0.7 / (7.0 / 12 + 0.7) + 2 * (2.0 / 3) * 0.8 / (2.0 / 3 + 0.8)) / 3;
  c.expect(std::abs(r.precision - p) <= 1e-9, "precision");
  c.expect(std::abs(r.recall - 2.0 / 3) <= 1e-9, "recall");
  c.expect(std::abs(r.f1 - f) <= 1e-9, "f1");

  std::mt19937_64 gen(606);
  for (int i = 0; i < 100; ++i) {
    ConfusionMatrix3 rm;
    for (auto &row : rm.counts)
      for (auto &v : row)
        v = gen() % 25;
    rm.counts[0][0] += 1;
    const auto x = classification_metrics(rm);
    c.expect(std::abs(x.recall - x.accuracy) <= 1e-12, "recall != accuracy");
  }
}

void bleu_checks(Check &c) {
  const std::vector<std::string> refs = {"The cat sat on the mat.", "It is raining, again!",
                                         "A 1948 Ford Mercury rumbled toward the bridge."};
  c.expect(corpus_bleu(refs, refs).score == 100.0, "identity != 100.0");

  std::ifstream in(testing_support::test_dir() / "data" / "bleu_cases.json");
  c.expect(static_cast<bool>(in), "bleu_cases.json missing");
  if (!in)
    return;
  const auto data = nlohmann::json::parse(in);
  c.expect(data["cases"].size() == 20, "expected 20 frozen cases");
  for (const auto &k : data["cases"]) {
    const auto hyps = k["hyps"].get<std::vector<std::string>>();
    const auto rs = k["refs"].get<std::vector<std::string>>();
    c.expect(std::abs(corpus_bleu(hyps, rs).score - k["score"].get<double>()) <= 0.01,
             "case off by more than 0.01");
  }
}

// --- pipeline ---------------------------------------------------------------

std::vector<std::string> sources(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back("源句 " + std::to_string(i));
  return out;
}

MockBackend scripted(std::size_t n) {
  std::vector<MockRule> rules;
  for (std::size_t i = 0; i < n; ++i)
    rules.push_back({{"### Hint:", sources(n)[i] + "\n"}, "refined " + std::to_string(i),
                     std::nullopt, 0, 0});
  for (std::size_t i = 0; i < n; ++i)
    rules.push_back({{sources(n)[i] + "\n"},
                     "draft " + std::to_string(i) + "\n[" + std::string(to_string(kAllLabels[i % 3])) + "]",
                     std::nullopt, 0, 0});
  return MockBackend(std::move(rules), std::nullopt, 8);
}

std::string serialize(const std::vector<ReflectionRecord> &records) {
  std::ostringstream out;
  write_records(records, out);
  return out.str();
}

std::size_t hint_tokens(const std::string &prompt) {
  const auto hint = prompt.find("### Hint:");
  const auto section = prompt.substr(hint, prompt.find("### Note:") - hint);
  std::size_t n = 0;
  for (const char *tok : {"[Good]", "[Medium]", "[Bad]"})
    for (auto pos = section.find(tok); pos != std::string::npos; pos = section.find(tok, pos + 1))
      ++n;
  return n;
}

void end_to_end(Check &c) {
  auto mock = scripted(50);
  for (const auto &ov : {LabelOverride::none(), LabelOverride::all_bad(), LabelOverride::random(7)}) {
    const auto records = reflect(sources(50), kZhEn, QualityMode::TC, ov, mock);
    c.expect(records.size() == 50, "record count");
    for (const auto &r : records) {
      c.expect(r.ok(), "record failed");
      if (!r.ok())
        continue;
      c.expect(r.stage2_prompt.find(r.draft) != std::string::npos, "draft not in stage 2");
      c.expect(r.stage2_prompt.find(r.hint_quality->bracketed() + " " + r.draft) !=
                   std::string::npos,
               "hint token not in stage 2");
      if (ov.kind == OverrideKind::AllBad)
        c.expect(r.hint_quality->label_value() == Label::Bad, "override not applied");
    }
  }

  for (const auto &r : reflect(sources(50), kZhEn, QualityMode::TC, LabelOverride::blank(), mock))
    c.expect(r.ok() && hint_tokens(r.stage2_prompt) == 0, "blank has a hint token");

  const auto a = reflect(sources(50), kZhEn, QualityMode::TC, LabelOverride::random(7), mock);
  const auto b = reflect(sources(50), kZhEn, QualityMode::TC, LabelOverride::random(7), mock);
  c.expect(serialize(a) == serialize(b), "random(7) reruns differ");
}

void ape_checks(Check &c) {
  MockBackend mock({{{"### Hint:"}, "post-edited", std::nullopt, 0, 0},
                    {{"源句 1\n"}, "[Bad]", std::nullopt, 0, 0},
                    {{}, "[Good]", std::nullopt, 0, 0}});
  const std::vector<std::string> bases = {"external zero", "external one", "external two"};
  const auto records = ape(sources(3), bases, kZhEn, QualityMode::TC, mock);
  c.expect(records.size() == 3, "record count");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto &r = records[i];
    c.expect(r.ok(), "record failed");
    c.expect(r.stage1_prompt.ends_with("### Response: " + bases[i]), "stage 1 tail");
    c.expect(r.draft == bases[i], "draft is not the base");
    c.expect(r.quality && r.quality->label_value() == (i == 1 ? Label::Bad : Label::Good),
             "label not attached");
  }
}

void batch_order(Check &c) {
  class Echo final : public Backend {
  public:
    Echo() : Backend(8) {}
    std::string identity() const override { return "echo"; }

  protected:
    GenerationResult do_generate(const RenderedPrompt &p) const override {
      const int n = std::stoi(p.text.substr(1));
      std::this_thread::sleep_for(std::chrono::milliseconds((n * 3) % 4));
      if (n % 17 == 5)
        throw Error(ErrorCode::TransportError, "injected " + std::to_string(n));
      return {"echo " + p.text, 0.0, 1};
    }
  } echo;

  std::vector<RenderedPrompt> prompts;
  for (int i = 0; i < 100; ++i)
    prompts.push_back({"#" + std::to_string(i), TaskKind::BasicTranslation});
  const auto results = generate_batch(echo, prompts);
  c.expect(results.size() == 100, "result count");
  for (int i = 0; i < static_cast<int>(results.size()); ++i) {
    if (i % 17 == 5)
      c.expect(!results[i].ok() && results[i].error().code() == ErrorCode::TransportError,
               "slot " + std::to_string(i) + " should fail");
    else
      c.expect(results[i].ok() && results[i].value().text == "echo #" + std::to_string(i),
               "slot " + std::to_string(i) + " out of order");
  }
  c.expect(echo.peak_in_flight() <= 8, "more than 8 in flight");
}

} // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"prompt goldens for all task kinds", 1.0, prompt_goldens},
      {"tier proportions 100/400/500 and random N", 5.0, tier_proportions},
      {"dataset quotas 30/30/30 and 8/8/4, byte-identical reruns", 5.0, dataset_quotas},
      {"indel distance equals DP oracle, identity, symmetry", 10.0, edit_distance_oracle},
      {"pearson r vs direct formula, exact identities", 0.0, pearson_checks},
      {"weighted P/R/F1 hand matrix, recall equals accuracy", 0.0, weighted_prf_checks},
      {"BLEU identity 100.0 and 20 frozen reference cases", 0.0, bleu_checks},
      {"end-to-end reflection on the mock backend", 5.0, end_to_end},
      {"APE stage-1 prompts end with the base translation", 0.0, ape_checks},
      {"batch order at concurrency 8 with in-slot failures", 0.0, batch_order},
  };

  int failed = 0;
  for (const auto &crit : criteria) {
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
      crit.body(check);
    } catch (const std::exception &e) {
      check.expect(false, std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (crit.budget_seconds > 0 && secs > crit.budget_seconds)
      check.expect(false, "took " + std::to_string(secs) + " s");
    std::printf("%s  %-58s %.3fs%s\n", check.ok() ? "PASS" : "FAIL", crit.name.c_str(), secs,
                check.ok() ? "" : ("  " + check.summary()).c_str());
    if (!check.ok())
      ++failed;
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
