#include "taste/pipeline.hpp"

#include <mutex>
#include <sstream>

#include <gtest/gtest.h>

using namespace taste;

namespace {

const LanguagePair kZhEn{"Chinese", "English"};

std::vector<std::string> sources(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back("源句 " + std::to_string(i));
  return out;
}

Label label_for(std::size_t i) { return kAllLabels[(i * 7 + 1) % 3]; }

// Scripted replies for sources(n): stage 1 gives "draft i\n[label]" (or a
// score in QE), stage 2 gives "refined i".
std::unique_ptr<MockBackend> scripted(std::size_t n, QualityMode mode,
                                      std::size_t max_in_flight = 8) {
  std::vector<MockRule> rules;
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = "源句 " + std::to_string(i) + "\n";
    rules.push_back({{"### Hint:", src}, "refined " + std::to_string(i), std::nullopt, 0, 0});
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = "源句 " + std::to_string(i) + "\n";
    const auto token = mode == QualityMode::TC ? std::string(to_string(label_for(i)))
                                               : std::to_string((i * 13) % 101);
    rules.push_back({{src}, "draft " + std::to_string(i) + "\n[" + token + "]", std::nullopt, 0, 0});
  }
  return std::make_unique<MockBackend>(std::move(rules), std::nullopt, max_in_flight);
}

std::string serialize(const std::vector<ReflectionRecord> &records) {
  std::ostringstream out;
  write_records(records, out);
  return out.str();
}

std::size_t count_hint_tokens(const std::string &prompt) {
  const auto hint = prompt.find("### Hint:\n");
  const auto note = prompt.find("### Note:");
  const auto section = prompt.substr(hint, note - hint);
  std::size_t n = 0;
  for (const char *tok : {"[Good]", "[Medium]", "[Bad]"})
    for (auto pos = section.find(tok); pos != std::string::npos; pos = section.find(tok, pos + 1))
      ++n;
  return n;
}

// Records the order in which stage-1 and stage-2 prompts arrive.
class RecordingBackend final : public Backend {
public:
  explicit RecordingBackend(const Backend &inner) : Backend(4), inner_(inner) {}
  std::string identity() const override { return "recording"; }
  std::vector<int> stages() const {
    std::lock_guard lock(mutex_);
    return stages_;
  }

protected:
  GenerationResult do_generate(const RenderedPrompt &p) const override {
    {
      std::lock_guard lock(mutex_);
      stages_.push_back(p.text.find("### Hint:") == std::string::npos ? 1 : 2);
    }
    return inner_.generate(p);
  }

private:
  const Backend &inner_;
  mutable std::mutex mutex_;
  mutable std::vector<int> stages_;
};

} // namespace

TEST(Reflect, EndToEndTc) {
  auto mock = scripted(50, QualityMode::TC);
  const auto records = reflect(sources(50), kZhEn, QualityMode::TC, LabelOverride::none(), *mock);
  ASSERT_EQ(records.size(), 50u);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto &r = records[i];
    ASSERT_TRUE(r.ok()) << r.error->what();
    EXPECT_EQ(r.id, i);
    EXPECT_EQ(r.draft, "draft " + std::to_string(i));
    EXPECT_EQ(r.quality->label_value(), label_for(i));
    EXPECT_EQ(r.hint_quality->label_value(), label_for(i));
    EXPECT_EQ(*r.refined, "refined " + std::to_string(i));
    EXPECT_EQ(r.stage1_prompt, render_quality_prediction(kZhEn, r.source, QualityMode::TC).text);
    EXPECT_NE(r.stage2_prompt.find(r.hint_quality->bracketed() + " " + r.draft + "\n"),
              std::string::npos);
  }
  EXPECT_EQ(mock->calls(), 100u);
}

TEST(Reflect, EndToEndQe) {
  auto mock = scripted(10, QualityMode::QE);
  const auto records = reflect(sources(10), kZhEn, QualityMode::QE, LabelOverride::none(), *mock);
  for (std::size_t i = 0; i < records.size(); ++i) {
    ASSERT_TRUE(records[i].ok());
    EXPECT_EQ(records[i].quality->score_value(), static_cast<int>((i * 13) % 101));
    EXPECT_NE(records[i].stage2_prompt.find("Draft with quality score:\n[" +
                                            std::to_string((i * 13) % 101) + "] draft"),
              std::string::npos);
  }
}

TEST(Reflect, StageOneCompletesBeforeStageTwo) {
  auto mock = scripted(20, QualityMode::TC);
  RecordingBackend rec(*mock);
  reflect(sources(20), kZhEn, QualityMode::TC, LabelOverride::none(), rec);
  const auto stages = rec.stages();
  ASSERT_EQ(stages.size(), 40u);
  for (std::size_t i = 0; i < 20; ++i)
    EXPECT_EQ(stages[i], 1);
  for (std::size_t i = 20; i < 40; ++i)
    EXPECT_EQ(stages[i], 2);
}

TEST(Reflect, FixedOverridesReplaceHintOnly) {
  auto mock = scripted(12, QualityMode::TC);
  for (auto [ov, want] : {std::pair{LabelOverride::all_good(), Label::Good},
                          std::pair{LabelOverride::all_bad(), Label::Bad}}) {
    const auto records = reflect(sources(12), kZhEn, QualityMode::TC, ov, *mock);
    for (std::size_t i = 0; i < records.size(); ++i) {
      EXPECT_EQ(records[i].quality->label_value(), label_for(i));
      EXPECT_EQ(records[i].hint_quality->label_value(), want);
      EXPECT_NE(records[i].stage2_prompt.find("[" + std::string(to_string(want)) + "] draft"),
                std::string::npos);
    }
  }
}

TEST(Reflect, BlankOverrideHasNoHintToken) {
  auto mock = scripted(30, QualityMode::TC);
  const auto records = reflect(sources(30), kZhEn, QualityMode::TC, LabelOverride::blank(), *mock);
  for (const auto &r : records) {
    ASSERT_TRUE(r.ok());
    EXPECT_FALSE(r.hint_quality.has_value());
    EXPECT_EQ(count_hint_tokens(r.stage2_prompt), 0u);
    EXPECT_NE(r.stage2_prompt.find("Draft with quality label:\n" + r.draft + "\n"),
              std::string::npos);
  }
}

TEST(Reflect, RandomOverrideReproducibleAndBatchIndependent) {
  auto mock = scripted(50, QualityMode::TC);
  const auto a = reflect(sources(50), kZhEn, QualityMode::TC, LabelOverride::random(7), *mock);
  const auto b = reflect(sources(50), kZhEn, QualityMode::TC, LabelOverride::random(7), *mock);
  EXPECT_EQ(serialize(a), serialize(b));
  std::array<int, 3> seen{};
  for (const auto &r : a)
    ++seen[index_of(r.hint_quality->label_value())];
  for (int c : seen)
    EXPECT_GT(c, 0);

  const auto prefix = reflect(sources(20), kZhEn, QualityMode::TC, LabelOverride::random(7), *mock);
  for (std::size_t i = 0; i < prefix.size(); ++i)
    EXPECT_EQ(prefix[i].hint_quality->label_value(), a[i].hint_quality->label_value());

  const auto other = reflect(sources(50), kZhEn, QualityMode::TC, LabelOverride::random(8), *mock);
  EXPECT_NE(serialize(a), serialize(other));
}

TEST(Reflect, TcOnlyOverridesRejectedInQe) {
  auto mock = scripted(3, QualityMode::QE);
  for (const auto &ov : {LabelOverride::all_good(), LabelOverride::all_bad(), LabelOverride::random(1)}) {
    try {
      reflect(sources(3), kZhEn, QualityMode::QE, ov, *mock);
      FAIL();
    } catch (const Error &e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidOverride);
    }
  }
  EXPECT_NO_THROW(reflect(sources(3), kZhEn, QualityMode::QE, LabelOverride::blank(), *mock));
  EXPECT_EQ(LabelOverride::parse("random", 9).seed, 9u);
  EXPECT_THROW(LabelOverride::parse("sometimes"), Error);
}

TEST(Reflect, PerRecordFailuresStayInSlot) {
  std::vector<MockRule> rules = {
      {{"源句 1\n"}, "", ErrorCode::TransportError, 0, 0},       // stage 1 unreachable
      {{"源句 2\n"}, "no token at all", std::nullopt, 0, 0},     // stage 1 unparseable
      {{"### Hint:", "源句 3\n"}, "", ErrorCode::BadStatus, 500, 0}, // stage 2 fails
      {{"源句 4\n"}, "  \n[Good]", std::nullopt, 0, 0},           // empty draft
      {{"### Hint:"}, "refined", std::nullopt, 0, 0},
      {{}, "draft\n[Medium]", std::nullopt, 0, 0},
  };
  MockBackend mock(rules);
  const auto records = reflect(sources(6), kZhEn, QualityMode::TC, LabelOverride::none(), mock);
  EXPECT_TRUE(records[0].ok());
  EXPECT_TRUE(records[5].ok());
  EXPECT_EQ(records[1].error->code(), ErrorCode::TransportError);
  EXPECT_EQ(records[2].error->code(), ErrorCode::Stage1ParseError);
  EXPECT_EQ(records[3].error->code(), ErrorCode::Stage2Error);
  EXPECT_EQ(records[3].draft, "draft"); // stage-1 output kept
  EXPECT_FALSE(records[3].refined.has_value());
  EXPECT_EQ(records[4].error->code(), ErrorCode::Stage1ParseError);
}

TEST(Reflect, AllTransportFailuresAbortTheRun) {
  MockBackend mock({{{}, "", ErrorCode::Timeout, 0, 0}});
  try {
    reflect(sources(4), kZhEn, QualityMode::TC, LabelOverride::none(), mock);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::BackendUnavailable);
  }
}

TEST(Reflect, EmptySourceIsRecordError) {
  auto mock = scripted(3, QualityMode::TC);
  auto src = sources(3);
  src[1] = "   ";
  const auto records = reflect(src, kZhEn, QualityMode::TC, LabelOverride::none(), *mock);
  EXPECT_TRUE(records[0].ok());
  EXPECT_EQ(records[1].error->code(), ErrorCode::EmptySource);
  EXPECT_TRUE(records[2].ok());
}

TEST(Ape, StageOnePromptEndsWithBase) {
  MockBackend mock({{{"### Hint:"}, "post-edited", std::nullopt, 0, 0},
                    {{}, "[Medium]", std::nullopt, 0, 0}});
  const std::vector<std::string> bases = {"base zero", "base one", "base two"};
  const auto records = ape(sources(3), bases, kZhEn, QualityMode::TC, mock);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto &r = records[i];
    ASSERT_TRUE(r.ok());
    EXPECT_TRUE(r.stage1_prompt.ends_with("### Response: " + bases[i]));
    EXPECT_EQ(r.stage1_prompt,
              render_quality_prediction(kZhEn, r.source, QualityMode::TC).text + bases[i]);
    EXPECT_EQ(r.draft, bases[i]);
    EXPECT_EQ(r.quality->label_value(), Label::Medium);
    EXPECT_NE(r.stage2_prompt.find("[Medium] " + bases[i] + "\n"), std::string::npos);
    EXPECT_EQ(*r.refined, "post-edited");
  }
}

TEST(Ape, EchoedTextBeforeTokenIgnored) {
  MockBackend mock({{{"### Hint:"}, "fixed", std::nullopt, 0, 0},
                    {{}, "some echoed translation\n[Bad]", std::nullopt, 0, 0}});
  const auto records = ape(sources(1), {"external"}, kZhEn, QualityMode::TC, mock);
  EXPECT_EQ(records[0].draft, "external");
  EXPECT_EQ(records[0].quality->label_value(), Label::Bad);
}

TEST(Ape, LengthMismatchAndEmptyBase) {
  MockBackend mock({{{"### Hint:"}, "r", std::nullopt, 0, 0}, {{}, "[Good]", std::nullopt, 0, 0}});
  try {
    ape(sources(3), {"a", "b"}, kZhEn, QualityMode::TC, mock);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
  const auto records = ape(sources(2), {"a", " "}, kZhEn, QualityMode::TC, mock);
  EXPECT_TRUE(records[0].ok());
  EXPECT_EQ(records[1].error->code(), ErrorCode::EmptyDraft);
}

TEST(Baseline, DraftOnlyShape) {
  MockBackend mock({{{"### Note:"}, "  plain translation \n", std::nullopt, 0, 0}});
  const auto records = baseline_translate(sources(3), kZhEn, mock);
  for (const auto &r : records) {
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.draft, "plain translation");
    EXPECT_FALSE(r.quality.has_value());
    EXPECT_FALSE(r.refined.has_value());
    EXPECT_TRUE(r.stage2_prompt.empty());
    EXPECT_EQ(r.stage1_prompt, render_basic_translation(kZhEn, r.source).text);
  }
}

TEST(RecordsIo, RoundTripAndDeterministicBytes) {
  std::vector<MockRule> rules = {{{"源句 2\n"}, "", ErrorCode::TransportError, 0, 0},
                                 {{"### Hint:"}, "refined", std::nullopt, 0, 0},
                                 {{}, "draft\n[Bad]", std::nullopt, 0, 0}};
  MockBackend mock(rules);
  const auto records = reflect(sources(4), kZhEn, QualityMode::TC, LabelOverride::none(), mock);
  const auto text = serialize(records);
  EXPECT_EQ(text, serialize(reflect(sources(4), kZhEn, QualityMode::TC, LabelOverride::none(), mock)));
  EXPECT_EQ(text.find("latency"), std::string::npos);

  std::istringstream in(text);
  const auto back = read_records(in);
  ASSERT_EQ(back.size(), records.size());
  EXPECT_EQ(serialize(back), text);
  EXPECT_EQ(back[2].error->code(), ErrorCode::TransportError);
}

TEST(RecordsIo, MalformedLine) {
  std::istringstream in("{\"id\":0}\nnot json\n");
  try {
    read_records(in);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedLine);
    EXPECT_EQ(e.line(), std::optional<std::size_t>(2));
  }
}
