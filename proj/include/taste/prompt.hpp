#pragma once

#include <array>
#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "taste/detail/text.hpp"
#include "taste/error.hpp"

namespace taste {

enum class TaskKind {
  BasicTranslation,
  QualityPredictionTC,
  QualityPredictionQE,
  DraftRefinementTC,
  DraftRefinementQE,
};

/// How a run expresses quality: a three-way label (TC) or a 0-100 score (QE).
enum class QualityMode { TC, QE };

/// Quality label, also used as the corpus tier. Declaration order is best
/// first, so `a < b` means a is the better label.
enum class Label { Good, Medium, Bad };

inline constexpr std::array<Label, 3> kAllLabels = {Label::Good, Label::Medium,
                                                    Label::Bad};

constexpr std::string_view to_string(Label label) {
  switch (label) {
  case Label::Good: return "Good";
  case Label::Medium: return "Medium";
  case Label::Bad: return "Bad";
  }
  return "";
}

inline std::optional<Label> label_from_string(std::string_view s) {
  for (Label l : kAllLabels)
    if (to_string(l) == s)
      return l;
  return std::nullopt;
}

constexpr std::size_t index_of(Label label) {
  return static_cast<std::size_t>(label);
}

constexpr std::string_view to_string(QualityMode mode) {
  return mode == QualityMode::TC ? "tc" : "qe";
}

inline std::optional<QualityMode> quality_mode_from_string(std::string_view s) {
  if (s == "tc" || s == "TC")
    return QualityMode::TC;
  if (s == "qe" || s == "QE")
    return QualityMode::QE;
  return std::nullopt;
}

constexpr std::string_view to_string(TaskKind kind) {
  switch (kind) {
  case TaskKind::BasicTranslation: return "basic_translation";
  case TaskKind::QualityPredictionTC: return "quality_prediction_tc";
  case TaskKind::QualityPredictionQE: return "quality_prediction_qe";
  case TaskKind::DraftRefinementTC: return "draft_refinement_tc";
  case TaskKind::DraftRefinementQE: return "draft_refinement_qe";
  }
  return "";
}

constexpr TaskKind quality_prediction_task(QualityMode mode) {
  return mode == QualityMode::TC ? TaskKind::QualityPredictionTC
                                 : TaskKind::QualityPredictionQE;
}

constexpr TaskKind draft_refinement_task(QualityMode mode) {
  return mode == QualityMode::TC ? TaskKind::DraftRefinementTC
                                 : TaskKind::DraftRefinementQE;
}

/// Display names substituted into the instruction, e.g. "Chinese".
struct LanguagePair {
  std::string src;
  std::string tgt;

  void validate() const {
    if (detail::trim(src).empty() || detail::trim(tgt).empty() || src == tgt)
      throw Error(ErrorCode::EmptyPair,
                  "language pair needs two distinct names, got '" + src +
                      "' -> '" + tgt + "'");
  }

  friend bool operator==(const LanguagePair &, const LanguagePair &) = default;
};

struct LanguageEntry {
  std::string_view code;
  std::string_view name;
};

inline constexpr std::array<LanguageEntry, 16> kLanguageTable = {{
    {"ar", "Arabic"},   {"cs", "Czech"},    {"de", "German"},
    {"en", "English"},  {"es", "Spanish"},  {"fr", "French"},
    {"ha", "Hausa"},    {"is", "Icelandic"}, {"ja", "Japanese"},
    {"km", "Khmer"},    {"ps", "Pashto"},   {"ru", "Russian"},
    {"ta", "Tamil"},    {"uk", "Ukrainian"}, {"zh", "Chinese"},
    {"he", "Hebrew"},
}};

/// Maps an ISO 639-1 code to the display name used in prompts.
inline std::string language_name(std::string_view code) {
  for (const auto &entry : kLanguageTable)
    if (entry.code == code)
      return std::string(entry.name);
  throw Error(ErrorCode::UnknownLanguage,
              "no display name for language code '" + std::string(code) + "'");
}

inline LanguagePair language_pair_from_codes(std::string_view src,
                                             std::string_view tgt) {
  LanguagePair pair{language_name(src), language_name(tgt)};
  pair.validate();
  return pair;
}

struct RenderedPrompt {
  std::string text;
  TaskKind task;
};

/// The quality signal q: a label under TC, an integer score under QE.
class QualityAssessment {
public:
  static QualityAssessment label(Label l) {
    return QualityAssessment(QualityMode::TC, l, 0);
  }

  static QualityAssessment score(int s) {
    if (s < 0 || s > 100)
      throw Error(ErrorCode::ScoreOutOfRange,
                  "quality score " + std::to_string(s) + " outside [0,100]");
    return QualityAssessment(QualityMode::QE, Label::Good, s);
  }

  QualityMode mode() const noexcept { return mode_; }

  Label label_value() const {
    if (mode_ != QualityMode::TC)
      throw Error(ErrorCode::KindMismatch, "QE assessment has no label");
    return label_;
  }

  int score_value() const {
    if (mode_ != QualityMode::QE)
      throw Error(ErrorCode::KindMismatch, "TC assessment has no score");
    return score_;
  }

  /// Text placed inside the brackets: "Good" or "83".
  std::string token() const {
    return mode_ == QualityMode::TC ? std::string(to_string(label_))
                                    : std::to_string(score_);
  }

  std::string bracketed() const { return "[" + token() + "]"; }

  friend bool operator==(const QualityAssessment &a,
                         const QualityAssessment &b) {
    return a.mode_ == b.mode_ && a.token() == b.token();
  }

private:
  QualityAssessment(QualityMode m, Label l, int s)
      : mode_(m), label_(l), score_(s) {}

  QualityMode mode_;
  Label label_;
  int score_;
};

namespace prompt {

inline constexpr std::string_view kWrapperHeader =
    "Write a response that appropriately completes the request.\n\n"
    "### Request:\n";
inline constexpr std::string_view kResponseCue = "### Response: ";
inline constexpr std::string_view kNoteLine =
    "### Note: A translation with no errors could be\n\n";
inline constexpr std::string_view kHintHeader = "### Hint:\n";

inline std::string translate_instruction(const LanguagePair &pair) {
  return "Translate from " + pair.src + " to " + pair.tgt;
}

inline std::string quality_instruction(const LanguagePair &pair,
                                       QualityMode mode) {
  if (mode == QualityMode::TC)
    return translate_instruction(pair) +
           ", and label the translation quality as \"Good\", \"Medium\" or "
           "\"Bad\"";
  return translate_instruction(pair) +
         ", and score the translation quality from 0 to 100.";
}

inline void require_source(std::string_view source) {
  if (detail::trim(source).empty())
    throw Error(ErrorCode::EmptySource, "source segment is empty");
}

} // namespace prompt

inline RenderedPrompt render_basic_translation(const LanguagePair &pair,
                                               std::string_view source) {
  pair.validate();
  prompt::require_source(source);
  std::string text(prompt::kWrapperHeader);
  text += prompt::translate_instruction(pair);
  text += ".\n";
  text += source;
  text += "\n\n";
  text += prompt::kNoteLine;
  text += prompt::kResponseCue;
  return {std::move(text), TaskKind::BasicTranslation};
}

inline RenderedPrompt render_quality_prediction(const LanguagePair &pair,
                                                std::string_view source,
                                                QualityMode mode) {
  pair.validate();
  prompt::require_source(source);
  std::string text(prompt::kWrapperHeader);
  text += prompt::quality_instruction(pair, mode);
  text += "\n";
  text += source;
  text += "\n\n";
  text += prompt::kResponseCue;
  return {std::move(text), quality_prediction_task(mode)};
}

/// Stage-2 prompt. `quality` empty means Blank mode: the hint keeps its
/// header and the draft but carries no bracketed token.
inline RenderedPrompt
render_draft_refinement(const LanguagePair &pair, std::string_view source,
                        std::string_view draft, QualityMode mode,
                        const std::optional<QualityAssessment> &quality) {
  pair.validate();
  prompt::require_source(source);
  if (detail::trim(draft).empty())
    throw Error(ErrorCode::EmptyDraft, "draft translation is empty");
  if (quality && quality->mode() != mode)
    throw Error(ErrorCode::KindMismatch,
                "assessment is " + std::string(to_string(quality->mode())) +
                    " but the run is " + std::string(to_string(mode)));

  std::string text(prompt::kWrapperHeader);
  text += prompt::translate_instruction(pair);
  text += ".\n";
  text += source;
  text += "\n\n";
  text += prompt::kHintHeader;
  text += mode == QualityMode::TC ? "Draft with quality label:\n"
                                  : "Draft with quality score:\n";
  if (quality) {
    text += quality->bracketed();
    text += ' ';
  }
  text += draft;
  text += "\n";
  text += prompt::kNoteLine;
  text += prompt::kResponseCue;
  return {std::move(text), draft_refinement_task(mode)};
}

namespace prompt {

inline QualityAssessment parse_token(std::string_view token, QualityMode mode) {
  token = detail::trim(token);
  if (mode == QualityMode::TC) {
    if (auto l = label_from_string(token))
      return QualityAssessment::label(*l);
    throw Error(ErrorCode::UnknownLabel,
                "unrecognized quality label '" + std::string(token) + "'");
  }
  long long value = 0;
  const char *first = token.data();
  const char *last = token.data() + token.size();
  if (!token.empty() && *first == '+')
    ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec == std::errc::result_out_of_range)
    throw Error(ErrorCode::ScoreOutOfRange,
                "quality score '" + std::string(token) + "' outside [0,100]");
  if (ec != std::errc() || ptr != last || first == last)
    throw Error(ErrorCode::MalformedScore,
                "quality score '" + std::string(token) + "' is not an integer");
  if (value < 0 || value > 100)
    throw Error(ErrorCode::ScoreOutOfRange,
                "quality score " + std::to_string(value) + " outside [0,100]");
  return QualityAssessment::score(static_cast<int>(value));
}

struct TerminalToken {
  std::size_t open = 0; // position of '['
  std::string_view token;
};

// Bracket group that ends the (right-trimmed) text, if any.
inline std::optional<TerminalToken> find_terminal_token(std::string_view s) {
  if (s.empty() || s.back() != ']')
    return std::nullopt;
  const auto open = s.rfind('[');
  if (open == std::string_view::npos)
    return std::nullopt;
  return TerminalToken{open, s.substr(open + 1, s.size() - open - 2)};
}

} // namespace prompt

struct Stage1Output {
  std::string draft;
  QualityAssessment quality;
};

/// Splits "translation\n[token]" into the draft and its assessment.
/// Whitespace between the newline and '[' is tolerated, as is trailing
/// whitespace after ']'.
inline Stage1Output parse_stage1_output(std::string_view raw, QualityMode mode) {
  const std::string_view s = detail::trim_right(raw);
  const auto terminal = prompt::find_terminal_token(s);
  if (!terminal)
    throw Error(ErrorCode::MissingQualityToken,
                "output does not end with a bracketed quality token");
  std::size_t pos = terminal->open;
  while (pos > 0 && (s[pos - 1] == ' ' || s[pos - 1] == '\t'))
    --pos;
  if (pos == 0 || s[pos - 1] != '\n')
    throw Error(ErrorCode::MissingQualityToken,
                "quality token is not on its own line");
  auto quality = prompt::parse_token(terminal->token, mode);
  std::string_view draft = s.substr(0, pos - 1);
  if (!draft.empty() && draft.back() == '\r')
    draft.remove_suffix(1);
  return {std::string(draft), std::move(quality)};
}

/// Reads only the terminal quality token. Used in post-editing mode, where
/// the draft is supplied externally and any echoed text before the token is
/// ignored.
inline QualityAssessment parse_quality_token(std::string_view raw,
                                             QualityMode mode) {
  const auto terminal = prompt::find_terminal_token(detail::trim_right(raw));
  if (!terminal)
    throw Error(ErrorCode::MissingQualityToken,
                "output does not end with a bracketed quality token");
  return prompt::parse_token(terminal->token, mode);
}

inline std::string parse_refined_output(std::string_view raw) {
  const auto s = detail::trim(raw);
  if (s.empty())
    throw Error(ErrorCode::EmptyOutput, "refinement output is empty");
  return std::string(s);
}

} // namespace taste
