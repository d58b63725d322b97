#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "taste/detail/text.hpp"
#include "taste/error.hpp"
#include "taste/pipeline.hpp"
#include "taste/prompt.hpp"
#include "taste/scorer.hpp"

namespace taste {

// ---------------------------------------------------------------------------
// BLEU

namespace bleu_detail {

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

inline bool is_13a_symbol(char c) {
  // [\{-\~\[-\` -\&\(-\+\:-\@\/]
  return (c >= '{' && c <= '~') || (c >= '[' && c <= '`') ||
         (c >= ' ' && c <= '&') || (c >= '(' && c <= '+') ||
         (c >= ':' && c <= '@') || c == '/';
}

inline std::string rstrip_unicode(std::string_view s) {
  auto cps = detail::utf8_decode(s);
  while (!cps.empty() && detail::is_unicode_space(cps.back()))
    cps.pop_back();
  std::string out;
  for (char32_t cp : cps)
    detail::utf8_append(out, cp);
  return out;
}

} // namespace bleu_detail

/// mteval-v13a tokenization: punctuation and symbols split off, periods and
/// commas kept inside numbers, no lowercasing. Returns space-joined tokens.
inline std::string tokenize_13a(std::string_view text) {
  using namespace bleu_detail;
  std::string line = rstrip_unicode(text);
  detail::replace_all(line, "<skipped>", "");
  detail::replace_all(line, "-\n", "");
  detail::replace_all(line, "\n", " ");
  if (line.find('&') != std::string::npos) {
    detail::replace_all(line, "&quot;", "\"");
    detail::replace_all(line, "&amp;", "&");
    detail::replace_all(line, "&lt;", "<");
    detail::replace_all(line, "&gt;", ">");
  }
  line = " " + line + " ";

  std::string a;
  for (char c : line) {
    if (is_13a_symbol(c)) {
      a += ' ';
      a += c;
      a += ' ';
    } else {
      a += c;
    }
  }

  // Period/comma unless preceded by a digit. Matches do not overlap.
  std::string b;
  for (std::size_t i = 0; i < a.size();) {
    if (i + 1 < a.size() && !is_digit(a[i]) && (a[i + 1] == '.' || a[i + 1] == ',')) {
      b += a[i];
      b += ' ';
      b += a[i + 1];
      b += ' ';
      i += 2;
    } else {
      b += a[i++];
    }
  }

  // Period/comma unless followed by a digit.
  std::string c;
  for (std::size_t i = 0; i < b.size();) {
    if (i + 1 < b.size() && (b[i] == '.' || b[i] == ',') && !is_digit(b[i + 1])) {
      c += ' ';
      c += b[i];
      c += ' ';
      c += b[i + 1];
      i += 2;
    } else {
      c += b[i++];
    }
  }

  // Dash preceded by a digit.
  std::string d;
  for (std::size_t i = 0; i < c.size();) {
    if (i + 1 < c.size() && is_digit(c[i]) && c[i + 1] == '-') {
      d += c[i];
      d += ' ';
      d += '-';
      d += ' ';
      i += 2;
    } else {
      d += c[i++];
    }
  }

  std::string out;
  for (const auto &tok : detail::split_unicode_whitespace(d)) {
    if (!out.empty())
      out += ' ';
    out += tok;
  }
  return out;
}

inline constexpr int kBleuMaxOrder = 4;
inline constexpr std::string_view kBleuSignature =
    "nrefs:1|case:mixed|eff:no|tok:13a|smooth:exp";

struct BleuScore {
  double score = 0.0;
  std::array<double, kBleuMaxOrder> precisions{};
  std::array<std::size_t, kBleuMaxOrder> correct{};
  std::array<std::size_t, kBleuMaxOrder> total{};
  double brevity_penalty = 1.0;
  std::size_t sys_len = 0;
  std::size_t ref_len = 0;
};

/// Corpus BLEU (0-100) over single references with exponential smoothing
/// of zero-match orders.
inline BleuScore corpus_bleu(std::span<const std::string> hypotheses,
                             std::span<const std::string> references) {
  if (hypotheses.size() != references.size())
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(hypotheses.size()) + " hypotheses but " +
                    std::to_string(references.size()) + " references");
  if (hypotheses.empty())
    throw Error(ErrorCode::EmptyCorpus, "BLEU needs at least one segment");

  BleuScore s;
  for (std::size_t seg = 0; seg < hypotheses.size(); ++seg) {
    const auto hyp = detail::split_ascii_whitespace(tokenize_13a(hypotheses[seg]));
    const auto ref = detail::split_ascii_whitespace(tokenize_13a(references[seg]));
    s.sys_len += hyp.size();
    s.ref_len += ref.size();
    for (int n = 1; n <= kBleuMaxOrder; ++n) {
      const auto un = static_cast<std::size_t>(n);
      auto grams = [&](const std::vector<std::string> &toks) {
        std::map<std::string, std::size_t> counts;
        for (std::size_t i = 0; i + un <= toks.size(); ++i) {
          std::string key = toks[i];
          for (std::size_t k = 1; k < un; ++k) {
            key += ' ';
            key += toks[i + k];
          }
          ++counts[key];
        }
        return counts;
      };
      const auto hg = grams(hyp);
      const auto rg = grams(ref);
      for (const auto &[gram, count] : hg) {
        s.total[un - 1] += count;
        auto it = rg.find(gram);
        if (it != rg.end())
          s.correct[un - 1] += std::min(count, it->second);
      }
    }
  }

  if (s.sys_len < s.ref_len)
    s.brevity_penalty = s.sys_len > 0
                            ? std::exp(1.0 - static_cast<double>(s.ref_len) /
                                                 static_cast<double>(s.sys_len))
                            : 0.0;

  if (std::all_of(s.correct.begin(), s.correct.end(), [](auto c) { return c == 0; }))
    return s;

  double smooth = 1.0;
  for (int n = 0; n < kBleuMaxOrder; ++n) {
    if (s.total[n] == 0)
      break;
    if (s.correct[n] == 0) {
      smooth *= 2.0;
      s.precisions[n] = 100.0 / (smooth * static_cast<double>(s.total[n]));
    } else {
      s.precisions[n] = 100.0 * static_cast<double>(s.correct[n]) /
                        static_cast<double>(s.total[n]);
    }
  }
  // Mean of log(p/100) rather than log(p): identical corpora give exactly
  // 100 instead of 100.00000000000004.
  double log_sum = 0.0;
  for (double p : s.precisions)
    log_sum += p == 0.0 ? -9999999999.0 : std::log(p / 100.0);
  s.score = 100.0 * s.brevity_penalty * std::exp(log_sum / kBleuMaxOrder);
  return s;
}

// ---------------------------------------------------------------------------
// Edit distance

/// Insertions and deletions only (a substitution costs 2), over code points.
/// Computed as |a| + |b| - 2 * LCS(a, b).
inline std::size_t indel_distance(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size())
    std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1, 0);
  for (char32_t ca : a) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = ca == b[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return a.size() + b.size() - 2 * row[b.size()];
}

inline std::size_t indel_distance(std::string_view a, std::string_view b) {
  return indel_distance(detail::utf8_decode(a), detail::utf8_decode(b));
}

struct PairEditDistance {
  std::size_t lev_dist = 0;
  std::size_t len1 = 0;
  std::size_t len2 = 0;
  double normalized = 0.0; // lev_dist / (len1 + len2), 0 for two empty strings
};

struct EditDistanceStats {
  std::vector<PairEditDistance> pairs;
  double mean = 0.0;
};

inline PairEditDistance pair_edit_distance(std::string_view a, std::string_view b) {
  const auto ua = detail::utf8_decode(a);
  const auto ub = detail::utf8_decode(b);
  PairEditDistance p;
  p.lev_dist = indel_distance(ua, ub);
  p.len1 = ua.size();
  p.len2 = ub.size();
  if (p.len1 + p.len2 > 0)
    p.normalized = static_cast<double>(p.lev_dist) / static_cast<double>(p.len1 + p.len2);
  return p;
}

/// Mean normalized indel distance, i.e. the mean of 1 - ratio.
inline EditDistanceStats
avg_edit_distance(std::span<const std::pair<std::string, std::string>> pairs) {
  if (pairs.empty())
    throw Error(ErrorCode::EmptyInput, "edit distance needs at least one pair");
  EditDistanceStats stats;
  double sum = 0.0;
  for (const auto &[a, b] : pairs) {
    stats.pairs.push_back(pair_edit_distance(a, b));
    sum += stats.pairs.back().normalized;
  }
  stats.mean = sum / static_cast<double>(pairs.size());
  return stats;
}

// ---------------------------------------------------------------------------
// Quality-prediction metrics

/// Rows are gold labels, columns predictions, both in Good/Medium/Bad order.
struct ConfusionMatrix3 {
  std::array<std::array<std::size_t, 3>, 3> counts{};

  void add(Label gold, Label predicted) { ++counts[index_of(gold)][index_of(predicted)]; }

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto &row : counts)
      for (auto c : row)
        n += c;
    return n;
  }
};

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct ClassificationReport {
  std::array<ClassScores, 3> per_class{};
  double precision = 0.0; // support-weighted
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
};

inline ClassificationReport classification_metrics(const ConfusionMatrix3 &m) {
  const std::size_t total = m.total();
  if (total == 0)
    throw Error(ErrorCode::EmptyMatrix, "confusion matrix is empty");
  auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };

  ClassificationReport r;
  std::size_t trace = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    std::size_t predicted = 0;
    std::size_t gold = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      predicted += m.counts[j][k];
      gold += m.counts[k][j];
    }
    const std::size_t tp = m.counts[k][k];
    trace += tp;
    auto &c = r.per_class[k];
    c.precision = ratio(tp, predicted);
    c.recall = ratio(tp, gold);
    c.f1 = c.precision + c.recall > 0.0
               ? 2.0 * c.precision * c.recall / (c.precision + c.recall)
               : 0.0;
    c.support = gold;
    const double w = static_cast<double>(gold) / static_cast<double>(total);
    r.precision += w * c.precision;
    r.recall += w * c.recall;
    r.f1 += w * c.f1;
  }
  r.accuracy = ratio(trace, total);
  return r;
}

/// Product-moment correlation, clamped to [-1, 1].
inline double pearson_r(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size())
    throw Error(ErrorCode::LengthMismatch, "pearson_r inputs differ in length");
  if (xs.size() < 2)
    throw Error(ErrorCode::LengthMismatch, "pearson_r needs at least two points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw Error(ErrorCode::ConstantVector, "pearson_r input is constant");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Unaligned translation words

/// (source index, target index) pairs of one segment.
using AlignmentSet = std::vector<std::pair<std::size_t, std::size_t>>;

/// Parses one Pharaoh line: space-separated, 0-based "i-j" pairs.
inline AlignmentSet parse_pharaoh_line(std::string_view line) {
  AlignmentSet out;
  for (const auto &tok : detail::split_ascii_whitespace(line)) {
    const auto dash = tok.find('-');
    auto parse_index = [&](std::string_view digits) {
      std::size_t v = 0;
      auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
      if (digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size())
        throw Error(ErrorCode::MalformedLine, "bad alignment pair '" + tok + "'");
      return v;
    };
    if (dash == std::string::npos)
      throw Error(ErrorCode::MalformedLine, "bad alignment pair '" + tok + "'");
    const std::string_view t(tok);
    out.emplace_back(parse_index(t.substr(0, dash)), parse_index(t.substr(dash + 1)));
  }
  return out;
}

struct UtwResult {
  double rate = 0.0; // percent
  std::size_t unaligned = 0;
  std::size_t total_tokens = 0;
};

/// Percentage of target token positions that appear in no alignment pair.
inline UtwResult utw_rate(std::span<const std::vector<std::string>> target_tokens,
                          std::span<const AlignmentSet> alignments) {
  if (target_tokens.size() != alignments.size())
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(target_tokens.size()) + " segments but " +
                    std::to_string(alignments.size()) + " alignment lines");
  UtwResult r;
  for (std::size_t seg = 0; seg < target_tokens.size(); ++seg) {
    std::vector<bool> covered(target_tokens[seg].size(), false);
    for (const auto &[src, tgt] : alignments[seg]) {
      if (tgt >= covered.size())
        throw Error(ErrorCode::IndexOutOfRange,
                    "segment " + std::to_string(seg) + ": target index " +
                        std::to_string(tgt) + " >= " + std::to_string(covered.size()))
            .with_line(seg + 1);
      covered[tgt] = true;
    }
    r.total_tokens += covered.size();
    r.unaligned += static_cast<std::size_t>(std::count(covered.begin(), covered.end(), false));
  }
  if (r.total_tokens == 0)
    throw Error(ErrorCode::EmptyInput, "no target tokens");
  r.rate = 100.0 * static_cast<double>(r.unaligned) / static_cast<double>(r.total_tokens);
  return r;
}

// ---------------------------------------------------------------------------
// Refinement deltas

struct DeltaRow {
  Label label = Label::Good;
  std::size_t count = 0;
  double proportion = 0.0;          // percent of scored records
  std::optional<double> mean_delta; // score(refined) - score(draft), x100
};

struct DeltaTable {
  std::array<DeltaRow, 3> rows{};
  std::size_t scored = 0;
  std::size_t skipped = 0; // failed records or records without a label
};

/// Splits successful records by predicted label and reports the mean score
/// gain of refinement per label. `references` is indexed by record id.
inline DeltaTable delta_by_label(std::span<const ReflectionRecord> records,
                                 std::span<const std::string> references, Scorer &scorer) {
  DeltaTable table;
  std::vector<const ReflectionRecord *> usable;
  for (const auto &rec : records) {
    if (!rec.ok() || !rec.refined || rec.draft.empty() || !rec.quality ||
        rec.quality->mode() != QualityMode::TC) {
      ++table.skipped;
      continue;
    }
    if (rec.id >= references.size())
      throw Error(ErrorCode::LengthMismatch,
                  "no reference for record " + std::to_string(rec.id));
    usable.push_back(&rec);
  }
  for (std::size_t k = 0; k < 3; ++k)
    table.rows[k].label = kAllLabels[k];
  if (usable.empty())
    return table;

  std::vector<ScoreRequestItem> items;
  items.reserve(2 * usable.size());
  for (const auto *rec : usable) {
    const auto &ref = references[rec->id];
    items.push_back({rec->source, rec->draft, ref});
    items.push_back({rec->source, *rec->refined, ref});
  }
  const auto scores = scorer.score_batch(items);

  std::array<double, 3> sums{};
  for (std::size_t i = 0; i < usable.size(); ++i) {
    const auto k = index_of(usable[i]->quality->label_value());
    ++table.rows[k].count;
    sums[k] += 100.0 * (scores[2 * i + 1] - scores[2 * i]);
  }
  table.scored = usable.size();
  for (std::size_t k = 0; k < 3; ++k) {
    auto &row = table.rows[k];
    row.proportion = 100.0 * static_cast<double>(row.count) / static_cast<double>(table.scored);
    if (row.count > 0)
      row.mean_delta = sums[k] / static_cast<double>(row.count);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Report

struct PearsonResult {
  double r = 0.0;
  std::size_t n = 0;
};

/// Corpus-level evaluation; only the requested sections are populated.
/// `inputs` maps each section name to the digests of the files it read.
struct EvalReport {
  std::optional<BleuScore> bleu;
  std::optional<EditDistanceStats> edit_distance;
  std::optional<ClassificationReport> labels;
  std::optional<PearsonResult> pearson;
  std::optional<UtwResult> utw;
  std::optional<DeltaTable> delta;
  std::string scorer_kind;
  std::map<std::string, nlohmann::ordered_json> inputs;
};

inline nlohmann::ordered_json to_json(const EvalReport &r) {
  using oj = nlohmann::ordered_json;
  oj j = oj::object();
  auto with_inputs = [&](const char *name, oj section) {
    if (auto it = r.inputs.find(name); it != r.inputs.end())
      section["inputs"] = it->second;
    j[name] = std::move(section);
  };
  if (r.bleu) {
    oj s;
    s["score"] = r.bleu->score;
    s["precisions"] = r.bleu->precisions;
    s["brevity_penalty"] = r.bleu->brevity_penalty;
    s["sys_len"] = r.bleu->sys_len;
    s["ref_len"] = r.bleu->ref_len;
    s["signature"] = std::string(kBleuSignature);
    with_inputs("bleu", std::move(s));
  }
  if (r.edit_distance) {
    oj s;
    s["mean"] = r.edit_distance->mean;
    s["mean_percent"] = 100.0 * r.edit_distance->mean;
    s["pairs"] = r.edit_distance->pairs.size();
    s["unit"] = "characters";
    s["distance"] = "indel";
    with_inputs("edit_distance", std::move(s));
  }
  if (r.labels) {
    oj s;
    s["precision"] = r.labels->precision;
    s["recall"] = r.labels->recall;
    s["f1"] = r.labels->f1;
    s["accuracy"] = r.labels->accuracy;
    s["weighting"] = "gold support";
    oj per = oj::object();
    for (Label l : kAllLabels) {
      const auto &c = r.labels->per_class[index_of(l)];
      per[std::string(to_string(l))] = {
          {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}};
    }
    s["per_class"] = std::move(per);
    with_inputs("labels", std::move(s));
  }
  if (r.pearson) {
    oj s;
    s["r"] = r.pearson->r;
    s["n"] = r.pearson->n;
    with_inputs("pearson", std::move(s));
  }
  if (r.utw) {
    oj s;
    s["rate_percent"] = r.utw->rate;
    s["unaligned"] = r.utw->unaligned;
    s["total_tokens"] = r.utw->total_tokens;
    s["tokenization"] = "whitespace";
    with_inputs("utw", std::move(s));
  }
  if (r.delta) {
    oj s;
    s["scorer"] = r.scorer_kind;
    s["scored"] = r.delta->scored;
    s["skipped"] = r.delta->skipped;
    oj rows = oj::array();
    for (const auto &row : r.delta->rows)
      rows.push_back({{"label", std::string(to_string(row.label))},
                      {"count", row.count},
                      {"proportion_percent", row.proportion},
                      {"mean_delta", row.mean_delta ? oj(*row.mean_delta) : oj(nullptr)}});
    s["rows"] = std::move(rows);
    with_inputs("delta", std::move(s));
  }
  return j;
}

inline std::string to_table(const EvalReport &r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  auto row = [&](std::string_view name, const std::string &value) {
    out << std::left << std::setw(28) << name << value << '\n';
  };
  auto num = [](double v, int prec = 2) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(prec) << v;
    return s.str();
  };
  if (r.bleu)
    row("BLEU", num(r.bleu->score) + "  (" + std::string(kBleuSignature) + ")");
  if (r.edit_distance)
    row("Avg edit distance (%)", num(100.0 * r.edit_distance->mean) + "  over " +
                                     std::to_string(r.edit_distance->pairs.size()) + " pairs");
  if (r.labels) {
    row("Weighted precision", num(100.0 * r.labels->precision));
    row("Weighted recall", num(100.0 * r.labels->recall));
    row("Weighted F1", num(100.0 * r.labels->f1));
  }
  if (r.pearson)
    row("Pearson r", num(r.pearson->r, 4) + "  (n=" + std::to_string(r.pearson->n) + ")");
  if (r.utw)
    row("UTW (%)", num(r.utw->rate) + "  (" + std::to_string(r.utw->unaligned) + "/" +
                       std::to_string(r.utw->total_tokens) + ")");
  if (r.delta) {
    out << "Label     Proportion(%)  Delta\n";
    for (const auto &d : r.delta->rows)
      out << std::left << std::setw(10) << to_string(d.label) << std::setw(15)
          << num(d.proportion) << (d.mean_delta ? num(*d.mean_delta) : std::string("-"))
          << '\n';
  }
  return out.str();
}

} // namespace taste
