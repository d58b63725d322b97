#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "taste/detail/io.hpp"
#include "taste/detail/text.hpp"
#include "taste/error.hpp"
#include "taste/prompt.hpp"

namespace taste {

using QualityTier = Label;

/// ISO 639-1 codes as they appear in corpus files.
struct LanguageCodes {
  std::string src;
  std::string tgt;

  LanguagePair display() const { return language_pair_from_codes(src, tgt); }

  auto operator<=>(const LanguageCodes &) const = default;
};

struct ParallelSegment {
  LanguageCodes langs;
  std::string source;
  std::string reference;
  std::size_t line = 0;
};

struct Candidate {
  std::string text;
  double raw_score = 0.0;
  std::string system_id;
  std::size_t index = 0;
};

struct CandidatePool {
  LanguageCodes langs;
  std::string source;
  std::vector<Candidate> candidates;
  std::size_t line = 0;
};

namespace corpus_detail {

using nlohmann::json;

inline json parse_object(const std::string &line, std::size_t lineno) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error &e) {
    throw Error(ErrorCode::MalformedLine,
                "line " + std::to_string(lineno) + ": " + e.what())
        .with_line(lineno);
  }
  if (!obj.is_object())
    throw Error(ErrorCode::MalformedLine,
                "line " + std::to_string(lineno) + ": expected a JSON object")
        .with_line(lineno);
  return obj;
}

inline std::string required_string(const json &obj, const char *key,
                                   std::size_t lineno) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null())
    throw Error(ErrorCode::EmptyField, "line " + std::to_string(lineno) +
                                           ": missing \"" + key + "\"")
        .with_line(lineno);
  if (!it->is_string())
    throw Error(ErrorCode::MalformedLine, "line " + std::to_string(lineno) +
                                              ": \"" + key +
                                              "\" is not a string")
        .with_line(lineno);
  auto value = it->get<std::string>();
  if (detail::trim(value).empty())
    throw Error(ErrorCode::EmptyField, "line " + std::to_string(lineno) +
                                           ": empty \"" + key + "\"")
        .with_line(lineno);
  return value;
}

// Calls fn(obj, lineno) for every non-blank line.
template <typename Fn> void for_each_object(std::istream &in, Fn &&fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty())
      continue;
    fn(parse_object(line, lineno), lineno);
  }
}

} // namespace corpus_detail

inline std::vector<ParallelSegment> ingest_parallel(std::istream &in) {
  std::vector<ParallelSegment> segments;
  corpus_detail::for_each_object(in, [&](const auto &obj, std::size_t lineno) {
    using corpus_detail::required_string;
    ParallelSegment seg;
    seg.langs.src = required_string(obj, "src_lang", lineno);
    seg.langs.tgt = required_string(obj, "tgt_lang", lineno);
    seg.source = required_string(obj, "source", lineno);
    seg.reference = required_string(obj, "reference", lineno);
    seg.line = lineno;
    segments.push_back(std::move(seg));
  });
  return segments;
}

/// Parallel JSONL: {"src_lang","tgt_lang","source","reference"} per line.
inline std::vector<ParallelSegment>
ingest_parallel(const std::filesystem::path &path) {
  auto in = detail::open_input(path);
  return ingest_parallel(in);
}

inline std::vector<CandidatePool> ingest_candidates(std::istream &in) {
  std::vector<CandidatePool> pools;
  corpus_detail::for_each_object(in, [&](const auto &obj, std::size_t lineno) {
    using corpus_detail::required_string;
    const auto where = "line " + std::to_string(lineno) + ": ";
    CandidatePool pool;
    pool.langs.src = required_string(obj, "src_lang", lineno);
    pool.langs.tgt = required_string(obj, "tgt_lang", lineno);
    pool.source = required_string(obj, "source", lineno);
    pool.line = lineno;

    const auto it = obj.find("candidates");
    if (it == obj.end() || !it->is_array())
      throw Error(ErrorCode::MalformedLine, where + "\"candidates\" must be an array")
          .with_line(lineno);
    if (it->empty())
      throw Error(ErrorCode::EmptyField, where + "pool has no candidates")
          .with_line(lineno);

    for (const auto &c : *it) {
      if (!c.is_object())
        throw Error(ErrorCode::MalformedLine, where + "candidate is not an object")
            .with_line(lineno);
      Candidate cand;
      cand.text = required_string(c, "text", lineno);
      cand.system_id = required_string(c, "system", lineno);
      const auto score = c.find("score");
      if (score == c.end() || !score->is_number())
        throw Error(ErrorCode::MalformedLine, where + "candidate score missing")
            .with_line(lineno);
      cand.raw_score = score->template get<double>();
      if (!(cand.raw_score >= 0.0 && cand.raw_score <= 1.0))
        throw Error(ErrorCode::ScoreOutOfRange,
                    where + "candidate score " + score->dump() +
                        " outside [0,1]")
            .with_line(lineno);
      cand.index = pool.candidates.size();
      pool.candidates.push_back(std::move(cand));
    }
    pools.push_back(std::move(pool));
  });
  return pools;
}

/// Candidate JSONL: {"src_lang","tgt_lang","source",
/// "candidates":[{"text","score","system"}]} per line.
inline std::vector<CandidatePool>
ingest_candidates(const std::filesystem::path &path) {
  auto in = detail::open_input(path);
  return ingest_candidates(in);
}

/// Tier of every candidate, indexed [pool][candidate].
class TierAssignment {
public:
  TierAssignment() = default;
  explicit TierAssignment(std::vector<std::vector<QualityTier>> tiers)
      : tiers_(std::move(tiers)) {}

  QualityTier at(std::size_t pool, std::size_t candidate) const {
    return tiers_.at(pool).at(candidate);
  }

  std::size_t pool_count() const { return tiers_.size(); }

  std::size_t count(QualityTier tier) const {
    std::size_t n = 0;
    for (const auto &pool : tiers_)
      n += static_cast<std::size_t>(std::count(pool.begin(), pool.end(), tier));
    return n;
  }

private:
  std::vector<std::vector<QualityTier>> tiers_;
};

struct TierCutoffs {
  std::size_t good = 0;
  std::size_t bad = 0;
  std::size_t medium = 0;
};

/// Top ceil(10%) are Good, bottom floor(50%) are Bad.
constexpr TierCutoffs tier_cutoffs(std::size_t n) {
  TierCutoffs c;
  c.good = (n + 9) / 10;
  c.bad = n / 2;
  c.medium = n - c.good - c.bad;
  return c;
}

struct CandidateRef {
  std::size_t pool;
  std::size_t candidate;
};

/// Orders candidates best first: score descending, then system id,
/// pool order and candidate index ascending.
inline bool ranks_before(const std::vector<CandidatePool> &pools,
                         const CandidateRef &a, const CandidateRef &b) {
  const auto &ca = pools[a.pool].candidates[a.candidate];
  const auto &cb = pools[b.pool].candidates[b.candidate];
  if (ca.raw_score != cb.raw_score)
    return ca.raw_score > cb.raw_score;
  return std::tie(ca.system_id, a.pool, ca.index) <
         std::tie(cb.system_id, b.pool, cb.index);
}

/// Global percentile tiering. Every language pair in `pools` is ranked
/// separately; within a pair all candidates of all pools form one ranking.
inline TierAssignment assign_tiers(const std::vector<CandidatePool> &pools) {
  std::map<LanguageCodes, std::vector<CandidateRef>> by_pair;
  std::size_t total = 0;
  for (std::size_t p = 0; p < pools.size(); ++p)
    for (std::size_t c = 0; c < pools[p].candidates.size(); ++c) {
      by_pair[pools[p].langs].push_back({p, c});
      ++total;
    }
  if (total == 0)
    throw Error(ErrorCode::EmptyInput, "no candidates to tier");

  std::vector<std::vector<QualityTier>> tiers(pools.size());
  for (std::size_t p = 0; p < pools.size(); ++p)
    tiers[p].assign(pools[p].candidates.size(), QualityTier::Medium);

  for (auto &[langs, refs] : by_pair) {
    std::sort(refs.begin(), refs.end(),
              [&](const CandidateRef &a, const CandidateRef &b) {
                return ranks_before(pools, a, b);
              });
    const auto cut = tier_cutoffs(refs.size());
    for (std::size_t rank = 0; rank < refs.size(); ++rank) {
      auto tier = QualityTier::Medium;
      if (rank < cut.good)
        tier = QualityTier::Good;
      else if (rank >= refs.size() - cut.bad)
        tier = QualityTier::Bad;
      tiers[refs[rank].pool][refs[rank].candidate] = tier;
    }
  }
  return TierAssignment(std::move(tiers));
}

/// Tiers for a flat list of scores under the same percentile rule, ties
/// broken by position. Used to derive gold labels for evaluation.
inline std::vector<QualityTier> assign_tiers_by_score(const std::vector<double> &scores) {
  if (scores.empty())
    throw Error(ErrorCode::EmptyInput, "no scores to tier");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const auto cut = tier_cutoffs(scores.size());
  std::vector<QualityTier> tiers(scores.size(), QualityTier::Medium);
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (rank < cut.good)
      tiers[order[rank]] = QualityTier::Good;
    else if (rank >= order.size() - cut.bad)
      tiers[order[rank]] = QualityTier::Bad;
  }
  return tiers;
}

/// Raw [0,1] score to the 0-100 integer used as a QE gold score.
/// The product is snapped to 1e-9 before rounding half away from zero, so
/// that 0.145 becomes 15 despite 0.145 * 100 == 14.499999999999998.
inline int scale_score(double raw) {
  if (!(raw >= 0.0 && raw <= 1.0))
    throw Error(ErrorCode::OutOfRange,
                "raw score " + std::to_string(raw) + " outside [0,1]");
  const double scaled = std::round(raw * 100.0 * 1e9) / 1e9;
  const long v = std::lround(scaled);
  return static_cast<int>(std::clamp(v, 0L, 100L));
}

} // namespace taste
