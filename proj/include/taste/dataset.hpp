#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "taste/corpus.hpp"
#include "taste/detail/io.hpp"
#include "taste/detail/rng.hpp"
#include "taste/error.hpp"
#include "taste/prompt.hpp"

namespace taste {

struct SftInstance {
  TaskKind task;
  std::string prompt;
  std::string completion;
};

/// Instance counts per tier, Good/Medium/Bad.
struct TierQuota {
  std::size_t good = 0;
  std::size_t medium = 0;
  std::size_t bad = 0;

  std::size_t at(QualityTier tier) const {
    switch (tier) {
    case QualityTier::Good: return good;
    case QualityTier::Medium: return medium;
    case QualityTier::Bad: return bad;
    }
    return 0;
  }
  std::size_t total() const { return good + medium + bad; }
};

struct QuotaConfig {
  TierQuota qp_per_tier;
  TierQuota dr_per_tier;
  std::uint64_t seed = 1;
  // Take everything available instead of failing when a tier runs short.
  bool allow_undersample = false;
};

struct BuildResult {
  std::vector<SftInstance> instances;
  std::size_t undersampled_tiers = 0;
  std::size_t skipped_pools = 0;
};

namespace dataset_detail {

// Independent RNG stream per builder so that TC and QE sets built from one
// seed do not draw identical candidate sequences.
inline std::uint64_t stream_of(TaskKind kind) {
  return static_cast<std::uint64_t>(kind) + 1;
}

inline std::vector<CandidateRef>
take_quota(std::vector<CandidateRef> eligible, QualityTier tier,
           std::size_t want, bool allow_undersample, detail::SeededRng &rng,
           std::size_t &undersampled) {
  if (eligible.size() < want) {
    if (!allow_undersample)
      throw Error(ErrorCode::InsufficientPool,
                  "tier " + std::string(to_string(tier)) + " has " +
                      std::to_string(eligible.size()) + " candidates, quota " +
                      std::to_string(want));
    ++undersampled;
    want = eligible.size();
  }
  rng.sample_prefix(eligible, want);
  eligible.resize(want);
  return eligible;
}

inline QualityAssessment gold_assessment(const Candidate &c, QualityTier tier,
                                         QualityMode mode) {
  return mode == QualityMode::TC ? QualityAssessment::label(tier)
                                 : QualityAssessment::score(scale_score(c.raw_score));
}

} // namespace dataset_detail

inline std::vector<SftInstance>
build_basic_translation(const std::vector<ParallelSegment> &segments) {
  std::vector<SftInstance> out;
  out.reserve(segments.size());
  for (const auto &seg : segments) {
    auto rendered = render_basic_translation(seg.langs.display(), seg.source);
    out.push_back({rendered.task, std::move(rendered.text), seg.reference});
  }
  return out;
}

/// Quality Prediction set: sampled candidates with their gold label or
/// scaled score appended as "\n[token]".
inline BuildResult build_quality_prediction(const std::vector<CandidatePool> &pools,
                                            const TierAssignment &tiers,
                                            QualityMode mode,
                                            const QuotaConfig &quota) {
  const TaskKind task = quality_prediction_task(mode);
  detail::SeededRng rng(quota.seed, dataset_detail::stream_of(task));
  BuildResult result;

  for (QualityTier tier : kAllLabels) {
    std::vector<CandidateRef> eligible;
    for (std::size_t p = 0; p < pools.size(); ++p)
      for (std::size_t c = 0; c < pools[p].candidates.size(); ++c)
        if (tiers.at(p, c) == tier)
          eligible.push_back({p, c});

    const auto picked = dataset_detail::take_quota(
        std::move(eligible), tier, quota.qp_per_tier.at(tier),
        quota.allow_undersample, rng, result.undersampled_tiers);

    for (const auto &ref : picked) {
      const auto &pool = pools[ref.pool];
      const auto &cand = pool.candidates[ref.candidate];
      auto rendered =
          render_quality_prediction(pool.langs.display(), pool.source, mode);
      const auto q = dataset_detail::gold_assessment(cand, tier, mode);
      result.instances.push_back(
          {task, std::move(rendered.text), cand.text + "\n" + q.bracketed()});
    }
  }
  rng.shuffle(result.instances);
  return result;
}

/// Index of the pool's best candidate under the corpus tie-break.
inline std::size_t pool_reference_index(const std::vector<CandidatePool> &pools,
                                        std::size_t pool) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < pools[pool].candidates.size(); ++c)
    if (ranks_before(pools, {pool, c}, {pool, best}))
      best = c;
  return best;
}

/// Draft Refinement set: the pool's best candidate is the completion and
/// the draft is drawn from the remaining candidates of the requested tier.
inline BuildResult build_draft_refinement(const std::vector<CandidatePool> &pools,
                                          const TierAssignment &tiers,
                                          QualityMode mode,
                                          const QuotaConfig &quota) {
  const TaskKind task = draft_refinement_task(mode);
  detail::SeededRng rng(quota.seed, dataset_detail::stream_of(task));
  BuildResult result;

  std::vector<std::size_t> reference(pools.size(), 0);
  std::vector<bool> usable(pools.size(), false);
  for (std::size_t p = 0; p < pools.size(); ++p) {
    if (pools[p].candidates.size() < 2) {
      ++result.skipped_pools;
      continue;
    }
    usable[p] = true;
    reference[p] = pool_reference_index(pools, p);
  }

  for (QualityTier tier : kAllLabels) {
    std::vector<CandidateRef> eligible;
    for (std::size_t p = 0; p < pools.size(); ++p) {
      if (!usable[p])
        continue;
      for (std::size_t c = 0; c < pools[p].candidates.size(); ++c)
        if (c != reference[p] && tiers.at(p, c) == tier)
          eligible.push_back({p, c});
    }

    const auto picked = dataset_detail::take_quota(
        std::move(eligible), tier, quota.dr_per_tier.at(tier),
        quota.allow_undersample, rng, result.undersampled_tiers);

    for (const auto &ref : picked) {
      const auto &pool = pools[ref.pool];
      const auto &draft = pool.candidates[ref.candidate];
      const auto q = dataset_detail::gold_assessment(draft, tier, mode);
      auto rendered = render_draft_refinement(pool.langs.display(), pool.source,
                                              draft.text, mode, q);
      result.instances.push_back({task, std::move(rendered.text),
                                  pool.candidates[reference[ref.pool]].text});
    }
  }
  rng.shuffle(result.instances);
  return result;
}

inline nlohmann::ordered_json to_json(const SftInstance &inst) {
  nlohmann::ordered_json j;
  j["task"] = std::string(to_string(inst.task));
  j["prompt"] = inst.prompt;
  j["completion"] = inst.completion;
  return j;
}

inline std::size_t emit_jsonl(const std::vector<SftInstance> &instances,
                              std::ostream &out) {
  for (const auto &inst : instances)
    out << to_json(inst).dump(-1, ' ', false,
                              nlohmann::json::error_handler_t::replace)
        << '\n';
  return instances.size();
}

/// One {"task","prompt","completion"} object per line.
inline std::size_t emit_jsonl(const std::vector<SftInstance> &instances,
                              const std::filesystem::path &path) {
  auto out = detail::open_output(path);
  const auto n = emit_jsonl(instances, out);
  out.flush();
  if (!out)
    throw Error(ErrorCode::IoError, "write failed for " + path.string());
  return n;
}

} // namespace taste
