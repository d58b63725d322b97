#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "taste/backend.hpp"
#include "taste/detail/text.hpp"
#include "taste/error.hpp"

namespace taste {

struct ScoreRequestItem {
  std::string source;
  std::string hypothesis;
  std::string reference;
};

inline constexpr int kChrfMaxOrder = 6;
inline constexpr double kChrfBeta = 2.0;

/// chrF-style character n-gram F-score in [0,1]. Whitespace is ignored,
/// precision and recall are averaged over orders 1..6 that both strings
/// can form, then combined with recall weighted by beta = 2.
inline double lexical_score(std::string_view hypothesis, std::string_view reference) {
  auto strip = [](std::string_view s) {
    std::u32string out;
    for (char32_t cp : detail::utf8_decode(s))
      if (!detail::is_unicode_space(cp))
        out.push_back(cp);
    return out;
  };
  const auto hyp = strip(hypothesis);
  const auto ref = strip(reference);
  if (hyp == ref)
    return 1.0;

  double precision_sum = 0.0;
  double recall_sum = 0.0;
  int effective = 0;
  for (int n = 1; n <= kChrfMaxOrder; ++n) {
    const auto un = static_cast<std::size_t>(n);
    if (hyp.size() < un || ref.size() < un)
      continue;
    std::unordered_map<std::u32string_view, int> ref_counts;
    for (std::size_t i = 0; i + un <= ref.size(); ++i)
      ++ref_counts[std::u32string_view(ref).substr(i, un)];
    std::size_t matches = 0;
    for (std::size_t i = 0; i + un <= hyp.size(); ++i) {
      auto it = ref_counts.find(std::u32string_view(hyp).substr(i, un));
      if (it != ref_counts.end() && it->second > 0) {
        --it->second;
        ++matches;
      }
    }
    precision_sum += static_cast<double>(matches) / static_cast<double>(hyp.size() - un + 1);
    recall_sum += static_cast<double>(matches) / static_cast<double>(ref.size() - un + 1);
    ++effective;
  }
  if (effective == 0)
    return 0.0;
  const double p = precision_sum / effective;
  const double r = recall_sum / effective;
  const double b2 = kChrfBeta * kChrfBeta;
  const double denom = b2 * p + r;
  if (denom <= 0.0)
    return 0.0;
  return std::clamp((1.0 + b2) * p * r / denom, 0.0, 1.0);
}

/// Sentence-level quality scorer returning one [0,1] score per item.
class Scorer {
public:
  virtual ~Scorer() = default;
  virtual std::vector<double> score_batch(std::span<const ScoreRequestItem> items) = 0;
  // Recorded in manifests: "lexical" or "remote:<endpoint>".
  virtual std::string kind() const = 0;

protected:
  static void validate(std::span<const ScoreRequestItem> items) {
    if (items.empty())
      throw Error(ErrorCode::InvalidArgument, "score batch is empty");
    for (const auto &item : items)
      if (item.hypothesis.empty() || item.reference.empty())
        throw Error(ErrorCode::InvalidArgument,
                    "score items need a non-empty hypothesis and reference");
  }
};

class LexicalScorer final : public Scorer {
public:
  std::vector<double> score_batch(std::span<const ScoreRequestItem> items) override {
    validate(items);
    std::vector<double> out;
    out.reserve(items.size());
    for (const auto &item : items)
      out.push_back(lexical_score(item.hypothesis, item.reference));
    return out;
  }
  std::string kind() const override { return "lexical"; }
};

/// Thread-safe memo of scores keyed by the (source, hypothesis, reference)
/// content.
class ScoreCache {
public:
  static std::string key(const ScoreRequestItem &item) {
    std::string k;
    k.reserve(item.source.size() + item.hypothesis.size() + item.reference.size() + 24);
    for (const auto *s : {&item.source, &item.hypothesis, &item.reference}) {
      k += std::to_string(s->size());
      k += ':';
      k += *s;
    }
    return k;
  }

  std::optional<double> find(const std::string &k) const {
    std::lock_guard lock(mutex_);
    auto it = map_.find(k);
    if (it == map_.end())
      return std::nullopt;
    return it->second;
  }

  void put(const std::string &k, double v) {
    std::lock_guard lock(mutex_);
    map_.emplace(k, v);
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return map_.size();
  }

private:
  mutable std::mutex mutex_;
  std::unordered_map<std::string, double> map_;
};

struct RemoteScorerConfig {
  std::string endpoint; // base URL, e.g. http://localhost:8501
  double timeout_seconds = 300.0;
  std::size_t batch_size = 64;
  std::size_t max_in_flight = 2;
};

/// Client for the neural scoring service:
///   POST /score  {"items":[{"src","mt","ref"}]} -> {"scores":[...]}
///   GET  /health -> {"status":"ok","model":name}
/// Scores are memoized, and duplicates inside one batch are sent once.
class RemoteScorer final : public Scorer {
public:
  explicit RemoteScorer(RemoteScorerConfig cfg) : cfg_(std::move(cfg)) {
    url_ = split_endpoint(cfg_.endpoint, "");
    while (!url_.path.empty() && url_.path.back() == '/')
      url_.path.pop_back();
    cfg_.batch_size = std::max<std::size_t>(1, cfg_.batch_size);
    cfg_.max_in_flight = std::max<std::size_t>(1, cfg_.max_in_flight);
  }

  std::string kind() const override { return "remote:" + cfg_.endpoint; }

  nlohmann::json health() const {
    auto client = make_client();
    auto res = client.Get(url_.path + "/health");
    if (!res)
      throw Error(ErrorCode::ScorerUnavailable,
                  cfg_.endpoint + ": " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw Error(ErrorCode::ScorerUnavailable,
                  cfg_.endpoint + "/health returned HTTP " + std::to_string(res->status))
          .with_status(res->status);
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error &e) {
      throw Error(ErrorCode::ScorerUnavailable, std::string("bad health document: ") + e.what());
    }
  }

  std::vector<double> score_batch(std::span<const ScoreRequestItem> items) override {
    validate(items);
    std::vector<std::string> keys;
    keys.reserve(items.size());
    std::vector<std::size_t> pending; // first index of each uncached key
    std::unordered_map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < items.size(); ++i) {
      keys.push_back(ScoreCache::key(items[i]));
      if (cache_.find(keys.back()))
        continue;
      if (seen.emplace(keys.back(), i).second)
        pending.push_back(i);
    }

    std::vector<std::vector<std::size_t>> chunks;
    for (std::size_t start = 0; start < pending.size(); start += cfg_.batch_size)
      chunks.emplace_back(pending.begin() + static_cast<std::ptrdiff_t>(start),
                          pending.begin() + static_cast<std::ptrdiff_t>(
                                                std::min(pending.size(), start + cfg_.batch_size)));

    std::vector<std::optional<Error>> failures(chunks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t c = next++; c < chunks.size(); c = next++) {
        try {
          const auto scores = post_chunk(items, chunks[c]);
          for (std::size_t k = 0; k < chunks[c].size(); ++k)
            cache_.put(keys[chunks[c][k]], scores[k]);
        } catch (const Error &e) {
          failures[c] = e;
        }
      }
    };
    {
      std::vector<std::jthread> workers;
      for (std::size_t w = 0; w < std::min(cfg_.max_in_flight, chunks.size()); ++w)
        workers.emplace_back(worker);
    }
    for (auto &f : failures)
      if (f)
        throw *f;

    std::vector<double> out;
    out.reserve(items.size());
    for (const auto &k : keys)
      out.push_back(*cache_.find(k));
    return out;
  }

  std::size_t requests_sent() const { return requests_.load(); }
  std::size_t items_sent() const { return items_sent_.load(); }

private:
  httplib::Client make_client() const {
    httplib::Client client(url_.scheme_host_port);
    const auto t = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(cfg_.timeout_seconds));
    client.set_connection_timeout(t);
    client.set_read_timeout(t);
    client.set_write_timeout(t);
    return client;
  }

  std::vector<double> post_chunk(std::span<const ScoreRequestItem> items,
                                 const std::vector<std::size_t> &idx) {
    nlohmann::json body;
    body["items"] = nlohmann::json::array();
    for (auto i : idx)
      body["items"].push_back({{"src", items[i].source},
                               {"mt", items[i].hypothesis},
                               {"ref", items[i].reference}});
    ++requests_;
    items_sent_ += idx.size();
    auto client = make_client();
    auto res = client.Post(url_.path + "/score",
                           body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace),
                           "application/json");
    if (!res)
      throw Error(ErrorCode::ScorerUnavailable,
                  cfg_.endpoint + ": " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw Error(ErrorCode::ScorerUnavailable,
                  cfg_.endpoint + "/score returned HTTP " + std::to_string(res->status))
          .with_status(res->status);
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error &e) {
      throw Error(ErrorCode::ScorerUnavailable, std::string("bad /score reply: ") + e.what());
    }
    if (!reply.contains("scores") || !reply["scores"].is_array() ||
        reply["scores"].size() != idx.size())
      throw Error(ErrorCode::ScorerUnavailable, "/score reply has the wrong number of scores");
    std::vector<double> scores;
    for (const auto &s : reply["scores"]) {
      if (!s.is_number())
        throw Error(ErrorCode::ScorerUnavailable, "/score reply holds a non-number");
      const double v = s.get<double>();
      if (!(v >= 0.0 && v <= 1.0))
        throw Error(ErrorCode::ScoreOutOfRange,
                    "scorer returned " + std::to_string(v) + " outside [0,1]");
      scores.push_back(v);
    }
    return scores;
  }

  RemoteScorerConfig cfg_;
  EndpointUrl url_;
  ScoreCache cache_;
  std::atomic<std::size_t> requests_{0};
  std::atomic<std::size_t> items_sent_{0};
};

struct ScorerKind {
  enum class Type { LexicalFallback, RemoteNeural } type = Type::LexicalFallback;
  RemoteScorerConfig remote;
};

inline std::unique_ptr<Scorer> make_scorer(const ScorerKind &kind) {
  if (kind.type == ScorerKind::Type::RemoteNeural)
    return std::make_unique<RemoteScorer>(kind.remote);
  return std::make_unique<LexicalScorer>();
}

} // namespace taste
