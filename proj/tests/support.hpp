#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "taste/corpus.hpp"

namespace testing_support {

namespace fs = std::filesystem;

inline fs::path test_dir() { return fs::path(TASTE_TEST_DIR); }

inline std::string read_file(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path &p, const std::string &text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string golden(const std::string &name) {
  return read_file(test_dir() / "golden" / name);
}

// Scratch directory removed at scope exit.
class TempDir {
public:
  TempDir() {
    static std::mt19937_64 gen(std::random_device{}());
    path_ = fs::temp_directory_path() / ("taste-test-" + std::to_string(gen()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;

  const fs::path &path() const { return path_; }
  fs::path operator/(const std::string &name) const { return path_ / name; }

private:
  fs::path path_;
};

// `pools` pools of `per_pool` zh-en candidates with distinct scores.
inline std::vector<taste::CandidatePool> synthetic_pools(std::size_t pools,
                                                         std::size_t per_pool,
                                                         unsigned seed = 5) {
  std::mt19937_64 gen(seed);
  std::vector<std::size_t> ranks(pools * per_pool);
  for (std::size_t i = 0; i < ranks.size(); ++i)
    ranks[i] = i;
  std::shuffle(ranks.begin(), ranks.end(), gen);
  std::vector<taste::CandidatePool> out;
  std::size_t k = 0;
  for (std::size_t p = 0; p < pools; ++p) {
    taste::CandidatePool pool;
    pool.langs = {"zh", "en"};
    pool.source = "source sentence " + std::to_string(p);
    for (std::size_t c = 0; c < per_pool; ++c) {
      taste::Candidate cand;
      cand.text = "candidate " + std::to_string(p) + "." + std::to_string(c);
      cand.raw_score = static_cast<double>(ranks[k++] + 1) /
                       static_cast<double>(ranks.size() + 1);
      cand.system_id = "sys" + std::to_string(c);
      cand.index = c;
      pool.candidates.push_back(cand);
    }
    out.push_back(pool);
  }
  return out;
}

} // namespace testing_support
