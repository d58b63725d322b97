#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "taste/error.hpp"

namespace taste::detail {

inline std::ifstream open_input(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return in;
}

inline std::ofstream open_output(const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Error(ErrorCode::IoError, "cannot write " + path.string());
  return out;
}

/// Reads a plain-text file, one segment per line. A final trailing newline
/// does not produce an extra empty segment; "\r\n" endings are accepted.
inline std::vector<std::string> read_lines(const std::filesystem::path &path) {
  auto in = open_input(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

inline void write_text(const std::filesystem::path &path,
                       const std::string &text) {
  auto out = open_output(path);
  out << text;
  if (!out)
    throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

} // namespace taste::detail
