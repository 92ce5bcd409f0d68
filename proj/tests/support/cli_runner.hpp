// SPDX-License-Identifier: Apache-2.0
// Runs the semalign executable as a subprocess with a private output root.
#pragma once

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

namespace semalign::testing {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

inline std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// `root` becomes SEMALIGN_OUTPUT_ROOT and the working directory.
inline CliResult run_cli(const std::filesystem::path& root, const std::vector<std::string>& args) {
  const auto err_file = root / ".stderr";
  std::string cmd = "cd " + shell_quote(root.string()) + " && SEMALIGN_OUTPUT_ROOT=" + shell_quote(root.string()) +
                    " " + shell_quote(SEMALIGN_CLI_PATH);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " 2>" + shell_quote(err_file.string());
  CliResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err_file);
  std::filesystem::remove(err_file);
  return r;
}

/// Metrics records with the wall-clock field removed, one per line.
inline std::vector<nlohmann::json> metrics_without_time(const std::filesystem::path& file) {
  std::vector<nlohmann::json> out;
  std::istringstream in(slurp(file));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    j.erase("wall_time");
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace semalign::testing
