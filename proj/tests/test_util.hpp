#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "verifuse/encoder_hub.hpp"
#include "verifuse/fetch.hpp"
#include "verifuse/image.hpp"

namespace testutil {

using verifuse::detail::TempDir;

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
}

inline std::string read_file(const std::filesystem::path& p) { return verifuse::read_file_bytes(p); }

inline std::string solid_png(int h, int w, unsigned char r, unsigned char g, unsigned char b) {
  std::vector<unsigned char> px(static_cast<std::size_t>(h) * w * 3);
  for (std::size_t i = 0; i < px.size(); i += 3) {
    px[i] = r;
    px[i + 1] = g;
    px[i + 2] = b;
  }
  return verifuse::encode_png(h, w, px);
}

struct RunResult {
  int code = -1;
  std::string out, err;
};

/// Runs a shell command line, capturing stdout and stderr separately.
inline RunResult run(const std::string& command_line) {
  TempDir tmp;
  const auto out = tmp.path() / "out", err = tmp.path() / "err";
  const std::string cmd = command_line + " >" + verifuse::detail::shell_quote(out.string()) + " 2>" +
                          verifuse::detail::shell_quote(err.string());
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

inline std::string quote(const std::filesystem::path& p) { return verifuse::detail::shell_quote(p.string()); }

}  // namespace testutil
