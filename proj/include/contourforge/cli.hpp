#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace contourforge {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

/// Runs the command line (args excludes the program name). JSON summaries
/// go to `out`, logs and usage text to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// --threads fallback: CONTOURFORGE_THREADS, else the hardware concurrency.
unsigned default_thread_count();

}  // namespace contourforge
