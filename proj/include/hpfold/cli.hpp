#pragma once

// Command-line front end: train, evaluate, enumerate, bench, export.
//
// Exit codes: 0 success, 2 usage or configuration error (bad flags, unknown
// benchmark id, invalid notation, unreadable checkpoint, enumeration limit),
// 1 runtime failure.

#include <iosfwd>
#include <string>
#include <vector>

namespace hpfold::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hpfold::cli
