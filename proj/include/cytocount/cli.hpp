// Command-line driver: `cytocount synth|train|eval|sweep|plot`.
//
// Exposed as a callable so tests can run subcommands in-process. Exit codes:
// 0 success, 1 user error (bad input, bad config, missing files), 2 internal
// error.
#pragma once

namespace cyto {

inline constexpr const char* kVersion = "0.1.0";

int cli_main(int argc, const char* const* argv);

}  // namespace cyto
