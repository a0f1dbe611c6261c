#pragma once

#include <iosfwd>

namespace effloc {

/// Command-line entry point (synth-gen | train | eval | profile |
/// grad-check). Returns the process exit code: 0 success, 1 usage,
/// 2 data/format, 3 numeric failure. Output streams are injectable for
/// tests.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace effloc
