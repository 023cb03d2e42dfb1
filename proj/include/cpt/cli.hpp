#pragma once

#include <ostream>

namespace cpt {

/// Entry point of the `cpt` command: train, predict, evaluate, inspect, synth
/// and boundary subcommands. Returns the process exit code: 0 on success,
/// 1 on data or runtime errors, 2 on usage errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cpt
