#pragma once

namespace agg {

/// Parses argv and dispatches to one of the subcommands (synth, train,
/// impute, predict, evaluate, sweep). Returns the process exit status:
/// 0 on success, 2 for usage errors, 1 for data/config/runtime errors.
int run_cli(int argc, char** argv);

} // namespace agg
