#pragma once

#include <string>
#include <vector>

// Command-line entry point, linked into the `ovgsr` binary and callable
// in-process from tests. Subcommands: split, rationales, train, eval,
// report, gradcheck. Every config key is exposed as a flag of the same
// dotted name (e.g. --optim.lr) on every subcommand, applied on top of
// an optional --config file. Exit codes: 0 success, 1 validation or
// usage error, 2 runtime failure.
namespace ovgsr {

int run_cli(int argc, const char* const* argv);

// Convenience for tests: argv without the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace ovgsr
