#pragma once

#include <iosfwd>
#include <string>

#include "config.hpp"

namespace stackelberg::cli {

// Exit codes
constexpr int kExitPass = 0;
constexpr int kExitNumeric = 1;
constexpr int kExitConfig = 2;

int cmd_basis_check(const RunConfig& cfg, std::ostream& log);
int cmd_best_response(const RunConfig& cfg, std::ostream& log);
int cmd_train(const RunConfig& cfg, std::ostream& log);
int cmd_certify(const RunConfig& cfg, std::ostream& log);
int cmd_counterexample(const RunConfig& cfg, std::ostream& log);
int cmd_sim(const RunConfig& cfg, std::ostream& log);

// Parses argv, runs the subcommand and maps exceptions to exit codes.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace stackelberg::cli
