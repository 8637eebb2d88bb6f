#pragma once

#include <ostream>
#include <string>

#include "config.hpp"

namespace motionsurv::cli {

/// Runs one subcommand, writes its artifacts plus manifest_<name>.json into
/// the output directory and prints a summary to `out`. Library exceptions
/// propagate; main() maps them to exit codes.
void run_command(const std::string& name, const ExperimentConfig& config, std::ostream& out, std::ostream& err);

}  // namespace motionsurv::cli
