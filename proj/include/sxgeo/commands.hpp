#pragma once

#include <string>
#include <vector>

#include "sxgeo/config.hpp"

namespace sxgeo {

// Each command reads its inputs from `config`, writes its artifacts plus
// `config.resolved` into the `out` directory, and throws sxgeo::Error on
// failure.
void cmd_synth(const RunConfig& config);
void cmd_train(const RunConfig& config);
void cmd_cv(const RunConfig& config);
void cmd_explain(const RunConfig& config);
void cmd_ablate(const RunConfig& config);
void cmd_audit(const RunConfig& config);

const std::vector<std::string>& command_names();

// Prints {"error": kind, "message": ..., "exit_code": code} on stderr and
// returns `code`.
int report_error(const std::string& kind, const std::string& message, int code);

// Runs `name` and maps errors to process exit codes, printing a one-line JSON
// error record on stderr.
int run_command(const std::string& name, const RunConfig& config);

}  // namespace sxgeo
