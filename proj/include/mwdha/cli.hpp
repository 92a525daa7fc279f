#pragma once

#include <string>
#include <vector>

#include "mwdha/serialize.hpp"

namespace mwdha {

const std::vector<std::string>& subcommands();

// Every key with its default; run() echoes the merged result.
const json& default_config();
// Defaults overlaid with `partial`. Unknown keys and wrong types throw
// ValidationError naming the field path (config.<key>).
json resolve_config(const json& partial);

// Report: {schema, subcommand, experiment, config, results, advisory, wall_time_s}.
// Throws ValidationError on an unknown subcommand.
json run(const std::string& subcommand, const json& config);

// 0 when every advisory flag holds, 2 otherwise.
int advisory_exit_code(const json& report);

// Writes report/csv/run-log outputs named in the config; returns the exit code.
int emit_report(const json& report);

}  // namespace mwdha
