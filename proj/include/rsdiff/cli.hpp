#pragma once

#include <ostream>
#include <string>

#include "rsdiff/config.hpp"

namespace rsdiff {

struct ParsedCommand {
    std::string command;  // empty when only help/version output was requested
    RunConfig config;
};

/// Parses `rsdiff <command> [--config file] [flags]`. Defaults, then the config file, then flags.
/// Throws ConfigError on usage errors.
ParsedCommand parse_command_line(int argc, const char* const* argv, std::ostream& out);

/// Runs a parsed command. Throws on failure.
void run_command(const ParsedCommand& cmd, std::ostream& out);

/// Full entry point: parse, validate, run; reports errors on `err`. Returns the process exit status.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rsdiff
