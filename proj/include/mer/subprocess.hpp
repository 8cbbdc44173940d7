#pragma once

#include <map>
#include <string>
#include <vector>

namespace mer {

struct ProcessResult {
  int exit_code = 0;
  std::string out;
  std::string err;
};

// Splits a command template on whitespace, honoring single and double quotes,
// and substitutes `{name}` placeholders inside each argument.
std::vector<std::string> expand_command(const std::string& command_template,
                                        const std::map<std::string, std::string>& vars);

// Runs argv[0] (PATH lookup) with `input` on stdin, capturing both output
// streams. Throws Error(DecoderNotFound) when the executable cannot be
// started; callers remap the kind when it is not a decoder.
ProcessResult run_process(const std::vector<std::string>& argv,
                          const std::string& input = {});

}  // namespace mer
