#pragma once

// The `persona` command line: ingest, synth, train, eval, profile-pred, chat
// and serve. Exit codes: 0 success, 1 rejected input, 2 runtime failure.

#include <iosfwd>
#include <string>
#include <vector>

namespace persona {

// `args` excludes the program name. `in` feeds the chat REPL.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace persona
