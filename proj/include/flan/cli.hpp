#pragma once

// Command-line front end. Verbs: train, explain, metrics, prototypes,
// selfcheck. Every verb writes JSONL reports under --out and prints a short
// human-readable summary; exit codes are 0 (success), 2 (configuration
// error), 3 (numeric failure), 4 (I/O error).

namespace flan {

int run_cli(int argc, const char* const* argv);

}  // namespace flan
