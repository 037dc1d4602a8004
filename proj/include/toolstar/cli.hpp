#pragma once
// Command-line entry point. Exit codes: 0 ok, 1 usage error, 2 runtime error.

#include <filesystem>
#include <ostream>

namespace toolstar {

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

// Bundled data directory (toy corpus, critic cases).
std::filesystem::path default_data_dir();

}  // namespace toolstar
