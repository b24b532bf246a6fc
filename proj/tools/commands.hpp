#pragma once

// Subcommands of the partasm executable. Failures surface as partasm::Error.

#include "CLI11.hpp"

namespace partasm::cli {

void register_commands(CLI::App& app);

}  // namespace partasm::cli
