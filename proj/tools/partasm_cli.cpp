#include "commands.hpp"
#include "partasm/error.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <string>

namespace {

// Errors are reported on one line: "error: <kind>: <message>".
int fail(const std::string& kind, std::string message) {
  std::replace(message.begin(), message.end(), '\n', ' ');
  std::fprintf(stderr, "error: %s: %s\n", kind.c_str(), message.c_str());
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Progressive part assembly: data generation, training, evaluation and export"};
  app.require_subcommand(1);
  partasm::cli::register_commands(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail("usage", e.what());
    return 2;
  } catch (const partasm::Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 0;
}
