#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cbamc::cli {

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitUsage = 2,
  kExitIo = 3,
  kExitDivergence = 4,
  kExitClassMismatch = 5,
};

struct VerifyCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Gradient checks, SNR calibration, concept truth table, parameter counts.
std::vector<VerifyCheck> run_verify_checks();

/// Regressor parameter count published alongside the reference architecture.
inline constexpr long long kPublishedRegressorParameters = 9'830'313;
inline constexpr long long kPublishedClassifierParameters = 5'129;

/// Runs one command (argv[0] is the program name). Never throws.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
/// Same, with the arguments after the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cbamc::cli
