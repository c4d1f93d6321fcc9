#pragma once

#include <string>
#include <vector>

namespace exo::cli {

enum ExitCode : int { kOk = 0, kRuntimeFault = 1, kUsageError = 2, kThresholdViolation = 3 };

// args excludes the program name.
int run(const std::vector<std::string>& args);

// Ratio thresholds checked by compare.
inline constexpr double kChatterRatio = 0.2;  // ACM and CE of ITSMC vs SMC
inline constexpr double kTrackingRatio = 0.7;  // ISE and ITSE of AITSMC vs ITSMC

}  // namespace exo::cli
