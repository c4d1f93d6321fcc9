#pragma once

// Performance indices over a trajectory log, with E as the error signal:
//   ISE  = int E'E dt        ITSE = int t E'E dt
//   CE   = int u'u dt        ACM  = sqrt(ISE / T), the time RMS of ||E||
// Integrals use the trapezoidal rule on the log grid. chatter_index is a
// supplementary measure of control roughness: RMS ||u_k - u_{k-1}|| / dt.

#include "exo/sim.hpp"

#include <span>
#include <string>
#include <vector>

namespace exo {

struct MetricsReport {
  std::string controller;
  std::string scenario;
  double ise = 0.0;
  double itse = 0.0;
  double ce = 0.0;
  double acm = 0.0;
  double chatter_index = 0.0;
  std::size_t samples = 0;
  double dt = 0.0;
};

// Throws InvalidArgument on an empty or non-uniformly sampled log.
MetricsReport compute_metrics(const TrajectoryLog& log, const std::string& controller = "",
                              const std::string& scenario = "");

std::string metrics_json(const MetricsReport& r);
MetricsReport metrics_from_json(const std::string& text);

// Rows in the given order; columns ISE, ITSE, CE, ACM and the flagged
// supplementary chatter index.
std::string comparison_markdown(std::span<const MetricsReport> reports);
std::string comparison_csv(std::span<const MetricsReport> reports);
std::vector<MetricsReport> parse_comparison_csv(const std::string& text);

}  // namespace exo
