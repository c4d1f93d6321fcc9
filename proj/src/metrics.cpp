#include "exo/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <sstream>

namespace exo {

MetricsReport compute_metrics(const TrajectoryLog& log, const std::string& controller, const std::string& scenario) {
  const auto& rows = log.rows;
  if (rows.empty()) throw InvalidArgument("cannot compute metrics of an empty log");
  MetricsReport r;
  r.controller = controller;
  r.scenario = scenario;
  r.samples = rows.size();
  r.dt = log.dt;
  if (rows.size() > 1) {
    const double dt = rows[1].t - rows[0].t;
    if (!(dt > 0.0)) throw InvalidArgument("log time stamps must increase");
    for (std::size_t k = 1; k < rows.size(); ++k)
      if (std::abs((rows[k].t - rows[k - 1].t) - dt) > 1e-9 * std::max(1.0, std::abs(rows[k].t)))
        throw InvalidArgument("log is not uniformly sampled");
    r.dt = dt;
  }

  double du2 = 0.0;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const TrajectoryRow& a = rows[k - 1];
    const TrajectoryRow& b = rows[k];
    const double h = b.t - a.t;
    const double ea = a.E.squaredNorm(), eb = b.E.squaredNorm();
    r.ise += 0.5 * h * (ea + eb);
    r.itse += 0.5 * h * (a.t * ea + b.t * eb);
    r.ce += 0.5 * h * (a.u.squaredNorm() + b.u.squaredNorm());
    du2 += (b.u - a.u).squaredNorm();
  }
  // time-weighted RMS, so it converges with the integrals under refinement
  const double span = rows.back().t - rows.front().t;
  r.acm = rows.size() > 1 ? std::sqrt(r.ise / span) : rows[0].E.norm();
  if (rows.size() > 1) r.chatter_index = std::sqrt(du2 / static_cast<double>(rows.size() - 1)) / r.dt;
  return r;
}

std::string metrics_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["controller"] = r.controller;
  j["scenario"] = r.scenario;
  j["ISE"] = r.ise;
  j["ITSE"] = r.itse;
  j["CE"] = r.ce;
  j["ACM"] = r.acm;
  j["chatter_index_supplementary"] = r.chatter_index;
  j["samples"] = r.samples;
  j["dt"] = r.dt;
  return j.dump(2) + "\n";
}

MetricsReport metrics_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    MetricsReport r;
    r.controller = j.at("controller").get<std::string>();
    r.scenario = j.at("scenario").get<std::string>();
    r.ise = j.at("ISE").get<double>();
    r.itse = j.at("ITSE").get<double>();
    r.ce = j.at("CE").get<double>();
    r.acm = j.at("ACM").get<double>();
    r.chatter_index = j.at("chatter_index_supplementary").get<double>();
    r.samples = j.at("samples").get<std::size_t>();
    r.dt = j.at("dt").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed metrics JSON: ") + e.what());
  }
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::string comparison_markdown(std::span<const MetricsReport> reports) {
  std::string s = "| Controller | ISE | ITSE | CE | ACM | chatter index* |\n|---|---|---|---|---|---|\n";
  for (const auto& r : reports) {
    s += "| " + r.controller;
    for (double v : {r.ise, r.itse, r.ce, r.acm, r.chatter_index}) s += " | " + fmt("%.6g", v);
    s += " |\n";
  }
  s += "\n*supplementary control-roughness index, RMS ||u_k - u_{k-1}|| / dt; not one of the four indices.\n";
  return s;
}

std::string comparison_csv(std::span<const MetricsReport> reports) {
  std::string s = "controller,scenario,ISE,ITSE,CE,ACM,chatter_index_supplementary\n";
  for (const auto& r : reports) {
    s += r.controller + "," + r.scenario;
    for (double v : {r.ise, r.itse, r.ce, r.acm, r.chatter_index}) s += "," + fmt("%.17g", v);
    s += "\n";
  }
  return s;
}

std::vector<MetricsReport> parse_comparison_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "controller,scenario,ISE,ITSE,CE,ACM,chatter_index_supplementary")
    throw InvalidArgument("unexpected comparison CSV header");
  std::vector<MetricsReport> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::string> cells;
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    if (cells.size() != 7) throw InvalidArgument("comparison CSV row has the wrong number of cells");
    MetricsReport r;
    r.controller = cells[0];
    r.scenario = cells[1];
    r.ise = std::stod(cells[2]);
    r.itse = std::stod(cells[3]);
    r.ce = std::stod(cells[4]);
    r.acm = std::stod(cells[5]);
    r.chatter_index = std::stod(cells[6]);
    out.push_back(r);
  }
  return out;
}

}  // namespace exo
