#include "fatnet/analysis.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "fatnet/error.hpp"
#include "fatnet/transform.hpp"

namespace fatnet {

TilingPlan tiling_plan(int64_t system_resolution, int64_t input_size,
                       int64_t kernel_size) {
  require(system_resolution >= 1 && input_size >= 1 && kernel_size >= 1,
          "tiling_plan: all sizes must be >= 1");
  TilingPlan plan;
  plan.system_resolution = system_resolution;
  plan.input_size = input_size;
  plan.kernel_size = kernel_size;
  const int64_t padded = input_size + kernel_size - 1;
  const int64_t per_side = system_resolution / padded;
  plan.capacity = per_side * per_side;
  if (plan.capacity == 0)
    plan.warning = "padded input (" + std::to_string(padded) +
                   " px) exceeds the frame (" +
                   std::to_string(system_resolution) + " px); nothing fits";
  return plan;
}

int64_t batch_capacity(int64_t system_resolution, int64_t input_size,
                       int64_t kernel_size) {
  return tiling_plan(system_resolution, input_size, kernel_size).capacity;
}

LatencyReport optical_latency(int64_t conv_ops, int64_t batch, double frame_rate) {
  require(conv_ops >= 1 && batch >= 1, "optical_latency: counts must be >= 1");
  require(frame_rate > 0.0, "optical_latency: frame rate must be positive");
  LatencyReport r;
  r.conv_ops = conv_ops;
  r.batch = batch;
  r.frame_rate = frame_rate;
  r.seconds_per_input = 4.0 * static_cast<double>(conv_ops) /
                        (static_cast<double>(batch) * frame_rate);
  return r;
}

CompareReport compare(const std::vector<NetworkSpec>& networks,
                      const CompareOptions& options) {
  require(!networks.empty(), "compare: need at least one network");
  require(options.frame_rate > 0.0 || options.batches.empty(),
          "compare: frame rate must be positive when batches are given");

  CompareReport report;
  report.batches = options.batches;
  report.frame_rate = options.frame_rate;
  report.tiling = options.tiling;

  if (options.tiling) {
    if (!options.tiling->warning.empty())
      report.warnings.push_back(options.tiling->warning);
    for (int64_t b : options.batches) {
      if (b <= options.tiling->capacity) continue;
      const std::string msg =
          "batch " + std::to_string(b) + " exceeds the tiling capacity " +
          std::to_string(options.tiling->capacity) + " of a " +
          std::to_string(options.tiling->system_resolution) + " px frame";
      require(options.allow_over_capacity, "compare: " + msg);
      report.warnings.push_back(msg);
    }
  }

  const int64_t baseline_ops = count_conv_ops(networks.front());
  for (const NetworkSpec& net : networks) {
    CompareRow row;
    row.name = net.name.empty() ? "unnamed" : net.name;
    row.conv_ops = count_conv_ops(net);
    row.ratio_to_baseline =
        static_cast<double>(row.conv_ops) / static_cast<double>(baseline_ops);
    row.speedup_vs_baseline =
        static_cast<double>(baseline_ops) / static_cast<double>(row.conv_ops);
    for (int64_t b : options.batches)
      row.latency_seconds.push_back(
          optical_latency(row.conv_ops, b, options.frame_rate).seconds_per_input);
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string format_text(const CompareReport& report) {
  std::ostringstream os;
  size_t name_w = 8;
  for (const CompareRow& r : report.rows) name_w = std::max(name_w, r.name.size());
  name_w += 2;

  os << std::left << std::setw(static_cast<int>(name_w)) << "network"
     << std::right << std::setw(12) << "conv ops" << std::setw(8) << "ratio";
  for (int64_t b : report.batches) {
    std::ostringstream h;
    h << "s/input@" << b;
    os << std::setw(14) << h.str();
  }
  os << "\n";

  for (const CompareRow& r : report.rows) {
    os << std::left << std::setw(static_cast<int>(name_w)) << r.name
       << std::right << std::setw(12) << r.conv_ops << std::setw(8)
       << std::fixed << std::setprecision(2) << r.ratio_to_baseline;
    os.unsetf(std::ios::fixed);
    for (double s : r.latency_seconds)
      os << std::setw(14) << std::setprecision(4) << std::scientific << s;
    os.unsetf(std::ios::scientific);
    os << "\n";
  }
  if (report.tiling)
    os << "tiling capacity: " << report.tiling->capacity << " inputs per "
       << report.tiling->system_resolution << " px frame\n";
  for (size_t i = 1; i < report.rows.size(); ++i) {
    const CompareRow& r = report.rows[i];
    os << r.name << ": " << std::fixed << std::setprecision(1)
       << r.speedup_vs_baseline << "x fewer convolution operations than "
       << report.rows.front().name << "\n";
    os.unsetf(std::ios::fixed);
  }
  for (const std::string& w : report.warnings) os << "warning: " << w << "\n";
  return os.str();
}

namespace {

nlohmann::json tiling_to_json(const TilingPlan& t) {
  return {{"system_resolution", t.system_resolution},
          {"input_size", t.input_size},
          {"kernel_size", t.kernel_size},
          {"capacity", t.capacity},
          {"warning", t.warning}};
}

TilingPlan tiling_from_json(const nlohmann::json& j) {
  TilingPlan t;
  t.system_resolution = j.at("system_resolution").get<int64_t>();
  t.input_size = j.at("input_size").get<int64_t>();
  t.kernel_size = j.at("kernel_size").get<int64_t>();
  t.capacity = j.at("capacity").get<int64_t>();
  t.warning = j.at("warning").get<std::string>();
  return t;
}

}  // namespace

std::string to_json_text(const CompareReport& report) {
  nlohmann::json j;
  j["frame_rate"] = report.frame_rate;
  j["batches"] = report.batches;
  j["warnings"] = report.warnings;
  if (report.tiling) j["tiling"] = tiling_to_json(*report.tiling);
  j["rows"] = nlohmann::json::array();
  for (const CompareRow& r : report.rows)
    j["rows"].push_back({{"name", r.name},
                         {"conv_ops", r.conv_ops},
                         {"ratio_to_baseline", r.ratio_to_baseline},
                         {"speedup_vs_baseline", r.speedup_vs_baseline},
                         {"latency_seconds", r.latency_seconds}});
  return j.dump(2) + "\n";
}

CompareReport compare_report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("compare report: invalid JSON: ") + e.what());
  }
  try {
    CompareReport report;
    report.frame_rate = j.at("frame_rate").get<double>();
    report.batches = j.at("batches").get<std::vector<int64_t>>();
    report.warnings = j.at("warnings").get<std::vector<std::string>>();
    if (j.contains("tiling")) report.tiling = tiling_from_json(j.at("tiling"));
    for (const nlohmann::json& rj : j.at("rows")) {
      CompareRow r;
      r.name = rj.at("name").get<std::string>();
      r.conv_ops = rj.at("conv_ops").get<int64_t>();
      r.ratio_to_baseline = rj.at("ratio_to_baseline").get<double>();
      r.speedup_vs_baseline = rj.at("speedup_vs_baseline").get<double>();
      r.latency_seconds = rj.at("latency_seconds").get<std::vector<double>>();
      report.rows.push_back(std::move(r));
    }
    return report;
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("compare report: missing or mistyped field: ") + e.what());
  }
}

}  // namespace fatnet
