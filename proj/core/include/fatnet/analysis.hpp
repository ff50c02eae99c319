#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fatnet/net.hpp"

namespace fatnet {

// How many padded inputs tile into one optical frame: floor(R/(M+N-1))^2.
struct TilingPlan {
  int64_t system_resolution = 0;  // R, frame pixels per side
  int64_t input_size = 0;         // M, image pixels per side
  int64_t kernel_size = 0;        // N, kernel pixels per side
  int64_t capacity = 0;           // n, images per frame
  std::string warning;            // set when nothing fits

  bool operator==(const TilingPlan&) const = default;
};

TilingPlan tiling_plan(int64_t system_resolution, int64_t input_size,
                       int64_t kernel_size);
int64_t batch_capacity(int64_t system_resolution, int64_t input_size,
                       int64_t kernel_size);

// Seconds of optical time per classified image. Each of conv_ops
// convolutions costs four frames: two pseudo-negativity passes, each run
// twice for the positive/negative halves of the signed operand; a batch of
// images rides in every frame.
struct LatencyReport {
  int64_t conv_ops = 0;
  int64_t batch = 0;
  double frame_rate = 0.0;
  double seconds_per_input = 0.0;

  bool operator==(const LatencyReport&) const = default;
};

LatencyReport optical_latency(int64_t conv_ops, int64_t batch, double frame_rate);

struct CompareOptions {
  std::vector<int64_t> batches;     // latency columns; empty = counts only
  double frame_rate = 2e6;          // optical passes per second
  std::optional<TilingPlan> tiling; // enables the capacity gate when present
  bool allow_over_capacity = false;
};

struct CompareRow {
  std::string name;
  int64_t conv_ops = 0;
  double ratio_to_baseline = 1.0;   // this row's ops / first row's ops
  double speedup_vs_baseline = 1.0; // first row's ops / this row's ops
  std::vector<double> latency_seconds;  // aligned with CompareOptions.batches

  bool operator==(const CompareRow&) const = default;
};

struct CompareReport {
  std::vector<CompareRow> rows;  // first row is the baseline
  std::vector<int64_t> batches;
  double frame_rate = 0.0;
  std::optional<TilingPlan> tiling;
  std::vector<std::string> warnings;

  bool operator==(const CompareReport&) const = default;
};

// Counts operations for each network and prices them against the first one.
// When a tiling plan is supplied, batches beyond its capacity are refused
// unless allow_over_capacity is set, in which case they are only warned
// about: the capacity formula bounds how much parallelism the frame can
// physically hold.
CompareReport compare(const std::vector<NetworkSpec>& networks,
                      const CompareOptions& options);

// Aligned plain-text table plus ratio/speedup lines.
std::string format_text(const CompareReport& report);

// Machine-readable form; parsing the emitted text recovers an equal report.
std::string to_json_text(const CompareReport& report);
CompareReport compare_report_from_json(const std::string& text);

}  // namespace fatnet
