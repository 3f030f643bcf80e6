// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace sideways {

// Cost model for a pipeline of K stages, one stage per device.
struct DeviceCostProfile {
  std::vector<double> fwd_cost;  // per stage
  std::vector<double> bwd_cost;  // per stage
  double comm_cost = 0.0;        // per inter-device transfer

  int devices() const { return static_cast<int>(fwd_cost.size()); }
  static DeviceCostProfile uniform(int k, double fwd = 1.0, double bwd = 1.0,
                                   double comm = 0.0);
};

struct TimelineEntry {
  int device = 0;  // 0-based; device j runs stage j
  double start = 0.0;
  double end = 0.0;
  std::string kind;   // "fwd" or "bwd"
  int64_t frame = 0;  // frame (or microbatch) id
};

struct ScheduleResult {
  std::vector<TimelineEntry> timeline;
  double makespan = 0.0;
  std::vector<double> busy_per_device;
  // Idle share averaged over devices, full run.
  double bubble_fraction = 0.0;
  // Ditto, restricted to the window where the pipeline is fully wound
  // up (equal to bubble_fraction for schedules with no steady phase).
  double steady_bubble_fraction = 0.0;
  // Peak number of resident activation slots per device (a slot lives
  // from the end of its forward until the end of its backward).
  std::vector<int64_t> peak_slots_per_device;
  // Per frame: last backward end minus first forward start on device 0.
  std::vector<double> frame_latency;
};

// Full-sequence backprop without pipelining: every frame runs forward
// through all stages, then all frames run backward in reverse order.
// Each stage keeps one activation slot per frame until its backward.
ScheduleResult simulate_sequential_bp(const DeviceCostProfile& prof, int64_t frames);

// Fill-drain pipeline: frames are grouped, a group's members stream
// forward in FIFO order, then backward in LIFO order, and the pipeline
// flushes between groups (updates happen at group boundaries).
ScheduleResult simulate_gpipe(const DeviceCostProfile& prof, int64_t frames,
                              int64_t group_size);

// Pipelined temporal schedule: at every tick each device runs one
// forward and one backward piece of work, so the tick length is
// max_j(fwd_j + bwd_j) + comm and no activation outlives its tick.
ScheduleResult simulate_sideways(const DeviceCostProfile& prof, int64_t frames);

struct MemoryAccount {
  std::vector<int64_t> peak_slots_per_device;
  std::vector<int64_t> peak_scalars_per_device;
  int64_t total_peak_scalars = 0;
};

// Converts per-device slot peaks into scalar counts given the size of
// one activation at each stage.
MemoryAccount memory_account(const ScheduleResult& sched,
                             const std::vector<int64_t>& stage_scalars);

// Columns: device,start,end,kind,frame.  Rows sorted by device, start.
void write_timeline_csv(const ScheduleResult& sched, std::ostream& os);

// ASCII chart, one row per device ('F' forward, 'B' backward, '#'
// both in one bucket, '.' idle).
std::string render_gantt(const ScheduleResult& sched, int max_width = 100);

// Checks device exclusivity and stage precedence over the timeline.
// On failure returns false and, if `why` is given, a description.
bool validate_timeline(const ScheduleResult& sched, const DeviceCostProfile& prof,
                       std::string* why = nullptr);

}  // namespace sideways
