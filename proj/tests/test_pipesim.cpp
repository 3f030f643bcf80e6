// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sideways/errors.hpp"
#include "sideways/pipesim.hpp"

using namespace sideways;

namespace {

double throughput(const ScheduleResult& r, int64_t frames) {
  return static_cast<double>(frames) / r.makespan;
}

// Start times of device 0's forward pieces, in frame order.
std::vector<double> fwd_starts_dev0(const ScheduleResult& r) {
  std::map<int64_t, double> by_frame;
  for (const TimelineEntry& e : r.timeline) {
    if (e.device == 0 && e.kind == "fwd") by_frame[e.frame] = e.start;
  }
  std::vector<double> out;
  for (const auto& [frame, start] : by_frame) out.push_back(start);
  return out;
}

}  // namespace

TEST_CASE("sequential schedule holds every frame until its backward") {
  const int k = 4;
  const int64_t frames = 6;
  DeviceCostProfile prof = DeviceCostProfile::uniform(k, 1.0, 1.0, 0.0);
  ScheduleResult r = simulate_sequential_bp(prof, frames);

  CHECK(r.makespan == static_cast<double>(frames * k * 2));
  for (int64_t slots : r.peak_slots_per_device) CHECK(slots == frames);
  // Frame 0 enters first and leaves last.
  CHECK(r.frame_latency[0] == r.makespan);
  std::string why;
  CHECK(validate_timeline(r, prof, &why));

  // Communication lengthens every hop.
  DeviceCostProfile comm = DeviceCostProfile::uniform(k, 1.0, 1.0, 0.5);
  ScheduleResult rc = simulate_sequential_bp(comm, frames);
  CHECK(rc.makespan ==
        doctest::Approx(frames * (k * 2.0 + 2.0 * (k - 1) * 0.5)).epsilon(1e-12));
  CHECK(validate_timeline(rc, comm));
}

TEST_CASE("grouped fill-drain pipeline reproduces the classic bubble fraction") {
  const int k = 4;
  for (int64_t m : {2, 4, 8, 16}) {
    DeviceCostProfile prof = DeviceCostProfile::uniform(k, 1.0, 1.0, 0.0);
    ScheduleResult r = simulate_gpipe(prof, m, m);
    CHECK(r.makespan == 2.0 * static_cast<double>(m + k - 1));
    const double expected =
        static_cast<double>(k - 1) / static_cast<double>(m + k - 1);
    CHECK(std::abs(r.bubble_fraction - expected) <= 1e-15);
    // Idle time is an exact integer: 2 * K * (K - 1).
    double busy = 0.0;
    for (double b : r.busy_per_device) busy += b;
    CHECK(k * r.makespan - busy == 2.0 * k * (k - 1));
    // Every group member is resident at once.
    for (int64_t slots : r.peak_slots_per_device) CHECK(slots == m);
    CHECK(validate_timeline(r, prof));
  }
}

TEST_CASE("fill-drain bubble shrinks as the group grows") {
  const int k = 4;
  DeviceCostProfile prof = DeviceCostProfile::uniform(k, 1.0, 1.0, 0.0);
  double prev = 1.0;
  for (int64_t m : {2, 4, 8, 16, 32}) {
    ScheduleResult r = simulate_gpipe(prof, m, m);
    CHECK(r.bubble_fraction < prev);
    prev = r.bubble_fraction;
  }
}

TEST_CASE("fill-drain latency varies across group members") {
  DeviceCostProfile prof = DeviceCostProfile::uniform(4, 1.0, 1.0, 0.0);
  ScheduleResult r = simulate_gpipe(prof, 8, 8);
  const auto [lo, hi] = std::minmax_element(r.frame_latency.begin(),
                                            r.frame_latency.end());
  CHECK(*hi > *lo);  // first in, last back

  // A single device pipelines nothing and wastes nothing.
  DeviceCostProfile one = DeviceCostProfile::uniform(1, 1.0, 1.0, 0.0);
  ScheduleResult r1 = simulate_gpipe(one, 8, 8);
  CHECK(r1.bubble_fraction == 0.0);
}

TEST_CASE("fill-drain flushes between groups") {
  DeviceCostProfile prof = DeviceCostProfile::uniform(4, 1.0, 1.0, 0.0);
  ScheduleResult whole = simulate_gpipe(prof, 8, 8);
  ScheduleResult split = simulate_gpipe(prof, 8, 4);
  // Two flushes pay the wind-up cost twice.
  CHECK(split.makespan == 2.0 * simulate_gpipe(prof, 4, 4).makespan);
  CHECK(split.makespan > whole.makespan);
  CHECK(split.bubble_fraction > whole.bubble_fraction);
  CHECK(validate_timeline(split, prof));
  for (int64_t slots : split.peak_slots_per_device) CHECK(slots == 4);
}

TEST_CASE("temporal pipeline runs at the bottleneck stage rate") {
  DeviceCostProfile prof;
  prof.fwd_cost = {1.0, 2.0, 0.5, 1.0};
  prof.bwd_cost = {0.5, 1.0, 2.0, 1.0};
  prof.comm_cost = 0.0;
  const int64_t frames = 12;
  ScheduleResult r = simulate_sideways(prof, frames);

  // Steady-state step latency is exactly the slowest stage's fwd+bwd.
  const double tick = 3.0;  // stage 1: 2.0 + 1.0
  std::vector<double> starts = fwd_starts_dev0(r);
  REQUIRE(starts.size() == static_cast<size_t>(frames));
  for (size_t i = 1; i < starts.size(); ++i) {
    CHECK(starts[i] - starts[i - 1] == tick);
  }

  // Every frame experiences the identical path.
  for (double lat : r.frame_latency) CHECK(lat == r.frame_latency[0]);
  // One activation slot per device, independent of sequence length.
  for (int64_t slots : r.peak_slots_per_device) CHECK(slots == 1);
  CHECK(validate_timeline(r, prof));
}

TEST_CASE("temporal pipeline has zero steady-state bubble at uniform cost") {
  DeviceCostProfile prof = DeviceCostProfile::uniform(4, 1.0, 1.0, 0.0);
  ScheduleResult r = simulate_sideways(prof, 64);
  CHECK(r.steady_bubble_fraction == 0.0);
  CHECK(r.bubble_fraction > 0.0);  // wind-up and drain are not free
  CHECK(validate_timeline(r, prof));
}

TEST_CASE("temporal pipeline throughput is one frame per tick at any length") {
  DeviceCostProfile prof = DeviceCostProfile::uniform(4, 1.0, 1.5, 0.25);
  const double tick = 1.0 + 1.5 + 0.25;
  double prev_makespan = simulate_sideways(prof, 64).makespan;
  for (int64_t frames : {128, 256, 512}) {
    const double makespan = simulate_sideways(prof, frames).makespan;
    CHECK(makespan - prev_makespan == doctest::Approx((frames / 2) * tick).epsilon(1e-12));
    prev_makespan = makespan;
  }
}

TEST_CASE("steady throughput advantage equals the device count at uniform cost") {
  for (int k : {2, 4, 8}) {
    DeviceCostProfile prof = DeviceCostProfile::uniform(k, 1.0, 1.0, 0.0);
    ScheduleResult r = simulate_sideways(prof, 32);
    std::vector<double> starts = fwd_starts_dev0(r);
    const double tick = starts[1] - starts[0];
    double per_frame_sequential = 0.0;
    for (int j = 0; j < k; ++j) {
      per_frame_sequential += prof.fwd_cost[j] + prof.bwd_cost[j];
    }
    CHECK(per_frame_sequential / tick == static_cast<double>(k));  // exact
  }
}

TEST_CASE("throughput ordering with eight devices and nonzero comm") {
  const int k = 8;
  const int64_t frames = 64;
  DeviceCostProfile prof = DeviceCostProfile::uniform(k, 1.0, 1.0, 0.25);
  ScheduleResult sw = simulate_sideways(prof, frames);
  ScheduleResult gp = simulate_gpipe(prof, frames, k);
  ScheduleResult sq = simulate_sequential_bp(prof, frames);
  CHECK(throughput(sw, frames) > throughput(gp, frames));
  CHECK(throughput(gp, frames) > throughput(sq, frames));
  CHECK(validate_timeline(sw, prof));
  CHECK(validate_timeline(gp, prof));
  CHECK(validate_timeline(sq, prof));
}

TEST_CASE("memory accounting scales slots by activation size") {
  DeviceCostProfile prof = DeviceCostProfile::uniform(3, 1.0, 1.0, 0.0);
  const int64_t frames = 16;
  const std::vector<int64_t> sizes = {100, 50, 25};

  MemoryAccount seq = memory_account(simulate_sequential_bp(prof, frames), sizes);
  MemoryAccount sw = memory_account(simulate_sideways(prof, frames), sizes);
  CHECK(seq.peak_scalars_per_device ==
        std::vector<int64_t>({16 * 100, 16 * 50, 16 * 25}));
  CHECK(seq.total_peak_scalars == 16 * 175);
  CHECK(sw.peak_scalars_per_device == std::vector<int64_t>({100, 50, 25}));
  CHECK(sw.total_peak_scalars == 175);

  // The unrolled footprint grows with the sequence; the pipelined one
  // does not.
  MemoryAccount seq4x = memory_account(simulate_sequential_bp(prof, 4 * frames), sizes);
  MemoryAccount sw4x = memory_account(simulate_sideways(prof, 4 * frames), sizes);
  CHECK(seq4x.total_peak_scalars == 4 * seq.total_peak_scalars);
  CHECK(sw4x.total_peak_scalars == sw.total_peak_scalars);

  CHECK_THROWS_AS(memory_account(simulate_sideways(prof, 4), {1, 2}), ConfigError);
  CHECK_THROWS_AS(memory_account(simulate_sideways(prof, 4), {1, -2, 3}), ConfigError);
}

TEST_CASE("timeline export and chart") {
  DeviceCostProfile prof = DeviceCostProfile::uniform(2, 1.0, 1.0, 0.0);
  ScheduleResult r = simulate_sideways(prof, 4);

  std::ostringstream os;
  write_timeline_csv(r, os);
  const std::string csv = os.str();
  CHECK(csv.rfind("device,start,end,kind,frame\n", 0) == 0);
  CHECK(csv.find(",fwd,") != std::string::npos);
  CHECK(csv.find(",bwd,") != std::string::npos);
  // Rows are grouped by device in ascending start order.
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);  // header
  int prev_device = -1;
  double prev_start = -1.0;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string field;
    std::getline(row, field, ',');
    const int device = std::stoi(field);
    std::getline(row, field, ',');
    const double start = std::stod(field);
    if (device == prev_device) {
      CHECK(start >= prev_start);
    } else {
      CHECK(device > prev_device);
    }
    prev_device = device;
    prev_start = start;
  }

  const std::string chart = render_gantt(r, 60);
  CHECK(chart.find("dev0 |") != std::string::npos);
  CHECK(chart.find("dev1 |") != std::string::npos);
  CHECK(chart.find('F') != std::string::npos);
  CHECK(chart.find('B') != std::string::npos);
}

TEST_CASE("timeline validation catches tampering") {
  DeviceCostProfile prof = DeviceCostProfile::uniform(3, 1.0, 1.0, 0.0);
  ScheduleResult r = simulate_sideways(prof, 6);
  std::string why;
  REQUIRE(validate_timeline(r, prof, &why));

  ScheduleResult dup = r;
  dup.timeline.push_back(dup.timeline.front());
  CHECK_FALSE(validate_timeline(dup, prof, &why));
  CHECK_FALSE(why.empty());

  ScheduleResult reversed = r;
  std::swap(reversed.timeline.front().start, reversed.timeline.front().end);
  reversed.timeline.front().start += 1.0;  // ends before it starts
  CHECK_FALSE(validate_timeline(reversed, prof));
}

TEST_CASE("cost profile validation") {
  DeviceCostProfile prof = DeviceCostProfile::uniform(2, 1.0, 1.0, 0.0);
  CHECK_THROWS_AS(simulate_sideways(prof, 0), ConfigError);
  CHECK_THROWS_AS(simulate_gpipe(prof, 8, 0), ConfigError);
  CHECK_THROWS_AS(simulate_sequential_bp(DeviceCostProfile{}, 4), ConfigError);

  DeviceCostProfile negative = prof;
  negative.bwd_cost[1] = -1.0;
  CHECK_THROWS_AS(simulate_sideways(negative, 4), ConfigError);
  DeviceCostProfile badcomm = prof;
  badcomm.comm_cost = -0.5;
  CHECK_THROWS_AS(simulate_gpipe(badcomm, 4, 2), ConfigError);
  DeviceCostProfile ragged = prof;
  ragged.bwd_cost.pop_back();
  CHECK_THROWS_AS(simulate_sequential_bp(ragged, 4), ConfigError);
}
