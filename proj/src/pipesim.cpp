// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#include "sideways/pipesim.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "sideways/errors.hpp"

namespace sideways {

namespace {

constexpr double kTimeEps = 1e-9;

struct SlotInterval {
  int device;
  double acquire;
  double release;
};

std::vector<int64_t> peak_slots(const std::vector<SlotInterval>& intervals, int k) {
  std::vector<std::vector<std::pair<double, int>>> events(k);
  for (const SlotInterval& s : intervals) {
    events[s.device].push_back({s.acquire, +1});
    events[s.device].push_back({s.release, -1});
  }
  std::vector<int64_t> peak(k, 0);
  for (int j = 0; j < k; ++j) {
    auto& ev = events[j];
    // Releases sort before acquisitions at the same instant.
    std::sort(ev.begin(), ev.end(), [](const auto& a, const auto& b) {
      return a.first < b.first || (a.first == b.first && a.second < b.second);
    });
    int64_t cur = 0;
    for (const auto& [t, d] : ev) {
      cur += d;
      peak[j] = std::max(peak[j], cur);
    }
  }
  return peak;
}

void finalize_common(ScheduleResult& r, int k) {
  r.busy_per_device.assign(k, 0.0);
  double end = 0.0;
  for (const TimelineEntry& e : r.timeline) {
    r.busy_per_device[e.device] += e.end - e.start;
    end = std::max(end, e.end);
  }
  r.makespan = end;
  double busy = 0.0;
  for (double b : r.busy_per_device) busy += b;
  r.bubble_fraction =
      (k > 0 && end > 0.0) ? 1.0 - busy / (static_cast<double>(k) * end) : 0.0;
}

void validate_profile(const DeviceCostProfile& prof) {
  if (prof.devices() <= 0) throw ConfigError("cost profile needs at least one stage");
  if (prof.bwd_cost.size() != prof.fwd_cost.size()) {
    throw ConfigError("cost profile: fwd/bwd stage counts differ");
  }
  for (double c : prof.fwd_cost) {
    if (c < 0.0) throw ConfigError("cost profile: negative forward cost");
  }
  for (double c : prof.bwd_cost) {
    if (c < 0.0) throw ConfigError("cost profile: negative backward cost");
  }
  if (prof.comm_cost < 0.0) throw ConfigError("cost profile: negative comm cost");
}

}  // namespace

DeviceCostProfile DeviceCostProfile::uniform(int k, double fwd, double bwd, double comm) {
  DeviceCostProfile p;
  p.fwd_cost.assign(k, fwd);
  p.bwd_cost.assign(k, bwd);
  p.comm_cost = comm;
  return p;
}

ScheduleResult simulate_sequential_bp(const DeviceCostProfile& prof, int64_t frames) {
  validate_profile(prof);
  if (frames <= 0) throw ConfigError("frames must be positive");
  const int k = prof.devices();

  ScheduleResult r;
  std::vector<SlotInterval> slots;
  std::vector<double> fwd_start0(frames), bwd_end0(frames);
  std::vector<std::vector<double>> fwd_end(frames, std::vector<double>(k));

  double t = 0.0;
  for (int64_t f = 0; f < frames; ++f) {
    for (int j = 0; j < k; ++j) {
      if (j > 0) t += prof.comm_cost;
      if (j == 0) fwd_start0[f] = t;
      r.timeline.push_back({j, t, t + prof.fwd_cost[j], "fwd", f});
      t += prof.fwd_cost[j];
      fwd_end[f][j] = t;
    }
  }
  for (int64_t f = frames - 1; f >= 0; --f) {
    for (int j = k - 1; j >= 0; --j) {
      if (j < k - 1) t += prof.comm_cost;
      r.timeline.push_back({j, t, t + prof.bwd_cost[j], "bwd", f});
      t += prof.bwd_cost[j];
      slots.push_back({j, fwd_end[f][j], t});
      if (j == 0) bwd_end0[f] = t;
    }
  }

  r.frame_latency.resize(frames);
  for (int64_t f = 0; f < frames; ++f) r.frame_latency[f] = bwd_end0[f] - fwd_start0[f];
  finalize_common(r, k);
  r.steady_bubble_fraction = r.bubble_fraction;  // no steady phase
  r.peak_slots_per_device = peak_slots(slots, k);
  return r;
}

ScheduleResult simulate_gpipe(const DeviceCostProfile& prof, int64_t frames,
                              int64_t group_size) {
  validate_profile(prof);
  if (frames <= 0) throw ConfigError("frames must be positive");
  if (group_size <= 0) throw ConfigError("group size must be positive");
  const int k = prof.devices();

  ScheduleResult r;
  r.frame_latency.resize(frames);
  std::vector<SlotInterval> slots;
  std::vector<double> dev_free(k, 0.0);

  for (int64_t base = 0; base < frames; base += group_size) {
    const int64_t count = std::min(group_size, frames - base);
    std::vector<std::vector<double>> fend(count, std::vector<double>(k));
    std::vector<std::vector<double>> bend(count, std::vector<double>(k));
    std::vector<double> fstart0(count);

    for (int64_t m = 0; m < count; ++m) {
      for (int j = 0; j < k; ++j) {
        const double ready = j == 0 ? 0.0 : fend[m][j - 1] + prof.comm_cost;
        const double s = std::max(ready, dev_free[j]);
        if (j == 0) fstart0[m] = s;
        const double e = s + prof.fwd_cost[j];
        r.timeline.push_back({j, s, e, "fwd", base + m});
        dev_free[j] = e;
        fend[m][j] = e;
      }
    }
    // Last in, first back: the most recent member of the group starts
    // its backward as soon as its forward clears the last stage.
    for (int64_t m = count - 1; m >= 0; --m) {
      for (int j = k - 1; j >= 0; --j) {
        const double ready =
            j == k - 1 ? fend[m][k - 1] : bend[m][j + 1] + prof.comm_cost;
        const double s = std::max(ready, dev_free[j]);
        const double e = s + prof.bwd_cost[j];
        r.timeline.push_back({j, s, e, "bwd", base + m});
        dev_free[j] = e;
        bend[m][j] = e;
        slots.push_back({j, fend[m][j], e});
      }
      r.frame_latency[base + m] = bend[m][0] - fstart0[m];
    }
    // Pipeline flush at the group boundary (that is where the update
    // happens), so the next group starts from a common barrier.
    const double barrier = *std::max_element(dev_free.begin(), dev_free.end());
    dev_free.assign(k, barrier);
  }

  finalize_common(r, k);
  r.steady_bubble_fraction = r.bubble_fraction;  // fill-drain never winds up
  r.peak_slots_per_device = peak_slots(slots, k);
  return r;
}

ScheduleResult simulate_sideways(const DeviceCostProfile& prof, int64_t frames) {
  validate_profile(prof);
  if (frames <= 0) throw ConfigError("frames must be positive");
  const int k = prof.devices();

  double tick = 0.0;
  for (int j = 0; j < k; ++j) tick = std::max(tick, prof.fwd_cost[j] + prof.bwd_cost[j]);
  tick += prof.comm_cost;

  ScheduleResult r;
  r.frame_latency.assign(frames, 0.0);
  std::vector<SlotInterval> slots;
  std::vector<double> fwd_start0(frames, 0.0);

  const int64_t total_steps = frames + 2 * k;
  for (int64_t s = 0; s < total_steps; ++s) {
    const double t0 = static_cast<double>(s) * tick;
    for (int j = 0; j < k; ++j) {
      const int stage = j + 1;  // 1-based position in the pipe
      const int64_t fwd_frame = s - stage;
      const int64_t bwd_frame = s - 2 * k - 1 + stage;
      const bool has_fwd = fwd_frame >= 0 && fwd_frame < frames;
      const bool has_bwd = bwd_frame >= 0 && bwd_frame < frames;
      if (has_fwd) {
        r.timeline.push_back({j, t0, t0 + prof.fwd_cost[j], "fwd", fwd_frame});
        // The input activation is consumed by this tick's backward
        // piece and dropped at the end of the tick.
        slots.push_back({j, t0, static_cast<double>(s + 1) * tick});
        if (j == 0) fwd_start0[fwd_frame] = t0;
      }
      if (has_bwd) {
        // Backward always occupies the second half-slot of the tick so
        // every frame sees an identical path through the pipe.
        const double bs = t0 + prof.fwd_cost[j];
        r.timeline.push_back({j, bs, bs + prof.bwd_cost[j], "bwd", bwd_frame});
        if (j == 0) r.frame_latency[bwd_frame] = bs + prof.bwd_cost[j];
      }
    }
  }
  for (int64_t f = 0; f < frames; ++f) r.frame_latency[f] -= fwd_start0[f];

  finalize_common(r, k);
  r.peak_slots_per_device = peak_slots(slots, k);

  // Steady window: ticks where every device runs both a forward and a
  // backward piece.
  const int64_t lo = 2 * k;
  const int64_t hi = frames;  // inclusive tick index
  if (hi > lo) {
    const double w0 = static_cast<double>(lo) * tick;
    const double w1 = static_cast<double>(hi + 1) * tick;
    double busy = 0.0;
    for (const TimelineEntry& e : r.timeline) {
      busy += std::max(0.0, std::min(e.end, w1) - std::max(e.start, w0));
    }
    r.steady_bubble_fraction = 1.0 - busy / (static_cast<double>(k) * (w1 - w0));
  } else {
    r.steady_bubble_fraction = r.bubble_fraction;
  }
  return r;
}

MemoryAccount memory_account(const ScheduleResult& sched,
                             const std::vector<int64_t>& stage_scalars) {
  if (stage_scalars.size() != sched.peak_slots_per_device.size()) {
    throw ConfigError("memory_account: one activation size per stage required");
  }
  MemoryAccount acc;
  acc.peak_slots_per_device = sched.peak_slots_per_device;
  acc.peak_scalars_per_device.resize(stage_scalars.size());
  for (size_t j = 0; j < stage_scalars.size(); ++j) {
    if (stage_scalars[j] < 0) throw ConfigError("memory_account: negative size");
    acc.peak_scalars_per_device[j] = sched.peak_slots_per_device[j] * stage_scalars[j];
    acc.total_peak_scalars += acc.peak_scalars_per_device[j];
  }
  return acc;
}

void write_timeline_csv(const ScheduleResult& sched, std::ostream& os) {
  std::vector<TimelineEntry> rows = sched.timeline;
  std::sort(rows.begin(), rows.end(), [](const TimelineEntry& a, const TimelineEntry& b) {
    if (a.device != b.device) return a.device < b.device;
    if (a.start != b.start) return a.start < b.start;
    return a.kind < b.kind;
  });
  os << "device,start,end,kind,frame\n";
  os << std::setprecision(17);
  for (const TimelineEntry& e : rows) {
    os << e.device << "," << e.start << "," << e.end << "," << e.kind << ","
       << e.frame << "\n";
  }
}

std::string render_gantt(const ScheduleResult& sched, int max_width) {
  if (sched.timeline.empty() || max_width <= 0) return "";
  int devices = 0;
  for (const TimelineEntry& e : sched.timeline) devices = std::max(devices, e.device + 1);
  const double bucket = sched.makespan / max_width;

  std::ostringstream os;
  os << "time 0.." << sched.makespan << " (" << bucket << " per column)\n";
  for (int j = 0; j < devices; ++j) {
    std::string row(max_width, '.');
    for (const TimelineEntry& e : sched.timeline) {
      if (e.device != j) continue;
      int b0 = static_cast<int>(std::floor(e.start / bucket));
      int b1 = static_cast<int>(std::ceil(e.end / bucket));
      b0 = std::max(0, std::min(b0, max_width - 1));
      b1 = std::max(b0 + 1, std::min(b1, max_width));
      const char mark = e.kind == "fwd" ? 'F' : 'B';
      for (int b = b0; b < b1; ++b) {
        if (row[b] == '.') {
          row[b] = mark;
        } else if (row[b] != mark) {
          row[b] = '#';
        }
      }
    }
    os << "dev" << j << " |" << row << "|\n";
  }
  return os.str();
}

bool validate_timeline(const ScheduleResult& sched, const DeviceCostProfile& prof,
                       std::string* why) {
  const int k = prof.devices();
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };

  std::vector<std::vector<TimelineEntry>> per_device(k);
  std::map<std::pair<int64_t, int>, TimelineEntry> fwd_of, bwd_of;  // (frame, stage)
  for (const TimelineEntry& e : sched.timeline) {
    if (e.device < 0 || e.device >= k) return fail("entry on unknown device");
    if (e.end < e.start - kTimeEps) return fail("entry ends before it starts");
    per_device[e.device].push_back(e);
    auto& target = e.kind == "fwd" ? fwd_of : bwd_of;
    if (!target.emplace(std::make_pair(e.frame, e.device), e).second) {
      return fail("duplicate " + e.kind + " for frame " + std::to_string(e.frame) +
                  " on device " + std::to_string(e.device));
    }
  }

  for (int j = 0; j < k; ++j) {
    auto& v = per_device[j];
    std::sort(v.begin(), v.end(),
              [](const TimelineEntry& a, const TimelineEntry& b) { return a.start < b.start; });
    for (size_t i = 1; i < v.size(); ++i) {
      if (v[i].start < v[i - 1].end - kTimeEps) {
        return fail("device " + std::to_string(j) + " runs two tasks at once near t=" +
                    std::to_string(v[i].start));
      }
    }
  }

  for (const auto& [key, e] : fwd_of) {
    const auto& [frame, stage] = key;
    if (stage + 1 < k) {
      auto it = fwd_of.find({frame, stage + 1});
      if (it != fwd_of.end() &&
          it->second.start < e.end + prof.comm_cost - kTimeEps) {
        return fail("frame " + std::to_string(frame) + " reaches stage " +
                    std::to_string(stage + 1) + " before leaving stage " +
                    std::to_string(stage));
      }
    }
  }
  for (const auto& [key, e] : bwd_of) {
    const auto& [frame, stage] = key;
    if (stage == k - 1) {
      auto it = fwd_of.find({frame, stage});
      if (it != fwd_of.end() && e.start < it->second.end - kTimeEps) {
        return fail("backward of frame " + std::to_string(frame) +
                    " starts before its forward finishes the pipe");
      }
    } else {
      auto it = bwd_of.find({frame, stage + 1});
      if (it != bwd_of.end() &&
          e.start < it->second.end + prof.comm_cost - kTimeEps) {
        return fail("backward of frame " + std::to_string(frame) +
                    " runs stage " + std::to_string(stage) + " too early");
      }
    }
  }
  if (why) why->clear();
  return true;
}

}  // namespace sideways
