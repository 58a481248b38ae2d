#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <vector>

#include "fusemap/depth.hpp"
#include "fusemap/errors.hpp"
#include "fusemap/geometry.hpp"

namespace fusemap {

/// A depth frame paired with the pose closest to it in time.
struct FrameSet {
  DepthImage depth;
  Pose pose;
  std::int64_t time_offset_us = 0;  // pose.timestamp - depth.timestamp
};

struct StreamStats {
  std::size_t paired = 0;
  std::size_t dropped = 0;
  std::int64_t max_abs_offset_us = 0;
  double mean_abs_offset_us = 0.0;
};

struct PairingResult {
  std::vector<FrameSet> framesets;
  StreamStats stats;
};

/// Twice the nominal 200 Hz pose period; guards against stream stalls.
constexpr std::int64_t kDefaultMaxOffsetUs = 10000;

namespace detail {

/// Index of the pose minimizing |pose.ts - ts|, ties toward the earlier pose.
/// Assumes poses sorted ascending; returns nullopt for an empty stream.
inline std::optional<std::size_t> closest_pose(const std::vector<Pose>& poses, std::int64_t ts) {
  if (poses.empty()) return std::nullopt;
  const auto it = std::lower_bound(poses.begin(), poses.end(), ts,
                                   [](const Pose& p, std::int64_t t) { return p.timestamp_us < t; });
  if (it == poses.begin()) return 0;
  if (it == poses.end()) return poses.size() - 1;
  const std::size_t after = static_cast<std::size_t>(it - poses.begin());
  const std::size_t before = after - 1;
  const std::int64_t d_before = ts - poses[before].timestamp_us;
  const std::int64_t d_after = poses[after].timestamp_us - ts;
  return d_before <= d_after ? before : after;
}

template <typename T, typename GetTs>
void require_sorted(const std::vector<T>& seq, GetTs get_ts, const char* what) {
  for (std::size_t i = 1; i < seq.size(); ++i) {
    if (get_ts(seq[i]) < get_ts(seq[i - 1]))
      throw UnsortedStream(std::string(what) + " stream timestamps are not ascending");
  }
}

}  // namespace detail

/// Assign each depth frame the pose nearest in time, dropping frames whose
/// best match is farther than max_offset_us. Output order follows depth order.
inline PairingResult pair_streams(const std::vector<Pose>& poses,
                                  const std::vector<DepthImage>& depths,
                                  std::int64_t max_offset_us = kDefaultMaxOffsetUs) {
  detail::require_sorted(poses, [](const Pose& p) { return p.timestamp_us; }, "pose");
  detail::require_sorted(depths, [](const DepthImage& d) { return d.timestamp_us; }, "depth");

  PairingResult out;
  std::int64_t abs_sum = 0;
  for (const auto& depth : depths) {
    const auto best = detail::closest_pose(poses, depth.timestamp_us);
    if (!best) {
      ++out.stats.dropped;
      continue;
    }
    const std::int64_t offset = poses[*best].timestamp_us - depth.timestamp_us;
    if (std::abs(offset) > max_offset_us) {
      ++out.stats.dropped;
      continue;
    }
    out.framesets.push_back({depth, poses[*best], offset});
    ++out.stats.paired;
    abs_sum += std::abs(offset);
    out.stats.max_abs_offset_us = std::max(out.stats.max_abs_offset_us, std::abs(offset));
  }
  if (out.stats.paired > 0)
    out.stats.mean_abs_offset_us = static_cast<double>(abs_sum) / static_cast<double>(out.stats.paired);
  return out;
}

/// Event-driven pairing for interleaved producers. A depth frame is resolved
/// as soon as the first pose at or after its timestamp arrives (at that point
/// every earlier pose is known), or when finish() declares the streams over.
/// Events are serialized internally, so the emitted framesets are identical
/// to offline pair_streams on the same data for any producer interleaving.
class OnlinePairer {
 public:
  explicit OnlinePairer(std::int64_t max_offset_us = kDefaultMaxOffsetUs)
      : max_offset_us_(max_offset_us) {}

  void push_pose(const Pose& pose) {
    std::lock_guard lock(mutex_);
    if (!poses_.empty() && pose.timestamp_us < poses_.back().timestamp_us)
      throw UnsortedStream("pose stream timestamps are not ascending");
    poses_.push_back(pose);
    drain();
  }

  void push_depth(DepthImage depth) {
    std::lock_guard lock(mutex_);
    if (last_depth_ts_ && depth.timestamp_us < *last_depth_ts_)
      throw UnsortedStream("depth stream timestamps are not ascending");
    last_depth_ts_ = depth.timestamp_us;
    pending_.push_back(std::move(depth));
    drain();
  }

  /// Declare both streams finished and resolve any still-pending frames.
  void finish() {
    std::lock_guard lock(mutex_);
    finished_ = true;
    drain();
  }

  const std::vector<FrameSet>& framesets() const { return framesets_; }

  StreamStats stats() const {
    std::lock_guard lock(mutex_);
    StreamStats s = stats_;
    if (s.paired > 0) s.mean_abs_offset_us = static_cast<double>(abs_sum_) / static_cast<double>(s.paired);
    return s;
  }

 private:
  void drain() {
    while (!pending_.empty()) {
      const std::int64_t ts = pending_.front().timestamp_us;
      const bool decidable = finished_ || (!poses_.empty() && poses_.back().timestamp_us >= ts);
      if (!decidable) break;
      const auto best = detail::closest_pose(poses_, ts);
      if (best && std::abs(poses_[*best].timestamp_us - ts) <= max_offset_us_) {
        const std::int64_t offset = poses_[*best].timestamp_us - ts;
        framesets_.push_back({std::move(pending_.front()), poses_[*best], offset});
        ++stats_.paired;
        abs_sum_ += std::abs(offset);
        stats_.max_abs_offset_us = std::max(stats_.max_abs_offset_us, std::abs(offset));
      } else {
        ++stats_.dropped;
      }
      pending_.pop_front();
    }
  }

  mutable std::mutex mutex_;
  std::int64_t max_offset_us_;
  std::vector<Pose> poses_;
  std::deque<DepthImage> pending_;
  std::optional<std::int64_t> last_depth_ts_;
  bool finished_ = false;
  std::vector<FrameSet> framesets_;
  StreamStats stats_;
  std::int64_t abs_sum_ = 0;
};

/// Greedy keyframe thinning: keep the first frame, then the earliest frame at
/// least `interval_s` after the last kept one. interval_s = 0 keeps all.
inline std::vector<FrameSet> select_keyframes(const std::vector<FrameSet>& framesets,
                                              double interval_s) {
  if (interval_s < 0.0) throw InvalidParameter("keyframe interval must be >= 0");
  const std::int64_t interval_us = static_cast<std::int64_t>(std::llround(interval_s * 1e6));
  std::vector<FrameSet> out;
  for (const auto& fs : framesets) {
    if (out.empty() || fs.depth.timestamp_us - out.back().depth.timestamp_us >= interval_us)
      out.push_back(fs);
  }
  return out;
}

}  // namespace fusemap
