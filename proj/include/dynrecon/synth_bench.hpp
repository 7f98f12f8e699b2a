#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dynrecon/geometry.hpp"

namespace dynrecon {

/// Ground-truth motion: frames[t] holds the P points at time sample t.
struct MotionSource {
  std::vector<Eigen::Matrix3Xd> frames;
  double rate_hz = 120.0;

  int sample_count() const { return static_cast<int>(frames.size()); }
  int point_count() const {
    return frames.empty() ? 0 : static_cast<int>(frames.front().cols());
  }

  /// Keeps every `factor`-th sample; the rate drops accordingly.
  MotionSource Decimate(int factor) const;
};

/// Sum-of-sinusoids trajectories around random rest positions (units: mm).
struct ProceduralMotionSpec {
  int point_count = 5;
  int sample_count = 80;
  double rate_hz = 120.0;
  double body_extent = 400.0;    // rest positions uniform in [-extent, extent]^3
  int harmonics = 3;
  double amplitude_min = 40.0;
  double amplitude_max = 120.0;
  double frequency_min = 0.2;    // Hz
  double frequency_max = 1.0;    // Hz
  /// Largest allowed displacement of any point between consecutive samples;
  /// amplitudes are scaled down when exceeded.
  double max_step = 15.0;
  std::uint64_t seed = 0;
};

MotionSource ProceduralMotion(const ProceduralMotionSpec& spec);

/// Text format: a header line `hz <rate>` followed by one line per sample
/// holding 3P whitespace-separated coordinates (x y z per point). Lines
/// starting with '#' are ignored.
MotionSource LoadMotion(std::istream& in);
void SaveMotion(const MotionSource& motion, std::ostream& out);

enum class RigMode { kStatic, kHandheld, kRandomPerFrame };

struct RigSpec {
  int camera_count = 4;
  double focal = 1000.0;
  double distance_factor = 2.0;  // ring radius relative to the motion scale
  double jitter_sigma = 10.0;    // per-frame center noise for handheld rigs
  RigMode mode = RigMode::kStatic;
};

struct CorruptionSpec {
  double noise_sigma = 0.0;  // pixels
  double miss_rate = 0.0;
  bool consecutive_exclusion = true;
  /// When > 0, cameras take turns capturing blocks of this many consecutive
  /// samples instead of the random assignment.
  int block_length = 0;
  std::uint64_t seed = 0;
};

/// Time sample -> video assignment of one generated scene.
struct Assignment {
  std::vector<int> time_of_frame;   // global frame index -> time sample
  std::vector<int> video_of_time;   // time sample -> camera / video id
};

struct SyntheticScene {
  std::vector<CameraFrame> frames;
  ObservationSet observations;
  StructureMatrix ground_truth;  // columns in global frame order
  Assignment assignment;
  double motion_scale = 0.0;
};

/// Assigns every time sample to one camera, places the rig and projects
/// the motion. Global frame indices are grouped by video, then by time, so
/// the global order carries no cross-video sequencing.
SyntheticScene Generate(const MotionSource& motion, const RigSpec& rig,
                        const CorruptionSpec& corruption);

/// Random camera per time sample, optionally never repeating the previous
/// sample's camera.
std::vector<int> AssignCameras(int samples, int cameras, bool consecutive_exclusion,
                               int block_length, std::uint64_t seed);

/// One grid point of a sweep. `decimation` divides the motion rate.
struct SweepPoint {
  int decimation = 1;
  double noise_sigma = 0.0;
  double miss_rate = 0.0;
  std::uint64_t seed = 0;
};

struct SweepGrid {
  std::vector<int> decimations{1};
  std::vector<double> noise_sigmas{0.0};
  std::vector<double> miss_rates{0.0};
  std::vector<std::uint64_t> seeds{0};

  std::vector<SweepPoint> Points() const;
};

struct SweepScene {
  SweepPoint key;
  SyntheticScene scene;
};

/// Deterministic scene batch. Scenes sharing a seed and decimation share
/// geometry, assignment, noise directions and missing-data draws; only the
/// magnitudes differ.
std::vector<SweepScene> Sweep(const MotionSource& motion, const RigSpec& rig,
                              const CorruptionSpec& base, const SweepGrid& grid);

}  // namespace dynrecon
