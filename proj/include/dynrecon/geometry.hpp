#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "dynrecon/error.hpp"

namespace dynrecon {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

/// One registered image: world-to-camera rotation, camera center and
/// intrinsics, plus its place within the capturing video.
struct CameraFrame {
  Mat3 rotation = Mat3::Identity();
  Vec3 center = Vec3::Zero();
  Mat3 intrinsics = Mat3::Identity();
  int video_id = 0;
  int frame_in_video = 0;
  int global_index = 0;

  /// 3x4 matrix K [R | -R C].
  Eigen::Matrix<double, 3, 4> ProjectionMatrix() const;
};

/// Checks orthonormal rotations, positive intrinsic diagonals and index
/// uniqueness. Throws Error(kInput) naming the offending frame.
void ValidateFrames(const std::vector<CameraFrame>& frames);

/// Per-point, per-frame pixel measurements with a presence mask.
/// Storage is point-major: entry (p, f) lives at p * frame_count + f.
class ObservationSet {
 public:
  ObservationSet() = default;
  ObservationSet(int point_count, int frame_count);

  int point_count() const { return points_; }
  int frame_count() const { return frames_; }

  bool present(int p, int f) const { return present_[Index(p, f)] != 0; }
  const Vec2& measure(int p, int f) const { return measures_[Index(p, f)]; }

  void Set(int p, int f, const Vec2& x);
  void SetMissing(int p, int f);

  std::size_t PresentCount() const;

 private:
  std::size_t Index(int p, int f) const {
    return static_cast<std::size_t>(p) * frames_ + f;
  }

  int points_ = 0;
  int frames_ = 0;
  std::vector<Vec2> measures_;
  std::vector<char> present_;
};

/// Unit viewing directions for every present observation.
class RayField {
 public:
  RayField() = default;
  RayField(int point_count, int frame_count);

  int point_count() const { return points_; }
  int frame_count() const { return frames_; }

  bool defined(int p, int f) const { return defined_[Index(p, f)] != 0; }
  const Vec3& direction(int p, int f) const { return directions_[Index(p, f)]; }
  const Vec3& center(int f) const { return centers_[f]; }

  void SetDirection(int p, int f, const Vec3& r);
  void SetCenter(int f, const Vec3& c) { centers_[f] = c; }

 private:
  std::size_t Index(int p, int f) const {
    return static_cast<std::size_t>(p) * frames_ + f;
  }

  int points_ = 0;
  int frames_ = 0;
  std::vector<Vec3> directions_;
  std::vector<char> defined_;
  std::vector<Vec3> centers_;
};

/// The 3P x F stacked shape matrix. Point p of frame f occupies rows
/// 3p..3p+2 of column f.
struct StructureMatrix {
  Eigen::MatrixXd shapes;

  StructureMatrix() = default;
  explicit StructureMatrix(Eigen::MatrixXd m) : shapes(std::move(m)) {}
  StructureMatrix(int point_count, int frame_count)
      : shapes(Eigen::MatrixXd::Zero(3 * point_count, frame_count)) {}

  int point_count() const { return static_cast<int>(shapes.rows() / 3); }
  int frame_count() const { return static_cast<int>(shapes.cols()); }

  auto point(int p, int f) { return shapes.block<3, 1>(3 * p, f); }
  auto point(int p, int f) const { return shapes.block<3, 1>(3 * p, f); }
};

/// Signed distances along viewing rays; only entries flagged in `defined`
/// carry meaning.
struct DepthMatrix {
  Eigen::MatrixXd values;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> defined;

  DepthMatrix() = default;
  DepthMatrix(int point_count, int frame_count)
      : values(Eigen::MatrixXd::Zero(point_count, frame_count)),
        defined(point_count, frame_count) {
    defined.setConstant(false);
  }

  int point_count() const { return static_cast<int>(values.rows()); }
  int frame_count() const { return static_cast<int>(values.cols()); }
};

/// r = normalize(R^T K^-1 [x; 1]) for every present observation. Frames must
/// be indexed by global_index 0..F-1 (any order in the list).
RayField ComputeRays(const std::vector<CameraFrame>& frames,
                     const ObservationSet& obs);

/// X(p,f) = C_f + d(p,f) r(p,f).
StructureMatrix AssembleStructure(const DepthMatrix& depths,
                                  const RayField& rays);

/// d(p,f) = (X(p,f) - C_f)^T r(p,f) wherever the ray is defined.
DepthMatrix ProjectDepth(const StructureMatrix& structure,
                         const RayField& rays);

/// Perspective projection of every point into its frame. Points with
/// non-positive camera-space depth are marked missing.
ObservationSet Reproject(const StructureMatrix& structure,
                         const std::vector<CameraFrame>& frames);

/// Frames sorted by global index; throws if indices are not exactly 0..F-1.
std::vector<const CameraFrame*> FramesByIndex(
    const std::vector<CameraFrame>& frames);

}  // namespace dynrecon
