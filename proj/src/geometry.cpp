#include "dynrecon/geometry.hpp"

#include <cmath>
#include <set>
#include <string>
#include <utility>

#include <Eigen/Geometry>
#include <Eigen/LU>

namespace dynrecon {

std::string_view CategoryName(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kInput: return "input";
    case ErrorCategory::kConstraint: return "constraint";
    case ErrorCategory::kInfeasible: return "infeasible";
    case ErrorCategory::kNumerical: return "numerical";
    case ErrorCategory::kIo: return "io";
  }
  return "unknown";
}

Eigen::Matrix<double, 3, 4> CameraFrame::ProjectionMatrix() const {
  Eigen::Matrix<double, 3, 4> pose;
  pose.leftCols<3>() = rotation;
  pose.col(3) = -rotation * center;
  return intrinsics * pose;
}

void ValidateFrames(const std::vector<CameraFrame>& frames) {
  std::set<int> globals;
  std::set<std::pair<int, int>> video_slots;
  for (const CameraFrame& frame : frames) {
    const std::string tag = "frame " + std::to_string(frame.global_index);
    const double ortho =
        (frame.rotation.transpose() * frame.rotation - Mat3::Identity()).norm();
    DYNRECON_CHECK(ortho <= 1e-9, ErrorCategory::kInput,
                   tag + ": rotation is not orthonormal");
    DYNRECON_CHECK(frame.intrinsics.diagonal().minCoeff() > 0.0,
                   ErrorCategory::kInput,
                   tag + ": intrinsics must have a positive diagonal");
    DYNRECON_CHECK(frame.center.allFinite(), ErrorCategory::kInput,
                   tag + ": non-finite camera center");
    DYNRECON_CHECK(globals.insert(frame.global_index).second,
                   ErrorCategory::kInput, tag + ": duplicate global index");
    DYNRECON_CHECK(
        video_slots.insert({frame.video_id, frame.frame_in_video}).second,
        ErrorCategory::kInput,
        tag + ": duplicate (video_id, frame_in_video) pair");
  }
}

std::vector<const CameraFrame*> FramesByIndex(
    const std::vector<CameraFrame>& frames) {
  std::vector<const CameraFrame*> ordered(frames.size(), nullptr);
  for (const CameraFrame& frame : frames) {
    DYNRECON_CHECK(frame.global_index >= 0 &&
                       frame.global_index < static_cast<int>(frames.size()) &&
                       ordered[frame.global_index] == nullptr,
                   ErrorCategory::kInput,
                   "global indices must be exactly 0..F-1");
    ordered[frame.global_index] = &frame;
  }
  return ordered;
}

ObservationSet::ObservationSet(int point_count, int frame_count)
    : points_(point_count),
      frames_(frame_count),
      measures_(static_cast<std::size_t>(point_count) * frame_count,
                Vec2::Zero()),
      present_(static_cast<std::size_t>(point_count) * frame_count, 0) {
  DYNRECON_CHECK(point_count >= 0 && frame_count >= 0, ErrorCategory::kInput,
                 "negative observation dimensions");
}

void ObservationSet::Set(int p, int f, const Vec2& x) {
  DYNRECON_CHECK(x.allFinite(), ErrorCategory::kInput,
                 "non-finite measurement at point " + std::to_string(p) +
                     ", frame " + std::to_string(f));
  measures_[Index(p, f)] = x;
  present_[Index(p, f)] = 1;
}

void ObservationSet::SetMissing(int p, int f) {
  measures_[Index(p, f)] = Vec2::Zero();
  present_[Index(p, f)] = 0;
}

std::size_t ObservationSet::PresentCount() const {
  std::size_t n = 0;
  for (char c : present_) n += c != 0;
  return n;
}

RayField::RayField(int point_count, int frame_count)
    : points_(point_count),
      frames_(frame_count),
      directions_(static_cast<std::size_t>(point_count) * frame_count,
                  Vec3::Zero()),
      defined_(static_cast<std::size_t>(point_count) * frame_count, 0),
      centers_(frame_count, Vec3::Zero()) {}

void RayField::SetDirection(int p, int f, const Vec3& r) {
  directions_[Index(p, f)] = r;
  defined_[Index(p, f)] = 1;
}

RayField ComputeRays(const std::vector<CameraFrame>& frames,
                     const ObservationSet& obs) {
  DYNRECON_CHECK(static_cast<int>(frames.size()) == obs.frame_count(),
                 ErrorCategory::kInput,
                 "frame list does not match observation frame count");
  const auto ordered = FramesByIndex(frames);
  RayField rays(obs.point_count(), obs.frame_count());
  for (int f = 0; f < obs.frame_count(); ++f) {
    const CameraFrame& frame = *ordered[f];
    Eigen::FullPivLU<Mat3> lu(frame.intrinsics);
    DYNRECON_CHECK(lu.isInvertible(), ErrorCategory::kNumerical,
                   "singular intrinsics in frame " + std::to_string(f));
    const Mat3 back = frame.rotation.transpose() * lu.inverse();
    rays.SetCenter(f, frame.center);
    for (int p = 0; p < obs.point_count(); ++p) {
      if (!obs.present(p, f)) continue;
      const Vec3 dir = back * obs.measure(p, f).homogeneous();
      rays.SetDirection(p, f, dir.normalized());
    }
  }
  return rays;
}

StructureMatrix AssembleStructure(const DepthMatrix& depths,
                                  const RayField& rays) {
  DYNRECON_CHECK(depths.point_count() == rays.point_count() &&
                     depths.frame_count() == rays.frame_count(),
                 ErrorCategory::kInput, "depth/ray dimension mismatch");
  StructureMatrix out(rays.point_count(), rays.frame_count());
  for (int f = 0; f < rays.frame_count(); ++f) {
    for (int p = 0; p < rays.point_count(); ++p) {
      if (!rays.defined(p, f)) {
        out.point(p, f) = rays.center(f);
        continue;
      }
      DYNRECON_CHECK(depths.defined(p, f), ErrorCategory::kInput,
                     "depth undefined where a ray is defined (point " +
                         std::to_string(p) + ", frame " + std::to_string(f) +
                         ")");
      out.point(p, f) = rays.center(f) + depths.values(p, f) * rays.direction(p, f);
    }
  }
  return out;
}

DepthMatrix ProjectDepth(const StructureMatrix& structure,
                         const RayField& rays) {
  DYNRECON_CHECK(structure.point_count() == rays.point_count() &&
                     structure.frame_count() == rays.frame_count(),
                 ErrorCategory::kInput, "structure/ray dimension mismatch");
  DepthMatrix depths(rays.point_count(), rays.frame_count());
  for (int f = 0; f < rays.frame_count(); ++f) {
    for (int p = 0; p < rays.point_count(); ++p) {
      if (!rays.defined(p, f)) continue;
      depths.values(p, f) =
          (structure.point(p, f) - rays.center(f)).dot(rays.direction(p, f));
      depths.defined(p, f) = true;
    }
  }
  return depths;
}

ObservationSet Reproject(const StructureMatrix& structure,
                         const std::vector<CameraFrame>& frames) {
  DYNRECON_CHECK(static_cast<int>(frames.size()) == structure.frame_count(),
                 ErrorCategory::kInput, "frame/structure dimension mismatch");
  const auto ordered = FramesByIndex(frames);
  ObservationSet obs(structure.point_count(), structure.frame_count());
  for (int f = 0; f < structure.frame_count(); ++f) {
    const Eigen::Matrix<double, 3, 4> proj = ordered[f]->ProjectionMatrix();
    const Mat3& rot = ordered[f]->rotation;
    for (int p = 0; p < structure.point_count(); ++p) {
      const Vec3 x = structure.point(p, f);
      const double cam_depth = rot.row(2).dot(x - ordered[f]->center);
      if (cam_depth <= 0.0) continue;  // behind the camera: left missing
      const Vec3 h = proj * x.homogeneous();
      DYNRECON_CHECK(std::abs(h.z()) >= 1e-12, ErrorCategory::kNumerical,
                     "degenerate dehomogenization in frame " + std::to_string(f));
      obs.Set(p, f, h.hnormalized());
    }
  }
  return obs;
}

}  // namespace dynrecon
