#include <cmath>
#include <random>

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include "dynrecon/geometry.hpp"

namespace dynrecon {
namespace {

CameraFrame Frame(int index, const Mat3& k = Mat3::Identity()) {
  CameraFrame f;
  f.intrinsics = k;
  f.global_index = index;
  f.frame_in_video = index;
  return f;
}

RayField SingleRay(const Vec3& c, const Vec3& r) {
  RayField rays(1, 1);
  rays.SetCenter(0, c);
  rays.SetDirection(0, 0, r);
  return rays;
}

TEST(ComputeRays, PrincipalPointUnderIdentity) {
  ObservationSet obs(1, 1);
  obs.Set(0, 0, Vec2(0, 0));
  const RayField rays = ComputeRays({Frame(0)}, obs);
  EXPECT_TRUE(rays.direction(0, 0).isApprox(Vec3(0, 0, 1), 1e-12));
}

TEST(ComputeRays, OffsetPixel) {
  ObservationSet obs(1, 1);
  obs.Set(0, 0, Vec2(1, 0));
  const RayField rays = ComputeRays({Frame(0)}, obs);
  EXPECT_TRUE(rays.direction(0, 0).isApprox(Vec3(1, 0, 1) / std::sqrt(2.0), 1e-12));
}

TEST(ComputeRays, FocalScalingCancelsAtPrincipalPoint) {
  ObservationSet obs(1, 1);
  obs.Set(0, 0, Vec2(0, 0));
  const RayField rays =
      ComputeRays({Frame(0, Vec3(1000, 1000, 1).asDiagonal())}, obs);
  EXPECT_TRUE(rays.direction(0, 0).isApprox(Vec3(0, 0, 1), 1e-12));
}

TEST(ComputeRays, MissingObservationLeavesRayUndefined) {
  ObservationSet obs(2, 1);
  obs.Set(0, 0, Vec2(3, 4));
  const RayField rays = ComputeRays({Frame(0)}, obs);
  EXPECT_TRUE(rays.defined(0, 0));
  EXPECT_FALSE(rays.defined(1, 0));
}

TEST(ComputeRays, SingularIntrinsicsNamesFrame) {
  ObservationSet obs(1, 2);
  obs.Set(0, 0, Vec2(0, 0));
  obs.Set(0, 1, Vec2(0, 0));
  Mat3 bad = Mat3::Identity();
  bad(1, 1) = 0.0;
  try {
    ComputeRays({Frame(0), Frame(1, bad)}, obs);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find('1'), std::string::npos);
  }
}

TEST(ComputeRays, DimensionMismatch) {
  ObservationSet obs(1, 3);
  EXPECT_THROW(ComputeRays({Frame(0), Frame(1)}, obs), Error);
}

TEST(AssembleStructure, PointAlongRay) {
  const RayField rays = SingleRay(Vec3::Zero(), Vec3(0, 0, 1));
  DepthMatrix d(1, 1);
  d.values(0, 0) = 5.0;
  d.defined(0, 0) = true;
  EXPECT_TRUE(AssembleStructure(d, rays).point(0, 0).isApprox(Vec3(0, 0, 5)));
}

TEST(AssembleStructure, ZeroDepthCollapsesToCenters) {
  RayField rays(2, 2);
  rays.SetCenter(0, Vec3(1, 2, 3));
  rays.SetCenter(1, Vec3(-4, 0, 1));
  DepthMatrix d(2, 2);
  for (int p = 0; p < 2; ++p) {
    for (int f = 0; f < 2; ++f) {
      rays.SetDirection(p, f, Vec3(p, 1, f).normalized());
      d.defined(p, f) = true;
    }
  }
  const StructureMatrix x = AssembleStructure(d, rays);
  for (int p = 0; p < 2; ++p) {
    for (int f = 0; f < 2; ++f) EXPECT_EQ(x.point(p, f), rays.center(f));
  }
}

TEST(AssembleStructure, UndefinedDepthOnDefinedRayIsInputError) {
  const RayField rays = SingleRay(Vec3::Zero(), Vec3(0, 0, 1));
  DepthMatrix d(1, 1);
  try {
    AssembleStructure(d, rays);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kInput);
  }
}

TEST(ProjectDepth, Examples) {
  const RayField rays = SingleRay(Vec3::Zero(), Vec3(0, 0, 1));
  StructureMatrix x(1, 1);
  x.point(0, 0) = Vec3(0, 0, 5);
  EXPECT_NEAR(ProjectDepth(x, rays).values(0, 0), 5.0, 1e-12);
  x.point(0, 0) = Vec3(1, 0, 5);
  EXPECT_NEAR(ProjectDepth(x, rays).values(0, 0), 5.0, 1e-12);
  x.point(0, 0) = Vec3::Zero();
  EXPECT_NEAR(ProjectDepth(x, rays).values(0, 0), 0.0, 1e-12);
}

TEST(Reproject, Examples) {
  StructureMatrix x(2, 1);
  x.point(0, 0) = Vec3(0, 0, 5);
  x.point(1, 0) = Vec3(1, 0, 5);
  const ObservationSet obs = Reproject(x, {Frame(0)});
  EXPECT_TRUE(obs.measure(0, 0).isApprox(Vec2(0, 0)));
  EXPECT_TRUE(obs.measure(1, 0).isApprox(Vec2(0.2, 0), 1e-12));
}

TEST(Reproject, BehindCameraIsMissing) {
  StructureMatrix x(1, 1);
  x.point(0, 0) = Vec3(0, 0, -2);
  EXPECT_FALSE(Reproject(x, {Frame(0)}).present(0, 0));
}

Mat3 RandomRotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized().toRotationMatrix();
}

TEST(Geometry, ProjectAssembleRoundTrip) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  const int points = 4;
  const int frames = 3;
  std::vector<CameraFrame> cams;
  StructureMatrix x(points, frames);
  for (int f = 0; f < frames; ++f) {
    CameraFrame c = Frame(f, Vec3(800, 800, 1).asDiagonal());
    c.rotation = RandomRotation(rng);
    c.center = Vec3(n(rng), n(rng), n(rng));
    cams.push_back(c);
    for (int p = 0; p < points; ++p) {
      // In front of the camera.
      const Vec3 local(0.3 * n(rng), 0.3 * n(rng), 4.0 + n(rng) * 0.2);
      x.point(p, f) = c.center + c.rotation.transpose() * local;
    }
  }
  const ObservationSet obs = Reproject(x, cams);
  const RayField rays = ComputeRays(cams, obs);
  const StructureMatrix back = AssembleStructure(ProjectDepth(x, rays), rays);
  EXPECT_LT((back.shapes - x.shapes).cwiseAbs().maxCoeff(), 1e-9);
  const ObservationSet again = Reproject(back, cams);
  for (int p = 0; p < points; ++p) {
    for (int f = 0; f < frames; ++f) {
      EXPECT_LT((again.measure(p, f) - obs.measure(p, f)).norm(), 1e-8);
    }
  }
}

TEST(Geometry, RigidMotionLeavesDepthUnchanged) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n;
  CameraFrame cam = Frame(0);
  cam.rotation = RandomRotation(rng);
  cam.center = Vec3(1, -2, 0.5);
  StructureMatrix x(3, 1);
  for (int p = 0; p < 3; ++p) {
    x.point(p, 0) = cam.center + cam.rotation.transpose() * Vec3(n(rng) * 0.2, n(rng) * 0.2, 3.0);
  }
  const ObservationSet obs = Reproject(x, {cam});
  const DepthMatrix d = ProjectDepth(x, ComputeRays({cam}, obs));

  const Mat3 q = RandomRotation(rng);
  const Vec3 t(4, 5, -6);
  CameraFrame moved = cam;
  moved.rotation = cam.rotation * q.transpose();
  moved.center = q * cam.center + t;
  StructureMatrix xm(3, 1);
  for (int p = 0; p < 3; ++p) xm.point(p, 0) = q * x.point(p, 0) + t;
  const ObservationSet obs_moved = Reproject(xm, {moved});
  const DepthMatrix dm = ProjectDepth(xm, ComputeRays({moved}, obs_moved));
  for (int p = 0; p < 3; ++p) {
    EXPECT_LT((obs_moved.measure(p, 0) - obs.measure(p, 0)).norm(), 1e-9);
    EXPECT_NEAR(dm.values(p, 0), d.values(p, 0), 1e-9);
  }
}

TEST(ValidateFrames, RejectsNonOrthonormalRotation) {
  CameraFrame f = Frame(0);
  f.rotation(0, 0) = 2.0;
  EXPECT_THROW(ValidateFrames({f}), Error);
}

TEST(ValidateFrames, RejectsDuplicateIndices) {
  EXPECT_THROW(ValidateFrames({Frame(0), Frame(0)}), Error);
}

}  // namespace
}  // namespace dynrecon
