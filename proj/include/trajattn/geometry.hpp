#pragma once

#include <array>
#include <vector>

#include "trajattn/tensor.hpp"

namespace trajattn {

using Vec2 = std::array<double, 2>;
using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

// Rigid transform describing a child frame expressed in its parent frame.
// to_parent maps child-frame coordinates into the parent; from_parent is the
// inverse. rotation columns are the child axes in parent coordinates.
struct PoseSE3 {
  Mat3 rotation{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  Vec3 translation{0, 0, 0};

  Vec3 to_parent(const Vec3& x) const;
  Vec3 from_parent(const Vec3& x) const;
  // this = parent pose, other = child pose in this frame; result is the child
  // pose in the parent frame.
  PoseSE3 compose(const PoseSE3& other) const;
  // Orthonormality and right-handedness within 1e-9.
  void validate() const;
};

// Rotation about the world z axis (heading), translation in the ground plane.
PoseSE3 yaw_pose(double yaw, const Vec3& translation);

// Camera mounted at (0, 0, height) on the robot. The camera frame is
// +X right, +Y down, +Z forward; robot frame is x forward, y left, z up.
// pitch > 0 tilts the view up, pitch < 0 down.
PoseSE3 make_camera_pose(double height, double pitch);

struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int image_w = 0, image_h = 0;
  void validate() const;
};

struct ConvLayerGeometry {
  int kernel = 0;
  int stride = 0;
  int padding = 0;
};

// Stride bookkeeping between image pixels and the encoder output grid.
// Layers must keep spatial alignment (2*padding == kernel-1) and the image
// dims must divide evenly so the mapping is exact.
struct FeatureMapGeometry {
  std::vector<ConvLayerGeometry> layers;
  int image_w = 0, image_h = 0;

  int out_stride() const;
  int feature_w() const { return image_w / out_stride(); }
  int feature_h() const { return image_h / out_stride(); }
  void validate() const;
};

enum class CovarianceVariant { isotropic, diagonal, full };

int covariance_param_count(CovarianceVariant variant);
CovarianceVariant covariance_variant_from_string(const std::string& name);
std::string to_string(CovarianceVariant variant);

// Raw mask-shape parameters as the network emits them: log sigma^2
// (isotropic), per-axis log sigma^2 (diagonal) or the 2x2 factor Phi
// row-major (full, Sigma = Phi Phi^T + ridge).
struct AttentionCovariance {
  CovarianceVariant variant = CovarianceVariant::isotropic;
  std::vector<double> params;

  // Reconstructed 2x2 Sigma, row-major, variance-floored.
  std::array<double, 4> sigma_matrix() const;
};

constexpr double kVarianceFloor = 1e-4;
constexpr double kDepthMin = 0.1;

Vec3 world_to_robot(const Vec3& x_w, const PoseSE3& robot_pose_in_world);
Vec3 robot_to_world(const Vec3& x_r, const PoseSE3& robot_pose_in_world);

struct PixelProjection {
  double u = 0, v = 0;
  double depth = 0;      // camera-frame depth before any clamping
  bool clamped = false;  // depth fell below the near limit
};

PixelProjection robot_to_pixel(const Vec3& x_r, const PoseSE3& camera_pose_in_robot,
                               const CameraIntrinsics& K);

// Pixel -> feature-map units: divide by the output stride, then clamp onto
// the grid. Returns (x = column, y = row).
Vec2 pixel_to_featuremap(double u, double v, const FeatureMapGeometry& g);

// Scaled Gaussian evaluated on the integer feature grid, stored row-major
// (feature_h, feature_w); grid cell (row i, col j) sits at position (j, i).
std::vector<double> gaussian_mask(const Vec2& x_attn, const AttentionCovariance& cov,
                                  int feature_w, int feature_h);

struct ProjectionResult {
  Tensor coords;              // (2), feature-map units (x = column, y = row)
  bool clamped_depth = false;
  bool railed_x = false;      // clamped onto the grid border
  bool railed_y = false;
};

// Differentiable robot-frame point -> feature-map coordinates. One fused op:
// extrinsic change of frame, pinhole division, stride division, rail clamp.
// Gradients through the depth stop when the near clamp engages and through a
// coordinate when it sits on a rail.
ProjectionResult robot_point_to_featuremap(const Tensor& x_r,
                                           const PoseSE3& camera_pose_in_robot,
                                           const CameraIntrinsics& K,
                                           const FeatureMapGeometry& g);

// Differentiable mask rendering; output (feature_h, feature_w). cov_params
// length must match the variant. Gradients flow to x_attn and cov_params.
Tensor gaussian_mask_op(const Tensor& x_attn, const Tensor& cov_params,
                        CovarianceVariant variant, int feature_w, int feature_h);

}  // namespace trajattn
