#include "trajattn/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "trajattn/ops.hpp"

namespace trajattn {

namespace {

Vec3 rotate(const Mat3& r, const Vec3& x) {
  Vec3 out{};
  for (int i = 0; i < 3; ++i) {
    out[static_cast<size_t>(i)] = r[static_cast<size_t>(i)][0] * x[0] +
                                  r[static_cast<size_t>(i)][1] * x[1] +
                                  r[static_cast<size_t>(i)][2] * x[2];
  }
  return out;
}

Vec3 rotate_transposed(const Mat3& r, const Vec3& x) {
  Vec3 out{};
  for (int i = 0; i < 3; ++i) {
    out[static_cast<size_t>(i)] =
        r[0][static_cast<size_t>(i)] * x[0] + r[1][static_cast<size_t>(i)] * x[1] +
        r[2][static_cast<size_t>(i)] * x[2];
  }
  return out;
}

// Inverse and normalization prefactor of a symmetric 2x2 covariance.
struct MaskKernel {
  double inv00, inv01, inv11;
  double prefactor;
};

MaskKernel mask_kernel(const std::array<double, 4>& sigma) {
  const double det = sigma[0] * sigma[3] - sigma[1] * sigma[2];
  if (!(det > 1e-12)) {
    throw std::runtime_error("gaussian mask: covariance is degenerate despite variance floor");
  }
  return {sigma[3] / det, -sigma[1] / det, sigma[0] / det, 1.0 / std::sqrt(det)};
}

double mask_value(const MaskKernel& k, double dx, double dy) {
  const double q = k.inv00 * dx * dx + 2.0 * k.inv01 * dx * dy + k.inv11 * dy * dy;
  return k.prefactor * std::exp(-0.5 * q);
}

constexpr double kLogFloor = -9.210340371976182;  // log(kVarianceFloor)

}  // namespace

Vec3 PoseSE3::to_parent(const Vec3& x) const {
  Vec3 r = rotate(rotation, x);
  return {r[0] + translation[0], r[1] + translation[1], r[2] + translation[2]};
}

Vec3 PoseSE3::from_parent(const Vec3& x) const {
  return rotate_transposed(
      rotation, {x[0] - translation[0], x[1] - translation[1], x[2] - translation[2]});
}

PoseSE3 PoseSE3::compose(const PoseSE3& other) const {
  PoseSE3 out;
  for (size_t i = 0; i < 3; ++i) {
    for (size_t j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (size_t k = 0; k < 3; ++k) acc += rotation[i][k] * other.rotation[k][j];
      out.rotation[i][j] = acc;
    }
  }
  out.translation = to_parent(other.translation);
  return out;
}

void PoseSE3::validate() const {
  for (size_t i = 0; i < 3; ++i) {
    for (size_t j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (size_t k = 0; k < 3; ++k) dot += rotation[k][i] * rotation[k][j];
      const double expected = i == j ? 1.0 : 0.0;
      if (std::fabs(dot - expected) > 1e-9) {
        throw std::invalid_argument("pose rotation is not orthonormal");
      }
    }
  }
  const double det =
      rotation[0][0] * (rotation[1][1] * rotation[2][2] - rotation[1][2] * rotation[2][1]) -
      rotation[0][1] * (rotation[1][0] * rotation[2][2] - rotation[1][2] * rotation[2][0]) +
      rotation[0][2] * (rotation[1][0] * rotation[2][1] - rotation[1][1] * rotation[2][0]);
  if (std::fabs(det - 1.0) > 1e-9) {
    throw std::invalid_argument("pose rotation is not right-handed");
  }
}

PoseSE3 yaw_pose(double yaw, const Vec3& translation) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  PoseSE3 pose;
  pose.rotation = {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
  pose.translation = translation;
  return pose;
}

PoseSE3 make_camera_pose(double height, double pitch) {
  const double c = std::cos(pitch), s = std::sin(pitch);
  PoseSE3 pose;
  // Columns are the camera axes in robot coordinates: right = -y_robot,
  // down tilts with pitch, forward = +x_robot tilted by pitch.
  pose.rotation = {{{0, s, c}, {-1, 0, 0}, {0, -c, s}}};
  pose.translation = {0, 0, height};
  return pose;
}

void CameraIntrinsics::validate() const {
  if (fx <= 0 || fy <= 0) throw std::invalid_argument("camera: focal lengths must be positive");
  if (image_w <= 0 || image_h <= 0) throw std::invalid_argument("camera: image dims must be positive");
  if (cx < 0 || cx >= image_w || cy < 0 || cy >= image_h) {
    throw std::invalid_argument("camera: principal point must lie inside the image");
  }
}

int FeatureMapGeometry::out_stride() const {
  int s = 1;
  for (const auto& layer : layers) s *= layer.stride;
  return s;
}

void FeatureMapGeometry::validate() const {
  if (layers.empty()) throw std::invalid_argument("feature geometry: no layers");
  for (const auto& layer : layers) {
    if (layer.kernel <= 0 || layer.stride <= 0 || layer.padding < 0) {
      throw std::invalid_argument("feature geometry: bad layer parameters");
    }
    if (2 * layer.padding != layer.kernel - 1) {
      throw std::invalid_argument(
          "feature geometry: layer breaks spatial alignment (2*padding != kernel-1)");
    }
  }
  const int s = out_stride();
  if (image_w <= 0 || image_h <= 0 || image_w % s != 0 || image_h % s != 0) {
    throw std::invalid_argument("feature geometry: image dims must divide the output stride");
  }
}

int covariance_param_count(CovarianceVariant variant) {
  switch (variant) {
    case CovarianceVariant::isotropic: return 1;
    case CovarianceVariant::diagonal: return 2;
    case CovarianceVariant::full: return 4;
  }
  throw std::invalid_argument("unknown covariance variant");
}

CovarianceVariant covariance_variant_from_string(const std::string& name) {
  if (name == "isotropic") return CovarianceVariant::isotropic;
  if (name == "diagonal") return CovarianceVariant::diagonal;
  if (name == "full") return CovarianceVariant::full;
  throw std::invalid_argument("unknown covariance variant: " + name);
}

std::string to_string(CovarianceVariant variant) {
  switch (variant) {
    case CovarianceVariant::isotropic: return "isotropic";
    case CovarianceVariant::diagonal: return "diagonal";
    case CovarianceVariant::full: return "full";
  }
  throw std::invalid_argument("unknown covariance variant");
}

std::array<double, 4> AttentionCovariance::sigma_matrix() const {
  if (static_cast<int>(params.size()) != covariance_param_count(variant)) {
    throw std::invalid_argument("covariance: parameter count does not match variant");
  }
  switch (variant) {
    case CovarianceVariant::isotropic: {
      const double s2 = std::exp(std::max(params[0], kLogFloor));
      return {s2, 0, 0, s2};
    }
    case CovarianceVariant::diagonal: {
      const double sx = std::exp(std::max(params[0], kLogFloor));
      const double sy = std::exp(std::max(params[1], kLogFloor));
      return {sx, 0, 0, sy};
    }
    case CovarianceVariant::full: {
      const double a = params[0], b = params[1], c = params[2], d = params[3];
      std::array<double, 4> sigma = {a * a + b * b, a * c + b * d, a * c + b * d,
                                     c * c + d * d};
      // Ridge only when Phi Phi^T is near singular, so well-conditioned
      // factors reproduce their covariance exactly.
      if (sigma[0] * sigma[3] - sigma[1] * sigma[2] < 1e-12) {
        sigma[0] += kVarianceFloor;
        sigma[3] += kVarianceFloor;
      }
      return sigma;
    }
  }
  throw std::invalid_argument("unknown covariance variant");
}

Vec3 world_to_robot(const Vec3& x_w, const PoseSE3& robot_pose_in_world) {
  return robot_pose_in_world.from_parent(x_w);
}

Vec3 robot_to_world(const Vec3& x_r, const PoseSE3& robot_pose_in_world) {
  return robot_pose_in_world.to_parent(x_r);
}

PixelProjection robot_to_pixel(const Vec3& x_r, const PoseSE3& camera_pose_in_robot,
                               const CameraIntrinsics& K) {
  const Vec3 xc = camera_pose_in_robot.from_parent(x_r);
  PixelProjection p;
  p.depth = xc[2];
  p.clamped = xc[2] < kDepthMin;
  const double d = p.clamped ? kDepthMin : xc[2];
  p.u = K.fx * xc[0] / d + K.cx;
  p.v = K.fy * xc[1] / d + K.cy;
  return p;
}

Vec2 pixel_to_featuremap(double u, double v, const FeatureMapGeometry& g) {
  const double s = static_cast<double>(g.out_stride());
  auto clamp_axis = [](double x, double hi) { return x < 0.0 ? 0.0 : (x > hi ? hi : x); };
  return {clamp_axis(u / s, g.feature_w() - 1.0), clamp_axis(v / s, g.feature_h() - 1.0)};
}

std::vector<double> gaussian_mask(const Vec2& x_attn, const AttentionCovariance& cov,
                                  int feature_w, int feature_h) {
  if (feature_w <= 0 || feature_h <= 0) {
    throw std::invalid_argument("gaussian mask: feature dims must be positive");
  }
  const MaskKernel kern = mask_kernel(cov.sigma_matrix());
  std::vector<double> mask(static_cast<size_t>(feature_w) * feature_h);
  for (int i = 0; i < feature_h; ++i) {
    for (int j = 0; j < feature_w; ++j) {
      mask[static_cast<size_t>(i) * feature_w + j] =
          mask_value(kern, j - x_attn[0], i - x_attn[1]);
    }
  }
  return mask;
}

ProjectionResult robot_point_to_featuremap(const Tensor& x_r,
                                           const PoseSE3& camera_pose_in_robot,
                                           const CameraIntrinsics& K,
                                           const FeatureMapGeometry& g) {
  if (x_r.rank() != 1 || x_r.dim(0) != 3) {
    throw std::invalid_argument("projection: expected a 3-vector, got " +
                                shape_to_string(x_r.shape()));
  }
  const Mat3 r = camera_pose_in_robot.rotation;
  const Vec3 xc = camera_pose_in_robot.from_parent({x_r.values()[0], x_r.values()[1],
                                                    x_r.values()[2]});
  const bool clamped = xc[2] < kDepthMin;
  const double d = clamped ? kDepthMin : xc[2];
  const double s = static_cast<double>(g.out_stride());
  const double raw_x = (K.fx * xc[0] / d + K.cx) / s;
  const double raw_y = (K.fy * xc[1] / d + K.cy) / s;
  const double hi_x = g.feature_w() - 1.0;
  const double hi_y = g.feature_h() - 1.0;

  ProjectionResult result;
  result.clamped_depth = clamped;
  result.railed_x = raw_x < 0.0 || raw_x > hi_x;
  result.railed_y = raw_y < 0.0 || raw_y > hi_y;
  const double out_x = raw_x < 0.0 ? 0.0 : (raw_x > hi_x ? hi_x : raw_x);
  const double out_y = raw_y < 0.0 ? 0.0 : (raw_y > hi_y ? hi_y : raw_y);
  result.coords = Tensor({2}, std::vector<double>{out_x, out_y});

  Tape* tape = active_tape();
  if (tape && x_r.requires_grad()) {
    result.coords.impl()->requires_grad = true;
    auto in_impl = x_r.impl();
    auto out_impl = result.coords.impl();
    const double fx = K.fx, fy = K.fy;
    const bool rx = result.railed_x, ry = result.railed_y;
    const double xc0 = xc[0], xc1 = xc[1];
    tape->record({x_r}, result.coords, [=](Tape& t) {
      const std::vector<double>* gout = t.find_grad(out_impl.get());
      if (!gout) return;
      auto& gin = t.grad_of(in_impl);
      for (int k = 0; k < 3; ++k) {
        // camera-frame partials: dXc_a/dx_k = R[k][a]
        const double dxc0 = r[static_cast<size_t>(k)][0];
        const double dxc1 = r[static_cast<size_t>(k)][1];
        const double dd = clamped ? 0.0 : r[static_cast<size_t>(k)][2];
        double acc = 0.0;
        if (!rx) acc += (*gout)[0] * fx * (dxc0 / d - xc0 * dd / (d * d)) / s;
        if (!ry) acc += (*gout)[1] * fy * (dxc1 / d - xc1 * dd / (d * d)) / s;
        gin[static_cast<size_t>(k)] += acc;
      }
    });
  }
  return result;
}

Tensor gaussian_mask_op(const Tensor& x_attn, const Tensor& cov_params,
                        CovarianceVariant variant, int feature_w, int feature_h) {
  if (x_attn.rank() != 1 || x_attn.dim(0) != 2) {
    throw std::invalid_argument("gaussian mask: position must be a 2-vector, got " +
                                shape_to_string(x_attn.shape()));
  }
  const int want = covariance_param_count(variant);
  if (cov_params.rank() != 1 || cov_params.dim(0) != want) {
    throw std::invalid_argument("gaussian mask: expected " + std::to_string(want) +
                                " shape parameters, got " + shape_to_string(cov_params.shape()));
  }
  AttentionCovariance cov{variant, cov_params.values()};
  const std::array<double, 4> sigma = cov.sigma_matrix();
  const MaskKernel kern = mask_kernel(sigma);
  const double px = x_attn.values()[0], py = x_attn.values()[1];

  Tensor out({feature_h, feature_w});
  for (int i = 0; i < feature_h; ++i) {
    for (int j = 0; j < feature_w; ++j) {
      out.data()[i * feature_w + j] = mask_value(kern, j - px, i - py);
    }
  }

  Tape* tape = active_tape();
  if (tape && (x_attn.requires_grad() || cov_params.requires_grad())) {
    out.impl()->requires_grad = true;
    auto pos_impl = x_attn.impl();
    auto cov_impl = cov_params.impl();
    auto out_impl = out.impl();
    const std::vector<double> raw = cov_params.values();
    tape->record({x_attn, cov_params}, out, [=](Tape& t) {
      const std::vector<double>* gout = t.find_grad(out_impl.get());
      if (!gout) return;
      std::vector<double>* gpos = pos_impl->requires_grad ? &t.grad_of(pos_impl) : nullptr;
      std::vector<double>* gcov = cov_impl->requires_grad ? &t.grad_of(cov_impl) : nullptr;

      // Shared full-variant precomputation: invPhi = Sigma^-1 Phi.
      double inv_phi[4] = {0, 0, 0, 0};
      if (variant == CovarianceVariant::full && gcov) {
        const double a = raw[0], b = raw[1], c = raw[2], dd = raw[3];
        inv_phi[0] = kern.inv00 * a + kern.inv01 * c;
        inv_phi[1] = kern.inv00 * b + kern.inv01 * dd;
        inv_phi[2] = kern.inv01 * a + kern.inv11 * c;
        inv_phi[3] = kern.inv01 * b + kern.inv11 * dd;
      }

      for (int i = 0; i < feature_h; ++i) {
        for (int j = 0; j < feature_w; ++j) {
          const double g = (*gout)[static_cast<size_t>(i) * feature_w + j];
          if (g == 0.0) continue;
          const double m = out_impl->values[static_cast<size_t>(i) * feature_w + j];
          const double dx = j - px, dy = i - py;
          const double wx = kern.inv00 * dx + kern.inv01 * dy;
          const double wy = kern.inv01 * dx + kern.inv11 * dy;
          const double gm = g * m;
          if (gpos) {
            (*gpos)[0] += gm * wx;
            (*gpos)[1] += gm * wy;
          }
          if (!gcov) continue;
          switch (variant) {
            case CovarianceVariant::isotropic: {
              if (raw[0] > kLogFloor) {
                const double q = wx * dx + wy * dy;
                (*gcov)[0] += gm * (-1.0 + 0.5 * q);
              }
              break;
            }
            case CovarianceVariant::diagonal: {
              if (raw[0] > kLogFloor) (*gcov)[0] += gm * (-0.5 + 0.5 * wx * dx);
              if (raw[1] > kLogFloor) (*gcov)[1] += gm * (-0.5 + 0.5 * wy * dy);
              break;
            }
            case CovarianceVariant::full: {
              // d log m / d Phi = -Sigma^-1 Phi + w (Phi^T w)^T, w = Sigma^-1 delta
              const double a = raw[0], b = raw[1], c = raw[2], dd = raw[3];
              const double ptw0 = a * wx + c * wy;
              const double ptw1 = b * wx + dd * wy;
              (*gcov)[0] += gm * (-inv_phi[0] + wx * ptw0);
              (*gcov)[1] += gm * (-inv_phi[1] + wx * ptw1);
              (*gcov)[2] += gm * (-inv_phi[2] + wy * ptw0);
              (*gcov)[3] += gm * (-inv_phi[3] + wy * ptw1);
              break;
            }
          }
        }
      }
    });
  }
  return out;
}

}  // namespace trajattn
