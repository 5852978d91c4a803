#pragma once

// Coordinate conventions shared by every module.
//
// World and camera frames are x-right, y-up, z-forward. ERP longitude 0 faces
// +z, positive longitude turns toward +x, and latitude is positive above the
// equator. Pixel (i, j) has its center at continuous coordinate (i, j); rays
// are generated through (i + 0.5, j + 0.5) of the unit pixel grid. A camera
// pose composes R = Ry(yaw) * Rx(pitch) * Rz(roll) and maps camera-frame rays
// to world-frame rays.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "gimbal/error.hpp"
#include "gimbal/raster.hpp"

namespace gimbal {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

struct Vec3 {
  double x = 0, y = 0, z = 0;

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    const double n = norm();
    return {x / n, y / n, z / n};
  }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

/// Unit-length direction.
using UnitRay = Vec3;

/// 3x3 rotation, row-major.
class Rotation {
 public:
  constexpr Rotation() : m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}
  explicit constexpr Rotation(const std::array<double, 9>& m) : m_(m) {}

  static constexpr Rotation identity() { return Rotation(); }

  double operator()(int r, int c) const { return m_[r * 3 + c]; }
  const std::array<double, 9>& values() const { return m_; }

  Vec3 apply(const Vec3& v) const {
    return {m_[0] * v.x + m_[1] * v.y + m_[2] * v.z, m_[3] * v.x + m_[4] * v.y + m_[5] * v.z,
            m_[6] * v.x + m_[7] * v.y + m_[8] * v.z};
  }

  /// Inverse of a proper rotation.
  Rotation transpose() const {
    return Rotation({m_[0], m_[3], m_[6], m_[1], m_[4], m_[7], m_[2], m_[5], m_[8]});
  }

  friend Rotation operator*(const Rotation& a, const Rotation& b) {
    std::array<double, 9> out{};
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        out[r * 3 + c] = a(r, 0) * b(0, c) + a(r, 1) * b(1, c) + a(r, 2) * b(2, c);
    return Rotation(out);
  }

  bool is_identity() const { return *this == Rotation(); }

  /// max |R^T R - I| and |det R - 1| both below tol.
  bool is_orthonormal(double tol = 1e-9) const {
    const Rotation rtr = transpose() * *this;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        if (std::abs(rtr(r, c) - (r == c ? 1.0 : 0.0)) >= tol) return false;
    return std::abs(determinant() - 1.0) < tol;
  }

  double determinant() const {
    return m_[0] * (m_[4] * m_[8] - m_[5] * m_[7]) - m_[1] * (m_[3] * m_[8] - m_[5] * m_[6]) +
           m_[2] * (m_[3] * m_[7] - m_[4] * m_[6]);
  }

  double trace() const { return m_[0] + m_[4] + m_[8]; }

  friend bool operator==(const Rotation&, const Rotation&) = default;

 private:
  std::array<double, 9> m_;
};

/// Camera orientation in radians.
struct CameraPose {
  double yaw = 0;
  double pitch = 0;
  double roll = 0;
  friend bool operator==(const CameraPose&, const CameraPose&) = default;
};

/// Pinhole intrinsics in normalized device units. Construct through intrinsics_from_fov.
struct CameraIntrinsics {
  double vfov = 0;
  double aspect = 0;
  int width_px = 0;
  int height_px = 0;
  double f_x = 0;
  double f_y = 0;
};

inline CameraIntrinsics intrinsics_from_fov(double vfov, double aspect, int width_px, int height_px) {
  if (!(vfov > 0.0 && vfov < kPi)) {
    throw ConfigError("vertical FOV must lie strictly inside (0, 180) degrees, got " +
                      std::to_string(rad_to_deg(vfov)));
  }
  if (!(aspect > 0.0) || !std::isfinite(aspect)) {
    throw ConfigError("aspect ratio must be positive, got " + std::to_string(aspect));
  }
  if (width_px < 1 || height_px < 1) {
    throw ConfigError("perspective pixel dimensions must be positive");
  }
  CameraIntrinsics intr;
  intr.vfov = vfov;
  intr.aspect = aspect;
  intr.width_px = width_px;
  intr.height_px = height_px;
  intr.f_y = 1.0 / std::tan(vfov / 2.0);
  intr.f_x = intr.f_y / aspect;
  return intr;
}

inline Rotation rotation_about_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return Rotation({c, 0, s, 0, 1, 0, -s, 0, c});
}

/// Positive angles tilt the forward axis toward +y.
inline Rotation rotation_about_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return Rotation({1, 0, 0, 0, c, s, 0, -s, c});
}

inline Rotation rotation_about_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return Rotation({c, -s, 0, s, c, 0, 0, 0, 1});
}

inline Rotation pose_to_rotation(const CameraPose& pose) {
  return rotation_about_y(pose.yaw) * rotation_about_x(pose.pitch) * rotation_about_z(pose.roll);
}

/// The pitch/roll part of a pose: Rx(pitch) * Rz(roll). Equals Ry(yaw)^T * R(pose).
inline Rotation leveling_rotation(const CameraPose& pose) {
  return rotation_about_x(pose.pitch) * rotation_about_z(pose.roll);
}

inline double wrap_angle(double a) {
  double r = std::remainder(a, kTwoPi);  // [-pi, pi]
  if (r >= kPi) r -= kTwoPi;
  return r;
}

/// Inverse of pose_to_rotation. At gimbal lock (|pitch| = pi/2) roll is
/// reported as 0 and yaw absorbs the free angle.
inline CameraPose rotation_to_pose(const Rotation& r) {
  if (!r.is_orthonormal()) throw ConfigError("rotation_to_pose: matrix is not a proper rotation");
  constexpr double kLockTol = 1e-12;
  const double s = std::clamp(r(1, 2), -1.0, 1.0);
  CameraPose pose;
  pose.pitch = std::asin(s);
  if (1.0 - std::abs(s) < kLockTol) {
    pose.pitch = std::copysign(kPi / 2.0, s);
    pose.roll = 0.0;
    pose.yaw = wrap_angle(std::atan2(-r(2, 0), r(0, 0)));
  } else {
    pose.roll = wrap_angle(std::atan2(r(1, 0), r(1, 1)));
    pose.yaw = wrap_angle(std::atan2(r(0, 2), r(2, 2)));
  }
  return pose;
}

/// ||A - B||_F = 2 sqrt(2) sin(angle / 2); unlike acos of the trace this
/// stays accurate for nearly equal rotations.
inline double geodesic_distance(const Rotation& a, const Rotation& b) {
  double sq = 0.0;
  for (int i = 0; i < 9; ++i) sq += std::pow(a.values()[i] - b.values()[i], 2);
  return 2.0 * std::asin(std::min(1.0, std::sqrt(sq) / (2.0 * std::numbers::sqrt2)));
}

// ---------------------------------------------------------------------------
// Pixel <-> ray maps

struct PixelCoord {
  double u = 0;
  double v = 0;
};

struct PerspectivePixel {
  double u = 0;
  double v = 0;
  bool valid = false;
};

inline UnitRay erp_pixel_to_ray(double u, double v, int width, int height) {
  const double theta = kTwoPi * (u + 0.5) / width - kPi;
  const double phi = kPi / 2.0 - kPi * (v + 0.5) / height;
  const double cphi = std::cos(phi);
  return {cphi * std::sin(theta), std::sin(phi), cphi * std::cos(theta)};
}

/// u is reported in [-0.5, W - 0.5); callers index columns mod W. At the
/// poles atan2(0, 0) = 0 gives the deterministic longitude 0.
inline PixelCoord ray_to_erp_pixel(const UnitRay& d, int width, int height) {
  const double theta = std::atan2(d.x, d.z);
  const double phi = std::asin(std::clamp(d.y, -1.0, 1.0));
  double u = (theta + kPi) * width / kTwoPi - 0.5;
  if (u >= width - 0.5) u -= width;
  const double v = (kPi / 2.0 - phi) * height / kPi - 0.5;
  return {u, v};
}

inline UnitRay persp_pixel_to_ray(double u, double v, const CameraIntrinsics& intr) {
  const double x_ndc = 2.0 * (u + 0.5) / intr.width_px - 1.0;
  const double y_ndc = 1.0 - 2.0 * (v + 0.5) / intr.height_px;
  return Vec3{x_ndc / intr.f_x, y_ndc / intr.f_y, 1.0}.normalized();
}

/// Never throws; rays behind the camera or outside the frame are flagged invalid.
inline PerspectivePixel ray_to_persp_pixel(const UnitRay& d, const CameraIntrinsics& intr) {
  PerspectivePixel p;
  if (!(d.z > 0.0)) return p;
  const double x_ndc = intr.f_x * d.x / d.z;
  const double y_ndc = intr.f_y * d.y / d.z;
  p.u = (x_ndc + 1.0) * intr.width_px / 2.0 - 0.5;
  p.v = (1.0 - y_ndc) * intr.height_px / 2.0 - 0.5;
  p.valid = p.u >= -0.5 && p.u < intr.width_px - 0.5 && p.v >= -0.5 && p.v < intr.height_px - 0.5;
  return p;
}

// ---------------------------------------------------------------------------
// Sampling

/// Bilinear lookup with circular columns and clamped rows.
template <typename Tag>
double bilinear_sample_wrap(const Raster<Tag>& img, int channel, double u, double v) {
  const int w = img.width();
  const int h = img.height();
  v = std::clamp(v, 0.0, static_cast<double>(h - 1));
  const double uf = std::floor(u);
  const double vf = std::floor(v);
  const double a = u - uf;
  const double b = v - vf;
  const int x0 = wrap_index(static_cast<long long>(uf), w);
  const int x1 = x0 + 1 == w ? 0 : x0 + 1;
  const int y0 = static_cast<int>(vf);
  const int y1 = std::min(y0 + 1, h - 1);
  const double top = img(channel, y0, x0) * (1.0 - a) + img(channel, y0, x1) * a;
  if (b == 0.0) return top;
  const double bottom = img(channel, y1, x0) * (1.0 - a) + img(channel, y1, x1) * a;
  return top * (1.0 - b) + bottom * b;
}

/// Bilinear lookup clamped to the image border in both directions.
template <typename Tag>
double bilinear_sample_clamp(const Raster<Tag>& img, int channel, double u, double v) {
  u = std::clamp(u, 0.0, static_cast<double>(img.width() - 1));
  v = std::clamp(v, 0.0, static_cast<double>(img.height() - 1));
  const double uf = std::floor(u);
  const double vf = std::floor(v);
  const double a = u - uf;
  const double b = v - vf;
  const int x0 = static_cast<int>(uf);
  const int y0 = static_cast<int>(vf);
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double top = img(channel, y0, x0) * (1.0 - a) + img(channel, y0, x1) * a;
  const double bottom = img(channel, y1, x0) * (1.0 - a) + img(channel, y1, x1) * a;
  return top * (1.0 - b) + bottom * b;
}

// ---------------------------------------------------------------------------
// Whole-image transforms

struct ErpProjection {
  ErpImage image;
  ErpImage mask;  // 1 channel, exactly 0 or 1
};

/// Places a perspective image on the ERP canvas; the mask marks ERP pixels
/// whose rays fall inside the camera frustum.
inline ErpProjection project_perspective_to_erp(const PerspectiveImage& persp,
                                                const CameraIntrinsics& intr,
                                                const CameraPose& pose, int erp_width,
                                                int erp_height) {
  require_erp_shape(erp_height, erp_width);
  if (persp.width() != intr.width_px || persp.height() != intr.height_px) {
    throw ConfigError("perspective image does not match intrinsics pixel size");
  }
  const Rotation world_to_cam = pose_to_rotation(pose).transpose();
  ErpProjection out{ErpImage(persp.channels(), erp_height, erp_width),
                    ErpImage(1, erp_height, erp_width)};
  for (int y = 0; y < erp_height; ++y) {
    for (int x = 0; x < erp_width; ++x) {
      const Vec3 d_cam = world_to_cam.apply(erp_pixel_to_ray(x, y, erp_width, erp_height));
      const PerspectivePixel p = ray_to_persp_pixel(d_cam, intr);
      if (!p.valid) continue;
      out.mask(0, y, x) = 1.0;
      for (int c = 0; c < persp.channels(); ++c)
        out.image(c, y, x) = bilinear_sample_clamp(persp, c, p.u, p.v);
    }
  }
  return out;
}

/// Renders a pinhole view of an ERP. supersample > 1 averages an s x s
/// stratified grid of rays per output pixel.
inline PerspectiveImage render_perspective_from_erp(const ErpImage& erp, const CameraIntrinsics& intr,
                                                    const CameraPose& pose, int supersample = 1) {
  if (supersample < 1) throw ConfigError("supersample factor must be >= 1");
  const Rotation cam_to_world = pose_to_rotation(pose);
  PerspectiveImage out(erp.channels(), intr.height_px, intr.width_px);
  const double inv = 1.0 / (supersample * supersample);
  for (int y = 0; y < intr.height_px; ++y) {
    for (int x = 0; x < intr.width_px; ++x) {
      for (int sy = 0; sy < supersample; ++sy) {
        for (int sx = 0; sx < supersample; ++sx) {
          const double u = x + (sx + 0.5) / supersample - 0.5;
          const double v = y + (sy + 0.5) / supersample - 0.5;
          const Vec3 d_world = cam_to_world.apply(persp_pixel_to_ray(u, v, intr));
          const PixelCoord q = ray_to_erp_pixel(d_world, erp.width(), erp.height());
          for (int c = 0; c < erp.channels(); ++c)
            out(c, y, x) += bilinear_sample_wrap(erp, c, q.u, q.v) * inv;
        }
      }
    }
  }
  return out;
}

/// Spherical warp: out(p) = erp(R^-1 * ray(p)). The identity leaves the input untouched.
template <typename Tag>
Raster<Tag> rotate_erp(const Raster<Tag>& erp, const Rotation& r) {
  if (r.is_identity()) return erp;
  const Rotation inv = r.transpose();
  Raster<Tag> out(erp.channels(), erp.height(), erp.width());
  for (int y = 0; y < erp.height(); ++y) {
    for (int x = 0; x < erp.width(); ++x) {
      const PixelCoord q =
          ray_to_erp_pixel(inv.apply(erp_pixel_to_ray(x, y, erp.width(), erp.height())),
                           erp.width(), erp.height());
      for (int c = 0; c < erp.channels(); ++c) out(c, y, x) = bilinear_sample_wrap(erp, c, q.u, q.v);
    }
  }
  return out;
}

inline ErpImage roll_erp(const ErpImage& erp, long long columns) { return roll_columns(erp, columns); }

/// Fraction of the sphere covered by a 1-channel ERP mask, weighting each row
/// by its exact solid angle.
template <typename Tag>
double erp_solid_angle_fraction(const Raster<Tag>& mask) {
  const int h = mask.height();
  const int w = mask.width();
  double covered = 0.0;
  for (int y = 0; y < h; ++y) {
    const double phi_top = kPi / 2.0 - kPi * y / h;
    const double phi_bottom = kPi / 2.0 - kPi * (y + 1) / h;
    const double row_weight = (std::sin(phi_top) - std::sin(phi_bottom)) / 2.0 / w;
    double count = 0.0;
    for (double m : mask.row(0, y)) count += m;
    covered += count * row_weight;
  }
  return covered;
}

/// Analytic solid angle of a rectangular pinhole frustum, divided by 4 pi.
inline double frustum_solid_angle_fraction(const CameraIntrinsics& intr) {
  const double half_h = std::atan(1.0 / intr.f_x);
  const double half_v = std::atan(1.0 / intr.f_y);
  return 4.0 * std::asin(std::sin(half_h) * std::sin(half_v)) / (4.0 * kPi);
}

}  // namespace gimbal
