#pragma once

// Binocular gaze geometry: ray/plane intersection, vergence triangulation and
// a synthetic eye-tracking sample generator.
//
// Frame: display-anchored, x right, y up, z toward the scene. Eyes sit near
// z = 0 and the virtual plane is z = GeneratorConfig::plane_distance.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "gazetrack/error.hpp"
#include "gazetrack/random.hpp"

namespace gazetrack {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 v) { return {s * v.x, s * v.y, s * v.z}; }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  Vec3 normalized() const {
    const double n = norm();
    return {x / n, y / n, z / n};
  }
};

enum class DepthLabel : int { OnPlane = 0, OutPlaneNear = 1, OutPlaneFar = 2 };

inline constexpr int kNumLabels = 3;
inline constexpr std::size_t kNumFeatures = 15;

inline const char* label_name(DepthLabel label) {
  switch (label) {
    case DepthLabel::OnPlane: return "on-plane";
    case DepthLabel::OutPlaneNear: return "out-plane-near";
    case DepthLabel::OutPlaneFar: return "out-plane-far";
  }
  return "?";
}

inline DepthLabel label_from_index(int index) {
  if (index < 0 || index >= kNumLabels) throw InvalidArgument("depth label index out of range: " + std::to_string(index));
  return static_cast<DepthLabel>(index);
}

struct EyeState {
  Vec3 e_left;
  Vec3 e_right;
  Vec3 r_left;
  Vec3 r_right;

  double interocular() const { return e_right.x - e_left.x; }
};

inline void validate(const EyeState& s) {
  if (std::abs(s.r_left.norm() - 1.0) > 1e-9 || std::abs(s.r_right.norm() - 1.0) > 1e-9)
    throw InvalidArgument("gaze directions must be unit vectors");
  if (!(s.e_left.x < s.e_right.x)) throw InvalidArgument("left eye must have the smaller x");
}

struct PlaneIntersections {
  Vec2 g_left;
  Vec2 g_right;
  Vec2 g_mid;
  /// Eye-midpoint to plane distance.
  double d_v = 0.0;

  double disparity() const { return std::abs(g_left.x - g_right.x); }
};

/// One eye-tracking tuple. Features: r_left, r_right, e_left, e_right, g_mid, d_v.
struct LabeledSample {
  std::array<double, kNumFeatures> features{};
  DepthLabel label = DepthLabel::OnPlane;

  Vec3 r_left() const { return {features[0], features[1], features[2]}; }
  Vec3 r_right() const { return {features[3], features[4], features[5]}; }
  Vec3 e_left() const { return {features[6], features[7], features[8]}; }
  Vec3 e_right() const { return {features[9], features[10], features[11]}; }
  Vec2 g_mid() const { return {features[12], features[13]}; }
  double d_v() const { return features[14]; }
};

inline constexpr std::array<const char*, kNumFeatures> kFeatureNames = {
    "rlx", "rly", "rlz", "rrx", "rry", "rrz", "elx", "ely", "elz", "erx", "ery", "erz", "gx", "gy", "dv"};

/// Vergence triangulation: depth = delta_ex * d_v / (delta_ex - delta_gx).
inline double triangulate_depth(double delta_ex, double d_v, double delta_gx, double epsilon = 1e-12) {
  if (!(delta_ex > 0.0)) throw InvalidArgument("interocular distance must be positive");
  if (!(d_v > 0.0)) throw InvalidArgument("plane distance must be positive");
  if (!(delta_gx >= 0.0)) throw InvalidArgument("intersection disparity must be non-negative");
  const double denominator = delta_ex - delta_gx;
  if (std::abs(denominator) < epsilon)
    throw SingularGeometry("gaze rays are parallel: disparity equals interocular distance");
  if (denominator < 0.0) throw DivergentGaze("disparity exceeds interocular distance: gaze diverges");
  return delta_ex * d_v / denominator;
}

/// Intersection of the ray eye + t * dir with the plane z = plane_z.
inline Vec2 intersect_plane(Vec3 eye, Vec3 dir, double plane_z) {
  if (!(dir.z > 0.0)) throw NoIntersection("gaze ray does not point toward the plane");
  if (!(eye.z < plane_z)) throw NoIntersection("eye is not in front of the plane");
  const double t = (plane_z - eye.z) / dir.z;
  return {eye.x + t * dir.x, eye.y + t * dir.y};
}

inline PlaneIntersections intersect_both(const EyeState& eyes, double plane_z) {
  PlaneIntersections p;
  p.g_left = intersect_plane(eyes.e_left, eyes.r_left, plane_z);
  p.g_right = intersect_plane(eyes.e_right, eyes.r_right, plane_z);
  p.g_mid = {0.5 * (p.g_left.x + p.g_right.x), 0.5 * (p.g_left.y + p.g_right.y)};
  p.d_v = plane_z - 0.5 * (eyes.e_left.z + eyes.e_right.z);
  return p;
}

/// Fixation depth recovered from a sample's features by triangulation.
inline double triangulate_sample(const LabeledSample& s) {
  const EyeState eyes{s.e_left(), s.e_right(), s.r_left(), s.r_right()};
  const double plane_z = 0.5 * (eyes.e_left.z + eyes.e_right.z) + s.d_v();
  const auto p = intersect_both(eyes, plane_z);
  // On-plane fixations have zero disparity up to rounding.
  double disparity = p.disparity();
  if (disparity < 0.0 && disparity > -1e-12) disparity = 0.0;
  return triangulate_depth(eyes.interocular(), s.d_v(), disparity);
}

struct DepthDistribution {
  double mean = 0.0;
  double sigma = 0.0;
};

struct GeneratorConfig {
  double plane_distance = 0.8;
  double interocular_mean = 0.063;
  double interocular_sigma = 0.003;
  /// Uniform half-width of eye-midpoint jitter on each axis, meters.
  double head_jitter = 0.05;
  DepthDistribution near_depth{6.0, 1.0};
  DepthDistribution far_depth{12.0, 2.0};
  /// Gaussians are truncated at this many sigmas.
  double truncation_sigmas = 2.0;
  /// Uniform half-width of fixation offset from the eye midpoint, meters.
  double lateral_spread = 0.3;
  /// Tracker pointing error shared by both eyes (yaw and pitch), degrees.
  double angular_noise_deg = 0.5;
  /// Independent per-eye pointing error (yaw and pitch), degrees.
  double vergence_noise_deg = 0.02;
};

inline void validate(const GeneratorConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(std::string("generator config: ") + what);
  };
  require(c.plane_distance > 0.0, "plane_distance must be positive");
  require(c.interocular_mean > 0.0 && c.interocular_sigma >= 0.0, "invalid interocular distribution");
  require(c.interocular_mean - c.truncation_sigmas * c.interocular_sigma > 0.0,
          "interocular distribution admits non-positive values");
  require(c.head_jitter >= 0.0 && c.head_jitter < c.plane_distance, "head_jitter must lie in [0, plane_distance)");
  require(c.truncation_sigmas > 0.0, "truncation_sigmas must be positive");
  require(c.near_depth.sigma >= 0.0 && c.far_depth.sigma >= 0.0, "depth sigmas must be non-negative");
  const double max_dv = c.plane_distance + c.head_jitter;
  require(c.near_depth.mean - c.truncation_sigmas * c.near_depth.sigma > max_dv,
          "near depths must lie beyond the plane");
  require(c.far_depth.mean - c.truncation_sigmas * c.far_depth.sigma > max_dv, "far depths must lie beyond the plane");
  require(c.lateral_spread >= 0.0, "lateral_spread must be non-negative");
  require(c.angular_noise_deg >= 0.0 && c.vergence_noise_deg >= 0.0, "noise must be non-negative");
  require(c.angular_noise_deg < 10.0 && c.vergence_noise_deg < 10.0, "noise above 10 degrees is not supported");
}

/// A labeled sample plus the noise-free geometry that produced it.
struct GeneratedSample {
  LabeledSample sample;
  EyeState eyes;
  PlaneIntersections planes;
  Vec3 fixation;
  /// Fixation distance along z from the eye midpoint.
  double fixation_depth = 0.0;
};

namespace detail {

inline Vec3 perturb_direction(Vec3 dir, double yaw_delta, double pitch_delta) {
  const double yaw = std::atan2(dir.x, dir.z) + yaw_delta;
  const double pitch = std::atan2(dir.y, std::hypot(dir.x, dir.z)) + pitch_delta;
  return {std::cos(pitch) * std::sin(yaw), std::sin(pitch), std::cos(pitch) * std::cos(yaw)};
}

}  // namespace detail

/// Class-balanced synthetic samples; deterministic for a given seed.
inline std::vector<GeneratedSample> generate_samples(std::size_t n, std::uint64_t seed,
                                                     const GeneratorConfig& cfg = {}) {
  if (n == 0) throw InvalidArgument("sample count must be positive");
  validate(cfg);
  Rng rng(seed);

  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % kNumLabels);
  rng.shuffle(std::span<int>(labels));

  constexpr double kDeg = std::numbers::pi / 180.0;
  std::vector<GeneratedSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    GeneratedSample g;
    const DepthLabel label = label_from_index(labels[i]);
    const Vec3 mid{rng.uniform(-cfg.head_jitter, cfg.head_jitter), rng.uniform(-cfg.head_jitter, cfg.head_jitter),
                   rng.uniform(-cfg.head_jitter, cfg.head_jitter)};
    const double interocular =
        rng.truncated_normal(cfg.interocular_mean, cfg.interocular_sigma, cfg.truncation_sigmas);
    const double d_v = cfg.plane_distance - mid.z;

    double depth = d_v;
    if (label == DepthLabel::OutPlaneNear)
      depth = rng.truncated_normal(cfg.near_depth.mean, cfg.near_depth.sigma, cfg.truncation_sigmas);
    else if (label == DepthLabel::OutPlaneFar)
      depth = rng.truncated_normal(cfg.far_depth.mean, cfg.far_depth.sigma, cfg.truncation_sigmas);

    const Vec3 fixation{mid.x + rng.uniform(-cfg.lateral_spread, cfg.lateral_spread),
                        mid.y + rng.uniform(-cfg.lateral_spread, cfg.lateral_spread), mid.z + depth};

    EyeState& eyes = g.eyes;
    eyes.e_left = {mid.x - 0.5 * interocular, mid.y, mid.z};
    eyes.e_right = {mid.x + 0.5 * interocular, mid.y, mid.z};
    eyes.r_left = (fixation - eyes.e_left).normalized();
    eyes.r_right = (fixation - eyes.e_right).normalized();
    g.planes = intersect_both(eyes, cfg.plane_distance);
    g.fixation = fixation;
    g.fixation_depth = depth;

    // Observed rays carry tracker noise; the clean geometry is kept above.
    EyeState observed = eyes;
    const double shared_yaw = rng.normal(0.0, cfg.angular_noise_deg * kDeg);
    const double shared_pitch = rng.normal(0.0, cfg.angular_noise_deg * kDeg);
    const double left_yaw = rng.normal(0.0, cfg.vergence_noise_deg * kDeg);
    const double left_pitch = rng.normal(0.0, cfg.vergence_noise_deg * kDeg);
    const double right_yaw = rng.normal(0.0, cfg.vergence_noise_deg * kDeg);
    const double right_pitch = rng.normal(0.0, cfg.vergence_noise_deg * kDeg);
    if (cfg.angular_noise_deg > 0.0 || cfg.vergence_noise_deg > 0.0) {
      observed.r_left = detail::perturb_direction(eyes.r_left, shared_yaw + left_yaw, shared_pitch + left_pitch);
      observed.r_right = detail::perturb_direction(eyes.r_right, shared_yaw + right_yaw, shared_pitch + right_pitch);
    }
    const PlaneIntersections seen = intersect_both(observed, cfg.plane_distance);

    auto& f = g.sample.features;
    f = {observed.r_left.x,  observed.r_left.y,  observed.r_left.z,  observed.r_right.x, observed.r_right.y,
         observed.r_right.z, eyes.e_left.x,      eyes.e_left.y,      eyes.e_left.z,      eyes.e_right.x,
         eyes.e_right.y,     eyes.e_right.z,     seen.g_mid.x,       seen.g_mid.y,       seen.d_v};
    g.sample.label = label;
    out.push_back(g);
  }
  return out;
}

inline std::vector<LabeledSample> generate_dataset(std::size_t n, std::uint64_t seed, const GeneratorConfig& cfg = {}) {
  const auto detailed = generate_samples(n, seed, cfg);
  std::vector<LabeledSample> out;
  out.reserve(detailed.size());
  for (const auto& g : detailed) out.push_back(g.sample);
  return out;
}

/// Threshold rule on triangulated depth; the baseline the learned model
/// should beat. Degenerate (parallel or divergent) rays count as far.
inline DepthLabel classify_by_triangulation(const LabeledSample& s, double near_threshold_m = 9.0,
                                            double near_center_m = 6.0) {
  double depth = 0.0;
  try {
    depth = triangulate_sample(s);
  } catch (const SingularGeometry&) {
    return DepthLabel::OutPlaneFar;
  } catch (const DivergentGaze&) {
    return DepthLabel::OutPlaneFar;
  }
  if (depth < 0.5 * (s.d_v() + near_center_m)) return DepthLabel::OnPlane;
  if (depth < near_threshold_m) return DepthLabel::OutPlaneNear;
  return DepthLabel::OutPlaneFar;
}

}  // namespace gazetrack
