#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flam/backbone.hpp"
#include "flam/image.hpp"
#include "flam/mat.hpp"
#include "flam/matcher.hpp"

namespace flam {

using Vec3 = std::array<double, 3>;

Vec3 cross(const Vec3& a, const Vec3& b);
double dot(const Vec3& a, const Vec3& b);
double norm(const Vec3& a);
Vec3 normalized(const Vec3& a);

struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
};

// Relative pose mapping points from camera A's frame into camera B's:
// x_B = R x_A + t. For estimated poses t is a unit direction.
struct RelPose {
  Mat r;   // 3x3 rotation
  Vec3 t = {0, 0, 0};
};

// Throws if R is not a proper rotation (1e-10) or t is not unit length.
void validate_pose(const RelPose& pose);

Mat rotation_from_axis_angle(const Vec3& axis, double angle_rad);

// A correspondence as original-resolution pixels: (xa, ya, xb, yb).
using PixelPair = std::array<double, 4>;

struct PoseErrorRecord {
  double rot_err_deg = 0;
  double trans_err_deg = 0;
  double pose_err_deg = 0;
  int inliers = 0;
};

// 3x3 SVD built on the symmetric eigensolver; singular values descending.
struct Svd3 {
  Mat u, v;  // 3x3 each
  Vec3 s;
};
Svd3 svd3(const Mat& e);

// Least-squares essential matrix from >= 8 correspondences in *normalized*
// camera coordinates ((x1, y1, x2, y2) per entry), Hartley-normalized
// internally and projected to the essential manifold. Throws
// DegenerateError when the point configuration leaves the solution
// underdetermined (collinear points, plane through both centers).
Mat essential_8point(const std::vector<PixelPair>& normalized_pairs);

struct RansacResult {
  Mat e;  // essential matrix in normalized coordinates
  std::vector<char> inlier_mask;
  int inlier_count = 0;
};

// Seeded RANSAC over minimal 8-point samples; inliers by Sampson distance in
// pixels (via F = K^-T E K^-1), best model refit on its inliers.
RansacResult ransac_essential(const std::vector<PixelPair>& matches_px, const CameraIntrinsics& k,
                              int iters, double px_thresh, uint64_t seed);

// Picks the (R, t) candidate with strictly best cheirality support.
RelPose decompose_essential(const Mat& e, const std::vector<PixelPair>& matches_px,
                            const CameraIntrinsics& k);

// rot:  angle of R_est R_gt^T via acos((trace-1)/2), clamped.
// trans: angle between directions, folded over sign (min over +/-t).
// Angles below 1e-5 degrees are reported as exactly 0: the acos formulation
// cannot resolve angles below ~1e-6 degrees, so smaller values are rounding
// noise rather than measurement.
PoseErrorRecord pose_error(const RelPose& est, const RelPose& gt);

// Exact area under the cumulative recall step curve on [0, t], divided by t:
// mean over errors of max(0, 1 - e/t). Failed pairs enter as +infinity.
double auc(const std::vector<double>& errors_deg, double threshold_deg);

// ---------------------------------------------------------------------------
// Synthetic scenes
// ---------------------------------------------------------------------------

struct EvalConfig {
  enum class Mode { Injection, Texture };
  Mode mode = Mode::Injection;
  int n_pairs = 20;
  uint64_t seed = 42;
  int threads = 1;

  // injection mode
  int n_points = 24;
  double noise_sigma = 0.0;
  int grid_size = 16;  // coarse grid side; implied image side = 8 * grid
  int desc_dim = 64;

  // texture mode
  int image_size = 64;
  double texture_amp = 1.0;

  // scene geometry
  double max_rot_deg = 10.0;
  double baseline = 0.4;

  // estimator
  int ransac_iters = 1000;
  double px_thresh = 1.0;

  MatcherConfig mcfg;
  TransformerConfig tcfg;  // texture-mode pipeline settings
};

struct SyntheticPair {
  EvalConfig::Mode mode = EvalConfig::Mode::Injection;
  RelPose gt_pose;
  CameraIntrinsics k;
  std::vector<PixelPair> gt_pixels;  // exact projections, both views

  // injection payload: coarse descriptor grids plus cell -> point maps
  FeatureGrid desc_a, desc_b;
  std::vector<int> cell_point_a, cell_point_b;

  // texture payload
  Image img_a, img_b;
};

// Samples a pose (and scene) from the seed and renders/injects it.
SyntheticPair gen_synthetic_pair(uint64_t seed, const EvalConfig& cfg);

// Deterministic generators with an explicit pose, used by gen_synthetic_pair
// and directly by tests.
SyntheticPair gen_injection_pair(uint64_t seed, const EvalConfig& cfg, const Mat& r, const Vec3& t);
SyntheticPair render_texture_pair(uint64_t seed, const EvalConfig& cfg, const Mat& r, const Vec3& t);

struct InjectionMatches {
  std::vector<PixelPair> pixel_pairs;
  std::vector<double> conf;
  int n_coarse = 0;
  int n_cell_correct = 0;  // matched cells whose planted points agree (diagnostic only)
};

// Runs the coarse matcher (similarity -> dual-softmax -> MNN) directly on the
// injected descriptor grids and reports the planted sub-pixel position of
// each matched cell.
InjectionMatches match_injected(const SyntheticPair& pair, const MatcherConfig& mcfg);

struct PairEvalResult {
  PoseErrorRecord errors;
  int n_coarse = 0;
  int n_refined = 0;
  int n_cell_correct = 0;
  bool failed = false;
  std::string fail_reason;
};

struct EvalReport {
  std::string config_digest;
  std::vector<PairEvalResult> pairs;
  double auc5 = 0, auc10 = 0, auc20 = 0;
};

// Weights are required in texture mode (the full pipeline runs); unused in
// injection mode. Deterministic given cfg.seed; per-pair seeds are
// seed + pair index, so thread counts do not change the report.
EvalReport evaluate(const EvalConfig& cfg, const ModelWeights* weights);

std::string config_digest(const EvalConfig& cfg);

}  // namespace flam
