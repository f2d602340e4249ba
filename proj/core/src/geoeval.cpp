#include "flam/geoeval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flam/errors.hpp"
#include "flam/rng.hpp"

namespace flam {

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

Vec3 normalized(const Vec3& a) {
  const double n = norm(a);
  if (n == 0.0) throw ConfigError("normalized: zero vector");
  return {a[0] / n, a[1] / n, a[2] / n};
}

void validate_pose(const RelPose& pose) {
  if (pose.r.rows() != 3 || pose.r.cols() != 3) throw ShapeError("pose: R must be 3x3");
  Mat rtr = matmul(pose.r.transposed(), pose.r);
  if (max_abs_diff(rtr, Mat::identity(3)) > 1e-10) throw ConfigError("pose: R is not orthonormal");
  const Mat& r = pose.r;
  const double det = r(0, 0) * (r(1, 1) * r(2, 2) - r(1, 2) * r(2, 1)) -
                     r(0, 1) * (r(1, 0) * r(2, 2) - r(1, 2) * r(2, 0)) +
                     r(0, 2) * (r(1, 0) * r(2, 1) - r(1, 1) * r(2, 0));
  if (std::abs(det - 1.0) > 1e-10) throw ConfigError("pose: det(R) != +1");
  if (std::abs(norm(pose.t) - 1.0) > 1e-10) throw ConfigError("pose: t is not unit length");
}

Mat rotation_from_axis_angle(const Vec3& axis_in, double angle_rad) {
  const Vec3 a = normalized(axis_in);
  const double c = std::cos(angle_rad), s = std::sin(angle_rad), t = 1.0 - c;
  return Mat{{c + a[0] * a[0] * t, a[0] * a[1] * t - a[2] * s, a[0] * a[2] * t + a[1] * s},
             {a[1] * a[0] * t + a[2] * s, c + a[1] * a[1] * t, a[1] * a[2] * t - a[0] * s},
             {a[2] * a[0] * t - a[1] * s, a[2] * a[1] * t + a[0] * s, c + a[2] * a[2] * t}};
}

static Vec3 mat3_vec(const Mat& m, const Vec3& v) {
  return {m(0, 0) * v[0] + m(0, 1) * v[1] + m(0, 2) * v[2],
          m(1, 0) * v[0] + m(1, 1) * v[1] + m(1, 2) * v[2],
          m(2, 0) * v[0] + m(2, 1) * v[1] + m(2, 2) * v[2]};
}

Svd3 svd3(const Mat& e) {
  if (e.rows() != 3 || e.cols() != 3) throw ShapeError("svd3: matrix must be 3x3");
  SymEigen ete = sym_eigen(matmul(e.transposed(), e));  // eigenvalues ascending

  Svd3 out;
  out.v = Mat(3, 3);
  for (int i = 0; i < 3; ++i) {
    const int src = 2 - i;  // descending order
    out.s[i] = std::sqrt(std::max(ete.values[src], 0.0));
    for (int k = 0; k < 3; ++k) out.v(k, i) = ete.vectors(k, src);
  }

  // Left vectors by modified Gram-Schmidt on E v_i. Dividing by sigma_i is
  // unstable once sigma_i falls into the eigensolver's noise floor
  // (sqrt(eps) * sigma_0), so columns below that are completed orthonormally.
  out.u = Mat(3, 3);
  const double tol = 1e-7 * std::max(out.s[0], 1e-300);
  Vec3 cols[3];
  for (int i = 0; i < 3; ++i) {
    Vec3 vi{out.v(0, i), out.v(1, i), out.v(2, i)};
    Vec3 u = mat3_vec(e, vi);
    for (int j = 0; j < i; ++j) {
      const double proj = dot(u, cols[j]);
      for (int k = 0; k < 3; ++k) u[k] -= proj * cols[j][k];
    }
    if (out.s[i] > tol && norm(u) > tol) {
      cols[i] = normalized(u);
    } else if (i == 2) {
      cols[2] = normalized(cross(cols[0], cols[1]));
    } else if (i == 1) {
      const Vec3 seed = std::abs(cols[0][0]) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
      cols[1] = normalized(cross(cols[0], seed));
    } else {
      cols[0] = {1, 0, 0};
    }
  }
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) out.u(k, i) = cols[i][k];
  return out;
}

// ---------------------------------------------------------------------------
// Eight-point algorithm
// ---------------------------------------------------------------------------

namespace {

struct Normalization {
  double scale = 1.0;
  double cx = 0.0, cy = 0.0;
  Mat t() const {
    return Mat{{scale, 0, -scale * cx}, {0, scale, -scale * cy}, {0, 0, 1}};
  }
};

Normalization hartley(const std::vector<PixelPair>& pairs, int x_idx, int y_idx) {
  Normalization n;
  const double count = static_cast<double>(pairs.size());
  for (const auto& p : pairs) {
    n.cx += p[x_idx];
    n.cy += p[y_idx];
  }
  n.cx /= count;
  n.cy /= count;
  double mean_dist = 0.0;
  for (const auto& p : pairs) mean_dist += std::hypot(p[x_idx] - n.cx, p[y_idx] - n.cy);
  mean_dist /= count;
  n.scale = mean_dist > 1e-300 ? std::sqrt(2.0) / mean_dist : 1.0;
  return n;
}

}  // namespace

Mat essential_8point(const std::vector<PixelPair>& pairs) {
  if (pairs.size() < 8) throw InsufficientDataError("essential_8point: need at least 8 correspondences");

  const Normalization n1 = hartley(pairs, 0, 1);
  const Normalization n2 = hartley(pairs, 2, 3);

  // x2^T E x1 = 0; row-major unknowns e11..e33
  Mat a(static_cast<int>(pairs.size()), 9);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double x1 = n1.scale * (pairs[i][0] - n1.cx), y1 = n1.scale * (pairs[i][1] - n1.cy);
    const double x2 = n2.scale * (pairs[i][2] - n2.cx), y2 = n2.scale * (pairs[i][3] - n2.cy);
    double* row = a.row_ptr(static_cast<int>(i));
    row[0] = x2 * x1;
    row[1] = x2 * y1;
    row[2] = x2;
    row[3] = y2 * x1;
    row[4] = y2 * y1;
    row[5] = y2;
    row[6] = x1;
    row[7] = y1;
    row[8] = 1.0;
  }

  SymEigen eig = sym_eigen(matmul(a.transposed(), a));
  const double lead = std::max(eig.values[8], 0.0);
  if (lead <= 0.0 || eig.values[1] <= 1e-12 * lead)
    throw DegenerateError("essential_8point: degenerate point configuration");

  Mat e_norm(3, 3);
  for (int k = 0; k < 9; ++k) e_norm(k / 3, k % 3) = eig.vectors(k, 0);

  // denormalize, then project to the essential manifold
  Mat e = matmul(matmul(n2.t().transposed(), e_norm), n1.t());
  Svd3 svd = svd3(e);
  const double sigma = 0.5 * (svd.s[0] + svd.s[1]);
  if (sigma <= 0.0) throw DegenerateError("essential_8point: zero essential matrix");
  Mat diag(3, 3);
  diag(0, 0) = diag(1, 1) = 1.0;  // normalize scale while projecting
  Mat projected = matmul(matmul(svd.u, diag), svd.v.transposed());
  return projected;
}

// ---------------------------------------------------------------------------
// RANSAC
// ---------------------------------------------------------------------------

namespace {

Mat fundamental_from_essential(const Mat& e, const CameraIntrinsics& k) {
  const Mat k_inv{{1.0 / k.fx, 0, -k.cx / k.fx}, {0, 1.0 / k.fy, -k.cy / k.fy}, {0, 0, 1}};
  return matmul(matmul(k_inv.transposed(), e), k_inv);
}

double sampson_px(const Mat& f, const PixelPair& m) {
  const Vec3 x1{m[0], m[1], 1.0}, x2{m[2], m[3], 1.0};
  const Vec3 fx1 = mat3_vec(f, x1);
  const Vec3 ftx2 = mat3_vec(f.transposed(), x2);
  const double num = dot(x2, fx1);
  const double den = fx1[0] * fx1[0] + fx1[1] * fx1[1] + ftx2[0] * ftx2[0] + ftx2[1] * ftx2[1];
  if (den <= 0.0) return std::numeric_limits<double>::infinity();
  return std::abs(num) / std::sqrt(den);
}

std::vector<PixelPair> to_normalized(const std::vector<PixelPair>& px, const CameraIntrinsics& k) {
  std::vector<PixelPair> out(px.size());
  for (std::size_t i = 0; i < px.size(); ++i)
    out[i] = {(px[i][0] - k.cx) / k.fx, (px[i][1] - k.cy) / k.fy, (px[i][2] - k.cx) / k.fx,
              (px[i][3] - k.cy) / k.fy};
  return out;
}

}  // namespace

RansacResult ransac_essential(const std::vector<PixelPair>& matches_px, const CameraIntrinsics& k,
                              int iters, double px_thresh, uint64_t seed) {
  const int n = static_cast<int>(matches_px.size());
  if (n < 8) throw InsufficientDataError("ransac_essential: need at least 8 matches");
  if (iters < 1) throw ConfigError("ransac_essential: iters must be >= 1");

  const std::vector<PixelPair> norm_pairs = to_normalized(matches_px, k);
  Rng rng(seed);
  std::vector<int> indices(n);
  for (int i = 0; i < n; ++i) indices[i] = i;

  Mat best_e;
  int best_count = -1;
  std::vector<char> best_mask(n, 0);

  for (int it = 0; it < iters; ++it) {
    // partial Fisher-Yates: first 8 slots become the sample
    for (int s = 0; s < 8; ++s) {
      const int j = s + rng.uniform_int(n - s);
      std::swap(indices[s], indices[j]);
    }
    std::vector<PixelPair> sample(8);
    for (int s = 0; s < 8; ++s) sample[s] = norm_pairs[indices[s]];

    Mat e;
    try {
      e = essential_8point(sample);
    } catch (const DegenerateError&) {
      continue;
    }

    const Mat f = fundamental_from_essential(e, k);
    int count = 0;
    std::vector<char> mask(n, 0);
    for (int i = 0; i < n; ++i) {
      if (sampson_px(f, matches_px[i]) < px_thresh) {
        mask[i] = 1;
        ++count;
      }
    }
    if (count > best_count) {
      best_count = count;
      best_e = e;
      best_mask = std::move(mask);
    }
  }
  if (best_count < 0) throw DegenerateError("ransac_essential: no valid minimal sample found");

  RansacResult result;
  result.e = best_e;

  // refit on the consensus set when it can support it
  if (best_count >= 8) {
    std::vector<PixelPair> support;
    support.reserve(best_count);
    for (int i = 0; i < n; ++i)
      if (best_mask[i]) support.push_back(norm_pairs[i]);
    try {
      result.e = essential_8point(support);
    } catch (const DegenerateError&) {
      result.e = best_e;  // keep the minimal-sample model
    }
  }

  const Mat f = fundamental_from_essential(result.e, k);
  result.inlier_mask.assign(n, 0);
  result.inlier_count = 0;
  for (int i = 0; i < n; ++i) {
    if (sampson_px(f, matches_px[i]) < px_thresh) {
      result.inlier_mask[i] = 1;
      ++result.inlier_count;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Decomposition
// ---------------------------------------------------------------------------

namespace {

// Linear triangulation; returns homogeneous X in camera A's frame.
std::array<double, 4> triangulate(const Mat& r, const Vec3& t, const PixelPair& m) {
  // P1 = [I | 0], P2 = [R | t]; rows of A from x cross P X = 0
  Mat a(4, 4);
  const double x1 = m[0], y1 = m[1], x2 = m[2], y2 = m[3];
  // x1 * P1.row2 - P1.row0 ; y1 * P1.row2 - P1.row1
  a(0, 0) = -1;
  a(0, 2) = x1;
  a(1, 1) = -1;
  a(1, 2) = y1;
  for (int c = 0; c < 3; ++c) {
    a(2, c) = x2 * r(2, c) - r(0, c);
    a(3, c) = y2 * r(2, c) - r(1, c);
  }
  a(2, 3) = x2 * t[2] - t[0];
  a(3, 3) = y2 * t[2] - t[1];

  SymEigen eig = sym_eigen(matmul(a.transposed(), a));
  return {eig.vectors(0, 0), eig.vectors(1, 0), eig.vectors(2, 0), eig.vectors(3, 0)};
}

int cheirality_count(const Mat& r, const Vec3& t, const std::vector<PixelPair>& norm_pairs) {
  int count = 0;
  for (const PixelPair& m : norm_pairs) {
    const auto x = triangulate(r, t, m);
    const double z1_sign = x[2] * x[3];  // sign of z/w without dividing
    const double z2 = (r(2, 0) * x[0] + r(2, 1) * x[1] + r(2, 2) * x[2]) + t[2] * x[3];
    const double z2_sign = z2 * x[3];
    if (z1_sign > 0 && z2_sign > 0) ++count;
  }
  return count;
}

}  // namespace

RelPose decompose_essential(const Mat& e_in, const std::vector<PixelPair>& matches_px,
                            const CameraIntrinsics& k) {
  if (matches_px.empty()) throw InsufficientDataError("decompose_essential: no matches");

  // enforce the essential structure (also absorbs the sign of E)
  Svd3 svd = svd3(e_in);
  Mat u = svd.u, v = svd.v;
  auto det3 = [](const Mat& m) {
    return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
           m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
           m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
  };
  if (det3(u) < 0) u = scaled(u, -1.0);
  if (det3(v) < 0) v = scaled(v, -1.0);

  const Mat w{{0, -1, 0}, {1, 0, 0}, {0, 0, 1}};
  const Mat r1 = matmul(matmul(u, w), v.transposed());
  const Mat r2 = matmul(matmul(u, w.transposed()), v.transposed());
  const Vec3 tu{u(0, 2), u(1, 2), u(2, 2)};
  const Vec3 tn{-tu[0], -tu[1], -tu[2]};

  const std::vector<PixelPair> norm_pairs = to_normalized(matches_px, k);
  struct Candidate {
    const Mat* r;
    Vec3 t;
  };
  const Candidate candidates[4] = {{&r1, tu}, {&r1, tn}, {&r2, tu}, {&r2, tn}};

  int best = -1, best_count = -1, second_count = -1;
  for (int c = 0; c < 4; ++c) {
    const int count = cheirality_count(*candidates[c].r, candidates[c].t, norm_pairs);
    if (count > best_count) {
      second_count = best_count;
      best_count = count;
      best = c;
    } else if (count > second_count) {
      second_count = count;
    }
  }
  if (best_count <= 0 || best_count == second_count)
    throw AmbiguousPoseError("decompose_essential: cheirality does not single out a pose");

  RelPose pose;
  pose.r = *candidates[best].r;
  pose.t = normalized(candidates[best].t);
  return pose;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

PoseErrorRecord pose_error(const RelPose& est, const RelPose& gt) {
  PoseErrorRecord rec;

  const Mat rel = matmul(est.r, gt.r.transposed());
  const double trace = rel(0, 0) + rel(1, 1) + rel(2, 2);
  const double c = std::clamp((trace - 1.0) / 2.0, -1.0, 1.0);
  rec.rot_err_deg = std::acos(c) * 180.0 / M_PI;

  const Vec3 te = normalized(est.t), tg = normalized(gt.t);
  const double d = std::min(std::abs(dot(te, tg)), 1.0);
  rec.trans_err_deg = std::acos(d) * 180.0 / M_PI;

  // below the resolution of the acos formulation: report as exact zero
  if (rec.rot_err_deg < 1e-5) rec.rot_err_deg = 0.0;
  if (rec.trans_err_deg < 1e-5) rec.trans_err_deg = 0.0;

  rec.pose_err_deg = std::max(rec.rot_err_deg, rec.trans_err_deg);
  return rec;
}

double auc(const std::vector<double>& errors_deg, double threshold_deg) {
  if (errors_deg.empty()) throw UndefinedInputError("auc: empty error list");
  if (threshold_deg <= 0.0) throw ConfigError("auc: threshold must be positive");
  double acc = 0.0;
  for (double e : errors_deg) {
    if (e < 0.0) throw UndefinedInputError("auc: negative error");
    const double clipped = std::min(e, threshold_deg);
    acc += (threshold_deg - clipped) / threshold_deg;
  }
  return acc / static_cast<double>(errors_deg.size());
}

}  // namespace flam
