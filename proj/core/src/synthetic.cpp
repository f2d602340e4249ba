#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "flam/errors.hpp"
#include "flam/geoeval.hpp"
#include "flam/rng.hpp"

namespace flam {

namespace {

Vec3 random_unit(Rng& rng) {
  for (;;) {
    Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const double n = norm(v);
    if (n > 1e-6) return {v[0] / n, v[1] / n, v[2] / n};
  }
}

Mat sample_rotation(Rng& rng, double max_rot_deg) {
  const Vec3 axis = random_unit(rng);
  const double angle = rng.uniform(0.25 * max_rot_deg, max_rot_deg) * M_PI / 180.0;
  return rotation_from_axis_angle(axis, angle);
}

Vec3 mat3_apply(const Mat& m, const Vec3& v) {
  return {m(0, 0) * v[0] + m(0, 1) * v[1] + m(0, 2) * v[2],
          m(1, 0) * v[0] + m(1, 1) * v[1] + m(1, 2) * v[2],
          m(2, 0) * v[0] + m(2, 1) * v[1] + m(2, 2) * v[2]};
}

Mat mat3_inverse(const Mat& m) {
  const double a = m(0, 0), b = m(0, 1), c = m(0, 2);
  const double d = m(1, 0), e = m(1, 1), f = m(1, 2);
  const double g = m(2, 0), h = m(2, 1), i = m(2, 2);
  const double det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
  if (std::abs(det) < 1e-300) throw DegenerateError("mat3_inverse: singular matrix");
  const double inv = 1.0 / det;
  return Mat{{(e * i - f * h) * inv, (c * h - b * i) * inv, (b * f - c * e) * inv},
             {(f * g - d * i) * inv, (a * i - c * g) * inv, (c * d - a * f) * inv},
             {(d * h - e * g) * inv, (b * g - a * h) * inv, (b * e - a * d) * inv}};
}

// Smooth procedural texture: a sum of seeded sinusoids squashed into [0, 1].
struct TextureField {
  struct Wave {
    double fx, fy, amp, phase;
  };
  std::vector<Wave> waves;
  double amplitude;

  static TextureField make(Rng& rng, double amplitude) {
    TextureField t;
    t.amplitude = amplitude;
    for (int k = 0; k < 10; ++k)
      t.waves.push_back({rng.uniform(0.05, 0.7), rng.uniform(0.05, 0.7), rng.uniform(0.2, 1.0),
                         rng.uniform(0.0, 2.0 * M_PI)});
    return t;
  }

  double operator()(double x, double y) const {
    double v = 0.0;
    for (const Wave& w : waves) v += w.amp * std::sin(w.fx * x + w.fy * y + w.phase);
    return 0.5 + 0.45 * amplitude * std::tanh(0.6 * v);
  }
};

// Bilinear interpolation of the texture's integer-pixel raster. The plane
// extends past view A's frame, so samples are taken from the field itself;
// inside the frame this agrees exactly with bilinear sampling of img_a.
double bilinear_field(const TextureField& t, double x, double y) {
  const double x0 = std::floor(x), y0 = std::floor(y);
  const double fx = x - x0, fy = y - y0;
  return t(x0, y0) * (1 - fx) * (1 - fy) + t(x0 + 1, y0) * fx * (1 - fy) +
         t(x0, y0 + 1) * (1 - fx) * fy + t(x0 + 1, y0 + 1) * fx * fy;
}

bool is_identity_pose(const Mat& r, const Vec3& t) {
  return norm(t) == 0.0 && max_abs_diff(r, Mat::identity(3)) == 0.0;
}

}  // namespace

SyntheticPair gen_injection_pair(uint64_t seed, const EvalConfig& cfg, const Mat& r, const Vec3& t) {
  if (cfg.n_points < 16) throw ConfigError("injection mode needs at least 16 points");
  if (norm(t) == 0.0) throw ConfigError("injection mode needs a nonzero baseline for essential-matrix evaluation");
  if (cfg.grid_size < 4) throw ConfigError("injection grid too small");

  Rng rng(seed ^ 0xabcdef12345ull);
  SyntheticPair pair;
  pair.mode = EvalConfig::Mode::Injection;
  pair.gt_pose.r = r;
  pair.gt_pose.t = normalized(t);

  const int g = cfg.grid_size;
  const double side = 8.0 * g;
  pair.k = {side, side, side / 2.0, side / 2.0};

  pair.desc_a = FeatureGrid({g, g}, cfg.desc_dim);
  pair.desc_b = FeatureGrid({g, g}, cfg.desc_dim);
  pair.cell_point_a.assign(g * g, -1);
  pair.cell_point_b.assign(g * g, -1);

  const double margin = 6.0;
  int placed = 0;
  for (int tries = 0; tries < 400 * cfg.n_points && placed < cfg.n_points; ++tries) {
    const double xa = rng.uniform(margin, side - margin);
    const double ya = rng.uniform(margin, side - margin);
    const double z = rng.uniform(3.0, 6.0);
    const Vec3 pt{(xa - pair.k.cx) / pair.k.fx * z, (ya - pair.k.cy) / pair.k.fy * z, z};
    const Vec3 pb = {mat3_apply(r, pt)[0] + t[0], mat3_apply(r, pt)[1] + t[1],
                     mat3_apply(r, pt)[2] + t[2]};
    if (pb[2] < 0.5) continue;
    const double xb = pair.k.fx * pb[0] / pb[2] + pair.k.cx;
    const double yb = pair.k.fy * pb[1] / pb[2] + pair.k.cy;
    if (xb < margin || xb > side - margin || yb < margin || yb > side - margin) continue;

    const int ca = static_cast<int>(ya / 8.0) * g + static_cast<int>(xa / 8.0);
    const int cb = static_cast<int>(yb / 8.0) * g + static_cast<int>(xb / 8.0);
    if (pair.cell_point_a[ca] >= 0 || pair.cell_point_b[cb] >= 0) continue;

    // shared unit descriptor, independent per-view noise
    std::vector<double> desc(cfg.desc_dim);
    double n2 = 0.0;
    for (double& v : desc) {
      v = rng.normal();
      n2 += v * v;
    }
    const double inv = 1.0 / std::sqrt(n2);
    double* da = pair.desc_a.tokens.row_ptr(ca);
    double* db = pair.desc_b.tokens.row_ptr(cb);
    for (int c = 0; c < cfg.desc_dim; ++c) {
      const double base = desc[c] * inv;
      da[c] = base + (cfg.noise_sigma > 0 ? cfg.noise_sigma * rng.normal() : 0.0);
      db[c] = base + (cfg.noise_sigma > 0 ? cfg.noise_sigma * rng.normal() : 0.0);
    }

    pair.cell_point_a[ca] = placed;
    pair.cell_point_b[cb] = placed;
    pair.gt_pixels.push_back({xa, ya, xb, yb});
    ++placed;
  }
  if (placed < 16) throw ConfigError("injection scene could not place enough points");
  return pair;
}

SyntheticPair render_texture_pair(uint64_t seed, const EvalConfig& cfg, const Mat& r, const Vec3& t) {
  if (cfg.image_size % 8 != 0) throw ConfigError("texture image size must be a multiple of 8");
  Rng rng(seed ^ 0x7177e57ull);

  SyntheticPair pair;
  pair.mode = EvalConfig::Mode::Texture;
  pair.gt_pose.r = r;
  const double tn = norm(t);
  pair.gt_pose.t = tn > 0 ? normalized(t) : Vec3{0, 0, 0};

  const int n = cfg.image_size;
  pair.k = {static_cast<double>(n), static_cast<double>(n), n / 2.0, n / 2.0};

  // the scene is a fronto-parallel textured plane at depth d0 in camera A
  const double plane_depth = 4.0;
  const Mat k_mat{{pair.k.fx, 0, pair.k.cx}, {0, pair.k.fy, pair.k.cy}, {0, 0, 1}};

  Mat h;  // A pixels -> B pixels
  if (is_identity_pose(r, t)) {
    h = Mat::identity(3);
  } else {
    Mat inner = r;
    for (int row = 0; row < 3; ++row) inner(row, 2) += t[row] / plane_depth;  // R + t n^T / d
    h = matmul(matmul(k_mat, inner), mat3_inverse(k_mat));
  }
  const Mat h_inv = is_identity_pose(r, t) ? Mat::identity(3) : mat3_inverse(h);

  TextureField texture = TextureField::make(rng, cfg.texture_amp);
  pair.img_a.height = pair.img_a.width = n;
  pair.img_a.orig_height = pair.img_a.orig_width = n;
  pair.img_a.channels = 1;
  pair.img_a.pixels.resize(static_cast<std::size_t>(n) * n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) pair.img_a.at(x, y) = texture(x, y);

  pair.img_b = pair.img_a;
  if (!is_identity_pose(r, t)) {
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const Vec3 p1 = mat3_apply(h_inv, {static_cast<double>(x), static_cast<double>(y), 1.0});
        pair.img_b.at(x, y) = bilinear_field(texture, p1[0] / p1[2], p1[1] / p1[2]);
      }
  }

  // exact correspondences on a pixel lattice, kept when both views see them
  for (int y = 4; y < n - 4; y += 4)
    for (int x = 4; x < n - 4; x += 4) {
      const Vec3 p2 = mat3_apply(h, {static_cast<double>(x), static_cast<double>(y), 1.0});
      const double xb = p2[0] / p2[2], yb = p2[1] / p2[2];
      if (xb < 1 || xb > n - 2 || yb < 1 || yb > n - 2) continue;
      pair.gt_pixels.push_back({static_cast<double>(x), static_cast<double>(y), xb, yb});
    }
  return pair;
}

SyntheticPair gen_synthetic_pair(uint64_t seed, const EvalConfig& cfg) {
  Rng rng(seed);
  const Mat r = sample_rotation(rng, cfg.max_rot_deg);
  Vec3 t = random_unit(rng);
  for (int i = 0; i < 3; ++i) t[i] *= cfg.baseline;
  if (cfg.mode == EvalConfig::Mode::Injection) {
    if (cfg.baseline <= 0.0) throw ConfigError("injection mode needs a positive baseline");
    return gen_injection_pair(seed, cfg, r, t);
  }
  return render_texture_pair(seed, cfg, r, t);
}

InjectionMatches match_injected(const SyntheticPair& pair, const MatcherConfig& mcfg) {
  if (pair.mode != EvalConfig::Mode::Injection) throw ConfigError("match_injected: not an injection pair");

  TokenSet a{pair.desc_a.tokens, pair.desc_a.grid};
  TokenSet b{pair.desc_b.tokens, pair.desc_b.grid};
  Mat p = dual_softmax(similarity_matrix(a, b, mcfg.tau));
  std::vector<CoarseMatch> matches = mnn_filter(p, mcfg.conf_threshold);

  InjectionMatches out;
  out.n_coarse = static_cast<int>(matches.size());
  const int g = pair.desc_a.grid.width;
  for (const CoarseMatch& m : matches) {
    const int pa = pair.cell_point_a[m.i];
    const int pb = pair.cell_point_b[m.j];
    PixelPair px;
    if (pa >= 0) {
      px[0] = pair.gt_pixels[pa][0];
      px[1] = pair.gt_pixels[pa][1];
    } else {
      px[0] = (m.i % g) * 8.0 + 4.0;
      px[1] = (m.i / g) * 8.0 + 4.0;
    }
    if (pb >= 0) {
      px[2] = pair.gt_pixels[pb][2];
      px[3] = pair.gt_pixels[pb][3];
    } else {
      px[2] = (m.j % g) * 8.0 + 4.0;
      px[3] = (m.j / g) * 8.0 + 4.0;
    }
    out.pixel_pairs.push_back(px);
    out.conf.push_back(m.conf);
    if (pa >= 0 && pa == pb) ++out.n_cell_correct;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation driver
// ---------------------------------------------------------------------------

namespace {

PairEvalResult evaluate_pair(uint64_t pair_seed, const EvalConfig& cfg, const ModelWeights* weights) {
  PairEvalResult res;
  try {
    SyntheticPair pair = gen_synthetic_pair(pair_seed, cfg);
    std::vector<PixelPair> correspondences;

    if (cfg.mode == EvalConfig::Mode::Injection) {
      InjectionMatches m = match_injected(pair, cfg.mcfg);
      res.n_coarse = m.n_coarse;
      res.n_refined = m.n_coarse;
      res.n_cell_correct = m.n_cell_correct;
      correspondences = std::move(m.pixel_pairs);
    } else {
      if (!weights) throw ConfigError("texture evaluation needs model weights");
      MatchSet ms = match_pipeline(pair.img_a, pair.img_b, *weights, cfg.tcfg, cfg.mcfg);
      res.n_coarse = static_cast<int>(ms.coarse.size());
      res.n_refined = static_cast<int>(ms.refined.size());
      for (const RefinedMatch& r : ms.refined) correspondences.push_back({r.xa, r.ya, r.xb, r.yb});
    }

    RansacResult ransac = ransac_essential(correspondences, pair.k, cfg.ransac_iters, cfg.px_thresh,
                                           pair_seed ^ 0x5eedull);
    std::vector<PixelPair> inliers;
    for (std::size_t i = 0; i < correspondences.size(); ++i)
      if (ransac.inlier_mask[i]) inliers.push_back(correspondences[i]);
    RelPose est = decompose_essential(ransac.e, inliers.empty() ? correspondences : inliers, pair.k);

    res.errors = pose_error(est, pair.gt_pose);
    res.errors.inliers = ransac.inlier_count;
  } catch (const Error& e) {
    res.failed = true;
    res.fail_reason = e.what();
    res.errors.rot_err_deg = res.errors.trans_err_deg = res.errors.pose_err_deg =
        std::numeric_limits<double>::infinity();
  }
  return res;
}

}  // namespace

std::string config_digest(const EvalConfig& cfg) {
  std::string repr = "mode=" + std::to_string(static_cast<int>(cfg.mode)) +
                     ";pairs=" + std::to_string(cfg.n_pairs) + ";seed=" + std::to_string(cfg.seed) +
                     ";points=" + std::to_string(cfg.n_points) + ";noise=" + std::to_string(cfg.noise_sigma) +
                     ";grid=" + std::to_string(cfg.grid_size) + ";dim=" + std::to_string(cfg.desc_dim) +
                     ";img=" + std::to_string(cfg.image_size) + ";amp=" + std::to_string(cfg.texture_amp) +
                     ";rot=" + std::to_string(cfg.max_rot_deg) + ";base=" + std::to_string(cfg.baseline) +
                     ";iters=" + std::to_string(cfg.ransac_iters) + ";px=" + std::to_string(cfg.px_thresh) +
                     ";tau=" + std::to_string(cfg.mcfg.tau) + ";conf=" + std::to_string(cfg.mcfg.conf_threshold);
  uint64_t h = 1469598103934665603ull;
  for (unsigned char b : repr) {
    h ^= b;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

EvalReport evaluate(const EvalConfig& cfg, const ModelWeights* weights) {
  if (cfg.n_pairs < 1) throw ConfigError("evaluate: n_pairs must be >= 1");

  EvalReport report;
  report.config_digest = config_digest(cfg);
  report.pairs.resize(cfg.n_pairs);

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int i = next.fetch_add(1); i < cfg.n_pairs; i = next.fetch_add(1))
      report.pairs[i] = evaluate_pair(cfg.seed + static_cast<uint64_t>(i), cfg, weights);
  };
  if (cfg.threads <= 1 || cfg.n_pairs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const int n = std::min(cfg.threads, cfg.n_pairs);
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<double> errors;
  errors.reserve(report.pairs.size());
  for (const PairEvalResult& p : report.pairs) errors.push_back(p.errors.pose_err_deg);
  report.auc5 = auc(errors, 5.0);
  report.auc10 = auc(errors, 10.0);
  report.auc20 = auc(errors, 20.0);
  return report;
}

}  // namespace flam
