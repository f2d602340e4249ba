// flam: focused-linear-attention feature matching, benchmarking and
// evaluation from the command line.
//
// Exit codes: 0 success, 1 check/selftest failure, 2 usage or I/O error.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "flam/attention.hpp"
#include "flam/backbone.hpp"
#include "flam/benchkit.hpp"
#include "flam/errors.hpp"
#include "flam/geoeval.hpp"
#include "flam/matcher.hpp"
#include "flam/rng.hpp"
#include "flam/selftest.hpp"
#include "flam/transformer.hpp"

using nlohmann::json;
using namespace flam;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Option handling: defaults < config file < command-line flags.
// ---------------------------------------------------------------------------

struct OptionSpec {
  const char* key;
  const char* def;
  const char* help;
};

const OptionSpec kOptions[] = {
    {"seed", "42", "global seed; all randomness derives from it"},
    {"threads", "1", "worker threads for refinement / evaluation pairs"},
    {"config", "", "key=value config file (flags override it)"},
    {"out", "", "output path (default: stdout)"},
    {"weights", "", "model weight file (default: seeded init)"},
    {"format", "tsv", "match output format: tsv | jsonl"},
    // attention variant
    {"variant", "focused", "attention kernel: softmax | linear | focused"},
    {"kernel", "relu", "linear-attention feature map: relu | elu1"},
    {"normalized", "1", "normalize linear/focused attention rows (0 reproduces the bare equations)"},
    {"dwconv", "1", "enable the depth-wise convolution branch (focused variant)"},
    {"p", "3", "focused-map exponent (>= 1)"},
    {"eps", "1e-6", "division guard for normalized attention"},
    {"scale", "auto", "softmax score scale: auto (1/sqrt(d)) or a number"},
    // transformer
    {"blocks", "4", "coarse self/cross block count"},
    {"fine-blocks", "1", "fine transformer block count"},
    // matcher
    {"tau", "0.1", "coarse similarity temperature"},
    {"tau-fine", "0.1", "refinement heatmap temperature"},
    {"conf-threshold", "0.2", "dual-softmax confidence threshold"},
    {"window", "5", "fine window side (odd)"},
    {"border-margin", "1", "coarse cells excluded at the border"},
    // bench
    {"sizes", "512,1024,2048,4096", "token counts for bench, ascending"},
    {"variants", "softmax,linear,focused", "kernels to bench"},
    {"reps", "5", "timed repetitions per point (median reported)"},
    {"dim", "64", "channel count for bench/gradcheck"},
    // eval
    {"pairs", "20", "synthetic pairs to evaluate"},
    {"mode", "injection", "evaluation mode: injection | texture"},
    {"points", "24", "3-D points per injection pair (>= 16)"},
    {"noise", "0", "descriptor noise sigma (injection mode)"},
    {"grid", "16", "injection coarse grid side"},
    {"image-size", "64", "texture image side (multiple of 8)"},
    {"texture-amp", "1", "texture contrast; 0 renders blank pairs"},
    {"max-rot", "10", "max relative rotation in degrees"},
    {"baseline", "0.4", "camera baseline length"},
    {"ransac-iters", "1000", "RANSAC iterations"},
    {"px-thresh", "1.0", "Sampson inlier threshold in pixels"},
    // gradcheck
    {"h", "1e-5", "finite-difference step"},
    {"tol", "1e-6", "max relative error accepted"},
    {"trials", "5", "seeds checked per variant"},
    // selftest
    {"module", "", "restrict selftest to one module"},
    {"skip-complexity", "0", "skip the timing-based scaling check"},
};

class Options {
 public:
  Options() {
    for (const auto& spec : kOptions) values_[spec.key] = spec.def;
  }

  void set(const std::string& key, const std::string& value, const std::string& where) {
    if (!values_.count(key)) throw UsageError("unknown option '" + key + "' (" + where + ")");
    values_[key] = value;
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)),
          path + ":" + std::to_string(lineno));
    }
  }

  const std::string& str(const std::string& key) const { return values_.at(key); }

  double real(const std::string& key) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(values_.at(key), &used);
      if (used != values_.at(key).size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      throw UsageError("option '" + key + "' expects a number, got '" + values_.at(key) + "'");
    }
  }

  long integer(const std::string& key) const {
    try {
      std::size_t used = 0;
      const long v = std::stol(values_.at(key), &used);
      if (used != values_.at(key).size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      throw UsageError("option '" + key + "' expects an integer, got '" + values_.at(key) + "'");
    }
  }

  bool flag(const std::string& key) const {
    const std::string& v = values_.at(key);
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw UsageError("option '" + key + "' expects a boolean, got '" + v + "'");
  }

  std::vector<int> int_list(const std::string& key) const {
    std::vector<int> out;
    std::stringstream ss(values_.at(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      try {
        out.push_back(std::stoi(item));
      } catch (const std::exception&) {
        throw UsageError("option '" + key + "' expects a comma-separated integer list");
      }
    }
    if (out.empty()) throw UsageError("option '" + key + "' is empty");
    return out;
  }

  std::vector<std::string> str_list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(values_.at(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) out.push_back(item);
    }
    if (out.empty()) throw UsageError("option '" + key + "' is empty");
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
};

struct ParsedArgs {
  std::string command;
  std::vector<std::string> positional;
  Options options;
};

ParsedArgs parse_args(int argc, char** argv) {
  ParsedArgs parsed;
  if (argc < 2) throw UsageError("missing command");
  parsed.command = argv[1];

  // first pass gathers flags so a --config file can be applied underneath
  std::vector<std::pair<std::string, std::string>> flags;
  for (int i = 2; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg.rfind("--", 0) == 0) {
      std::string key = arg.substr(2), value;
      const auto eq = key.find('=');
      if (eq != std::string::npos) {
        value = key.substr(eq + 1);
        key = key.substr(0, eq);
      } else {
        if (i + 1 >= argc) throw UsageError("flag --" + key + " expects a value");
        value = argv[++i];
      }
      flags.emplace_back(key, value);
    } else {
      parsed.positional.push_back(arg);
    }
  }

  for (const auto& [key, value] : flags)
    if (key == "config") parsed.options.set(key, value, "command line");
  if (!parsed.options.str("config").empty()) parsed.options.load_file(parsed.options.str("config"));
  for (const auto& [key, value] : flags) parsed.options.set(key, value, "command line");
  return parsed;
}

void print_usage(std::ostream& os) {
  os << "usage: flam <command> [--key value ...]\n"
        "\n"
        "commands:\n"
        "  match <imageA> <imageB>   write sub-pixel feature matches\n"
        "  bench                     time attention kernels, fit log-log slopes\n"
        "  eval                      synthetic-geometry pose evaluation (JSON report)\n"
        "  gradcheck                 analytic vs finite-difference attention gradients\n"
        "  selftest                  run every module's invariant suite\n"
        "\n"
        "options (defaults in brackets; also settable via --config FILE with key=value lines):\n";
  for (const auto& spec : kOptions)
    os << "  --" << spec.key << " [" << spec.def << "]  " << spec.help << "\n";
}

// ---------------------------------------------------------------------------

VariantSpec variant_from(const Options& opt) {
  VariantSpec spec;
  const std::string& v = opt.str("variant");
  if (v == "softmax")
    spec.kind = VariantSpec::Kind::Softmax;
  else if (v == "linear")
    spec.kind = VariantSpec::Kind::Linear;
  else if (v == "focused")
    spec.kind = VariantSpec::Kind::Focused;
  else
    throw UsageError("unknown variant '" + v + "' (softmax | linear | focused)");

  const std::string& kern = opt.str("kernel");
  if (kern == "relu")
    spec.kernel = LinearKernel::ReLU;
  else if (kern == "elu1")
    spec.kernel = LinearKernel::EluPlusOne;
  else
    throw UsageError("unknown kernel '" + kern + "' (relu | elu1)");

  spec.normalized = opt.flag("normalized");
  spec.use_dwconv = opt.flag("dwconv");
  spec.p = opt.real("p");
  spec.eps = opt.real("eps");
  if (spec.p < 1.0) throw UsageError("--p must be >= 1");
  if (spec.eps <= 0.0) throw UsageError("--eps must be positive");
  if (opt.str("scale") != "auto") {
    spec.scale_override = opt.real("scale");
    if (spec.scale_override == 0.0) throw UsageError("--scale must be 'auto' or a nonzero number");
  }
  return spec;
}

MatcherConfig matcher_from(const Options& opt) {
  MatcherConfig m;
  m.tau = opt.real("tau");
  m.tau_fine = opt.real("tau-fine");
  m.conf_threshold = opt.real("conf-threshold");
  m.window = static_cast<int>(opt.integer("window"));
  m.border_margin = static_cast<int>(opt.integer("border-margin"));
  if (m.tau <= 0 || m.tau_fine <= 0) throw UsageError("temperatures must be positive");
  if (m.window % 2 == 0 || m.window < 3) throw UsageError("--window must be odd and >= 3");
  return m;
}

TransformerConfig transformer_from(const Options& opt) {
  TransformerConfig cfg;
  cfg.num_coarse_blocks = static_cast<int>(opt.integer("blocks"));
  cfg.num_fine_blocks = static_cast<int>(opt.integer("fine-blocks"));
  cfg.variant = variant_from(opt);
  cfg.seed = static_cast<uint64_t>(opt.integer("seed"));
  if (cfg.num_coarse_blocks < 1 || cfg.num_fine_blocks < 1)
    throw UsageError("block counts must be >= 1");
  return cfg;
}

// Atomic file write: temp file in the same directory, then rename.
void write_atomically(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write output file: " + path);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("failed writing output file: " + path);
  }
  std::filesystem::rename(tmp, path);
}

void emit(const Options& opt, const std::string& contents) {
  const std::string& out = opt.str("out");
  if (out.empty() || out == "-")
    std::cout << contents;
  else
    write_atomically(out, contents);
}

// ---------------------------------------------------------------------------
// match
// ---------------------------------------------------------------------------

int cmd_match(const ParsedArgs& args) {
  if (args.positional.size() != 2) throw UsageError("match expects exactly two image paths");
  const Options& opt = args.options;

  Image img_a = load_image(args.positional[0]);
  Image img_b = load_image(args.positional[1]);
  if (img_a.channels != img_b.channels)
    throw UsageError("images must have the same channel count");

  TransformerConfig cfg = transformer_from(opt);
  MatcherConfig mcfg = matcher_from(opt);

  ModelWeights weights;
  if (!opt.str("weights").empty())
    weights = load_model(opt.str("weights"));
  else
    weights = model_init_seeded(cfg.seed, img_a.channels, cfg);
  if (weights.backbone.in_channels != img_a.channels)
    throw UsageError("weight file expects " + std::to_string(weights.backbone.in_channels) +
                     "-channel images");

  MatchSet ms = match_pipeline(img_a, img_b, weights, cfg, mcfg,
                               static_cast<int>(opt.integer("threads")));

  std::string payload;
  const std::string& format = opt.str("format");
  if (format == "tsv") {
    payload += "# xa\tya\txb\tyb\tconf\n";
    char line[160];
    for (const RefinedMatch& m : ms.refined) {
      std::snprintf(line, sizeof line, "%.6f\t%.6f\t%.6f\t%.6f\t%.6f\n", m.xa, m.ya, m.xb, m.yb, m.conf);
      payload += line;
    }
  } else if (format == "jsonl") {
    for (const RefinedMatch& m : ms.refined) {
      json j{{"xa", m.xa}, {"ya", m.ya}, {"xb", m.xb}, {"yb", m.yb}, {"conf", m.conf}};
      payload += j.dump();
      payload += '\n';
    }
  } else {
    throw UsageError("unknown format '" + format + "' (tsv | jsonl)");
  }
  emit(opt, payload);

  std::cerr << "matches: candidates=" << ms.diag.candidates << " kept=" << ms.diag.filtered
            << " refined=" << ms.diag.refined << " window_dropped=" << ms.diag.window_dropped
            << " dwconv_disabled=" << ms.diag.dwconv_disabled << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

int cmd_bench(const ParsedArgs& args) {
  const Options& opt = args.options;
  const std::vector<int> sizes = opt.int_list("sizes");
  const std::vector<std::string> variants = opt.str_list("variants");
  const int reps = static_cast<int>(opt.integer("reps"));
  const int dim = static_cast<int>(opt.integer("dim"));
  const uint64_t seed = static_cast<uint64_t>(opt.integer("seed"));
  if (reps < 3) throw UsageError("--reps must be >= 3 (median of repetitions)");
  for (std::size_t i = 1; i < sizes.size(); ++i)
    if (sizes[i] <= sizes[i - 1]) throw UsageError("--sizes must be strictly ascending");

  auto points = run_attention_bench(variants, sizes, dim, reps, seed);

  std::string csv = "variant,N,d,median_seconds\n";
  char line[160];
  for (const BenchPoint& p : points) {
    std::snprintf(line, sizeof line, "%s,%d,%d,%.9f\n", p.variant.c_str(), p.n, p.d, p.median_seconds);
    csv += line;
  }
  for (const std::string& variant : variants) {
    std::vector<double> ns, ts;
    for (const BenchPoint& p : points)
      if (p.variant == variant) {
        ns.push_back(p.n);
        ts.push_back(p.median_seconds);
      }
    const SlopeFit fit = loglog_slope(ns, ts);
    std::snprintf(line, sizeof line, "# slope,%s,%.4f,%.4f\n", variant.c_str(), fit.slope, fit.stderr_);
    csv += line;
    std::cerr << "slope " << variant << ": " << fit.slope << " (stderr " << fit.stderr_ << ")\n";
  }
  for (const BenchPoint& p : points) {
    std::snprintf(line, sizeof line, "# checksum,%s,%d,%.17g\n", p.variant.c_str(), p.n, p.checksum);
    csv += line;
  }
  emit(opt, csv);
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const ParsedArgs& args) {
  const Options& opt = args.options;
  EvalConfig cfg;
  cfg.n_pairs = static_cast<int>(opt.integer("pairs"));
  if (cfg.n_pairs < 1) throw UsageError("--pairs must be >= 1");
  const std::string& mode = opt.str("mode");
  if (mode == "injection")
    cfg.mode = EvalConfig::Mode::Injection;
  else if (mode == "texture")
    cfg.mode = EvalConfig::Mode::Texture;
  else
    throw UsageError("unknown mode '" + mode + "' (injection | texture)");

  cfg.seed = static_cast<uint64_t>(opt.integer("seed"));
  cfg.threads = static_cast<int>(opt.integer("threads"));
  cfg.n_points = static_cast<int>(opt.integer("points"));
  cfg.noise_sigma = opt.real("noise");
  cfg.grid_size = static_cast<int>(opt.integer("grid"));
  cfg.image_size = static_cast<int>(opt.integer("image-size"));
  cfg.texture_amp = opt.real("texture-amp");
  cfg.max_rot_deg = opt.real("max-rot");
  cfg.baseline = opt.real("baseline");
  cfg.ransac_iters = static_cast<int>(opt.integer("ransac-iters"));
  cfg.px_thresh = opt.real("px-thresh");
  cfg.mcfg = matcher_from(opt);
  cfg.tcfg = transformer_from(opt);

  ModelWeights weights;
  const ModelWeights* weights_ptr = nullptr;
  if (cfg.mode == EvalConfig::Mode::Texture) {
    if (!opt.str("weights").empty())
      weights = load_model(opt.str("weights"));
    else
      weights = model_init_seeded(cfg.tcfg.seed, 1, cfg.tcfg);
    weights_ptr = &weights;
  }

  EvalReport report = evaluate(cfg, weights_ptr);

  json j;
  j["config_digest"] = report.config_digest;
  j["auc_convention"] =
      "exact area under the cumulative recall step curve on [0,t], divided by t; "
      "failed pairs enter as +inf";
  j["mode"] = mode;
  j["seed"] = cfg.seed;
  j["n_pairs"] = cfg.n_pairs;
  json per_pair = json::array();
  for (const PairEvalResult& p : report.pairs) {
    json e;
    if (p.failed) {
      e["pose_err_deg"] = nullptr;
      e["rot_err_deg"] = nullptr;
      e["trans_err_deg"] = nullptr;
      e["failed"] = true;
      e["fail_reason"] = p.fail_reason;
    } else {
      e["pose_err_deg"] = p.errors.pose_err_deg;
      e["rot_err_deg"] = p.errors.rot_err_deg;
      e["trans_err_deg"] = p.errors.trans_err_deg;
      e["failed"] = false;
    }
    e["inliers"] = p.errors.inliers;
    e["n_coarse"] = p.n_coarse;
    e["n_refined"] = p.n_refined;
    if (cfg.mode == EvalConfig::Mode::Injection)
      e["n_cell_correct"] = p.n_cell_correct;  // diagnostic, not a headline metric
    per_pair.push_back(e);
  }
  j["per_pair"] = per_pair;
  j["auc"] = {{"5", report.auc5}, {"10", report.auc10}, {"20", report.auc20}};

  emit(opt, j.dump(2) + "\n");
  std::cerr << "auc@5=" << report.auc5 << " auc@10=" << report.auc10 << " auc@20=" << report.auc20
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

int cmd_gradcheck(const ParsedArgs& args) {
  const Options& opt = args.options;
  const double h = opt.real("h");
  const double tol = opt.real("tol");
  const int trials = static_cast<int>(opt.integer("trials"));
  const uint64_t seed = static_cast<uint64_t>(opt.integer("seed"));
  const int dim = std::min<int>(8, static_cast<int>(opt.integer("dim")));
  if (h <= 0) throw UsageError("--h must be positive");

  std::printf("%-10s %-6s %-14s %s\n", "variant", "seed", "max_rel_err", "status");
  bool all_ok = true;

  for (const std::string& name : {"softmax", "linear", "focused"}) {
    for (int trial = 0; trial < trials; ++trial) {
      const uint64_t s = seed + trial;
      Rng rng(s);
      const int n = 6;
      auto away = [&](int r, int c) {
        Mat m(r, c);
        for (double& v : m.data()) {
          const double mag = rng.uniform(0.1, 1.0);
          v = rng.uniform() < 0.5 ? -mag : mag;
        }
        return m;
      };
      AttentionInputs in{away(n, dim), away(n, dim), away(n, dim)};
      Mat upstream(n, dim);
      for (double& v : upstream.data()) v = rng.uniform(-1.0, 1.0);

      AttentionVariant variant = SoftmaxParams{1.0 / std::sqrt(double(dim))};
      if (name == "linear") variant = LinearParams{LinearKernel::ReLU, true, 1e-6};
      if (name == "focused") {
        FocusParams fp;
        fp.v_grid = {2, 3};
        fp.dw_kernel.size = 3;
        fp.dw_kernel.weights = Mat(dim, 9);
        for (double& v : fp.dw_kernel.weights.data()) v = rng.uniform(-0.5, 0.5);
        variant = fp;
      }

      AttentionGrads g = attention_grads(variant, in, upstream);
      auto loss = [&]() {
        Mat out = attention_forward(variant, in);
        double acc = 0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += upstream.data()[i] * out.data()[i];
        return acc;
      };
      auto rel = [&](const Mat& a, Mat& x) {
        Mat num = finite_diff_grad(loss, x, h);
        double worst = 0;
        for (std::size_t i = 0; i < a.size(); ++i)
          worst = std::max(worst, std::abs(a.data()[i] - num.data()[i]) /
                                      std::max({std::abs(a.data()[i]), std::abs(num.data()[i]), 1e-3}));
        return worst;
      };
      double worst = std::max({rel(g.dq, in.q), rel(g.dk, in.k), rel(g.dv, in.v)});
      if (name == "focused") {
        Mat* kw = &std::get<FocusParams>(variant).dw_kernel.weights;
        worst = std::max(worst, rel(*g.d_dw_kernel, *kw));
      }
      const bool ok = worst < tol;
      all_ok = all_ok && ok;
      std::printf("%-10s %-6llu %-14.3e %s\n", name.c_str(), static_cast<unsigned long long>(s), worst,
                  ok ? "ok" : "FAIL");
    }
  }
  std::printf("overall: %s (tol %g, h %g)\n", all_ok ? "ok" : "FAIL", tol, h);
  return all_ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

int cmd_selftest(const ParsedArgs& args) {
  const Options& opt = args.options;
  SelftestOptions sopts;
  sopts.seed = static_cast<uint64_t>(opt.integer("seed"));
  sopts.module_filter = opt.str("module");
  sopts.weights_path = opt.str("weights");
  sopts.include_complexity = !opt.flag("skip-complexity");

  auto reports = run_selftest(sopts);
  bool all_ok = true;
  for (const ModuleReport& report : reports) {
    const bool ok = report.all_passed();
    all_ok = all_ok && ok;
    std::printf("%-12s %-4s (%zu checks)\n", report.module.c_str(), ok ? "ok" : "FAIL",
                report.checks.size());
    for (const CheckResult& c : report.checks)
      if (!c.pass) std::printf("  FAIL %s: %s\n", c.name.c_str(), c.detail.c_str());
  }
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    ParsedArgs args = parse_args(argc, argv);
    if (args.command == "match") return cmd_match(args);
    if (args.command == "bench") return cmd_bench(args);
    if (args.command == "eval") return cmd_eval(args);
    if (args.command == "gradcheck") return cmd_gradcheck(args);
    if (args.command == "selftest") return cmd_selftest(args);
    if (args.command == "help" || args.command == "--help" || args.command == "-h") {
      print_usage(std::cout);
      return 0;
    }
    throw UsageError("unknown command '" + args.command + "'");
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    print_usage(std::cerr);
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
