#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fusemap/dataset.hpp"
#include "fusemap/registration.hpp"
#include "fusemap/sync.hpp"
#include "fusemap/trajectory.hpp"

namespace fusemap {

/// Parameter sweeps over the keyframe registration pipeline. Each sweep value
/// runs the full pipeline on the dataset's keyframe pairs and reports
/// fitness / inlier RMSE / iteration / timing metrics per pair plus a mean
/// row, written out as CSV and standalone SVG charts.

enum class SweepVariable {
  init_mode,
  method,
  max_pair_distance,
  decimation_factor,
  keyframe_interval,
  voxel_size,
};

inline const char* to_string(SweepVariable v) {
  switch (v) {
    case SweepVariable::init_mode: return "init_mode";
    case SweepVariable::method: return "method";
    case SweepVariable::max_pair_distance: return "max_pair_distance";
    case SweepVariable::decimation_factor: return "decimation_factor";
    case SweepVariable::keyframe_interval: return "keyframe_interval";
    case SweepVariable::voxel_size: return "voxel_size";
  }
  return "?";
}

inline SweepVariable parse_sweep_variable(const std::string& s) {
  for (const auto v : {SweepVariable::init_mode, SweepVariable::method,
                       SweepVariable::max_pair_distance, SweepVariable::decimation_factor,
                       SweepVariable::keyframe_interval, SweepVariable::voxel_size})
    if (s == to_string(v)) return v;
  throw InvalidParameter("unknown sweep variable '" + s + "'");
}

/// The knobs a sweep can hold fixed (one of which the sweep varies).
struct BenchConfig {
  IcpMethod method = IcpMethod::point_to_plane;
  InitMode init = InitMode::odometry_prior;
  double max_pair_distance = 0.05;
  int decimation_factor = 1;
  double keyframe_interval_s = 1.0;
  double voxel_size = 0.0;
};

struct SweepSpec {
  std::filesystem::path dataset;
  SweepVariable variable = SweepVariable::max_pair_distance;
  std::vector<std::string> values;   // formatted as they will appear in output
  int repetitions = 5;               // timing repetitions per pair
  BenchConfig fixed;

  void validate() const {
    if (values.empty()) throw InvalidParameter("sweep value list is empty");
    if (repetitions < 1) throw InvalidParameter("sweep repetitions must be at least 1");
  }
};

struct SweepRow {
  std::string value;
  std::string pair;                  // keyframe pair index, or "mean"
  double fitness = 0.0;
  double inlier_rmse = 0.0;
  double iterations = 0.0;
  double elapsed_s = 0.0;            // median over repetitions; mean row averages medians
  std::optional<double> truth_err_m; // translation error vs. ground truth, when available
};

struct SweepResult {
  std::vector<SweepRow> rows;
  bool has_truth = false;
};

namespace detail {

inline double sweep_value_as_double(const std::string& value) {
  std::size_t used = 0;
  double parsed = 0.0;
  try {
    parsed = std::stod(value, &used);
  } catch (const std::exception&) {
    throw InvalidParameter("sweep value '" + value + "' is not a number");
  }
  if (used != value.size())
    throw InvalidParameter("sweep value '" + value + "' is not a number");
  return parsed;
}

inline int sweep_value_as_int(const std::string& value) {
  const double d = sweep_value_as_double(value);
  const int i = static_cast<int>(std::llround(d));
  if (static_cast<double>(i) != d)
    throw InvalidParameter("sweep value '" + value + "' is not an integer");
  return i;
}

inline IcpMethod parse_method_label(const std::string& s) {
  if (s == "p2p") return IcpMethod::point_to_point;
  if (s == "p2l") return IcpMethod::point_to_plane;
  throw InvalidParameter("unknown method '" + s + "' (expected p2p or p2l)");
}

inline InitMode parse_init_label(const std::string& s) {
  if (s == "identity") return InitMode::identity;
  if (s == "odometry") return InitMode::odometry_prior;
  throw InvalidParameter("unknown init mode '" + s + "' (expected identity or odometry)");
}

inline BenchConfig apply_sweep_value(BenchConfig cfg, SweepVariable variable,
                                     const std::string& value) {
  switch (variable) {
    case SweepVariable::init_mode: cfg.init = parse_init_label(value); break;
    case SweepVariable::method: cfg.method = parse_method_label(value); break;
    case SweepVariable::max_pair_distance: cfg.max_pair_distance = sweep_value_as_double(value); break;
    case SweepVariable::decimation_factor: cfg.decimation_factor = sweep_value_as_int(value); break;
    case SweepVariable::keyframe_interval: cfg.keyframe_interval_s = sweep_value_as_double(value); break;
    case SweepVariable::voxel_size: cfg.voxel_size = sweep_value_as_double(value); break;
  }
  return cfg;
}

inline double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace detail

/// Runs every sweep value over the dataset's keyframe pairs, in list order.
/// Metric columns depend only on the data and config, so they are identical
/// across runs; only elapsed_s (median of `repetitions` timings) varies.
inline SweepResult run_sweep(const SweepSpec& spec) {
  spec.validate();
  const Dataset ds = load_dataset(spec.dataset);
  const PairingResult pairing = pair_streams(ds.poses, ds.depths);

  std::map<std::int64_t, SE3> truth_at;
  if (ds.groundtruth)
    for (const auto& pose : ds.groundtruth->poses) truth_at[pose.timestamp_us] = pose.transform;

  SweepResult out;
  out.has_truth = ds.groundtruth.has_value();

  for (const auto& value : spec.values) {
    const BenchConfig cfg = detail::apply_sweep_value(spec.fixed, spec.variable, value);
    const auto keyframes = select_keyframes(pairing.framesets, cfg.keyframe_interval_s);
    if (keyframes.size() < 2)
      throw InvalidParameter("sweep value " + value + ": fewer than two keyframes");

    std::vector<PointCloud> clouds;
    std::vector<SE3> odom;
    for (const auto& kf : keyframes) {
      PointCloud pc = deproject(decimate(kf.depth, cfg.decimation_factor));
      if (cfg.voxel_size > 0.0) pc = voxel_downsample(pc, cfg.voxel_size);
      if (cfg.method == IcpMethod::point_to_plane)
        pc = estimate_normals(pc, kDefaultNormalNeighbors, Eigen::Vector3d::Zero());
      clouds.push_back(std::move(pc));
      odom.push_back(compose(kf.pose.transform, ds.manifest.mount));
    }

    try {
      for (std::size_t i = 0; i + 1 < keyframes.size(); ++i) {
        IcpConfig icp;
        icp.method = cfg.method;
        icp.max_correspondence_distance = cfg.max_pair_distance;
        if (cfg.init == InitMode::odometry_prior) icp.init = relative(odom[i], odom[i + 1]);

        IcpResult result;
        std::vector<double> timings;
        for (int rep = 0; rep < spec.repetitions; ++rep) {
          result = register_clouds(clouds[i + 1], clouds[i], icp);
          timings.push_back(result.elapsed_s);
        }

        SweepRow row;
        row.value = value;
        row.pair = std::to_string(i);
        row.fitness = result.fitness;
        row.inlier_rmse = result.inlier_rmse;
        row.iterations = static_cast<double>(result.iterations);
        row.elapsed_s = detail::median(timings);
        if (out.has_truth) {
          const auto a = truth_at.find(keyframes[i].depth.timestamp_us);
          const auto b = truth_at.find(keyframes[i + 1].depth.timestamp_us);
          if (a == truth_at.end() || b == truth_at.end())
            throw InvalidParameter("ground truth is missing a keyframe timestamp");
          const SE3 rel_truth = relative(a->second, b->second);
          row.truth_err_m =
              compose(inverse(result.transform), rel_truth).translation().norm();
        }
        out.rows.push_back(std::move(row));
      }
    } catch (const PipelineError& e) {
      throw PipelineError("sweep value " + value + ": " + e.what());
    }

    SweepRow mean;
    mean.value = value;
    mean.pair = "mean";
    const std::size_t pairs = keyframes.size() - 1;
    if (out.has_truth) mean.truth_err_m = 0.0;
    for (std::size_t r = out.rows.size() - pairs; r < out.rows.size(); ++r) {
      mean.fitness += out.rows[r].fitness / static_cast<double>(pairs);
      mean.inlier_rmse += out.rows[r].inlier_rmse / static_cast<double>(pairs);
      mean.iterations += out.rows[r].iterations / static_cast<double>(pairs);
      mean.elapsed_s += out.rows[r].elapsed_s / static_cast<double>(pairs);
      if (out.has_truth) *mean.truth_err_m += *out.rows[r].truth_err_m / static_cast<double>(pairs);
    }
    out.rows.push_back(std::move(mean));
  }
  return out;
}

namespace detail {

/// Minimal standalone SVG line chart: one point per aggregate sweep value,
/// connected when there are at least two. No external assets or scripts.
inline void write_metric_svg(const std::filesystem::path& path, const std::string& title,
                             const std::vector<std::string>& labels,
                             const std::vector<double>& ys) {
  constexpr double kWidth = 640.0, kHeight = 400.0;
  constexpr double kLeft = 84.0, kRight = 24.0, kTop = 48.0, kBottom = 56.0;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  double ymin = *std::min_element(ys.begin(), ys.end());
  double ymax = *std::max_element(ys.begin(), ys.end());
  double pad = 0.1 * (ymax - ymin);
  if (pad == 0.0) pad = ymax == 0.0 ? 1.0 : 0.1 * std::abs(ymax);
  ymin -= pad;
  ymax += pad;

  const auto px = [&](std::size_t i) {
    return labels.size() == 1 ? kLeft + plot_w / 2.0
                              : kLeft + plot_w * static_cast<double>(i) /
                                            static_cast<double>(labels.size() - 1);
  };
  const auto py = [&](double y) { return kTop + plot_h * (1.0 - (y - ymin) / (ymax - ymin)); };
  const auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::string(buf);
  };

  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
      << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"28\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"18\">" << title << "</text>\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kTop + plot_h << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w
      << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << kLeft - 8 << "\" y=\"" << py(ymax) + 5
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" << num(ymax)
      << "</text>\n"
      << "<text x=\"" << kLeft - 8 << "\" y=\"" << py(ymin) + 5
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" << num(ymin)
      << "</text>\n";
  if (labels.size() > 1) {
    out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < labels.size(); ++i)
      out << px(i) << "," << py(ys[i]) << (i + 1 < labels.size() ? " " : "");
    out << "\"/>\n";
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << "<circle cx=\"" << px(i) << "\" cy=\"" << py(ys[i])
        << "\" r=\"4\" fill=\"#1f77b4\"/>\n"
        << "<text x=\"" << px(i) << "\" y=\"" << py(ys[i]) - 10
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << num(ys[i]) << "</text>\n"
        << "<text x=\"" << px(i) << "\" y=\"" << kTop + plot_h + 20
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << labels[i]
        << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw IoError("short write on " + path.string());
}

}  // namespace detail

/// Writes results.csv (all rows, full double precision so re-parsing is
/// lossless) and one chart per metric over the aggregate rows.
inline void emit_report(const SweepResult& result, const std::filesystem::path& out_dir) {
  if (result.rows.empty()) throw InvalidParameter("sweep produced no rows to report");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  std::ofstream csv(out_dir / "results.csv");
  if (!csv) throw IoError("cannot write " + (out_dir / "results.csv").string());
  csv << "value,pair,fitness,inlier_rmse,iterations,elapsed_s";
  if (result.has_truth) csv << ",truth_err_m";
  csv << "\n";
  const auto full = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& row : result.rows) {
    csv << row.value << "," << row.pair << "," << full(row.fitness) << ","
        << full(row.inlier_rmse) << "," << full(row.iterations) << "," << full(row.elapsed_s);
    if (result.has_truth) csv << "," << full(row.truth_err_m.value());
    csv << "\n";
  }
  if (!csv) throw IoError("short write on results.csv");

  std::vector<std::string> labels;
  std::vector<double> rmse, fitness, elapsed;
  for (const auto& row : result.rows) {
    if (row.pair != "mean") continue;
    labels.push_back(row.value);
    rmse.push_back(row.inlier_rmse);
    fitness.push_back(row.fitness);
    elapsed.push_back(row.elapsed_s);
  }
  detail::write_metric_svg(out_dir / "rmse.svg", "inlier RMSE (m)", labels, rmse);
  detail::write_metric_svg(out_dir / "fitness.svg", "fitness", labels, fitness);
  detail::write_metric_svg(out_dir / "time.svg", "median elapsed (s)", labels, elapsed);
}

/// Sweep spec file: JSON with the dataset path, the variable, its value list,
/// timing repetitions, and optional overrides for the fixed knobs.
inline SweepSpec parse_sweep_json(const nlohmann::json& j) {
  SweepSpec spec;
  spec.dataset = j.at("dataset").get<std::string>();
  spec.variable = parse_sweep_variable(j.at("variable").get<std::string>());
  for (const auto& v : j.at("values"))
    spec.values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
  spec.repetitions = j.value("repetitions", 5);
  if (j.contains("fixed")) {
    const auto& f = j.at("fixed");
    if (f.contains("method"))
      spec.fixed.method = detail::parse_method_label(f.at("method").get<std::string>());
    if (f.contains("init"))
      spec.fixed.init = detail::parse_init_label(f.at("init").get<std::string>());
    spec.fixed.max_pair_distance = f.value("max_pair_distance", spec.fixed.max_pair_distance);
    spec.fixed.decimation_factor = f.value("decimation_factor", spec.fixed.decimation_factor);
    spec.fixed.keyframe_interval_s = f.value("keyframe_interval", spec.fixed.keyframe_interval_s);
    spec.fixed.voxel_size = f.value("voxel_size", spec.fixed.voxel_size);
  }
  return spec;
}

inline SweepSpec load_sweep_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("cannot open " + path.string());
  try {
    return parse_sweep_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptHeader(path.string() + ": " + e.what());
  }
}

}  // namespace fusemap
