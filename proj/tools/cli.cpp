#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "silnet/config_io.hpp"
#include "silnet/dataset_io.hpp"
#include "silnet/evaluation.hpp"
#include "silnet/plotting.hpp"
#include "silnet/synthetic_hand.hpp"
#include "silnet/training.hpp"

namespace fs = std::filesystem;

namespace silnet {

namespace {

// Output directory: the explicit flag, else $SILNET_OUT_ROOT/<subcommand>.
fs::path output_dir(const std::string& flag, const std::string& subcommand) {
  if (!flag.empty()) return flag;
  const char* root = std::getenv("SILNET_OUT_ROOT");
  if (root == nullptr || *root == '\0') {
    throw usage_error(subcommand + ": --out is required when SILNET_OUT_ROOT is not set");
  }
  return fs::path(root) / subcommand;
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

TrainConfig build_config(const std::string& config_file, const std::vector<std::string>& overrides) {
  TrainConfig config;
  if (!config_file.empty()) {
    if (!fs::exists(config_file)) throw usage_error("config file " + config_file + " does not exist");
    config = parse_config(io::read_text(config_file), config_file);
  }
  for (const auto& o : overrides) apply_override(config, o);
  if (auto bad = config.violations(); !bad.empty()) throw usage_error(bad.front());
  return config;
}

void require_dataset(const fs::path& data) {
  if (!fs::exists(data / "manifest.txt")) throw data_error("no dataset at " + data.string() + " (manifest.txt missing)");
}

struct GenData {
  std::size_t n = 100;
  std::string params;
  std::string out;
  std::uint64_t seed = 0;
  int views = 3;
  double cube = kDefaultCubeMm;
};

int gen_data(const GenData& o) {
  const HandModelParams params =
      o.params.empty() ? HandModelParams::defaults() : parse_hand_params(io::read_text(o.params), o.params);
  DatasetSpec spec;
  spec.view_count = o.views;
  spec.cube_mm = o.cube;
  const fs::path out = output_dir(o.out, "data");
  const auto report = make_dataset(o.n, params, spec, o.seed, out);
  std::cout << "wrote " << out.string() << ": train " << report.counts.train << ", val " << report.counts.val
            << ", test " << report.counts.test << " (skipped " << report.skipped << ")\n";
  return kExitOk;
}

struct ConvertHim {
  std::string annotations;
  std::string images;
  std::string out;
  int views = 3;
  double cube = kDefaultCubeMm;
  std::size_t limit = 0;
};

int convert_him(const ConvertHim& o) {
  Him2017Options options;
  options.annotations = o.annotations;
  options.image_dir = o.images;
  options.out_dir = output_dir(o.out, "him2017");
  options.view_count = o.views;
  options.cube_mm = o.cube;
  options.limit = o.limit;
  const auto report = convert_him2017(options);
  std::cout << "wrote " << options.out_dir.string() << ": train " << report.counts.train << ", val "
            << report.counts.val << ", test " << report.counts.test << " (skipped " << report.skipped << ")\n";
  return kExitOk;
}

struct Train {
  std::string config;
  std::vector<std::string> overrides;
  std::string data;
  std::string out;
  bool verbose = false;
};

int train_cmd(const Train& o) {
  const TrainConfig config = build_config(o.config, o.overrides);
  require_dataset(o.data);
  const fs::path out = output_dir(o.out, "train");
  const auto train_split = load_prepared_split(o.data, "train", config.view_count, config.gt_depth_supervision);
  const auto val_split = load_prepared_split(o.data, "val", config.view_count, false);
  make_dirs(out);
  TrainOptions options;
  options.out_dir = out;
  options.verbose = o.verbose;
  const auto result = train(train_split, val_split, config, options);
  if (result.diverged) {
    std::cerr << "error: training diverged (non-finite loss) after " << result.steps
              << " steps; last finite checkpoint kept in " << (out / "checkpoints").string() << "\n";
    return kExitRuntime;
  }
  std::cout << "trained " << result.steps << " steps";
  if (!result.best.history.empty()) {
    std::cout << "; best epoch " << result.best.epoch << " val mean error "
              << io::format_double(result.best.val_mean_error_mm()) << " mm";
  }
  std::cout << "\n";
  return kExitOk;
}

struct Ablate {
  std::string config;
  std::vector<std::string> overrides;
  std::string data;
  std::string out;
  std::vector<std::int64_t> seeds{0};
  bool verbose = false;
};

int ablate_cmd(const Ablate& o) {
  const TrainConfig base = build_config(o.config, o.overrides);
  require_dataset(o.data);
  const fs::path out = output_dir(o.out, "ablate");
  const auto train_split = load_prepared_split(o.data, "train", base.view_count, true);
  const auto val_split = load_prepared_split(o.data, "val", base.view_count, false);
  const auto test_split = load_prepared_split(o.data, "test", base.view_count, false);
  if (test_split.size() == 0) throw data_error("empty split: test");
  make_dirs(out);

  std::vector<AblationRow> rows;
  for (const auto seed : o.seeds) {
    TrainConfig config = base;
    config.seed = seed;
    run_ablation_grid(train_split, val_split, test_split, config, [&](const AblationRow& row) {
      if (o.verbose) {
        std::cerr << row.variant.key << " seed " << row.seed << ": "
                  << (row.ok ? io::format_double(row.mean_error_mm) + " mm" : "failed: " + row.message) << "\n";
      }
      rows.push_back(row);
      io::write_text(out / "ablation.csv", format_ablation_csv(rows));
    });
  }
  std::cout << format_ablation_csv(rows);
  for (const auto& r : rows) {
    if (!r.ok) {
      std::cerr << "error: variant " << r.variant.key << " (seed " << r.seed << ") failed: " << r.message << "\n";
      return kExitRuntime;
    }
  }
  return kExitOk;
}

struct Eval {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string out;
  std::size_t overlays = 0;
  std::string max_mode = "joint_mean";
};

int eval_cmd(const Eval& o) {
  MaxPerJointMode mode;
  if (o.max_mode == "joint_mean") {
    mode = MaxPerJointMode::joint_mean;
  } else if (o.max_mode == "frame_max") {
    mode = MaxPerJointMode::frame_max;
  } else {
    throw usage_error("--max-mode must be joint_mean or frame_max");
  }
  Predictor predictor = Predictor::load(o.checkpoint);
  require_dataset(o.data);
  const fs::path out = output_dir(o.out, "eval");
  const auto split = load_prepared_split(o.data, o.split, predictor.view_count(), false);
  if (split.size() == 0) throw data_error("empty split: " + o.split);

  std::vector<const SilhouetteStack*> stacks;
  for (const auto& s : split.samples) stacks.push_back(&s.silhouettes);
  const auto preds = predictor.infer(stacks);
  const auto gts = ground_truth(split);
  const auto report = evaluate(preds, gts, mode);

  make_dirs(out);
  io::write_text(out / "report.txt", format_report(report));
  io::write_text(out / "cdf.csv", format_cdf_csv(report));
  io::write_text(out / "per_frame.csv", format_per_frame_csv(joint_errors(preds, gts)));
  if (o.overlays > 0) {
    make_dirs(out / "overlays");
    for (std::size_t i = 0; i < std::min(o.overlays, split.size()); ++i) {
      io::write_png(out / "overlays" / (sample_stem(i) + ".png"), render_overlay(split.samples[i], preds[i]));
    }
  }
  std::cout << "frames " << report.frames << " mean_error_mm " << io::format_double(report.mean_error_mm)
            << " max_per_joint_error_mm " << io::format_double(report.max_per_joint_error_mm) << "\n";
  return kExitOk;
}

struct Infer {
  std::string checkpoint;
  std::vector<std::string> files;
  std::string out;
};

// "000012_sil_0.png" -> "000012"; other names keep their stem.
std::string infer_stem(const fs::path& file) {
  std::string stem = file.stem().string();
  if (const auto pos = stem.rfind("_sil_"); pos != std::string::npos) stem.erase(pos);
  return stem;
}

int infer_cmd(const Infer& o) {
  Predictor predictor = Predictor::load(o.checkpoint);
  const auto v = static_cast<std::size_t>(predictor.view_count());
  if (o.files.empty() || o.files.size() % v != 0) {
    throw usage_error("checkpoint expects " + std::to_string(v) + " silhouette file" + (v == 1 ? "" : "s") +
                      " per sample (frontal" + (v == 3 ? ", side, top" : "") + "), got " +
                      std::to_string(o.files.size()));
  }
  const fs::path out = output_dir(o.out, "infer");
  std::vector<SilhouetteStack> stacks;
  std::vector<std::string> stems;
  for (std::size_t i = 0; i < o.files.size(); i += v) {
    std::vector<fs::path> group(o.files.begin() + static_cast<std::ptrdiff_t>(i),
                                o.files.begin() + static_cast<std::ptrdiff_t>(i + v));
    for (const auto& f : group) {
      if (!fs::exists(f)) throw data_error("missing silhouette file " + f.string());
    }
    stacks.push_back(read_silhouettes(group));
    for (float p : stacks.back().pixels) {
      if (p != 0.0f && p != 1.0f) throw data_error(group.front().string() + ": silhouette is not binary");
    }
    stems.push_back(infer_stem(group.front()));
  }
  std::vector<const SilhouetteStack*> ptrs;
  for (const auto& s : stacks) ptrs.push_back(&s);
  const auto poses = predictor.infer(ptrs);
  make_dirs(out);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto path = out / (stems[i] + "_pose.txt");
    io::write_text(path, format_pose(poses[i]));
    std::cout << path.string() << "\n";
  }
  return kExitOk;
}

struct Plot {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::size_t index = 0;
  std::vector<std::string> reports;
  std::vector<std::string> cdfs;
  std::vector<std::string> labels;
  std::string out;
};

std::string series_label(const std::vector<std::string>& labels, std::size_t i, const fs::path& file) {
  if (i < labels.size()) return labels[i];
  const auto parent = file.parent_path().filename().string();
  return parent.empty() ? file.stem().string() : parent;
}

int plot_cmd(const Plot& o) {
  if (o.checkpoint.empty() && o.reports.empty() && o.cdfs.empty()) {
    throw usage_error("plot: nothing to plot (give --checkpoint with --data, --report or --cdf)");
  }
  const fs::path out = output_dir(o.out, "plot");
  make_dirs(out);

  if (!o.checkpoint.empty()) {
    if (o.data.empty()) throw usage_error("plot: --checkpoint needs --data to pick an input sample");
    const auto ckpt = Checkpoint::load(resolve_checkpoint(o.checkpoint), /*with_dpn=*/true);
    if (ckpt.dpn_state.empty()) throw data_error("checkpoint has no depth-perception network parameters");
    require_dataset(o.data);
    const auto manifest = read_manifest(o.data);
    const auto entries = manifest.entries(o.split);
    if (o.index >= entries.size()) {
      throw usage_error("plot: sample index " + std::to_string(o.index) + " outside split " + o.split);
    }
    const Sample sample = read_sample(o.data, manifest, *entries[o.index], {/*load_depth=*/false, true});
    const int v = ckpt.config.view_count;
    const auto stack = select_views(sample.silhouettes, v);

    Dpn dpn(DpnOptions::scaled(v, ckpt.config.width_scale));
    deserialize_module(*dpn, ckpt.dpn_state);
    dpn->eval();
    torch::NoGradGuard no_grad;
    const auto output = dpn->forward(to_input_tensor({&stack}));
    const auto fig = plot_guidance_grid(output.phi_dp[0], 2);
    io::write_png(out / "guidance_grid.png", fig.image);
    std::cout << "guidance_grid.png: " << fig.tiles << " channels\n";
  }

  if (!o.cdfs.empty()) {
    std::vector<CdfCurve> curves;
    for (std::size_t i = 0; i < o.cdfs.size(); ++i) {
      curves.push_back({series_label(o.labels, i, o.cdfs[i]), parse_cdf_csv(io::read_text(o.cdfs[i]), o.cdfs[i])});
    }
    io::write_png(out / "error_cdf.png", plot_error_cdf(curves).image);
    std::cout << "error_cdf.png\n";
  }

  if (!o.reports.empty()) {
    std::vector<FingerSeries> series;
    for (std::size_t i = 0; i < o.reports.size(); ++i) {
      const auto report = parse_report(io::read_text(o.reports[i]), o.reports[i]);
      series.push_back({series_label(o.labels, i, o.reports[i]), report.per_finger_mean_mm});
    }
    io::write_png(out / "finger_errors.png", plot_finger_bars(series).image);
    std::cout << "finger_errors.png\n";
  }
  return kExitOk;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage:
      return kExitUsage;
    case ErrorKind::data:
      return kExitData;
    case ErrorKind::runtime:
      return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Hand pose estimation from binary silhouettes", "silnet"};
  app.require_subcommand(1);

  GenData gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Render a synthetic silhouette dataset");
  gen_cmd->add_option("-n,--count", gen.n, "Number of samples")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--params", gen.params, "Hand-model parameter file")->check(CLI::ExistingFile);
  gen_cmd->add_option("-o,--out", gen.out, "Output dataset directory");
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("--views", gen.views, "Views per sample (1 or 3)")->check(CLI::IsMember({1, 3}));
  gen_cmd->add_option("--cube", gen.cube, "Crop cube edge in mm")->check(CLI::PositiveNumber);

  ConvertHim him;
  auto* him_cmd = app.add_subcommand("convert-him2017", "Convert a HIM2017 export into a dataset");
  him_cmd->add_option("--annotations", him.annotations, "Annotation text file")->required()->check(CLI::ExistingFile);
  him_cmd->add_option("--images", him.images, "Directory of depth PNGs")->required()->check(CLI::ExistingDirectory);
  him_cmd->add_option("-o,--out", him.out, "Output dataset directory");
  him_cmd->add_option("--views", him.views, "Views per sample (1 or 3)")->check(CLI::IsMember({1, 3}));
  him_cmd->add_option("--cube", him.cube, "Crop cube edge in mm")->check(CLI::PositiveNumber);
  him_cmd->add_option("--limit", him.limit, "Convert at most this many frames (0 = all)");

  Train tr;
  auto* train_sub = app.add_subcommand("train", "Train DPN and RPN jointly");
  train_sub->add_option("-c,--config", tr.config, "Config file (key = value)");
  train_sub->add_option("--set", tr.overrides, "Override a config key (key=value)")->take_all();
  train_sub->add_option("-d,--data", tr.data, "Dataset directory")->required();
  train_sub->add_option("-o,--out", tr.out, "Run directory");
  train_sub->add_flag("-v,--verbose", tr.verbose, "Print per-epoch progress");

  Ablate ab;
  auto* ablate_sub = app.add_subcommand("ablate", "Train and evaluate the ablation variants");
  ablate_sub->add_option("-c,--config", ab.config, "Base config file");
  ablate_sub->add_option("--set", ab.overrides, "Override a config key (key=value)")->take_all();
  ablate_sub->add_option("-d,--data", ab.data, "Dataset directory")->required();
  ablate_sub->add_option("-o,--out", ab.out, "Output directory");
  ablate_sub->add_option("--seeds", ab.seeds, "Seeds to run")->take_all();
  ablate_sub->add_flag("-v,--verbose", ab.verbose, "Print each row as it finishes");

  Eval ev;
  auto* eval_sub = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval_sub->add_option("-k,--checkpoint", ev.checkpoint, "Run or checkpoint directory")->required();
  eval_sub->add_option("-d,--data", ev.data, "Dataset directory")->required();
  eval_sub->add_option("--split", ev.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  eval_sub->add_option("-o,--out", ev.out, "Output directory");
  eval_sub->add_option("--overlays", ev.overlays, "Write overlay images for the first N frames");
  eval_sub->add_option("--max-mode", ev.max_mode, "joint_mean (default) or frame_max");

  Infer in;
  auto* infer_sub = app.add_subcommand("infer", "Estimate poses from silhouette images");
  infer_sub->add_option("-k,--checkpoint", in.checkpoint, "Run or checkpoint directory")->required();
  infer_sub->add_option("files", in.files, "Silhouette PNGs, V per sample (frontal, side, top)")->required();
  infer_sub->add_option("-o,--out", in.out, "Output directory for <stem>_pose.txt");

  Plot pl;
  auto* plot_sub = app.add_subcommand("plot", "Render figures from checkpoints and evaluation outputs");
  plot_sub->add_option("-k,--checkpoint", pl.checkpoint, "Checkpoint for the guidance grid");
  plot_sub->add_option("-d,--data", pl.data, "Dataset providing the input sample");
  plot_sub->add_option("--split", pl.split, "Split of the input sample")->check(CLI::IsMember({"train", "val", "test"}));
  plot_sub->add_option("--index", pl.index, "Index of the input sample within the split");
  plot_sub->add_option("--report", pl.reports, "report.txt files for the per-finger chart")->take_all();
  plot_sub->add_option("--cdf", pl.cdfs, "cdf.csv files for the error curve")->take_all();
  plot_sub->add_option("--label", pl.labels, "Series labels, in order")->take_all();
  plot_sub->add_option("-o,--out", pl.out, "Output directory");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return gen_data(gen);
    if (*him_cmd) return convert_him(him);
    if (*train_sub) return train_cmd(tr);
    if (*ablate_sub) return ablate_cmd(ab);
    if (*eval_sub) return eval_cmd(ev);
    if (*infer_sub) return infer_cmd(in);
    if (*plot_sub) return plot_cmd(pl);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const c10::Error& e) {
    std::cerr << "error: " << e.what_without_backtrace() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace silnet
