#include "silnet/training.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "silnet/config_io.hpp"
#include "silnet/dataset_io.hpp"
#include "silnet/synthetic_hand.hpp"

namespace fs = std::filesystem;

namespace silnet {

SilhouetteStack select_views(const SilhouetteStack& stack, int view_count) {
  if (stack.view_count == view_count) return stack;
  if (view_count > stack.view_count) {
    throw usage_error("model expects " + std::to_string(view_count) + " views but the data has " +
                      std::to_string(stack.view_count));
  }
  SilhouetteStack out = SilhouetteStack::zeros(view_count);
  std::copy_n(stack.pixels.begin(), out.pixels.size(), out.pixels.begin());
  return out;
}

namespace {

void prepare_one(PreparedSplit& out, Sample sample, int view_count, bool with_depth_targets) {
  sample.silhouettes = select_views(sample.silhouettes, view_count);
  if (with_depth_targets) {
    if (!sample.depth) throw data_error("depth supervision requested but a sample has no depth frame");
    out.depth_targets.push_back(depth_target_for(sample));
  }
  sample.depth.reset();
  out.samples.push_back(std::move(sample));
}

}  // namespace

PreparedSplit prepare_split(std::vector<Sample> samples, int view_count, bool with_depth_targets) {
  PreparedSplit out;
  for (auto& s : samples) prepare_one(out, std::move(s), view_count, with_depth_targets);
  return out;
}

PreparedSplit load_prepared_split(const fs::path& root, const std::string& split, int view_count,
                                  bool with_depth_targets, bool verify_checksums) {
  if (split != "train" && split != "val" && split != "test") throw usage_error("unknown split '" + split + "'");
  const DatasetManifest manifest = read_manifest(root);
  const LoadOptions options{with_depth_targets, verify_checksums};
  PreparedSplit out;
  for (const ManifestEntry* e : manifest.entries(split)) {
    Sample s = read_sample(root, manifest, *e, options);
    if (auto bad = validate_sample(s, with_depth_targets); !bad.empty()) {
      throw data_error("sample " + split + "/" + sample_stem(e->id) + ": " + bad.front());
    }
    prepare_one(out, std::move(s), view_count, with_depth_targets);
  }
  return out;
}

bool dpn_active(const TrainConfig& config) { return uses_guidance(config) || config.gt_depth_supervision; }

SilhouetteNet::SilhouetteNet(const TrainConfig& cfg) : config(cfg) {
  torch::manual_seed(static_cast<std::uint64_t>(config.seed));
  rpn = Rpn(RpnOptions::scaled(config.view_count, config.width_scale));
  if (dpn_active(config)) dpn = Dpn(DpnOptions::scaled(config.view_count, config.width_scale));
}

std::vector<torch::Tensor> SilhouetteNet::parameters() const {
  auto params = rpn->parameters();
  if (has_dpn()) {
    for (auto& p : dpn->parameters()) params.push_back(p);
  }
  return params;
}

namespace {

torch::Tensor batch_input(const PreparedSplit& split, const std::vector<std::size_t>& batch) {
  std::vector<const SilhouetteStack*> stacks;
  for (auto i : batch) stacks.push_back(&split.samples[i].silhouettes);
  return to_input_tensor(stacks);
}

torch::Tensor batch_poses(const PreparedSplit& split, const std::vector<std::size_t>& batch) {
  std::vector<const HandPose*> poses;
  for (auto i : batch) poses.push_back(&split.samples[i].pose);
  return to_pose_tensor(poses);
}

torch::Tensor batch_depth(const PreparedSplit& split, const std::vector<std::size_t>& batch) {
  const auto b = static_cast<std::int64_t>(batch.size());
  auto out = torch::empty({b, 1, kSilhouetteSize, kSilhouetteSize});
  auto* dst = out.data_ptr<float>();
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto& values = split.depth_targets[batch[k]].values;
    std::copy(values.begin(), values.end(), dst + k * SilhouetteStack::view_pixels());
  }
  return out;
}

}  // namespace

StepResult training_step(SilhouetteNet& net, const PreparedSplit& split, const std::vector<std::size_t>& batch) {
  if (batch.empty()) throw usage_error("training_step: empty batch");
  const auto& config = net.config;
  const auto input = batch_input(split, batch);

  StepResult result;
  LossTerms terms;
  net.rpn->train();
  result.rpn = net.rpn->forward(input);
  terms.reg = loss_reg(result.rpn.pose, batch_poses(split, batch));
  terms.w = weight_penalty(*net.rpn);

  if (net.has_dpn()) {
    net.dpn->train();
    result.dpn = net.dpn->forward(input);
    if (config.gt_depth_supervision && !split.depth_targets.empty()) {
      const auto real = batch_depth(split, batch);
      // Bins without a point hold 0 and count as missing.
      terms.p = loss_p(result.dpn->fake_depth, real, real > 0);
    }
    if (uses_guidance(config)) {
      result.guidance = guidance_variant(*result.dpn, config.dp_levels, config.include_fake_depth_in_guidance);
      if (config.stop_gradient_on_guidance) result.guidance = result.guidance.detach();
      terms.dp = loss_dp(result.rpn.heatmaps, result.guidance);
    }
    terms.w = terms.w + weight_penalty(*net.dpn);
  }
  result.loss = total_loss(terms, config, LossPhase::training);
  return result;
}

std::vector<HandPose> predict(Rpn& rpn, const std::vector<const SilhouetteStack*>& stacks, int batch_size) {
  torch::NoGradGuard no_grad;
  rpn->eval();
  std::vector<HandPose> out;
  out.reserve(stacks.size());
  for (std::size_t start = 0; start < stacks.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(stacks.size(), start + static_cast<std::size_t>(batch_size));
    const std::vector<const SilhouetteStack*> chunk(stacks.begin() + static_cast<std::ptrdiff_t>(start),
                                                    stacks.begin() + static_cast<std::ptrdiff_t>(end));
    const auto poses = rpn->forward(to_input_tensor(chunk)).pose;
    for (std::int64_t b = 0; b < poses.size(0); ++b) out.push_back(pose_from_tensor(poses, b));
  }
  return out;
}

std::vector<HandPose> predict(Rpn& rpn, const PreparedSplit& split, int batch_size) {
  std::vector<const SilhouetteStack*> stacks;
  for (const auto& s : split.samples) stacks.push_back(&s.silhouettes);
  return predict(rpn, stacks, batch_size);
}

std::vector<HandPose> ground_truth(const PreparedSplit& split) {
  std::vector<HandPose> out;
  for (const auto& s : split.samples) out.push_back(s.pose);
  return out;
}

std::string serialize_module(torch::nn::Module& module) {
  torch::serialize::OutputArchive archive;
  module.save(archive);
  std::ostringstream out;
  archive.save_to(out);
  return out.str();
}

void deserialize_module(torch::nn::Module& module, const std::string& bytes) {
  torch::serialize::InputArchive archive;
  std::istringstream in(bytes);
  try {
    archive.load_from(in);
    module.load(archive);
  } catch (const c10::Error& e) {
    throw data_error(std::string("corrupt checkpoint: ") + e.what_without_backtrace());
  }
}

namespace {

std::string format_meta(const Checkpoint& c) {
  using io::format_double;
  std::ostringstream out;
  out << "epoch " << c.epoch << "\n";
  out << "steps " << c.steps << "\n";
  for (const auto& m : c.history) {
    out << "history " << m.epoch << " " << format_double(m.learning_rate) << " " << format_double(m.train_loss) << " "
        << format_double(m.val_mean_error_mm) << " " << format_double(m.val_max_per_joint_mm) << "\n";
  }
  return out.str();
}

void parse_meta(Checkpoint& c, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string key;
    if (!(row >> key)) continue;
    bool ok = true;
    if (key == "epoch") {
      ok = static_cast<bool>(row >> c.epoch);
    } else if (key == "steps") {
      ok = static_cast<bool>(row >> c.steps);
    } else if (key == "history") {
      // strtod, unlike operator>>, accepts the "nan" written for runs without validation.
      EpochMetrics m;
      std::string lr, loss, mean, max;
      ok = static_cast<bool>(row >> m.epoch >> lr >> loss >> mean >> max);
      m.learning_rate = std::strtod(lr.c_str(), nullptr);
      m.train_loss = std::strtod(loss.c_str(), nullptr);
      m.val_mean_error_mm = std::strtod(mean.c_str(), nullptr);
      m.val_max_per_joint_mm = std::strtod(max.c_str(), nullptr);
      c.history.push_back(m);
    }
    if (!ok) throw data_error(origin + ": malformed line '" + line + "'");
  }
}

std::string bytes_to_string(const std::vector<unsigned char>& bytes) { return {bytes.begin(), bytes.end()}; }

std::span<const unsigned char> as_bytes(const std::string& s) {
  return {reinterpret_cast<const unsigned char*>(s.data()), s.size()};
}

}  // namespace

void Checkpoint::save(const fs::path& dir) const {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw runtime_error("cannot create " + dir.string() + ": " + ec.message());
  io::write_bytes(dir / "rpn.pt", as_bytes(rpn_state));
  if (!dpn_state.empty()) io::write_bytes(dir / "dpn.pt", as_bytes(dpn_state));
  if (!optimizer_state.empty()) io::write_bytes(dir / "optimizer.pt", as_bytes(optimizer_state));
  io::write_text(dir / "config.txt", format_config(config));
  io::write_text(dir / "meta.txt", format_meta(*this));
}

Checkpoint Checkpoint::load(const fs::path& dir, bool with_dpn, bool with_optimizer) {
  for (const char* required : {"rpn.pt", "config.txt"}) {
    if (!fs::exists(dir / required)) throw data_error("checkpoint " + dir.string() + " has no " + required);
  }
  Checkpoint c;
  c.config = parse_config(io::read_text(dir / "config.txt"), (dir / "config.txt").string());
  c.rpn_state = bytes_to_string(io::read_bytes(dir / "rpn.pt"));
  if (fs::exists(dir / "meta.txt")) parse_meta(c, io::read_text(dir / "meta.txt"), (dir / "meta.txt").string());
  if (with_dpn && fs::exists(dir / "dpn.pt")) c.dpn_state = bytes_to_string(io::read_bytes(dir / "dpn.pt"));
  if (with_optimizer && fs::exists(dir / "optimizer.pt")) {
    c.optimizer_state = bytes_to_string(io::read_bytes(dir / "optimizer.pt"));
  }
  return c;
}

fs::path resolve_checkpoint(const fs::path& path, const std::string& marker) {
  if (fs::exists(path / "rpn.pt")) return path;
  for (const fs::path& dir : {path / "checkpoints", path}) {
    if (!fs::exists(dir / marker)) continue;
    std::string name = io::read_text(dir / marker);
    while (!name.empty() && std::isspace(static_cast<unsigned char>(name.back()))) name.pop_back();
    const fs::path target = dir / name;
    if (!fs::exists(target / "rpn.pt")) throw data_error("checkpoint marker points at missing " + target.string());
    return target;
  }
  throw data_error("no checkpoint found at " + path.string());
}

Rpn load_rpn(const Checkpoint& checkpoint) {
  Rpn rpn(RpnOptions::scaled(checkpoint.config.view_count, checkpoint.config.width_scale));
  deserialize_module(*rpn, checkpoint.rpn_state);
  rpn->eval();
  return rpn;
}

Predictor::Predictor(const Checkpoint& checkpoint) : config_(checkpoint.config), rpn_(load_rpn(checkpoint)) {}

Predictor Predictor::load(const fs::path& path) { return Predictor(Checkpoint::load(resolve_checkpoint(path))); }

HandPose Predictor::infer(const SilhouetteStack& stack) { return infer(std::vector{&stack}).front(); }

std::vector<HandPose> Predictor::infer(const std::vector<const SilhouetteStack*>& stacks) {
  for (const auto* s : stacks) {
    if (s->view_count != config_.view_count) {
      throw usage_error("model expects " + std::to_string(config_.view_count) + " views, got " +
                        std::to_string(s->view_count));
    }
  }
  return predict(rpn_, stacks);
}

namespace {

Checkpoint snapshot(SilhouetteNet& net, torch::optim::Adam& optimizer, int epoch, std::int64_t steps,
                    const std::vector<EpochMetrics>& history) {
  Checkpoint c;
  c.config = net.config;
  c.epoch = epoch;
  c.steps = steps;
  c.history = history;
  c.rpn_state = serialize_module(*net.rpn);
  if (net.has_dpn()) c.dpn_state = serialize_module(*net.dpn);
  std::ostringstream opt;
  torch::save(optimizer, opt);
  c.optimizer_state = opt.str();
  return c;
}

std::string epoch_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d", epoch);
  return buf;
}

// Keeps the checkpoints named by the markers and removes the rest.
void prune_checkpoints(const fs::path& dir, const std::vector<std::string>& keep) {
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory()) continue;
    const auto name = entry.path().filename().string();
    if (name.rfind("epoch_", 0) != 0) continue;
    if (std::find(keep.begin(), keep.end(), name) != keep.end()) continue;
    std::error_code ec;
    fs::remove_all(entry.path(), ec);
  }
}

void set_learning_rate(torch::optim::Adam& optimizer, double lr) {
  for (auto& group : optimizer.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

}  // namespace

TrainResult train(const PreparedSplit& train_split, const PreparedSplit& val_split, const TrainConfig& config,
                  const TrainOptions& options) {
  if (auto bad = config.violations(); !bad.empty()) throw usage_error(bad.front());
  if (train_split.size() == 0) throw data_error("empty split: no training samples");
  if (config.gt_depth_supervision && train_split.depth_targets.size() != train_split.size()) {
    throw data_error("gt_depth_supervision is enabled but the training split has no depth targets");
  }
  for (const auto& s : train_split.samples) {
    if (s.silhouettes.view_count != config.view_count) {
      throw usage_error("training data has " + std::to_string(s.silhouettes.view_count) + " views, config expects " +
                        std::to_string(config.view_count));
    }
  }

  SilhouetteNet net(config);
  torch::optim::Adam optimizer(
      net.parameters(), torch::optim::AdamOptions(config.learning_rate).weight_decay(config.adam_weight_decay));
  const BatchSampler sampler(train_split.size(), static_cast<std::size_t>(config.batch_size),
                             derive_seed(static_cast<std::uint64_t>(config.seed), 1));

  std::ofstream step_log, epoch_log;
  fs::path ckpt_dir;
  if (options.out_dir) {
    ckpt_dir = *options.out_dir / "checkpoints";
    std::error_code ec;
    fs::create_directories(ckpt_dir, ec);
    if (ec) throw runtime_error("cannot create " + ckpt_dir.string() + ": " + ec.message());
    io::write_text(*options.out_dir / "config.txt", format_config(config));
    step_log.open(*options.out_dir / "train_log.csv");
    epoch_log.open(*options.out_dir / "epoch_log.csv");
    if (!step_log || !epoch_log) throw runtime_error("cannot open logs in " + options.out_dir->string());
    step_log << loss_csv_header();
    epoch_log << "epoch,learning_rate,train_loss,val_mean_error_mm,val_max_per_joint_error_mm\n";
  }

  TrainResult result;
  result.last = snapshot(net, optimizer, 0, 0, {});
  result.best = result.last;
  double best_error = std::numeric_limits<double>::infinity();
  std::string best_name, last_name;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = config.learning_rate * std::pow(config.lr_decay, epoch - 1);
    set_learning_rate(optimizer, lr);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    bool stop = false;
    for (const auto& batch : sampler.epoch(static_cast<std::uint64_t>(epoch))) {
      optimizer.zero_grad();
      auto step = training_step(net, train_split, batch);
      if (!std::isfinite(step.loss.total)) {
        result.diverged = true;
        break;
      }
      step.loss.total_tensor.backward();
      optimizer.step();
      ++result.steps;
      loss_sum += step.loss.total;
      ++loss_count;
      result.step_losses.push_back(step.loss.total);
      if (step_log.is_open()) step_log << loss_csv_row(result.steps, step.loss);
      if (options.on_step) options.on_step(result.steps, step.loss);
      if (config.max_steps > 0 && result.steps >= config.max_steps) {
        stop = true;
        break;
      }
    }
    if (result.diverged) {
      if (options.verbose) std::cerr << "epoch " << epoch << ": loss is not finite, stopping\n";
      break;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.learning_rate = lr;
    m.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    if (val_split.size() > 0) {
      const auto report = evaluate(predict(net.rpn, val_split), ground_truth(val_split));
      m.val_mean_error_mm = report.mean_error_mm;
      m.val_max_per_joint_mm = report.max_per_joint_error_mm;
    } else {
      m.val_mean_error_mm = std::numeric_limits<double>::quiet_NaN();
      m.val_max_per_joint_mm = std::numeric_limits<double>::quiet_NaN();
    }
    result.history.push_back(m);
    result.last = snapshot(net, optimizer, epoch, result.steps, result.history);
    // Without a validation split the latest epoch counts as the best.
    const bool improved = val_split.size() == 0 || m.val_mean_error_mm < best_error;
    if (improved) {
      if (val_split.size() > 0) best_error = m.val_mean_error_mm;
      result.best = result.last;
    }

    if (options.verbose) {
      std::cerr << "epoch " << epoch << " lr " << lr << " loss " << m.train_loss << " val_mean_mm "
                << m.val_mean_error_mm << " val_max_mm " << m.val_max_per_joint_mm << "\n";
    }
    if (options.out_dir) {
      epoch_log << epoch << "," << io::format_double(lr) << "," << io::format_double(m.train_loss) << ","
                << io::format_double(m.val_mean_error_mm) << "," << io::format_double(m.val_max_per_joint_mm)
                << "\n";
      epoch_log.flush();
      step_log.flush();
      last_name = epoch_name(epoch);
      result.last.save(ckpt_dir / last_name);
      io::write_text(ckpt_dir / "latest", last_name + "\n");
      if (improved) {
        best_name = last_name;
        io::write_text(ckpt_dir / "best", best_name + "\n");
      }
      prune_checkpoints(ckpt_dir, {best_name, last_name});
    }
    if (stop) break;
  }

  // A run that diverged before finishing an epoch still leaves a loadable
  // checkpoint: the initial parameters.
  if (options.out_dir && last_name.empty()) {
    last_name = epoch_name(0);
    result.last.save(ckpt_dir / last_name);
    io::write_text(ckpt_dir / "latest", last_name + "\n");
    io::write_text(ckpt_dir / "best", last_name + "\n");
  }
  return result;
}

TrainConfig AblationVariant::apply(TrainConfig base) const {
  base.dp_levels = dp_levels;
  base.include_fake_depth_in_guidance = include_fake_depth;
  base.gt_depth_supervision = gt_depth_supervision;
  return base;
}

std::vector<AblationVariant> ablation_variants() {
  return {
      {"baseline", "Baseline", DpLevels::none, true, true},
      {"baseline_hdp", "Baseline + HDP", DpLevels::hdp, true, true},
      {"baseline_fdp", "Baseline + FDP", DpLevels::fdp, true, true},
      {"silhouette_net", "Silhouette-Net", DpLevels::fdp, false, true},
      // Same configuration as the baseline row: with no pyramid guidance the
      // supervised fake depth is the only depth cue reaching the RPN.
      {"dp_off_gt_on", "DP off / GT on", DpLevels::none, true, true},
      {"dp_on_gt_off", "DP on / GT off", DpLevels::fdp, false, false},
  };
}

AblationRow run_variant(const AblationVariant& variant, const PreparedSplit& train_split,
                        const PreparedSplit& val_split, const PreparedSplit& test_split, const TrainConfig& base,
                        const TrainOptions& options) {
  AblationRow row;
  row.variant = variant;
  row.seed = base.seed;
  try {
    const auto result = train(train_split, val_split, variant.apply(base), options);
    if (result.diverged) {
      row.message = "diverged";
      return row;
    }
    auto rpn = load_rpn(result.best);
    const auto report = evaluate(predict(rpn, test_split), ground_truth(test_split));
    row.ok = true;
    row.mean_error_mm = report.mean_error_mm;
    row.max_per_joint_mm = report.max_per_joint_error_mm;
  } catch (const Error& e) {
    row.message = e.what();
  } catch (const c10::Error& e) {
    row.message = e.what_without_backtrace();
  }
  return row;
}

std::vector<AblationRow> run_ablation_grid(const PreparedSplit& train_split, const PreparedSplit& val_split,
                                           const PreparedSplit& test_split, const TrainConfig& base,
                                           const std::function<void(const AblationRow&)>& on_row) {
  std::vector<AblationRow> rows;
  for (const auto& variant : ablation_variants()) {
    // Rows sharing a configuration share one (deterministic) run.
    const auto same = std::find_if(rows.begin(), rows.end(), [&](const AblationRow& r) {
      return r.variant.dp_levels == variant.dp_levels && r.variant.include_fake_depth == variant.include_fake_depth &&
             r.variant.gt_depth_supervision == variant.gt_depth_supervision;
    });
    if (same != rows.end()) {
      AblationRow copy = *same;
      copy.variant = variant;
      rows.push_back(copy);
    } else {
      rows.push_back(run_variant(variant, train_split, val_split, test_split, base));
    }
    if (on_row) on_row(rows.back());
  }
  return rows;
}

std::string format_ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "variant,seed,status,mean_error_mm,max_per_joint_error_mm,message\n";
  for (const auto& r : rows) {
    std::string message = r.message;
    std::replace(message.begin(), message.end(), ',', ';');
    std::replace(message.begin(), message.end(), '\n', ' ');
    out << r.variant.key << "," << r.seed << "," << (r.ok ? "ok" : "failed") << ","
        << (r.ok ? io::format_double(r.mean_error_mm) : "") << ","
        << (r.ok ? io::format_double(r.max_per_joint_mm) : "") << "," << message << "\n";
  }
  return out.str();
}

}  // namespace silnet
