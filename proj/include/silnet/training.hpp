#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "silnet/dpn.hpp"
#include "silnet/evaluation.hpp"
#include "silnet/losses.hpp"
#include "silnet/preprocessing.hpp"
#include "silnet/rpn.hpp"
#include "silnet/types.hpp"

namespace silnet {

/// Samples of one split converted for training: silhouettes restricted to
/// the configured views and, when depth is present, the depth targets.
struct PreparedSplit {
  std::vector<Sample> samples;
  std::vector<DepthTarget> depth_targets;  // empty when the split has no depth

  std::size_t size() const { return samples.size(); }
};

/// Keeps the first `view_count` views (the frontal view first).
SilhouetteStack select_views(const SilhouetteStack& stack, int view_count);

PreparedSplit prepare_split(std::vector<Sample> samples, int view_count, bool with_depth_targets);

/// Loads one split of a dataset directory sample by sample, converting the
/// depth frames to targets as it goes so the frames are never all resident.
PreparedSplit load_prepared_split(const std::filesystem::path& root, const std::string& split, int view_count,
                                  bool with_depth_targets, bool verify_checksums = true);

/// DPN and RPN built from one configuration. The DPN exists only when the
/// configuration gives it a loss to train on.
struct SilhouetteNet {
  explicit SilhouetteNet(const TrainConfig& config);

  TrainConfig config;
  Rpn rpn{nullptr};
  Dpn dpn{nullptr};

  bool has_dpn() const { return !dpn.is_empty(); }
  std::vector<torch::Tensor> parameters() const;
};

/// Whether a configuration needs the DPN during training.
bool dpn_active(const TrainConfig& config);

struct StepResult {
  LossReport loss;
  RpnOutput rpn;
  std::optional<DpnOutput> dpn;
  torch::Tensor guidance;
};

/// Forward pass of one training batch and the combined loss.
StepResult training_step(SilhouetteNet& net, const PreparedSplit& split, const std::vector<std::size_t>& batch);

/// RPN-only prediction in evaluation mode.
std::vector<HandPose> predict(Rpn& rpn, const std::vector<const SilhouetteStack*>& stacks, int batch_size = 32);
std::vector<HandPose> predict(Rpn& rpn, const PreparedSplit& split, int batch_size = 32);
std::vector<HandPose> ground_truth(const PreparedSplit& split);

struct EpochMetrics {
  int epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double val_mean_error_mm = 0.0;
  double val_max_per_joint_mm = 0.0;
};

/// Serialized training state.
struct Checkpoint {
  TrainConfig config;
  int epoch = 0;
  std::int64_t steps = 0;
  std::vector<EpochMetrics> history;
  std::string rpn_state;
  std::string dpn_state;  // empty when the run had no DPN
  std::string optimizer_state;

  double val_mean_error_mm() const { return history.empty() ? 0.0 : history.back().val_mean_error_mm; }

  void save(const std::filesystem::path& dir) const;
  /// Loads everything except the DPN parameters, which inference never needs.
  static Checkpoint load(const std::filesystem::path& dir, bool with_dpn = false, bool with_optimizer = false);
};

/// Resolves a run directory (following its `best` marker), a checkpoints
/// directory or a checkpoint directory itself.
std::filesystem::path resolve_checkpoint(const std::filesystem::path& path, const std::string& marker = "best");

std::string serialize_module(torch::nn::Module& module);
void deserialize_module(torch::nn::Module& module, const std::string& bytes);

/// Restores an RPN from a checkpoint.
Rpn load_rpn(const Checkpoint& checkpoint);

/// Inference front end: RPN parameters and the view count only.
class Predictor {
 public:
  explicit Predictor(const Checkpoint& checkpoint);
  static Predictor load(const std::filesystem::path& path);

  int view_count() const { return config_.view_count; }
  const TrainConfig& config() const { return config_; }
  HandPose infer(const SilhouetteStack& stack);
  std::vector<HandPose> infer(const std::vector<const SilhouetteStack*>& stacks);

 private:
  TrainConfig config_;
  Rpn rpn_{nullptr};
};

struct TrainOptions {
  // Logs and checkpoints go here when set.
  std::optional<std::filesystem::path> out_dir;
  // Receives (step, loss) after every optimizer step.
  std::function<void(std::int64_t, const LossReport&)> on_step;
  bool verbose = false;
};

struct TrainResult {
  Checkpoint best;
  Checkpoint last;
  std::vector<double> step_losses;
  std::vector<EpochMetrics> history;
  std::int64_t steps = 0;
  bool diverged = false;
};

/// Joint optimization of DPN and RPN with Adam. The learning rate is
/// multiplied by lr_decay after every epoch; the checkpoint with the best
/// validation mean error is retained. A non-finite loss stops training and
/// the result carries the last finite checkpoint.
TrainResult train(const PreparedSplit& train_split, const PreparedSplit& val_split, const TrainConfig& config,
                  const TrainOptions& options = {});

/// One ablation configuration.
struct AblationVariant {
  std::string key;
  std::string table;
  DpLevels dp_levels = DpLevels::fdp;
  bool include_fake_depth = false;
  bool gt_depth_supervision = true;

  TrainConfig apply(TrainConfig base) const;
};

/// The four depth-perception rows and the two additional supervision rows.
/// "DP off / GT on" has the baseline's configuration.
std::vector<AblationVariant> ablation_variants();

struct AblationRow {
  AblationVariant variant;
  std::int64_t seed = 0;
  bool ok = false;
  std::string message;
  double mean_error_mm = 0.0;
  double max_per_joint_mm = 0.0;
};

/// Trains and evaluates one variant on the test split.
AblationRow run_variant(const AblationVariant& variant, const PreparedSplit& train_split,
                        const PreparedSplit& val_split, const PreparedSplit& test_split, const TrainConfig& base,
                        const TrainOptions& options = {});

/// Runs every variant; failures are recorded and the grid continues.
std::vector<AblationRow> run_ablation_grid(const PreparedSplit& train_split, const PreparedSplit& val_split,
                                           const PreparedSplit& test_split, const TrainConfig& base,
                                           const std::function<void(const AblationRow&)>& on_row = {});

std::string format_ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace silnet
