#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gleason/grading.hpp"
#include "gleason/metrics.hpp"
#include "gleason/model.hpp"
#include "gleason/optimizer.hpp"
#include "gleason/postprocess.hpp"
#include "gleason/synth.hpp"

namespace gleason {

struct TrainConfig {
  LossKind loss = LossKind::Hybrid;
  LossWeights weights;
  int batch_size = 8;
  int epochs = 200;
  AdadeltaSettings optimizer;
  std::uint64_t seed = 7;
  std::filesystem::path manifest_path;
  std::filesystem::path checkpoint_dir = "checkpoints";
  int validate_every = 1;  // epochs between validation passes; the last epoch is always validated

  void validate() const;
};

/// Every knob of a run, read from one JSON file with the sections
/// {data, model, loss, train, postprocess}.
struct PipelineConfig {
  SynthConfig data;
  ModelConfig model;
  TrainConfig train;  // train.loss / train.weights come from the "loss" section
  MorphologyConfig postprocess;
  bool postprocess_enabled = true;
  std::optional<std::int64_t> presence_threshold;  // default depends on postprocess_enabled

  std::int64_t effective_threshold() const;
  /// Overrides the model init seed and the training shuffle seed.
  void set_seed(std::uint64_t seed);
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// A decoded manifest patch ready for the network.
struct LabeledPatch {
  const ManifestEntry* entry = nullptr;
  nn::FeatureMap<float> image;
  ClassMask mask;
  nn::Matrix<float> truth;  // one-hot
};

std::vector<LabeledPatch> load_patches(const DatasetManifest& manifest, Split split, int num_classes = kNumClasses);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;
  std::optional<double> validation_mean_dice;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::filesystem::path best_checkpoint, final_checkpoint, log_path;
  int best_epoch = 0;
  double best_validation_dice = 0;
  bool validated_on_train = false;  // no validation scans: selection used the training split
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains from scratch on the manifest's training split. Writes best.ckpt,
/// final.ckpt and train_log.jsonl to cfg.checkpoint_dir.
TrainResult train(const TrainConfig& cfg, const ModelConfig& model_cfg, const EpochCallback& on_epoch = {});
/// Same, on already decoded data (validation may be empty).
TrainResult train(const TrainConfig& cfg, SegmentationModel<float>& model, const std::vector<LabeledPatch>& train_set,
                  const std::vector<LabeledPatch>& validation_set, const EpochCallback& on_epoch = {});

/// Argmax class mask of one patch, optionally cleaned up.
ClassMask predict_mask(const SegmentationModel<float>& model, const nn::FeatureMap<float>& image,
                       const MorphologyConfig* postprocess = nullptr);

/// Confusion over a patch set (raw predictions unless `postprocess` is set).
ConfusionAccumulator confusion_on(const SegmentationModel<float>& model, const std::vector<LabeledPatch>& patches,
                                  const MorphologyConfig* postprocess = nullptr);

struct EvaluationOptions {
  bool postprocess = true;
  MorphologyConfig morphology;
  std::optional<std::int64_t> presence_threshold;
};

struct EvaluationReport {
  Split split = Split::Test;
  ConfusionAccumulator confusion;
  std::vector<GradeGroup> grades_in_split;  // tumor grades occurring in the truth masks
  std::vector<GradingReport> grading;       // one per scan, predicted
  std::map<std::string, GradeGroup> truth_grades;
  ClassificationTally tally;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

EvaluationReport evaluate(const SegmentationModel<float>& model, const DatasetManifest& manifest, Split split,
                          const EvaluationOptions& options = {});

struct InferenceResult {
  ClassMask mask;  // scan-sized
  GradingReport report;
};

/// Tile -> forward -> argmax -> optional morphology -> stitch -> grade.
/// Patches that are entirely white slide background are labeled Background
/// without running the network.
InferenceResult infer_scan(const SegmentationModel<float>& model, const RgbImage& scan,
                           const EvaluationOptions& options = {}, const std::string& scan_id = {});

struct AblationResult {
  std::vector<LossKind> losses;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<double>> mean_iou;  // [seed][loss]
  Split evaluated_on = Split::Test;

  std::vector<double> median_iou() const;
  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// Trains one model per (seed, loss) on the same data and reports the mean
/// IoU on the test split (validation split if there is no test split).
AblationResult run_loss_ablation(const PipelineConfig& base, const std::vector<LossKind>& losses,
                                 const std::vector<std::uint64_t>& seeds,
                                 const std::function<void(const std::string&)>& progress = {});

}  // namespace gleason
