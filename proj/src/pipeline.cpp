#include "gleason/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "gleason/checkpoint.hpp"
#include "gleason/random.hpp"
#include "gleason/tiling.hpp"

namespace gleason {

namespace fs = std::filesystem;

// ---- configuration

void TrainConfig::validate() const {
  weights.validate();
  optimizer.validate();
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (validate_every < 1) throw std::invalid_argument("train config: validate_every must be >= 1");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"optimizer", c.optimizer},
       {"seed", c.seed},
       {"manifest_path", c.manifest_path.string()},
       {"checkpoint_dir", c.checkpoint_dir.string()},
       {"validate_every", c.validate_every}};
}

std::int64_t PipelineConfig::effective_threshold() const {
  if (presence_threshold) return *presence_threshold;
  return postprocess_enabled ? kPresenceThresholdWithPostprocess : kPresenceThresholdRaw;
}

void PipelineConfig::set_seed(std::uint64_t seed) {
  model.seed = seed;
  train.seed = seed;
}

void PipelineConfig::validate() const {
  data.validate();
  model.validate();
  train.validate();
  postprocess.validate();
  if (presence_threshold && *presence_threshold < 1)
    throw std::invalid_argument("postprocess config: presence_threshold must be >= 1");
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  nlohmann::json loss = c.train.weights;
  loss["selector"] = to_string(c.train.loss);
  nlohmann::json post = c.postprocess;
  post["enabled"] = c.postprocess_enabled;
  if (c.presence_threshold) post["presence_threshold"] = *c.presence_threshold;
  j = {{"data", c.data}, {"model", c.model}, {"loss", loss}, {"train", c.train}, {"postprocess", post}};
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  static const std::set<std::string> sections{"data", "model", "loss", "train", "postprocess"};
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  for (const auto& [key, value] : j.items())
    if (!sections.count(key)) throw std::invalid_argument("config: unknown section '" + key + "'");
  PipelineConfig d;
  c = d;
  if (j.contains("data")) c.data = j.at("data").get<SynthConfig>();
  if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    c.train.weights = l.get<LossWeights>();
    if (l.contains("selector")) c.train.loss = loss_kind_from_name(l.at("selector").get<std::string>());
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    c.train.batch_size = t.value("batch_size", d.train.batch_size);
    c.train.epochs = t.value("epochs", d.train.epochs);
    if (t.contains("optimizer")) c.train.optimizer = t.at("optimizer").get<AdadeltaSettings>();
    c.train.seed = t.value("seed", d.train.seed);
    c.train.manifest_path = t.value("manifest_path", d.train.manifest_path.string());
    c.train.checkpoint_dir = t.value("checkpoint_dir", d.train.checkpoint_dir.string());
    c.train.validate_every = t.value("validate_every", d.train.validate_every);
  }
  if (j.contains("postprocess")) {
    const auto& p = j.at("postprocess");
    c.postprocess = p.get<MorphologyConfig>();
    c.postprocess_enabled = p.value("enabled", true);
    if (p.contains("presence_threshold")) c.presence_threshold = p.at("presence_threshold").get<std::int64_t>();
  }
  c.validate();
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config " + path.string() + ": cannot open");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return j.get<PipelineConfig>();
}

// ---- data

std::vector<LabeledPatch> load_patches(const DatasetManifest& manifest, Split split, int num_classes) {
  std::vector<LabeledPatch> out;
  for (const ManifestEntry* e : manifest.select(split)) {
    LabeledPatch p;
    p.entry = e;
    p.image = image_to_features<float>(load_entry_image(*e));
    p.mask = load_entry_mask(*e);
    if (p.mask.rows() != p.image.height || p.mask.cols() != p.image.width)
      throw std::invalid_argument("manifest entry " + e->patch_path.string() + ": mask and patch sizes differ");
    p.truth = one_hot<float>(p.mask, num_classes);
    out.push_back(std::move(p));
  }
  return out;
}

// ---- training

ClassMask predict_mask(const SegmentationModel<float>& model, const nn::FeatureMap<float>& image,
                       const MorphologyConfig* postprocess) {
  ClassMask mask = argmax_mask(model.forward(image));
  return postprocess ? postprocess_pipeline(mask, *postprocess) : mask;
}

ConfusionAccumulator confusion_on(const SegmentationModel<float>& model, const std::vector<LabeledPatch>& patches,
                                  const MorphologyConfig* postprocess) {
  ConfusionAccumulator acc(model.config().num_classes);
  for (const auto& p : patches) acc.accumulate(predict_mask(model, p.image, postprocess), p.mask);
  return acc;
}

namespace {

void check_patch_size(const ModelConfig& cfg, const std::vector<LabeledPatch>& patches) {
  for (const auto& p : patches)
    if (p.image.height != cfg.patch_size || p.image.width != cfg.patch_size)
      throw std::invalid_argument("model patch_size is " + std::to_string(cfg.patch_size) + " but patch " +
                                  (p.entry ? p.entry->patch_path.string() : std::string("<memory>")) + " is " +
                                  std::to_string(p.image.width) + "x" + std::to_string(p.image.height));
}

double mean_dice_or_zero(const ConfusionAccumulator& acc) {
  try {
    return mean_dice(acc);
  } catch (const std::domain_error&) {
    return 0.0;
  }
}

}  // namespace

TrainResult train(const TrainConfig& cfg, SegmentationModel<float>& model, const std::vector<LabeledPatch>& train_set,
                  const std::vector<LabeledPatch>& validation_set, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: the training split is empty");
  check_patch_size(model.config(), train_set);
  check_patch_size(model.config(), validation_set);

  TrainResult result;
  result.validated_on_train = validation_set.empty();
  const auto& selection_set = validation_set.empty() ? train_set : validation_set;
  std::error_code ec;
  fs::create_directories(cfg.checkpoint_dir, ec);
  if (ec || !fs::is_directory(cfg.checkpoint_dir))
    throw std::runtime_error("train: cannot create checkpoint dir " + cfg.checkpoint_dir.string());
  result.best_checkpoint = cfg.checkpoint_dir / "best.ckpt";
  result.final_checkpoint = cfg.checkpoint_dir / "final.ckpt";
  result.log_path = cfg.checkpoint_dir / "train_log.jsonl";
  std::ofstream log(result.log_path, std::ios::trunc);
  if (!log) throw std::runtime_error("train: cannot write " + result.log_path.string());

  Adadelta<float> optimizer(cfg.optimizer);
  const auto params = model.parameters();
  SplitMix64 rng(cfg.seed ^ 0x5EEDF00DULL);
  std::vector<std::size_t> order(train_set.size());
  bool have_best = false;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + std::size_t(cfg.batch_size));
      const float scale = 1.0f / float(end - start);
      model.zero_grad();
      for (std::size_t b = start; b < end; ++b) {
        const auto& ex = train_set[order[b]];
        loss_sum += accumulate_example_gradient(model, ex.image, ex.truth, cfg.loss, cfg.weights, scale);
      }
      optimizer.step(params);
    }

    EpochLog entry{epoch, loss_sum / double(order.size()), std::nullopt};
    if (epoch % cfg.validate_every == 0 || epoch == cfg.epochs) {
      entry.validation_mean_dice = mean_dice_or_zero(confusion_on(model, selection_set));
      if (!have_best || *entry.validation_mean_dice > result.best_validation_dice) {
        have_best = true;
        result.best_validation_dice = *entry.validation_mean_dice;
        result.best_epoch = epoch;
        save_checkpoint(model, result.best_checkpoint);
      }
    }
    nlohmann::json line{{"epoch", epoch}, {"train_loss", entry.train_loss}};
    line["validation_mean_dice"] =
        entry.validation_mean_dice ? nlohmann::json(*entry.validation_mean_dice) : nlohmann::json();
    log << line.dump() << '\n' << std::flush;
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  save_checkpoint(model, result.final_checkpoint);
  return result;
}

TrainResult train(const TrainConfig& cfg, const ModelConfig& model_cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  const DatasetManifest manifest = load_manifest(cfg.manifest_path);
  const auto train_set = load_patches(manifest, Split::Train, model_cfg.num_classes);
  const auto validation_set = load_patches(manifest, Split::Validation, model_cfg.num_classes);
  SegmentationModel<float> model(model_cfg);
  return train(cfg, model, train_set, validation_set, on_epoch);
}

// ---- evaluation

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::string grade_label(GradeGroup g) { return g == GradeGroup::Background ? "benign" : to_string(g); }

}  // namespace

EvaluationReport evaluate(const SegmentationModel<float>& model, const DatasetManifest& manifest, Split split,
                          const EvaluationOptions& options) {
  const auto entries = manifest.select(split);
  if (entries.empty()) throw std::invalid_argument("evaluate: split '" + to_string(split) + "' is empty");
  options.morphology.validate();
  const std::int64_t threshold = options.presence_threshold.value_or(
      options.postprocess ? kPresenceThresholdWithPostprocess : kPresenceThresholdRaw);

  EvaluationReport report;
  report.split = split;
  report.confusion = ConfusionAccumulator(model.config().num_classes);
  std::map<std::string, std::vector<ClassMask>> predicted_by_scan;
  const MorphologyConfig* morph = options.postprocess ? &options.morphology : nullptr;
  for (const ManifestEntry* e : entries) {
    const auto image = image_to_features<float>(load_entry_image(*e));
    const ClassMask truth = load_entry_mask(*e);
    if (image.height != model.config().patch_size || image.width != model.config().patch_size)
      throw std::invalid_argument("evaluate: patch " + e->patch_path.string() + " does not match the model patch size");
    ClassMask pred = predict_mask(model, image, morph);
    report.confusion.accumulate(pred, truth);
    predicted_by_scan[e->scan_id].push_back(std::move(pred));
  }
  for (int c = 1; c < report.confusion.num_classes(); ++c)
    if (report.confusion.matrix().row(c).sum() > 0) report.grades_in_split.push_back(static_cast<GradeGroup>(c));

  std::map<std::string, GradeGroup> predicted;
  for (auto& [scan, masks] : predicted_by_scan) {
    report.grading.push_back(grade_scan(masks, threshold, scan));
    predicted[scan] = report.grading.back().assigned_grade;
    report.truth_grades[scan] = manifest.scan_grade(scan);
  }
  report.tally = evaluate_grading(predicted, report.truth_grades);
  return report;
}

nlohmann::json EvaluationReport::to_json() const {
  const auto iou = iou_per_class(confusion);
  const auto dice = dice_per_class(confusion);
  nlohmann::json per_grade = nlohmann::json::array();
  for (GradeGroup g : grades_in_split) {
    const auto c = static_cast<std::size_t>(class_index(g));
    per_grade.push_back({{"grade", to_string(g)}, {"iou", opt(iou[c])}, {"dice", opt(dice[c])}});
  }
  nlohmann::json j{{"split", to_string(split)},
                   {"per_grade", per_grade},
                   {"background", {{"iou", opt(iou[0])}, {"dice", opt(dice[0])}}},
                   {"pixel_total", confusion.pixel_total()}};
  try {
    j["mean_iou"] = mean_iou(confusion);
    j["mean_dice"] = mean_dice(confusion);
  } catch (const std::domain_error&) {
    j["mean_iou"] = nullptr;
    j["mean_dice"] = nullptr;
  }
  nlohmann::json scans = nlohmann::json::array();
  for (const auto& r : grading) {
    nlohmann::json s = gleason::to_json(r);
    s["true_grade"] = grade_label(truth_grades.at(r.scan_id));
    scans.push_back(s);
  }
  j["scans"] = scans;
  j["classification"] = classification_report_json(tally);
  return j;
}

std::string EvaluationReport::to_text() const {
  const auto iou = iou_per_class(confusion);
  const auto dice = dice_per_class(confusion);
  std::vector<std::string> cols;
  std::vector<std::optional<double>> iou_row, dice_row;
  for (GradeGroup g : grades_in_split) {
    cols.push_back(to_string(g));
    iou_row.push_back(iou[std::size_t(class_index(g))]);
    dice_row.push_back(dice[std::size_t(class_index(g))]);
  }
  std::ostringstream os;
  os << "Segmentation (" << to_string(split) << ", " << confusion.pixel_total() << " pixels)\n";
  os << format_table(cols, {{"IoU", iou_row}, {"DC", dice_row}});
  try {
    os << std::fixed << std::setprecision(4) << "Mean IoU " << mean_iou(confusion) << "  Mean DC "
       << mean_dice(confusion) << "\n";
  } catch (const std::domain_error&) {
    os << "Mean IoU -  Mean DC -\n";
  }
  os << "\nScan grading\n";
  std::size_t id_w = 8;
  for (const auto& r : grading) id_w = std::max(id_w, r.scan_id.size() + 2);
  os << std::left << std::setw(int(id_w)) << "scan" << std::setw(10) << "predicted" << "truth\n";
  for (const auto& r : grading)
    os << std::left << std::setw(int(id_w)) << r.scan_id << std::setw(10) << grade_label(r.assigned_grade)
       << grade_label(truth_grades.at(r.scan_id)) << "\n";
  os << "\n" << classification_report_text(tally);
  return os.str();
}

// ---- inference

namespace {

bool all_white(const RgbImage& image) { return (image.storage() == std::uint8_t(255)).all(); }

}  // namespace

InferenceResult infer_scan(const SegmentationModel<float>& model, const RgbImage& scan,
                           const EvaluationOptions& options, const std::string& scan_id) {
  if (scan.empty()) throw std::invalid_argument("infer_scan: empty image");
  options.morphology.validate();
  const Index ps = model.config().patch_size;
  const GridPlan plan = plan_grid(scan.width(), scan.height(), ps);
  const auto patches = extract_patches(scan, plan, scan_id);
  const MorphologyConfig* morph = options.postprocess ? &options.morphology : nullptr;
  std::vector<ClassMask> masks;
  masks.reserve(patches.size());
  for (const auto& p : patches) {
    if (all_white(p.pixels))
      masks.push_back(ClassMask::Zero(ps, ps));
    else
      masks.push_back(predict_mask(model, image_to_features<float>(p.pixels), morph));
  }
  InferenceResult out;
  out.mask = stitch(masks, plan);
  const std::int64_t threshold = options.presence_threshold.value_or(
      options.postprocess ? kPresenceThresholdWithPostprocess : kPresenceThresholdRaw);
  // Grade the cropped mask so padding never contributes pixels.
  out.report = grade_scan({out.mask}, threshold, scan_id);
  return out;
}

// ---- ablation

std::vector<double> AblationResult::median_iou() const {
  std::vector<double> out;
  for (std::size_t l = 0; l < losses.size(); ++l) {
    std::vector<double> v;
    for (const auto& row : mean_iou) v.push_back(row[l]);
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    out.push_back(n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]));
  }
  return out;
}

nlohmann::json AblationResult::to_json() const {
  std::vector<std::string> names;
  for (LossKind k : losses) names.push_back(to_string(k));
  return {{"losses", names},
          {"seeds", seeds},
          {"evaluated_on", to_string(evaluated_on)},
          {"mean_iou", mean_iou},
          {"median_mean_iou", median_iou()}};
}

std::string AblationResult::to_text() const {
  std::vector<std::string> cols;
  for (LossKind k : losses) cols.push_back(to_string(k));
  std::vector<std::pair<std::string, std::vector<std::optional<double>>>> rows;
  for (std::size_t s = 0; s < seeds.size(); ++s)
    rows.push_back({"Mean IoU (seed " + std::to_string(seeds[s]) + ")", {mean_iou[s].begin(), mean_iou[s].end()}});
  if (seeds.size() > 1) {
    const auto med = median_iou();
    rows.push_back({"Mean IoU (median)", {med.begin(), med.end()}});
  }
  return format_table(cols, rows);
}

AblationResult run_loss_ablation(const PipelineConfig& base, const std::vector<LossKind>& losses,
                                 const std::vector<std::uint64_t>& seeds,
                                 const std::function<void(const std::string&)>& progress) {
  if (losses.size() < 2) throw std::invalid_argument("ablation: at least two loss selectors are required");
  if (seeds.empty()) throw std::invalid_argument("ablation: at least one seed is required");
  base.validate();
  const DatasetManifest manifest = load_manifest(base.train.manifest_path);
  const auto train_set = load_patches(manifest, Split::Train, base.model.num_classes);
  const auto validation_set = load_patches(manifest, Split::Validation, base.model.num_classes);
  AblationResult result;
  result.losses = losses;
  result.seeds = seeds;
  auto eval_set = load_patches(manifest, Split::Test, base.model.num_classes);
  if (eval_set.empty()) {
    eval_set = validation_set;
    result.evaluated_on = Split::Validation;
  }
  if (eval_set.empty()) throw std::invalid_argument("ablation: manifest has neither test nor validation scans");

  for (std::uint64_t seed : seeds) {
    std::vector<double> row;
    for (LossKind kind : losses) {
      PipelineConfig cfg = base;
      cfg.set_seed(seed);
      cfg.train.loss = kind;
      cfg.train.checkpoint_dir = base.train.checkpoint_dir / ("seed" + std::to_string(seed)) / to_string(kind);
      SegmentationModel<float> model(cfg.model);
      const TrainResult tr = train(cfg.train, model, train_set, validation_set);
      const auto best = load_checkpoint<float>(tr.best_checkpoint, cfg.model);
      double miou = 0;
      try {
        miou = mean_iou(confusion_on(best, eval_set));
      } catch (const std::domain_error&) {
      }
      row.push_back(miou);
      if (progress)
        progress("seed " + std::to_string(seed) + " " + to_string(kind) + " mean IoU " + std::to_string(miou) +
                 " (best epoch " + std::to_string(tr.best_epoch) + ")");
    }
    result.mean_iou.push_back(row);
  }
  return result;
}

}  // namespace gleason
