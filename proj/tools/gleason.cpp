// gleason: command-line front end for synthesis, training, evaluation,
// inference, grading, ablation and mask overlays.

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gleason/checkpoint.hpp"
#include "gleason/pipeline.hpp"

namespace fs = std::filesystem;
using namespace gleason;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int fail(const std::string& type, const std::string& message, int code = 1) {
  std::cerr << nlohmann::json{{"error", {{"type", type}, {"message", message}}}}.dump() << std::endl;
  return code;
}

PipelineConfig pipeline_config(const Globals& g) {
  PipelineConfig cfg = g.config_path.empty() ? PipelineConfig{} : load_pipeline_config(g.config_path);
  if (g.seed) cfg.set_seed(*g.seed);
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

fs::path out_dir(const Globals& g, const std::string& fallback) {
  fs::path dir = g.out.empty() ? fs::path(fallback) : fs::path(g.out);
  fs::create_directories(dir);
  return dir;
}

std::vector<LossKind> parse_losses(const std::string& list) {
  std::vector<LossKind> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(loss_kind_from_name(item));
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(std::stoull(item));
  return out;
}

std::string error_type(const std::exception& e) {
  if (dynamic_cast<const UnregisteredColorError*>(&e)) return "unregistered_color";
  if (dynamic_cast<const ManifestError*>(&e)) return "manifest_error";
  if (dynamic_cast<const std::invalid_argument*>(&e)) return "invalid_argument";
  if (dynamic_cast<const std::out_of_range*>(&e)) return "out_of_range";
  if (dynamic_cast<const std::domain_error*>(&e)) return "domain_error";
  if (dynamic_cast<const nlohmann::json::exception*>(&e)) return "config_error";
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return "io_error";
  return "runtime_error";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gleason pattern segmentation and grade-group scan grading"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON config with sections data, model, loss, train, postprocess")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed for model init and shuffling (synth: texture seed)");
  app.add_option("--out", g.out, "Output directory (overlay: output file)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic patch/mask dataset with a manifest");

  // tile
  auto* tile = app.add_subcommand("tile", "Split a scan image into fixed-size patches");
  std::string tile_image, tile_id;
  Index tile_size = 0;
  tile->add_option("--image", tile_image, "Scan image (PNG)")->required()->check(CLI::ExistingFile);
  tile->add_option("--scan-id", tile_id, "Scan id used in patch names (default: file stem)");
  tile->add_option("--patch-size", tile_size, "Patch edge in pixels (default: model.patch_size)");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a segmentation model on a manifest");
  std::string train_manifest, train_loss;
  std::optional<int> train_epochs;
  train_cmd->add_option("--manifest", train_manifest, "Dataset manifest (overrides train.manifest_path)");
  train_cmd->add_option("--loss", train_loss, "L_c | L_d | L_ft | L_h");
  train_cmd->add_option("--epochs", train_epochs, "Override train.epochs");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Segmentation and grading metrics on a manifest split");
  std::string eval_ckpt, eval_manifest, eval_split = "test";
  bool no_post = false;
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--manifest", eval_manifest, "Dataset manifest (default: train.manifest_path)");
  eval_cmd->add_option("--split", eval_split, "train | val | test");
  eval_cmd->add_flag("--no-postprocess", no_post, "Skip morphological cleanup");

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "Segment and grade a whole scan image");
  std::string infer_ckpt, infer_image;
  infer_cmd->add_option("--checkpoint", infer_ckpt)->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--image", infer_image, "Scan image (PNG)")->required()->check(CLI::ExistingFile);
  infer_cmd->add_flag("--no-postprocess", no_post, "Skip morphological cleanup");

  // grade
  auto* grade_cmd = app.add_subcommand("grade", "Assign a scan grade from colored mask patches");
  std::vector<std::string> grade_masks;
  std::optional<std::int64_t> grade_threshold;
  std::string grade_id;
  grade_cmd->add_option("--mask", grade_masks, "Mask PNG(s) of one scan")->required()->check(CLI::ExistingFile);
  grade_cmd->add_option("--threshold", grade_threshold, "Presence threshold in pixels");
  grade_cmd->add_option("--scan-id", grade_id, "Scan id for the report");
  grade_cmd->add_flag("--no-postprocess", no_post, "Masks are raw predictions (raises the default threshold)");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Compare loss functions by test mean IoU");
  std::string ablate_losses = "L_c,L_d,L_ft,L_h", ablate_seeds, ablate_manifest;
  ablate_cmd->add_option("--losses", ablate_losses, "Comma-separated selectors");
  ablate_cmd->add_option("--seeds", ablate_seeds, "Comma-separated seeds (default: --seed or train.seed)");
  ablate_cmd->add_option("--manifest", ablate_manifest, "Dataset manifest (default: train.manifest_path)");

  // overlay
  auto* overlay_cmd = app.add_subcommand("overlay", "Blend mask colors over an image");
  std::string ov_image, ov_mask;
  double ov_opacity = 0.5;
  overlay_cmd->add_option("--image", ov_image)->required()->check(CLI::ExistingFile);
  overlay_cmd->add_option("--mask", ov_mask)->required()->check(CLI::ExistingFile);
  overlay_cmd->add_option("--opacity", ov_opacity)->check(CLI::Range(0.0, 1.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    PipelineConfig cfg = pipeline_config(g);

    if (*synth) {
      if (g.seed) cfg.data.texture_seed = *g.seed;
      const fs::path dir = out_dir(g, "data");
      const DatasetManifest m = generate_dataset(cfg.data, dir);
      nlohmann::json summary{{"manifest", (dir / "manifest.jsonl").string()}, {"patches", m.entries.size()}};
      for (Split s : {Split::Train, Split::Validation, Split::Test}) summary[to_string(s) + "_scans"] = m.scan_ids(s);
      std::cout << summary.dump(2) << std::endl;
    } else if (*tile) {
      const RgbImage image = read_png(tile_image);
      const Index size = tile_size > 0 ? tile_size : cfg.model.patch_size;
      const std::string id = tile_id.empty() ? fs::path(tile_image).stem().string() : tile_id;
      const GridPlan plan = plan_grid(image.width(), image.height(), size);
      const fs::path dir = out_dir(g, "tiles");
      for (const auto& p : extract_patches(image, plan, id)) write_png(dir / patch_file_name(id, p.row, p.col), p.pixels);
      write_text(dir / (id + "_grid.json"), nlohmann::json(plan).dump(2) + "\n");
      std::cout << nlohmann::json{{"scan_id", id}, {"grid", plan}, {"out", dir.string()}}.dump(2) << std::endl;
    } else if (*train_cmd) {
      if (!train_manifest.empty()) cfg.train.manifest_path = train_manifest;
      if (!train_loss.empty()) cfg.train.loss = loss_kind_from_name(train_loss);
      if (train_epochs) cfg.train.epochs = *train_epochs;
      if (!g.out.empty()) cfg.train.checkpoint_dir = g.out;
      if (cfg.train.manifest_path.empty()) throw std::invalid_argument("train: no manifest (use --manifest)");
      const auto t0 = std::chrono::steady_clock::now();
      const TrainResult r = train(cfg.train, cfg.model, [](const EpochLog& e) {
        std::cout << "epoch " << e.epoch << " loss " << e.train_loss;
        if (e.validation_mean_dice) std::cout << " val_mean_dc " << *e.validation_mean_dice;
        std::cout << std::endl;
      });
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cout << nlohmann::json{{"best_checkpoint", r.best_checkpoint.string()},
                                  {"final_checkpoint", r.final_checkpoint.string()},
                                  {"log", r.log_path.string()},
                                  {"best_epoch", r.best_epoch},
                                  {"best_validation_mean_dice", r.best_validation_dice},
                                  {"selected_on_train_split", r.validated_on_train},
                                  {"seconds", secs}}
                       .dump(2)
                << std::endl;
    } else if (*eval_cmd) {
      const fs::path manifest_path = eval_manifest.empty() ? cfg.train.manifest_path : fs::path(eval_manifest);
      if (manifest_path.empty()) throw std::invalid_argument("evaluate: no manifest (use --manifest)");
      const auto model = load_checkpoint<float>(eval_ckpt);
      EvaluationOptions opts{cfg.postprocess_enabled && !no_post, cfg.postprocess, cfg.presence_threshold};
      const EvaluationReport report = evaluate(model, load_manifest(manifest_path), split_from_name(eval_split), opts);
      std::cout << report.to_text();
      if (!g.out.empty()) {
        const fs::path dir = out_dir(g, ".");
        write_text(dir / "evaluation.json", report.to_json().dump(2) + "\n");
        write_text(dir / "evaluation.txt", report.to_text());
      }
    } else if (*infer_cmd) {
      const auto model = load_checkpoint<float>(infer_ckpt);
      EvaluationOptions opts{cfg.postprocess_enabled && !no_post, cfg.postprocess, cfg.presence_threshold};
      const std::string id = fs::path(infer_image).stem().string();
      const InferenceResult r = infer_scan(model, read_png(infer_image), opts, id);
      const nlohmann::json report = to_json(r.report);
      if (!g.out.empty()) {
        const fs::path dir = out_dir(g, ".");
        write_png(dir / (id + "_mask.png"), mask_to_rgb(r.mask));
        write_text(dir / (id + "_grade.json"), report.dump(2) + "\n");
      }
      std::cout << report.dump(2) << std::endl;
    } else if (*grade_cmd) {
      std::vector<ClassMask> masks;
      for (const auto& path : grade_masks) {
        try {
          masks.push_back(rgb_to_mask(read_png(path)));
        } catch (const UnregisteredColorError& e) {
          throw UnregisteredColorError(e.color(), e.location(), "mask " + path);
        }
      }
      const bool post = cfg.postprocess_enabled && !no_post;
      const std::int64_t threshold =
          grade_threshold.value_or(cfg.presence_threshold.value_or(post ? kPresenceThresholdWithPostprocess
                                                                        : kPresenceThresholdRaw));
      const GradingReport r = grade_scan(masks, threshold, grade_id);
      std::cout << to_json(r).dump(2) << std::endl;
    } else if (*ablate_cmd) {
      if (!ablate_manifest.empty()) cfg.train.manifest_path = ablate_manifest;
      if (cfg.train.manifest_path.empty()) throw std::invalid_argument("ablate: no manifest (use --manifest)");
      const fs::path dir = out_dir(g, "ablation");
      cfg.train.checkpoint_dir = dir / "runs";
      std::vector<std::uint64_t> seeds = parse_seeds(ablate_seeds);
      if (seeds.empty()) seeds.push_back(cfg.train.seed);
      const AblationResult r = run_loss_ablation(cfg, parse_losses(ablate_losses), seeds,
                                                 [](const std::string& line) { std::cout << line << std::endl; });
      write_text(dir / "ablation.json", r.to_json().dump(2) + "\n");
      write_text(dir / "ablation.txt", r.to_text());
      std::cout << r.to_text();
    } else if (*overlay_cmd) {
      const RgbImage image = read_png(ov_image);
      ClassMask mask;
      try {
        mask = rgb_to_mask(read_png(ov_mask));
      } catch (const UnregisteredColorError& e) {
        throw UnregisteredColorError(e.color(), e.location(), "mask " + ov_mask);
      }
      if (g.out.empty()) throw std::invalid_argument("overlay: --out <file.png> is required");
      const fs::path out = g.out;
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      write_png(out, overlay_mask(image, mask, ov_opacity));
      std::cout << nlohmann::json{{"out", out.string()}}.dump() << std::endl;
    }
  } catch (const std::exception& e) {
    return fail(error_type(e), e.what());
  }
  return 0;
}
