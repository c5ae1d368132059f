#pragma once

// End-to-end orchestration: annotate -> review -> train-unet -> segment +
// crop -> train-classifier -> evaluate, plus the synthetic corpus generator.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lesion/annotation.hpp"
#include "lesion/image.hpp"
#include "lesion/metrics.hpp"
#include "lesion/networks.hpp"
#include "lesion/work_layout.hpp"

namespace lesion::pipeline {

/// Zeroes every pixel outside the mask.
ImageRGB apply_mask(const ImageRGB& image, const BitMask& mask);

/// apply_mask, then the tight foreground bounding box. Throws EmptyMaskError.
ImageRGB masked_region(const ImageRGB& image, const BitMask& mask);

/// masked_region resized bilinearly to crop_size x crop_size.
ImageRGB mask_and_crop(const ImageRGB& image, const BitMask& mask, std::size_t crop_size);

struct SyntheticSummary {
  std::size_t benign = 0;
  std::size_t malignant = 0;
  std::filesystem::path ground_truth_dir;
};

/// Writes out_dir/{benign,malignant}/<id>.png and out_dir/ground_truth/<id>.png.
/// Benign lesions are round, brown and evenly coloured; malignant ones are
/// eccentric, irregular, darker and variegated. Throws ConfigError unless n
/// is even and at least 2 and image_size >= 16.
SyntheticSummary generate_synthetic_corpus(std::size_t n, std::size_t image_size, std::uint64_t seed,
                                           const std::filesystem::path& out_dir);

struct TrainSettings {
  std::size_t iterations = 0;
  double learning_rate = 1e-3;
  std::size_t batch_size = 1;
};

struct PipelineConfig {
  std::filesystem::path corpus_root;
  std::filesystem::path work_dir = "work";
  std::string split = "train:0.8";
  std::uint64_t seed = 0;

  std::size_t annotation_k = 5;
  double annotation_spatial_weight = 0.1;
  std::size_t annotation_restarts = 5;
  std::size_t annotation_max_iterations = 100;

  std::size_t unet_input_size = 64;
  std::size_t unet_depth = 4;
  std::size_t unet_base_channels = 8;
  TrainSettings unet_train{2000, 1e-3, 2};

  TrainSettings lenet_train{1500, 1e-3, 8};

  double mask_threshold = 0.5;
  std::size_t crop_size = 32;
  /// When false, undecided review items are accepted automatically.
  bool require_complete_review = false;

  WorkLayout layout() const { return {work_dir}; }
  annotation::AnnotationConfig annotation() const;
  nets::NetworkSpec unet_spec() const;
  nets::TrainConfig unet_train_config() const;
  nets::TrainConfig lenet_train_config() const;
};

/// Throws ConfigError for out-of-range values.
void validate(const PipelineConfig& config);

/// 256x256 U-Net input.
void apply_paper_preset(PipelineConfig& config);

/// JSON object; keys absent from the text keep their defaults, unknown keys
/// are a ConfigError.
PipelineConfig parse_config(const std::string& text, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});
std::string to_json(const PipelineConfig& config);

enum class Stage { Annotate, TrainUnet, Segment, TrainClassifier, Evaluate };

const char* to_string(Stage stage) noexcept;
std::optional<Stage> parse_stage(std::string_view text) noexcept;
inline constexpr Stage kAllStages[] = {Stage::Annotate, Stage::TrainUnet, Stage::Segment, Stage::TrainClassifier,
                                       Stage::Evaluate};

struct SkippedSample {
  std::string image_id;
  std::string reason;
};

struct StageReport {
  Stage stage = Stage::Annotate;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::size_t input_count = 0;
  std::size_t processed = 0;
  std::vector<SkippedSample> skipped;
  double wall_seconds = 0.0;
  /// Stage-specific figures (losses, counts, Dice, metrics).
  std::string details_json = "{}";
};

std::string to_json(const StageReport& report);

/// Per-iteration progress for the training stages.
using StageProgress = nets::ProgressFn;

/// Runs one stage and writes reports/<stage>.json. Throws DependencyError
/// naming the missing upstream artifact.
StageReport run_stage(Stage stage, const PipelineConfig& config, const StageProgress& progress = {});

/// All stages in order.
std::vector<StageReport> run_pipeline(const PipelineConfig& config, const StageProgress& progress = {});

/// Test-split crops classified with the trained LeNet-5.
struct Evaluation {
  metrics::ConfusionMatrix matrix;
  metrics::MetricsReport report;
  std::optional<double> training_accuracy_pct;
};

Evaluation evaluate_work_dir(const PipelineConfig& config);

}  // namespace lesion::pipeline
