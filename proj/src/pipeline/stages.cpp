#include <algorithm>
#include <chrono>
#include <set>

#include "json.hpp"
#include "lesion/checkpoint.hpp"
#include "lesion/dataset.hpp"
#include "lesion/errors.hpp"
#include "lesion/image_io.hpp"
#include "lesion/pipeline.hpp"
#include "lesion/review.hpp"

namespace lesion::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(Stage stage) noexcept {
  switch (stage) {
    case Stage::Annotate: return "annotate";
    case Stage::TrainUnet: return "train-unet";
    case Stage::Segment: return "segment";
    case Stage::TrainClassifier: return "train-classifier";
    case Stage::Evaluate: return "evaluate";
  }
  return "annotate";
}

std::optional<Stage> parse_stage(std::string_view text) noexcept {
  for (const Stage s : kAllStages)
    if (text == to_string(s)) return s;
  return std::nullopt;
}

std::string to_json(const StageReport& r) {
  json skipped = json::array();
  for (const auto& s : r.skipped) skipped.push_back({{"imageId", s.image_id}, {"reason", s.reason}});
  const json j = {{"stage", to_string(r.stage)},
                  {"seed", r.seed},
                  {"inputs", r.inputs},
                  {"outputs", r.outputs},
                  {"inputCount", r.input_count},
                  {"processed", r.processed},
                  {"skipped", skipped},
                  {"wallSeconds", r.wall_seconds},
                  {"details", json::parse(r.details_json)}};
  return j.dump(2) + '\n';
}

namespace {

void require(const fs::path& path, Stage stage, const char* what, Stage producer) {
  if (!fs::exists(path)) {
    throw DependencyError(std::string(to_string(stage)) + " needs the " + what + " at " + path.string() + "; run '" +
                          to_string(producer) + "' first");
  }
}

Tensor image_tensor(const ImageRGB& image, std::size_t size) { return to_tensor(resize_bilinear(image, size, size)); }

Tensor mask_tensor(const BitMask& mask, std::size_t size) {
  const BitMask m = resize_nearest(mask, size, size);
  Tensor t({1, size, size});
  for (std::size_t i = 0; i < m.bits.size(); ++i) t[i] = m.bits[i] ? 1.0 : 0.0;
  return t;
}

std::string error_reason(const std::exception& e) {
  if (const auto* le = dynamic_cast<const Error*>(&e)) return std::string(to_string(le->kind())) + ": " + e.what();
  return e.what();
}

fs::path ground_truth_dir(const PipelineConfig& c) { return c.corpus_root / "ground_truth"; }

// Mean Dice of the masks in `dir` against generator ground truth, over the
// given ids; nullopt when no ground truth exists.
std::optional<double> mean_dice(const PipelineConfig& c, const fs::path& dir, const std::vector<std::string>& ids) {
  const fs::path gt = ground_truth_dir(c);
  if (c.corpus_root.empty() || !fs::is_directory(gt) || ids.empty()) return std::nullopt;
  double total = 0.0;
  for (const auto& id : ids) {
    const fs::path truth = gt / (id + ".png");
    if (!fs::exists(truth)) return std::nullopt;
    const fs::path mask = dir / (id + ".png");
    // A missing mask scores 0 rather than being silently dropped.
    if (fs::exists(mask)) total += metrics::dice(io::read_mask(mask), io::read_mask(truth));
  }
  return total / static_cast<double>(ids.size());
}

std::vector<std::string> ids_of(const std::vector<LabeledSample>& samples) {
  std::vector<std::string> out;
  for (const auto& s : samples) out.push_back(s.image_id);
  return out;
}

void clear_dir(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
}

StageReport annotate(const PipelineConfig& c, StageReport r) {
  if (c.corpus_root.empty()) throw ConfigError("annotate needs corpusRoot");
  const WorkLayout w = c.layout();
  const auto corpus = load_corpus(c.corpus_root, parse_split_spec(c.split, c.seed));
  write_samples(w.corpus(), corpus.samples);
  std::vector<CorpusImage> images;
  for (const auto& s : corpus.samples) images.push_back({s.image_id, s.image_path});
  const auto entries = annotation::annotate_corpus(images, w.masks(), w.annotation_manifest(), c.annotation());
  // Fresh masks invalidate earlier applied flips; the decisions stay.
  review::reset_applied(w);

  r.inputs = {c.corpus_root.string()};
  r.outputs = {w.corpus().string(), w.masks().string(), w.annotation_manifest().string()};
  r.input_count = corpus.samples.size();
  std::set<std::string> ids;
  for (const auto& s : corpus.samples) ids.insert(s.image_id);
  std::size_t inverted = 0;
  for (const auto& e : entries) {
    if (!ids.contains(e.image_id)) continue;
    if (e.status == MaskStatus::Failed) {
      r.skipped.push_back({e.image_id, e.failure_reason});
    } else {
      ++r.processed;
      inverted += e.inverted;
    }
  }
  const auto counts = corpus.counts();
  json details = {{"benign", counts.train[0] + counts.test[0]},
                  {"malignant", counts.train[1] + counts.test[1]},
                  {"train", counts.train[0] + counts.train[1]},
                  {"test", counts.test[0] + counts.test[1]},
                  {"autoInverted", inverted}};
  if (const auto d = mean_dice(c, w.masks(), ids_of(corpus.samples))) details["annotationDice"] = *d;
  r.details_json = details.dump();
  return r;
}

StageReport train_unet(const PipelineConfig& c, StageReport r, const StageProgress& progress) {
  const WorkLayout w = c.layout();
  require(w.corpus(), r.stage, "corpus manifest", Stage::Annotate);
  require(w.annotation_manifest(), r.stage, "annotation manifest", Stage::Annotate);
  if (review::review_session_open(w)) {
    throw DependencyError("a review session is open on " + w.root.string() + "; stop review-serve before training");
  }
  const auto summary = review::apply_decisions(w, !c.require_complete_review);
  const std::set<std::string> usable(summary.training_ids.begin(), summary.training_ids.end());

  const auto samples = read_samples(w.corpus());
  const std::size_t size = c.unet_input_size;
  std::vector<nets::SegmentationSample> train;
  for (const auto& s : samples) {
    if (s.split != Split::Train) continue;
    ++r.input_count;
    if (!usable.contains(s.image_id)) {
      r.skipped.push_back({s.image_id, "excluded by review or failed annotation"});
      continue;
    }
    try {
      train.push_back({image_tensor(io::read_image(s.image_path), size), mask_tensor(io::read_mask(w.mask(s.image_id)), size)});
      ++r.processed;
    } catch (const Error& e) {
      r.skipped.push_back({s.image_id, error_reason(e)});
    }
  }
  if (train.empty()) throw NoInputError("train-unet: no usable training images");

  const auto cfg = c.unet_train_config();
  auto ckpt = nets::train_segmentation(nets::build_unet(c.unet_spec(), c.seed), train, cfg, progress);
  nets::save_checkpoint(ckpt, w.unet_checkpoint());

  r.inputs = {w.corpus().string(), w.annotation_manifest().string(), w.masks().string()};
  r.outputs = {w.unet_training_set().string(), w.unet_checkpoint().string()};
  r.details_json = json{{"trainingImages", train.size()},
                        {"accepted", summary.accepted},
                        {"inverted", summary.inverted},
                        {"excluded", summary.excluded},
                        {"undecided", summary.undecided},
                        {"failedAnnotations", summary.failed},
                        {"iterations", ckpt.iteration_count},
                        {"batchSize", cfg.batch_size},
                        {"firstLoss", ckpt.training_log.front()},
                        {"finalLoss", ckpt.training_log.back()}}
                       .dump();
  return r;
}

StageReport segment(const PipelineConfig& c, StageReport r) {
  const WorkLayout w = c.layout();
  require(w.corpus(), r.stage, "corpus manifest", Stage::Annotate);
  require(w.unet_checkpoint(), r.stage, "U-Net checkpoint", Stage::TrainUnet);
  const auto ckpt = nets::load_checkpoint(w.unet_checkpoint(), c.unet_spec());
  const auto samples = read_samples(w.corpus());
  clear_dir(w.segmented());
  clear_dir(w.crops());

  std::size_t masks = 0;
  for (const auto& s : samples) {
    ++r.input_count;
    try {
      const ImageRGB image = io::read_image(s.image_path);
      const BitMask small = nets::segment(image_tensor(image, c.unet_input_size), ckpt, c.mask_threshold);
      const BitMask mask = resize_nearest(small, image.height, image.width);
      io::write_mask(mask, w.segmented() / (s.image_id + ".png"));
      ++masks;
      io::write_png(mask_and_crop(image, mask, c.crop_size), w.crops() / (s.image_id + ".png"));
      ++r.processed;
    } catch (const Error& e) {
      r.skipped.push_back({s.image_id, error_reason(e)});
    }
  }
  r.inputs = {w.corpus().string(), w.unet_checkpoint().string()};
  r.outputs = {w.segmented().string(), w.crops().string()};
  json details = {{"masksWritten", masks}, {"cropsWritten", r.processed}};
  if (const auto d = mean_dice(c, w.segmented(), ids_of(samples))) details["segmentationDiceAll"] = *d;
  std::vector<LabeledSample> test;
  std::copy_if(samples.begin(), samples.end(), std::back_inserter(test),
               [](const auto& s) { return s.split == Split::Test; });
  if (const auto d = mean_dice(c, w.segmented(), ids_of(test))) details["segmentationDiceTest"] = *d;
  r.details_json = details.dump();
  return r;
}

std::vector<nets::ClassificationSample> load_crops(const WorkLayout& w, const std::vector<LabeledSample>& samples,
                                                   Split split, StageReport* r, std::vector<std::string>* ids) {
  std::vector<nets::ClassificationSample> out;
  for (const auto& s : samples) {
    if (s.split != split) continue;
    if (r) ++r->input_count;
    const fs::path crop = w.crops() / (s.image_id + ".png");
    if (!fs::exists(crop)) {
      if (r) r->skipped.push_back({s.image_id, "no crop (segmentation empty or failed)"});
      continue;
    }
    out.push_back({to_tensor(io::read_image(crop)), s.label});
    if (ids) ids->push_back(s.image_id);
    if (r) ++r->processed;
  }
  return out;
}

StageReport train_classifier(const PipelineConfig& c, StageReport r, const StageProgress& progress) {
  const WorkLayout w = c.layout();
  require(w.corpus(), r.stage, "corpus manifest", Stage::Annotate);
  require(w.crops(), r.stage, "lesion crops", Stage::Segment);
  const auto train = load_crops(w, read_samples(w.corpus()), Split::Train, &r, nullptr);
  if (train.empty()) throw NoInputError("train-classifier: no training crops");
  std::size_t per_class[2] = {};
  for (const auto& s : train) ++per_class[static_cast<int>(s.label)];

  const auto cfg = c.lenet_train_config();
  auto ckpt = nets::train_classifier(nets::build_lenet5(nets::lenet5_spec(), c.seed + 3), train, cfg, progress);
  nets::save_checkpoint(ckpt, w.lenet_checkpoint());
  r.inputs = {w.corpus().string(), w.crops().string()};
  r.outputs = {w.lenet_checkpoint().string()};
  r.details_json = json{{"trainingSamples", train.size()},
                        {"benign", per_class[0]},
                        {"malignant", per_class[1]},
                        {"iterations", ckpt.iteration_count},
                        {"batchSize", cfg.batch_size},
                        {"firstLoss", ckpt.training_log.front()},
                        {"finalLoss", ckpt.training_log.back()},
                        {"notes", ckpt.notes}}
                       .dump();
  return r;
}

double accuracy_pct(const nets::Checkpoint& ckpt, const std::vector<nets::ClassificationSample>& samples) {
  std::size_t correct = 0;
  for (const auto& s : samples) correct += nets::classify(s.image, ckpt).label == s.label;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(samples.size());
}

StageReport evaluate(const PipelineConfig& c, StageReport r) {
  const WorkLayout w = c.layout();
  require(w.corpus(), r.stage, "corpus manifest", Stage::Annotate);
  require(w.crops(), r.stage, "lesion crops", Stage::Segment);
  require(w.lenet_checkpoint(), r.stage, "LeNet-5 checkpoint", Stage::TrainClassifier);
  const auto samples = read_samples(w.corpus());
  load_crops(w, samples, Split::Test, &r, nullptr);
  const Evaluation e = evaluate_work_dir(c);

  std::string text = metrics::to_key_value(e.report);
  if (e.training_accuracy_pct) text += "trainingAccuracyPct=" + json(*e.training_accuracy_pct).dump() + '\n';
  for (const Label a : {Label::Benign, Label::Malignant}) {
    for (const Label p : {Label::Benign, Label::Malignant}) {
      text += std::string("actual_") + to_string(a) + "_predicted_" + to_string(p) + '=' +
              std::to_string(e.matrix.at(a, p)) + '\n';
    }
  }
  write_text_atomic(w.metrics(), text);

  r.inputs = {w.corpus().string(), w.crops().string(), w.lenet_checkpoint().string()};
  r.outputs = {w.metrics().string()};
  json details = {{"testingAccuracyPct", e.report.testing_accuracy_pct},
                  {"misclassificationRatePct", e.report.misclassification_rate_pct},
                  {"f1BenignPositive", e.report.f1_benign_positive},
                  {"confusion",
                   {{"actualBenign", {e.matrix.at(Label::Benign, Label::Benign), e.matrix.at(Label::Benign, Label::Malignant)}},
                    {"actualMalignant",
                     {e.matrix.at(Label::Malignant, Label::Benign), e.matrix.at(Label::Malignant, Label::Malignant)}}}}};
  if (e.training_accuracy_pct) details["trainingAccuracyPct"] = *e.training_accuracy_pct;
  if (const auto d = mean_dice(c, w.masks(), ids_of(samples))) details["annotationDice"] = *d;
  std::vector<LabeledSample> test;
  std::copy_if(samples.begin(), samples.end(), std::back_inserter(test),
               [](const auto& s) { return s.split == Split::Test; });
  if (const auto d = mean_dice(c, w.segmented(), ids_of(test))) details["segmentationDiceTest"] = *d;
  r.details_json = details.dump();
  return r;
}

}  // namespace

Evaluation evaluate_work_dir(const PipelineConfig& c) {
  const WorkLayout w = c.layout();
  const auto ckpt = nets::load_checkpoint(w.lenet_checkpoint(), nets::lenet5_spec());
  const auto samples = read_samples(w.corpus());
  const auto test = load_crops(w, samples, Split::Test, nullptr, nullptr);
  if (test.empty()) throw NoInputError("evaluate: no test crops");
  std::vector<Label> predicted, actual;
  for (const auto& s : test) {
    predicted.push_back(nets::classify(s.image, ckpt).label);
    actual.push_back(s.label);
  }
  Evaluation e;
  e.matrix = metrics::confusion_matrix(predicted, actual);
  e.report = metrics::summarize(e.matrix);
  const auto train = load_crops(w, samples, Split::Train, nullptr, nullptr);
  if (!train.empty()) e.training_accuracy_pct = accuracy_pct(ckpt, train);
  return e;
}

StageReport run_stage(Stage stage, const PipelineConfig& config, const StageProgress& progress) {
  validate(config);
  const auto start = std::chrono::steady_clock::now();
  StageReport r;
  r.stage = stage;
  r.seed = config.seed;
  switch (stage) {
    case Stage::Annotate: r = annotate(config, std::move(r)); break;
    case Stage::TrainUnet: r = train_unet(config, std::move(r), progress); break;
    case Stage::Segment: r = segment(config, std::move(r)); break;
    case Stage::TrainClassifier: r = train_classifier(config, std::move(r), progress); break;
    case Stage::Evaluate: r = evaluate(config, std::move(r)); break;
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_text_atomic(config.layout().report(to_string(stage)), to_json(r));
  return r;
}

std::vector<StageReport> run_pipeline(const PipelineConfig& config, const StageProgress& progress) {
  std::vector<StageReport> reports;
  for (const Stage s : kAllStages) reports.push_back(run_stage(s, config, progress));
  return reports;
}

}  // namespace lesion::pipeline
