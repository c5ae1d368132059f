#pragma once

// File locations inside a pipeline work directory.

#include <filesystem>
#include <string>

namespace lesion {

struct WorkLayout {
  std::filesystem::path root;

  std::filesystem::path corpus() const { return root / "corpus.jsonl"; }
  std::filesystem::path masks() const { return root / "masks"; }
  std::filesystem::path mask(const std::string& id) const { return masks() / (id + ".png"); }
  std::filesystem::path annotation_manifest() const { return root / "annotation_manifest.jsonl"; }
  std::filesystem::path review_dir() const { return root / "review"; }
  std::filesystem::path decisions() const { return review_dir() / "decisions.jsonl"; }
  std::filesystem::path applied() const { return review_dir() / "applied.jsonl"; }
  std::filesystem::path review_lock() const { return review_dir() / "review.lock"; }
  std::filesystem::path unet_training_set() const { return root / "unet_training_set.txt"; }
  std::filesystem::path models() const { return root / "models"; }
  std::filesystem::path unet_checkpoint() const { return models() / "unet.ckpt"; }
  std::filesystem::path lenet_checkpoint() const { return models() / "lenet5.ckpt"; }
  std::filesystem::path segmented() const { return root / "segmented"; }
  std::filesystem::path crops() const { return root / "crops"; }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path report(const std::string& stage) const { return reports() / (stage + ".json"); }
  std::filesystem::path metrics() const { return root / "metrics.txt"; }
};

}  // namespace lesion
