#pragma once

// Labelled corpus ingestion: root/benign and root/malignant image folders,
// deterministic enumeration and train/test assignment.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lesion/label.hpp"
#include "lesion/manifest.hpp"

namespace lesion {

struct CorpusImage {
  std::string image_id;
  std::filesystem::path path;
};

/// PNG/JPEG files directly under `dir`, sorted by name; ids are file stems.
/// Throws NotFoundError for a missing directory, CollisionError on repeated stems.
std::vector<CorpusImage> list_images(const std::filesystem::path& dir);

enum class Split { Train, Test };

const char* to_string(Split split) noexcept;
std::optional<Split> parse_split(std::string_view text) noexcept;

struct LabeledSample {
  std::string image_id;
  std::filesystem::path image_path;
  Label label = Label::Benign;
  Split split = Split::Train;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

/// Either a per-class train fraction with a seeded hash order, or an explicit
/// list file with one "<imageId> <train|test>" line per image.
struct SplitSpec {
  double train_fraction = 0.8;
  std::filesystem::path list_file;
  std::uint64_t seed = 0;
};

/// Accepts "train:<fraction>" or "list:<path>". Throws ConfigError.
SplitSpec parse_split_spec(std::string_view text, std::uint64_t seed);

struct SplitCounts {
  std::size_t train[2]{};
  std::size_t test[2]{};
};

struct CorpusManifest {
  std::vector<LabeledSample> samples;
  std::vector<MaskEntry> mask_entries;
  std::vector<ReviewDecision> decisions;

  SplitCounts counts() const;
  const LabeledSample* find(std::string_view image_id) const;
  std::vector<LabeledSample> in_split(Split split) const;
  /// Throws IntegrityError when a mask entry or decision names an unknown image.
  void check_references() const;
};

/// Throws LayoutError if a class folder is missing, CollisionError when a
/// stem appears in both classes, NoInputError for an empty corpus.
CorpusManifest load_corpus(const std::filesystem::path& root, const SplitSpec& split);

std::string to_json_line(const LabeledSample& sample);
LabeledSample parse_labeled_sample(std::string_view line);
void write_samples(const std::filesystem::path& path, const std::vector<LabeledSample>& samples);
std::vector<LabeledSample> read_samples(const std::filesystem::path& path);

}  // namespace lesion
