#pragma once

// Human review of automatic masks: an append-only decision log, its folded
// effective state, and application of decisions to the mask files.

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lesion/dataset.hpp"
#include "lesion/image.hpp"
#include "lesion/manifest.hpp"
#include "lesion/work_layout.hpp"

namespace lesion::review {

/// Latest decision per image; later sequence numbers win, then later lines.
std::map<std::string, ReviewDecision> effective_decisions(std::span<const ReviewDecision> log);

/// UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

struct Progress {
  std::size_t total = 0;
  std::size_t decided = 0;
  std::size_t accept = 0;
  std::size_t invert = 0;
  std::size_t exclude = 0;
};

struct ItemState {
  MaskEntry entry;
  std::optional<ReviewDecision> decision;
};

/// Review state of one work directory. Reads are safe from many threads;
/// decisions are appended one at a time under a mutex.
class ReviewStore {
 public:
  /// Throws NotFoundError when the annotation manifest is missing.
  explicit ReviewStore(WorkLayout layout);

  const WorkLayout& layout() const noexcept { return layout_; }
  std::vector<ItemState> items() const;
  std::optional<ItemState> item(const std::string& image_id) const;
  Progress progress() const;

  /// Appends and syncs the decision before returning it. Throws NotFoundError
  /// for an image that is not in the annotation manifest.
  ReviewDecision record(const std::string& image_id, Verdict verdict, const std::string& reviewer);

  ImageRGB image(const std::string& image_id) const;
  /// The mask as it will be after the current decision is applied.
  BitMask effective_mask(const std::string& image_id) const;

 private:
  const MaskEntry& entry(const std::string& image_id) const;

  WorkLayout layout_;
  std::vector<MaskEntry> entries_;
  std::map<std::string, std::filesystem::path> image_paths_;
  mutable std::mutex mutex_;
  std::map<std::string, ReviewDecision> effective_;
  std::uint64_t next_sequence_ = 1;
};

struct ApplySummary {
  std::size_t accepted = 0;
  std::size_t inverted = 0;
  std::size_t excluded = 0;
  /// Undecided items, applied as accept.
  std::size_t undecided = 0;
  /// Items whose automatic annotation failed; never in the training set.
  std::size_t failed = 0;
  /// Mask files rewritten by this call.
  std::size_t masks_rewritten = 0;
  std::vector<std::string> training_ids;
};

/// Brings every mask file in line with its effective decision and writes the
/// U-Net training set. Without `force`, undecided items raise ContractError.
/// Applied markers make repeated calls no-ops. A decided item without its
/// mask file raises IntegrityError.
ApplySummary apply_decisions(const WorkLayout& layout, bool force);

/// Drops applied markers; called when masks are regenerated.
void reset_applied(const WorkLayout& layout);

/// Lock file marking an open review session. Throws StartupError when a live
/// process already holds it; stale locks from dead processes are replaced.
class ReviewLock {
 public:
  explicit ReviewLock(const WorkLayout& layout);
  ~ReviewLock();
  ReviewLock(const ReviewLock&) = delete;
  ReviewLock& operator=(const ReviewLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// True while a live process holds the review lock.
bool review_session_open(const WorkLayout& layout);

}  // namespace lesion::review
