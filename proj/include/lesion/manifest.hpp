#pragma once

// Line-delimited JSON records shared by the annotation, review and pipeline
// stages. Every record carries a "version" field.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lesion {

inline constexpr int kRecordVersion = 1;

enum class MaskStatus { Auto, Failed };

const char* to_string(MaskStatus status) noexcept;
std::optional<MaskStatus> parse_mask_status(std::string_view text) noexcept;

/// One annotation outcome.
struct MaskEntry {
  std::string image_id;
  std::string mask_path;
  double border_fraction = 0.0;
  bool inverted = false;
  MaskStatus status = MaskStatus::Auto;
  std::string failure_reason;

  friend bool operator==(const MaskEntry&, const MaskEntry&) = default;
};

enum class Verdict { Accept, Invert, Exclude };

const char* to_string(Verdict verdict) noexcept;
std::optional<Verdict> parse_verdict(std::string_view text) noexcept;

/// A human review decision; the latest one per image is authoritative.
struct ReviewDecision {
  std::uint64_t sequence = 0;
  std::string image_id;
  Verdict verdict = Verdict::Accept;
  std::string timestamp;
  std::string reviewer;

  friend bool operator==(const ReviewDecision&, const ReviewDecision&) = default;
};

std::string to_json_line(const MaskEntry& entry);
MaskEntry parse_mask_entry(std::string_view line);
std::string to_json_line(const ReviewDecision& decision);
ReviewDecision parse_review_decision(std::string_view line);

std::vector<MaskEntry> read_mask_manifest(const std::filesystem::path& path);
/// Replaces the file atomically (write to a sibling, then rename).
void write_mask_manifest(const std::filesystem::path& path, std::span<const MaskEntry> entries);

/// Reads every non-empty line of a JSONL file.
std::vector<std::string> read_lines(const std::filesystem::path& path);
/// Appends one line and flushes before returning.
void append_line(const std::filesystem::path& path, std::string_view line);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace lesion
