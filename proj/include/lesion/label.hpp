#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace lesion {

/// Diagnostic class; the index doubles as the classifier output slot.
enum class Label : std::uint8_t { Benign = 0, Malignant = 1 };

inline const char* to_string(Label label) noexcept { return label == Label::Benign ? "benign" : "malignant"; }

inline std::optional<Label> parse_label(std::string_view text) noexcept {
  if (text == "benign") return Label::Benign;
  if (text == "malignant") return Label::Malignant;
  return std::nullopt;
}

}  // namespace lesion
