#include "lesion/manifest.hpp"

#include <fstream>

#include <fcntl.h>
#include <unistd.h>

#include "json.hpp"
#include "lesion/errors.hpp"

namespace lesion {

using nlohmann::json;

const char* to_string(MaskStatus status) noexcept { return status == MaskStatus::Auto ? "auto" : "failed"; }

std::optional<MaskStatus> parse_mask_status(std::string_view text) noexcept {
  if (text == "auto") return MaskStatus::Auto;
  if (text == "failed") return MaskStatus::Failed;
  return std::nullopt;
}

const char* to_string(Verdict verdict) noexcept {
  switch (verdict) {
    case Verdict::Accept: return "accept";
    case Verdict::Invert: return "invert";
    case Verdict::Exclude: return "exclude";
  }
  return "accept";
}

std::optional<Verdict> parse_verdict(std::string_view text) noexcept {
  if (text == "accept") return Verdict::Accept;
  if (text == "invert") return Verdict::Invert;
  if (text == "exclude") return Verdict::Exclude;
  return std::nullopt;
}

namespace {

json parse_record(std::string_view line, const char* what) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw FormatError(std::string(what) + ": malformed record: " + std::string(line));
  if (j.value("version", 0) != kRecordVersion) {
    throw FormatError(std::string(what) + ": unsupported record version in: " + std::string(line));
  }
  return j;
}

}  // namespace

std::string to_json_line(const MaskEntry& entry) {
  json j = {{"version", kRecordVersion},
            {"imageId", entry.image_id},
            {"maskPath", entry.mask_path},
            {"borderFraction", entry.border_fraction},
            {"inverted", entry.inverted},
            {"status", to_string(entry.status)},
            {"failureReason", entry.failure_reason}};
  return j.dump();
}

MaskEntry parse_mask_entry(std::string_view line) {
  const json j = parse_record(line, "mask manifest");
  try {
    MaskEntry e;
    e.image_id = j.at("imageId").get<std::string>();
    e.mask_path = j.at("maskPath").get<std::string>();
    e.border_fraction = j.at("borderFraction").get<double>();
    e.inverted = j.at("inverted").get<bool>();
    const auto status = parse_mask_status(j.at("status").get<std::string>());
    if (!status) throw FormatError("mask manifest: unknown status");
    e.status = *status;
    e.failure_reason = j.value("failureReason", "");
    return e;
  } catch (const json::exception& ex) {
    throw FormatError(std::string("mask manifest: ") + ex.what());
  }
}

std::string to_json_line(const ReviewDecision& d) {
  json j = {{"version", kRecordVersion},     {"sequence", d.sequence},   {"imageId", d.image_id},
            {"verdict", to_string(d.verdict)}, {"timestamp", d.timestamp}, {"reviewer", d.reviewer}};
  return j.dump();
}

ReviewDecision parse_review_decision(std::string_view line) {
  const json j = parse_record(line, "decision log");
  try {
    ReviewDecision d;
    d.sequence = j.at("sequence").get<std::uint64_t>();
    d.image_id = j.at("imageId").get<std::string>();
    const auto verdict = parse_verdict(j.at("verdict").get<std::string>());
    if (!verdict) throw FormatError("decision log: unknown verdict");
    d.verdict = *verdict;
    d.timestamp = j.value("timestamp", "");
    d.reviewer = j.value("reviewer", "");
    return d;
  } catch (const json::exception& ex) {
    throw FormatError(std::string("decision log: ") + ex.what());
  }
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

std::vector<MaskEntry> read_mask_manifest(const std::filesystem::path& path) {
  std::vector<MaskEntry> entries;
  for (const auto& line : read_lines(path)) entries.push_back(parse_mask_entry(line));
  return entries;
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw NotFoundError("cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) throw NotFoundError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_mask_manifest(const std::filesystem::path& path, std::span<const MaskEntry> entries) {
  std::string text;
  for (const auto& e : entries) {
    text += to_json_line(e);
    text += '\n';
  }
  write_text_atomic(path, text);
}

void append_line(const std::filesystem::path& path, std::string_view line) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw NotFoundError("cannot append to " + path.string());
  std::string text(line);
  text += '\n';
  // One write call per record keeps concurrent appends whole; fsync makes it durable.
  const bool ok = ::write(fd, text.data(), text.size()) == static_cast<ssize_t>(text.size()) && ::fsync(fd) == 0;
  ::close(fd);
  if (!ok) throw NotFoundError("append failed for " + path.string());
}

}  // namespace lesion
