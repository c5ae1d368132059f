#include <algorithm>
#include <cerrno>
#include <chrono>
#include <ctime>
#include <fstream>

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include "json.hpp"
#include "lesion/errors.hpp"
#include "lesion/image_io.hpp"
#include "lesion/review.hpp"

namespace lesion::review {

namespace fs = std::filesystem;
using nlohmann::json;

std::map<std::string, ReviewDecision> effective_decisions(std::span<const ReviewDecision> log) {
  std::map<std::string, ReviewDecision> out;
  for (const auto& d : log) {
    auto [it, inserted] = out.try_emplace(d.image_id, d);
    if (!inserted && d.sequence >= it->second.sequence) it->second = d;
  }
  return out;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

std::vector<ReviewDecision> read_decisions(const fs::path& path) {
  std::vector<ReviewDecision> log;
  if (!fs::exists(path)) return log;
  for (const auto& line : read_lines(path)) log.push_back(parse_review_decision(line));
  return log;
}

struct Marker {
  std::uint64_t sequence = 0;
  bool flipped = false;
};

// Latest applied marker per image: whether the mask file is currently the
// inverse of the automatic mask.
std::map<std::string, Marker> read_markers(const fs::path& path) {
  std::map<std::string, Marker> out;
  if (!fs::exists(path)) return out;
  for (const auto& line : read_lines(path)) {
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || j.value("version", 0) != kRecordVersion) {
      throw FormatError("applied markers: malformed record: " + line);
    }
    try {
      out[j.at("imageId").get<std::string>()] = {j.at("sequence").get<std::uint64_t>(), j.at("flipped").get<bool>()};
    } catch (const json::exception& e) {
      throw FormatError(std::string("applied markers: ") + e.what());
    }
  }
  return out;
}

fs::path mask_file(const WorkLayout& layout, const MaskEntry& e) {
  return e.mask_path.empty() ? layout.mask(e.image_id) : fs::path(e.mask_path);
}

}  // namespace

ReviewStore::ReviewStore(WorkLayout layout) : layout_(std::move(layout)) {
  if (!fs::exists(layout_.annotation_manifest())) {
    throw NotFoundError("annotation manifest not found: " + layout_.annotation_manifest().string());
  }
  entries_ = read_mask_manifest(layout_.annotation_manifest());
  if (fs::exists(layout_.corpus())) {
    for (const auto& s : read_samples(layout_.corpus())) image_paths_[s.image_id] = s.image_path;
  }
  const auto log = read_decisions(layout_.decisions());
  for (const auto& d : log) next_sequence_ = std::max(next_sequence_, d.sequence + 1);
  effective_ = effective_decisions(log);
}

const MaskEntry& ReviewStore::entry(const std::string& image_id) const {
  for (const auto& e : entries_)
    if (e.image_id == image_id) return e;
  throw NotFoundError("unknown image '" + image_id + "'");
}

std::vector<ItemState> ReviewStore::items() const {
  std::lock_guard lock(mutex_);
  std::vector<ItemState> out;
  for (const auto& e : entries_) {
    const auto it = effective_.find(e.image_id);
    out.push_back({e, it == effective_.end() ? std::nullopt : std::optional(it->second)});
  }
  return out;
}

std::optional<ItemState> ReviewStore::item(const std::string& image_id) const {
  std::lock_guard lock(mutex_);
  for (const auto& e : entries_) {
    if (e.image_id != image_id) continue;
    const auto it = effective_.find(e.image_id);
    return ItemState{e, it == effective_.end() ? std::nullopt : std::optional(it->second)};
  }
  return std::nullopt;
}

Progress ReviewStore::progress() const {
  std::lock_guard lock(mutex_);
  Progress p;
  p.total = entries_.size();
  for (const auto& e : entries_) {
    const auto it = effective_.find(e.image_id);
    if (it == effective_.end()) continue;
    ++p.decided;
    switch (it->second.verdict) {
      case Verdict::Accept: ++p.accept; break;
      case Verdict::Invert: ++p.invert; break;
      case Verdict::Exclude: ++p.exclude; break;
    }
  }
  return p;
}

ReviewDecision ReviewStore::record(const std::string& image_id, Verdict verdict, const std::string& reviewer) {
  entry(image_id);
  std::lock_guard lock(mutex_);
  ReviewDecision d{next_sequence_, image_id, verdict, utc_timestamp(), reviewer};
  append_line(layout_.decisions(), to_json_line(d));
  ++next_sequence_;
  effective_[image_id] = d;
  return d;
}

ImageRGB ReviewStore::image(const std::string& image_id) const {
  entry(image_id);
  const auto it = image_paths_.find(image_id);
  if (it == image_paths_.end()) throw NotFoundError("no image path recorded for '" + image_id + "'");
  return io::read_image(it->second);
}

BitMask ReviewStore::effective_mask(const std::string& image_id) const {
  const MaskEntry& e = entry(image_id);
  const fs::path path = mask_file(layout_, e);
  if (e.status == MaskStatus::Failed || !fs::exists(path)) throw NotFoundError("no mask for '" + image_id + "'");
  BitMask mask = io::read_mask(path);
  bool want_flipped = false;
  {
    std::lock_guard lock(mutex_);
    const auto it = effective_.find(image_id);
    want_flipped = it != effective_.end() && it->second.verdict == Verdict::Invert;
  }
  const auto markers = read_markers(layout_.applied());
  const auto m = markers.find(image_id);
  const bool flipped = m != markers.end() && m->second.flipped;
  return want_flipped == flipped ? mask : mask.inverted();
}

ApplySummary apply_decisions(const WorkLayout& layout, bool force) {
  const auto entries = read_mask_manifest(layout.annotation_manifest());
  const auto log = read_decisions(layout.decisions());
  const auto effective = effective_decisions(log);
  auto markers = read_markers(layout.applied());

  if (!force) {
    std::size_t undecided = 0;
    for (const auto& e : entries) undecided += e.status == MaskStatus::Auto && !effective.contains(e.image_id);
    if (undecided > 0) {
      throw ContractError("review incomplete: " + std::to_string(undecided) + " undecided item(s); force to accept them");
    }
  }

  ApplySummary summary;
  for (const auto& e : entries) {
    if (e.status == MaskStatus::Failed) {
      ++summary.failed;
      continue;
    }
    const auto it = effective.find(e.image_id);
    const Verdict verdict = it == effective.end() ? Verdict::Accept : it->second.verdict;
    const fs::path path = mask_file(layout, e);
    if (!fs::exists(path)) throw IntegrityError("mask file missing for '" + e.image_id + "': " + path.string());

    const bool want_flipped = verdict == Verdict::Invert;
    Marker& marker = markers[e.image_id];
    if (marker.flipped != want_flipped) {
      io::write_mask(io::read_mask(path).inverted(), path);
      marker = {it == effective.end() ? 0 : it->second.sequence, want_flipped};
      const json j = {{"version", kRecordVersion},
                      {"imageId", e.image_id},
                      {"sequence", marker.sequence},
                      {"flipped", marker.flipped}};
      append_line(layout.applied(), j.dump());
      ++summary.masks_rewritten;
    }

    if (it == effective.end()) {
      ++summary.undecided;
    } else if (verdict == Verdict::Accept) {
      ++summary.accepted;
    } else if (verdict == Verdict::Invert) {
      ++summary.inverted;
    }
    if (verdict == Verdict::Exclude) {
      ++summary.excluded;
    } else {
      summary.training_ids.push_back(e.image_id);
    }
  }
  std::string text;
  for (const auto& id : summary.training_ids) text += id + '\n';
  write_text_atomic(layout.unet_training_set(), text);
  return summary;
}

void reset_applied(const WorkLayout& layout) { fs::remove(layout.applied()); }

namespace {

bool process_alive(long pid) { return pid > 0 && (::kill(static_cast<pid_t>(pid), 0) == 0 || errno == EPERM); }

long lock_owner(const fs::path& path) {
  std::ifstream in(path);
  long pid = 0;
  if (!(in >> pid)) return 0;
  return pid;
}

}  // namespace

bool review_session_open(const WorkLayout& layout) {
  return fs::exists(layout.review_lock()) && process_alive(lock_owner(layout.review_lock()));
}

ReviewLock::ReviewLock(const WorkLayout& layout) : path_(layout.review_lock()) {
  fs::create_directories(path_.parent_path());
  if (fs::exists(path_)) {
    if (process_alive(lock_owner(path_))) {
      throw StartupError("review session already open (lock " + path_.string() + ")");
    }
    fs::remove(path_);
  }
  const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
  if (fd < 0) throw StartupError("cannot create review lock " + path_.string());
  const std::string pid = std::to_string(::getpid()) + '\n';
  const bool ok = ::write(fd, pid.data(), pid.size()) == static_cast<ssize_t>(pid.size());
  ::close(fd);
  if (!ok) throw StartupError("cannot write review lock " + path_.string());
}

ReviewLock::~ReviewLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

}  // namespace lesion::review
