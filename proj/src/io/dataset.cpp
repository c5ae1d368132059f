#include "lesion/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

#include "json.hpp"
#include "lesion/errors.hpp"

namespace lesion {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<CorpusImage> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw NotFoundError("image directory not found: " + dir.string());
  std::vector<CorpusImage> images;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext != ".png" && ext != ".jpg" && ext != ".jpeg") continue;
    images.push_back({entry.path().stem().string(), entry.path()});
  }
  std::sort(images.begin(), images.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
  for (std::size_t i = 1; i < images.size(); ++i) {
    if (images[i].image_id == images[i - 1].image_id) {
      throw CollisionError("duplicate image id '" + images[i].image_id + "' in " + dir.string());
    }
  }
  return images;
}

const char* to_string(Split split) noexcept { return split == Split::Train ? "train" : "test"; }

std::optional<Split> parse_split(std::string_view text) noexcept {
  if (text == "train") return Split::Train;
  if (text == "test") return Split::Test;
  return std::nullopt;
}

SplitSpec parse_split_spec(std::string_view text, std::uint64_t seed) {
  SplitSpec spec;
  spec.seed = seed;
  if (text.starts_with("list:")) {
    spec.list_file = std::string(text.substr(5));
    if (spec.list_file.empty()) throw ConfigError("split list path is empty");
    return spec;
  }
  if (!text.starts_with("train:")) throw ConfigError("split must be 'train:<fraction>' or 'list:<path>'");
  const std::string number(text.substr(6));
  std::size_t used = 0;
  double f = 0.0;
  try {
    f = std::stod(number, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != number.size() || !(f > 0.0 && f <= 1.0)) {
    throw ConfigError("split train fraction must be in (0,1], got '" + number + "'");
  }
  spec.train_fraction = f;
  return spec;
}

namespace {

std::uint64_t split_hash(std::string_view id, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  // splitmix64 finaliser over the seeded FNV value
  std::uint64_t z = h + seed * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void assign_by_hash(std::vector<LabeledSample>& samples, const SplitSpec& spec) {
  for (const Label label : {Label::Benign, Label::Malignant}) {
    std::vector<LabeledSample*> group;
    for (auto& s : samples)
      if (s.label == label) group.push_back(&s);
    std::sort(group.begin(), group.end(), [&](const LabeledSample* a, const LabeledSample* b) {
      const auto ha = split_hash(a->image_id, spec.seed), hb = split_hash(b->image_id, spec.seed);
      return ha != hb ? ha < hb : a->image_id < b->image_id;
    });
    const auto train = static_cast<std::size_t>(std::lround(spec.train_fraction * static_cast<double>(group.size())));
    for (std::size_t i = 0; i < group.size(); ++i) group[i]->split = i < train ? Split::Train : Split::Test;
  }
}

void assign_from_list(std::vector<LabeledSample>& samples, const fs::path& list_file) {
  std::map<std::string, Split> listed;
  for (const auto& line : read_lines(list_file)) {
    const auto space = line.find_first_of(" \t");
    const std::string id = line.substr(0, space);
    const auto split = space == std::string::npos ? std::nullopt
                                                  : parse_split(line.substr(line.find_first_not_of(" \t", space)));
    if (!split) throw ConfigError("split list: malformed line '" + line + "'");
    listed[id] = *split;
  }
  for (auto& s : samples) {
    const auto it = listed.find(s.image_id);
    if (it == listed.end()) throw ConfigError("split list does not assign image '" + s.image_id + "'");
    s.split = it->second;
  }
}

}  // namespace

SplitCounts CorpusManifest::counts() const {
  SplitCounts c;
  for (const auto& s : samples) {
    auto& slot = s.split == Split::Train ? c.train : c.test;
    ++slot[static_cast<int>(s.label)];
  }
  return c;
}

const LabeledSample* CorpusManifest::find(std::string_view image_id) const {
  for (const auto& s : samples)
    if (s.image_id == image_id) return &s;
  return nullptr;
}

std::vector<LabeledSample> CorpusManifest::in_split(Split split) const {
  std::vector<LabeledSample> out;
  for (const auto& s : samples)
    if (s.split == split) out.push_back(s);
  return out;
}

void CorpusManifest::check_references() const {
  std::set<std::string_view> ids;
  for (const auto& s : samples) ids.insert(s.image_id);
  for (const auto& e : mask_entries) {
    if (!ids.contains(e.image_id)) throw IntegrityError("mask entry for unknown image '" + e.image_id + "'");
  }
  for (const auto& d : decisions) {
    if (!ids.contains(d.image_id)) throw IntegrityError("decision for unknown image '" + d.image_id + "'");
  }
}

CorpusManifest load_corpus(const fs::path& root, const SplitSpec& split) {
  CorpusManifest manifest;
  std::map<std::string, Label> seen;
  for (const Label label : {Label::Benign, Label::Malignant}) {
    const fs::path dir = root / to_string(label);
    if (!fs::is_directory(dir)) throw LayoutError("corpus is missing the class folder " + dir.string());
    for (const auto& img : list_images(dir)) {
      if (const auto it = seen.find(img.image_id); it != seen.end()) {
        throw CollisionError("image id '" + img.image_id + "' appears under both " + to_string(it->second) + " and " +
                             to_string(label));
      }
      seen.emplace(img.image_id, label);
      manifest.samples.push_back({img.image_id, img.path, label, Split::Train});
    }
  }
  if (manifest.samples.empty()) throw NoInputError("corpus " + root.string() + " contains no images");
  std::sort(manifest.samples.begin(), manifest.samples.end(),
            [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
  if (split.list_file.empty()) {
    assign_by_hash(manifest.samples, split);
  } else {
    assign_from_list(manifest.samples, split.list_file);
  }
  return manifest;
}

std::string to_json_line(const LabeledSample& s) {
  const json j = {{"version", kRecordVersion},
                  {"imageId", s.image_id},
                  {"imagePath", s.image_path.string()},
                  {"label", to_string(s.label)},
                  {"split", to_string(s.split)}};
  return j.dump();
}

LabeledSample parse_labeled_sample(std::string_view line) {
  const json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object() || j.value("version", 0) != kRecordVersion) {
    throw FormatError("corpus manifest: malformed record: " + std::string(line));
  }
  try {
    LabeledSample s;
    s.image_id = j.at("imageId").get<std::string>();
    s.image_path = j.at("imagePath").get<std::string>();
    const auto label = parse_label(j.at("label").get<std::string>());
    const auto split = parse_split(j.at("split").get<std::string>());
    if (!label || !split) throw FormatError("corpus manifest: bad label or split in: " + std::string(line));
    s.label = *label;
    s.split = *split;
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("corpus manifest: ") + e.what());
  }
}

void write_samples(const fs::path& path, const std::vector<LabeledSample>& samples) {
  std::string text;
  for (const auto& s : samples) text += to_json_line(s) + '\n';
  write_text_atomic(path, text);
}

std::vector<LabeledSample> read_samples(const fs::path& path) {
  std::vector<LabeledSample> out;
  for (const auto& line : read_lines(path)) out.push_back(parse_labeled_sample(line));
  return out;
}

}  // namespace lesion
