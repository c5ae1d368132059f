#include <fstream>
#include <functional>
#include <iterator>
#include <set>

#include "json.hpp"
#include "lesion/errors.hpp"
#include "lesion/pipeline.hpp"

namespace lesion::pipeline {

using nlohmann::json;

annotation::AnnotationConfig PipelineConfig::annotation() const {
  annotation::AnnotationConfig a;
  a.k = annotation_k;
  a.spatial_weight = annotation_spatial_weight;
  a.restarts = annotation_restarts;
  a.max_iterations = annotation_max_iterations;
  a.seed = seed;
  return a;
}

nets::NetworkSpec PipelineConfig::unet_spec() const {
  return nets::unet_spec(unet_input_size, unet_depth, unet_base_channels);
}

namespace {

nets::TrainConfig train_config(const TrainSettings& s, std::uint64_t seed, double threshold) {
  nets::TrainConfig c;
  c.iterations = s.iterations;
  c.learning_rate = s.learning_rate;
  c.batch_size = s.batch_size;
  c.seed = seed;
  c.mask_threshold = threshold;
  return c;
}

}  // namespace

nets::TrainConfig PipelineConfig::unet_train_config() const {
  return train_config(unet_train, seed + 1, mask_threshold);
}

nets::TrainConfig PipelineConfig::lenet_train_config() const {
  return train_config(lenet_train, seed + 2, mask_threshold);
}

void validate(const PipelineConfig& c) {
  if (c.work_dir.empty()) throw ConfigError("workDir must be set");
  parse_split_spec(c.split, c.seed);
  if (c.annotation_k < 2 || c.annotation_k > 16) throw ConfigError("annotation.k must be in [2,16]");
  if (!(c.annotation_spatial_weight >= 0.0 && c.annotation_spatial_weight <= 10.0)) {
    throw ConfigError("annotation.spatialWeight must be in [0,10]");
  }
  if (c.annotation_restarts < 1 || c.annotation_restarts > 100) throw ConfigError("annotation.restarts must be in [1,100]");
  if (c.annotation_max_iterations < 1) throw ConfigError("annotation.maxIterations must be positive");
  nets::validate(c.unet_spec());
  nets::validate(c.unet_train_config());
  nets::validate(c.lenet_train_config());
  if (c.crop_size < 8 || c.crop_size > 512) throw ConfigError("cropSize must be in [8,512]");
  if (c.crop_size != nets::lenet5_spec().input_size[1]) {
    throw ConfigError("cropSize must equal the LeNet-5 input size (" +
                      std::to_string(nets::lenet5_spec().input_size[1]) + ")");
  }
}

void apply_paper_preset(PipelineConfig& config) { config.unet_input_size = 256; }

namespace {

// Reads the listed keys of an object, rejecting anything else.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }
  void done() const {
    for (const auto& [key, value] : j_.items()) {
      if (!known_.contains(key)) throw ConfigError("unknown config key '" + prefix() + key + "'");
    }
  }
  template <typename T>
  void read(const char* key, T& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + prefix() + key + "' has the wrong type");
    }
  }
  template <typename F>
  void section(const char* key, F&& f) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    Fields sub(j_.at(key), prefix() + key);
    f(sub);
    sub.done();
  }

 private:
  std::string prefix() const { return where_.empty() ? "" : where_ + "."; }
  const json& j_;
  std::string where_;
  std::set<std::string> known_;
};

void read_train(Fields& f, TrainSettings& t) {
  f.read("iterations", t.iterations);
  f.read("learningRate", t.learning_rate);
  f.read("batchSize", t.batch_size);
}

}  // namespace

PipelineConfig parse_config(const std::string& text, PipelineConfig c) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config is not valid JSON");
  // Negative numbers would wrap on unsigned fields.
  std::function<void(const json&)> reject_negative = [&](const json& v) {
    if (v.is_number_integer() && v.get<std::int64_t>() < 0) throw ConfigError("config values must not be negative");
    if (v.is_structured())
      for (const auto& item : v) reject_negative(item);
  };
  reject_negative(j);
  {
    Fields f(j, "");
    std::string corpus = c.corpus_root.string(), work = c.work_dir.string();
    f.read("corpusRoot", corpus);
    f.read("workDir", work);
    c.corpus_root = corpus;
    c.work_dir = work;
    f.read("split", c.split);
    f.read("seed", c.seed);
    f.section("annotation", [&](Fields& a) {
      a.read("k", c.annotation_k);
      a.read("spatialWeight", c.annotation_spatial_weight);
      a.read("restarts", c.annotation_restarts);
      a.read("maxIterations", c.annotation_max_iterations);
    });
    f.section("unet", [&](Fields& u) {
      u.read("inputSize", c.unet_input_size);
      u.read("depth", c.unet_depth);
      u.read("baseChannels", c.unet_base_channels);
      read_train(u, c.unet_train);
    });
    f.section("lenet", [&](Fields& l) { read_train(l, c.lenet_train); });
    f.read("maskThreshold", c.mask_threshold);
    f.read("cropSize", c.crop_size);
    f.section("review", [&](Fields& r) { r.read("requireComplete", c.require_complete_review); });
    f.done();
  }
  validate(c);
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_config(text, std::move(base));
}

std::string to_json(const PipelineConfig& c) {
  auto train = [](const TrainSettings& t) {
    return json{{"iterations", t.iterations}, {"learningRate", t.learning_rate}, {"batchSize", t.batch_size}};
  };
  json unet = train(c.unet_train);
  unet["inputSize"] = c.unet_input_size;
  unet["depth"] = c.unet_depth;
  unet["baseChannels"] = c.unet_base_channels;
  const json j = {{"corpusRoot", c.corpus_root.string()},
                  {"workDir", c.work_dir.string()},
                  {"split", c.split},
                  {"seed", c.seed},
                  {"annotation",
                   {{"k", c.annotation_k},
                    {"spatialWeight", c.annotation_spatial_weight},
                    {"restarts", c.annotation_restarts},
                    {"maxIterations", c.annotation_max_iterations}}},
                  {"unet", unet},
                  {"lenet", train(c.lenet_train)},
                  {"maskThreshold", c.mask_threshold},
                  {"cropSize", c.crop_size},
                  {"review", {{"requireComplete", c.require_complete_review}}}};
  return j.dump(2);
}

}  // namespace lesion::pipeline
