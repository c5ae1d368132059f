#include <cmath>
#include <filesystem>
#include <limits>
#include <vector>

#include "doctest.h"
#include "lesion/checkpoint.hpp"
#include "lesion/errors.hpp"
#include "lesion/grad_check.hpp"
#include "lesion/networks.hpp"
#include "lesion/random.hpp"
#include "support/oracles.hpp"

using namespace lesion;
using namespace lesion::nets;
namespace fs = std::filesystem;

namespace {

using testing::dice_of;
using testing::disk_sample;
using testing::to_mask;
using testing::toy_crops;

}  // namespace

TEST_CASE("unet spec validation and widths") {
  CHECK(encoder_widths(unet_spec(64)) == std::vector<std::size_t>{8, 16, 32, 64});
  CHECK_NOTHROW(validate(unet_spec(256)));
  CHECK_THROWS_AS(validate(unet_spec(100)), ConfigError);
  CHECK_THROWS_AS(build_unet(unet_spec(100), 0), ConfigError);
  CHECK_THROWS_AS(build_unet(lenet5_spec(), 0), ConfigError);
  auto bad = lenet5_spec();
  bad.input_size = {3, 28, 28};
  CHECK_THROWS_AS(build_lenet5(bad, 0), ConfigError);
}

TEST_CASE("unet parameter count follows the layer arithmetic") {
  const auto net = build_unet(unet_spec(64), 1);
  // 3x3 conv: (9*in+1)*out. Encoder, bottleneck, decoder (upsampled + skip in), 1x1 head.
  auto conv = [](std::size_t in, std::size_t out, std::size_t k) { return (k * k * in + 1) * out; };
  std::size_t expected = 0, in = 3;
  for (std::size_t w : {8, 16, 32, 64}) {
    expected += conv(in, w, 3) + conv(w, w, 3);
    in = w;
  }
  expected += conv(64, 128, 3) + conv(128, 128, 3);
  std::size_t below = 128;
  for (std::size_t w : {64, 32, 16, 8}) {
    expected += conv(below + w, w, 3) + conv(w, w, 3);
    below = w;
  }
  expected += conv(8, 1, 1);
  CHECK(net.params.scalar_count() == expected);
}

TEST_CASE("unet output shape and range over random specs") {
  Rng rng(3);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t depth = 1 + rng.index(3);
    const std::size_t base = 1 + rng.index(4);
    const std::size_t h = (1 + rng.index(3)) << depth, w = (1 + rng.index(3)) << depth;
    NetworkSpec spec = unet_spec(h, depth, base);
    spec.input_size = {1 + rng.index(3), h, w};
    const auto net = build_unet(spec, trial);
    ad::Tape tape;
    const auto out = forward(net, tape, tape.input(Tensor::uniform({spec.input_size[0], h, w}, 0, 1, rng)));
    CHECK(out.shape() == Shape{1, h, w});
    for (const double v : out.value().values()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("lenet5 parameter count, softmax and determinism") {
  const auto a = build_lenet5(lenet5_spec(), 7);
  const std::size_t expected = (5 * 5 * 3 + 1) * 6 + (5 * 5 * 6 + 1) * 16 + (400 + 1) * 120 + (120 + 1) * 84 + (84 + 1) * 2;
  CHECK(expected == 61326);
  CHECK(a.params.scalar_count() == expected);
  CHECK(build_lenet5(lenet5_spec(), 7).params.same_values(a.params));
  CHECK(!build_lenet5(lenet5_spec(), 8).params.same_values(a.params));

  Rng rng(1);
  ad::Tape tape;
  const auto logits = forward(a, tape, tape.input(Tensor::uniform({3, 32, 32}, 0, 1, rng)));
  CHECK(logits.shape() == Shape{2});
  const auto p = ad::softmax(logits.value());
  CHECK(std::abs(p[0] + p[1] - 1.0) <= 1e-9);
}

TEST_CASE("whole-network gradient check: tiny unet") {
  const auto result = testing::tiny_unet_grad_check();
  CHECK(result.coordinates > 500);
  CHECK(result.max_relative_error <= testing::kGradTolerance);
  CHECK(result.skipped_kinks * 20 < result.coordinates);
}

TEST_CASE("whole-network gradient check: lenet5 on strided coordinates") {
  const auto result = testing::lenet_grad_check();
  CHECK(result.coordinates >= 200);
  CHECK(result.max_relative_error <= testing::kGradTolerance);
}

TEST_CASE("segment with a zeroed head is all foreground") {
  Checkpoint ckpt;
  auto net = build_unet(unet_spec(16, 2, 4), 1);
  for (auto& p : net.params) {
    if (p.name.starts_with("head.")) p.value.fill(0.0);
  }
  ckpt.spec = net.spec;
  ckpt.parameters = net.params;
  Rng rng(1);
  const auto mask = segment(Tensor::uniform({3, 16, 16}, 0, 1, rng), ckpt, 0.5);
  CHECK(mask.height == 16);
  CHECK(mask.width == 16);
  CHECK(mask.all_one());
  CHECK_THROWS_AS(segment(Tensor({3, 8, 8}), ckpt), DimensionError);
}

TEST_CASE("unet overfits four disks") {
  std::vector<SegmentationSample> samples{disk_sample(32, 12, 14, 7), disk_sample(32, 18, 16, 9),
                                          disk_sample(32, 15, 20, 6), disk_sample(32, 16, 11, 8)};
  TrainConfig cfg;
  cfg.iterations = 500;
  cfg.learning_rate = 1e-3;
  cfg.seed = 3;
  const auto ckpt = train_segmentation(build_unet(unet_spec(32), 3), samples, cfg);
  CHECK(ckpt.training_log.size() == 500);
  CHECK(ckpt.iteration_count == 500);
  CHECK(ckpt.training_log.back() < ckpt.training_log.front());
  double total = 0.0;
  for (const auto& s : samples) total += dice_of(segment(s.image, ckpt), to_mask(s.mask));
  CHECK(total / 4 > 0.95);
}

TEST_CASE("training is bit-deterministic per seed") {
  std::vector<SegmentationSample> samples{disk_sample(16, 7, 8, 4), disk_sample(16, 9, 6, 5)};
  TrainConfig cfg;
  cfg.iterations = 5;
  cfg.batch_size = 2;
  cfg.seed = 9;
  const auto a = train_segmentation(build_unet(unet_spec(16, 2, 4), 1), samples, cfg);
  const auto b = train_segmentation(build_unet(unet_spec(16, 2, 4), 1), samples, cfg);
  CHECK(serialize_checkpoint(a) == serialize_checkpoint(b));
  // With batch 1 the seed decides the visiting order.
  cfg.batch_size = 1;
  const auto c9 = train_segmentation(build_unet(unet_spec(16, 2, 4), 1), samples, cfg);
  cfg.seed = 10;
  const auto c = train_segmentation(build_unet(unet_spec(16, 2, 4), 1), samples, cfg);
  CHECK(c.training_log != c9.training_log);
}

TEST_CASE("training input errors") {
  TrainConfig cfg;
  cfg.iterations = 2;
  CHECK_THROWS_AS(train_segmentation(build_unet(unet_spec(16, 2, 2), 1), {}, cfg), NoInputError);
  std::vector<SegmentationSample> wrong{disk_sample(32, 10, 10, 4)};
  CHECK_THROWS_AS(train_segmentation(build_unet(unet_spec(16, 2, 2), 1), wrong, cfg), DimensionError);

  auto poisoned = build_unet(unet_spec(16, 2, 2), 1);
  for (auto& p : poisoned.params) {
    if (p.name == "head.bias") p.value.fill(std::numeric_limits<double>::quiet_NaN());
  }
  std::vector<SegmentationSample> one{disk_sample(16, 8, 8, 4)};
  try {
    train_segmentation(poisoned, one, cfg);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.iteration() == 0);
  }

  cfg.mask_threshold = 1.0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg.mask_threshold = 0.5;
  cfg.iterations = 0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
}

TEST_CASE("lenet5 overfits a toy two-colour set") {
  const auto samples = toy_crops(16, 1);
  TrainConfig cfg;
  cfg.iterations = 300;
  cfg.batch_size = 4;
  cfg.seed = 2;
  const auto ckpt = train_classifier(build_lenet5(lenet5_spec(), 2), samples, cfg);
  CHECK(ckpt.training_log.size() == 300);
  CHECK(ckpt.notes.empty());
  std::size_t correct = 0;
  for (const auto& s : samples) {
    const auto c = classify(s.image, ckpt);
    CHECK(std::abs(c.probabilities[0] + c.probabilities[1] - 1.0) <= 1e-9);
    correct += c.label == s.label;
  }
  CHECK(correct == samples.size());

  const auto again = train_classifier(build_lenet5(lenet5_spec(), 2), samples, cfg);
  CHECK(serialize_checkpoint(again) == serialize_checkpoint(ckpt));
}

TEST_CASE("classifier edge cases") {
  std::vector<ClassificationSample> one_class;
  for (auto& s : toy_crops(6, 3))
    if (s.label == Label::Benign) one_class.push_back(s);
  TrainConfig cfg;
  cfg.iterations = 3;
  const auto ckpt = train_classifier(build_lenet5(lenet5_spec(), 1), one_class, cfg);
  REQUIRE(ckpt.notes.size() == 1);
  CHECK(ckpt.notes[0].find("single class") != std::string::npos);
  CHECK_THROWS_AS(train_classifier(build_lenet5(lenet5_spec(), 1), {}, cfg), NoInputError);

  // Equal logits resolve to benign.
  auto tied = ckpt;
  for (auto& p : tied.parameters) {
    if (p.name.starts_with("fc3.")) p.value.fill(0.0);
  }
  const auto c = classify(one_class[0].image, tied);
  CHECK(c.label == Label::Benign);
  CHECK(c.probabilities[0] == 0.5);
  CHECK_THROWS_AS(classify(Tensor({3, 16, 16}), tied), DimensionError);
}

TEST_CASE("checkpoint round trip and integrity") {
  std::vector<SegmentationSample> samples{disk_sample(16, 7, 8, 4)};
  TrainConfig cfg;
  cfg.iterations = 3;
  cfg.seed = 5;
  auto ckpt = train_segmentation(build_unet(unet_spec(16, 2, 2), 4), samples, cfg);
  ckpt.notes.push_back("note");
  const fs::path dir = fs::temp_directory_path() / "lesion_test_ckpt";
  fs::remove_all(dir);
  save_checkpoint(ckpt, dir / "u.ckpt");
  const auto back = load_checkpoint(dir / "u.ckpt");
  CHECK(back.spec == ckpt.spec);
  CHECK(back.seed == 5);
  CHECK(back.iteration_count == 3);
  CHECK(back.training_log == ckpt.training_log);
  CHECK(back.notes == ckpt.notes);
  CHECK(back.parameters.same_values(ckpt.parameters));
  CHECK(segment_probabilities(samples[0].image, back) == segment_probabilities(samples[0].image, ckpt));
  CHECK(serialize_checkpoint(back) == serialize_checkpoint(ckpt));
  CHECK(training_log_text(back).find('\n') != std::string::npos);

  auto bytes = serialize_checkpoint(ckpt);
  for (std::size_t pos : {std::size_t{3}, bytes.size() / 2, bytes.size() - 9}) {
    auto flipped = bytes;
    flipped[pos] ^= 0x10;
    CHECK_THROWS_AS(deserialize_checkpoint(flipped), CorruptCheckpointError);
  }
  auto truncated = bytes;
  truncated.resize(bytes.size() - 100);
  CHECK_THROWS_AS(deserialize_checkpoint(truncated), CorruptCheckpointError);

  const auto deep = train_segmentation(build_unet(unet_spec(16, 4, 2), 4), samples, cfg);
  save_checkpoint(deep, dir / "deep.ckpt");
  CHECK_THROWS_AS(load_checkpoint(dir / "deep.ckpt", unet_spec(16, 2, 2)), SpecMismatchError);
  CHECK_NOTHROW(load_checkpoint(dir / "deep.ckpt", unet_spec(16, 4, 2)));
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), NotFoundError);
  fs::remove_all(dir);
}

TEST_CASE("spec json round trip") {
  for (const auto& spec : {unet_spec(64), unet_spec(32, 3, 4), lenet5_spec()}) {
    CHECK(spec_from_json(spec_to_json(spec)) == spec);
  }
  CHECK_THROWS_AS(spec_from_json(R"({"kind":"resnet"})"), FormatError);
}
