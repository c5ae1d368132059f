#pragma once

// U-Net segmenter and LeNet-5 classifier built on the autodiff tape, with
// their training loops and inference entry points.

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lesion/autodiff.hpp"
#include "lesion/image.hpp"
#include "lesion/label.hpp"

namespace lesion::nets {

enum class NetKind { Unet, Lenet5 };

const char* to_string(NetKind kind) noexcept;

struct NetworkSpec {
  NetKind kind = NetKind::Unet;
  /// (channels, height, width)
  std::array<std::size_t, 3> input_size{3, 64, 64};
  std::size_t depth = 4;
  std::size_t base_channels = 8;
  std::size_t class_count = 2;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

NetworkSpec unet_spec(std::size_t size, std::size_t depth = 4, std::size_t base_channels = 8);
NetworkSpec lenet5_spec(std::size_t class_count = 2);

/// Throws ConfigError when the spec cannot be built.
void validate(const NetworkSpec& spec);

/// Names and shapes of every parameter, in construction order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const NetworkSpec& spec);

struct Network {
  NetworkSpec spec;
  ad::ParameterSet params;
};

/// He-normal weights, zero biases, drawn from `seed`.
Network build_unet(const NetworkSpec& spec, std::uint64_t seed);
Network build_lenet5(const NetworkSpec& spec, std::uint64_t seed);
Network build_network(const NetworkSpec& spec, std::uint64_t seed);

/// Records a forward pass. Trainable binding makes backward() fill the
/// parameter grads; a const network binds read-only.
ad::Var forward(Network& net, ad::Tape& tape, ad::Var input);
ad::Var forward(const Network& net, ad::Tape& tape, ad::Var input);

/// Channel count of each U-Net encoder level.
std::vector<std::size_t> encoder_widths(const NetworkSpec& spec);

struct TrainConfig {
  std::size_t iterations = 2000;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  double mask_threshold = 0.5;
};

/// Throws ConfigError for out-of-range settings.
void validate(const TrainConfig& config);

struct Checkpoint {
  NetworkSpec spec;
  ad::ParameterSet parameters;
  /// Mean minibatch loss of every iteration.
  std::vector<double> training_log;
  std::uint64_t seed = 0;
  std::uint64_t iteration_count = 0;
  std::vector<std::string> notes;

  Network network() const { return {spec, parameters}; }
};

struct SegmentationSample {
  Tensor image;  // [C,H,W] in [0,1]
  Tensor mask;   // [1,H,W] of 0/1
};

struct ClassificationSample {
  Tensor image;  // [C,H,W] in [0,1]
  Label label = Label::Benign;
};

/// Called after every iteration with (iteration, loss).
using ProgressFn = std::function<void(std::size_t, double)>;

/// Adam on the mean BCE of shuffled minibatches. Throws NoInputError on an
/// empty set, DimensionError on mismatched shapes, DivergenceError on a
/// non-finite loss.
Checkpoint train_segmentation(Network net, std::span<const SegmentationSample> samples, const TrainConfig& config,
                              const ProgressFn& progress = {});

/// Adam on softmax cross-entropy. A single-class set trains but leaves a note.
Checkpoint train_classifier(Network net, std::span<const ClassificationSample> samples, const TrainConfig& config,
                            const ProgressFn& progress = {});

/// Sigmoid output [1,H,W]; throws DimensionError if the image does not match.
Tensor segment_probabilities(const Tensor& image, const Checkpoint& checkpoint);
/// Pixels with probability >= threshold become foreground.
BitMask segment(const Tensor& image, const Checkpoint& checkpoint, double threshold = 0.5);

struct Classification {
  Label label = Label::Benign;
  std::array<double, 2> probabilities{};
};

/// Argmax of softmax; exact ties go to benign.
Classification classify(const Tensor& crop, const Checkpoint& checkpoint);

}  // namespace lesion::nets
