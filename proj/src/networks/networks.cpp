#include "lesion/networks.hpp"

#include <cmath>
#include <numeric>

#include "lesion/errors.hpp"
#include "lesion/optim.hpp"
#include "lesion/random.hpp"

namespace lesion::nets {

using ad::Padding;
using ad::Tape;
using ad::Var;

const char* to_string(NetKind kind) noexcept { return kind == NetKind::Unet ? "unet" : "lenet5"; }

NetworkSpec unet_spec(std::size_t size, std::size_t depth, std::size_t base_channels) {
  NetworkSpec s;
  s.kind = NetKind::Unet;
  s.input_size = {3, size, size};
  s.depth = depth;
  s.base_channels = base_channels;
  s.class_count = 0;
  return s;
}

NetworkSpec lenet5_spec(std::size_t class_count) {
  NetworkSpec s;
  s.kind = NetKind::Lenet5;
  s.input_size = {3, 32, 32};
  s.depth = 0;
  s.base_channels = 0;
  s.class_count = class_count;
  return s;
}

void validate(const NetworkSpec& spec) {
  const auto [c, h, w] = spec.input_size;
  if (c == 0 || h == 0 || w == 0) throw ConfigError("network input size must be positive");
  if (spec.kind == NetKind::Unet) {
    if (spec.depth == 0 || spec.depth > 16) throw ConfigError("unet depth must be in [1,16]");
    if (spec.base_channels == 0) throw ConfigError("unet base channel count must be positive");
    const std::size_t factor = std::size_t{1} << spec.depth;
    if (h % factor != 0 || w % factor != 0) {
      throw ConfigError("unet input " + std::to_string(h) + "x" + std::to_string(w) + " is not divisible by 2^" +
                        std::to_string(spec.depth));
    }
  } else {
    if (c != 3 || h != 32 || w != 32) throw ConfigError("lenet5 expects a (3,32,32) input");
    if (spec.class_count < 2) throw ConfigError("lenet5 needs at least two classes");
  }
}

std::vector<std::size_t> encoder_widths(const NetworkSpec& spec) {
  std::vector<std::size_t> widths;
  for (std::size_t l = 0; l < spec.depth; ++l) widths.push_back(spec.base_channels << l);
  return widths;
}

namespace {

void add_conv(std::vector<std::pair<std::string, Shape>>& out, const std::string& name, std::size_t c_out,
              std::size_t c_in, std::size_t k) {
  out.emplace_back(name + ".weight", Shape{c_out, c_in, k, k});
  out.emplace_back(name + ".bias", Shape{c_out});
}

void add_dense(std::vector<std::pair<std::string, Shape>>& out, const std::string& name, std::size_t m,
               std::size_t n) {
  out.emplace_back(name + ".weight", Shape{m, n});
  out.emplace_back(name + ".bias", Shape{m});
}

// Binds parameters by name, trainable or read-only.
template <typename Net>
struct Binder {
  Net& net;
  Tape& tape;

  Var operator()(const std::string& name) const {
    if constexpr (std::is_const_v<Net>) {
      return tape.frozen(net.params.at(name));
    } else {
      return tape.parameter(net.params.at(name));
    }
  }
  Var conv(Var x, const std::string& name, Padding pad) const {
    return ad::conv2d(x, (*this)(name + ".weight"), (*this)(name + ".bias"), pad);
  }
  Var dense(Var x, const std::string& name) const {
    return ad::dense(x, (*this)(name + ".weight"), (*this)(name + ".bias"));
  }
};

template <typename Net>
Var unet_forward(const Binder<Net>& bind, Var x, std::size_t depth) {
  std::vector<Var> skips;
  for (std::size_t l = 0; l < depth; ++l) {
    const std::string name = "enc" + std::to_string(l);
    x = ad::relu(bind.conv(x, name + ".conv1", Padding::Same));
    x = ad::relu(bind.conv(x, name + ".conv2", Padding::Same));
    skips.push_back(x);
    x = ad::maxpool2d(x);
  }
  x = ad::relu(bind.conv(x, "bottleneck.conv1", Padding::Same));
  x = ad::relu(bind.conv(x, "bottleneck.conv2", Padding::Same));
  for (std::size_t l = depth; l-- > 0;) {
    const std::string name = "dec" + std::to_string(l);
    x = ad::concat_channels(ad::upsample2x(x), skips[l]);
    x = ad::relu(bind.conv(x, name + ".conv1", Padding::Same));
    x = ad::relu(bind.conv(x, name + ".conv2", Padding::Same));
  }
  return ad::sigmoid(bind.conv(x, "head", Padding::Same));
}

template <typename Net>
Var lenet_forward(const Binder<Net>& bind, Var x) {
  x = ad::maxpool2d(ad::relu(bind.conv(x, "conv1", Padding::Valid)));
  x = ad::maxpool2d(ad::relu(bind.conv(x, "conv2", Padding::Valid)));
  x = ad::flatten(x);
  x = ad::relu(bind.dense(x, "fc1"));
  x = ad::relu(bind.dense(x, "fc2"));
  return bind.dense(x, "fc3");
}

template <typename Net>
Var forward_impl(Net& net, Tape& tape, Var input) {
  const auto& spec = net.spec;
  const Shape expected{spec.input_size[0], spec.input_size[1], spec.input_size[2]};
  if (input.shape() != expected) {
    throw DimensionError("network expects input " + shape_string(expected) + ", got " + shape_string(input.shape()));
  }
  const Binder<Net> bind{net, tape};
  return spec.kind == NetKind::Unet ? unet_forward(bind, input, spec.depth) : lenet_forward(bind, input);
}

Network initialise(const NetworkSpec& spec, std::uint64_t seed) {
  validate(spec);
  Network net{spec, {}};
  Rng rng(seed);
  for (auto& [name, shape] : parameter_layout(spec)) {
    Tensor t(shape, 0.0);
    if (shape.size() > 1) {
      const std::size_t fan_in = shape_size(shape) / shape[0];
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (auto& v : t.values()) v = rng.normal(0.0, stddev);
    }
    net.params.add(name, std::move(t));
  }
  return net;
}

// Read-only view so inference does not copy the checkpoint's parameters.
struct NetworkRef {
  const NetworkSpec& spec;
  const ad::ParameterSet& params;
};

using LossFn = std::function<Var(Network&, Tape&, std::size_t sample)>;

Checkpoint train_loop(Network net, std::size_t sample_count, const TrainConfig& config, const LossFn& sample_loss,
                      const ProgressFn& progress) {
  validate(config);
  if (sample_count == 0) throw NoInputError("training set is empty");
  ad::Adam adam(net.params, {config.learning_rate, config.beta1, config.beta2, config.epsilon});
  Rng rng(config.seed);
  std::vector<std::size_t> order(sample_count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = sample_count;

  Checkpoint ckpt;
  ckpt.spec = net.spec;
  ckpt.seed = config.seed;
  ckpt.training_log.reserve(config.iterations);
  const std::size_t batch = std::min(config.batch_size, sample_count);
  for (std::size_t iter = 0; iter < config.iterations; ++iter) {
    net.params.zero_grad();
    Tape tape;
    Var total{};
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == sample_count) {
        rng.shuffle(order.begin(), order.end());
        cursor = 0;
      }
      const Var loss = sample_loss(net, tape, order[cursor++]);
      total = b == 0 ? loss : ad::add(total, loss);
    }
    const Var loss = ad::scale(total, 1.0 / static_cast<double>(batch));
    const double value = loss.value().item();
    if (!std::isfinite(value)) {
      throw DivergenceError(iter, "loss became non-finite at iteration " + std::to_string(iter));
    }
    tape.backward(loss);
    adam.step(net.params);
    ckpt.training_log.push_back(value);
    if (progress) progress(iter, value);
  }
  ckpt.iteration_count = config.iterations;
  ckpt.parameters = std::move(net.params);
  return ckpt;
}

}  // namespace

std::vector<std::pair<std::string, Shape>> parameter_layout(const NetworkSpec& spec) {
  validate(spec);
  std::vector<std::pair<std::string, Shape>> out;
  if (spec.kind == NetKind::Unet) {
    const auto widths = encoder_widths(spec);
    std::size_t in = spec.input_size[0];
    for (std::size_t l = 0; l < spec.depth; ++l) {
      const std::string name = "enc" + std::to_string(l);
      add_conv(out, name + ".conv1", widths[l], in, 3);
      add_conv(out, name + ".conv2", widths[l], widths[l], 3);
      in = widths[l];
    }
    const std::size_t bottom = spec.base_channels << spec.depth;
    add_conv(out, "bottleneck.conv1", bottom, in, 3);
    add_conv(out, "bottleneck.conv2", bottom, bottom, 3);
    std::size_t below = bottom;
    for (std::size_t l = spec.depth; l-- > 0;) {
      const std::string name = "dec" + std::to_string(l);
      add_conv(out, name + ".conv1", widths[l], below + widths[l], 3);
      add_conv(out, name + ".conv2", widths[l], widths[l], 3);
      below = widths[l];
    }
    add_conv(out, "head", 1, widths[0], 1);
  } else {
    add_conv(out, "conv1", 6, spec.input_size[0], 5);
    add_conv(out, "conv2", 16, 6, 5);
    add_dense(out, "fc1", 120, 16 * 5 * 5);
    add_dense(out, "fc2", 84, 120);
    add_dense(out, "fc3", spec.class_count, 84);
  }
  return out;
}

Network build_unet(const NetworkSpec& spec, std::uint64_t seed) {
  if (spec.kind != NetKind::Unet) throw ConfigError("build_unet: spec is not a unet");
  return initialise(spec, seed);
}

Network build_lenet5(const NetworkSpec& spec, std::uint64_t seed) {
  if (spec.kind != NetKind::Lenet5) throw ConfigError("build_lenet5: spec is not a lenet5");
  return initialise(spec, seed);
}

Network build_network(const NetworkSpec& spec, std::uint64_t seed) { return initialise(spec, seed); }

Var forward(Network& net, Tape& tape, Var input) { return forward_impl(net, tape, input); }
Var forward(const Network& net, Tape& tape, Var input) { return forward_impl(net, tape, input); }

void validate(const TrainConfig& c) {
  if (c.iterations == 0) throw ConfigError("iterations must be at least 1");
  if (c.batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (!(c.mask_threshold > 0.0 && c.mask_threshold < 1.0)) throw ConfigError("mask threshold must lie in (0,1)");
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) throw ConfigError("learning rate must be > 0");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0,1)");
  }
  if (!(c.epsilon > 0.0)) throw ConfigError("Adam epsilon must be > 0");
}

Checkpoint train_segmentation(Network net, std::span<const SegmentationSample> samples, const TrainConfig& config,
                              const ProgressFn& progress) {
  if (net.spec.kind != NetKind::Unet) throw ConfigError("train_segmentation needs a unet");
  const Shape image_shape{net.spec.input_size[0], net.spec.input_size[1], net.spec.input_size[2]};
  const Shape mask_shape{1, net.spec.input_size[1], net.spec.input_size[2]};
  for (const auto& s : samples) {
    if (s.image.shape() != image_shape || s.mask.shape() != mask_shape) {
      throw DimensionError("segmentation sample " + shape_string(s.image.shape()) + "/" + shape_string(s.mask.shape()) +
                           " does not match the network input " + shape_string(image_shape));
    }
  }
  return train_loop(
      std::move(net), samples.size(), config,
      [&](Network& n, Tape& tape, std::size_t i) {
        return ad::loss_bce(forward(n, tape, tape.constant_ref(samples[i].image)), samples[i].mask);
      },
      progress);
}

Checkpoint train_classifier(Network net, std::span<const ClassificationSample> samples, const TrainConfig& config,
                            const ProgressFn& progress) {
  if (net.spec.kind != NetKind::Lenet5) throw ConfigError("train_classifier needs a lenet5");
  const Shape image_shape{net.spec.input_size[0], net.spec.input_size[1], net.spec.input_size[2]};
  bool seen[2] = {false, false};
  for (const auto& s : samples) {
    if (s.image.shape() != image_shape) {
      throw DimensionError("classification sample " + shape_string(s.image.shape()) + " does not match " +
                           shape_string(image_shape));
    }
    seen[static_cast<int>(s.label)] = true;
  }
  auto ckpt = train_loop(
      std::move(net), samples.size(), config,
      [&](Network& n, Tape& tape, std::size_t i) {
        return ad::loss_softmax_ce(forward(n, tape, tape.constant_ref(samples[i].image)),
                                   static_cast<std::size_t>(samples[i].label));
      },
      progress);
  if (seen[0] != seen[1]) ckpt.notes.push_back("warning: training set contains a single class");
  return ckpt;
}

Tensor segment_probabilities(const Tensor& image, const Checkpoint& checkpoint) {
  if (checkpoint.spec.kind != NetKind::Unet) throw ConfigError("segment needs a unet checkpoint");
  const NetworkRef net{checkpoint.spec, checkpoint.parameters};
  Tape tape;
  return forward_impl(net, tape, tape.constant_ref(image)).value();
}

BitMask segment(const Tensor& image, const Checkpoint& checkpoint, double threshold) {
  const Tensor prob = segment_probabilities(image, checkpoint);
  BitMask mask(prob.dim(1), prob.dim(2));
  for (std::size_t i = 0; i < mask.bits.size(); ++i) mask.bits[i] = prob[i] >= threshold ? 1 : 0;
  return mask;
}

Classification classify(const Tensor& crop, const Checkpoint& checkpoint) {
  if (checkpoint.spec.kind != NetKind::Lenet5) throw ConfigError("classify needs a lenet5 checkpoint");
  const NetworkRef net{checkpoint.spec, checkpoint.parameters};
  Tape tape;
  const Tensor probs = ad::softmax(forward_impl(net, tape, tape.constant_ref(crop)).value());
  Classification c;
  c.probabilities = {probs[0], probs[1]};
  c.label = probs[1] > probs[0] ? Label::Malignant : Label::Benign;
  return c;
}

}  // namespace lesion::nets
