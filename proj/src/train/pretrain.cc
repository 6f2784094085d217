// Copyright 2026 The maskdet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "maskdet/train/pretrain.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "maskdet/data/dataset.h"
#include "maskdet/errors.h"

namespace maskdet::train {
namespace {

Rgb random_color(Rng& rng) {
  return {static_cast<std::uint8_t>(rng.below(256)), static_cast<std::uint8_t>(rng.below(256)),
          static_cast<std::uint8_t>(rng.below(256))};
}

Rgb family_color(std::size_t family, Rng& rng) {
  if (family == 3) {
    const int g = static_cast<int>(rng.below(256));
    Rgb c{};
    for (auto& ch : c) ch = static_cast<std::uint8_t>(std::clamp<std::int64_t>(g + rng.uniform_int(-12, 12), 0, 255));
    return c;
  }
  const int top = static_cast<int>(rng.uniform_int(150, 255));
  Rgb c{};
  for (std::size_t ch = 0; ch < 3; ++ch) {
    c[ch] = static_cast<std::uint8_t>(ch == family ? top : static_cast<int>(rng.uniform_int(0, top * 6 / 10)));
  }
  return c;
}

int color_distance(const Rgb& a, const Rgb& b) {
  int d = 0;
  for (int c = 0; c < 3; ++c) d += std::abs(int(a[c]) - int(b[c]));
  return d;
}

bool inside(std::size_t shape, double u, double v) {
  // (u, v) relative to the shape centre, in units of its half-extent.
  switch (shape) {
    case 0:
      return u * u + v * v <= 1.0;
    case 1:
      return std::abs(u) <= 0.85 && std::abs(v) <= 0.85;
    default:
      // Upright triangle with apex at v = -1 and base at v = 1.
      return v <= 1.0 && v >= -1.0 && std::abs(u) <= (v + 1.0) / 2.0;
  }
}

struct ProxySet {
  Tensor images;
  std::vector<std::size_t> labels;
};

ProxySet make_set(std::size_t n_per_class, std::size_t size, std::uint64_t seed) {
  const std::size_t n = n_per_class * kProxyClasses;
  ProxySet set{Tensor({n, 3, size, size}), {}};
  const std::size_t stride = 3 * size * size;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = i % kProxyClasses;
    Rng rng(derive_seed({seed, i}));
    normalize_into(proxy_image(cls, size, rng), set.images.data().subspan(i * stride, stride));
    set.labels.push_back(cls);
  }
  return set;
}

std::pair<Tensor, Tensor> gather(const ProxySet& set, std::span<const std::size_t> ids, std::size_t size) {
  const std::size_t stride = 3 * size * size;
  Tensor x({ids.size(), 3, size, size});
  Tensor t({ids.size(), kProxyClasses}, 0.0f);
  for (std::size_t k = 0; k < ids.size(); ++k) {
    std::copy_n(set.images.data().begin() + static_cast<std::ptrdiff_t>(ids[k] * stride), stride,
                x.data().begin() + static_cast<std::ptrdiff_t>(k * stride));
    t[k * kProxyClasses + set.labels[ids[k]]] = 1.0f;
  }
  return {x, t};
}

}  // namespace

ImageU8 proxy_image(std::size_t label, std::size_t image_size, Rng& rng) {
  if (label >= kProxyClasses) throw ParameterError("proxy_image: label out of range");
  const std::size_t shape = label / 12;
  const std::size_t family = (label / 3) % 4;
  const std::size_t coverage = label % 3;
  const Rgb fill = family_color(family, rng);
  Rgb background = random_color(rng);
  while (color_distance(fill, background) < 120) background = random_color(rng);
  Rgb band = fill;
  if (coverage > 0) {
    while (color_distance(band, fill) < 150 || color_distance(band, background) < 80) band = random_color(rng);
  }
  // Band covers one side of the shape: axis 0/1 picks u/v, sign picks the side.
  const std::size_t axis = rng.below(2);
  const double side = rng.below(2) == 0 ? -1.0 : 1.0;
  const double fraction = coverage == 1 ? rng.uniform(0.15, 0.3) : rng.uniform(0.4, 0.6);
  const double cut = 1.0 - 2.0 * fraction;
  const double s = static_cast<double>(image_size);
  const double half = s * rng.uniform(0.15, 0.35);
  const double cx = rng.uniform(half, s - half);
  const double cy = rng.uniform(half, s - half);
  ImageU8 img(image_size, image_size, background);
  for (std::size_t y = 0; y < image_size; ++y) {
    for (std::size_t x = 0; x < image_size; ++x) {
      const double u = (static_cast<double>(x) + 0.5 - cx) / half;
      const double v = (static_cast<double>(y) + 0.5 - cy) / half;
      Rgb c = background;
      if (inside(shape, u, v)) c = side * (axis == 0 ? u : v) > cut ? band : fill;
      for (auto& ch : c) ch = static_cast<std::uint8_t>(std::clamp<long>(long(ch) + rng.uniform_int(-10, 10), 0, 255));
      img.set(x, y, c);
    }
  }
  return img;
}

PretrainResult pretrain(nn::Model& model, const PretrainOptions& options) {
  if (options.n_per_class == 0 || options.batch_size == 0) throw ParameterError("pretrain: empty proxy set or batch");
  const std::size_t size = static_cast<std::size_t>(model.backbone_config().input_size);
  const ProxySet train_set = make_set(options.n_per_class, size, derive_seed({options.seed, 1}));
  const ProxySet held_out = make_set(std::max<std::size_t>(options.n_per_class / 4, 1), size, derive_seed({options.seed, 2}));

  model.set_trainable(nn::TrainableSelector::all(), false);
  model.set_trainable(nn::TrainableSelector::backbone_all(), true);
  model.set_batch_norm_training(true);
  Adam optimizer(model.parameters(), AdamConfig{options.lr});
  // The proxy task has its own linear probe; the model head is left alone.
  const std::size_t features = static_cast<std::size_t>(model.backbone_config().feature_dim());
  std::vector<Parameter> probe{{"probe.weight", Tensor({features, kProxyClasses})},
                               {"probe.bias", Tensor({kProxyClasses}, 0.0f)}};
  Rng init(derive_seed({options.seed, 0x9e}));
  const double limit = std::sqrt(6.0 / static_cast<double>(features));
  for (auto& w : probe[0].tensor.data()) w = static_cast<float>(init.uniform(-limit, limit));
  for (auto& p : probe) p.tensor.set_requires_grad(true);
  Adam probe_optimizer(probe, AdamConfig{options.lr});
  const auto proxy_logits = [&](const Tensor& x) {
    return ops::linear(model.features(x), probe[0].tensor, probe[1].tensor);
  };
  PretrainResult result;
  std::vector<std::size_t> order(train_set.labels.size());
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(derive_seed({options.seed, static_cast<std::uint64_t>(epoch), 0x5348}));
    shuffle.shuffle(std::span<std::size_t>(order));
    model.set_mode(Mode::kTrain);
    model.set_dropout_seed(derive_seed({options.seed, static_cast<std::uint64_t>(epoch), 0xd0}));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < order.size(); b += options.batch_size) {
      const auto ids = std::span<const std::size_t>(order).subspan(b, std::min(options.batch_size, order.size() - b));
      const auto [x, t] = gather(train_set, ids, size);
      optimizer.zero_grad();
      probe_optimizer.zero_grad();
      const Tensor logits = proxy_logits(x);
      const Tensor loss = ops::softmax_cross_entropy(logits, t);
      loss.backward();
      optimizer.step();
      probe_optimizer.step();
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(ids.size());
      const auto pred = ops::argmax_rows(logits);
      for (std::size_t k = 0; k < ids.size(); ++k) correct += pred[k] == train_set.labels[ids[k]];
    }
    optimizer.zero_grad();
    probe_optimizer.zero_grad();
    EpochLog log{epoch, 0, loss_sum / double(order.size()), double(correct) / double(order.size()), 0, 0, 0};

    model.set_mode(Mode::kEval);
    std::vector<std::size_t> all(held_out.labels.size());
    std::iota(all.begin(), all.end(), 0);
    double val_loss = 0.0;
    std::size_t val_correct = 0;
    for (std::size_t b = 0; b < all.size(); b += 32) {
      const auto ids = std::span<const std::size_t>(all).subspan(b, std::min<std::size_t>(32, all.size() - b));
      const auto [x, t] = gather(held_out, ids, size);
      const Tensor logits = proxy_logits(x).detach();
      val_loss += static_cast<double>(ops::softmax_cross_entropy(logits, t).item()) * double(ids.size());
      const auto pred = ops::argmax_rows(logits);
      for (std::size_t k = 0; k < ids.size(); ++k) val_correct += pred[k] == held_out.labels[ids[k]];
    }
    log.val_loss = val_loss / double(all.size());
    log.val_acc = double(val_correct) / double(all.size());
    log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.logs.push_back(log);
  }
  model.set_trainable(nn::TrainableSelector::all(), false);
  model.set_mode(Mode::kEval);
  if (options.calibration_batches > 0) calibrate_batch_norm(model, options.calibration_batches, options.calibration_seed);
  return result;
}

void calibrate_batch_norm(nn::Model& model, std::size_t batches, std::uint64_t seed) {
  constexpr std::size_t kBatch = 32;
  const std::size_t size = static_cast<std::size_t>(model.backbone_config().input_size);
  const std::size_t stride = 3 * size * size;
  const SynthOptions render;
  std::vector<bool> trainable;
  for (const auto& p : model.parameters()) trainable.push_back(p.trainable());
  const Mode mode = model.mode();
  const bool bn_training = model.batch_norm_training();

  // Batch statistics are only used with trainable scale parameters.
  model.set_trainable(nn::TrainableSelector::all(), true);
  model.set_mode(Mode::kTrain);
  model.set_batch_norm_training(true);
  for (std::size_t b = 0; b < batches; ++b) {
    Tensor x({kBatch, 3, size, size});
    for (std::size_t i = 0; i < kBatch; ++i) {
      Rng rng(derive_seed({seed, b, i}));
      const ImageU8 face = synth_face(static_cast<Label>(i % kNumClasses), render.image_size, rng);
      normalize_into(resize_bilinear(face, size, size), x.data().subspan(i * stride, stride));
    }
    model.features(x);
  }
  auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].tensor.set_requires_grad(trainable[i]);
  }
  model.set_mode(mode);
  model.set_batch_norm_training(bn_training);
}

}  // namespace maskdet::train
