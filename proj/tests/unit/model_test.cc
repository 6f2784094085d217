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

#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "maskdet/errors.h"
#include "maskdet/nn/checkpoint.h"
#include "maskdet/nn/model.h"
#include "maskdet/tensor/gradcheck.h"
#include "test_util.h"

namespace maskdet::nn {
namespace {

using testing::random_tensor;

BackboneConfig small_backbone(int size = 32) { return BackboneConfig::desk(size, 0.125); }

TEST(BackboneConfig, DeskProfileShape) {
  const auto c = BackboneConfig::desk(75);
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.stem.size(), 3u);
  EXPECT_EQ(c.stem[0].stride, 2);
  EXPECT_EQ(c.blocks.size(), 4u);
  EXPECT_EQ(c.spatial_sizes(), (std::vector<int>{17, 17, 8, 8, 8}));
  EXPECT_EQ(c.feature_dim(), 144);
  EXPECT_EQ(BackboneConfig(), BackboneConfig::desk());
}

TEST(BackboneConfig, FullProfileValidates) {
  const auto c = BackboneConfig::inception_v3(299);
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.feature_dim(), 2048);
  EXPECT_EQ(c.spatial_sizes().back(), 8);
}

TEST(BackboneConfig, Invariants) {
  auto c = BackboneConfig::desk(31);
  EXPECT_THROW(c.validate(), ConfigError);
  c = BackboneConfig::desk(75);
  c.blocks[0].out_channels = 999;
  EXPECT_THROW(c.validate(), ConfigError);
  c = BackboneConfig::desk(75);
  c.blocks[1].branches.resize(1);
  EXPECT_THROW(c.validate(), ConfigError);
  c = BackboneConfig::desk(75);
  c.blocks[2].branches[0].out_channels = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(BackboneConfig, BranchSpatialMismatchRejected) {
  auto c = BackboneConfig::desk(75);
  c.blocks[0].branches[2].valid_padding = true;
  try {
    Model m(c, HeadConfig{}, 1);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("block 0 branch 2"), std::string::npos) << e.what();
  }
}

TEST(BackboneConfig, JsonRoundTrip) {
  for (const auto& c : {BackboneConfig::desk(75), BackboneConfig::inception_v3(299)}) {
    EXPECT_EQ(backbone_from_json(backbone_to_json(c)), c);
  }
  const HeadConfig h{3, 64, 0.25, 3};
  EXPECT_EQ(head_from_json(head_to_json(h)), h);
  EXPECT_THROW(head_from_json(nlohmann::json{{"neurons", 32}}), ConfigError);
}

TEST(HeadConfig, Invariants) {
  EXPECT_NO_THROW(HeadConfig{}.validate());
  EXPECT_THROW((HeadConfig{0, 32, 0.5, 3}).validate(), ConfigError);
  EXPECT_THROW((HeadConfig{4, 32, 0.5, 3}).validate(), ConfigError);
  EXPECT_THROW((HeadConfig{1, 48, 0.5, 3}).validate(), ConfigError);
  EXPECT_THROW((HeadConfig{1, 32, 1.0, 3}).validate(), ConfigError);
  EXPECT_THROW((HeadConfig{1, 32, 0.5, 2}).validate(), ConfigError);
}

TEST(Model, HeadParameterCountClosedForm) {
  const auto bb = small_backbone();
  const std::size_t f = static_cast<std::size_t>(bb.feature_dim());
  for (int layers = 1; layers <= 3; ++layers) {
    for (int n : {32, 64, 128}) {
      Model m(bb, HeadConfig{layers, n, 0.5, 3}, 7);
      const std::size_t nn = static_cast<std::size_t>(n);
      std::size_t expected = f * nn + nn + nn * 3 + 3;
      for (int l = 1; l < layers; ++l) expected += nn * nn + nn;
      EXPECT_EQ(m.head_parameter_count(), expected) << layers << "x" << n;
    }
  }
}

TEST(Model, ParameterCountIndependentOfSeed) {
  Model a(small_backbone(), HeadConfig{}, 1);
  Model b(small_backbone(), HeadConfig{}, 2);
  EXPECT_EQ(a.parameter_count(), b.parameter_count());
  ASSERT_EQ(a.parameters().size(), b.parameters().size());
  for (std::size_t i = 0; i < a.parameters().size(); ++i) EXPECT_EQ(a.parameters()[i].name, b.parameters()[i].name);
  EXPECT_NE(a.parameters()[0].tensor.values(), b.parameters()[0].tensor.values());
}

TEST(Model, InitializationScheme) {
  Model m(small_backbone(), HeadConfig{}, 3);
  const auto& w = m.parameter("backbone.stem.conv0.weight").tensor;
  const double limit = std::sqrt(6.0 / 27.0);
  for (float v : w.values()) EXPECT_LE(std::abs(v), limit);
  for (float v : m.parameter("backbone.stem.conv0.bn.gamma").tensor.values()) EXPECT_EQ(v, 1.0f);
  for (float v : m.parameter("backbone.stem.conv0.bn.beta").tensor.values()) EXPECT_EQ(v, 0.0f);
  for (float v : m.parameter("head.out.bias").tensor.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Model, AcceptsFullSizeInput) {
  Model m(BackboneConfig::desk(299), HeadConfig{}, 4);
  Rng rng(1);
  const auto p = m.forward(random_tensor<float>({1, 3, 299, 299}, rng));
  EXPECT_EQ(p.shape(), (Shape{1, 3}));
}

TEST(Model, ForwardShapeAndSoftmaxRows) {
  Model m(small_backbone(), HeadConfig{2, 64, 0.5, 3}, 5);
  Rng rng(2);
  const auto p = m.forward(random_tensor<float>({4, 3, 32, 32}, rng));
  ASSERT_EQ(p.shape(), (Shape{4, 3}));
  for (std::size_t r = 0; r < 4; ++r) EXPECT_NEAR(p[3 * r] + p[3 * r + 1] + p[3 * r + 2], 1.0, 1e-6);
}

TEST(Model, WrongSpatialSizeIsDimensionError) {
  Model m(small_backbone(), HeadConfig{}, 5);
  Rng rng(2);
  EXPECT_THROW(m.forward(random_tensor<float>({1, 3, 33, 33}, rng)), DimensionError);
  EXPECT_THROW(m.forward(random_tensor<float>({1, 1, 32, 32}, rng)), DimensionError);
}

TEST(Model, EvalForwardIsDeterministicAndRowwise) {
  Model m(small_backbone(), HeadConfig{}, 6);
  Rng rng(3);
  auto x = random_tensor<float>({3, 3, 32, 32}, rng);
  std::copy_n(x.data().begin(), 3 * 32 * 32, x.data().begin() + 2 * 3 * 32 * 32);
  const auto a = m.forward(x);
  const auto b = m.forward(x);
  EXPECT_EQ(a.values(), b.values());
  for (int c = 0; c < 3; ++c) EXPECT_EQ(a[c], a[6 + c]);
}

TEST(Model, TrainAndEvalDifferWithDropout) {
  Model m(small_backbone(), HeadConfig{1, 128, 0.5, 3}, 8);
  m.set_trainable(TrainableSelector::backbone_all(), false);
  Rng rng(4);
  const auto x = random_tensor<float>({8, 3, 32, 32}, rng);
  const auto eval = m.forward(x);
  m.set_mode(Mode::kTrain);
  int differing = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto train = m.forward(x);
    for (std::size_t i = 0; i < train.numel(); ++i) differing += train[i] != eval[i];
  }
  // Frozen normalization keeps the backbone fixed, so only dropout can move
  // the output; nearly every probability should change.
  EXPECT_GT(differing, 200);

  Model no_drop(small_backbone(), HeadConfig{1, 128, 0.0, 3}, 8);
  no_drop.set_trainable(TrainableSelector::backbone_all(), false);
  const auto e2 = no_drop.forward(x);
  no_drop.set_mode(Mode::kTrain);
  EXPECT_EQ(no_drop.forward(x).values(), e2.values());
}

TEST(Model, SetTrainableSelectors) {
  Model m(small_backbone(), HeadConfig{2, 32, 0.5, 3}, 9);
  const std::size_t total = m.parameters().size();
  EXPECT_EQ(m.set_trainable(TrainableSelector::all(), true), total);
  for (const auto& p : m.parameters()) EXPECT_TRUE(p.trainable());

  const std::size_t backbone = m.set_trainable(TrainableSelector::backbone_all(), false);
  const std::size_t head = m.set_trainable(TrainableSelector::head(), true);
  EXPECT_EQ(backbone + head, total);
  EXPECT_EQ(head, 6u);
  for (const auto& p : m.parameters()) EXPECT_EQ(p.trainable(), p.name.starts_with("head.")) << p.name;

  const std::size_t last = m.set_trainable(TrainableSelector::backbone_last_k(2), true);
  EXPECT_GT(last, 0u);
  std::size_t audited = 0;
  for (const auto& p : m.parameters()) {
    const bool in_last = p.name.starts_with("backbone.block2.") || p.name.starts_with("backbone.block3.");
    EXPECT_EQ(p.trainable(), in_last || p.name.starts_with("head.")) << p.name;
    audited += in_last;
  }
  EXPECT_EQ(audited, last);
  EXPECT_THROW(m.set_trainable(TrainableSelector::backbone_last_k(5), true), UsageError);
}

TEST(TrainableSelector, Parse) {
  EXPECT_EQ(TrainableSelector::parse("head").kind, TrainableSelector::Kind::kHead);
  EXPECT_EQ(TrainableSelector::parse("all").kind, TrainableSelector::Kind::kAll);
  EXPECT_EQ(TrainableSelector::parse("backbone_all").kind, TrainableSelector::Kind::kBackboneAll);
  const auto s = TrainableSelector::parse("backbone_last_k(3)");
  EXPECT_EQ(s.kind, TrainableSelector::Kind::kBackboneLastK);
  EXPECT_EQ(s.k, 3u);
  EXPECT_THROW(TrainableSelector::parse("backbone_first"), UsageError);
}

TEST(Model, FrozenBackboneBuildsNoGraph) {
  Model m(small_backbone(), HeadConfig{}, 10);
  m.set_trainable(TrainableSelector::backbone_all(), false);
  m.set_mode(Mode::kTrain);
  Rng rng(5);
  const auto f = m.features(random_tensor<float>({2, 3, 32, 32}, rng));
  EXPECT_FALSE(f.requires_grad());
  const auto before = m.snapshot();
  m.features(random_tensor<float>({2, 3, 32, 32}, rng));
  EXPECT_EQ(m.snapshot().buffers[0].running_mean, before.buffers[0].running_mean);
}

TEST(Model, SnapshotRestore) {
  Model m(small_backbone(), HeadConfig{}, 11);
  const auto s = m.snapshot();
  m.parameters()[0].tensor[0] += 1.0f;
  m.buffers()[0].state->running_mean[0] = 3.0;
  m.restore(s);
  EXPECT_EQ(m.snapshot().parameters, s.parameters);
  EXPECT_EQ(m.buffers()[0].state->running_mean[0], 0.0);
}

// Cross-entropy of the whole model as a function of one of its tensors.
template <class T>
ScalarFn<T> loss_in(BasicModel<T>& m, const std::string& param, const BasicTensor<T>& x) {
  BasicTensor<T> targets({2, 3}, T{0});
  targets[0] = 1;
  targets[5] = 1;
  return [&m, param, x, targets](const BasicTensor<T>& p) {
    for (auto& q : m.parameters()) q.tensor.zero_grad();
    auto& slot = m.parameter(param).tensor;
    const BasicTensor<T> original = slot;
    // The probe arrives detached; keep it flagged so normalization stays in
    // the same (batch statistics) mode as the analytic pass.
    slot = p;
    if (!slot.requires_grad()) {
      slot = p.detach();
      slot.set_requires_grad(true);
    }
    auto loss = ops::softmax_cross_entropy(m.logits(x), targets);
    slot = original;
    return loss;
  };
}

// Analytic gradient of `m` against central differences of the same network
// evaluated in double precision. Float central differences cannot resolve a
// deep relu network: any step large enough to clear float rounding crosses
// many small relu switches (the double-precision differences at that step
// show the same bias), so the reference is taken in double with a tiny step.
template <class T>
double model_grad_error(BasicModel<T>& m, const std::string& param, std::uint64_t seed) {
  Rng rng(seed);
  const auto x = random_tensor<T>({2, 3, 48, 48}, rng);
  Model64 ref(m.backbone_config(), m.head_config(), 0);
  ref.set_mode(m.mode());
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    const auto& src = m.parameters()[i].tensor.values();
    std::copy(src.begin(), src.end(), ref.parameters()[i].tensor.data().begin());
  }
  BasicTensor<double> x64(x.shape());
  std::copy(x.values().begin(), x.values().end(), x64.data().begin());

  const auto analytic = analytic_gradient<T>(loss_in<T>(m, param, x), m.parameter(param).tensor);
  const auto f = loss_in<double>(ref, param, x64);
  BasicTensor<double> probe = ref.parameter(param).tensor.detach();
  const double eps = 1e-6;
  const double center = f(probe).item();
  std::vector<double> a, n;
  Rng pick(seed * 31 + 7);
  for (int i = 0; i < 24; ++i) {
    const auto k = static_cast<std::size_t>(pick.below(probe.numel()));
    const double saved = probe[k];
    probe[k] = saved + eps;
    const double plus = f(probe).item();
    probe[k] = saved - eps;
    const double minus = f(probe).item();
    probe[k] = saved;
    // A relu or max-pool switch inside the step shows up as a jump between
    // the one-sided slopes; such coordinates are skipped.
    const double up = (plus - center) / eps, down = (center - minus) / eps;
    if (std::abs(up - down) > 1e-4 * std::max(1.0, std::abs(up))) continue;
    a.push_back(analytic[k]);
    n.push_back((plus - minus) / (2 * eps));
  }
  EXPECT_GE(a.size(), 20u) << param;
  return max_relative_error(a, n);
}

template <class T>
class ModelGradCheck : public ::testing::Test {};
using Precisions = ::testing::Types<float, double>;
TYPED_TEST_SUITE(ModelGradCheck, Precisions);

TYPED_TEST(ModelGradCheck, CompositeModelAcrossSeeds) {
  using T = TypeParam;
  const double tol = std::is_same_v<T, float> ? 1e-3 : 1e-6;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    // Batch statistics make every sample depend on every other; train mode
    // checks that coupling, eval mode checks the frozen-statistics path.
    BasicModel<T> m(small_backbone(48), HeadConfig{2, 32, 0.0, 3}, seed);
    m.set_mode(seed % 2 ? Mode::kTrain : Mode::kEval);
    for (const char* name : {"head.fc1.weight", "head.fc0.bias", "backbone.block3.branch1_factorized7x7.conv7x1.weight",
                             "backbone.block0.branch0_conv1x1.conv.bn.gamma"}) {
      EXPECT_LT(model_grad_error<T>(m, name, seed), tol) << name << " seed " << seed;
    }
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  testing::TempDir dir("ckpt");
  Model m(small_backbone(), HeadConfig{2, 64, 0.5, 3}, 12);
  m.set_mode(Mode::kTrain);
  Rng rng(6);
  const auto x = random_tensor<float>({4, 3, 32, 32}, rng);
  m.forward(x);  // moves the running statistics off their initial values
  m.set_mode(Mode::kEval);
  const auto expected = m.forward(x);
  save_checkpoint(m, dir / "m.ckpt", {{"note", "unit"}});

  Model loaded = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(loaded.snapshot().parameters, m.snapshot().parameters);
  for (std::size_t i = 0; i < m.buffer_states().size(); ++i) {
    EXPECT_EQ(loaded.buffer_states()[i].running_mean, m.buffer_states()[i].running_mean);
    EXPECT_EQ(loaded.buffer_states()[i].running_var, m.buffer_states()[i].running_var);
  }
  const auto got = loaded.forward(x);
  double max_diff = 0;
  for (std::size_t i = 0; i < got.numel(); ++i) max_diff = std::max(max_diff, double(std::abs(got[i] - expected[i])));
  EXPECT_EQ(max_diff, 0.0);

  Model other(small_backbone(), HeadConfig{2, 64, 0.5, 3}, 99);
  load_weights(other, dir / "m.ckpt");
  EXPECT_EQ(other.forward(x).values(), expected.values());
  EXPECT_EQ(read_checkpoint_header(encode_checkpoint(m, {{"note", "unit"}})).meta.at("note"), "unit");
}

TEST(Checkpoint, EncodingIsDeterministic) {
  Model a(small_backbone(), HeadConfig{}, 13);
  Model b(small_backbone(), HeadConfig{}, 13);
  EXPECT_EQ(encode_checkpoint(a), encode_checkpoint(b));
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

TEST(Checkpoint, CorruptionRejected) {
  testing::TempDir dir("ckpt_bad");
  Model m(small_backbone(), HeadConfig{}, 14);
  const auto good = encode_checkpoint(m);

  auto bad_magic = good;
  bad_magic[0] = 'X';
  spit(dir / "magic.ckpt", bad_magic);
  EXPECT_THROW(load_checkpoint(dir / "magic.ckpt"), FormatError);

  auto bad_header = good;
  bad_header[8] = '!';
  spit(dir / "header.ckpt", bad_header);
  EXPECT_THROW(load_checkpoint(dir / "header.ckpt"), FormatError);

  auto truncated = good;
  truncated.resize(good.size() - 4);
  spit(dir / "trunc.ckpt", truncated);
  try {
    load_checkpoint(dir / "trunc.ckpt");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("running_var"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_checkpoint(dir / "absent.ckpt"), IoError);
}

TEST(Checkpoint, UnknownNameIsNamed) {
  testing::TempDir dir("ckpt_name");
  Model m(small_backbone(), HeadConfig{}, 15);
  auto bytes = encode_checkpoint(m);
  std::uint32_t len = 0;
  std::memcpy(&len, bytes.data() + 4, 4);
  std::string header(bytes.begin() + 8, bytes.begin() + 8 + len);
  const std::string from = "\"head.out.bias\"";
  const std::string to = "\"head.out.bias2\"";
  header.replace(header.find(from), from.size(), to);
  std::vector<std::uint8_t> out(bytes.begin(), bytes.begin() + 4);
  const auto new_len = static_cast<std::uint32_t>(header.size());
  out.insert(out.end(), reinterpret_cast<const std::uint8_t*>(&new_len), reinterpret_cast<const std::uint8_t*>(&new_len) + 4);
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), bytes.begin() + 8 + len, bytes.end());
  spit(dir / "name.ckpt", out);
  try {
    load_checkpoint(dir / "name.ckpt");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("head.out.bias2"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, ConfigMismatchRefused) {
  testing::TempDir dir("ckpt_cfg");
  Model a(small_backbone(), HeadConfig{1, 32, 0.5, 3}, 16);
  save_checkpoint(a, dir / "a.ckpt");
  Model b(small_backbone(), HeadConfig{2, 32, 0.5, 3}, 16);
  EXPECT_THROW(load_weights(b, dir / "a.ckpt"), ConfigError);
  Model c(BackboneConfig::desk(40, 0.125), HeadConfig{1, 32, 0.5, 3}, 16);
  EXPECT_THROW(load_weights(c, dir / "a.ckpt"), ConfigError);

  // Backbone transfer ignores the head.
  const std::size_t copied = load_backbone(b, dir / "a.ckpt");
  EXPECT_GT(copied, 0u);
  for (const auto& p : b.parameters()) {
    if (p.name.starts_with("backbone.")) EXPECT_EQ(p.tensor.values(), a.find(p.name)->tensor.values()) << p.name;
  }
  EXPECT_THROW(load_backbone(c, dir / "a.ckpt"), ConfigError);
}

}  // namespace
}  // namespace maskdet::nn
