#pragma once

#include <cstdint>
#include <memory>
#include <random>

#include "mlvae/config.hpp"
#include "mlvae/data.hpp"
#include "mlvae/networks.hpp"

namespace mlvae::testing {

/// Small labeled dataset: class c lights up image row c (plus noise), so
/// content is learnable in a few hundred steps.
inline DatasetSplits synthetic_splits(int classes = 3, int images_per_class = 20, int groups_per_class = 10,
                                      int group_size = 2, Index side = 8, std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> noise(0, 60);
  auto store = std::make_shared<ImageStore>();
  store->height = side;
  store->width = side;
  store->channels = 1;

  auto add_image = [&](int cls, std::int64_t source) {
    const auto index = static_cast<std::int32_t>(store->size());
    for (Index y = 0; y < side; ++y) {
      for (Index x = 0; x < side; ++x) {
        const int base = (y == cls % side) ? 220 : 0;
        store->pixels.push_back(static_cast<std::uint8_t>(std::min(255, base + noise(rng))));
      }
    }
    store->source_ids.push_back(source);
    return index;
  };

  DatasetSplits splits;
  splits.params.group_size = group_size;
  splits.params.groups_per_class = groups_per_class;
  std::int64_t source = 0;
  std::int64_t group_id = 0;
  for (int c = 0; c < classes; ++c) {
    std::vector<std::int32_t> pool;
    for (int i = 0; i < images_per_class; ++i) pool.push_back(add_image(c, source++));
    for (int g = 0; g < groups_per_class; ++g) {
      ObservationGroup group{group_id++, {}};
      std::vector<std::int32_t> shuffled = pool;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      for (int i = 0; i < group_size; ++i) group.members.push_back({shuffled[static_cast<std::size_t>(i)], c, 0.0f});
      splits.model_train.push_back(std::move(group));
    }
    for (int i = 0; i < images_per_class; ++i) splits.classifier_train.push_back({add_image(c, source++), c, 0.0f});
    for (int i = 0; i < images_per_class; ++i) {
      splits.eval_test.push_back({add_image(c, kTestSourceOffset + source++), c, 0.0f});
    }
  }
  splits.eval_variants.push_back({"test", splits.eval_test});
  splits.store = std::move(store);
  return splits;
}

inline NetworkConfig small_mlp(Index side = 8, Index dc = 2, Index ds = 3) {
  NetworkConfig c;
  c.architecture = Architecture::mlp;
  c.height = side;
  c.width = side;
  c.channels = 1;
  c.content_dim = dc;
  c.style_dim = ds;
  c.hidden = {16};
  c.critic_feature_dim = 6;
  c.critic_hidden = 12;
  return c;
}

inline NetworkConfig small_conv(Index side = 8, Index dc = 2, Index ds = 3) {
  NetworkConfig c = small_mlp(side, dc, ds);
  c.architecture = Architecture::conv;
  c.conv_channels = {3, 4};
  return c;
}

inline RunConfig small_run(std::int64_t iterations = 20) {
  RunConfig c;
  c.name = "unit";
  c.network = small_mlp();
  c.iterations = iterations;
  c.batch_groups = 4;
  c.critic_steps = 2;
  c.log_every = 5;
  c.checkpoint_every = 0;
  c.deterministic = true;
  c.optimizer.learning_rate = 1e-3;
  c.critic_learning_rate = 1e-3;
  return c;
}

}  // namespace mlvae::testing
