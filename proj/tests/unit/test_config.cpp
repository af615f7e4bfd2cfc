/*
 * Copyright 2026 The CS3 Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <string>

#include "cs3/experiment.hpp"

namespace cs3 {
namespace {

std::string field_of(const std::string& text) {
  try {
    experiment_from_config(ConfigFile::parse(text));
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<accepted>";
}

TEST(ConfigFile, TypedScalarsAndLists) {
  const ConfigFile f = ConfigFile::parse(
      "top = 1\n"
      "[a.b]  # comment\n"
      "i = -3\n"
      "u = 42\n"
      "r = 1e-4\n"
      "yes = true\n"
      "s = \"has # hash\"\n"
      "bare = word\n"
      "xs = [1, 2, 3]\n"
      "bs = [true,false]\n"
      "empty = []\n");
  EXPECT_EQ(f.get_uint("top"), 1u);
  EXPECT_EQ(f.get_int("a.b.i"), -3);
  EXPECT_EQ(f.get_uint("a.b.u"), 42u);
  EXPECT_DOUBLE_EQ(*f.get_real("a.b.r"), 1e-4);
  EXPECT_EQ(f.get_bool("a.b.yes"), true);
  EXPECT_EQ(f.get_string("a.b.s"), "has # hash");
  EXPECT_EQ(f.get_string("a.b.bare"), "word");
  EXPECT_EQ(f.get_uint_list("a.b.xs"), (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(f.get_bool_list("a.b.bs"), (std::vector<bool>{true, false}));
  EXPECT_EQ(f.get_uint_list("a.b.empty"), std::vector<std::uint64_t>{});
  EXPECT_FALSE(f.get_real("a.b.missing"));
  EXPECT_NO_THROW(f.reject_unused());
}

TEST(ConfigFile, TypeErrorsNameTheKey) {
  const ConfigFile f = ConfigFile::parse("[x]\nn = abc\nq = \"5\"\nl = [1]\nb = yes\nneg = -1\n");
  auto field = [&](auto&& get) {
    try {
      get();
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("<accepted>");
  };
  EXPECT_EQ(field([&] { f.get_real("x.n"); }), "x.n");
  EXPECT_EQ(field([&] { f.get_uint("x.q"); }), "x.q");  // quoted is a string
  EXPECT_EQ(field([&] { f.get_uint("x.l"); }), "x.l");
  EXPECT_EQ(field([&] { f.get_uint_list("x.n"); }), "x.n");
  EXPECT_EQ(field([&] { f.get_bool("x.b"); }), "x.b");
  EXPECT_EQ(field([&] { f.get_uint("x.neg"); }), "x.neg");
}

TEST(ConfigFile, SyntaxErrors) {
  EXPECT_THROW(ConfigFile::parse("[open\n"), ConfigError);
  EXPECT_THROW(ConfigFile::parse("[bad name]\n"), ConfigError);
  EXPECT_THROW(ConfigFile::parse("novalue\n"), ConfigError);
  EXPECT_THROW(ConfigFile::parse("k =\n"), ConfigError);
  EXPECT_THROW(ConfigFile::parse("k-1 = 2\n"), ConfigError);
  EXPECT_THROW(ConfigFile::parse("k = [1, 2\n"), ConfigError);
  EXPECT_THROW(ConfigFile::parse("k = [1,,2]\n"), ConfigError);
  EXPECT_THROW(ConfigFile::parse("k = [1, 2,]\n"), ConfigError);
  EXPECT_THROW(ConfigFile::parse("k = \"open\n"), ConfigError);
  try {
    ConfigFile::parse("[s]\nk = 1\nk = 2\n");
    ADD_FAILURE();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "s.k");
  }
}

TEST(ConfigFile, UnusedKeysAreRejected) {
  const ConfigFile f = ConfigFile::parse("[s]\nused = 1\ntypo = 2\n");
  f.get_uint("s.used");
  try {
    f.reject_unused();
    ADD_FAILURE();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "s.typo");
  }
}

TEST(ExperimentConfig, DefaultsEnableAllModules) {
  const ExperimentConfig x = experiment_from_config(ConfigFile::parse(""));
  EXPECT_EQ(x.trainer.toggles, (ModuleToggles{true, true, true}));
  EXPECT_EQ(x.holdout_mode, EvalMode::Progressive);
  EXPECT_DOUBLE_EQ(x.trainer.optimizer.learning_rate, 1e-3);
  EXPECT_EQ(x.trainer.optimizer.kind, OptimizerKind::Adam);
  EXPECT_EQ(x.trainer.cascade.hidden_dims, (std::vector<std::size_t>{256, 128, 64, 32}));
  EXPECT_DOUBLE_EQ(x.trainer.stream.alpha, 0.9);
  EXPECT_DOUBLE_EQ(x.trainer.stream.beta, 0.9);
}

TEST(ExperimentConfig, ReadsEverySection) {
  const ExperimentConfig x = experiment_from_config(ConfigFile::parse(
      "[experiment]\nseeds = [4, 5]\nfield_dim = 6\nholdout_fraction = 0.25\n"
      "holdout_mode = frozen\njobs = 2\n"
      "[modules]\ncas = false\n"
      "[tower]\nhidden_dims = [10, 9]\nembedding_dim = 7\nactivation = sigmoid\n"
      "[tower.item]\nhidden_dims = [11, 9]\n"
      "[cascade]\nhidden_dims = [20, 10, 8, 4]\ntrain_fraction = 0.5\n"
      "[stream]\nalpha = 0.8\nbeta = 0.7\nbatch_size = 3\nwaiting_period_ms = 100\n"
      "cms_backend = server\nserver_address = \"127.0.0.1:9000\"\ncts_precision = f32\n"
      "[optimizer]\nkind = sgd\nlearning_rate = 0.01\nsparse_learning_rate = 0.1\n"
      "[synth]\nn_users = 10\nlength = 99\n"));
  EXPECT_EQ(x.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(x.field_dim, 6u);
  EXPECT_EQ(x.holdout_mode, EvalMode::Frozen);
  EXPECT_EQ(x.jobs, 2u);
  EXPECT_EQ(x.trainer.toggles, (ModuleToggles{false, true, true}));
  EXPECT_EQ(x.trainer.user_tower.hidden_dims, (std::vector<std::size_t>{10, 9}));
  EXPECT_EQ(x.trainer.item_tower.hidden_dims, (std::vector<std::size_t>{11, 9}));
  EXPECT_EQ(x.trainer.item_tower.embedding_dim, 7u);
  EXPECT_EQ(x.trainer.user_tower.activation, Activation::Sigmoid);
  EXPECT_EQ(x.trainer.cascade.representation_dim(), 4u);
  EXPECT_DOUBLE_EQ(x.trainer.cascade_train_fraction, 0.5);
  EXPECT_EQ(x.trainer.stream.batch_size, 3u);
  EXPECT_EQ(x.trainer.stream.cms_backend, CmsBackendKind::EmbeddingServer);
  EXPECT_EQ(x.trainer.stream.server_address, "127.0.0.1:9000");
  EXPECT_EQ(x.trainer.cts_precision, StoragePrecision::Single);
  EXPECT_EQ(x.trainer.optimizer.kind, OptimizerKind::SGD);
  EXPECT_DOUBLE_EQ(x.trainer.optimizer.sparse_learning_rate, 0.1);
  EXPECT_EQ(x.synth.n_users, 10u);
  EXPECT_EQ(x.synth.length, 99u);
}

TEST(ExperimentConfig, ValidationErrorsNameTheField) {
  EXPECT_EQ(field_of("[experiment]\nseeds = []\n"), "experiment.seeds");
  EXPECT_EQ(field_of("[experiment]\nholdout_fraction = 1\n"), "experiment.holdout_fraction");
  EXPECT_EQ(field_of("[experiment]\nholdout_mode = later\n"), "experiment.holdout_mode");
  EXPECT_EQ(field_of("[tower]\nactivation = tanh\n"), "tower.activation");
  EXPECT_EQ(field_of("[cascade]\nactivation = gelu\n"), "cascade.activation");
  EXPECT_EQ(field_of("[optimizer]\nkind = rmsprop\n"), "optimizer.kind");
  EXPECT_EQ(field_of("[optimizer]\nlearning_rate = -1\n"), "optimizer");
  EXPECT_EQ(field_of("[stream]\nalpha = 2\n"), "stream");
  EXPECT_EQ(field_of("[stream]\ncms_backend = redis\n"), "stream.cms_backend");
  EXPECT_EQ(field_of("[stream]\ncms_precision = f16\n"), "stream.cms_precision");
  EXPECT_EQ(field_of("[synth]\npositive_rate = 0\n"), "synth");
  EXPECT_EQ(field_of("[tower]\nembedding_dim = 0\n"), "tower.user");
  EXPECT_EQ(field_of("[modules]\ncsa = true\n"), "modules.csa");
}

TEST(ExperimentConfig, ShippedAblationConfigLoads) {
  const ExperimentConfig x = load_experiment(std::string(CS3_SOURCE_DIR) + "/configs/ablation.cfg");
  EXPECT_GE(x.seeds.size(), 5u);
  EXPECT_GE(x.synth.length, 200000u);
  EXPECT_GT(x.synth.drift_rate, 0.0);
}

TEST(ExperimentConfig, MissingFileIsAConfigError) {
  EXPECT_THROW(load_experiment("/nonexistent/cs3.cfg"), ConfigError);
}

}  // namespace
}  // namespace cs3
