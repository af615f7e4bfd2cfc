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

#include <cmath>

#include "cs3/param_server.hpp"

namespace cs3 {
namespace {

TEST(SparseTable, LazyMaterialization) {
  SparseTable t("user.id", 4, 1000, 9, 0.1);
  EXPECT_EQ(t.size(), 0u);
  const Vec peeked = t.peek(42);
  EXPECT_EQ(t.size(), 0u);
  EXPECT_FALSE(t.contains(42));
  EXPECT_EQ(t.lookup_embedding(42), peeked);
  EXPECT_EQ(t.size(), 1u);
  EXPECT_TRUE(t.contains(42));
  for (double x : peeked) EXPECT_LE(std::abs(x), 0.1);
}

TEST(SparseTable, IdsHashModuloTableSize) {
  SparseTable t("f", 2, 16);
  EXPECT_EQ(t.slot(3), 3u);
  EXPECT_EQ(t.slot(19), 3u);
  t.lookup_embedding(3);
  EXPECT_TRUE(t.contains(19));
  EXPECT_EQ(t.size(), 1u);
  EXPECT_EQ(SparseTable("g", 1).modulus(), 1u << 20);
}

TEST(SparseTable, InitialRowDependsOnFieldSlotAndSeed) {
  SparseTable a("a", 8, 1024, 1), b("b", 8, 1024, 1), c("a", 8, 1024, 2);
  EXPECT_EQ(a.peek(5), SparseTable("a", 8, 1024, 1).peek(5));
  EXPECT_NE(a.peek(5), a.peek(6));
  EXPECT_NE(a.peek(5), b.peek(5));
  EXPECT_NE(a.peek(5), c.peek(5));
}

TEST(SparseTable, SparseAdamTouchesOnlyOneRowAndKeepsItsOwnMoments) {
  SparseTable t("f", 2, 1024, 0, 0.0);
  OptimizerConfig opt;
  opt.learning_rate = 0.1;
  t.lookup_embedding(1);
  t.apply_sparse_grad(7, Vec{1.0, -1.0}, opt);
  t.apply_sparse_grad(7, Vec{1.0, -1.0}, opt);
  EXPECT_EQ(t.peek(1), (Vec{0.0, 0.0}));
  // Constant gradient: Adam moves each coordinate by ~lr per step.
  EXPECT_NEAR(t.peek(7)[0], -0.2, 1e-6);
  EXPECT_NEAR(t.peek(7)[1], 0.2, 1e-6);
  t.apply_sparse_grad(9, Vec{1.0, 1.0}, opt);
  EXPECT_NEAR(t.peek(9)[0], -0.1, 1e-6);
  const auto rows = t.sorted_rows();
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1].second->moments.step, 2u);
  EXPECT_EQ(rows[2].second->moments.step, 1u);
}

TEST(SparseTable, SparseSgdExample) {
  SparseTable t("f", 2, 1024);
  t.insert_row(3, SparseRow{Vec{1, 1}, {}});
  OptimizerConfig opt{OptimizerKind::SGD, 0.1};
  t.apply_sparse_grad(3, Vec{1, 0}, opt);
  EXPECT_DOUBLE_EQ(t.peek(3)[0], 0.9);
  EXPECT_DOUBLE_EQ(t.peek(3)[1], 1.0);
}

TEST(SparseTable, RejectsBadGradients) {
  SparseTable t("f", 2);
  EXPECT_THROW(t.apply_sparse_grad(1, Vec{1.0}, OptimizerConfig{}), ShapeError);
  EXPECT_THROW(t.apply_sparse_grad(1, Vec{1.0, NAN}, OptimizerConfig{}), NumericError);
  EXPECT_EQ(t.size(), 0u);
  EXPECT_THROW(SparseTable("f", 0), ShapeError);
  EXPECT_THROW(SparseTable("f", 1, 0), std::invalid_argument);
}

TEST(SparseTable, InsertRowChecksSlotAndShape) {
  SparseTable t("f", 2, 8);
  EXPECT_THROW(t.insert_row(8, SparseRow{Vec{0, 0}, {}}), ShapeError);
  EXPECT_THROW(t.insert_row(1, SparseRow{Vec{0}, {}}), ShapeError);
  t.insert_row(1, SparseRow{Vec{1, 2}, {}});
  EXPECT_EQ(t.peek(9), (Vec{1, 2}));
}

TEST(Hashing, KnownFnvVector) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
}

}  // namespace
}  // namespace cs3
