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
#include <filesystem>
#include <random>
#include <thread>

#include "cs3/embedding_server.hpp"

namespace cs3 {
namespace {

using wire::Opcode;
using wire::Status;

std::span<const std::uint8_t> body_of(const std::vector<std::uint8_t>& frame) {
  return std::span<const std::uint8_t>(frame).subspan(4);
}

TEST(Wire, RequestRoundTrip) {
  wire::Request r{Opcode::EmaPut, item_key(0x0102030405060708ull), 0.9f, {1.5f, -2.0f, 0.0f}};
  const auto f = wire::encode_request(r);
  EXPECT_EQ(wire::detail::get_u32(f.data()), f.size() - 4);
  EXPECT_EQ(f[4], 0x02);
  EXPECT_EQ(f[5], 0x01);
  EXPECT_EQ(f[6], 0x08);  // little-endian id
  const auto p = wire::parse_request(body_of(f));
  ASSERT_TRUE(p.request.has_value()) << p.error;
  EXPECT_EQ(p.request->key, r.key);
  EXPECT_EQ(p.request->beta, 0.9f);
  EXPECT_EQ(p.request->payload, r.payload);
}

TEST(Wire, GetFrameIsKeyOnly) {
  const auto f = wire::encode_request({Opcode::Get, user_key(5), 0, {}});
  EXPECT_EQ(f.size(), 4 + wire::kKeyHeaderBytes);
}

TEST(Wire, MalformedBodiesRejected) {
  auto good = wire::encode_request({Opcode::EmaPut, user_key(1), 0.5f, {1, 2}});
  std::vector<std::uint8_t> body(good.begin() + 4, good.end());
  EXPECT_FALSE(wire::parse_request(std::span(body).first(3)).request);
  auto bad = body;
  bad[0] = 9;
  EXPECT_FALSE(wire::parse_request(bad).request);
  bad = body;
  bad[1] = 2;
  EXPECT_FALSE(wire::parse_request(bad).request);
  bad = body;
  bad.push_back(0);
  EXPECT_FALSE(wire::parse_request(bad).request);
  EXPECT_FALSE(wire::parse_request(body, 3).request);  // dim mismatch
  bad = body;
  const float nb = 1.5f;
  std::memcpy(bad.data() + 10, &nb, 4);
  EXPECT_FALSE(wire::parse_request(bad).request);
  bad = body;
  const float nan = std::nanf("");
  std::memcpy(bad.data() + 18, &nan, 4);
  EXPECT_FALSE(wire::parse_request(bad).request);
  auto get = wire::encode_request({Opcode::Get, user_key(1), 0, {}});
  get.push_back(0);
  EXPECT_FALSE(wire::parse_request(body_of(get)).request);
}

class ServerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    server_ = std::make_unique<EmbeddingServer>(ServerOptions{"127.0.0.1:0", 4, {}});
    server_->start();
  }
  std::unique_ptr<EmbeddingServer> server_;
};

TEST_F(ServerTest, MissThenPutThenGetMatchesF32Oracle) {
  EmbeddingClient c(server_->address());
  EXPECT_FALSE(c.get(user_key(1)).has_value());
  std::vector<float> oracle(4, 0.0f);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> d(-2, 2);
  for (int t = 0; t < 200; ++t) {
    std::vector<float> h{d(rng), d(rng), d(rng), d(rng)};
    ASSERT_EQ(c.ema_put(user_key(1), h, 0.9f), Status::Ok);
    for (int i = 0; i < 4; ++i) oracle[i] = ema_component_f32(oracle[i], h[i], 0.9f);
    const auto got = c.get(user_key(1));
    ASSERT_TRUE(got.has_value());
    ASSERT_EQ(*got, oracle);
  }
  EXPECT_FALSE(c.get(item_key(1)).has_value());
}

TEST_F(ServerTest, WrongDimensionIsErrAndConnectionSurvives) {
  EmbeddingClient c(server_->address());
  const std::vector<float> h{1, 2};
  EXPECT_EQ(c.ema_put(user_key(1), h, 0.5f), Status::Err);
  EXPECT_FALSE(c.get(user_key(1)).has_value());
  EXPECT_EQ(server_->error_count(), 1u);
}

TEST_F(ServerTest, StatsReportCounts) {
  EmbeddingClient c(server_->address());
  for (int i = 0; i < 10; ++i) c.get(user_key(i));
  const std::vector<float> h{1, 2, 3, 4};
  c.ema_put(item_key(1), h, 0.0f);
  const LatencyStats s = c.stats();
  EXPECT_EQ(s.get.count, 10u);
  EXPECT_EQ(s.ema_put.count, 1u);
  EXPECT_GE(s.get.p99_us, s.get.p50_us);
  EXPECT_GE(s.get.max_us, s.get.p99_us);
  EXPECT_EQ(*server_->peek(item_key(1)), h);
}

TEST_F(ServerTest, OversizedFrameGetsErrAndClose) {
  EmbeddingClient c(server_->address());
  std::vector<std::uint8_t> frame(4);
  const std::uint32_t huge = wire::kMaxFrameBody + 1;
  std::memcpy(frame.data(), &huge, 4);
  const auto body = c.roundtrip(frame);
  ASSERT_EQ(body.size(), 1u);
  EXPECT_EQ(body[0], static_cast<std::uint8_t>(Status::Err));
  // The server closed this connection; GET reconnects once.
  EXPECT_FALSE(c.get(user_key(1)).has_value());
}

TEST_F(ServerTest, ConcurrentClientsSeeConsistentSums) {
  std::vector<std::thread> ts;
  for (int k = 0; k < 4; ++k)
    ts.emplace_back([&, k] {
      EmbeddingClient c(server_->address());
      const std::vector<float> h{1, 1, 1, 1};
      for (int i = 0; i < 200; ++i) c.ema_put(item_key(static_cast<std::uint64_t>(k)), h, 0.5f);
    });
  for (auto& t : ts) t.join();
  for (int k = 0; k < 4; ++k) {
    const auto v = server_->peek(item_key(static_cast<std::uint64_t>(k)));
    ASSERT_TRUE(v);
    EXPECT_EQ((*v)[0], 1.0f);
  }
  EXPECT_EQ(server_->size(), 4u);
}

TEST_F(ServerTest, ShutdownStopsServer) {
  EmbeddingClient c(server_->address());
  c.shutdown_server();
  server_->wait();
  EXPECT_FALSE(server_->running());
}

TEST(Server, LogReplayRestoresState) {
  const std::string log = ::testing::TempDir() + "cs3_server_replay.log";
  std::filesystem::remove(log);
  std::vector<float> expect;
  {
    EmbeddingServer s(ServerOptions{"127.0.0.1:0", 2, log});
    s.start();
    EmbeddingClient c(s.address());
    c.ema_put(user_key(3), std::vector<float>{1, 2}, 0.9f);
    c.ema_put(user_key(3), std::vector<float>{3, -4}, 0.7f);
    expect = *c.get(user_key(3));
  }
  EmbeddingServer s(ServerOptions{"127.0.0.1:0", 2, log});
  s.start();
  EXPECT_EQ(*s.peek(user_key(3)), expect);
  std::filesystem::remove(log);
}

TEST(Server, CorruptLogRefused) {
  const std::string log = ::testing::TempDir() + "cs3_server_corrupt.log";
  {
    std::ofstream out(log, std::ios::binary | std::ios::trunc);
    const auto f = wire::encode_request({Opcode::Get, user_key(1), 0, {}});
    out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size()));
  }
  EmbeddingServer s(ServerOptions{"127.0.0.1:0", 2, log});
  EXPECT_THROW(s.start(), std::runtime_error);
  std::filesystem::remove(log);
}

TEST(Server, RejectsBadDim) {
  EXPECT_THROW(EmbeddingServer(ServerOptions{"127.0.0.1:0", 0, {}}), std::invalid_argument);
  EXPECT_THROW(parse_address("localhost"), std::invalid_argument);
}

TEST(RemoteCms, UnreachableReadsZeroAndCountsFailures) {
  auto server = std::make_unique<EmbeddingServer>(ServerOptions{"127.0.0.1:0", 3, {}});
  server->start();
  RemoteCms cms(server->address(), 3);
  cms.ema_put(user_key(1), Vec{1, 2, 3}, 0.0);
  EXPECT_EQ(cms.read(user_key(1)), (Vec{1, 2, 3}));
  server.reset();
  EXPECT_EQ(cms.read(user_key(1)), Vec(3, 0.0));
  cms.ema_put(user_key(1), Vec{1, 2, 3}, 0.5);
  EXPECT_GE(cms.failures(), 2u);
}

TEST(RemoteCms, DimMismatchWithServerIsShapeError) {
  EmbeddingServer server(ServerOptions{"127.0.0.1:0", 3, {}});
  server.start();
  EmbeddingClient c(server.address());
  c.ema_put(user_key(1), std::vector<float>{1, 2, 3}, 0.0f);
  RemoteCms cms(server.address(), 2);
  EXPECT_THROW(cms.read(user_key(1)), ShapeError);
}

TEST(EmbeddingClient, ConnectFailureIsConnectionError) {
  EXPECT_THROW(EmbeddingClient("127.0.0.1:1"), ConnectionError);
}

}  // namespace
}  // namespace cs3
