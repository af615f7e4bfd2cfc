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

#include <sstream>

#include "cs3/evalkit.hpp"
#include "cs3/stream_io.hpp"
#include "cs3/synth.hpp"

namespace cs3 {
namespace {

std::string both_ways(const Stream& s) {
  std::ostringstream out;
  write_stream_csv(out, s);
  return out.str();
}

TEST(StreamCsv, RoundTripIsLossless) {
  SynthSpec sp;
  sp.length = 500;
  sp.n_users = 30;
  sp.n_items = 10;
  const Stream s = generate_stream(sp).stream;
  const std::string text = both_ways(s);
  std::istringstream in(text);
  const Stream back = parse_stream_csv(in);
  EXPECT_EQ(back.schema, s.schema);
  EXPECT_EQ(back.events, s.events);  // shortest round-trip doubles
  EXPECT_EQ(both_ways(back), text);
}

TEST(StreamCsv, HeaderGroupsAndNames) {
  const StreamSchema s =
      parse_header("event_time,label_ready_time,user_id,item_id,label,u_cat_a,u_dense_x,i_cat_b,"
                   "i_dense_y,i_dense_z");
  EXPECT_EQ(s.user_categorical, std::vector<std::string>{"a"});
  EXPECT_EQ(s.user_dense, std::vector<std::string>{"x"});
  EXPECT_EQ(s.item_categorical, std::vector<std::string>{"b"});
  EXPECT_EQ(s.item_dense, (std::vector<std::string>{"y", "z"}));
  EXPECT_EQ(format_header(s),
            "event_time,label_ready_time,user_id,item_id,label,u_cat_a,u_dense_x,i_cat_b,"
            "i_dense_y,i_dense_z");
}

TEST(StreamCsv, RejectsBadHeaders) {
  EXPECT_THROW(parse_header("event_time,label_ready_time,user_id"), StreamFormatError);
  EXPECT_THROW(parse_header("time,label_ready_time,user_id,item_id,label"), StreamFormatError);
  EXPECT_THROW(parse_header("event_time,label_ready_time,user_id,item_id,label,z_cat_a"),
               StreamFormatError);
  EXPECT_THROW(parse_header("event_time,label_ready_time,user_id,item_id,label,u_cat_"),
               StreamFormatError);
  // Groups must come in order.
  EXPECT_THROW(parse_header("event_time,label_ready_time,user_id,item_id,label,i_cat_a,u_cat_b"),
               StreamFormatError);
}

void expect_bad_row(const std::string& row, const std::string& fragment) {
  std::istringstream in("event_time,label_ready_time,user_id,item_id,label,u_dense_x\n" + row + "\n");
  try {
    parse_stream_csv(in);
    ADD_FAILURE() << "accepted: " << row;
  } catch (const StreamFormatError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

TEST(StreamCsv, RejectsBadRowsWithLineNumbers) {
  expect_bad_row("1,2,3,4,1", "line 2: expected 6 fields");
  expect_bad_row("1,2,3,4,2,0.5", "label must be 0 or 1");
  expect_bad_row("5,2,3,4,1,0.5", "label_ready_time precedes event_time");
  expect_bad_row("1,2,-3,4,1,0.5", "bad integer in column user_id");
  expect_bad_row("1,2,3,4,1,nan", "bad real in column u_dense");
  expect_bad_row("1,2,3,4,1,1e500", "bad real");
  expect_bad_row("1,2,3,4,1,0.5x", "bad real");
}

TEST(StreamCsv, ToleratesCrlfAndBlankLines) {
  std::istringstream in("event_time,label_ready_time,user_id,item_id,label\r\n\r\n1,2,3,4,1\r\n");
  const Stream s = parse_stream_csv(in);
  ASSERT_EQ(s.events.size(), 1u);
  EXPECT_EQ(s.events[0].item_id, 4u);
  std::istringstream empty("");
  EXPECT_THROW(parse_stream_csv(empty), StreamFormatError);
}

TEST(Synth, SameSeedSameStream) {
  SynthSpec sp;
  sp.length = 2000;
  const SynthStream a = generate_stream(sp), b = generate_stream(sp);
  EXPECT_EQ(a.stream.events, b.stream.events);
  EXPECT_EQ(a.true_logits, b.true_logits);
  sp.seed = 8;
  EXPECT_NE(generate_stream(sp).stream.events, a.stream.events);
}

TEST(Synth, HitsPositiveRateAndSchema) {
  SynthSpec sp;
  sp.length = 20000;
  const SynthStream s = generate_stream(sp);
  double pos = 0;
  for (const auto& e : s.stream.events) {
    pos += e.label;
    EXPECT_LE(e.event_time, e.label_ready_time);
    EXPECT_LE(e.label_ready_time - e.event_time, sp.max_label_delay);
    EXPECT_LT(e.user_id, sp.n_users);
    EXPECT_LT(e.item_id, sp.n_items);
    EXPECT_EQ(e.user.dense.size(), sp.dense_features);
    EXPECT_LT(e.user.categorical[1], 1u << sp.segment_bits);
  }
  EXPECT_NEAR(pos / 20000.0, sp.positive_rate, 0.02);
  EXPECT_EQ(s.stream.schema, synth_schema(sp));
}

double true_auc(const SynthStream& s) {
  std::vector<ScoredExample> ex;
  for (std::size_t i = 0; i < s.true_logits.size(); ++i)
    ex.push_back({s.true_logits[i], s.stream.events[i].label});
  return *auc(ex);
}

TEST(Synth, NoiseControlsLearnability) {
  SynthSpec sp;
  sp.length = 30000;
  sp.drift_rate = 0.0;
  sp.noise = 0.0;
  sp.signal_scale = 50.0;
  EXPECT_GT(true_auc(generate_stream(sp)), 0.95);
  sp.noise = 1e4;
  EXPECT_NEAR(true_auc(generate_stream(sp)), 0.5, 0.02);
}

TEST(Synth, EntitiesArriveProgressively) {
  SynthSpec sp;
  sp.length = 10000;
  sp.n_users = 1000;
  const SynthStream s = generate_stream(sp);
  std::uint64_t early_max = 0;
  for (std::size_t t = 0; t < 1000; ++t)
    early_max = std::max(early_max, s.stream.events[t].user_id);
  EXPECT_LT(early_max, 500u);
}

TEST(Synth, ValidatesSpec) {
  SynthSpec sp;
  sp.positive_rate = 1.0;
  EXPECT_THROW(generate_stream(sp), std::invalid_argument);
  sp = SynthSpec{};
  sp.segment_bits = 9;
  EXPECT_THROW(generate_stream(sp), std::invalid_argument);
  sp = SynthSpec{};
  sp.noise = -1;
  EXPECT_THROW(generate_stream(sp), std::invalid_argument);
}

}  // namespace
}  // namespace cs3
