#include <gtest/gtest.h>

#include <limits>
#include <sstream>

#include "cocoslab/text_io.hpp"
#include "support.hpp"

using namespace cocoslab;

TEST(FormatDouble, ShortestRoundTrip) {
  for (double x : {0.0, -0.0, 1.0, 0.1, 1e-300, 123456.789, std::numeric_limits<double>::max(),
                   std::numeric_limits<double>::denorm_min()})
    EXPECT_EQ(parse_double(format_double(x)), x);
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(ParseDouble, RejectsGarbage) {
  EXPECT_THROW(parse_double("abc"), Error);
  EXPECT_THROW(parse_double("1.0x"), Error);
  EXPECT_THROW(parse_double(""), Error);
}

TEST(Records, RoundTripThroughText) {
  std::mt19937_64 rng(3);
  const auto batch = cocoslab::testing::random_grouped(rng, 3, 2, 5);
  std::stringstream ss;
  write_records(ss, to_records(batch));
  const auto back = batch_from_records(read_records(ss), Layout::grouped);
  ASSERT_EQ(back.captions().size(), batch.captions().size());
  for (std::size_t i = 0; i < batch.captions().size(); ++i) {
    EXPECT_EQ(back.captions()[i].values(), batch.captions()[i].values());
    EXPECT_EQ(back.owner_of(back.captions()[i].id()), batch.owner_of(batch.captions()[i].id()));
  }
}

TEST(Records, BadLines) {
  EXPECT_THROW(parse_record("1 image"), Error);
  EXPECT_THROW(parse_record("1 sound 0 0.5"), Error);
  EXPECT_THROW(parse_record("1 image 0"), Error);
  EXPECT_THROW(parse_record("x image 0 1"), Error);
  const auto r = parse_record("4 caption 2 0.25 -1");
  EXPECT_EQ(r.id, 4);
  EXPECT_EQ(r.modality, Modality::caption);
  EXPECT_EQ(r.group_id, 2);
  EXPECT_EQ(r.values, cocoslab::testing::vec({0.25, -1}));
}

TEST(KeyValuesText, RoundTripAndComments) {
  std::stringstream ss("# comment\na=1\n\nb=x=y\n");
  const auto kv = read_key_values(ss);
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(lookup(kv, "b"), "x=y");
  EXPECT_EQ(lookup_or(kv, "c", "z"), "z");
  EXPECT_THROW(lookup(kv, "c"), Error);
  std::stringstream bad("novalue\n");
  EXPECT_THROW(read_key_values(bad), Error);
}
