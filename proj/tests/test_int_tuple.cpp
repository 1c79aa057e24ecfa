#include <gtest/gtest.h>

#include "laysyn/error.hpp"
#include "laysyn/int_tuple.hpp"

using namespace laysyn;

TEST(IntTuple, ParseAndPrint) {
  auto t = parse_int_tuple(" ( (2, 4) ,(2,2) ) ");
  EXPECT_EQ(to_string(t), "((2,4),(2,2))");
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(product(t), 32);
  EXPECT_EQ(flatten(t), (std::vector<int64_t>{2, 4, 2, 2}));
  EXPECT_EQ(to_string(parse_int_tuple("7")), "7");
}

TEST(IntTuple, ParseErrors) {
  for (const char* bad : {"", "()", "(1,", "(1 2)", "(1,2))", "x", "(-1)"}) {
    try {
      parse_int_tuple(bad);
      ADD_FAILURE() << "accepted '" << bad << "'";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::ParseError) << bad;
    }
  }
}

TEST(IntTuple, CongruenceAndUnflatten) {
  auto a = parse_int_tuple("((2,4),8)");
  auto b = parse_int_tuple("((1,2),3)");
  EXPECT_TRUE(congruent(a, b));
  EXPECT_FALSE(congruent(a, parse_int_tuple("(2,4,8)")));
  EXPECT_EQ(unflatten(a, {5, 6, 7}), parse_int_tuple("((5,6),7)"));
  EXPECT_EQ(compact_colex(a), parse_int_tuple("((1,2),8)"));
}

TEST(IntTuple, OverflowIsChecked) {
  EXPECT_THROW(checked_mul(int64_t{1} << 62, 4), Error);
  EXPECT_THROW(parse_int_tuple("99999999999999999999"), Error);
  try {
    product(parse_int_tuple("(4294967296,4294967296)"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Overflow);
  }
}
