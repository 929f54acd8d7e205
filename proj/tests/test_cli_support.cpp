#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "cli_support.hpp"

using namespace elastic;
using namespace elastic::cli;

TEST(ParseGrid, RangeForm) {
  const auto g = parse_grid("0:12:121");
  ASSERT_EQ(g.size(), 121u);
  EXPECT_EQ(g.front(), 0.0);
  EXPECT_EQ(g.back(), 12.0);
  EXPECT_NEAR(g[10], 1.0, 1e-15);
  EXPECT_EQ(parse_grid("2:2:1"), std::vector<double>{2.0});
}

TEST(ParseGrid, ListForm) {
  EXPECT_EQ(parse_grid("0.5, 1,2"), (std::vector<double>{0.5, 1.0, 2.0}));
}

TEST(ParseGrid, Errors) {
  EXPECT_THROW(parse_grid("0:1"), DomainError);
  EXPECT_THROW(parse_grid("0:1:0"), DomainError);
  EXPECT_THROW(parse_grid("0:1:2.5"), DomainError);
  EXPECT_THROW(parse_grid("1:0:3"), DomainError);
  EXPECT_THROW(parse_grid("a,b"), DomainError);
  EXPECT_THROW(parse_grid("1,,2"), DomainError);
}

TEST(ParseKappaList, InfinityAndNumbers) {
  const auto k = parse_kappa_list("0.5,inf,0");
  ASSERT_EQ(k.size(), 3u);
  EXPECT_EQ(k[0].value(), 0.5);
  EXPECT_TRUE(k[1].is_infinite());
  EXPECT_TRUE(k[2].is_zero());
  EXPECT_THROW(parse_kappa_list("-1"), DomainError);
}

TEST(FormatNumber, RoundTripsAndSpecials) {
  const double v = 0.1 + 0.2;
  EXPECT_EQ(std::stod(format_number(v)), v);
  EXPECT_EQ(format_number(INFINITY), "inf");
  EXPECT_EQ(format_number(NAN), "nan");
}

TEST(Table, CsvHasVersionedHeader) {
  Table t;
  t.command = "demo";
  t.meta.emplace_back("seed", "1");
  t.columns = {"a", "b"};
  t.rows.push_back({1.5, std::string("x")});
  std::ostringstream os;
  t.write_csv(os);
  EXPECT_EQ(os.str(), "# elastic-cli csv v1\n# command=demo\n# seed=1\na,b\n1.5,x\n");
  const auto j = t.to_json();
  EXPECT_EQ(j["rows"][0]["a"].get<double>(), 1.5);
  EXPECT_EQ(j["rows"][0]["b"].get<std::string>(), "x");
}

TEST(OneLine, StripsNewlines) { EXPECT_EQ(one_line("a\nb\r"), "a b "); }
