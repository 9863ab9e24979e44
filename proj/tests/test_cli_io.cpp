#include <gtest/gtest.h>

#include <sstream>

#include "csv_input.hpp"
#include "report.hpp"

using namespace mrstd;
using namespace mrstd::cli;

namespace {

CsvTable parse(const std::string& text) {
  std::istringstream in(text);
  return read_csv(in, "in.csv");
}

std::string error_of(const std::string& text, const ColumnRoles& roles = {}) {
  try {
    (void)load_trial(parse(text), roles);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Csv, QuotesBomCrlfAndBlankLines) {
  const auto t = parse("\xEF\xBB\xBF" "cluster,note,y\r\n\r\nA,\"x, \"\"q\"\"\",1.5\r\n");
  ASSERT_EQ(t.header.size(), 3u);
  EXPECT_EQ(t.header[0], "cluster");
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0][1], "x, \"q\"");
  EXPECT_EQ(t.lines[0], 3u);
}

TEST(Csv, MalformedInputNamesTheLine) {
  auto message = [](const std::string& text) {
    try {
      (void)parse(text);
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_EQ(message("a,b\n1,2\n3\n"), "in.csv:3: expected 2 fields, found 1");
  EXPECT_EQ(message("a,a\n"), "in.csv:1: duplicate column 'a'");
  EXPECT_EQ(message("a,b\n\"1,2\n"), "in.csv:2: unterminated quoted field");
  EXPECT_EQ(message(""), "in.csv: missing header row");
}

TEST(Csv, Numbers) {
  EXPECT_DOUBLE_EQ(parse_number("+2.5e1", "x"), 25.0);
  EXPECT_THROW(parse_number("NA", "x"), ValidationError);
  EXPECT_THROW(parse_number("", "x"), ValidationError);
  EXPECT_THROW(parse_number("1.2.3", "x"), ValidationError);
  EXPECT_THROW(parse_number("inf", "x"), ValidationError);
}

TEST(LoadTrial, GroupsRowsByCluster) {
  ColumnRoles roles;
  roles.covariates = {"x"};
  roles.cluster_covariates = {"h"};
  roles.stratum = "s";
  const auto d = load_trial(parse("cluster,treatment,y,x,h,s\n"
                                  "b,1,1.0,0.1,2,lo\n"
                                  "a,0,2.0,0.2,3,hi\n"
                                  "b,1,3.0,0.3,2,lo\n"),
                            roles);
  ASSERT_EQ(d.num_clusters(), 2u);
  EXPECT_EQ(d.clusters[0].id, "b");
  EXPECT_EQ(d.clusters[0].size, 2u);
  EXPECT_EQ(d.clusters[0].outcomes, (std::vector<double>{1.0, 3.0}));
  EXPECT_DOUBLE_EQ(d.clusters[0].covariates(1, 0), 0.3);
  EXPECT_DOUBLE_EQ(d.clusters[1].cluster_covariates[0], 3.0);
  EXPECT_EQ(*d.clusters[1].stratum, "hi");
  EXPECT_TRUE(validate(d).empty());
}

TEST(LoadTrial, Diagnostics) {
  EXPECT_EQ(error_of("cluster,treatment,y\na,1,1\na,0,2\n"),
            "in.csv:3: treatment varies within cluster 'a' (first seen at line 2)");
  EXPECT_EQ(error_of("cluster,treatment,y\na,2,1\n"), "in.csv:2: treatment must be 0 or 1, found '2'");
  EXPECT_EQ(error_of("cluster,treatment,y\na,1,NA\n"), "in.csv:2 column 'y': missing value");
  EXPECT_EQ(error_of("cluster,arm,y\na,1,1\n"), "in.csv: treatment column 'treatment' not found in header");
  ColumnRoles roles;
  roles.cluster_covariates = {"h"};
  EXPECT_EQ(error_of("cluster,treatment,y,h\na,1,1,0\na,1,2,1\n", roles),
            "in.csv:3: cluster covariate varies within cluster 'a' (first seen at line 2)");
}

TEST(LoadSchemes, ParsesAndRejects) {
  std::istringstream in("1,0,1,0\n0,1,0,1\n");
  const auto d = load_schemes(read_csv(in, "s.csv", false));
  ASSERT_EQ(d.num_schemes(), 2u);
  EXPECT_EQ(d.num_clusters(), 4u);
  std::istringstream bad("1,0,2\n");
  EXPECT_THROW(load_schemes(read_csv(bad, "s.csv", false)), ValidationError);
}

TEST(Report, CsvRoundTripsDoubles) {
  Report r{{"name", "value", "n", "flag", "empty"}, {}};
  r.add({std::string("a,b"), 0.1, std::int64_t{3}, true, std::monostate{}});
  std::ostringstream os;
  write(r, Format::Csv, os);
  EXPECT_EQ(os.str(), "name,value,n,flag,empty\n\"a,b\",0.10000000000000001,3,true,\n");
  EXPECT_THROW(r.add({0.0}), Error);
}

TEST(Report, RecordAndTable) {
  Report r{{"x", "y"}, {}};
  r.add({1.5, std::numeric_limits<double>::quiet_NaN()});
  std::ostringstream rec, tab;
  write(r, Format::Record, rec);
  const auto j = nlohmann::json::parse(rec.str());
  EXPECT_DOUBLE_EQ(j[0]["x"].get<double>(), 1.5);
  EXPECT_TRUE(j[0]["y"].is_null());
  write(r, Format::Table, tab);
  EXPECT_EQ(tab.str(), "x    y\n1.5  NaN\n");
  EXPECT_THROW(parse_format("xml"), ValidationError);
}

TEST(Report, Fnv1a) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(hex64(fnv1a("a")), "af63dc4c8601ec8c");
}
