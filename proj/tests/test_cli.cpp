#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(MRSTD_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

using Row = std::map<std::string, std::string>;

std::vector<Row> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (header.empty()) {
      header = f;
      continue;
    }
    Row r;
    for (std::size_t k = 0; k < header.size() && k < f.size(); ++k) r[header[k]] = f[k];
    rows.push_back(std::move(r));
  }
  return rows;
}

class Cli : public ::testing::Test {
 protected:
  static fs::path dir;

  static void SetUpTestSuite() {
    dir = fs::temp_directory_path() / ("mrstd_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    write_ppact_shaped(dir / "ppact.csv");
    std::ofstream(dir / "hand.csv") << "cluster,treatment,y\n"
                                       "t1,1,2\nt1,1,4\nt2,1,5\n"
                                       "c1,0,1\nc1,0,1\nc2,0,3\n";
    std::ofstream(dir / "one_treated.csv") << "cluster,treatment,y\nt1,1,2\nc1,0,1\nc2,0,3\nc3,0,2\n";
    std::ofstream(dir / "varying.csv") << "cluster,treatment,y\na,1,2\na,0,1\nb,0,3\nc,1,2\n";
    std::ofstream(dir / "equal.csv") << "cluster,treatment,y\n"
                                        "a,1,2\na,1,3\nb,1,5\nb,1,4\nc,1,1\nc,1,3\n"
                                        "d,0,1\nd,0,0\ne,0,2\ne,0,2\nf,0,1\nf,0,3\n";
    std::ofstream(dir / "good.toml") << "[analyze]\ninput = \"" << (dir / "hand.csv").string()
                                     << "\"\nmodel = \"null\"\n";
    std::ofstream(dir / "bad.toml") << "[analyze]\ninput = \"" << (dir / "hand.csv").string()
                                    << "\"\nmodle = \"null\"\n";
  }

  static void TearDownTestSuite() { fs::remove_all(dir); }

  // 106 providers with 2 to 60 patients each; baseline pain score and age as
  // individual covariates (baseline varies between providers), a practice
  // indicator as a cluster covariate.
  static void write_ppact_shaped(const fs::path& path) {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_int_distribution<int> size(2, 60);
    std::bernoulli_distribution coin(0.5);
    std::ofstream out(path);
    out << "provider,arm,pegs,baseline,age,clinic\n";
    for (int i = 0; i < 106; ++i) {
      const int a = i % 2;
      const int n = size(rng);
      const int clinic = coin(rng) ? 1 : 0;
      const double u = 0.4 * z(rng);
      const double shift = 0.8 * z(rng);
      for (int j = 0; j < n; ++j) {
        const double baseline = 7.0 + shift + 1.2 * z(rng);
        const double age = 55.0 + 10.0 * z(rng);
        const double y = 1.0 + 0.8 * baseline + 0.01 * age + 0.2 * clinic - 0.3 * a + u + 0.8 * z(rng);
        out << "p" << i << ',' << a << ',' << y << ',' << baseline << ',' << age << ',' << clinic << '\n';
      }
    }
  }

  static std::string file(const char* name) { return (dir / name).string(); }
};

fs::path Cli::dir;

}  // namespace

TEST_F(Cli, PpactShapedAnalysisNarrowsIntervalsUnderAdjustment) {
  const std::string base = "analyze --input " + file("ppact.csv") +
                           " --cluster-col provider --treatment-col arm --outcome-col pegs"
                           " --covariates baseline,age --cluster-covariates clinic"
                           " --model W1,W2,W3,W4 --format csv";
  const auto adj = run(base + " --adjustment adjusted");
  const auto unadj = run(base + " --adjustment unadjusted");
  ASSERT_EQ(adj.code, 0);
  ASSERT_EQ(unadj.code, 0);
  const auto ra = parse_csv(adj.out), ru = parse_csv(unadj.out);
  ASSERT_EQ(ra.size(), 8u);
  ASSERT_EQ(ru.size(), 8u);
  for (std::size_t k = 0; k < 8; ++k) {
    ASSERT_EQ(ra[k].at("model"), ru[k].at("model"));
    ASSERT_EQ(ra[k].at("estimand"), ru[k].at("estimand"));
    const double wa = std::stod(ra[k].at("ci_upper")) - std::stod(ra[k].at("ci_lower"));
    const double wu = std::stod(ru[k].at("ci_upper")) - std::stod(ru[k].at("ci_lower"));
    EXPECT_LT(wa, wu) << ra[k].at("model") << " " << ra[k].at("estimand");
    EXPECT_EQ(ra[k].at("df"), "105");
    EXPECT_FALSE(ra[k].at("config_hash").empty());
  }
}

TEST_F(Cli, NullModelReproducesInverseProbabilityWeighting) {
  const auto r = run("analyze --input " + file("hand.csv") + " --model null --estimand cluster --format csv");
  ASSERT_EQ(r.code, 0);
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_DOUBLE_EQ(std::stod(rows[0].at("mu1")), 4.0);
  EXPECT_DOUBLE_EQ(std::stod(rows[0].at("mu0")), 2.0);
  EXPECT_DOUBLE_EQ(std::stod(rows[0].at("estimate")), 2.0);
}

TEST_F(Cli, OutputIsReproducible) {
  const std::string args = "analyze --input " + file("ppact.csv") +
                           " --cluster-col provider --treatment-col arm --outcome-col pegs"
                           " --covariates baseline --model W2,W3 --format record";
  const auto a = run(args + " --threads 1"), b = run(args + " --threads 3");
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
}

TEST_F(Cli, IcsTestWithEqualSizes) {
  const auto r = run("ics-test --input " + file("equal.csv") + " --model W1,W3 --format csv");
  ASSERT_EQ(r.code, 0);
  const auto rows = parse_csv(r.out);
  ASSERT_FALSE(rows.empty());
  for (const auto& row : rows) {
    EXPECT_DOUBLE_EQ(std::stod(row.at("p_value")), 1.0);
    EXPECT_DOUBLE_EQ(std::stod(row.at("statistic")), 0.0);
  }
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("analyze --input " + file("one_treated.csv")).code, 2);
  EXPECT_EQ(run("analyze --input " + file("varying.csv")).code, 2);
  EXPECT_EQ(run("analyze --input " + file("missing.csv")).code, 2);
  EXPECT_EQ(run("analyze --input " + file("hand.csv") + " --no-such-flag").code, 2);
  EXPECT_EQ(run("analyze --input " + file("hand.csv") + " --model W6").code, 3);
  EXPECT_EQ(run("validate --input " + file("varying.csv")).code, 2);
  EXPECT_EQ(run("validate --input " + file("hand.csv")).code, 0);
  EXPECT_EQ(run("simulate --scenario cont-noninf --m 10 --expected-total 200 --n-sim 3"
                " --population 10000 --models W6 --adjustment unadjusted")
                .code,
            4);
}

TEST_F(Cli, ConfigFiles) {
  EXPECT_EQ(run("--config " + file("good.toml") + " analyze --validate-config").code, 0);
  const auto r = run("--config " + file("good.toml") + " analyze --format csv");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(parse_csv(r.out).size(), 2u);
  EXPECT_EQ(run("--config " + file("bad.toml") + " analyze").code, 2);
  EXPECT_EQ(run("--config " + file("none.toml") + " analyze").code, 2);
}

TEST_F(Cli, SimulateSmokeAndThreadInvariance) {
  const std::string args =
      "simulate --scenario cont-noninf --m 30 --n-sim 50 --population 20000 --models W1"
      " --adjustment adjusted --format csv --seed 7";
  const auto a = run(args + " --threads 1"), b = run(args + " --threads 2");
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  const auto rows = parse_csv(a.out);
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& row : rows) EXPECT_EQ(row.at("n_sim"), "50");
}
