#include "cpadmm/cli.hpp"
#include "cpadmm/state_io.hpp"
#include "cpadmm/tensor_io.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <map>

using namespace cpadmm;
using namespace cpadmm::testing;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cpadmm");
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// "a=1 b=2" or one pair per line.
std::map<std::string, std::string> fields(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  for (std::string tok; in >> tok;) {
    const auto eq = tok.find('=');
    if (eq != std::string::npos) kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return kv;
}

TEST(Cli, FitRankOneNoiseless) {
  TempDir dir("cli_fit");
  const std::string t = (dir / "x.cpdt").string();
  const CliRun g = cli({"generate", "--dims", "10,10,10", "--rank", "1", "--out", t,
                     "--seed", "3"});
  ASSERT_EQ(g.code, kExitOk) << g.err;
  EXPECT_EQ(fields(g.out).at("noise_norm"), "0");
  const std::string model = (dir / "m.json").string();
  const std::string hist = (dir / "h.csv").string();
  const CliRun f = cli({"fit", "--tensor", t, "--rank", "1", "--model", model,
                     "--history", hist, "--track-rfe"});
  ASSERT_EQ(f.code, kExitOk) << f.err;
  const auto kv = fields(f.out);
  EXPECT_EQ(kv.at("converged"), "true");
  const double rfe = std::stod(kv.at("rfe"));
  EXPECT_LE(rfe, 1e-3);

  // The saved auxiliary model reproduces the printed error.
  const SavedState s = load_state(model);
  const DenseTensor x = load_tensor(t);
  EXPECT_NEAR(relative_error(x, KruskalModel(s.state.aux)), rfe, 1e-12);

  std::ifstream h(hist);
  std::string header;
  std::getline(h, header);
  EXPECT_EQ(header.rfind("iteration,primal_1", 0), 0u);
  EXPECT_NE(header.find(",rfe"), std::string::npos);
  int rows = 0;
  for (std::string line; std::getline(h, line);) ++rows;
  EXPECT_EQ(rows, std::stoi(kv.at("iterations")));

  const CliRun k = cli({"kkt", "--tensor", t, "--model", model});
  ASSERT_EQ(k.code, kExitOk) << k.err;
  const auto kk = fields(k.out);
  for (const char* name : {"stationarity_1", "stationarity_3", "feasibility_2",
                           "dual_sign", "complementarity", "max", "relative_max"}) {
    EXPECT_TRUE(kk.contains(name)) << name;
  }
  EXPECT_GE(std::stod(kk.at("max")), std::stod(kk.at("dual_sign")));
}

TEST(Cli, FitMeshPrintsMessages) {
  TempDir dir("cli_mesh");
  const std::string t = (dir / "x.coo").string();
  ASSERT_EQ(cli({"generate", "--dims", "6,6,6", "--rank", "2", "--sigma2", "0.01",
                 "--out", t, "--format", "coo"})
                .code,
            kExitOk);
  const std::string trace = (dir / "trace.csv").string();
  const CliRun c = cli({"fit", "--tensor", t, "--rank", "2"});
  const CliRun m = cli({"fit", "--tensor", t, "--rank", "2", "--engine", "mesh:2",
                     "--trace", trace, "--threads", "2"});
  ASSERT_EQ(m.code, kExitOk) << m.err;
  const auto kc = fields(c.out);
  const auto km = fields(m.out);
  EXPECT_EQ(km.at("iterations"), kc.at("iterations"));
  EXPECT_NEAR(std::stod(km.at("rfe")), std::stod(kc.at("rfe")), 1e-10);
  const auto messages = std::stoul(km.at("messages"));
  EXPECT_EQ(messages % 36, 0u);
  const std::string tr = read_file(trace);
  EXPECT_EQ(static_cast<std::size_t>(std::count(tr.begin(), tr.end(), '\n')),
            messages + 1);
}

TEST(Cli, EquivCheck) {
  const CliRun r = cli({"equivcheck", "--rank", "2", "--engine", "mesh:2", "--sigma2",
                     "0.01"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto kv = fields(r.out);
  EXPECT_LE(std::stod(kv.at("max_deviation")), 1e-12);
  EXPECT_EQ(kv.at("iterations"), "50");
  const CliRun fail = cli({"equivcheck", "--rank", "2", "--engine", "mesh:2",
                        "--sigma2", "0.01", "--tolerance", "-1"});
  EXPECT_EQ(fail.code, kExitRuntime);
  EXPECT_EQ(cli({"equivcheck", "--rank", "2", "--engine", "central"}).code, kExitUsage);
}

TEST(Cli, BenchIsReproducible) {
  TempDir dir("cli_bench");
  {
    std::ofstream cfg(dir / "e.cfg");
    cfg << "dims = 8,8,8\nrank = 2\nsigma2 = 0.01\nrealizations = 3\nseed = 7\n";
  }
  const std::string cfg = (dir / "e.cfg").string();
  const CliRun a = cli({"bench", "--config", cfg, "--output", (dir / "a").string()});
  ASSERT_EQ(a.code, kExitOk) << a.err;
  const CliRun b = cli({"bench", "--config", cfg, "--output", (dir / "b").string(),
                     "--threads", "2"});
  ASSERT_EQ(b.code, kExitOk) << b.err;
  EXPECT_EQ(fields(a.out).at("realizations"), "3");
  for (const char* f : {"records.csv", "summary.csv"}) {
    EXPECT_EQ(read_file(dir / "a" / f), read_file(dir / "b" / f)) << f;
  }
  const CliRun c = cli({"bench", "--config", cfg, "--output", (dir / "c").string(),
                     "--realizations", "1"});
  EXPECT_EQ(fields(c.out).at("realizations"), "1");
}

TEST(Cli, ExitCodes) {
  TempDir dir("cli_exit");
  const std::string t = (dir / "x.cpdt").string();
  ASSERT_EQ(cli({"generate", "--dims", "4,4,4", "--rank", "1", "--out", t}).code,
            kExitOk);
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"fit", "--tensor", t}).code, kExitUsage);  // missing --rank
  EXPECT_EQ(cli({"fit", "--tensor", t, "--rank", "1", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(cli({"fit", "--tensor", t, "--rank", "1", "--constraints", "simplex"}).code,
            kExitUsage);
  EXPECT_EQ(cli({"fit", "--tensor", t, "--rank", "1", "--engine", "gpu"}).code,
            kExitUsage);
  EXPECT_EQ(cli({"fit", "--tensor", t, "--rank", "1", "--mu", "0.5"}).code, kExitUsage);
  EXPECT_EQ(cli({"fit", "--tensor", t, "--rank", "1", "--constraints",
                 "nonneg,nonneg"}).code,
            kExitUsage);
  EXPECT_EQ(cli({"generate", "--dims", "4,4", "--rank", "1", "--out", t}).code,
            kExitUsage);
  EXPECT_EQ(cli({"generate", "--dims", "4,4,4", "--rank", "1", "--out", t, "--format",
                 "xml"}).code,
            kExitUsage);
  EXPECT_EQ(cli({"bench", "--config", (dir / "none.cfg").string()}).code, kExitUsage);
  const CliRun missing = cli({"fit", "--tensor", (dir / "none.cpdt").string(), "--rank", "1"});
  EXPECT_EQ(missing.code, kExitRuntime);
  EXPECT_NE(missing.err.find("error:"), std::string::npos);
  EXPECT_EQ(cli({"kkt", "--tensor", t, "--model", (dir / "none.json").string()}).code,
            kExitRuntime);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

}  // namespace
