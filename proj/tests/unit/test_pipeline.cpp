#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "mfair/csv.hpp"
#include "mfair/errors.hpp"
#include "mfair/pipeline/audit.hpp"
#include "mfair/pipeline/commands.hpp"
#include "mfair/pipeline/config.hpp"
#include "mfair/pipeline/diagnostics.hpp"
#include "mfair/pipeline/portfolio.hpp"

using namespace mfair;
using namespace mfair::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("mfair_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(MFAIR_CLI) + " " + args + " > /dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("config defaults round trip and hash") {
  RunConfig c;
  auto back = RunConfig::from_json(nlohmann::json::parse(c.to_json().dump()));
  CHECK(back.hash() == c.hash());
  CHECK(c.hash().size() == 8);
  c.seed = 2;
  CHECK(back.hash() != c.hash());
}

TEST_CASE("config is strict") {
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse(R"({"sede": 3})")), InvalidInput);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse(R"({"simulate": {"n": 3}})")), InvalidInput);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse(R"({"version": 2})")), InvalidInput);
  auto ok = RunConfig::from_json(nlohmann::json::parse(R"({"seed": 9, "audit": {"es_level": 0.8}})"));
  CHECK(ok.seed == 9);
  CHECK(ok.audit.es_level == doctest::Approx(0.8));
  RunConfig bad;
  bad.audit.train_fraction = 1.5;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
}

TEST_CASE("csv round trip with quoting") {
  csv::Table t;
  t.header = {"a", "b,c", "d"};
  t.rows = {{"1", "x \"quoted\"", "line\nbreak"}, {"", "2.5", "plain"}};
  std::ostringstream out;
  csv::write(out, t);
  std::istringstream in(out.str());
  auto back = csv::parse(in);
  CHECK(back.header == t.header);
  CHECK(back.rows == t.rows);

  std::istringstream crlf("x,y\r\n1,2\r\n3,4\r\n");
  auto c = csv::parse(crlf);
  CHECK(c.rows.size() == 2);
  CHECK(c.numeric("y")[1] == 4.0);
  CHECK_THROWS_AS(c.column("z"), InvalidInput);
  CHECK_THROWS_AS(csv::to_double("abc", "col"), InvalidInput);
  CHECK(csv::to_double(csv::fmt(0.1), "x") == 0.1);
}

TEST_CASE("gini index") {
  std::vector<double> loss{0, 1, 0, 3, 2, 0, 5, 1, 0, 4}, expo(10, 1.0);
  std::vector<double> same(10, 1.0);
  CHECK(gini(same, loss, expo).index == doctest::Approx(0.0).epsilon(1e-12));
  // predictions equal to losses; hand computation on the sorted losses
  // 0 0 0 0 1 1 2 3 4 5, total 16
  double area = 0.0, cum = 0.0, prev = 0.0;
  std::vector<double> sorted{0, 0, 0, 0, 1, 1, 2, 3, 4, 5};
  for (double v : sorted) {
    cum += v / 16.0;
    area += 0.1 * (prev + cum) / 2.0;
    prev = cum;
  }
  auto g = gini(loss, loss, expo);
  CHECK(g.index == doctest::Approx(2.0 * (0.5 - area)).epsilon(1e-12));
  std::vector<double> neg(loss);
  for (auto& v : neg) v = -v;
  CHECK(gini(neg, loss, expo).index == doctest::Approx(-g.index).epsilon(1e-12));
  CHECK(g.curve.front().exposure_share == 0.0);
  CHECK(gini(same, loss, expo).curve.size() == 2);
  CHECK(g.curve.back().loss_share == doctest::Approx(1.0));
  std::vector<double> zero(10, 0.0);
  CHECK_THROWS_AS(gini(same, zero, expo), InvalidInput);
}

TEST_CASE("quantile bins") {
  std::vector<double> pred(100), expo(100, 1.0);
  for (int i = 0; i < 100; ++i) pred[i] = (i * 37) % 100;
  auto b = quantile_bins(pred, pred, expo, 10);
  REQUIRE(b.bins.size() == 10);
  CHECK_FALSE(b.merged);
  for (std::size_t k = 0; k < 10; ++k) {
    CHECK(b.bins[k].rows == 10);
    CHECK(b.bins[k].predicted == doctest::Approx(b.bins[k].observed));
    if (k > 0) CHECK(b.bins[k].predicted >= b.bins[k - 1].predicted);
  }
  std::vector<double> two(100);
  for (int i = 0; i < 100; ++i) two[i] = i % 2;
  CHECK(quantile_bins(two, two, expo, 10).merged);
}

TEST_CASE("summary order statistics") {
  std::vector<double> v{4, 1, 3, 2, 5};
  auto s = summarize(v);
  CHECK(s.min == 1.0);
  CHECK(s.q25 == doctest::Approx(2.0));
  CHECK(s.q50 == doctest::Approx(3.0));
  CHECK(s.max == 5.0);
  CHECK(s.mean == doctest::Approx(3.0));
  CHECK(s.n == 5);
}

TEST_CASE("portfolio generator") {
  PortfolioConfig pc;
  pc.n = 2000;
  auto a = generate_portfolio(pc, 5), b = generate_portfolio(pc, 5);
  std::ostringstream sa, sb;
  csv::write(sa, a.table);
  csv::write(sb, b.table);
  CHECK(sa.str() == sb.str());
  CHECK(a.table.header == portfolio_columns());
  CHECK(a.table.rows.size() == 2000);
  pc.n = 0;
  CHECK_THROWS_AS(generate_portfolio(pc, 5), InvalidInput);

  auto enc = encode(a.table, generator_age_bins());
  CHECK(enc.size() == 2000);
  CHECK(enc.layout.names == encoded_names(generator_age_bins()));
  CHECK(enc.Z.col(0).minCoeff() >= 0.0);
  CHECK(enc.Z.col(0).maxCoeff() <= 1.0);
  auto truth = PortfolioTruth::from_json(a.truth.to_json());
  CHECK(truth.coef == a.truth.coef);

  auto broken = a.table;
  broken.header[0] = "Nope";
  CHECK_THROWS_AS(encode(broken, generator_age_bins()), InvalidInput);
}

TEST_CASE("split is deterministic and disjoint") {
  auto [tr, te] = split_rows(100, 0.7, 3);
  CHECK(tr.size() == 70);
  CHECK(te.size() == 30);
  auto [tr2, te2] = split_rows(100, 0.7, 3);
  CHECK(tr == tr2);
  std::vector<int> seen(100, 0);
  for (auto i : tr) ++seen[i];
  for (auto i : te) ++seen[i];
  for (int s : seen) CHECK(s == 1);
}

TEST_CASE("audit without a gender effect leaves the premium alone") {
  RunConfig c;
  c.portfolio.n = 4000;
  c.portfolio.gender_coef = 0.0;
  c.audit.step1 = "truth";
  auto gen = generate_portfolio(c.portfolio, c.seed);
  auto data = encode(gen.table, c.audit.age_bins);
  auto rep = audit(c, data, gen.truth);
  CHECK(rep.rows.size() == 1200);
  CHECK(rep.degenerate_rows == rep.rows.size());
  for (const auto& r : rep.rows) CHECK(r.decision.fair_ev == r.decision.unaware);
  CHECK(rep.adjustment_ev.q50 == 0.0);
  REQUIRE(rep.strategies.size() == 4);
  const auto& s = rep.strategies[0].summary;
  CHECK(s.min <= s.q25);
  CHECK(s.q25 <= s.q50);
  CHECK(s.q50 <= s.q75);
  CHECK(s.q75 <= s.max);

  c.audit.step1 = "truth";
  CHECK_THROWS_AS(audit(c, data), InvalidInput);
}

TEST_CASE("coefficient recovery metric") {
  auto r = coefficient_recovery({9.0, 1.1, -2.0}, {0.0, 1.0, -2.0}, {"a", "b"});
  CHECK(r["relative_l2"].get<double>() == doctest::Approx(0.1 / std::sqrt(5.0)));
}

TEST_CASE("command outputs carry the config hash") {
  RunConfig c;
  c.portfolio.n = 500;
  auto dir = scratch("generate");
  auto out = run_generate(c, dir.string());
  CHECK(out.files.size() == 2);
  for (const auto& f : out.files) {
    CHECK(f.find(c.hash()) != std::string::npos);
    CHECK(fs::exists(dir / f));
  }
  fs::remove_all(dir);
}

TEST_CASE("cli exit codes") {
  auto dir = scratch("cli");
  auto cfg = dir / "bad.json";
  write_text(cfg.string(), R"({"unknown": 1})");
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("") == 2);
  CHECK(run_cli("generate --config " + cfg.string() + " --out " + (dir / "o").string()) == 2);
  CHECK(run_cli("sensitivity --rho es:1.5 --out " + (dir / "o").string()) == 2);
  CHECK(run_cli("audit --variant cascade --out " + (dir / "o").string()) == 2);

  // too few tail exceedances for the ES regression
  auto thin = dir / "thin.json";
  write_text(thin.string(), R"({"portfolio": {"n": 200}, "audit": {"es_level": 0.999}})");
  CHECK(run_cli("audit --config " + thin.string() + " --out " + (dir / "o").string()) == 3);

  auto small = dir / "small.json";
  write_text(small.string(), R"({"portfolio": {"n": 300}})");
  CHECK(run_cli("generate --config " + small.string() + " --seed 4 --out " + (dir / "o").string()) == 0);
  fs::remove_all(dir);
}

TEST_CASE("simulate grid invariants") {
  RunConfig c;
  c.simulate.grid = {-3.0, 1.0, 1.0};
  c.simulate.n_draws = 20000;
  c.simulate.n_marginal = 20000;
  auto dir = scratch("simulate");
  auto out = run_simulate(c, dir.string());
  auto read = [&](const std::string& stem) { return csv::read_file((dir / (stem + "_" + out.hash + ".csv")).string()); };
  auto sens = read("sensitivities"), strat = read("strategies"), adj = read("adjustment");
  auto x = sens.numeric("x");
  REQUIRE(x.size() == 5);
  auto m = sens.numeric("marginal_ev"), cas = sens.numeric("cascade_ev");
  auto pu = strat.numeric("P_U"), pdf = strat.numeric("P_DF");
  for (std::size_t k = 0; k < x.size(); ++k) {
    CHECK(cas[k] - m[k] == doctest::Approx(2.0 * 0.25 * (3.0 + x[k])).epsilon(1e-9));
    CHECK(pu[k] == doctest::Approx(1.0 + 2.0 * x[k] + 3.0 + x[k]));
    CHECK(pdf[k] == doctest::Approx(4.0 + 2.0 * x[k]));
  }
  CHECK(adj.numeric("one_minus_c")[0] == doctest::Approx(1.0));

  // simulated columns scatter around the closed forms like noise: mean squared
  // z-score near one, nothing far out
  double z2 = 0.0, worst = 0.0;
  std::size_t cnt = 0;
  for (const auto* t : {&sens, &strat, &adj})
    for (const auto& h : t->header) {
      if (!t->has_column(h + "_mc")) continue;
      auto a = t->numeric(h), mc = t->numeric(h + "_mc"), se = t->numeric(h + "_se");
      for (std::size_t k = 0; k < a.size(); ++k) {
        if (se[k] <= 0.0) {
          CHECK(mc[k] == doctest::Approx(a[k]).epsilon(1e-9));
          continue;
        }
        double z = (mc[k] - a[k]) / se[k];
        z2 += z * z;
        worst = std::max(worst, std::abs(z));
        ++cnt;
      }
    }
  REQUIRE(cnt > 20);
  CHECK(z2 / cnt < 2.0);
  CHECK(worst < 4.0);
  fs::remove_all(dir);
}
