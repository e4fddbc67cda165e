#include <doctest.h>

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "biref/commands.hpp"
#include "biref/io.hpp"
#include "biref/job.hpp"
#include "support.hpp"

using namespace biref;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::initializer_list<std::string> args) {
  std::vector<std::string> store{"biref"};
  store.insert(store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : store) argv.push_back(s.c_str());
  std::ostringstream out, err;
  int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

json e0_json() {
  std::ifstream in(BIREF_E0_CONFIG);
  return json::parse(in);
}

fs::path write_config(const fs::path& dir, const std::string& name, const json& doc) {
  fs::path p = dir / name;
  std::ofstream(p) << doc.dump(2);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("validate") {
  auto ok = run_cli({"validate", "--config", BIREF_E0_CONFIG});
  CHECK(ok.code == kExitOk);
  CHECK(ok.out.find("positivity margin") != std::string::npos);

  auto dir = test::scratch_dir("cli_validate");
  auto doc = e0_json();
  doc["optical"]["ell"] = 2.0;
  auto bad = run_cli({"validate", "--config", write_config(dir, "ell2.json", doc).string()});
  CHECK(bad.code == kExitInfeasible);
  CHECK(bad.err.find("increase ell to at least 2.45") != std::string::npos);

  std::ofstream(dir / "broken.json") << "{ not json";
  CHECK(run_cli({"validate", "--config", (dir / "broken.json").string()}).code == kExitInputError);
  CHECK(run_cli({"validate", "--config", (dir / "missing.json").string()}).code == kExitInputError);
  CHECK(run_cli({"validate"}).code == kExitInputError);
  CHECK(run_cli({}).code == kExitInputError);
  CHECK(run_cli({"frobnicate"}).code == kExitInputError);
}

TEST_CASE("solve then verify, then detect tampering") {
  auto dir = test::scratch_dir("cli_solve");
  auto doc = e0_json();
  doc["source"]["n_mz"] = 6;
  doc["source"]["n_phi"] = 6;
  doc["target"]["nx"] = 6;
  doc["target"]["ny"] = 6;
  auto cfg = write_config(dir, "job.json", doc).string();
  auto out = (dir / "run").string();

  auto s = run_cli({"solve", "--config", cfg, "--out", out, "--mesh-res", "10x12"});
  INFO(s.err);
  REQUIRE(s.code == kExitOk);
  for (const char* f : {"plan.csv", "potentials.csv", "reflector1.obj", "reflector2.obj", "report.json"}) {
    CHECK(fs::exists(fs::path(out) / f));
  }
  json report = json::parse(slurp(fs::path(out) / "report.json"));
  CHECK(report["status"] == "ok");
  CHECK(report["certificate"].is_object());
  auto pot = read_potentials_csv(fs::path(out) / "potentials.csv");
  CHECK(pot.r.size() == 36);
  CHECK(pot.r[0] == 0.0);

  auto v = run_cli({"verify", "--config", cfg, "--out", out});
  INFO(v.err);
  CHECK(v.code == kExitOk);
  report = json::parse(slurp(fs::path(out) / "report.json"));
  CHECK(report["verify"]["ok"] == true);

  pot.r[3] += 0.1;
  write_potentials_csv(fs::path(out) / "potentials.csv", pot);
  auto t = run_cli({"verify", "--config", cfg, "--out", out});
  CHECK(t.code == kExitVerificationFailed);
  CHECK(t.err.find("certificate") != std::string::npos);

  CHECK(run_cli({"verify", "--config", cfg, "--out", (dir / "nowhere").string()}).code ==
        kExitInputError);
  CHECK(run_cli({"solve", "--config", cfg, "--out", out, "--mesh-res", "10by12"}).code ==
        kExitInputError);
}

TEST_CASE("solve is deterministic and honors the gauge") {
  auto dir = test::scratch_dir("cli_repeat");
  auto doc = e0_json();
  doc["source"]["n_mz"] = 4;
  doc["source"]["n_phi"] = 4;
  doc["target"]["nx"] = 4;
  doc["target"]["ny"] = 4;
  auto cfg = write_config(dir, "job.json", doc).string();
  auto a = (dir / "a").string();
  auto b = (dir / "b").string();
  REQUIRE(run_cli({"solve", "--config", cfg, "--out", a}).code == kExitOk);
  REQUIRE(run_cli({"solve", "--config", cfg, "--out", b}).code == kExitOk);
  for (const char* f : {"plan.csv", "potentials.csv", "reflector1.obj", "reflector2.obj"}) {
    CHECK(slurp(fs::path(a) / f) == slurp(fs::path(b) / f));
  }
  auto g = (dir / "g").string();
  REQUIRE(run_cli({"solve", "--config", cfg, "--out", g, "--gauge", "0.5"}).code == kExitOk);
  CHECK(read_potentials_csv(fs::path(g) / "potentials.csv").r[0] == 0.5);
  CHECK(slurp(fs::path(a) / "plan.csv") == slurp(fs::path(g) / "plan.csv"));
}

TEST_CASE("solve reports an infeasible ell") {
  auto dir = test::scratch_dir("cli_infeasible");
  auto doc = e0_json();
  doc["optical"]["ell"] = 2.0;
  auto cfg = write_config(dir, "job.json", doc).string();
  CHECK(run_cli({"solve", "--config", cfg, "--out", (dir / "o").string()}).code == kExitInfeasible);
}

TEST_CASE("oracle") {
  auto a = run_cli({"oracle", "--n", "4", "--trials", "30", "--seed", "5"});
  CHECK(a.code == kExitOk);
  CHECK(a.out.find("n = 4") != std::string::npos);
  CHECK(run_cli({"oracle", "--n", "2"}).code == kExitOk);
  CHECK(run_cli({"oracle", "--n", "6", "--trials", "3"}).code == kExitOk);
  CHECK(run_cli({"oracle", "--n", "8"}).code == kExitInputError);
  CHECK(run_cli({"oracle", "--n", "1"}).code == kExitInputError);
  CHECK(run_cli({"oracle", "--n", "3", "--config", BIREF_E0_CONFIG}).code == kExitOk);
}

TEST_CASE("exit code mapping") {
  CHECK(exit_code_for(ErrorCode::kInfeasibleEll) == kExitInfeasible);
  CHECK(exit_code_for(ErrorCode::kNonPositiveKernel) == kExitInfeasible);
  CHECK(exit_code_for(ErrorCode::kStalled) == kExitStalled);
  CHECK(exit_code_for(ErrorCode::kNotTight) == kExitVerificationFailed);
  CHECK(exit_code_for(ErrorCode::kParseError) == kExitInputError);
  CHECK(exit_code_for(ErrorCode::kTooLarge) == kExitInputError);
}
