#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tos/config.hpp"
#include "tos/io.hpp"

namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Fresh working directory per call site; removed on the next run of the same
// test, not on success, so failures leave evidence behind.
fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("tos_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

CmdResult run_cli(const fs::path& dir, const std::string& args, const std::string& env = "") {
  const fs::path out = dir / "stdout.txt";
  const fs::path err = dir / "stderr.txt";
  std::string cmd = env.empty() ? "" : env + " ";
  cmd += std::string("\"") + TOS_CLI_PATH + "\" " + args + " > \"" + out.string() + "\" 2> \"" +
         err.string() + "\"";
  const int status = std::system(cmd.c_str());
  CmdResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

fs::path write_config(const fs::path& dir, const std::string& body) {
  const fs::path p = dir / "exp.cfg";
  std::ofstream out(p);
  out << body;
  return p;
}

// Small sparse-view instance: 4 subsets, 2 epochs, 2 seeds, fast reference.
std::string small_config(const std::string& out_dir, const std::string& extra_solver = "",
                         const std::string& extra = "") {
  return "[problem]\n"
         "modality = sparse_view\n"
         "height = 32\nwidth = 32\nangles = 20\nsubsets = 4\n"
         "lambda = 0.01\ni0 = 100000\nseed = 1\n"
         "[solver]\n"
         "algorithms = tos, condat_vu\n"
         "epochs = 2\n"
         "seeds = 1, 2\n" +
         extra_solver +
         "[output]\n"
         "dir = " + out_dir + "\n" +
         "[reference]\n"
         "iterations = 400\n" +
         extra;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> ls;
  std::stringstream ss(text);
  std::string l;
  while (std::getline(ss, l)) ls.push_back(l);
  return ls;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string c;
  while (std::getline(ss, c, ',')) cells.push_back(c);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

}  // namespace

TEST_CASE("solve: writes schema-conforming per-run and summary CSVs") {
  const fs::path dir = fresh_dir("solve");
  const fs::path cfg = write_config(dir, small_config((dir / "out").string()));
  auto r = run_cli(dir, "solve \"" + cfg.string() + "\"");
  CHECK(r.exit_code == 0);

  for (const std::string base :
       {"run_tos_1.csv", "run_tos_2.csv", "run_condat_vu_1.csv", "run_condat_vu_2.csv"}) {
    const fs::path p = dir / "out" / base;
    REQUIRE(fs::exists(p));
    auto ls = lines_of(slurp(p));
    REQUIRE(ls.size() >= 4);  // banner + header + one row per epoch
    CHECK(ls[0].rfind("# algo=", 0) == 0);
    CHECK(ls[0].find(" seed=") != std::string::npos);
    CHECK(ls[0].find(" config=") != std::string::npos);
    CHECK(ls[1] == "epoch,k,objective,gap,psnr,seconds");
    for (size_t i = 2; i < ls.size(); ++i) {
      auto cells = split_csv(ls[i]);
      REQUIRE(cells.size() == 6);
      CHECK(std::stoll(cells[0]) == static_cast<long long>(i) - 1);  // epochs 1..E
      CHECK(std::stod(cells[2]) >= 0.0);
      CHECK(!cells[3].empty());  // reference configured: gap populated
      CHECK(std::stod(cells[4]) > 0.0);
      CHECK(cells[5] == "0");  // timing off by default
    }
  }

  // Stochastic rows advance by one epoch = n iterations; the deterministic
  // baseline counts every iteration as an epoch.
  auto tos_rows = lines_of(slurp(dir / "out" / "run_tos_1.csv"));
  CHECK(split_csv(tos_rows[2])[1] == "4");
  CHECK(split_csv(tos_rows[3])[1] == "8");
  auto cv_rows = lines_of(slurp(dir / "out" / "run_condat_vu_1.csv"));
  CHECK(split_csv(cv_rows[2])[1] == "1");
  CHECK(split_csv(cv_rows[3])[1] == "2");

  const fs::path summary = dir / "out" / "summary.csv";
  REQUIRE(fs::exists(summary));
  auto sl = lines_of(slurp(summary));
  CHECK(sl[0] ==
        "algorithm,epoch,k,objective_mean,objective_std,gap_mean,gap_std,psnr_mean,psnr_std,"
        "seconds_mean,seconds_std");
  REQUIRE(sl.size() == 5);  // two algorithms x two epochs
  CHECK(split_csv(sl[1])[0] == "tos");
  CHECK(split_csv(sl[3])[0] == "condat_vu");
  CHECK(r.out.find("summary:") != std::string::npos);
}

TEST_CASE("solve: repeated runs are byte-identical, threads do not matter") {
  const fs::path dir = fresh_dir("determinism");
  const fs::path cfg = write_config(dir, small_config((dir / "a").string()));

  CHECK(run_cli(dir, "solve \"" + cfg.string() + "\"").exit_code == 0);
  CHECK(run_cli(dir, "solve \"" + cfg.string() + "\" --out-dir \"" + (dir / "b").string() + "\"")
            .exit_code == 0);
  CHECK(run_cli(dir, "solve \"" + cfg.string() + "\" --out-dir \"" + (dir / "c").string() +
                         "\" --threads 3")
            .exit_code == 0);

  for (const std::string base : {"run_tos_1.csv", "run_tos_2.csv", "run_condat_vu_1.csv",
                                 "run_condat_vu_2.csv", "summary.csv"}) {
    const std::string a = slurp(dir / "a" / base);
    CHECK(a == slurp(dir / "b" / base));
    CHECK(a == slurp(dir / "c" / base));
  }
}

TEST_CASE("phantom then solve: cached inputs are reused byte-identically") {
  const fs::path dir = fresh_dir("cache");
  const fs::path cfg = write_config(dir, small_config((dir / "out").string()));

  auto ph = run_cli(dir, "phantom \"" + cfg.string() + "\"");
  CHECK(ph.exit_code == 0);
  CHECK(ph.out.find("phantom:") != std::string::npos);
  const std::string phantom_before = slurp(dir / "out" / "phantom.bin");
  const std::string sino_before = slurp(dir / "out" / "sinogram.bin");

  CHECK(run_cli(dir, "solve \"" + cfg.string() + "\"").exit_code == 0);
  CHECK(slurp(dir / "out" / "phantom.bin") == phantom_before);
  CHECK(slurp(dir / "out" / "sinogram.bin") == sino_before);

  // A cached measurement that contradicts the config is an error, not data.
  std::string sidecar = slurp(dir / "out" / "sinogram.json");
  const auto pos = sidecar.find("\"seed\"");
  REQUIRE(pos != std::string::npos);
  sidecar.replace(pos, std::string("\"seed\"").size(), "\"seed\" ");
  {
    std::ofstream out(dir / "out" / "sinogram.json", std::ios::binary | std::ios::trunc);
    out << sidecar;
  }
  // Whitespace-only JSON change still parses: now flip the stored seed value.
  tos::Sinogram<double> sino =
      tos::load_sinogram(dir / "out" / "sinogram.bin", dir / "out" / "sinogram.json");
  sino.seed = 999;
  tos::save_sinogram(sino, dir / "out" / "sinogram.bin", dir / "out" / "sinogram.json");
  auto bad = run_cli(dir, "solve \"" + cfg.string() + "\"");
  CHECK(bad.exit_code == 2);
  CHECK(bad.err.find("does not match") != std::string::npos);
}

TEST_CASE("solve: config errors exit 2") {
  const fs::path dir = fresh_dir("config_errors");
  const fs::path empty_seeds =
      write_config(dir, "[problem]\nmodality = sparse_view\n[solver]\nseeds = \n");
  auto r1 = run_cli(dir, "solve \"" + empty_seeds.string() + "\"");
  CHECK(r1.exit_code == 2);
  CHECK(r1.err.find("seeds") != std::string::npos);

  const fs::path unknown = write_config(dir, "[problem]\nmodality = sparse_view\nfoo = 1\n");
  auto r2 = run_cli(dir, "solve \"" + unknown.string() + "\"");
  CHECK(r2.exit_code == 2);
  CHECK(r2.err.find("line 3") != std::string::npos);
  CHECK(r2.err.find("unknown key") != std::string::npos);

  auto r3 = run_cli(dir, "solve \"" + (dir / "missing.cfg").string() + "\"");
  CHECK(r3.exit_code == 2);
}

TEST_CASE("validate-steps: certification table and exit codes") {
  const fs::path dir = fresh_dir("validate");
  const fs::path cfg = write_config(dir, small_config((dir / "out").string()));
  auto ok = run_cli(dir, "validate-steps \"" + cfg.string() + "\"");
  CHECK(ok.exit_code == 0);
  CHECK(ok.out.find("certified: yes") != std::string::npos);
  CHECK(ok.out.find("p_i") != std::string::npos);
  CHECK(ok.out.find("margin") != std::string::npos);
  int data_rows = 0;
  for (const auto& l : lines_of(ok.out))
    if (!l.empty() && l.find_first_not_of(' ') != std::string::npos && std::isdigit(l[l.find_first_not_of(' ')]))
      ++data_rows;
  CHECK(data_rows == 4);  // one per subset

  // An aggressive step scale fails the certificate but still prints the table.
  const fs::path hot = write_config(
      dir, small_config((dir / "out2").string(), "gamma = 5\n", "") );
  auto bad = run_cli(dir, "validate-steps \"" + hot.string() + "\"");
  CHECK(bad.exit_code == 3);
  CHECK(bad.out.find("certified: no") != std::string::npos);
  CHECK(bad.out.find("p_i") != std::string::npos);

  // gamma = 5 also blocks solve without the override flag.
  const fs::path hot_solve = write_config(
      dir, small_config((dir / "out3").string(), "gamma = 5\n", ""));
  auto blocked = run_cli(dir, "solve \"" + hot_solve.string() + "\"");
  CHECK(blocked.exit_code == 3);
}

TEST_CASE("validate-steps: single-subset table has one certified row") {
  const fs::path dir = fresh_dir("validate_single");
  const fs::path cfg = write_config(dir,
                                    "[problem]\n"
                                    "height = 32\nwidth = 32\nangles = 20\nsubsets = 1\n"
                                    "lambda = 0\n"
                                    "[output]\ndir = " + (dir / "out").string() + "\n");
  auto r = run_cli(dir, "validate-steps \"" + cfg.string() + "\"");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("certified: yes") != std::string::npos);
  int data_rows = 0;
  double p = 0, v = 0;
  for (const auto& l : lines_of(r.out)) {
    const auto first = l.find_first_not_of(' ');
    if (first == std::string::npos || !std::isdigit(l[first])) continue;
    ++data_rows;
    std::stringstream ss(l);
    long long idx;
    double margin;
    ss >> idx >> p >> v >> margin;
  }
  CHECK(data_rows == 1);
  CHECK(p == 1.0);
  CHECK(v < 1.0);  // single block: the overapproximation parameter sits below p = 1
  CHECK(v > 0.0);
}

TEST_CASE("solver divergence under the unsafe override exits 4") {
  // At gamma near the double range the primal step tau is ~1e306, and the dual
  // accumulator times tau overflows within an epoch; certification refuses the
  // scale outright, and the forced run aborts on the first non-finite iterate.
  const fs::path dir = fresh_dir("abort");
  const fs::path cfg = write_config(dir,
                                    "[problem]\n"
                                    "modality = sparse_view\n"
                                    "height = 32\nwidth = 32\nangles = 20\nsubsets = 4\n"
                                    "lambda = 0\ni0 = 100000\nseed = 1\n"
                                    "[solver]\n"
                                    "algorithms = tos\nepochs = 5\nseeds = 1\ngamma = 1e308\n"
                                    "[output]\ndir = " + (dir / "out").string() + "\n");
  auto blocked = run_cli(dir, "solve \"" + cfg.string() + "\"");
  CHECK(blocked.exit_code == 3);
  CHECK(blocked.err.find("certification failed") != std::string::npos);
  auto r = run_cli(dir, "solve \"" + cfg.string() + "\" --override-unsafe-steps");
  CHECK(r.exit_code == 4);
  CHECK(r.err.find("non-finite") != std::string::npos);
}

TEST_CASE("TOS_SEED overrides the measurement seed") {
  const fs::path dir = fresh_dir("env_seed");
  const fs::path cfg = write_config(dir, small_config((dir / "a").string()));
  CHECK(run_cli(dir, "phantom \"" + cfg.string() + "\"").exit_code == 0);
  CHECK(run_cli(dir, "phantom \"" + cfg.string() + "\" --out-dir \"" + (dir / "b").string() + "\"",
                "TOS_SEED=123")
            .exit_code == 0);

  CHECK(slurp(dir / "a" / "phantom.bin") == slurp(dir / "b" / "phantom.bin"));
  CHECK(slurp(dir / "a" / "sinogram.bin") != slurp(dir / "b" / "sinogram.bin"));

  auto bad = run_cli(dir, "phantom \"" + cfg.string() + "\"", "TOS_SEED=12x");
  CHECK(bad.exit_code == 2);
  CHECK(bad.err.find("TOS_SEED") != std::string::npos);
}

TEST_CASE("reference workflow: sidecars round-trip and uncertified refs warn") {
  const fs::path dir = fresh_dir("reference");
  const fs::path cfg = write_config(dir, small_config((dir / "out").string()));
  auto r = run_cli(dir, "reference \"" + cfg.string() + "\"");
  CHECK(r.exit_code == 0);
  REQUIRE(fs::exists(dir / "out" / "reference.bin"));
  REQUIRE(fs::exists(dir / "out" / "reference.json"));

  // Sidecars parse back to the same content and re-save byte-identically.
  auto phantom = tos::load_phantom(dir / "out" / "phantom.bin", dir / "out" / "phantom.json");
  CHECK(phantom.height == 32);
  CHECK(phantom.width == 32);
  tos::save_phantom(phantom, dir / "resaved.bin", dir / "resaved.json");
  CHECK(slurp(dir / "resaved.bin") == slurp(dir / "out" / "phantom.bin"));
  CHECK(slurp(dir / "resaved.json") == slurp(dir / "out" / "phantom.json"));

  auto sino = tos::load_sinogram(dir / "out" / "sinogram.bin", dir / "out" / "sinogram.json");
  CHECK(sino.n_angles == 20);
  CHECK(sino.i0 == 100000.0);
  CHECK(sino.seed == 1);
  tos::save_sinogram(sino, dir / "resino.bin", dir / "resino.json");
  CHECK(slurp(dir / "resino.bin") == slurp(dir / "out" / "sinogram.bin"));
  CHECK(slurp(dir / "resino.json") == slurp(dir / "out" / "sinogram.json"));

  // The solve that follows reuses the stored reference (gap column filled).
  auto solved = run_cli(dir, "solve \"" + cfg.string() + "\"");
  CHECK(solved.exit_code == 0);
  auto ls = lines_of(slurp(dir / "out" / "run_tos_1.csv"));
  CHECK(!split_csv(ls[2])[3].empty());

  // A deliberately short reference run fails its certificate: solve warns on
  // stderr but still completes.
  const fs::path short_dir = fresh_dir("reference_short");
  const fs::path short_cfg = write_config(
      short_dir, small_config((short_dir / "out").string(), "",
                              "tol = 1e-14\n"));
  auto warned = run_cli(short_dir, "solve \"" + short_cfg.string() + "\"");
  CHECK(warned.exit_code == 0);
  CHECK(warned.err.find("not certified") != std::string::npos);
}

TEST_CASE("cli argument errors") {
  const fs::path dir = fresh_dir("args");
  auto none = run_cli(dir, "solve");
  CHECK(none.exit_code != 0);
  auto unknown = run_cli(dir, "frobnicate x.cfg");
  CHECK(unknown.exit_code != 0);
}
