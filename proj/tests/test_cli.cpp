#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

// End-to-end tests of the command-line tool. TWOWELL_BIN is injected by the
// build as the absolute path of the built binary.

using nlohmann::json;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + std::string(TWOWELL_BIN) + " " + args +
                          " 2>/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  RunResult r;
  char buf[4096];
  size_t got;
  while ((got = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, got);
  const int status = pclose(p);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string tmp_dir() {
  static std::string dir = [] {
    char tmpl[] = "/tmp/twowell_cli_XXXXXX";
    const char* d = mkdtemp(tmpl);
    REQUIRE(d != nullptr);
    return std::string(d);
  }();
  return dir;
}

std::string write_file(const std::string& name, const std::string& text) {
  const std::string path = tmp_dir() + "/" + name;
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << text;
  return path;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kGradConfig = R"({
  "op": "curl", "d": 2,
  "F":  [[0.695, 0.425], [0.055, 0.538]],
  "a0": [[0.1, 0.3], [-0.2, 0.2]],
  "a1": [[1.4, 0.1], [0.3, 0.68]],
  "tau": 0.42, "eps_start": 1e-6, "eps_end": 1e-3, "points": 7,
  "seed": 42, "grid_n": 128
})";

const char* kRankOneCCConfig = R"({
  "op": "curlcurl", "d": 2,
  "F":  [[0.6, 0.1], [0.1, 0.0]],
  "a0": [[0.2, 0.1], [0.1, -0.3]],
  "a1": [[1.2, 0.1], [0.1, -0.3]],
  "eps_start": 1e-6, "eps_end": 1e-3, "points": 7
})";

const char* kDivIdentityConfig = R"({
  "op": "div", "d": 2,
  "F":  [[0.55, 0.0], [0.1, 0.45]],
  "a0": [[0.0, 0.0], [0.0, 0.0]],
  "a1": [[1.0, 0.0], [0.0, 1.0]]
})";

const char* kPureConfig = R"({
  "op": "curl", "d": 2,
  "F":  [[-0.4, 0.0], [0.0, -0.2]],
  "a0": [[0.0, 0.0], [0.0, 0.0]],
  "a1": [[1.0, 0.0], [0.0, 0.5]],
  "eps_start": 1e-5, "eps_end": 1e-3, "points": 6
})";

struct Row {
  double epsilon;
  int N;
  double E_total, E_elastic, E_surface, E0, corrected;
  std::string flags;
};

std::vector<Row> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "epsilon,N,E_total,E_elastic,E_surface,E0,corrected,flags");
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    REQUIRE(f.size() == 8);
    rows.push_back(Row{std::stod(f[0]), std::stoi(f[1]), std::stod(f[2]), std::stod(f[3]),
                       std::stod(f[4]), std::stod(f[5]), std::stod(f[6]), f[7]});
  }
  return rows;
}

}  // namespace

TEST_CASE("analyze: predicted exponents per family") {
  const std::string grad = write_file("grad.json", kGradConfig);
  RunResult r = run("analyze --config " + grad);
  CHECK(r.exit_code == 0);
  json j = json::parse(r.out);
  CHECK(j["predicted_exponent"] == "2/3");
  CHECK(j["relax"]["regime"] == "Mixing");
  CHECK(j["compat"]["h"].get<double>() > 0.0);
  CHECK(j["compat"]["equicompatible"] == false);

  const std::string cc = write_file("cc1.json", kRankOneCCConfig);
  r = run("analyze --config " + cc);
  CHECK(r.exit_code == 0);
  j = json::parse(r.out);
  CHECK(j["predicted_exponent"] == "4/5");

  const std::string div_eye = write_file("div_eye.json", kDivIdentityConfig);
  r = run("analyze --config " + div_eye);
  CHECK(r.exit_code == 0);
  j = json::parse(r.out);
  CHECK(j["predicted_exponent"] == "open");
  CHECK(j["compat"]["equicompatible"] == true);

  const std::string pure = write_file("pure.json", kPureConfig);
  r = run("analyze --config " + pure);
  CHECK(r.exit_code == 0);
  j = json::parse(r.out);
  CHECK(j["predicted_exponent"] == "trivial");
  CHECK(j["relax"]["regime"] == "Pure0");
}

TEST_CASE("exit codes: 2 malformed, 3 degenerate, 2 usage") {
  const std::string bad = write_file("bad.json", "{\"op\":\"curl\",\"d\":2");
  CHECK(run("analyze --config " + bad).exit_code == 2);

  const std::string missing = write_file("missing.json", "{\"op\":\"curl\",\"d\":2}");
  CHECK(run("analyze --config " + missing).exit_code == 2);

  const std::string bad_op =
      write_file("badop.json",
                 R"({"op":"grad","d":2,"F":[[0,0],[0,0]],"a0":[[0,0],[0,0]],"a1":[[1,0],[0,1]]})");
  CHECK(run("analyze --config " + bad_op).exit_code == 2);

  const std::string degen = write_file(
      "degen.json",
      R"({"op":"curl","d":2,"F":[[0.5,0],[0,0.5]],"a0":[[1,0],[0,1]],"a1":[[1,0],[0,1]]})");
  CHECK(run("analyze --config " + degen).exit_code == 3);
  CHECK(run("sweep --config " + degen).exit_code == 3);

  CHECK(run("frobnicate").exit_code == 2);
  CHECK(run("analyze").exit_code == 2);  // --config required
  CHECK(run("analyze --config /nonexistent/path.json").exit_code == 2);
}

TEST_CASE("sweep: schema, invariants, determinism across thread counts") {
  const std::string grad = write_file("grad.json", kGradConfig);
  const std::string csv1 = tmp_dir() + "/s1.csv";
  const std::string csv2 = tmp_dir() + "/s2.csv";
  RunResult r1 = run("sweep --config " + grad + " --out " + csv1);
  CHECK(r1.exit_code == 0);
  RunResult r2 = run("sweep --config " + grad + " --out " + csv2, "TWOWELL_THREADS=3");
  CHECK(r2.exit_code == 0);
  CHECK(read_file(csv1) == read_file(csv2));
  CHECK(r1.out == r2.out);

  std::vector<Row> rows = parse_csv(read_file(csv1));
  REQUIRE(rows.size() == 7);
  for (size_t i = 0; i < rows.size(); ++i) {
    const Row& row = rows[i];
    CHECK(row.epsilon > 0.0);
    CHECK(row.epsilon < 1.0);
    CHECK(row.N >= 2);
    CHECK(row.flags == "curl_rotation");
    // excess floor: relaxation is a lower bound
    CHECK(row.E_total >= row.E0 * (1.0 - 1e-12));
    CHECK(row.corrected > 0.0);
    // total splits into elastic + eps * surface
    CHECK(row.E_total == doctest::Approx(row.E_elastic + row.epsilon * row.E_surface)
                             .epsilon(1e-12));
    if (i > 0) {
      CHECK(rows[i].epsilon > rows[i - 1].epsilon);
      // corrected energy grows with eps (surface term dominates the increase)
      CHECK(rows[i].corrected > rows[i - 1].corrected);
      // N shrinks as eps grows
      CHECK(rows[i].N <= rows[i - 1].N);
    }
  }
  // E0 identical across records (same data)
  for (const Row& row : rows) CHECK(row.E0 == doctest::Approx(rows[0].E0).epsilon(1e-12));

  json meta = json::parse(r1.out);
  REQUIRE(meta.contains("fit"));
  const double slope = meta["fit"]["slope"].get<double>();
  CHECK(slope > 0.60);
  CHECK(slope < 0.72);
  CHECK(meta["fit"]["r_squared"].get<double>() > 0.99);
}

TEST_CASE("sweep: rank-one curlcurl route and band") {
  const std::string cc = write_file("cc1.json", kRankOneCCConfig);
  const std::string csv = tmp_dir() + "/cc.csv";
  RunResult r = run("sweep --config " + cc + " --out " + csv);
  CHECK(r.exit_code == 0);
  std::vector<Row> rows = parse_csv(read_file(csv));
  REQUIRE(rows.size() == 7);
  for (const Row& row : rows) CHECK(row.flags == "cc_rank_one_frame");
  json meta = json::parse(r.out);
  REQUIRE(meta.contains("fit"));
  const double slope = meta["fit"]["slope"].get<double>();
  CHECK(slope > 0.74);
  CHECK(slope < 0.86);
}

TEST_CASE("sweep: pure regime records corrected = 0 and skips the fit") {
  const std::string pure = write_file("pure.json", kPureConfig);
  const std::string csv = tmp_dir() + "/pure.csv";
  RunResult r = run("sweep --config " + pure + " --out " + csv);
  CHECK(r.exit_code == 0);
  std::vector<Row> rows = parse_csv(read_file(csv));
  REQUIRE(rows.size() == 6);
  for (const Row& row : rows) {
    CHECK(row.flags == "pure");
    CHECK(row.N == 0);
    CHECK(row.corrected == 0.0);
    CHECK(row.E_surface == 0.0);
    CHECK(row.E_total == doctest::Approx(row.E0).epsilon(1e-15));
  }
  json meta = json::parse(r.out);
  CHECK(!meta.contains("fit"));
  REQUIRE(meta.contains("note"));
  CHECK(meta["note"].get<std::string>().find("pure") != std::string::npos);
}

TEST_CASE("fit: exact synthetic exponents") {
  // perfect corrected = eps^{2/3}
  std::string csv = "epsilon,N,E_total,E_elastic,E_surface,E0,corrected,flags\n";
  char buf[256];
  for (int i = 0; i < 9; ++i) {
    const double eps = std::pow(10.0, -7.0 + 0.5 * i);
    const double c = std::pow(eps, 2.0 / 3.0);
    std::snprintf(buf, sizeof buf, "%.17g,8,%.17g,0,0,0,%.17g,synthetic\n", eps, c, c);
    csv += buf;
  }
  const std::string p = write_file("syn23.csv", csv);
  RunResult r = run("fit " + p);
  CHECK(r.exit_code == 0);
  // JSON object follows the human-readable line
  json j = json::parse(r.out.substr(r.out.find('{')));
  CHECK(j["slope"].get<double>() == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
  CHECK(j["stderr"].get<double>() < 1e-9);
  CHECK(j["r_squared"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));

  // perfect corrected = eps
  csv = "epsilon,N,E_total,E_elastic,E_surface,E0,corrected,flags\n";
  for (int i = 0; i < 9; ++i) {
    const double eps = std::pow(10.0, -7.0 + 0.5 * i);
    std::snprintf(buf, sizeof buf, "%.17g,8,%.17g,0,0,0,%.17g,synthetic\n", eps, eps, eps);
    csv += buf;
  }
  const std::string p1 = write_file("syn1.csv", csv);
  r = run("fit " + p1);
  CHECK(r.exit_code == 0);
  j = json::parse(r.out.substr(r.out.find('{')));
  CHECK(j["slope"].get<double>() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("fit: window filtering and failure modes") {
  const std::string grad = write_file("grad.json", kGradConfig);
  const std::string csv = tmp_dir() + "/forfit.csv";
  RunResult r = run("sweep --config " + grad + " --out " + csv);
  REQUIRE(r.exit_code == 0);
  // end-to-end: fit of the sweep output stays in the band
  r = run("fit " + csv);
  CHECK(r.exit_code == 0);
  json j = json::parse(r.out.substr(r.out.find('{')));
  CHECK(j["slope"].get<double>() > 0.60);
  CHECK(j["slope"].get<double>() < 0.72);

  // narrow window leaves fewer than 5 records -> usage error
  CHECK(run("fit " + csv + " --eps-min 1e-4 --eps-max 1e-3").exit_code == 2);
  // records with N < 4 are excluded: restricting to them also fails
  const std::string junk = write_file("junk.csv", "epsilon,N\n1,2\n");
  CHECK(run("fit " + junk).exit_code == 2);
  CHECK(run("fit /nonexistent.csv").exit_code == 2);
}

TEST_CASE("construct: grid dump dimensions and ledger summary") {
  const std::string grad = write_file("grad_small.json", std::string(kGradConfig));
  const std::string grid_csv = tmp_dir() + "/grid.csv";
  RunResult r = run("construct --config " + grad + " --out " + grid_csv + " --grid-n 128");
  CHECK(r.exit_code == 0);
  json j = json::parse(r.out);
  CHECK(j["route"] == "curl_rotation");
  CHECK(j["N"].get<int>() >= 2);
  CHECK(j["ledger"]["corrected"].get<double>() > 0.0);
  CHECK(j["ledger"]["E_total"].get<double>() >=
        j["ledger"]["E0"].get<double>() * (1.0 - 1e-12));
  // one header plus one row per grid cell
  std::istringstream in(read_file(grid_csv));
  std::string line;
  int lines = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 1 + 128 * 128);

  // grid_n must be a power of two in range
  CHECK(run("construct --config " + grad + " --grid-n 100").exit_code == 2);
}

TEST_CASE("oracle: clean pass and fault injection") {
  RunResult r = run("oracle");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("oracle: PASS") != std::string::npos);
  CHECK(r.out.find("FAIL") == std::string::npos);
  // every operator contributes sphere, grid, and nullspace diffs
  for (const char* op : {"curl", "div", "curlcurl"}) {
    CHECK(r.out.find(std::string(op) + " h sphere") != std::string::npos);
    CHECK(r.out.find(std::string(op) + " theta grid") != std::string::npos);
    CHECK(r.out.find(std::string(op) + " nullspace proj") != std::string::npos);
    CHECK(r.out.find(std::string(op) + " equicompat p") != std::string::npos);
  }

  r = run("oracle --inject-h-error");
  CHECK(r.exit_code == 4);
  CHECK(r.out.find("FAIL") != std::string::npos);

  // equicompatible config input: multiplier identically zero is confirmed
  const std::string div_eye = write_file("div_eye.json", kDivIdentityConfig);
  r = run("oracle --config " + div_eye);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("config equicompat p") != std::string::npos);
}
