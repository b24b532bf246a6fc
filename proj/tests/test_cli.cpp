#include "doctest.h"
#include "partasm/dataset.hpp"
#include "partasm/json_io.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

using namespace partasm;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int exit = -1;
  std::string out;
  std::string err;
};

const fs::path& scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("partasm_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    static const struct Cleanup {
      fs::path d;
      ~Cleanup() {
        std::error_code ec;
        fs::remove_all(d, ec);
      }
    } cleanup{d};
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run cli(const std::string& args) {
  const fs::path out = scratch() / "stdout.txt", err = scratch() / "stderr.txt";
  const std::string cmd = "cd '" + scratch().string() + "' && '" + PARTASM_CLI_PATH + "' " + args + " >'" +
                          out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.exit = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

// Small network so the command-level tests stay fast.
std::string small_config(std::size_t noise_dim, std::size_t hidden = 32) {
  json j = {{"net",
             {{"feature_dim", 32},
              {"hidden_dim", hidden},
              {"pose_feat_dim", 16},
              {"noise_dim", noise_dim},
              {"iterations", 2},
              {"encoder_dims", {16, 32}},
              {"edge_hidden", 32},
              {"rel_hidden", 16},
              {"pose_hidden", 32}}},
            {"train", {{"mon_samples", 1}}},
            {"eval", {{"samples", 2}}},
            {"steps", 8},
            {"batch_size", 2},
            {"optimizer", {{"lr", 0.005}}}};
  const std::string name = "small_nz" + std::to_string(noise_dim) + "_h" + std::to_string(hidden) + ".json";
  write(scratch() / name, j.dump());
  return name;
}

// Data rows of a CSV with '#' comment lines and one header line.
std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::vector<double> loss_column(const fs::path& log) {
  std::vector<double> out;
  for (const auto& row : csv_rows(log)) out.push_back(std::stod(row.at(1)));
  return out;
}

const std::string& table_data() {
  static const std::string dir = [] {
    const Run r = cli("gen-data --category table --count 12 --seed 3 --out tables");
    REQUIRE(r.exit == 0);
    return std::string("tables");
  }();
  return dir;
}

}  // namespace

TEST_CASE("gen-data writes a 70/10/20 split and is byte-reproducible") {
  const Run a = cli("gen-data --category table --count 80 --seed 7 --out gen_a");
  REQUIRE(a.exit == 0);
  CHECK(a.out.find("train 56 / val 8 / test 16") != std::string::npos);
  const json m = json::parse(slurp(scratch() / "gen_a" / "manifest.json"));
  CHECK(m.at("splits").at("train").size() == 56);
  CHECK(m.at("splits").at("val").size() == 8);
  CHECK(m.at("splits").at("test").size() == 16);

  REQUIRE(cli("gen-data --category table --count 80 --seed 7 --out gen_b").exit == 0);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(scratch() / "gen_a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), scratch() / "gen_a");
    CHECK(slurp(e.path()) == slurp(scratch() / "gen_b" / rel));
    ++files;
  }
  CHECK(files == 81);
}

TEST_CASE("errors are one machine-parsable line with a nonzero exit") {
  const Run small = cli("gen-data --count 5 --out tiny");
  CHECK(small.exit != 0);
  CHECK(small.err.rfind("error: invalid_argument: ", 0) == 0);
  CHECK(std::count(small.err.begin(), small.err.end(), '\n') == 1);

  const Run missing = cli("train --dataset no_such_dir --out r");
  CHECK(missing.exit != 0);
  CHECK(missing.err.rfind("error: io_error: ", 0) == 0);

  write(scratch() / "broken.json", "{\"steps\": 3,");
  const Run broken = cli("train --dataset " + table_data() + " --config broken.json --out r");
  CHECK(broken.exit != 0);
  CHECK(broken.err.rfind("error: parse_error: ", 0) == 0);

  write(scratch() / "unknown.json", "{\"stepz\": 3}");
  const Run unknown = cli("train --dataset " + table_data() + " --config unknown.json --out r");
  CHECK(unknown.exit != 0);
  CHECK(unknown.err.rfind("error: config_mismatch: ", 0) == 0);

  const Run usage = cli("train --out r");
  CHECK(usage.exit == 2);
  CHECK(usage.err.rfind("error: usage: ", 0) == 0);
}

TEST_CASE("train with zero noise and one sample reproduces its loss curve") {
  const std::string cfg = small_config(32);
  const std::string common = "train --dataset " + table_data() + " --config " + cfg + " --noise-dim 0 --mon-samples 1";
  REQUIRE(cli(common + " --out det_a").exit == 0);
  REQUIRE(cli(common + " --out det_b").exit == 0);
  const auto a = loss_column(scratch() / "det_a" / "train_log.csv");
  const auto b = loss_column(scratch() / "det_b" / "train_log.csv");
  CHECK(a.size() == 8);
  CHECK(a == b);
  CHECK(slurp(scratch() / "det_a" / "model.ckpt").size() > 0);

  const json config = json::parse(slurp(scratch() / "det_a" / "config.json"));
  CHECK(config.at("order") == "top_down");
  CHECK(config.at("net").at("noise_dim") == 0);
  CHECK(config.at("train").at("mon_samples") == 1);
  const std::string log = slurp(scratch() / "det_a" / "train_log.csv");
  CHECK(log.rfind("# run_config {", 0) == 0);
  CHECK(log.find("step,loss,translation,rotation,shape,wall_seconds") != std::string::npos);
}

TEST_CASE("overfit training records the shape and lowers the loss") {
  const std::string cfg = small_config(0);
  const Run r = cli("train --dataset " + table_data() + " --config " + cfg +
                    " --overfit table_0002 --steps 120 --checkpoint-every 50 --out overfit");
  REQUIRE(r.exit == 0);
  CHECK(r.out.find("on 1 shapes") != std::string::npos);
  const auto loss = loss_column(scratch() / "overfit" / "train_log.csv");
  REQUIRE(loss.size() == 120);
  CHECK(loss.back() < 0.3 * loss.front());
  CHECK(json::parse(slurp(scratch() / "overfit" / "config.json")).at("overfit") == "table_0002");
  CHECK(fs::exists(scratch() / "overfit" / "model_step000050.ckpt"));
  CHECK(fs::exists(scratch() / "overfit" / "model_step000100.ckpt"));
  CHECK(fs::exists(scratch() / "overfit" / "model.ckpt"));

  const Run unknown = cli("train --dataset " + table_data() + " --config " + cfg + " --overfit nope --out o2");
  CHECK(unknown.exit != 0);
  CHECK(unknown.err.find("nope") != std::string::npos);
}

TEST_CASE("eval reports best-of-E metrics and checks the checkpoint dimensions") {
  const std::string cfg = small_config(0);
  REQUIRE(cli("train --dataset " + table_data() + " --config " + cfg + " --steps 3 --out ev_run").exit == 0);
  const std::string ckpt = "ev_run/model.ckpt";

  const Run r = cli("eval --checkpoint " + ckpt + " --dataset " + table_data() + " --noise-dim 0 --samples 10 --out ev");
  REQUIRE(r.exit == 0);
  const json m = json::parse(slurp(scratch() / "ev" / "metrics.json"));
  CHECK(m.at("samples") == 10);
  CHECK(m.at("config").at("eval").at("samples") == 10);
  CHECK(m.at("config").at("net") == json::parse(slurp(scratch() / "ev_run" / "config.json")).at("net"));
  CHECK(m.at("aggregate").at("variability").at("scd") == 0.0);
  CHECK(m.at("aggregate").at("variability").at("pa") == 0.0);
  for (const auto& s : m.at("shapes")) CHECK(s.at("variability").at("scd") == 0.0);
  CHECK(m.at("shapes").size() == json::parse(slurp(scratch() / table_data() / "manifest.json"))
                                     .at("splits")
                                     .at("test")
                                     .size());
  CHECK(csv_rows(scratch() / "ev" / "per_shape.csv").size() == m.at("shapes").size());
  CHECK(!csv_rows(scratch() / "ev" / "per_label.csv").empty());

  const Run mismatch = cli("eval --checkpoint " + ckpt + " --dataset " + table_data() + " --noise-dim 32 --out ev2");
  CHECK(mismatch.exit != 0);
  CHECK(mismatch.err.rfind("error: config_mismatch: ", 0) == 0);
  CHECK(mismatch.err.find("32") != std::string::npos);
  CHECK(mismatch.err.find("noise_dim 0") != std::string::npos);

  const std::string other = small_config(0, 48);
  const Run wrong_net = cli("eval --checkpoint " + ckpt + " --dataset " + table_data() + " --config " + other +
                            " --out ev3");
  CHECK(wrong_net.exit != 0);
  CHECK(wrong_net.err.rfind("error: config_mismatch: ", 0) == 0);
  CHECK(wrong_net.err.find("\"hidden_dim\":48") != std::string::npos);
  CHECK(wrong_net.err.find("\"hidden_dim\":32") != std::string::npos);
}

TEST_CASE("eval with a delete fraction notes the removed groups") {
  REQUIRE(cli("gen-data --category chair --count 10 --seed 5 --out chairs").exit == 0);
  const std::string cfg = small_config(0);
  REQUIRE(cli("train --dataset chairs --config " + cfg + " --steps 1 --out ch_run").exit == 0);
  const Run r = cli("eval --checkpoint ch_run/model.ckpt --dataset chairs --split all --delete-fraction 0.6 --out ch_ev");
  REQUIRE(r.exit == 0);
  CHECK(r.out.find("removed") != std::string::npos);
  const json m = json::parse(slurp(scratch() / "ch_ev" / "metrics.json"));
  CHECK(m.at("config").at("delete_fraction") == 0.6);
  const json manifest = json::parse(slurp(scratch() / "chairs" / "manifest.json"));
  std::size_t reduced = 0;
  for (const auto& s : m.at("shapes")) {
    std::size_t original = 0;
    for (const auto& entry : manifest.at("shapes")) {
      if (entry.at("id") == s.at("id")) original = entry.at("parts");
    }
    const std::size_t removed = s.at("removed_labels").size();
    CHECK(s.at("parts").get<std::size_t>() + removed == original);
    CHECK(removed <= static_cast<std::size_t>(0.6 * static_cast<double>(original)));
    if (removed > 0) {
      ++reduced;
      CHECK(!s.at("removed_groups").empty());
    }
  }
  CHECK(reduced > 0);
}

TEST_CASE("ablate emits one row per configuration with re-runnable flags") {
  const std::string cfg = small_config(0);
  const Run r = cli("ablate --dataset " + table_data() + " --config " + cfg + " --orders top_down,random --steps 3 --out ab");
  REQUIRE(r.exit == 0);
  const auto rows = csv_rows(scratch() / "ab" / "ablation.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0][0] == "top_down");
  CHECK(rows[1][0] == "random");
  const json table = json::parse(slurp(scratch() / "ab" / "ablation.json"));
  CHECK(table.at("rows").at(0).at("config").at("dataset") == table.at("rows").at(1).at("config").at("dataset"));

  // The rerun command reproduces the row's training run exactly.
  std::string rerun = rows[1].back();
  const std::string original_out = table.at("rows").at(1).at("config").at("out");
  rerun.replace(rerun.find("--out " + original_out), std::string("--out " + original_out).size(), "--out rerun");
  REQUIRE(cli(rerun).exit == 0);
  CHECK(loss_column(scratch() / original_out / "train_log.csv") == loss_column(scratch() / "rerun" / "train_log.csv"));
  json again = json::parse(slurp(scratch() / "rerun" / "config.json"));
  again["out"] = original_out;
  CHECK(again == table.at("rows").at(1).at("config"));

  const std::string wide = small_config(0, 256);
  const Run noise = cli("ablate --dataset " + table_data() + " --config " + wide + " --noise-dims 0,32,128,256 --steps 1 --out ab_nz");
  REQUIRE(noise.exit == 0);
  const auto nz = csv_rows(scratch() / "ab_nz" / "ablation.csv");
  REQUIRE(nz.size() == 4);
  CHECK(nz[0][1] == "0");
  CHECK(nz[1][1] == "32");
  CHECK(nz[2][1] == "128");
  CHECK(nz[3][1] == "256");
}

TEST_CASE("export writes colored points matching the assembled construction") {
  const Run r = cli("export --dataset " + table_data() + " --shape table_0004 --out ex");
  REQUIRE(r.exit == 0);
  const std::string text = slurp(scratch() / "ex" / "table_0004_gt.ply");
  std::istringstream in(text);
  std::string line;
  std::size_t vertices = 0;
  while (std::getline(in, line) && line != "end_header") {
    if (line.rfind("element vertex ", 0) == 0) vertices = std::stoul(line.substr(15));
  }
  CHECK(vertices == 1000);

  const data::Generated g = data::generate_construction(data::Category::table, derive_seed(3, 4));
  std::size_t row = 0;
  double worst = 0.0;
  std::vector<int> first_color;
  for (const auto& part : g.world_parts) {
    for (Eigen::Index k = 0; k < part.rows(); ++k, ++row) {
      REQUIRE(std::getline(in, line));
      std::istringstream ls(line);
      double x, y, z;
      int cr, cg, cb;
      ls >> x >> y >> z >> cr >> cg >> cb;
      worst = std::max({worst, std::abs(x - part(k, 0)), std::abs(y - part(k, 1)), std::abs(z - part(k, 2))});
      if (k == 0) first_color = {cr, cg, cb};
    }
  }
  CHECK(row == 1000);
  CHECK(worst <= 1e-9);
  CHECK(!std::getline(in, line));

  const std::string cfg = small_config(0);
  REQUIRE(cli("train --dataset " + table_data() + " --config " + cfg + " --steps 1 --out ex_run").exit == 0);
  REQUIRE(cli("export --dataset " + table_data() + " --shape table_0004 --checkpoint ex_run/model.ckpt --out ex1").exit == 0);
  REQUIRE(cli("export --dataset " + table_data() + " --shape table_0004 --checkpoint ex_run/model.ckpt --out ex2").exit == 0);
  const std::string pred = slurp(scratch() / "ex1" / "table_0004_pred.ply");
  CHECK(!pred.empty());
  CHECK(pred == slurp(scratch() / "ex2" / "table_0004_pred.ply"));
  CHECK(pred.find("comment run_config {") != std::string::npos);
  CHECK(pred.find("element vertex 1000\n") != std::string::npos);
}

TEST_CASE("gradcheck prints the worst relative error") {
  const Run r = cli("gradcheck --seed 4");
  REQUIRE(r.exit == 0);
  const auto at = r.out.find("max relative error ");
  REQUIRE(at != std::string::npos);
  CHECK(std::stod(r.out.substr(at + 19)) <= 1e-3);
}
