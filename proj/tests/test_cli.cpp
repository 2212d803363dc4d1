#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cbgbdt/cli.hpp"
#include "doctest.h"
#include "json.hpp"
#include "synth.hpp"

using namespace cbgbdt;
namespace fs = std::filesystem;

namespace {

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

// Toy binary CSV plus a matching base config in a fresh directory.
fs::path toy(const std::string& name) {
  const fs::path dir = synth::temp_dir(name);
  write_csv(synth::gaussian_binary(240, 4, 1.5, 5), (dir / "toy.csv").string());
  nlohmann::json cfg = {{"dataset", {{"path", (dir / "toy.csv").string()}, {"task", "binary"}}},
                        {"booster", {{"n_rounds", 40}}},
                        {"output", (dir / "out").string()}};
  write(dir / "cfg.json", cfg.dump());
  return dir;
}

int run(const std::string& args, std::string* output = nullptr) {
  const std::string log = (fs::temp_directory_path() / "cbgbdt-cli-run.log").string();
  const int status = std::system((std::string(CBGBDT_CLI_PATH) + " " + args + " > " + log + " 2>&1").c_str());
  if (output) *output = read_file(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

int code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return exit_code_for(e);
  }
  return 0;
}

}  // namespace

TEST_CASE("config parsing") {
  const fs::path dir = toy("cli-config");
  const std::string path = (dir / "toy.csv").string();
  const RunConfig c = config_from_json(R"({"dataset":{"path":")" + path +
                                       R"(","task":"binary"},"loss":{"kind":"AWE","w":5},"split":{"k":4},"seed":7})");
  CHECK(c.loss_kind == LossKind::AWE);
  CHECK(c.loss_params.w == 5.0);
  CHECK(c.split.k == 4);
  CHECK(c.split.seed == 7);
  CHECK(c.booster.seed == 7);
  CHECK(c.datasets.at(0).name == "toy");

  try {
    config_from_json(R"({"dataset":{"path":")" + path + R"("},"booster":{"n_round":5}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("booster.n_round") != std::string::npos);
  }
  CHECK_THROWS_AS(config_from_json(R"({"dataset":{"path":")" + path + R"("},"booster":{"learning_rate":2}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"dataset":{"path":")" + path + R"("},"loss":{"kind":"CE","w":3}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"dataset":{"path":"/nonexistent/x.csv"}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"dataset":{"path":")" + path +
                                   R"(","task":"multilabel","label_prefix":"label"},"loss":{"kind":"CBCE"}})"),
                  CapabilityError);
}

TEST_CASE("config merging and overrides") {
  const fs::path dir = toy("cli-merge");
  write(dir / "a.json", R"({"loss":{"kind":"WCE","w":2},"tuner":{"n_trials":3}})");
  const RunConfig c = load_config({(dir / "cfg.json").string(), (dir / "a.json").string()},
                                  {{"loss.w", "5"}, {"booster.learning_rate", "0.25"}, {"tuner.profile", "sketch"}});
  CHECK(c.loss_kind == LossKind::WCE);
  CHECK(c.loss_params.w == 5.0);
  CHECK(c.booster.learning_rate == 0.25);
  CHECK(c.booster.n_rounds == 40);
  CHECK(c.n_trials == 3);
  CHECK(c.profile == Profile::Sketch);
  const RunConfig d = load_config({(dir / "cfg.json").string(), (dir / "a.json").string()}, {{"loss.w", "null"}});
  CHECK_FALSE(d.loss_params.w.has_value());
  CHECK_THROWS_AS(load_config({(dir / "missing.json").string()}, {}), ConfigError);
  write(dir / "broken.json", "{\"loss\":");
  CHECK_THROWS_AS(load_config({(dir / "broken.json").string()}, {}), ConfigError);
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(ConfigError("x")) == 2);
  CHECK(exit_code_for(ParamError("x")) == 2);
  CHECK(exit_code_for(CapabilityError("x")) == 2);
  CHECK(exit_code_for(LoadError("x")) == 1);
  CHECK(exit_code_for(std::runtime_error("x")) == 1);
}

TEST_CASE("train then predict") {
  const fs::path dir = toy("cli-train");
  std::ostringstream log;
  const RunConfig cfg = load_config({(dir / "cfg.json").string()}, {{"loss.kind", "WCE"}});
  cmd_train(cfg, log);
  const std::string model = read_file((dir / "out" / "model.json").string());
  const auto metrics = nlohmann::json::parse(read_file((dir / "out" / "metrics.json").string()));
  CHECK(metrics["loss"] == "WCE");
  CHECK(metrics["valid_loss"].size() == metrics["rounds_trained"].get<std::size_t>() + 1);
  CHECK(metrics["best_iteration"].get<int>() <= metrics["rounds_trained"].get<int>());

  cmd_train(cfg, log);
  CHECK(read_file((dir / "out" / "model.json").string()) == model);

  cmd_predict((dir / "out" / "model.json").string(), (dir / "toy.csv").string(), (dir / "pred.csv").string(), "csv", log);
  const CsvTable t = parse_csv_table(read_file((dir / "pred.csv").string()));
  CHECK(t.header == std::vector<std::string>{"id", "p_0", "p_1"});
  CHECK(t.rows.size() == 240);
  const Ensemble e = Ensemble::load((dir / "out" / "model.json").string());
  const Dataset d = load_csv((dir / "toy.csv").string(), {{"label"}, {}, {}}, TaskKind::Binary);
  const Matrix p = e.predict_proba(d.x);
  for (std::size_t r = 0; r < 240; r += 37) {
    CHECK(std::stod(t.rows[r][2]) == p(r, 0));
    CHECK(std::abs(std::stod(t.rows[r][1]) + std::stod(t.rows[r][2]) - 1.0) < 1e-15);
  }
}

TEST_CASE("sweep: rows, resume and summary format") {
  const fs::path dir = toy("cli-sweep");
  std::ostringstream log;
  const std::vector<Override> ov = {{"profiles", R"(["leaf-wise"])"}, {"losses", R"(["CE","WCE"])"},
                                    {"tuner.n_trials", "2"}, {"booster.n_rounds", "30"}};
  const RunConfig cfg = load_config({(dir / "cfg.json").string()}, ov);
  cmd_sweep(cfg, log);
  const std::string summary = read_file((dir / "out" / "summary.csv").string());
  const CsvTable t = parse_csv_table(summary);
  CHECK(t.header.size() == 7);
  CHECK(summary.rfind(std::string(kSummaryHeader) + "\n", 0) == 0);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][2] == "CE");
  CHECK(t.rows[1][2] == "WCE");
  for (const auto& row : t.rows) {
    CHECK(row[6] == "ok");
    CHECK(fs::exists(dir / "out" / row[5]));
    const fs::path cell = (dir / "out" / row[5]).parent_path();
    CHECK(fs::exists(cell / "trials.jsonl"));
    CHECK(fs::exists(cell / "log.txt"));
    const std::string trials = read_file((cell / "trials.jsonl").string());
    CHECK(std::count(trials.begin(), trials.end(), '\n') == 2);
  }

  std::ostringstream again;
  cmd_sweep(cfg, again);
  CHECK(again.str().find("reused") != std::string::npos);
  CHECK(read_file((dir / "out" / "summary.csv").string()) == summary);
}

TEST_CASE("sweep: a failing dataset is marked and the sweep continues") {
  const fs::path dir = toy("cli-sweep-fail");
  // Class 2 has a single row: stratified folds cannot be built.
  write(dir / "bad.csv", "x,label\n1,0\n2,0\n3,0\n4,0\n5,0\n6,1\n7,1\n8,1\n9,1\n10,1\n11,2\n");
  nlohmann::json cfg = {{"datasets", {{{"path", (dir / "bad.csv").string()}, {"task", "multiclass"}},
                                      {{"path", (dir / "toy.csv").string()}, {"task", "binary"}}}},
                        {"profiles", {"sketch"}}, {"losses", {"CE"}}, {"tuner", {{"n_trials", 1}}},
                        {"booster", {{"n_rounds", 10}}}, {"output", (dir / "out").string()}};
  write(dir / "sweep.json", cfg.dump());
  std::ostringstream log;
  cmd_sweep(load_config({(dir / "sweep.json").string()}, {}), log);
  const CsvTable t = parse_csv_table(read_file((dir / "out" / "summary.csv").string()));
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][6] == "failed");
  CHECK(t.rows[1][6] == "ok");
}

TEST_CASE("report on the binary results table") {
  const fs::path dir = synth::temp_dir("cli-report");
  std::ostringstream log;
  cmd_report({std::string(CBGBDT_TEST_DATA) + "/binary_results_summary.csv"}, dir.string(), log);
  const CsvTable imp = parse_csv_table(read_file((dir / "improvement.csv").string()));
  const CsvTable del = parse_csv_table(read_file((dir / "deltas.csv").string()));
  CHECK(del.header == std::vector<std::string>{"dataset", "delta"});
  REQUIRE(imp.rows.size() == 15);
  std::map<std::string, std::string> delta;
  for (const auto& r : del.rows) delta[r[0]] = r[1];
  CHECK(delta["arrhythmia"] == "28.91");
  CHECK(delta["us_crime"] == "-0.43");
  CHECK(delta["sick_euthyroid"] == "-0.45");
  for (const auto& r : imp.rows) {
    CHECK(r[3] == delta[r[0]]);
    // Emitted delta equals CMP - BMP recomputed from the emitted columns.
    CHECK(std::abs(std::stod(r[2]) - std::stod(r[1]) - std::stod(r[3])) < 0.0100001);
  }
  CHECK(parse_csv_table(read_file((dir / "cells.csv").string())).rows.size() == 270);
}

TEST_CASE("report errors and the identity case") {
  const fs::path dir = synth::temp_dir("cli-report-err");
  std::ostringstream log;
  write(dir / "ce.csv", std::string(kSummaryHeader) + "\nd,leaf-wise,CE,50,1,,ok\nd,sketch,CE,55,1,,ok\n");
  try {
    cmd_report({(dir / "ce.csv").string()}, dir.string(), log);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("no class-balanced cells") != std::string::npos);
  }
  write(dir / "one.csv", std::string(kSummaryHeader) + "\nd,leaf-wise,CE,55,1,,ok\nd,sketch,WCE,55,0,,ok\nd,sketch,FL,,,,failed\n");
  cmd_report({(dir / "one.csv").string()}, dir.string(), log);
  CHECK(read_file((dir / "deltas.csv").string()) == "dataset,delta\nd,0.00\n");
  write(dir / "junk.csv", "a,b\n1,2\n");
  CHECK_THROWS_AS(cmd_report({(dir / "junk.csv").string()}, dir.string(), log), LoadError);
}

TEST_CASE("gencheck") {
  std::ostringstream ok_log;
  CHECK(cmd_gencheck({100, 1, 1.0}, ok_log) == 0);
  const std::string text = ok_log.str();
  CHECK(text.find("reduction identities (6 checks)") != std::string::npos);
  std::ostringstream bad_log;
  CHECK(cmd_gencheck({100, 1, 1.05}, bad_log) == 1);
  CHECK(bad_log.str().find("WCE: FAIL") != std::string::npos);
  CHECK(bad_log.str().find("CE: FAIL") == bad_log.str().find("WCE: FAIL") + 1);
}

TEST_CASE("binary: exit codes") {
  const fs::path dir = toy("cli-binary");
  const std::string cfg = " --config " + (dir / "cfg.json").string();
  std::string out;
  CHECK(run("train" + cfg + " --booster.n_rounds 5", &out) == 0);
  CHECK(fs::exists(dir / "out" / "model.json"));
  CHECK(run("train" + cfg + " --booster.n_round 5", &out) == 2);
  CHECK(out.find("booster.n_round") != std::string::npos);
  CHECK(run("train" + cfg + " --loss.kind CBCE --dataset.task multilabel --dataset.label_prefix label", &out) == 2);
  CHECK(out.find("capability") != std::string::npos);
  CHECK(run("", &out) == 2);
  CHECK(run("frobnicate", &out) == 2);
  CHECK(run("predict --model " + (dir / "out" / "model.json").string() + " --data " + (dir / "toy.csv").string() +
            " --output " + (dir / "p.csv").string()) == 0);
  write(dir / "corrupt.json", "{\"format_version\": 1,");
  CHECK(run("predict --model " + (dir / "corrupt.json").string() + " --data " + (dir / "toy.csv").string() +
            " --output " + (dir / "p.csv").string()) == 1);
  CHECK(run("gencheck --draws 50") == 0);
  CHECK(run("gencheck --draws 50 --fault-wce-grad 1.1", &out) == 1);
  CHECK(out.find("WCE: FAIL") != std::string::npos);
  CHECK(run("--seed 3 --out " + (dir / "o2").string() + " train" + cfg) == 0);
  CHECK(fs::exists(dir / "o2" / "model.json"));
}
