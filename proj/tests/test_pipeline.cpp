#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "masscade/case_io.hpp"
#include "masscade/config.hpp"
#include "masscade/error.hpp"
#include "masscade/eval.hpp"
#include "masscade/pipeline.hpp"
#include "masscade/superpixel.hpp"

using namespace masscade;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "masscade_test_pipeline";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct CliResult {
  int code;
  std::string err;
};

CliResult cli(const std::string& args) {
  const fs::path err = kRoot / "stderr.txt";
  const std::string cmd = std::string(MASSCADE_CLI) + " " + args + " >/dev/null 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return files;
}

PipelineConfig small_config() {
  PipelineConfig c = phantom_config();
  c.synth.n_cases = 20;
  c.synth.width = 192;
  c.synth.height = 192;
  c.synth.diameter_range_px = {12.0, 40.0};
  c.eval.k = 4;
  return c;
}

// Dataset and one reference run shared by the tests below.
struct Fixture {
  fs::path config, data, out;
  Fixture() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    config = kRoot / "config.json";
    std::ofstream(config) << to_json(small_config()).dump(2);
    data = kRoot / "data";
    out = kRoot / "run1";
    cmd_synth(small_config(), data, 1);
    StageContext ctx;
    ctx.config = small_config();
    ctx.data_dir = data;
    ctx.in_root = ctx.out_root = out;
    cmd_run(ctx);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_CASE("synth writes cases and a manifest, reproducibly") {
  fs::create_directories(kRoot);
  const fs::path a = kRoot / "synth_a", b = kRoot / "synth_b", z = kRoot / "synth_0";
  fs::remove_all(a);
  fs::remove_all(b);
  fs::remove_all(z);
  const auto cfg = kRoot / "synth.json";
  PipelineConfig c = small_config();
  c.synth.n_cases = 5;
  std::ofstream(cfg) << to_json(c).dump();
  CHECK(cli("synth --config " + cfg.string() + " --seed 7 --out " + a.string()).code == 0);
  CHECK(cli("synth --config " + cfg.string() + " --seed 7 --out " + b.string()).code == 0);
  CHECK(list_cases(a).size() == 5);
  const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
  CHECK(manifest.at("cases").size() == 5);
  CHECK(tree(a) == tree(b));
  CHECK(cli("synth --config " + cfg.string() + " --n 0 --out " + z.string()).code == 0);
  CHECK(nlohmann::json::parse(slurp(z / "manifest.json")).at("cases").empty());
}

TEST_CASE("exit codes") {
  fs::create_directories(kRoot);
  CHECK(cli("").code == 1);
  CHECK(cli("run --bogus").code == 1);
  CHECK(cli("--print-default-config").code == 0);
  const auto bad = kRoot / "bad.json";
  std::ofstream(bad) << R"({"eval": {"k": 10, "unknown": 1}})";
  CHECK(cli("run --config " + bad.string() + " --data x --out y").code == 1);
  CHECK(cli("run --config " + (kRoot / "nope.json").string() + " --data x --out y").code == 2);
  CHECK(cli("run --data " + (kRoot / "no_such_dir").string() + " --out " + (kRoot / "o").string())
            .code == 2);
  CHECK(cli("train --in " + (kRoot / "empty_in").string() + " --out " + (kRoot / "o").string())
            .code == 2);
}

TEST_CASE("end-to-end run writes every stage") {
  const auto& f = fixture();
  for (const auto& s : stage_names()) CHECK(fs::is_directory(f.out / s));
  for (const auto& id : list_cases(f.data)) {
    for (int k = 1; k <= 4; ++k) {
      CHECK(fs::exists(f.out / "sift" / id / ("band_" + std::to_string(k) + ".png")));
    }
    CHECK(fs::exists(f.out / "heatmap" / (id + ".png")));
  }
  const auto curve = read_froc_csv(f.out / "froc" / "froc.csv");
  REQUIRE(!curve.empty());
  for (std::size_t i = 1; i < curve.size(); ++i) {
    CHECK(curve[i].threshold > curve[i - 1].threshold);
    CHECK(curve[i].tpr <= curve[i - 1].tpr);
    CHECK(curve[i].fpi <= curve[i - 1].fpi);
  }
}

TEST_CASE("stages run one by one reproduce the full run") {
  const auto& f = fixture();
  const fs::path staged = kRoot / "staged";
  fs::remove_all(staged);
  for (const auto& s : stage_names()) {
    CAPTURE(s);
    const auto r = cli(s + " --config " + f.config.string() + " --data " + f.data.string() +
                       " --out " + staged.string() + " --jobs 2");
    REQUIRE(r.code == 0);
  }
  CHECK(tree(staged) == tree(f.out));
}

TEST_CASE("job count does not change any output") {
  const auto& f = fixture();
  const fs::path par = kRoot / "jobs3";
  fs::remove_all(par);
  REQUIRE(cli("run --config " + f.config.string() + " --data " + f.data.string() + " --out " +
              par.string() + " --jobs 3")
              .code == 0);
  CHECK(tree(par) == tree(f.out));
}

TEST_CASE("a stage refuses artifacts from a different configuration") {
  const auto& f = fixture();
  PipelineConfig other = small_config();
  other.cascade.svm.C = 3.0;
  const auto cfg = kRoot / "other.json";
  std::ofstream(cfg) << to_json(other).dump();
  const auto r = cli("predict --config " + cfg.string() + " --in " + f.out.string() + " --out " +
                     (kRoot / "mismatch").string());
  CHECK(r.code != 0);
  CHECK(r.err.find("config") != std::string::npos);
}

TEST_CASE("a case without masses.json aborts and names the case") {
  const auto& f = fixture();
  const fs::path broken = kRoot / "broken";
  fs::remove_all(broken);
  fs::copy(f.data, broken, fs::copy_options::recursive);
  const std::string victim = list_cases(broken)[3];
  fs::remove(broken / victim / "masses.json");
  const auto r = cli("run --config " + f.config.string() + " --data " + broken.string() +
                     " --out " + (kRoot / "broken_out").string());
  CHECK(r.code == 2);
  CHECK(r.err.find(victim) != std::string::npos);
  CHECK(r.err.find("preprocess") != std::string::npos);
}

TEST_CASE("froc stage on hand-written predictions") {
  fs::create_directories(kRoot);
  const fs::path in = kRoot / "froc_in";
  fs::remove_all(in);
  // Two cases with one 10-pixel mass each on row 0.
  for (const char* id : {"A", "B"}) {
    MammogramCase c;
    c.case_id = id;
    c.image = GrayImage16(40, 4, 1000);
    c.breast_mask = BinaryMask(40, 4, true);
    c.masses.push_back(
        MassAnnotation::from_polygon("m", {{-0.5, -0.5}, {9.5, -0.5}, {9.5, 0.5}, {-0.5, 0.5}}, 40, 4));
    REQUIRE(c.masses[0].rasterized.count() == 10);
    save_case(c, in / "preprocess");
  }
  fs::create_directories(in / "predict");
  std::ofstream(in / "predict" / "predictions.jsonl")
      << R"({"case_id": "A", "probability": 0.9, "width": 40, "height": 4, "rle": [5, 10]})" << "\n"
      << R"({"case_id": "A", "probability": 0.6, "width": 40, "height": 4, "rle": [25, 10]})" << "\n"
      << R"({"case_id": "B", "probability": 0.4, "width": 40, "height": 4, "rle": [7, 10]})" << "\n";
  const fs::path out = kRoot / "froc_out";
  REQUIRE(cli("froc --in " + in.string() + " --out " + out.string()).code == 0);
  const auto curve = read_froc_csv(out / "froc" / "froc.csv");
  REQUIRE(curve.size() == 3);
  CHECK(curve[0] == FrocPoint{0.4, 1.0, 0.5});
  CHECK(curve[1] == FrocPoint{0.6, 0.5, 0.5});
  CHECK(curve[2] == FrocPoint{0.9, 0.5, 0.0});
}

TEST_CASE("parallel_for reports the first failing index") {
  for (int jobs : {1, 4}) {
    try {
      parallel_for(20, jobs, [](std::size_t i) {
        if (i == 7 || i == 13) throw DataError("item " + std::to_string(i));
      });
      FAIL("expected an error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()) == "item 7");
    }
  }
}
