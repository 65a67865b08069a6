// masscade: batch driver for the mass detection pipeline.
//
//   masscade synth --out data/ [--preset phantom] [--seed S] [--n N]
//   masscade run --config cfg.json --data data/ --out out/ [--jobs N]
//   masscade <stage> --config cfg.json [--data D] [--in I] --out out/
//   masscade --print-default-config [--preset phantom]
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 pipeline error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "masscade/config.hpp"
#include "masscade/error.hpp"
#include "masscade/pipeline.hpp"

namespace {

struct Options {
  std::string config_path;
  std::string preset = "default";
  std::string data, out, in;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  std::optional<int> n_cases;
};

masscade::PipelineConfig resolve_config(const Options& o) {
  masscade::PipelineConfig cfg;
  if (!o.config_path.empty()) {
    cfg = masscade::load_config(o.config_path);
  } else if (o.preset == "phantom") {
    cfg = masscade::phantom_config();
  } else {
    cfg = masscade::default_config();
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.n_cases) cfg.synth.n_cases = *o.n_cases;
  if (!o.data.empty()) cfg.data_dir = o.data;
  if (!o.out.empty()) cfg.out_dir = o.out;
  cfg.validate();
  return cfg;
}

masscade::StageContext context(const masscade::PipelineConfig& cfg, const Options& o) {
  if (cfg.out_dir.empty()) throw masscade::InvalidArgument("--out is required");
  masscade::StageContext ctx;
  ctx.config = cfg;
  ctx.data_dir = cfg.data_dir;
  ctx.out_root = cfg.out_dir;
  ctx.in_root = o.in.empty() ? ctx.out_root : std::filesystem::path(o.in);
  ctx.jobs = o.jobs;
  return ctx;
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_path, "JSON configuration file");
  cmd->add_option("--preset", o.preset, "Built-in configuration when --config is absent")
      ->check(CLI::IsMember({"default", "phantom"}));
  cmd->add_option("--data", o.data, "Dataset directory");
  cmd->add_option("--out", o.out, "Output root");
  cmd->add_option("--jobs", o.jobs, "Parallel cases")->check(CLI::Range(1, 256));
  cmd->add_option("--seed", o.seed, "Override the global seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mammographic mass detection: sifting, superpixels, cascaded SVMs"};
  app.require_subcommand(0, 1);
  Options o;
  bool print_default = false;
  app.add_flag("--print-default-config", print_default, "Print the configuration and exit");
  app.add_option("--preset", o.preset, "Preset for --print-default-config")
      ->check(CLI::IsMember({"default", "phantom"}));

  CLI::App* synth = app.add_subcommand("synth", "Write a phantom dataset");
  add_common(synth, o);
  synth->add_option("--n", o.n_cases, "Number of cases")->check(CLI::NonNegativeNumber);

  CLI::App* run = app.add_subcommand("run", "All stages end to end");
  add_common(run, o);

  std::vector<std::pair<std::string, CLI::App*>> stages;
  for (const auto& name : masscade::stage_names()) {
    CLI::App* cmd = app.add_subcommand(name, "Run the '" + name + "' stage only");
    add_common(cmd, o);
    cmd->add_option("--in", o.in, "Root holding the previous stages' outputs (default: --out)");
    stages.emplace_back(name, cmd);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (print_default) {
      std::cout << masscade::to_json(resolve_config(o)).dump(2) << '\n';
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cerr << app.help();
      return 1;
    }
    const masscade::PipelineConfig cfg = resolve_config(o);
    if (synth->parsed()) {
      if (cfg.out_dir.empty()) throw masscade::InvalidArgument("--out is required");
      masscade::cmd_synth(cfg, cfg.out_dir, o.jobs);
      return 0;
    }
    if (run->parsed()) {
      if (cfg.data_dir.empty()) throw masscade::InvalidArgument("--data is required");
      masscade::cmd_run(context(cfg, o));
      return 0;
    }
    for (const auto& [name, cmd] : stages) {
      if (!cmd->parsed()) continue;
      if (name == "preprocess" && cfg.data_dir.empty()) {
        throw masscade::InvalidArgument("--data is required");
      }
      masscade::run_stage(name, context(cfg, o));
      return 0;
    }
  } catch (const masscade::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const masscade::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "pipeline error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
