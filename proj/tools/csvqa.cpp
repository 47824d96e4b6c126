// csvqa — experiment driver: dataset generation, pipeline training and
// evaluation, reconstruction benchmarking, report aggregation.

#include <CLI11.hpp>
#include <cstdio>

#include "csvqa/commands.hpp"

namespace {

int run(int argc, char** argv) {
  CLI::App app{"Compressed-sensing VQA experiment harness"};
  app.require_subcommand(1);
  app.footer("Config file format: `section.key = value` lines, `#` comments.\n"
             "Keys and defaults:\n" +
             csvqa::config_reference());

  std::string config_path;
  bool no_timing = false;
  app.add_flag("--no-timing", no_timing, "write 0 in all time columns");

  std::string pipeline;
  double rate = 0.0;
  std::uint64_t seed = 0;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config file")->required();
  };
  auto add_cell = [&](CLI::App* cmd) {
    add_config(cmd);
    cmd->add_option("--pipeline", pipeline,
                    "oracle | recon-classical | recon-learned | compressed-direct")
        ->required();
    cmd->add_option("--rate", rate, "measurement rate in (0,1]")->required();
    cmd->add_option("--seed", seed, "cell seed")->required();
  };

  CLI::App* generate = app.add_subcommand("generate", "write train/eval CSVQ dataset files");
  add_config(generate);
  CLI::App* train = app.add_subcommand("train", "train one (pipeline, rate, seed) cell");
  add_cell(train);
  CLI::App* eval = app.add_subcommand("eval", "evaluate a trained cell, append a results row");
  add_cell(eval);
  CLI::App* bench = app.add_subcommand("recon-bench", "PSNR table for fista/omp/reconnet");
  add_config(bench);
  CLI::App* report = app.add_subcommand("report", "aggregate results into summary + plot data");
  add_config(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    csvqa::CommandContext ctx{csvqa::parse_config(config_path), no_timing};
    if (generate->parsed()) csvqa::cmd_generate(ctx);
    if (train->parsed()) csvqa::cmd_train(ctx, pipeline, rate, seed);
    if (eval->parsed()) csvqa::cmd_eval(ctx, pipeline, rate, seed);
    if (bench->parsed()) csvqa::cmd_recon_bench(ctx);
    if (report->parsed()) csvqa::cmd_report(ctx);
  } catch (const csvqa::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.is_validation() ? 1 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
