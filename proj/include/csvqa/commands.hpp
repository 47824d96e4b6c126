#pragma once

#include <cstdint>
#include <string>

#include "csvqa/config.hpp"

namespace csvqa {

// CLI subcommand bodies. All throw csvqa::Error on failure; the CLI maps
// validation errors to exit 1 and runtime/divergence errors to exit 2.
struct CommandContext {
  ExperimentConfig cfg;
  bool no_timing = false;  // write 0 in time columns (determinism checks)
};

// File layout inside cfg.output_dir.
std::string train_dataset_path(const ExperimentConfig& cfg);
std::string eval_dataset_path(const ExperimentConfig& cfg);
std::string checkpoint_path(const ExperimentConfig& cfg, PipelineKind kind, double rate,
                            std::uint64_t seed);
std::string reconnet_checkpoint_path(const ExperimentConfig& cfg, double rate);
std::string history_path(const ExperimentConfig& cfg, PipelineKind kind, double rate,
                         std::uint64_t seed);
std::string results_path(const ExperimentConfig& cfg);

void cmd_generate(const CommandContext& ctx);
void cmd_train(const CommandContext& ctx, const std::string& pipeline, double rate,
               std::uint64_t seed);
void cmd_eval(const CommandContext& ctx, const std::string& pipeline, double rate,
              std::uint64_t seed);
void cmd_recon_bench(const CommandContext& ctx);
void cmd_report(const CommandContext& ctx);

}  // namespace csvqa
