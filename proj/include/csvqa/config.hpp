#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csvqa/pipelines.hpp"
#include "csvqa/sensing.hpp"
#include "csvqa/sparse_recon.hpp"

namespace csvqa {

// Experiment configuration, populated from a plain-text file of
// `section.key = value` lines (`#` starts a comment, one dotted level only).
// Unknown keys are hard errors naming the key and line; dataset.seed is the
// only required key. Defaults below are the documented artifact defaults.
struct ExperimentConfig {
  // dataset.*
  int n_train = 5000;
  int n_eval = 1000;
  std::uint64_t dataset_seed = 0;  // required key dataset.seed
  int max_objects = 4;

  // experiment.*
  std::vector<double> rates{0.04, 0.10, 0.25, 1.0};
  std::vector<PipelineKind> pipelines{PipelineKind::oracle, PipelineKind::recon_classical,
                                      PipelineKind::recon_learned,
                                      PipelineKind::compressed_direct};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string output_dir = "out";

  // sensing.*
  int block_size = 16;
  MatrixKind matrix_kind = MatrixKind::gaussian;
  bool orthonormalize = true;
  std::uint64_t matrix_seed = 7;

  // train.*
  int epochs = 30;
  int batch_size = 32;
  double lr = 1e-3;

  // reconnet.*
  int reconnet_epochs = 10;
  double reconnet_lr = 1e-3;
  int reconnet_channels = 8;
  std::uint64_t reconnet_seed = 11;

  // recon.*
  ReconMethod recon_method = ReconMethod::fista;
  double recon_lambda = -1.0;  // < 0: scale-adaptive default
  int recon_max_iters = 400;
  double recon_tolerance = 1e-8;
  int omp_sparsity = 0;

  // vqa.*
  VqaNetConfig vqa;

  // bench.*
  int bench_images = 100;

  BlockSpec block_spec() const {
    BlockSpec spec;
    spec.image_height = kImageHeight;
    spec.image_width = kImageWidth;
    spec.channels = kImageChannels;
    spec.block_size = block_size;
    return spec;
  }

  SolverConfig solver_config() const {
    SolverConfig s;
    s.lambda = recon_lambda;
    s.max_iters = recon_max_iters;
    s.tolerance = recon_tolerance;
    s.omp_sparsity = omp_sparsity;
    return s;
  }
};

ExperimentConfig parse_config(const std::string& path);

// One line per key: "section.key = default  # meaning"; backs --help.
std::string config_reference();

}  // namespace csvqa
