#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csvqa/optim.hpp"
#include "csvqa/scenegen.hpp"
#include "csvqa/sensing.hpp"
#include "csvqa/sparse_recon.hpp"

namespace csvqa {

// The four inference pipelines: oracle consumes original images,
// recon-classical feeds solver reconstructions, recon-learned feeds the
// trained reconstruction net's output, compressed-direct answers straight
// from the measurement vectors.
enum class PipelineKind { oracle, recon_classical, recon_learned, compressed_direct };

std::string to_string(PipelineKind kind);
PipelineKind pipeline_kind_from_string(const std::string& s);
inline constexpr std::array<PipelineKind, 4> kAllPipelines = {
    PipelineKind::oracle, PipelineKind::recon_classical, PipelineKind::recon_learned,
    PipelineKind::compressed_direct};

enum class FusionKind { concat, elementwise_product };
enum class InputMode { image, measurement_map };
// Ordering of the flattened compressed input: `map` stacks each block's
// measurements as m channels at block-grid resolution, `flat` keeps the
// plain [channel][block][measurement] order.
enum class MeasurementLayout { map, flat };

struct VqaNetConfig {
  std::vector<int> conv_channels{16, 32};  // image encoder; kernel 3, stride 2, pad 1
  std::vector<int> question_widths{32, 32};
  FusionKind fusion = FusionKind::concat;
  std::vector<int> head_widths{64};  // hidden widths; the 10-way output is appended
  std::vector<int> compressed_widths{128, 64};
  MeasurementLayout measurement_layout = MeasurementLayout::map;
  std::uint64_t seed = 0;
};

struct ReconNetConfig {
  int conv_hidden_channels = 8;
  std::uint64_t seed = 0;
};

struct InputGeometry {
  InputMode mode = InputMode::image;
  int channels = 0;
  int height = 0;
  int width = 0;
  int flat_width = 0;  // measurement_map mode

  static InputGeometry for_image(int c, int h, int w) {
    return {InputMode::image, c, h, w, c * h * w};
  }
  static InputGeometry for_measurements(int flat) {
    return {InputMode::measurement_map, 0, 0, 0, flat};
  }
  std::size_t row_size() const { return static_cast<std::size_t>(flat_width); }
};

struct VqaModel {
  VqaNetConfig cfg;
  InputGeometry geometry;
  ParamMap params;
  long param_count() const;
};

// Parameters initialized per scheme and cfg.seed; identical seeds give
// bit-identical parameters.
VqaModel build_vqa_net(const VqaNetConfig& cfg, const InputGeometry& geometry);

// input: [N,C,H,W] (image mode, values in [0,1]) or [N,flat] (measurement
// mode, already scaled); questions: [N,24]. Returns logits [N,10].
Tensor vqa_forward(const VqaModel& model, const Tensor& input, const Tensor& questions);

struct ReconNetModel {
  ReconNetConfig cfg;
  BlockSpec spec;
  int m = 0;
  ParamMap params;
  long param_count() const;
};

ReconNetModel build_reconnet(const ReconNetConfig& cfg, int m, const BlockSpec& spec);

// measurements: [N, nblocks, m] (see measurements_to_tensor). Per-block dense
// proxy, block reassembly, two 3x3 stride-1 convs, sigmoid output in (0,1).
Tensor reconnet_forward_batch(const ReconNetModel& model, const Tensor& measurements);

// Single measurement set to image, no graph recording.
Image reconnet_forward(const MeasurementSet& ms, const ReconNetModel& model);

// ---- tensor packing helpers (fixed scaling conventions) ----

// Measurement values are multiplied by 1/4 when packed so typical
// activations stay O(1) for row-orthonormal Phi on [0,1] blocks.
Tensor measurements_to_tensor(std::span<const MeasurementSet> sets);
// Flattened compressed-direct input row per set, ordered per layout.
std::vector<float> measurement_encoding_row(const MeasurementSet& ms, MeasurementLayout layout);
Tensor images_to_tensor(std::span<const Image> images);
Tensor questions_to_tensor(std::span<const QaItem> items);

struct ReconTrainResult {
  ReconNetModel model;
  std::vector<double> epoch_loss;
};

// Minimizes MSE between reconnet output and the originals with adam;
// deterministic given cfg.seed. Throws on non-finite loss.
ReconTrainResult train_reconnet(std::span<const Image> images, const MeasurementMatrix& phi,
                                const BlockSpec& spec, const ReconNetConfig& cfg, int epochs,
                                double lr, int batch_size = 32);

struct PipelineModels {
  std::optional<VqaModel> vqa;
  std::optional<ReconNetModel> reconnet;
  ReconMethod classical_method = ReconMethod::fista;
};

// Answer distribution for one item (softmax over 10 classes).
std::array<float, kAnswerClasses> run_pipeline(PipelineKind kind, const QaItem& item,
                                               const MeasurementMatrix& phi, const BlockSpec& spec,
                                               const PipelineModels& models,
                                               const SolverConfig& solver_cfg);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double eval_accuracy = 0.0;
  double acc_existence = 0.0;
  double acc_count = 0.0;
  double acc_relation = 0.0;
};

struct TrainOptions {
  int epochs = 30;
  int batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

struct PipelineTrainResult {
  VqaModel model;
  std::vector<EpochMetrics> history;
};

// Cross-entropy training of the answer head for one pipeline kind. The cell
// seed replaces net_cfg.seed and drives both init and shuffling. For
// recon_learned a frozen reconstruction net must be supplied (two-stage
// training); its parameters are never touched. Pipeline inputs are
// precomputed once per dataset since every transform ahead of the VQA net is
// frozen.
PipelineTrainResult train_pipeline(PipelineKind kind, const Dataset& train_ds,
                                   const Dataset& eval_ds, const VqaNetConfig& net_cfg,
                                   const TrainOptions& opts, const MeasurementMatrix& phi,
                                   const BlockSpec& spec, const SolverConfig& solver_cfg,
                                   ReconMethod classical_method,
                                   const ReconNetModel* frozen_reconnet,
                                   const std::function<void(const EpochMetrics&)>& on_epoch = {});

struct EvalMetrics {
  double acc_overall = 0.0;
  double acc_existence = 0.0;
  double acc_count = 0.0;
  double acc_relation = 0.0;
  int n_total = 0;
  int n_existence = 0;
  int n_count = 0;
  int n_relation = 0;
  // Mean PSNR of the pipeline's input image against the original; NaN when
  // not applicable (oracle, compressed-direct), +inf for exact recovery.
  double psnr_mean = 0.0;
  std::vector<int> predictions;
};

// Pure: no parameter mutation, deterministic.
EvalMetrics evaluate(const VqaModel& model, const Dataset& ds, PipelineKind kind,
                     const MeasurementMatrix& phi, const BlockSpec& spec,
                     const SolverConfig& solver_cfg, ReconMethod classical_method,
                     const ReconNetModel* reconnet);

// Checkpoint loading with architecture verification (names and shapes must
// match the freshly built model exactly).
void load_into_model(VqaModel& model, const ParamMap& loaded);
void load_into_model(ReconNetModel& model, const ParamMap& loaded);

}  // namespace csvqa
