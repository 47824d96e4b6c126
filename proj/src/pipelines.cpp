#include "csvqa/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>

#include "csvqa/ops.hpp"
#include "csvqa/parallel.hpp"
#include "csvqa/rng.hpp"

namespace csvqa {

namespace {
// Measurement values from row-orthonormal Phi over [0,1] blocks reach a few
// units; this keeps encoder activations O(1).
constexpr float kMeasurementScale = 0.25f;
constexpr int kEvalChunk = 256;
}  // namespace

std::string to_string(PipelineKind kind) {
  switch (kind) {
    case PipelineKind::oracle: return "oracle";
    case PipelineKind::recon_classical: return "recon-classical";
    case PipelineKind::recon_learned: return "recon-learned";
    case PipelineKind::compressed_direct: return "compressed-direct";
  }
  return "?";
}

PipelineKind pipeline_kind_from_string(const std::string& s) {
  for (PipelineKind k : kAllPipelines)
    if (to_string(k) == s) return k;
  throw_error(Error::Kind::invalid_argument,
              "unknown pipeline '" + s +
                  "' (valid: oracle, recon-classical, recon-learned, compressed-direct)");
}

namespace {

std::uint64_t param_seed(std::uint64_t base, const std::string& name) {
  return Rng(base).split("net-init").split(name).key();
}

void add_dense(ParamMap& params, const std::string& name, int in, int out, InitScheme scheme,
               std::uint64_t base_seed) {
  params[name + "/w"] = init_params({in, out}, scheme, param_seed(base_seed, name + "/w"));
  params[name + "/b"] = Tensor::zeros({out}, true);
}

void add_conv(ParamMap& params, const std::string& name, int c_out, int c_in, int k,
              InitScheme scheme, std::uint64_t base_seed) {
  params[name + "/w"] = init_params({c_out, c_in, k, k}, scheme, param_seed(base_seed, name + "/w"));
  params[name + "/b"] = Tensor::zeros({c_out}, true);
}

Tensor dense(const ParamMap& params, const std::string& name, const Tensor& x) {
  return add_row_bias(matmul(x, params.at(name + "/w")), params.at(name + "/b"));
}

int conv_out_dim(int size) { return (size - 1) / 2 + 1; }  // kernel 3, stride 2, pad 1

}  // namespace

long VqaModel::param_count() const {
  long total = 0;
  for (const auto& [name, t] : params) total += static_cast<long>(t.size());
  return total;
}

long ReconNetModel::param_count() const {
  long total = 0;
  for (const auto& [name, t] : params) total += static_cast<long>(t.size());
  return total;
}

VqaModel build_vqa_net(const VqaNetConfig& cfg, const InputGeometry& geometry) {
  require(!cfg.question_widths.empty(), Error::Kind::invalid_argument,
          "vqa config: question encoder needs at least one width");
  VqaModel model;
  model.cfg = cfg;
  model.geometry = geometry;

  int image_feat = 0;
  if (geometry.mode == InputMode::image) {
    require(!cfg.conv_channels.empty(), Error::Kind::invalid_argument,
            "vqa config: image encoder needs at least one conv layer");
    int c = geometry.channels, h = geometry.height, w = geometry.width;
    for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
      add_conv(model.params, "vqa/conv" + std::to_string(i), cfg.conv_channels[i], c, 3,
               InitScheme::he_uniform, cfg.seed);
      c = cfg.conv_channels[i];
      h = conv_out_dim(h);
      w = conv_out_dim(w);
    }
    image_feat = c * h * w;
  } else {
    require(!cfg.compressed_widths.empty(), Error::Kind::invalid_argument,
            "vqa config: measurement encoder needs at least one width");
    require(geometry.flat_width > 0, Error::Kind::invalid_dimensions,
            "vqa config: measurement-map input width must be positive");
    int in = geometry.flat_width;
    for (std::size_t i = 0; i < cfg.compressed_widths.size(); ++i) {
      add_dense(model.params, "vqa/enc" + std::to_string(i), in, cfg.compressed_widths[i],
                InitScheme::he_uniform, cfg.seed);
      in = cfg.compressed_widths[i];
    }
    image_feat = in;
  }

  int qw = kQuestionLength;
  for (std::size_t i = 0; i < cfg.question_widths.size(); ++i) {
    add_dense(model.params, "vqa/q" + std::to_string(i), qw, cfg.question_widths[i],
              InitScheme::he_uniform, cfg.seed);
    qw = cfg.question_widths[i];
  }

  int fused = 0;
  if (cfg.fusion == FusionKind::concat) {
    fused = image_feat + qw;
  } else {
    add_dense(model.params, "vqa/fuse", image_feat, qw, InitScheme::he_uniform, cfg.seed);
    fused = qw;
  }

  int in = fused;
  for (std::size_t i = 0; i < cfg.head_widths.size(); ++i) {
    add_dense(model.params, "vqa/head" + std::to_string(i), in, cfg.head_widths[i],
              InitScheme::he_uniform, cfg.seed);
    in = cfg.head_widths[i];
  }
  add_dense(model.params, "vqa/out", in, kAnswerClasses, InitScheme::xavier_uniform, cfg.seed);
  return model;
}

Tensor vqa_forward(const VqaModel& model, const Tensor& input, const Tensor& questions) {
  const auto& cfg = model.cfg;
  const auto& params = model.params;

  Tensor image_feat;
  if (model.geometry.mode == InputMode::image) {
    require(input.rank() == 4, Error::Kind::invalid_dimensions,
            "vqa_forward: image input must be [N,C,H,W]");
    Tensor h = add_scalar(input, -0.5);  // center away from the white background
    for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
      const std::string name = "vqa/conv" + std::to_string(i);
      h = relu(add_channel_bias(conv2d(h, params.at(name + "/w"), 2, 1), params.at(name + "/b")));
    }
    const auto& s = h.shape();
    image_feat = reshape(h, {s[0], s[1] * s[2] * s[3]});
  } else {
    require(input.rank() == 2 && input.dim(1) == model.geometry.flat_width,
            Error::Kind::invalid_dimensions, "vqa_forward: bad measurement input width");
    Tensor h = input;
    for (std::size_t i = 0; i < cfg.compressed_widths.size(); ++i)
      h = relu(dense(params, "vqa/enc" + std::to_string(i), h));
    image_feat = h;
  }

  Tensor q = questions;
  for (std::size_t i = 0; i < cfg.question_widths.size(); ++i)
    q = relu(dense(params, "vqa/q" + std::to_string(i), q));

  Tensor fused;
  if (cfg.fusion == FusionKind::concat) {
    fused = concat(image_feat, q, 1);
  } else {
    fused = mul(dense(params, "vqa/fuse", image_feat), q);
  }

  Tensor h = fused;
  for (std::size_t i = 0; i < cfg.head_widths.size(); ++i)
    h = relu(dense(params, "vqa/head" + std::to_string(i), h));
  return dense(params, "vqa/out", h);
}

ReconNetModel build_reconnet(const ReconNetConfig& cfg, int m, const BlockSpec& spec) {
  spec.validate();
  require(m >= 1 && m <= spec.pixels_per_block(), Error::Kind::invalid_dimensions,
          "build_reconnet: need 1 <= m <= block pixel count");
  require(cfg.conv_hidden_channels >= 1, Error::Kind::invalid_argument,
          "build_reconnet: conv_hidden_channels must be >= 1");
  ReconNetModel model;
  model.cfg = cfg;
  model.spec = spec;
  model.m = m;
  const int n = spec.pixels_per_block();
  add_dense(model.params, "reconnet/dense", m, n, InitScheme::he_uniform, cfg.seed);
  add_conv(model.params, "reconnet/conv1", cfg.conv_hidden_channels, spec.channels, 3,
           InitScheme::he_uniform, cfg.seed);
  add_conv(model.params, "reconnet/conv2", spec.channels, cfg.conv_hidden_channels, 3,
           InitScheme::xavier_uniform, cfg.seed);
  return model;
}

Tensor reconnet_forward_batch(const ReconNetModel& model, const Tensor& measurements) {
  const auto& spec = model.spec;
  const int nblocks = spec.blocks_total();
  require(measurements.rank() == 3 && measurements.dim(1) == nblocks &&
              measurements.dim(2) == model.m,
          Error::Kind::invalid_dimensions,
          "reconnet_forward: expected [N," + std::to_string(nblocks) + "," +
              std::to_string(model.m) + "], got " + shape_to_string(measurements.shape()));
  const int batch = measurements.dim(0);
  const int n = spec.pixels_per_block();

  Tensor flat = reshape(measurements, {batch * nblocks, model.m});
  Tensor blocks = dense(model.params, "reconnet/dense", flat);
  Tensor proxy = assemble_blocks(reshape(blocks, {batch, nblocks, n}), spec.channels,
                                 spec.block_rows(), spec.block_cols(), spec.block_size);
  Tensor h = relu(add_channel_bias(conv2d(proxy, model.params.at("reconnet/conv1/w"), 1, 1),
                                   model.params.at("reconnet/conv1/b")));
  return sigmoid(add_channel_bias(conv2d(h, model.params.at("reconnet/conv2/w"), 1, 1),
                                  model.params.at("reconnet/conv2/b")));
}

Tensor measurements_to_tensor(std::span<const MeasurementSet> sets) {
  require(!sets.empty(), Error::Kind::invalid_argument, "measurements_to_tensor: empty span");
  const int nblocks = sets[0].vector_count();
  const int m = sets[0].m;
  std::vector<float> data;
  data.reserve(sets.size() * static_cast<std::size_t>(nblocks) * m);
  for (const auto& ms : sets) {
    require(ms.vector_count() == nblocks && ms.m == m, Error::Kind::invalid_dimensions,
            "measurements_to_tensor: inconsistent measurement sets");
    for (double v : ms.values) data.push_back(static_cast<float>(v) * kMeasurementScale);
  }
  return Tensor::from_data({static_cast<int>(sets.size()), nblocks, m}, std::move(data));
}

std::vector<float> measurement_encoding_row(const MeasurementSet& ms, MeasurementLayout layout) {
  const int gr = ms.block_grid_rows, gc = ms.block_grid_cols, m = ms.m, ch = ms.channels;
  std::vector<float> row(static_cast<std::size_t>(gr) * gc * m * ch);
  if (layout == MeasurementLayout::flat) {
    for (std::size_t i = 0; i < ms.values.size(); ++i)
      row[i] = static_cast<float>(ms.values[i]) * kMeasurementScale;
    return row;
  }
  // map layout: m measurement channels at block-grid resolution per image
  // channel, image channels concatenated.
  for (int c = 0; c < ch; ++c)
    for (int by = 0; by < gr; ++by)
      for (int bx = 0; bx < gc; ++bx) {
        const auto y = ms.vec(c, by, bx);
        for (int j = 0; j < m; ++j)
          row[((static_cast<std::size_t>(c) * m + j) * gr + by) * gc + bx] =
              static_cast<float>(y[j]) * kMeasurementScale;
      }
  return row;
}

Image reconnet_forward(const MeasurementSet& ms, const ReconNetModel& model) {
  NoGradGuard guard;
  Tensor out = reconnet_forward_batch(model, measurements_to_tensor({&ms, 1}));
  Image img(model.spec.channels, model.spec.image_height, model.spec.image_width);
  const auto d = out.data();
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = d[i];
  return img;
}

Tensor images_to_tensor(std::span<const Image> images) {
  require(!images.empty(), Error::Kind::invalid_argument, "images_to_tensor: empty span");
  const int c = images[0].channels, h = images[0].height, w = images[0].width;
  std::vector<float> data;
  data.reserve(images.size() * images[0].size());
  for (const auto& img : images) {
    require(img.channels == c && img.height == h && img.width == w,
            Error::Kind::invalid_dimensions, "images_to_tensor: inconsistent shapes");
    for (double v : img.data) data.push_back(static_cast<float>(v));
  }
  return Tensor::from_data({static_cast<int>(images.size()), c, h, w}, std::move(data));
}

Tensor questions_to_tensor(std::span<const QaItem> items) {
  std::vector<float> data;
  data.reserve(items.size() * kQuestionLength);
  for (const auto& item : items) {
    const auto enc = encode_question(item.question);
    data.insert(data.end(), enc.begin(), enc.end());
  }
  return Tensor::from_data({static_cast<int>(items.size()), kQuestionLength}, std::move(data));
}

ReconTrainResult train_reconnet(std::span<const Image> images, const MeasurementMatrix& phi,
                                const BlockSpec& spec, const ReconNetConfig& cfg, int epochs,
                                double lr, int batch_size) {
  require(!images.empty(), Error::Kind::invalid_argument, "train_reconnet: empty dataset");
  require(epochs >= 1 && batch_size >= 1, Error::Kind::invalid_argument,
          "train_reconnet: epochs and batch_size must be >= 1");

  ReconTrainResult result;
  result.model = build_reconnet(cfg, phi.rows, spec);
  const int n_items = static_cast<int>(images.size());
  const int nblocks = spec.blocks_total();
  const int m = phi.rows;

  // Frozen sensing: measure every image once up front.
  std::vector<float> meas_rows(static_cast<std::size_t>(n_items) * nblocks * m);
  std::vector<float> target_rows(static_cast<std::size_t>(n_items) * images[0].size());
  parallel_for(static_cast<std::size_t>(n_items), [&](std::size_t i) {
    const MeasurementSet ms = measure(images[i], spec, phi);
    float* dst = meas_rows.data() + i * static_cast<std::size_t>(nblocks) * m;
    for (std::size_t k = 0; k < ms.values.size(); ++k)
      dst[k] = static_cast<float>(ms.values[k]) * kMeasurementScale;
    for (std::size_t k = 0; k < images[i].size(); ++k)
      target_rows[i * images[i].size() + k] = static_cast<float>(images[i].data[k]);
  });

  OptimizerState optim;
  optim.kind = OptimKind::adam;
  optim.learning_rate = lr;
  const std::size_t meas_row = static_cast<std::size_t>(nblocks) * m;
  const std::size_t img_row = images[0].size();
  const Rng shuffle_root = Rng(cfg.seed).split("reconnet-shuffle");

  std::vector<int> order(static_cast<std::size_t>(n_items));
  for (int i = 0; i < n_items; ++i) order[static_cast<std::size_t>(i)] = i;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng rng = shuffle_root.split(static_cast<std::uint64_t>(epoch));
    for (int i = n_items - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)],
                order[rng.next_below(static_cast<std::uint64_t>(i) + 1)]);

    double loss_sum = 0.0;
    for (int start = 0; start < n_items; start += batch_size) {
      const int b = std::min(batch_size, n_items - start);
      std::vector<float> mbuf(static_cast<std::size_t>(b) * meas_row);
      std::vector<float> tbuf(static_cast<std::size_t>(b) * img_row);
      for (int i = 0; i < b; ++i) {
        const int idx = order[static_cast<std::size_t>(start + i)];
        std::memcpy(mbuf.data() + static_cast<std::size_t>(i) * meas_row,
                    meas_rows.data() + static_cast<std::size_t>(idx) * meas_row,
                    meas_row * sizeof(float));
        std::memcpy(tbuf.data() + static_cast<std::size_t>(i) * img_row,
                    target_rows.data() + static_cast<std::size_t>(idx) * img_row,
                    img_row * sizeof(float));
      }
      Tensor meas = Tensor::from_data({b, nblocks, m}, std::move(mbuf));
      Tensor target = Tensor::from_data(
          {b, spec.channels, spec.image_height, spec.image_width}, std::move(tbuf));
      Tensor out = reconnet_forward_batch(result.model, meas);
      Tensor diff = sub(out, target);
      Tensor loss = mean(mul(diff, diff));
      const double loss_value = loss.item();
      if (!std::isfinite(loss_value))
        throw_error(Error::Kind::divergence, "train_reconnet: non-finite loss at epoch " +
                                                 std::to_string(epoch + 1));
      zero_all_grads(result.model.params);
      backward(loss);
      adam_step(result.model.params, optim);
      loss_sum += loss_value * b;
    }
    result.epoch_loss.push_back(loss_sum / n_items);
  }
  return result;
}

namespace {

// Per-item flattened network inputs for one pipeline kind. Everything ahead
// of the VQA net is frozen, so inputs are computed once per dataset.
struct PipelineInputs {
  InputGeometry geometry;
  std::vector<float> rows;
  std::size_t row_size = 0;
  std::vector<double> item_psnr;  // empty when not applicable
};

InputGeometry geometry_for(PipelineKind kind, const BlockSpec& spec, int m,
                           MeasurementLayout /*layout*/) {
  if (kind == PipelineKind::compressed_direct)
    return InputGeometry::for_measurements(m * spec.block_rows() * spec.block_cols() *
                                           spec.channels);
  return InputGeometry::for_image(spec.channels, spec.image_height, spec.image_width);
}

PipelineInputs prepare_inputs(PipelineKind kind, std::span<const QaItem> items,
                              const MeasurementMatrix& phi, const BlockSpec& spec,
                              const SolverConfig& solver_cfg, ReconMethod classical_method,
                              const ReconNetModel* reconnet, MeasurementLayout layout) {
  PipelineInputs inputs;
  inputs.geometry = geometry_for(kind, spec, phi.rows, layout);
  inputs.row_size = inputs.geometry.row_size();
  inputs.rows.resize(items.size() * inputs.row_size);
  const bool with_psnr =
      kind == PipelineKind::recon_classical || kind == PipelineKind::recon_learned;
  if (with_psnr) inputs.item_psnr.assign(items.size(), 0.0);

  if (kind == PipelineKind::recon_learned) {
    require(reconnet != nullptr, Error::Kind::invalid_argument,
            "recon-learned pipeline requires a reconstruction net");
    require(reconnet->m == phi.rows, Error::Kind::invalid_dimensions,
            "reconstruction net was trained for a different measurement count");
  }

  switch (kind) {
    case PipelineKind::oracle: {
      for (std::size_t i = 0; i < items.size(); ++i)
        for (std::size_t k = 0; k < items[i].image.data.size(); ++k)
          inputs.rows[i * inputs.row_size + k] = static_cast<float>(items[i].image.data[k]);
      break;
    }
    case PipelineKind::recon_classical: {
      parallel_for(items.size(), [&](std::size_t i) {
        const MeasurementSet ms = measure(items[i].image, spec, phi);
        const Image recon = reconstruct_image(ms, phi, spec, classical_method, solver_cfg);
        for (std::size_t k = 0; k < recon.data.size(); ++k)
          inputs.rows[i * inputs.row_size + k] = static_cast<float>(recon.data[k]);
        inputs.item_psnr[i] = psnr(items[i].image, recon);
      });
      break;
    }
    case PipelineKind::recon_learned: {
      NoGradGuard guard;
      for (std::size_t start = 0; start < items.size(); start += kEvalChunk) {
        const std::size_t stop = std::min(items.size(), start + kEvalChunk);
        std::vector<MeasurementSet> sets;
        sets.reserve(stop - start);
        for (std::size_t i = start; i < stop; ++i)
          sets.push_back(measure(items[i].image, spec, phi));
        Tensor out = reconnet_forward_batch(*reconnet, measurements_to_tensor(sets));
        const auto d = out.data();
        for (std::size_t i = start; i < stop; ++i) {
          const float* src = d.data() + (i - start) * inputs.row_size;
          std::copy_n(src, inputs.row_size, inputs.rows.begin() + i * inputs.row_size);
          Image recon(spec.channels, spec.image_height, spec.image_width);
          for (std::size_t k = 0; k < inputs.row_size; ++k) recon.data[k] = src[k];
          inputs.item_psnr[i] = psnr(items[i].image, recon);
        }
      }
      break;
    }
    case PipelineKind::compressed_direct: {
      parallel_for(items.size(), [&](std::size_t i) {
        const MeasurementSet ms = measure(items[i].image, spec, phi);
        const auto row = measurement_encoding_row(ms, layout);
        std::copy(row.begin(), row.end(), inputs.rows.begin() + i * inputs.row_size);
      });
      break;
    }
  }
  return inputs;
}

Tensor batch_from_rows(const std::vector<float>& rows, std::size_t row_size,
                       const InputGeometry& geometry, std::span<const int> indices) {
  std::vector<float> buf(indices.size() * row_size);
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::memcpy(buf.data() + i * row_size,
                rows.data() + static_cast<std::size_t>(indices[i]) * row_size,
                row_size * sizeof(float));
  const int b = static_cast<int>(indices.size());
  if (geometry.mode == InputMode::image)
    return Tensor::from_data({b, geometry.channels, geometry.height, geometry.width},
                             std::move(buf));
  return Tensor::from_data({b, geometry.flat_width}, std::move(buf));
}

Tensor question_batch(const std::vector<float>& qrows, std::span<const int> indices) {
  std::vector<float> buf(indices.size() * kQuestionLength);
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::memcpy(buf.data() + i * kQuestionLength,
                qrows.data() + static_cast<std::size_t>(indices[i]) * kQuestionLength,
                kQuestionLength * sizeof(float));
  return Tensor::from_data({static_cast<int>(indices.size()), kQuestionLength}, std::move(buf));
}

struct AccuracyCounts {
  int correct = 0, total = 0;
  int correct_by_kind[3] = {0, 0, 0};
  int total_by_kind[3] = {0, 0, 0};
};

EvalMetrics finish_metrics(const AccuracyCounts& acc, std::vector<int> predictions,
                           const std::vector<double>& item_psnr) {
  EvalMetrics m;
  m.n_total = acc.total;
  m.acc_overall = acc.total ? static_cast<double>(acc.correct) / acc.total : 0.0;
  m.n_existence = acc.total_by_kind[0];
  m.n_count = acc.total_by_kind[1];
  m.n_relation = acc.total_by_kind[2];
  m.acc_existence = m.n_existence ? static_cast<double>(acc.correct_by_kind[0]) / m.n_existence : 0.0;
  m.acc_count = m.n_count ? static_cast<double>(acc.correct_by_kind[1]) / m.n_count : 0.0;
  m.acc_relation = m.n_relation ? static_cast<double>(acc.correct_by_kind[2]) / m.n_relation : 0.0;
  if (item_psnr.empty()) {
    m.psnr_mean = std::numeric_limits<double>::quiet_NaN();
  } else {
    double sum = 0.0;
    for (double v : item_psnr) sum += v;
    m.psnr_mean = sum / static_cast<double>(item_psnr.size());
  }
  m.predictions = std::move(predictions);
  return m;
}

EvalMetrics eval_on_inputs(const VqaModel& model, const PipelineInputs& inputs,
                           const std::vector<float>& qrows, std::span<const QaItem> items) {
  NoGradGuard guard;
  AccuracyCounts acc;
  std::vector<int> predictions(items.size(), -1);
  std::vector<int> idx;
  for (std::size_t start = 0; start < items.size(); start += kEvalChunk) {
    const std::size_t stop = std::min(items.size(), start + kEvalChunk);
    idx.resize(stop - start);
    for (std::size_t i = start; i < stop; ++i) idx[i - start] = static_cast<int>(i);
    Tensor in = batch_from_rows(inputs.rows, inputs.row_size, inputs.geometry, idx);
    Tensor q = question_batch(qrows, idx);
    Tensor logits = vqa_forward(model, in, q);
    const auto d = logits.data();
    for (std::size_t i = start; i < stop; ++i) {
      const float* row = d.data() + (i - start) * kAnswerClasses;
      int best = 0;
      for (int j = 1; j < kAnswerClasses; ++j)
        if (row[j] > row[best]) best = j;
      predictions[i] = best;
      const int kind_idx = static_cast<int>(items[i].question.kind);
      const bool hit = best == items[i].answer;
      ++acc.total;
      ++acc.total_by_kind[kind_idx];
      if (hit) {
        ++acc.correct;
        ++acc.correct_by_kind[kind_idx];
      }
    }
  }
  return finish_metrics(acc, std::move(predictions), inputs.item_psnr);
}

std::vector<float> question_rows(std::span<const QaItem> items) {
  std::vector<float> rows(items.size() * kQuestionLength);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto enc = encode_question(items[i].question);
    std::copy(enc.begin(), enc.end(), rows.begin() + i * kQuestionLength);
  }
  return rows;
}

}  // namespace

std::array<float, kAnswerClasses> run_pipeline(PipelineKind kind, const QaItem& item,
                                               const MeasurementMatrix& phi, const BlockSpec& spec,
                                               const PipelineModels& models,
                                               const SolverConfig& solver_cfg) {
  require(models.vqa.has_value(), Error::Kind::invalid_argument,
          "run_pipeline: pipeline requires a VQA model");
  if (kind == PipelineKind::recon_learned)
    require(models.reconnet.has_value(), Error::Kind::invalid_argument,
            "run_pipeline: recon-learned requires a reconstruction net");

  const QaItem* single = &item;
  PipelineInputs inputs = prepare_inputs(
      kind, std::span<const QaItem>(single, 1), phi, spec, solver_cfg, models.classical_method,
      models.reconnet ? &*models.reconnet : nullptr, models.vqa->cfg.measurement_layout);
  require(inputs.row_size == models.vqa->geometry.row_size() &&
              inputs.geometry.mode == models.vqa->geometry.mode,
          Error::Kind::incompatible_checkpoint,
          "run_pipeline: model input geometry does not match this pipeline/rate");

  NoGradGuard guard;
  const int indices[1] = {0};
  Tensor in = batch_from_rows(inputs.rows, inputs.row_size, inputs.geometry, indices);
  const auto enc = encode_question(item.question);
  Tensor q = Tensor::from_data({1, kQuestionLength}, std::vector<float>(enc.begin(), enc.end()));
  Tensor logits = vqa_forward(*models.vqa, in, q);
  const auto probs = softmax_rows(logits);
  std::array<float, kAnswerClasses> out{};
  std::copy_n(probs.begin(), kAnswerClasses, out.begin());
  return out;
}

PipelineTrainResult train_pipeline(PipelineKind kind, const Dataset& train_ds,
                                   const Dataset& eval_ds, const VqaNetConfig& net_cfg,
                                   const TrainOptions& opts, const MeasurementMatrix& phi,
                                   const BlockSpec& spec, const SolverConfig& solver_cfg,
                                   ReconMethod classical_method,
                                   const ReconNetModel* frozen_reconnet,
                                   const std::function<void(const EpochMetrics&)>& on_epoch) {
  require(!train_ds.items.empty() && !eval_ds.items.empty(), Error::Kind::invalid_argument,
          "train_pipeline: datasets must be nonempty");
  require(opts.epochs >= 1 && opts.batch_size >= 1, Error::Kind::invalid_argument,
          "train_pipeline: epochs and batch_size must be >= 1");
  if (kind == PipelineKind::recon_learned)
    require(frozen_reconnet != nullptr, Error::Kind::invalid_argument,
            "train_pipeline: recon-learned needs a frozen reconstruction net");

  VqaNetConfig cfg = net_cfg;
  cfg.seed = opts.seed;
  PipelineTrainResult result;

  const PipelineInputs train_in = prepare_inputs(kind, train_ds.items, phi, spec, solver_cfg,
                                                 classical_method, frozen_reconnet,
                                                 cfg.measurement_layout);
  const PipelineInputs eval_in = prepare_inputs(kind, eval_ds.items, phi, spec, solver_cfg,
                                                classical_method, frozen_reconnet,
                                                cfg.measurement_layout);
  result.model = build_vqa_net(cfg, train_in.geometry);

  const std::vector<float> train_q = question_rows(train_ds.items);
  const std::vector<float> eval_q = question_rows(eval_ds.items);
  std::vector<int> labels(train_ds.items.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = train_ds.items[i].answer;

  OptimizerState optim;
  optim.kind = OptimKind::adam;
  optim.learning_rate = opts.lr;
  const Rng shuffle_root = Rng(opts.seed).split("vqa-shuffle");
  const int n = static_cast<int>(train_ds.items.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    Rng rng = shuffle_root.split(static_cast<std::uint64_t>(epoch));
    for (int i = n - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)],
                order[rng.next_below(static_cast<std::uint64_t>(i) + 1)]);

    double loss_sum = 0.0;
    std::vector<int> batch_labels;
    for (int start = 0; start < n; start += opts.batch_size) {
      const int b = std::min(opts.batch_size, n - start);
      std::span<const int> batch_idx(order.data() + start, static_cast<std::size_t>(b));
      Tensor in = batch_from_rows(train_in.rows, train_in.row_size, train_in.geometry, batch_idx);
      Tensor q = question_batch(train_q, batch_idx);
      batch_labels.resize(static_cast<std::size_t>(b));
      for (int i = 0; i < b; ++i)
        batch_labels[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(batch_idx[i])];

      Tensor logits = vqa_forward(result.model, in, q);
      Tensor loss = softmax_cross_entropy(logits, batch_labels);
      const double loss_value = loss.item();
      if (!std::isfinite(loss_value))
        throw_error(Error::Kind::divergence, "train_pipeline: non-finite loss at epoch " +
                                                 std::to_string(epoch + 1));
      zero_all_grads(result.model.params);
      backward(loss);
      adam_step(result.model.params, optim);
      loss_sum += loss_value * b;
    }

    const EvalMetrics em = eval_on_inputs(result.model, eval_in, eval_q, eval_ds.items);
    EpochMetrics row;
    row.epoch = epoch + 1;
    row.train_loss = loss_sum / n;
    row.eval_accuracy = em.acc_overall;
    row.acc_existence = em.acc_existence;
    row.acc_count = em.acc_count;
    row.acc_relation = em.acc_relation;
    result.history.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return result;
}

EvalMetrics evaluate(const VqaModel& model, const Dataset& ds, PipelineKind kind,
                     const MeasurementMatrix& phi, const BlockSpec& spec,
                     const SolverConfig& solver_cfg, ReconMethod classical_method,
                     const ReconNetModel* reconnet) {
  require(!ds.items.empty(), Error::Kind::invalid_argument, "evaluate: empty dataset");
  const PipelineInputs inputs = prepare_inputs(kind, ds.items, phi, spec, solver_cfg,
                                               classical_method, reconnet,
                                               model.cfg.measurement_layout);
  require(inputs.geometry.mode == model.geometry.mode &&
              inputs.geometry.row_size() == model.geometry.row_size(),
          Error::Kind::incompatible_checkpoint,
          "evaluate: model input geometry does not match this pipeline/rate");
  return eval_on_inputs(model, inputs, question_rows(ds.items), ds.items);
}

namespace {

void load_params(ParamMap& target, const ParamMap& loaded, const std::string& what) {
  require(target.size() == loaded.size(), Error::Kind::incompatible_checkpoint,
          what + ": checkpoint holds " + std::to_string(loaded.size()) + " tensors, expected " +
              std::to_string(target.size()));
  for (auto& [name, tensor] : target) {
    const auto it = loaded.find(name);
    require(it != loaded.end(), Error::Kind::incompatible_checkpoint,
            what + ": checkpoint is missing tensor '" + name + "'");
    require(it->second.shape() == tensor.shape(), Error::Kind::incompatible_checkpoint,
            what + ": shape mismatch for '" + name + "' (" +
                shape_to_string(it->second.shape()) + " vs " + shape_to_string(tensor.shape()) +
                ")");
    Tensor replacement = it->second;
    replacement.set_requires_grad(true);
    tensor = replacement;
  }
}

}  // namespace

void load_into_model(VqaModel& model, const ParamMap& loaded) {
  load_params(model.params, loaded, "vqa checkpoint");
}

void load_into_model(ReconNetModel& model, const ParamMap& loaded) {
  load_params(model.params, loaded, "reconnet checkpoint");
}

}  // namespace csvqa
