#include "csvqa/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "csvqa/dataset_io.hpp"
#include "csvqa/report.hpp"
#include "csvqa/rng.hpp"

namespace csvqa {

namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string cell_tag(PipelineKind kind, double rate, std::uint64_t seed) {
  return to_string(kind) + "_r" + format_rate(rate) + "_s" + std::to_string(seed);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, Error::Kind::io, "cannot create directory: " + dir);
}

MeasurementMatrix matrix_for_rate(const ExperimentConfig& cfg, double rate) {
  const BlockSpec spec = cfg.block_spec();
  const int n = spec.pixels_per_block();
  const int m = measurements_for_rate(rate, n);
  return sample_matrix(cfg.matrix_kind, m, n, cfg.matrix_seed, cfg.orthonormalize);
}

Dataset load_dataset_or_fail(const std::string& path) {
  require(fs::exists(path), Error::Kind::invalid_argument,
          "dataset file missing: " + path + " (run `csvqa generate` first)");
  return read_dataset(path);
}

std::vector<Image> dataset_images(const Dataset& ds) {
  std::vector<Image> images;
  images.reserve(ds.items.size());
  for (const auto& item : ds.items) images.push_back(item.image);
  return images;
}

// Loads the per-rate reconstruction net, training and persisting it first if
// the checkpoint does not exist yet. Training draws only on config values,
// so the produced checkpoint is deterministic.
ReconNetModel ensure_reconnet(const ExperimentConfig& cfg, const MeasurementMatrix& phi) {
  const BlockSpec spec = cfg.block_spec();
  const double rate = measurement_rate(phi);
  const std::string path = reconnet_checkpoint_path(cfg, rate);
  ReconNetConfig rcfg;
  rcfg.conv_hidden_channels = cfg.reconnet_channels;
  rcfg.seed = cfg.reconnet_seed;
  if (fs::exists(path)) {
    ReconNetModel model = build_reconnet(rcfg, phi.rows, spec);
    load_into_model(model, load_checkpoint(path));
    return model;
  }
  std::printf("[reconnet] training rate %s model (%d epochs)\n", format_rate(rate).c_str(),
              cfg.reconnet_epochs);
  const Dataset train = load_dataset_or_fail(train_dataset_path(cfg));
  const auto images = dataset_images(train);
  ReconTrainResult result =
      train_reconnet(images, phi, spec, rcfg, cfg.reconnet_epochs, cfg.reconnet_lr, cfg.batch_size);
  ensure_dir(cfg.output_dir + "/ckpt");
  save_checkpoint(path, result.model.params);
  std::printf("[reconnet] rate %s final train mse %.6g -> %s\n", format_rate(rate).c_str(),
              result.epoch_loss.back(), path.c_str());
  return result.model;
}

}  // namespace

std::string train_dataset_path(const ExperimentConfig& cfg) { return cfg.output_dir + "/train.csvq"; }
std::string eval_dataset_path(const ExperimentConfig& cfg) { return cfg.output_dir + "/eval.csvq"; }

std::string checkpoint_path(const ExperimentConfig& cfg, PipelineKind kind, double rate,
                            std::uint64_t seed) {
  return cfg.output_dir + "/ckpt/" + cell_tag(kind, rate, seed) + ".ckpt";
}

std::string reconnet_checkpoint_path(const ExperimentConfig& cfg, double rate) {
  return cfg.output_dir + "/ckpt/reconnet_r" + format_rate(rate) + ".ckpt";
}

std::string history_path(const ExperimentConfig& cfg, PipelineKind kind, double rate,
                         std::uint64_t seed) {
  return cfg.output_dir + "/history/" + cell_tag(kind, rate, seed) + ".csv";
}

std::string results_path(const ExperimentConfig& cfg) { return cfg.output_dir + "/results.csv"; }

void cmd_generate(const CommandContext& ctx) {
  const auto& cfg = ctx.cfg;
  ensure_dir(cfg.output_dir);
  const Dataset train =
      build_dataset(cfg.n_train, cfg.dataset_seed, Split::train, cfg.max_objects);
  const Dataset eval = build_dataset(cfg.n_eval, cfg.dataset_seed, Split::eval, cfg.max_objects);
  write_dataset(train_dataset_path(cfg), train);
  write_dataset(eval_dataset_path(cfg), eval);

  auto print_histogram = [](const char* name, const Dataset& ds) {
    std::printf("%s: %zu items; answer histogram:", name, ds.items.size());
    for (int c = 0; c < kAnswerClasses; ++c) {
      const double share = 100.0 * ds.class_histogram[static_cast<std::size_t>(c)] /
                           static_cast<double>(ds.items.size());
      std::printf(" %s=%.1f%%", answer_to_string(c).c_str(), share);
    }
    std::printf("\n");
  };
  print_histogram("train", train);
  print_histogram("eval", eval);
}

void cmd_train(const CommandContext& ctx, const std::string& pipeline, double rate,
               std::uint64_t seed) {
  const auto& cfg = ctx.cfg;
  const PipelineKind kind = pipeline_kind_from_string(pipeline);
  const BlockSpec spec = cfg.block_spec();
  const MeasurementMatrix phi = matrix_for_rate(cfg, rate);

  const Dataset train = load_dataset_or_fail(train_dataset_path(cfg));
  const Dataset eval = load_dataset_or_fail(eval_dataset_path(cfg));

  ReconNetModel reconnet;
  const ReconNetModel* reconnet_ptr = nullptr;
  if (kind == PipelineKind::recon_learned) {
    reconnet = ensure_reconnet(cfg, phi);
    reconnet_ptr = &reconnet;
  }

  TrainOptions opts;
  opts.epochs = cfg.epochs;
  opts.batch_size = cfg.batch_size;
  opts.lr = cfg.lr;
  opts.seed = seed;

  ensure_dir(cfg.output_dir + "/ckpt");
  ensure_dir(cfg.output_dir + "/history");
  const std::string hist_path = history_path(cfg, kind, rate, seed);
  std::ofstream hist(hist_path, std::ios::trunc);
  require(hist.good(), Error::Kind::io, "cannot write history file: " + hist_path);
  hist << "epoch,train_loss,eval_acc,acc_exist,acc_count,acc_rel\n" << std::flush;

  const auto t0 = std::chrono::steady_clock::now();
  const PipelineTrainResult result = train_pipeline(
      kind, train, eval, cfg.vqa, opts, phi, spec, cfg.solver_config(), cfg.recon_method,
      reconnet_ptr, [&](const EpochMetrics& em) {
        char line[160];
        std::snprintf(line, sizeof(line), "%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", em.epoch,
                      em.train_loss, em.eval_accuracy, em.acc_existence, em.acc_count,
                      em.acc_relation);
        hist << line << std::flush;
      });
  const double elapsed = seconds_since(t0);

  const std::string ckpt = checkpoint_path(cfg, kind, rate, seed);
  save_checkpoint(ckpt, result.model.params);
  const auto& last = result.history.back();
  std::printf("[train] %s: eval acc %.4f after %d epochs (%.1fs) -> %s\n",
              cell_tag(kind, rate, seed).c_str(), last.eval_accuracy, last.epoch,
              ctx.no_timing ? 0.0 : elapsed, ckpt.c_str());
}

void cmd_eval(const CommandContext& ctx, const std::string& pipeline, double rate,
              std::uint64_t seed) {
  const auto& cfg = ctx.cfg;
  const PipelineKind kind = pipeline_kind_from_string(pipeline);
  const BlockSpec spec = cfg.block_spec();
  const MeasurementMatrix phi = matrix_for_rate(cfg, rate);
  const Dataset eval = load_dataset_or_fail(eval_dataset_path(cfg));

  const std::string ckpt = checkpoint_path(cfg, kind, rate, seed);
  require(fs::exists(ckpt), Error::Kind::invalid_argument,
          "checkpoint missing: " + ckpt + " (run `csvqa train` for this cell first)");

  VqaNetConfig net_cfg = cfg.vqa;
  net_cfg.seed = seed;
  const InputGeometry geometry =
      kind == PipelineKind::compressed_direct
          ? InputGeometry::for_measurements(phi.rows * spec.block_rows() * spec.block_cols() *
                                            spec.channels)
          : InputGeometry::for_image(spec.channels, spec.image_height, spec.image_width);
  VqaModel model = build_vqa_net(net_cfg, geometry);
  load_into_model(model, load_checkpoint(ckpt));

  ReconNetModel reconnet;
  const ReconNetModel* reconnet_ptr = nullptr;
  if (kind == PipelineKind::recon_learned) {
    const std::string rpath = reconnet_checkpoint_path(cfg, rate);
    require(fs::exists(rpath), Error::Kind::invalid_argument,
            "reconnet checkpoint missing: " + rpath);
    ReconNetConfig rcfg;
    rcfg.conv_hidden_channels = cfg.reconnet_channels;
    rcfg.seed = cfg.reconnet_seed;
    reconnet = build_reconnet(rcfg, phi.rows, spec);
    load_into_model(reconnet, load_checkpoint(rpath));
    reconnet_ptr = &reconnet;
  }

  const auto t0 = std::chrono::steady_clock::now();
  const EvalMetrics m = evaluate(model, eval, kind, phi, spec, cfg.solver_config(),
                                 cfg.recon_method, reconnet_ptr);
  const double elapsed = seconds_since(t0);

  ReportRow row;
  row.pipeline = to_string(kind);
  row.rate = rate;
  row.seed = seed;
  row.acc_overall = m.acc_overall;
  row.acc_exist = m.acc_existence;
  row.acc_count = m.acc_count;
  row.acc_rel = m.acc_relation;
  row.psnr_mean = m.psnr_mean;
  row.wall_time = ctx.no_timing ? 0.0 : elapsed;
  append_result_row(results_path(cfg), row);
  std::printf("[eval] %s: acc %.4f (exist %.4f, count %.4f, rel %.4f), psnr %s\n",
              cell_tag(kind, rate, seed).c_str(), m.acc_overall, m.acc_existence, m.acc_count,
              m.acc_relation, format_psnr(m.psnr_mean).c_str());
}

void cmd_recon_bench(const CommandContext& ctx) {
  const auto& cfg = ctx.cfg;
  const BlockSpec spec = cfg.block_spec();
  ensure_dir(cfg.output_dir);

  // Fixed image corpus, derived from the dataset seed but on its own stream.
  const Rng corpus_root = Rng(cfg.dataset_seed).split("bench-corpus");
  std::vector<Image> corpus;
  corpus.reserve(static_cast<std::size_t>(cfg.bench_images));
  for (int i = 0; i < cfg.bench_images; ++i) {
    const Scene scene =
        generate_scene(corpus_root.split(static_cast<std::uint64_t>(i)).key(), cfg.max_objects);
    corpus.push_back(render(scene));
  }

  const std::string path = cfg.output_dir + "/recon_bench.csv";
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), Error::Kind::io, "cannot write bench file: " + path);
  out << "method,rate,psnr_mean,psnr_std,time_per_image,failures\n";

  struct MethodSpec {
    std::string name;
    ReconMethod method;
    bool learned;
  };
  const MethodSpec methods[] = {{"fista", ReconMethod::fista, false},
                                {"omp", ReconMethod::omp, false},
                                {"reconnet", ReconMethod::fista, true}};

  for (const auto& ms : methods) {
    for (double rate : cfg.rates) {
      const MeasurementMatrix phi = matrix_for_rate(cfg, rate);
      ReconNetModel reconnet;
      if (ms.learned) reconnet = ensure_reconnet(cfg, phi);

      std::vector<double> psnrs;
      int failures = 0;
      const auto t0 = std::chrono::steady_clock::now();
      for (const auto& image : corpus) {
        try {
          const MeasurementSet meas = measure(image, spec, phi);
          const Image recon = ms.learned
                                  ? reconnet_forward(meas, reconnet)
                                  : reconstruct_image(meas, phi, spec, ms.method,
                                                      cfg.solver_config());
          psnrs.push_back(psnr(image, recon));
        } catch (const Error&) {
          ++failures;
        }
      }
      const double elapsed = seconds_since(t0);

      std::string psnr_mean = "n/a", psnr_std = "n/a";
      if (!psnrs.empty()) {
        double sum = 0.0;
        for (double v : psnrs) sum += v;
        const double mean_v = sum / static_cast<double>(psnrs.size());
        double var = 0.0;
        for (double v : psnrs) var += (v - mean_v) * (v - mean_v);
        psnr_mean = format_psnr(mean_v);
        psnr_std = std::isfinite(mean_v)
                       ? format_psnr(std::sqrt(var / static_cast<double>(psnrs.size())))
                       : "n/a";
      }
      char line[200];
      std::snprintf(line, sizeof(line), "%s,%s,%s,%s,%.6f,%d\n", ms.name.c_str(),
                    format_rate(rate).c_str(), psnr_mean.c_str(), psnr_std.c_str(),
                    ctx.no_timing ? 0.0 : elapsed / static_cast<double>(corpus.size()), failures);
      out << line << std::flush;
      std::printf("[recon-bench] %s rate %s: psnr %s (+-%s), %d failures\n", ms.name.c_str(),
                  format_rate(rate).c_str(), psnr_mean.c_str(), psnr_std.c_str(), failures);
    }
  }
  require(out.good(), Error::Kind::io, "bench write failed: " + path);
  std::printf("[recon-bench] table -> %s\n", path.c_str());
}

void cmd_report(const CommandContext& ctx) {
  const auto& cfg = ctx.cfg;
  const std::string rpath = results_path(cfg);
  require(fs::exists(rpath), Error::Kind::invalid_argument,
          "no results at " + rpath + " (run `csvqa eval` on at least one cell first)");
  const auto rows = deduplicate(read_results(rpath));
  require(!rows.empty(), Error::Kind::invalid_argument, "results file holds no completed cells");
  const auto cells = aggregate(rows);
  write_summary_csv(cfg.output_dir + "/summary.csv", cells);
  write_plot_data(cfg.output_dir, cells);
  std::fputs(render_text_table(cells).c_str(), stdout);
  std::printf("[report] summary -> %s/summary.csv, plot data -> %s/plot_<pipeline>.dat\n",
              cfg.output_dir.c_str(), cfg.output_dir.c_str());
}

}  // namespace csvqa
