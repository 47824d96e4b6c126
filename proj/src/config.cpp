#include "csvqa/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace csvqa {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void fail(const std::string& key, int line, const std::string& what) {
  throw_error(Error::Kind::config,
              "config error at line " + std::to_string(line) + ", key '" + key + "': " + what);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> parts;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

struct Parser {
  const std::string& key;
  int line;

  long long integer(const std::string& v) const {
    try {
      std::size_t pos = 0;
      const long long x = std::stoll(v, &pos);
      if (pos != v.size()) fail(key, line, "expected an integer, got '" + v + "'");
      return x;
    } catch (const Error&) {
      throw;
    } catch (...) {
      fail(key, line, "expected an integer, got '" + v + "'");
    }
  }
  double real(const std::string& v) const {
    try {
      std::size_t pos = 0;
      const double x = std::stod(v, &pos);
      if (pos != v.size()) fail(key, line, "expected a number, got '" + v + "'");
      return x;
    } catch (const Error&) {
      throw;
    } catch (...) {
      fail(key, line, "expected a number, got '" + v + "'");
    }
  }
  std::uint64_t unsigned64(const std::string& v) const {
    const long long x = integer(v);
    if (x < 0) fail(key, line, "expected a non-negative integer");
    return static_cast<std::uint64_t>(x);
  }
  bool boolean(const std::string& v) const {
    if (v == "true") return true;
    if (v == "false") return false;
    fail(key, line, "expected true or false, got '" + v + "'");
  }
  int positive_int(const std::string& v) const {
    const long long x = integer(v);
    if (x < 1) fail(key, line, "value must be >= 1");
    return static_cast<int>(x);
  }
};

}  // namespace

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Error::Kind::config, "cannot open config file: " + path);

  ExperimentConfig cfg;
  std::set<std::string> seen;

  using Handler = std::function<void(const Parser&, const std::string&)>;
  const std::map<std::string, Handler> handlers = {
      {"dataset.n_train", [&](const Parser& p, const std::string& v) { cfg.n_train = p.positive_int(v); }},
      {"dataset.n_eval", [&](const Parser& p, const std::string& v) { cfg.n_eval = p.positive_int(v); }},
      {"dataset.seed", [&](const Parser& p, const std::string& v) { cfg.dataset_seed = p.unsigned64(v); }},
      {"dataset.max_objects",
       [&](const Parser& p, const std::string& v) {
         cfg.max_objects = static_cast<int>(p.integer(v));
         if (cfg.max_objects < 1 || cfg.max_objects > 4)
           fail(p.key, p.line, "max_objects must lie in [1,4]");
       }},
      {"experiment.rates",
       [&](const Parser& p, const std::string& v) {
         cfg.rates.clear();
         for (const auto& item : split_list(v)) {
           const double r = p.real(item);
           if (r <= 0.0 || r > 1.0) fail(p.key, p.line, "rates must lie in (0, 1]");
           cfg.rates.push_back(r);
         }
         if (cfg.rates.empty()) fail(p.key, p.line, "at least one rate required");
       }},
      {"experiment.pipelines",
       [&](const Parser& p, const std::string& v) {
         cfg.pipelines.clear();
         for (const auto& item : split_list(v)) {
           try {
             cfg.pipelines.push_back(pipeline_kind_from_string(item));
           } catch (const Error& e) {
             fail(p.key, p.line, e.what());
           }
         }
         if (cfg.pipelines.empty()) fail(p.key, p.line, "at least one pipeline required");
       }},
      {"experiment.seeds",
       [&](const Parser& p, const std::string& v) {
         cfg.seeds.clear();
         for (const auto& item : split_list(v)) cfg.seeds.push_back(p.unsigned64(item));
         if (cfg.seeds.empty()) fail(p.key, p.line, "at least one seed required");
       }},
      {"experiment.output_dir",
       [&](const Parser& p, const std::string& v) {
         if (v.empty()) fail(p.key, p.line, "output_dir must not be empty");
         cfg.output_dir = v;
       }},
      {"sensing.block_size",
       [&](const Parser& p, const std::string& v) {
         cfg.block_size = p.positive_int(v);
         if (cfg.block_size < 2) fail(p.key, p.line, "block_size must be >= 2");
         if (kImageHeight % cfg.block_size != 0 || kImageWidth % cfg.block_size != 0)
           fail(p.key, p.line, "block_size must divide the 32x32 image");
       }},
      {"sensing.matrix_kind",
       [&](const Parser& p, const std::string& v) {
         try {
           cfg.matrix_kind = matrix_kind_from_string(v);
         } catch (const Error& e) {
           fail(p.key, p.line, e.what());
         }
       }},
      {"sensing.orthonormalize",
       [&](const Parser& p, const std::string& v) { cfg.orthonormalize = p.boolean(v); }},
      {"sensing.seed", [&](const Parser& p, const std::string& v) { cfg.matrix_seed = p.unsigned64(v); }},
      {"train.epochs", [&](const Parser& p, const std::string& v) { cfg.epochs = p.positive_int(v); }},
      {"train.batch_size",
       [&](const Parser& p, const std::string& v) { cfg.batch_size = p.positive_int(v); }},
      {"train.lr",
       [&](const Parser& p, const std::string& v) {
         cfg.lr = p.real(v);
         if (cfg.lr <= 0.0) fail(p.key, p.line, "learning rate must be > 0");
       }},
      {"reconnet.epochs",
       [&](const Parser& p, const std::string& v) { cfg.reconnet_epochs = p.positive_int(v); }},
      {"reconnet.lr",
       [&](const Parser& p, const std::string& v) {
         cfg.reconnet_lr = p.real(v);
         if (cfg.reconnet_lr <= 0.0) fail(p.key, p.line, "learning rate must be > 0");
       }},
      {"reconnet.conv_channels",
       [&](const Parser& p, const std::string& v) { cfg.reconnet_channels = p.positive_int(v); }},
      {"reconnet.seed",
       [&](const Parser& p, const std::string& v) { cfg.reconnet_seed = p.unsigned64(v); }},
      {"recon.method",
       [&](const Parser& p, const std::string& v) {
         try {
           cfg.recon_method = recon_method_from_string(v);
         } catch (const Error& e) {
           fail(p.key, p.line, e.what());
         }
       }},
      {"recon.lambda",
       [&](const Parser& p, const std::string& v) {
         if (v == "auto") {
           cfg.recon_lambda = -1.0;
         } else {
           cfg.recon_lambda = p.real(v);
           if (cfg.recon_lambda < 0.0) fail(p.key, p.line, "lambda must be >= 0 or 'auto'");
         }
       }},
      {"recon.max_iters",
       [&](const Parser& p, const std::string& v) { cfg.recon_max_iters = p.positive_int(v); }},
      {"recon.tolerance",
       [&](const Parser& p, const std::string& v) {
         cfg.recon_tolerance = p.real(v);
         if (cfg.recon_tolerance < 0.0) fail(p.key, p.line, "tolerance must be >= 0");
       }},
      {"recon.omp_sparsity",
       [&](const Parser& p, const std::string& v) {
         cfg.omp_sparsity = static_cast<int>(p.integer(v));
         if (cfg.omp_sparsity < 0) fail(p.key, p.line, "omp_sparsity must be >= 0 (0 = auto)");
       }},
      {"vqa.conv_channels",
       [&](const Parser& p, const std::string& v) {
         cfg.vqa.conv_channels.clear();
         for (const auto& item : split_list(v)) cfg.vqa.conv_channels.push_back(p.positive_int(item));
         if (cfg.vqa.conv_channels.empty()) fail(p.key, p.line, "at least one conv layer required");
       }},
      {"vqa.question_widths",
       [&](const Parser& p, const std::string& v) {
         cfg.vqa.question_widths.clear();
         for (const auto& item : split_list(v)) cfg.vqa.question_widths.push_back(p.positive_int(item));
         if (cfg.vqa.question_widths.empty()) fail(p.key, p.line, "at least one width required");
       }},
      {"vqa.head_widths",
       [&](const Parser& p, const std::string& v) {
         cfg.vqa.head_widths.clear();
         for (const auto& item : split_list(v)) cfg.vqa.head_widths.push_back(p.positive_int(item));
       }},
      {"vqa.fusion",
       [&](const Parser& p, const std::string& v) {
         if (v == "concat") cfg.vqa.fusion = FusionKind::concat;
         else if (v == "elementwise-product") cfg.vqa.fusion = FusionKind::elementwise_product;
         else fail(p.key, p.line, "fusion must be 'concat' or 'elementwise-product'");
       }},
      {"vqa.compressed_widths",
       [&](const Parser& p, const std::string& v) {
         cfg.vqa.compressed_widths.clear();
         for (const auto& item : split_list(v)) cfg.vqa.compressed_widths.push_back(p.positive_int(item));
         if (cfg.vqa.compressed_widths.empty()) fail(p.key, p.line, "at least one width required");
       }},
      {"vqa.measurement_layout",
       [&](const Parser& p, const std::string& v) {
         if (v == "map") cfg.vqa.measurement_layout = MeasurementLayout::map;
         else if (v == "flat") cfg.vqa.measurement_layout = MeasurementLayout::flat;
         else fail(p.key, p.line, "measurement_layout must be 'map' or 'flat'");
       }},
      {"bench.images",
       [&](const Parser& p, const std::string& v) { cfg.bench_images = p.positive_int(v); }},
  };

  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw_error(Error::Kind::config, "config error at line " + std::to_string(line_no) +
                                           ": expected 'section.key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || std::count(key.begin(), key.end(), '.') != 1)
      throw_error(Error::Kind::config, "config error at line " + std::to_string(line_no) +
                                           ": key must have the form section.key, got '" + key +
                                           "'");
    const auto it = handlers.find(key);
    if (it == handlers.end())
      throw_error(Error::Kind::config, "config error at line " + std::to_string(line_no) +
                                           ": unknown key '" + key + "'");
    it->second(Parser{key, line_no}, value);
    seen.insert(key);
  }

  require(seen.count("dataset.seed") == 1, Error::Kind::config,
          "config error: missing required key 'dataset.seed'");
  return cfg;
}

std::string config_reference() {
  return
      "dataset.n_train = 5000          # training items\n"
      "dataset.n_eval = 1000           # evaluation items\n"
      "dataset.seed = <required>       # master dataset seed\n"
      "dataset.max_objects = 4         # objects per scene, 1..4\n"
      "experiment.rates = 0.04, 0.10, 0.25, 1.0\n"
      "experiment.pipelines = oracle, recon-classical, recon-learned, compressed-direct\n"
      "experiment.seeds = 1, 2, 3      # training seeds per cell\n"
      "experiment.output_dir = out\n"
      "sensing.block_size = 16\n"
      "sensing.matrix_kind = gaussian  # gaussian | bernoulli\n"
      "sensing.orthonormalize = true\n"
      "sensing.seed = 7                # measurement matrix seed\n"
      "train.epochs = 30\n"
      "train.batch_size = 32\n"
      "train.lr = 0.001\n"
      "reconnet.epochs = 10\n"
      "reconnet.lr = 0.001\n"
      "reconnet.conv_channels = 8\n"
      "reconnet.seed = 11\n"
      "recon.method = fista            # ista | fista | omp\n"
      "recon.lambda = auto             # auto or a fixed value >= 0\n"
      "recon.max_iters = 400\n"
      "recon.tolerance = 1e-08\n"
      "recon.omp_sparsity = 0          # 0 = m/4\n"
      "vqa.conv_channels = 16, 32\n"
      "vqa.question_widths = 32, 32\n"
      "vqa.head_widths = 64\n"
      "vqa.fusion = concat             # concat | elementwise-product\n"
      "vqa.compressed_widths = 128, 64\n"
      "vqa.measurement_layout = map    # map | flat\n"
      "bench.images = 100\n";
}

}  // namespace csvqa
