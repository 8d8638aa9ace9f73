#include "lossland/config.hpp"

#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace lossland {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& s,
                                         const std::string& key) {
  std::vector<std::size_t> out;
  for (const std::string& tok : split_csv(s)) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
    if (end == tok.c_str() || *end != '\0')
      throw std::invalid_argument("config: bad integer '" + tok + "' in " +
                                  key);
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::size_t parse_size(const std::string& v, const std::string& key) {
  char* end = nullptr;
  unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw std::invalid_argument("config: bad integer '" + v + "' for " + key);
  return static_cast<std::size_t>(x);
}

double parse_num(const std::string& v, const std::string& key) {
  char* end = nullptr;
  double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw std::invalid_argument("config: bad number '" + v + "' for " + key);
  return x;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: bad boolean '" + v + "' for " + key);
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::string join_strings(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += v[i];
  }
  return out;
}

void apply_entry(ExperimentConfig& c, const std::string& key,
                 const std::string& val) {
  if (key == "architecture") c.architecture = val;
  else if (key == "dataset") c.dataset = val;
  else if (key == "synth.classes") c.synth_classes = parse_size(val, key);
  else if (key == "synth.per_class") c.synth_per_class = parse_size(val, key);
  else if (key == "synth.dims") c.synth_dims = parse_size(val, key);
  else if (key == "synth.separation") c.synth_separation = parse_num(val, key);
  else if (key == "synth.seed") c.synth_seed = parse_size(val, key);
  else if (key == "idx.train_images") c.idx_train_images = val;
  else if (key == "idx.train_labels") c.idx_train_labels = val;
  else if (key == "idx.test_images") c.idx_test_images = val;
  else if (key == "idx.test_labels") c.idx_test_labels = val;
  else if (key == "cifar.train") c.cifar_train_batches = split_csv(val);
  else if (key == "cifar.test") c.cifar_test_batch = val;
  else if (key == "dataset.limit") c.dataset_limit = parse_size(val, key);
  else if (key == "data_dir") c.data_dir = val;
  else if (key == "init_seed") c.init_seed = parse_size(val, key);
  else if (key == "train.optimizer") {
    if (val == "sgd") c.train.optimizer = TrainConfig::Optimizer::sgd;
    else if (val == "adam") c.train.optimizer = TrainConfig::Optimizer::adam;
    else throw std::invalid_argument("config: unknown optimizer '" + val + "'");
  } else if (key == "train.lr") c.train.learning_rate = parse_num(val, key);
  else if (key == "train.beta1") c.train.adam_beta1 = parse_num(val, key);
  else if (key == "train.beta2") c.train.adam_beta2 = parse_num(val, key);
  else if (key == "train.eps") c.train.adam_eps = parse_num(val, key);
  else if (key == "train.batch_size") c.train.batch_size = parse_size(val, key);
  else if (key == "train.max_epochs") c.train.max_epochs = parse_size(val, key);
  else if (key == "train.patience")
    c.train.early_stop_patience = parse_size(val, key);
  else if (key == "train.seed") c.train.seed = parse_size(val, key);
  else if (key == "grid.alpha_min") c.grid.alpha_min = parse_num(val, key);
  else if (key == "grid.alpha_max") c.grid.alpha_max = parse_num(val, key);
  else if (key == "grid.beta_min") c.grid.beta_min = parse_num(val, key);
  else if (key == "grid.beta_max") c.grid.beta_max = parse_num(val, key);
  else if (key == "grid.res") {
    c.grid.res_a = parse_size(val, key);
    c.grid.res_b = c.grid.res_a;
  } else if (key == "grid.res_a") c.grid.res_a = parse_size(val, key);
  else if (key == "grid.res_b") c.grid.res_b = parse_size(val, key);
  else if (key == "eval.n") c.eval_n = parse_size(val, key);
  else if (key == "eval.seed") c.eval_seed = parse_size(val, key);
  else if (key == "directions.seed1") c.dir_seed1 = parse_size(val, key);
  else if (key == "directions.seed2") c.dir_seed2 = parse_size(val, key);
  else if (key == "sweep.batch_sizes")
    c.sweep_batch_sizes = parse_size_list(val, key);
  else if (key == "sweep.eval_counts")
    c.sweep_eval_counts = parse_size_list(val, key);
  else if (key == "imp.rounds") c.imp_rounds = parse_size(val, key);
  else if (key == "imp.prune_fraction")
    c.imp_prune_fraction = parse_num(val, key);
  else if (key == "imp.epochs_per_round")
    c.imp_epochs_per_round = parse_size(val, key);
  else if (key == "imp.surface_rounds")
    c.imp_surface_rounds = parse_size_list(val, key);
  else if (key == "stats.epsilon") c.stats_epsilon = parse_num(val, key);
  else if (key == "render.log_scale") c.render.log_scale = parse_bool(val, key);
  else if (key == "render.color_map") c.render.color_map = val;
  else if (key == "render.contours") c.render.contour_count = parse_size(val, key);
  else if (key == "render.image_px") c.render.image_px = parse_size(val, key);
  else if (key == "render.clip_radius") {
    double r = parse_num(val, key);
    c.render.clip_radius = r;
  } else if (key == "workers") c.workers = parse_size(val, key);
  else if (key == "out") c.out_dir = val;
  else
    throw std::invalid_argument("config: unknown key '" + key + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
  if (architecture != "mlp-small" && architecture != "lenet-style" &&
      architecture != "lenet-style-residual")
    throw std::invalid_argument("config: unknown architecture '" +
                                architecture + "'");
  if (dataset != "synth" && dataset != "idx" && dataset != "cifar")
    throw std::invalid_argument("config: unknown dataset kind '" + dataset +
                                "'");
  grid.validate();
  render.validate();
  if (eval_n == 0) throw std::invalid_argument("config: eval.n must be >= 1");
  if (imp_prune_fraction <= 0.0 || imp_prune_fraction >= 1.0)
    throw std::invalid_argument("config: imp.prune_fraction must be in (0,1)");
  if (stats_epsilon <= 0.0)
    throw std::invalid_argument("config: stats.epsilon must be > 0");
  if (dataset == "idx") {
    for (const std::string* p :
         {&idx_train_images, &idx_train_labels, &idx_test_images,
          &idx_test_labels})
      if (p->empty())
        throw std::invalid_argument("config: idx dataset needs all four "
                                    "idx.* paths");
  }
  if (dataset == "cifar" &&
      (cifar_train_batches.empty() || cifar_test_batch.empty()))
    throw std::invalid_argument(
        "config: cifar dataset needs cifar.train and cifar.test");
}

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: " + origin + ":" +
                                  std::to_string(lineno) +
                                  ": expected 'key = value'");
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    try {
      apply_entry(cfg, key, val);
    } catch (const std::exception& e) {
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                  ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("config: cannot open: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.string());
}

std::string config_text(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "architecture = " << c.architecture << "\n";
  out << "dataset = " << c.dataset << "\n";
  out << "synth.classes = " << c.synth_classes << "\n";
  out << "synth.per_class = " << c.synth_per_class << "\n";
  out << "synth.dims = " << c.synth_dims << "\n";
  out << "synth.separation = " << fmt_double(c.synth_separation) << "\n";
  out << "synth.seed = " << c.synth_seed << "\n";
  if (!c.idx_train_images.empty()) {
    out << "idx.train_images = " << c.idx_train_images << "\n";
    out << "idx.train_labels = " << c.idx_train_labels << "\n";
    out << "idx.test_images = " << c.idx_test_images << "\n";
    out << "idx.test_labels = " << c.idx_test_labels << "\n";
  }
  if (!c.cifar_train_batches.empty()) {
    out << "cifar.train = " << join_strings(c.cifar_train_batches) << "\n";
    out << "cifar.test = " << c.cifar_test_batch << "\n";
  }
  if (c.dataset_limit) out << "dataset.limit = " << c.dataset_limit << "\n";
  out << "data_dir = " << c.data_dir << "\n";
  out << "init_seed = " << c.init_seed << "\n";
  out << "train.optimizer = "
      << (c.train.optimizer == TrainConfig::Optimizer::adam ? "adam" : "sgd")
      << "\n";
  out << "train.lr = " << fmt_double(c.train.learning_rate) << "\n";
  out << "train.beta1 = " << fmt_double(c.train.adam_beta1) << "\n";
  out << "train.beta2 = " << fmt_double(c.train.adam_beta2) << "\n";
  out << "train.eps = " << fmt_double(c.train.adam_eps) << "\n";
  out << "train.batch_size = " << c.train.batch_size << "\n";
  out << "train.max_epochs = " << c.train.max_epochs << "\n";
  out << "train.patience = " << c.train.early_stop_patience << "\n";
  out << "train.seed = " << c.train.seed << "\n";
  out << "grid.alpha_min = " << fmt_double(c.grid.alpha_min) << "\n";
  out << "grid.alpha_max = " << fmt_double(c.grid.alpha_max) << "\n";
  out << "grid.beta_min = " << fmt_double(c.grid.beta_min) << "\n";
  out << "grid.beta_max = " << fmt_double(c.grid.beta_max) << "\n";
  out << "grid.res_a = " << c.grid.res_a << "\n";
  out << "grid.res_b = " << c.grid.res_b << "\n";
  out << "eval.n = " << c.eval_n << "\n";
  out << "eval.seed = " << c.eval_seed << "\n";
  out << "directions.seed1 = " << c.dir_seed1 << "\n";
  out << "directions.seed2 = " << c.dir_seed2 << "\n";
  out << "sweep.batch_sizes = " << join_sizes(c.sweep_batch_sizes) << "\n";
  out << "sweep.eval_counts = " << join_sizes(c.sweep_eval_counts) << "\n";
  out << "imp.rounds = " << c.imp_rounds << "\n";
  out << "imp.prune_fraction = " << fmt_double(c.imp_prune_fraction) << "\n";
  out << "imp.epochs_per_round = " << c.imp_epochs_per_round << "\n";
  if (!c.imp_surface_rounds.empty())
    out << "imp.surface_rounds = " << join_sizes(c.imp_surface_rounds) << "\n";
  out << "stats.epsilon = " << fmt_double(c.stats_epsilon) << "\n";
  out << "render.log_scale = " << (c.render.log_scale ? "true" : "false")
      << "\n";
  out << "render.color_map = " << c.render.color_map << "\n";
  out << "render.contours = " << c.render.contour_count << "\n";
  out << "render.image_px = " << c.render.image_px << "\n";
  if (c.render.clip_radius.has_value())
    out << "render.clip_radius = " << fmt_double(*c.render.clip_radius)
        << "\n";
  out << "workers = " << c.workers << "\n";
  out << "out = " << c.out_dir << "\n";
  return out.str();
}

std::string config_digest_hex(const ExperimentConfig& cfg) {
  std::string text = config_text(cfg);
  auto crc = ::crc32(0L, reinterpret_cast<const Bytef*>(text.data()),
                     static_cast<uInt>(text.size()));
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

std::vector<LayerSpec> architecture_preset(
    const std::string& name, const std::vector<std::size_t>& input_shape,
    std::size_t classes) {
  std::size_t flat = 1;
  for (std::size_t d : input_shape) flat *= d;

  if (name == "mlp-small") {
    std::vector<LayerSpec> spec;
    if (input_shape.size() > 1) spec.push_back(LayerSpec::Flatten());
    spec.push_back(LayerSpec::Dense(flat, 32));
    spec.push_back(LayerSpec::Relu());
    spec.push_back(LayerSpec::Dense(32, 16));
    spec.push_back(LayerSpec::Relu());
    spec.push_back(LayerSpec::Dense(16, classes));
    return spec;
  }

  if (name == "lenet-style" || name == "lenet-style-residual") {
    if (input_shape.size() != 3)
      throw std::invalid_argument("preset " + name +
                                  " expects (C,H,W) input, got " +
                                  shape_string(input_shape));
    std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
    // Two valid 5x5 convs with 2x2 pools: H -> (H-4)/2 -> ((H-4)/2-4)/2.
    auto reduce = [&](std::size_t d) {
      if (d < 14 || (d - 4) % 2 != 0 || ((d - 4) / 2 - 4) % 2 != 0 ||
          (d - 4) / 2 < 6)
        throw std::invalid_argument("preset " + name +
                                    ": input size unsupported: " +
                                    shape_string(input_shape));
      return ((d - 4) / 2 - 4) / 2;
    };
    std::size_t h2 = reduce(h), w2 = reduce(w);

    std::vector<LayerSpec> spec;
    spec.push_back(LayerSpec::Conv2d(c, 6, 5));
    spec.push_back(LayerSpec::BatchNorm());
    spec.push_back(LayerSpec::Relu());
    spec.push_back(LayerSpec::AvgPool(2));
    spec.push_back(LayerSpec::Conv2d(6, 16, 5));
    spec.push_back(LayerSpec::BatchNorm());
    spec.push_back(LayerSpec::Relu());
    spec.push_back(LayerSpec::AvgPool(2));  // index 7
    if (name == "lenet-style-residual") {
      spec.push_back(LayerSpec::Conv2d(16, 16, 3, 1, 1));
      spec.push_back(LayerSpec::BatchNorm());
      spec.push_back(LayerSpec::Relu());
      spec.push_back(LayerSpec::ResidualAdd(7));
    }
    spec.push_back(LayerSpec::Flatten());
    spec.push_back(LayerSpec::Dense(16 * h2 * w2, 120));
    spec.push_back(LayerSpec::Relu());
    spec.push_back(LayerSpec::Dropout(0.5));
    spec.push_back(LayerSpec::Dense(120, 84));
    spec.push_back(LayerSpec::Relu());
    spec.push_back(LayerSpec::Dense(84, classes));
    return spec;
  }

  throw std::invalid_argument("unknown architecture preset '" + name + "'");
}

}  // namespace lossland
