#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cdinet/metrics.hpp"
#include "cdinet/trainer.hpp"

namespace fs = std::filesystem;
using namespace cdinet;

namespace {

// ---- flat key=value config ------------------------------------------------
//
// Schema (all keys optional; '#' starts a comment):
//   backbone.scale            full | toy
//   backbone.stage_channels   c1,c2,c3,c4,c5
//   backbone.pretrained       <path>
//   network.interaction_mode  discrepant | unidirectional | bidirectional
//   network.without_rde|without_dse|without_ddr   true|false
//   network.low_stages / network.high_stages      e.g. 1,2 / 3,4,5
//   network.low_block / network.high_block        rde | dse
//   network.dse_alt_addition  true|false
//   network.reduction_ratio   int
//   data.target_size          int (divisible by 16)
//   data.augment              true|false
//   train.batch_size|base_lr|lr_decay_factor|lr_decay_period|
//        total_epochs|seed|checkpoint_period
//
// Every key may be overridden with environment variable
// CDINET_<KEY with '.' replaced by '_' and uppercased>, e.g.
// CDINET_TRAIN_BASE_LR=2e-3.

std::map<std::string, std::string> read_flat_config(const fs::path& path) {
  std::map<std::string, std::string> kv;
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) {
        throw ConfigError("config line " + std::to_string(line_no) +
                          " is not 'key = value': " + line);
      }
      continue;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

void apply_env_overrides(std::map<std::string, std::string>& kv,
                         const std::vector<std::string>& known_keys) {
  for (const std::string& key : known_keys) {
    std::string env_name = "CDINET_";
    for (char c : key) {
      env_name += (c == '.') ? '_' : static_cast<char>(std::toupper(c));
    }
    if (const char* v = std::getenv(env_name.c_str())) {
      kv[key] = v;
    }
  }
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected boolean, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

const std::vector<std::string> kKnownKeys = {
    "backbone.scale",          "backbone.stage_channels",
    "backbone.pretrained",     "network.interaction_mode",
    "network.without_rde",     "network.without_dse",
    "network.without_ddr",     "network.low_stages",
    "network.high_stages",     "network.low_block",
    "network.high_block",      "network.dse_alt_addition",
    "network.reduction_ratio", "data.target_size",
    "data.augment",            "train.batch_size",
    "train.base_lr",           "train.lr_decay_factor",
    "train.lr_decay_period",   "train.total_epochs",
    "train.seed",              "train.checkpoint_period"};

struct RunConfig {
  NetworkConfig network;
  TrainConfig train;
  int target_size = 256;
};

RunConfig build_run_config(const std::string& config_path,
                           const std::string& variant) {
  std::map<std::string, std::string> kv;
  if (!config_path.empty()) kv = read_flat_config(config_path);
  apply_env_overrides(kv, kKnownKeys);
  for (const auto& [key, value] : kv) {
    if (std::find(kKnownKeys.begin(), kKnownKeys.end(), key) ==
        kKnownKeys.end()) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }

  RunConfig rc;
  const auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };

  if (const auto* v = get("backbone.scale")) {
    if (*v == "toy") {
      rc.network.backbone = BackboneConfig::toy();
    } else if (*v != "full") {
      throw ConfigError("backbone.scale must be full or toy");
    }
  }
  if (const auto* v = get("backbone.stage_channels")) {
    const auto c = parse_int_list(*v);
    if (c.size() != 5) throw ConfigError("stage_channels needs 5 values");
    std::copy(c.begin(), c.end(), rc.network.backbone.stage_channels.begin());
  }
  if (const auto* v = get("backbone.pretrained")) {
    rc.network.backbone.pretrained_weights_path = *v;
  }
  if (!variant.empty()) {
    rc.network = make_variant(variant, rc.network.backbone);
  }
  if (const auto* v = get("network.interaction_mode")) {
    nlohmann::json j = rc.network.to_json();
    j["interaction_mode"] = *v == "unidirectional" ? "unidirectional"
                            : *v == "bidirectional" ? "bidirectional"
                                                     : *v;
    rc.network = NetworkConfig::from_json(j);
  }
  if (const auto* v = get("network.without_rde")) rc.network.without_rde = parse_bool(*v);
  if (const auto* v = get("network.without_dse")) rc.network.without_dse = parse_bool(*v);
  if (const auto* v = get("network.without_ddr")) rc.network.without_ddr = parse_bool(*v);
  if (const auto* v = get("network.low_stages")) rc.network.low_stages = parse_int_list(*v);
  if (const auto* v = get("network.high_stages")) rc.network.high_stages = parse_int_list(*v);
  if (const auto* v = get("network.low_block")) {
    rc.network.low_block = (*v == "dse") ? BlockKind::dse : BlockKind::rde;
  }
  if (const auto* v = get("network.high_block")) {
    rc.network.high_block = (*v == "rde") ? BlockKind::rde : BlockKind::dse;
  }
  if (const auto* v = get("network.dse_alt_addition")) {
    rc.network.dse_alt_addition = parse_bool(*v);
  }
  if (const auto* v = get("network.reduction_ratio")) {
    rc.network.reduction_ratio = std::stoi(*v);
  }
  if (const auto* v = get("data.target_size")) rc.target_size = std::stoi(*v);
  if (const auto* v = get("data.augment")) rc.train.augment = parse_bool(*v);
  if (const auto* v = get("train.batch_size")) rc.train.batch_size = std::stoi(*v);
  if (const auto* v = get("train.base_lr")) rc.train.base_lr = std::stod(*v);
  if (const auto* v = get("train.lr_decay_factor")) rc.train.lr_decay_factor = std::stod(*v);
  if (const auto* v = get("train.lr_decay_period")) rc.train.lr_decay_period = std::stoi(*v);
  if (const auto* v = get("train.total_epochs")) rc.train.total_epochs = std::stoi(*v);
  if (const auto* v = get("train.seed")) rc.train.seed = std::stoull(*v);
  if (const auto* v = get("train.checkpoint_period")) rc.train.checkpoint_period = std::stoi(*v);

  rc.network.validate();
  rc.train.validate();
  if (rc.target_size <= 0 || rc.target_size % 16 != 0) {
    throw ConfigError("data.target_size must be a positive multiple of 16");
  }
  return rc;
}

std::vector<std::string> split_names(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_train(const std::string& config_path, const std::string& variant,
              const std::string& data_root, const std::string& datasets_csv,
              const std::string& out_dir) {
  RunConfig rc = build_run_config(config_path, variant);
  std::vector<DatasetManifest> manifests;
  for (const std::string& name : split_names(datasets_csv)) {
    manifests.push_back(discover_dataset(data_root, name));
  }
  SplitResult split = make_split(manifests);
  std::cout << "train samples: " << split.train.size()
            << ", test samples: " << split.test.size() << std::endl;
  auto net = build_network(rc.network, rc.train.seed);
  std::cout << "parameters: " << count_parameters(*net) << std::endl;
  DiskSource source(split.train, rc.target_size);
  TrainOutcome outcome = train(*net, rc.train, source, out_dir);
  std::cout << "final checkpoint: " << outcome.final_checkpoint << std::endl;
  return 0;
}

int cmd_infer(const std::string& checkpoint_path, const std::string& data_root,
              const std::string& datasets_csv, const std::string& out_dir,
              int size_override) {
  LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);
  // weights come from the archive, not from a pretrained file
  ckpt.config.backbone.pretrained_weights_path.reset();
  auto net = build_network(ckpt.config, 1);
  apply_checkpoint(*net, ckpt.archive);

  int size = size_override;
  if (size <= 0) {
    size = 256;
    if (ckpt.archive.meta.contains("extra") &&
        ckpt.archive.meta["extra"].contains("target_size")) {
      size = ckpt.archive.meta["extra"]["target_size"].get<int>();
    }
  }

  autograd::NoGradGuard guard;
  for (const std::string& name : split_names(datasets_csv)) {
    DatasetManifest manifest = discover_dataset(data_root, name,
                                                /*require_gt=*/false);
    const fs::path dataset_out = fs::path(out_dir) / name;
    fs::create_directories(dataset_out);
    for (const auto& entry : manifest.entries) {
      RGBDSample sample = load_sample(entry, size, /*with_gt=*/false);
      Var pred = net->forward(make_var(sample.rgb), make_var(sample.depth));
      // write back at the original RGB resolution
      cv::Mat original = cv::imread(entry.rgb_path.string(), cv::IMREAD_COLOR);
      cv::Mat map(size, size, CV_64F);
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          map.at<double>(y, x) = pred->value.at(0, 0, y, x);
        }
      }
      cv::resize(map, map, cv::Size(original.cols, original.rows), 0, 0,
                 cv::INTER_LINEAR);
      cv::Mat out8;
      map.convertTo(out8, CV_8U, 255.0);
      const fs::path out_path = dataset_out / (entry.stem + ".png");
      if (!cv::imwrite(out_path.string(), out8)) {
        throw IoError("cannot write " + out_path.string());
      }
    }
    std::cout << "wrote " << manifest.entries.size() << " maps to "
              << dataset_out << std::endl;
  }
  return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir,
             const std::string& dataset_name, const std::string& out_json,
             const std::string& out_csv, const std::string& pr_plot) {
  DatasetReport report = evaluate_dataset(pred_dir, gt_dir, dataset_name);
  std::vector<DatasetReport> reports = {report};
  nlohmann::json identifiers = {{"pred_dir", pred_dir}, {"gt_dir", gt_dir}};
  write_report_json(out_json, report_to_json(reports, identifiers));
  if (!out_csv.empty()) write_report_csv(out_csv, reports);
  if (!pr_plot.empty()) write_pr_plot(pr_plot, reports);
  std::cout << report.dataset << ": max_f " << report.max_f << ", s_measure "
            << report.s_measure << ", mae " << report.mae << std::endl;
  return 0;
}

int cmd_bench(const std::string& variant, bool toy, int size, int runs) {
  BackboneConfig backbone =
      toy ? BackboneConfig::toy() : BackboneConfig::full_scale();
  NetworkConfig cfg = make_variant(variant.empty() ? "no1" : variant, backbone);
  auto net = build_network(cfg, 1);
  std::cout << "variant: " << (variant.empty() ? "no1" : variant)
            << ", parameters: " << count_parameters(*net) << std::endl;
  autograd::NoGradGuard guard;
  Rng rng(7);
  Tensor rgb({1, 3, size, size});
  Tensor depth({1, 3, size, size});
  for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = rng.uniform();
  for (std::size_t i = 0; i < depth.size(); ++i) depth[i] = rng.uniform();
  // warm-up
  net->forward(make_var(rgb), make_var(depth));
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < runs; ++i) {
    net->forward(make_var(rgb), make_var(depth));
  }
  const auto stop = std::chrono::steady_clock::now();
  const double seconds =
      std::chrono::duration<double>(stop - start).count() / runs;
  std::cout << "forward " << size << "x" << size << ": " << seconds
            << " s/image (" << (1.0 / seconds) << " FPS) on this machine"
            << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CDINet RGB-D salient object detection"};
  app.require_subcommand(1);

  std::string config_path, variant, data_root, datasets = "toyset", out_dir;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--config", config_path, "flat key=value config file");
  train_cmd->add_option("--variant", variant,
                        "named variant (no1,no2,no3,without_rde,...)");
  train_cmd->add_option("--data-root", data_root, "dataset root directory")
      ->required();
  train_cmd->add_option("--datasets", datasets, "comma-separated dataset names");
  train_cmd->add_option("--out", out_dir, "output directory")->required();

  std::string checkpoint_path, infer_root, infer_datasets = "toyset",
              infer_out;
  int infer_size = 0;
  auto* infer_cmd = app.add_subcommand("infer", "write saliency maps");
  infer_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")
      ->required();
  infer_cmd->add_option("--data-root", infer_root, "dataset root directory")
      ->required();
  infer_cmd->add_option("--datasets", infer_datasets, "dataset names");
  infer_cmd->add_option("--out", infer_out, "output directory")->required();
  infer_cmd->add_option("--size", infer_size,
                        "network input size (default: from checkpoint)");

  std::string pred_dir, gt_dir, eval_out = "report.json", eval_csv, eval_plot,
              eval_name = "dataset";
  auto* eval_cmd = app.add_subcommand("eval", "score saliency maps");
  eval_cmd->add_option("--pred", pred_dir, "prediction directory")->required();
  eval_cmd->add_option("--gt", gt_dir, "ground-truth directory")->required();
  eval_cmd->add_option("--out", eval_out, "report JSON path");
  eval_cmd->add_option("--csv", eval_csv, "also write per-image CSV");
  eval_cmd->add_option("--pr-plot", eval_plot, "also render the PR curve PNG");
  eval_cmd->add_option("--dataset", eval_name, "dataset label in the report");

  std::string bench_variant = "no1";
  bool bench_toy = false;
  int bench_size = 256, bench_runs = 1;
  auto* bench_cmd = app.add_subcommand("bench", "report local forward FPS");
  bench_cmd->add_option("--variant", bench_variant, "named variant");
  bench_cmd->add_flag("--toy", bench_toy, "toy backbone");
  bench_cmd->add_option("--size", bench_size, "input resolution");
  bench_cmd->add_option("--runs", bench_runs, "timed repetitions");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      return cmd_train(config_path, variant, data_root, datasets, out_dir);
    }
    if (infer_cmd->parsed()) {
      return cmd_infer(checkpoint_path, infer_root, infer_datasets, infer_out,
                       infer_size);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(pred_dir, gt_dir, eval_name, eval_out, eval_csv,
                      eval_plot);
    }
    if (bench_cmd->parsed()) {
      return cmd_bench(bench_variant, bench_toy, bench_size, bench_runs);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
