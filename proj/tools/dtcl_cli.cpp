// Command-line front end: training runs, r_+ sweeps and gradient checks.

#include "dtcl/experiment.hpp"

#include <CLI11.hpp>

#include <cstring>
#include <fstream>
#include <iostream>
#include <numeric>

namespace {

// --config is read before the full parse so explicit flags override it.
std::optional<std::string> find_config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--config") == 0 && i + 1 < argc) return std::string(argv[i + 1]);
    if (std::strncmp(argv[i], "--config=", 9) == 0) return std::string(argv[i] + 9);
  }
  return std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  dtcl::ExperimentConfig cfg;
  try {
    if (const auto path = find_config_path(argc, argv)) {
      std::ifstream in(*path);
      if (!in) throw std::runtime_error("cannot open config " + *path);
      cfg = dtcl::experiment_from_json(nlohmann::json::parse(in));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  CLI::App app{"Dual-temperature contrastive learning experiments"};
  std::string config_path;
  app.add_option("--config", config_path, "Resolved config.json from an earlier run");

  std::string mode{to_string(cfg.mode)};
  app.add_option("--mode", mode, "train | entropy-sweep | similarity-sweep | gradcheck")
      ->check(CLI::IsMember({"train", "entropy-sweep", "similarity-sweep", "gradcheck"}));

  auto& fw = cfg.train.framework;
  std::string framework{to_string(fw.framework)};
  app.add_option("--framework", framework)
      ->check(CLI::IsMember({"mocov2", "simmoco", "simco", "st", "noncl", "noncl-simsiam", "noncl-byol"}));
  app.add_option("--tau-alpha", fw.temps.tau_alpha, "Intra-anchor (vector) temperature");
  app.add_option("--tau-beta", fw.temps.tau_beta, "Inter-anchor (scalar) temperature");
  app.add_option("--dict-size-scalar", fw.dict_size_scalar);
  app.add_option("--dict-size-vector", fw.dict_size_vector);
  app.add_option("--sample-count", fw.sample_count, "Negatives drawn from the vector dictionary (0 = all)");
  std::string sampling{to_string(fw.sampling)};
  app.add_option("--sampling", sampling)->check(CLI::IsMember({"earliest", "random", "newest"}));
  app.add_flag("--shared-dictionary", fw.shared_dictionary, "One queue for both gradient factors");
  app.add_option("--momentum", fw.momentum.coefficient, "Momentum encoder EMA coefficient");
  app.add_flag("--symmetric", fw.symmetric);
  app.add_flag("--ha-toggle", fw.ha_toggle, "Enable the inter-anchor hardness factor");

  auto& sch = cfg.train.schedule;
  app.add_option("--epochs", sch.total_epochs);
  app.add_option("--batch-size", sch.batch_size);
  app.add_option("--base-lr", sch.base_lr);
  app.add_option("--warmup-epochs", sch.warmup_epochs);
  app.add_option("--weight-decay", sch.weight_decay);
  app.add_option("--opt-momentum", sch.momentum);
  app.add_option("--probe-lr", cfg.train.linear.base_lr, "Linear-eval base learning rate");
  app.add_option("--embed-dim", cfg.train.network.embed_dim);

  std::size_t seed_count = 0;
  std::vector<std::uint64_t> seed_list;
  app.add_option("--seeds", seed_count, "Run seeds 0..n-1");
  app.add_option("--seed-list", seed_list, "Explicit comma-separated seeds")->delimiter(',');

  auto& ds = cfg.dataset;
  app.add_option("--dataset", ds.kind)->check(CLI::IsMember({"synthetic", "cifar"}));
  app.add_option("--dataset-seed", ds.seed);
  app.add_option("--classes", ds.synthetic.classes);
  app.add_option("--dim", ds.synthetic.dim);
  app.add_option("--noise-scale", ds.synthetic.noise_scale);
  app.add_option("--samples", ds.synthetic.samples);
  app.add_option("--test-samples", ds.synthetic.test_samples);
  app.add_option("--cifar-train", ds.cifar.train_path);
  app.add_option("--cifar-test", ds.cifar.test_path);
  app.add_option("--cifar-variant", ds.cifar.variant)->check(CLI::IsMember({"cifar10", "cifar100"}));
  app.add_option("--view-noise", ds.cifar.view_noise);
  std::string noise_kind;
  double noise_ratio = -1.0;
  app.add_option("--label-noise", noise_kind)->check(CLI::IsMember({"symmetric", "asymmetric"}));
  app.add_option("--label-noise-ratio", noise_ratio);

  auto& sw = cfg.sweep;
  app.add_option("--dict-sizes", sw.sweep.dict_sizes)->delimiter(',');
  app.add_option("--taus", sw.sweep.taus)->delimiter(',');
  app.add_option("--anchors", sw.sweep.num_anchors);
  app.add_option("--sweep-dim", sw.sweep.dim);
  app.add_option("--positive-noise", sw.sweep.positive_noise);
  app.add_option("--checkpoint", sw.checkpoint, "Trained checkpoint used as the sweep embedding source");

  app.add_option("--gradcheck-instances", cfg.gradcheck_instances);
  app.add_flag("--save-checkpoints", cfg.save_checkpoints);
  app.add_option("--out", cfg.out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    cfg.mode = dtcl::parse_mode(mode);
    fw.framework = dtcl::parse_framework(framework);
    fw.sampling = dtcl::parse_sampling_strategy(sampling);
    if (!seed_list.empty()) {
      cfg.seeds = seed_list;
    } else if (seed_count > 0) {
      cfg.seeds.resize(seed_count);
      std::iota(cfg.seeds.begin(), cfg.seeds.end(), std::uint64_t{0});
    }
    if (!noise_kind.empty() || noise_ratio >= 0.0) {
      dtcl::LabelNoiseSpec spec = cfg.dataset.label_noise.value_or(dtcl::LabelNoiseSpec{});
      if (!noise_kind.empty()) spec.kind = dtcl::parse_label_noise_kind(noise_kind);
      if (noise_ratio >= 0.0) spec.ratio = noise_ratio;
      cfg.dataset.label_noise = spec;
    }
    if (app.count("--checkpoint") > 0) sw.source = "checkpoint";
    cfg.train.network.input_dim = ds.kind == "cifar" ? 3072 : ds.synthetic.dim;
    return dtcl::run_experiment(cfg, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
