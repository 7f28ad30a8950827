#include "dtcl/experiment.hpp"

#include "dtcl/gradcheck.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace dtcl {

Mode parse_mode(std::string_view name) {
  if (name == "train") return Mode::kTrain;
  if (name == "entropy-sweep") return Mode::kEntropySweep;
  if (name == "similarity-sweep") return Mode::kSimilaritySweep;
  if (name == "gradcheck") return Mode::kGradcheck;
  throw std::invalid_argument("unknown mode: " + std::string(name));
}

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::kTrain: return "train";
    case Mode::kEntropySweep: return "entropy-sweep";
    case Mode::kSimilaritySweep: return "similarity-sweep";
    case Mode::kGradcheck: return "gradcheck";
  }
  return "unknown";
}

namespace {

std::string_view to_string(LabelNoiseKind k) {
  return k == LabelNoiseKind::kSymmetric ? "symmetric" : "asymmetric";
}

}  // namespace

void ExperimentConfig::validate() const {
  train.framework.validate();
  train.schedule.validate();
  if (seeds.empty()) throw std::invalid_argument("config: at least one seed is required");
  if (dataset.kind != "synthetic" && dataset.kind != "cifar") {
    throw std::invalid_argument("config: dataset must be synthetic or cifar");
  }
  if (dataset.kind == "synthetic") dataset.synthetic.validate();
  if (dataset.kind == "cifar") {
    parse_cifar_variant(dataset.cifar.variant);
    if (dataset.cifar.train_path.empty() || dataset.cifar.test_path.empty()) {
      throw std::invalid_argument("config: cifar needs train and test paths");
    }
  }
  if (dataset.label_noise &&
      !(dataset.label_noise->ratio >= 0.0 && dataset.label_noise->ratio < 1.0)) {
    throw std::invalid_argument("config: label noise ratio must lie in [0, 1)");
  }
  if (sweep.source != "random" && sweep.source != "checkpoint") {
    throw std::invalid_argument("config: sweep source must be random or checkpoint");
  }
  if (sweep.source == "checkpoint" && sweep.checkpoint.empty()) {
    throw std::invalid_argument("config: checkpoint source needs a checkpoint path");
  }
  if (mode == Mode::kSimilaritySweep && sweep.source != "random") {
    throw std::invalid_argument("config: similarity sweeps redraw keys and need the random source");
  }
}

nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  using J = nlohmann::ordered_json;
  const FrameworkSpec& f = c.train.framework;
  const ScheduleConfig& s = c.train.schedule;
  const NetworkShape& n = c.train.network;
  J j;
  j["mode"] = to_string(c.mode);
  j["framework"] = J{{"name", to_string(f.framework)},
                     {"tau_alpha", f.temps.tau_alpha},
                     {"tau_beta", f.temps.tau_beta},
                     {"symmetric", f.symmetric},
                     {"momentum", f.momentum.coefficient},
                     {"dict_size_scalar", f.dict_size_scalar},
                     {"dict_size_vector", f.dict_size_vector},
                     {"sample_count", f.sample_count},
                     {"sampling", to_string(f.sampling)},
                     {"shared_dictionary", f.shared_dictionary},
                     {"ha_toggle", f.ha_toggle}};
  j["schedule"] = J{{"base_lr", s.base_lr},
                    {"warmup_epochs", s.warmup_epochs},
                    {"total_epochs", s.total_epochs},
                    {"batch_size", s.batch_size},
                    {"weight_decay", s.weight_decay},
                    {"momentum", s.momentum},
                    {"linear_scaling", s.linear_scaling}};
  j["network"] = J{{"input_dim", n.input_dim},
                   {"hidden_dim", n.hidden_dim},
                   {"feature_dim", n.feature_dim},
                   {"projector_hidden", n.projector_hidden},
                   {"embed_dim", n.embed_dim},
                   {"predictor_hidden", n.predictor_hidden}};
  j["linear_eval"] = J{{"optimizer", "sgd"},
                       {"base_lr", c.train.linear.base_lr},
                       {"momentum", c.train.linear.momentum},
                       {"weight_decay", c.train.linear.weight_decay},
                       {"lr_schedule", "backbone schedule shape"}};
  j["diagnostics_sample"] = c.train.diagnostics_sample;
  const DatasetConfig& d = c.dataset;
  J label_noise = nullptr;
  if (d.label_noise) {
    label_noise = J{{"kind", to_string(d.label_noise->kind)}, {"ratio", d.label_noise->ratio}};
  }
  j["dataset"] = J{{"kind", d.kind},
                   {"seed", d.seed},
                   {"synthetic",
                    J{{"classes", d.synthetic.classes},
                      {"dim", d.synthetic.dim},
                      {"noise_scale", d.synthetic.noise_scale},
                      {"samples", d.synthetic.samples},
                      {"test_samples", d.synthetic.test_samples}}},
                   {"cifar",
                    J{{"train_path", d.cifar.train_path},
                      {"test_path", d.cifar.test_path},
                      {"variant", d.cifar.variant},
                      {"view_noise", d.cifar.view_noise}}},
                   {"label_noise", label_noise}};
  j["seeds"] = c.seeds;
  const SweepConfig& w = c.sweep.sweep;
  j["sweep"] = J{{"num_anchors", w.num_anchors},
                 {"dim", w.dim},
                 {"dict_sizes", w.dict_sizes},
                 {"taus", w.taus},
                 {"positive_noise", w.positive_noise},
                 {"source", c.sweep.source},
                 {"checkpoint", c.sweep.checkpoint},
                 {"entropy_unit", "nats"}};
  j["gradcheck_instances"] = c.gradcheck_instances;
  j["save_checkpoints"] = c.save_checkpoints;
  j["out"] = c.out;
  return j;
}

ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.mode = parse_mode(j.at("mode").get<std::string>());
  const auto& f = j.at("framework");
  FrameworkSpec& fs = c.train.framework;
  fs.framework = parse_framework(f.at("name").get<std::string>());
  fs.temps.tau_alpha = f.at("tau_alpha").get<double>();
  fs.temps.tau_beta = f.at("tau_beta").get<double>();
  fs.symmetric = f.at("symmetric").get<bool>();
  fs.momentum.coefficient = f.at("momentum").get<double>();
  fs.dict_size_scalar = f.at("dict_size_scalar").get<std::size_t>();
  fs.dict_size_vector = f.at("dict_size_vector").get<std::size_t>();
  fs.sample_count = f.at("sample_count").get<std::size_t>();
  fs.sampling = parse_sampling_strategy(f.at("sampling").get<std::string>());
  fs.shared_dictionary = f.at("shared_dictionary").get<bool>();
  fs.ha_toggle = f.at("ha_toggle").get<bool>();

  const auto& s = j.at("schedule");
  ScheduleConfig& sc = c.train.schedule;
  sc.base_lr = s.at("base_lr").get<double>();
  sc.warmup_epochs = s.at("warmup_epochs").get<double>();
  sc.total_epochs = s.at("total_epochs").get<int>();
  sc.batch_size = s.at("batch_size").get<int>();
  sc.weight_decay = s.at("weight_decay").get<double>();
  sc.momentum = s.at("momentum").get<double>();
  sc.linear_scaling = s.at("linear_scaling").get<bool>();

  const auto& n = j.at("network");
  NetworkShape& ns = c.train.network;
  ns.input_dim = n.at("input_dim").get<Eigen::Index>();
  ns.hidden_dim = n.at("hidden_dim").get<Eigen::Index>();
  ns.feature_dim = n.at("feature_dim").get<Eigen::Index>();
  ns.projector_hidden = n.at("projector_hidden").get<Eigen::Index>();
  ns.embed_dim = n.at("embed_dim").get<Eigen::Index>();
  ns.predictor_hidden = n.at("predictor_hidden").get<Eigen::Index>();

  const auto& l = j.at("linear_eval");
  c.train.linear.base_lr = l.at("base_lr").get<double>();
  c.train.linear.momentum = l.at("momentum").get<double>();
  c.train.linear.weight_decay = l.at("weight_decay").get<double>();
  c.train.diagnostics_sample = j.at("diagnostics_sample").get<Eigen::Index>();

  const auto& d = j.at("dataset");
  c.dataset.kind = d.at("kind").get<std::string>();
  c.dataset.seed = d.at("seed").get<std::uint64_t>();
  const auto& syn = d.at("synthetic");
  c.dataset.synthetic.classes = syn.at("classes").get<int>();
  c.dataset.synthetic.dim = syn.at("dim").get<Eigen::Index>();
  c.dataset.synthetic.noise_scale = syn.at("noise_scale").get<double>();
  c.dataset.synthetic.samples = syn.at("samples").get<int>();
  c.dataset.synthetic.test_samples = syn.at("test_samples").get<int>();
  const auto& cf = d.at("cifar");
  c.dataset.cifar.train_path = cf.at("train_path").get<std::string>();
  c.dataset.cifar.test_path = cf.at("test_path").get<std::string>();
  c.dataset.cifar.variant = cf.at("variant").get<std::string>();
  c.dataset.cifar.view_noise = cf.at("view_noise").get<double>();
  if (!d.at("label_noise").is_null()) {
    const auto& ln = d.at("label_noise");
    c.dataset.label_noise =
        LabelNoiseSpec{parse_label_noise_kind(ln.at("kind").get<std::string>()), ln.at("ratio").get<double>()};
  }
  c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();

  const auto& w = j.at("sweep");
  c.sweep.sweep.num_anchors = w.at("num_anchors").get<Eigen::Index>();
  c.sweep.sweep.dim = w.at("dim").get<Eigen::Index>();
  c.sweep.sweep.dict_sizes = w.at("dict_sizes").get<std::vector<Eigen::Index>>();
  c.sweep.sweep.taus = w.at("taus").get<std::vector<double>>();
  c.sweep.sweep.positive_noise = w.at("positive_noise").get<double>();
  c.sweep.source = w.at("source").get<std::string>();
  c.sweep.checkpoint = w.at("checkpoint").get<std::string>();
  c.gradcheck_instances = j.at("gradcheck_instances").get<int>();
  c.save_checkpoints = j.at("save_checkpoints").get<bool>();
  c.out = j.at("out").get<std::string>();
  return c;
}

SplitDataset build_dataset(const DatasetConfig& cfg) {
  Rng rng(cfg.seed);
  SplitDataset data;
  if (cfg.kind == "synthetic") {
    data = generate_synthetic_pairs(cfg.synthetic, rng);
  } else {
    const CifarVariant v = parse_cifar_variant(cfg.cifar.variant);
    data.train = make_noisy_views(load_cifar_binary(cfg.cifar.train_path, v), cfg.cifar.view_noise, rng);
    data.test = make_noisy_views(load_cifar_binary(cfg.cifar.test_path, v), cfg.cifar.view_noise, rng);
  }
  if (cfg.label_noise) {
    Rng noise_rng = rng.fork(11);
    data.train.labels =
        inject_label_noise(data.train.labels, data.train.num_classes, *cfg.label_noise, noise_rng);
  }
  return data;
}

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

SweepSampler checkpoint_sampler(const SweepSettings& s, const DatasetConfig& dataset) {
  std::ifstream in(s.checkpoint, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + s.checkpoint);
  const TrainState state = read_checkpoint(in);
  const SplitDataset data = build_dataset(dataset);
  Eigen::MatrixXd x1(data.train.input_dim(), data.train.view1.cols() + data.test.view1.cols());
  Eigen::MatrixXd x2(x1.rows(), x1.cols());
  x1 << data.train.view1, data.test.view1;
  x2 << data.train.view2, data.test.view2;
  return embedding_pool_sampler(forward(state.online, x1).normalized,
                                forward(state.online, x2).normalized);
}

int run_train(const ExperimentConfig& cfg, std::ostream& log) {
  const SplitDataset data = build_dataset(cfg.dataset);
  const std::filesystem::path out(cfg.out);
  std::ofstream summary = open_output(out / "summary.csv");
  summary << "framework,seed,epochs,final_top1,final_loss,final_r_plus_entropy,final_collapse\n";
  summary << std::setprecision(17);
  for (const std::uint64_t seed : cfg.seeds) {
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    TrainState state;
    const MetricLog metrics = run_training(tc, data, &state);
    const std::string stem = std::string(to_string(tc.framework.framework)) + "_seed" + std::to_string(seed);
    std::ofstream jsonl = open_output(out / (stem + ".jsonl"));
    write_metric_log(jsonl, metrics);
    if (cfg.save_checkpoints) {
      std::ofstream ck = open_output(out / (stem + ".ckpt"));
      write_checkpoint(ck, state);
    }
    const EpochMetrics& last = metrics.epochs.back();
    summary << metrics.framework << ',' << seed << ',' << last.epoch << ',' << last.top1 << ',';
    if (last.loss) summary << *last.loss;
    summary << ',' << last.r_plus_entropy << ',' << last.collapse << '\n';
    log << metrics.framework << " seed " << seed << ": top1 " << last.top1 << " after "
        << last.epoch << " epochs\n";
  }
  return 0;
}

int run_sweep(const ExperimentConfig& cfg, std::ostream& log) {
  SweepConfig sc = cfg.sweep.sweep;
  sc.seeds = cfg.seeds;
  std::vector<SweepRow> rows;
  std::string name;
  if (cfg.mode == Mode::kEntropySweep) {
    const SweepSampler sampler = cfg.sweep.source == "checkpoint"
                                     ? checkpoint_sampler(cfg.sweep, cfg.dataset)
                                     : random_sweep_sampler(sc.dim, sc.positive_noise);
    rows = entropy_sweep(sc, sampler);
    name = "entropy_sweep.csv";
  } else {
    rows = similarity_sweep(sc);
    name = "similarity_sweep.csv";
  }
  std::ofstream csv = open_output(std::filesystem::path(cfg.out) / name);
  write_sweep_csv(csv, rows);
  for (const double tau : sc.taus) {
    for (const Eigen::Index k : sc.dict_sizes) {
      log << "K=" << k << " tau=" << tau << " mean=" << sweep_mean(rows, k, tau) << '\n';
    }
  }
  return 0;
}

int run_gradcheck_mode(const ExperimentConfig& cfg, std::ostream& log) {
  const auto items = run_gradcheck(cfg.seeds.front(), cfg.gradcheck_instances);
  std::ofstream csv = open_output(std::filesystem::path(cfg.out) / "gradcheck.csv");
  csv << "name,instances,max_relative_error\n" << std::setprecision(6);
  bool ok = true;
  for (const auto& it : items) {
    csv << it.name << ',' << it.instances << ',' << it.max_relative_error << '\n';
    const bool pass = it.max_relative_error <= 1e-4;
    ok = ok && pass;
    log << (pass ? "ok   " : "FAIL ") << it.name << " max relative error " << it.max_relative_error
        << " over " << it.instances << " instances\n";
  }
  return ok ? 0 : 1;
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out);
  {
    std::ofstream echo = open_output(std::filesystem::path(cfg.out) / "config.json");
    echo << to_json(cfg).dump(2) << '\n';
  }
  switch (cfg.mode) {
    case Mode::kTrain: return run_train(cfg, log);
    case Mode::kEntropySweep:
    case Mode::kSimilaritySweep: return run_sweep(cfg, log);
    case Mode::kGradcheck: return run_gradcheck_mode(cfg, log);
  }
  return 1;
}

}  // namespace dtcl
