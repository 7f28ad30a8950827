// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.
// Usage: dtcl_acceptance [criterion numbers...]

#include "dtcl/analysis.hpp"
#include "dtcl/dictionary.hpp"
#include "dtcl/gradcheck.hpp"
#include "dtcl/gradients.hpp"
#include "dtcl/losses.hpp"
#include "dtcl/trainer.hpp"

#include "oracle.hpp"

#include <array>
#include <chrono>
#include <cstdio>
#include <deque>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

using namespace dtcl;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Inst = ContrastiveInstance<double>;

Inst random_instance(Rng& rng, Eigen::Index d, Eigen::Index k) {
  return {rng.unit_vector(d), rng.unit_vector(d), rng.unit_vectors(d, k)};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

constexpr std::array<double, 3> kTaus{0.05, 0.1, 0.5};

Outcome gradient_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Inst inst = random_instance(rng, 16, 32);
    const double tau = kTaus[static_cast<std::size_t>(t) % 3];
    const auto d = decomposed_loss(inst, inst, DualTempConfig{tau, tau});
    worst = std::max(worst, (d.grad - infonce_grad(inst, tau).full_grad).cwiseAbs().maxCoeff());
    worst = std::max(worst, (d.grad - oracle::infonce_grad(inst.query, inst.positive, inst.negatives, tau))
                                .cwiseAbs()
                                .maxCoeff());
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 1.0, fmt("max abs diff %.3g, %.3f s", worst, secs)};
}

Outcome finite_differences() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto items = run_gradcheck(202, 50, 1e-4);
  const double secs = seconds_since(t0);
  bool ok = secs < 10.0;
  std::string detail;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& it : items) {
    ok = ok && it.instances > 0 && it.max_relative_error <= 1e-4;
    if (it.max_relative_error >= worst) {
      worst = it.max_relative_error;
      worst_name = it.name;
    }
  }
  return {ok, std::to_string(items.size()) + " checks, worst " + worst_name + fmt(" %.3g, %.2f s", worst, secs)};
}

Outcome single_temperature_reduction() {
  Rng rng(303);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.index(30));
    const BatchPair<double> b{rng.unit_vectors(16, n), rng.unit_vectors(16, n)};
    const double tau = kTaus[static_cast<std::size_t>(t) % 3];
    for (const bool sym : {false, true}) {
      worst = std::max(worst, std::abs(dt_loss(b, DualTempConfig{tau, tau}, sym) -
                                       infonce_batch_loss(b, tau, sym)));
    }
    // Independent per-anchor InfoNCE evaluation.
    double ref = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::MatrixXd negs(16, n - 1);
      for (Eigen::Index j = 0, c = 0; j < n; ++j) {
        if (j != i) negs.col(c++) = b.keys.col(j);
      }
      ref += oracle::infonce(b.queries.col(i), b.keys.col(i), negs, tau);
    }
    worst = std::max(worst, std::abs(dt_loss(b, DualTempConfig{tau, tau}) - ref / static_cast<double>(n)));
  }
  return {worst <= 1e-12, fmt("max abs diff %.3g over 100 batches", worst)};
}

Outcome ce_equivalence() {
  Rng rng(404);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Eigen::Index c = 2 + static_cast<Eigen::Index>(rng.index(20));
    const LogitInstance<double> li{3.0 * rng.normal_vector(c),
                                   static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(c)))};
    const double tau = 0.05 + 2.0 * rng.uniform();
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(c, c);
    Inst inst{li.logits, eye.col(li.gt_index), Eigen::MatrixXd(c, c - 1)};
    for (Eigen::Index j = 0, at = 0; j < c; ++j) {
      if (j != li.gt_index) inst.negatives.col(at++) = eye.col(j);
    }
    worst = std::max(worst, std::abs(ce_loss(li, tau) - infonce_loss(inst, tau)));
  }
  return {worst <= 1e-12, fmt("max abs diff %.3g over 1000 logit vectors", worst)};
}

Outcome anchor_weight_invariants() {
  Rng rng(505);
  int violations = 0;
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Inst inst = random_instance(rng, 16, 1 + static_cast<Eigen::Index>(rng.index(40)));
    const double tau = 0.05 + rng.uniform();
    const auto w = prob_weights(inst, tau);
    worst = std::max({worst, std::abs(w.scalar_sum - (1.0 - w.p_pos)), std::abs(w.p_hat.sum() - 1.0)});
  }
  for (int t = 0; t < 1000; ++t) {
    const Inst inst = random_instance(rng, 16, 8);
    const auto w = prob_weights(inst, 0.05 + rng.uniform());
    const Eigen::VectorXd dots = inst.negatives.transpose() * inst.query;
    for (Eigen::Index a = 0; a < 8; ++a) {
      for (Eigen::Index b = 0; b < 8; ++b) {
        if (dots(a) > dots(b) + 1e-9 && !(w.p_neg(a) > w.p_neg(b))) ++violations;
      }
    }
  }
  // Harder anchor: lowering the positive similarity raises the negative mass.
  for (int t = 0; t < 1000; ++t) {
    Inst inst = random_instance(rng, 16, 8);
    const double tau = 0.05 + rng.uniform();
    const double before = prob_weights(inst, tau).scalar_sum;
    const Eigen::VectorXd away = l2_normalize(Eigen::VectorXd(inst.positive - 0.5 * inst.query));
    if (!(away.dot(inst.query) < inst.positive.dot(inst.query))) continue;
    inst.positive = away;
    if (!(prob_weights(inst, tau).scalar_sum >= before - 1e-9)) ++violations;
  }
  return {worst <= 1e-9 && violations == 0,
          fmt("max identity error %.3g, %.0f monotonicity violations", worst, violations)};
}

Outcome entropy_trend() {
  const auto t0 = std::chrono::steady_clock::now();
  SweepConfig cfg;
  cfg.num_anchors = 256;
  cfg.dim = 32;
  for (std::uint64_t s = 0; s < 20; ++s) cfg.seeds.push_back(s);
  cfg.dict_sizes = {64, 256, 1024, 4096};
  cfg.taus = {0.1};
  const auto by_k = entropy_sweep(cfg);
  cfg.dict_sizes = {1024};
  cfg.taus = {0.07, 0.1, 0.5, 1.0};
  const auto by_tau = entropy_sweep(cfg);
  const double secs = seconds_since(t0);

  bool ok = secs < 30.0;
  std::ostringstream d;
  d.precision(10);
  double prev = -1.0;
  d << "K:";
  for (const Eigen::Index k : {64, 256, 1024, 4096}) {
    const double m = sweep_mean(by_k, k, 0.1);
    ok = ok && m > prev;
    prev = m;
    d << ' ' << m;
  }
  prev = -1.0;
  d << "; tau:";
  for (const double tau : {0.07, 0.1, 0.5, 1.0}) {
    const double m = sweep_mean(by_tau, 1024, tau);
    ok = ok && m > prev;
    prev = m;
    d << ' ' << m;
  }
  d << "; " << fmt("%.2f s", secs);
  return {ok, d.str()};
}

Outcome similarity_trend() {
  SweepConfig cfg;
  cfg.num_anchors = 256;
  cfg.dim = 32;
  for (std::uint64_t s = 0; s < 20; ++s) cfg.seeds.push_back(s);
  cfg.dict_sizes = {64, 4096};
  cfg.taus = {0.1};
  const auto rows = similarity_sweep(cfg);
  const double lo = sweep_mean(rows, 64, 0.1), hi = sweep_mean(rows, 4096, 0.1);
  return {hi - lo >= 0.05, fmt("K=64 %.4f, K=4096 %.4f, gap %.4f", lo, hi, hi - lo)};
}

// Shared desk-scale setup for the training criteria.
constexpr double kNoiseScale = 2.5;
constexpr double kBaseLr = 0.3;
// Queue staleness only matters when the encoder drifts within a queue length.
constexpr double kMocoBaseLr = 10.0;

SplitDataset desk_dataset() {
  SyntheticSpec spec{32, 64, kNoiseScale, 4096, 1024};
  Rng rng(1234);
  return generate_synthetic_pairs(spec, rng);
}

TrainConfig desk_config(Framework f, double tau_a, double tau_b) {
  TrainConfig cfg;
  cfg.framework.framework = f;
  cfg.framework.temps = {tau_a, tau_b};
  cfg.network.input_dim = 64;
  cfg.schedule.batch_size = 128;
  cfg.schedule.total_epochs = 30;
  cfg.schedule.base_lr = kBaseLr;
  return cfg;
}

struct RunSummary {
  double top1 = 0.0;
  double collapse = 0.0;
};

RunSummary mean_over_seeds(TrainConfig cfg, const SplitDataset& data, std::ostream& log,
                           const std::string& label) {
  RunSummary s;
  log << "  " << label << ':';
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    cfg.seed = seed;
    const MetricLog m = run_training(cfg, data);
    s.top1 += m.epochs.back().top1 / 3.0;
    s.collapse += m.epochs.back().collapse / 3.0;
    log << ' ' << m.epochs.back().top1;
  }
  log << "  mean " << s.top1 << '\n';
  return s;
}

Outcome temperature_ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  const SplitDataset data = desk_dataset();
  std::ostringstream log;
  log.precision(4);
  const double dt = mean_over_seeds(desk_config(Framework::kSimCo, 0.1, 1.0), data, log, "DT(0.1,1.0)").top1;
  const double st01 = mean_over_seeds(desk_config(Framework::kSimCo, 0.1, 0.1), data, log, "ST(0.1)").top1;
  const double st1 = mean_over_seeds(desk_config(Framework::kSimCo, 1.0, 1.0), data, log, "ST(1.0)").top1;
  const double rev = mean_over_seeds(desk_config(Framework::kSimCo, 1.0, 0.1), data, log, "DT(1.0,0.1)").top1;
  const double secs = seconds_since(t0);
  std::cout << log.str();
  const bool ok = dt > st01 && st01 > st1 && rev <= st1 + 0.02 && secs < 600.0;
  return {ok, fmt("DT %.4f, ST0.1 %.4f, ST1 %.4f, ", dt, st01, st1) + fmt("reverse %.4f, %.0f s", rev, secs)};
}

Outcome sampling_ordering() {
  const SplitDataset data = desk_dataset();
  std::ostringstream log;
  log.precision(4);
  std::map<SamplingStrategy, RunSummary> res;
  for (const auto s : {SamplingStrategy::kEarliest, SamplingStrategy::kRandom, SamplingStrategy::kNewest}) {
    TrainConfig cfg = desk_config(Framework::kMocoV2, 0.2, 0.2);
    cfg.framework.dict_size_scalar = 1024;
    cfg.framework.dict_size_vector = 1024;
    cfg.framework.sample_count = 128;
    cfg.framework.shared_dictionary = true;
    cfg.framework.sampling = s;
    cfg.framework.momentum.coefficient = 0.99;
    cfg.schedule.base_lr = kMocoBaseLr;
    res[s] = mean_over_seeds(cfg, data, log, std::string(to_string(s)));
  }
  std::cout << log.str();
  const RunSummary e = res[SamplingStrategy::kEarliest];
  const double chance = 1.0 / 32.0;
  const bool collapsed = e.collapse >= 0.9 || e.top1 <= 2.0 * chance;
  const bool ok = res[SamplingStrategy::kNewest].top1 >= res[SamplingStrategy::kRandom].top1 && collapsed;
  return {ok, fmt("newest %.4f, random %.4f, earliest top1 %.4f collapse %.4f",
                  res[SamplingStrategy::kNewest].top1, res[SamplingStrategy::kRandom].top1, e.top1, e.collapse)};
}

Outcome hardness_toggle() {
  const SplitDataset data = desk_dataset();
  std::ostringstream log;
  log.precision(4);
  TrainConfig simco = desk_config(Framework::kSimCo, 0.1, 1.0);
  const double simco_off = mean_over_seeds(simco, data, log, "simco").top1;
  simco.framework.ha_toggle = true;
  const double simco_on = mean_over_seeds(simco, data, log, "simco+ha").top1;
  TrainConfig noncl = desk_config(Framework::kNonClSimSiam, 0.1, 1.0);
  noncl.framework.symmetric = true;
  const double noncl_off = mean_over_seeds(noncl, data, log, "noncl").top1;
  noncl.framework.ha_toggle = true;
  const double noncl_on = mean_over_seeds(noncl, data, log, "noncl+ha").top1;
  std::cout << log.str();
  return {simco_on < simco_off && noncl_on < noncl_off,
          fmt("simco %.4f -> %.4f, noncl %.4f -> %.4f", simco_off, simco_on, noncl_off, noncl_on)};
}

Outcome queue_and_ema() {
  // Reference model: a list of (id, tag) capped at the capacity.
  const std::size_t cap = 53;
  QueueDictionary q(cap, 1);
  std::deque<std::pair<double, std::int64_t>> model;
  Rng rng(1111), sample_rng(1112);
  double next = 0.0;
  std::int64_t tag = 0;
  int mismatches = 0;
  for (int op = 0; op < 10000; ++op) {
    if (model.empty() || rng.uniform() < 0.5) {
      const auto b = static_cast<Eigen::Index>(1 + rng.index(20));
      tag += static_cast<std::int64_t>(rng.index(2));
      Eigen::MatrixXd keys(1, b);
      for (Eigen::Index c = 0; c < b; ++c) {
        keys(0, c) = next;
        model.emplace_back(next++, tag);
      }
      q.push(keys, tag);
      while (model.size() > cap) model.pop_front();
    } else {
      const std::size_t count = 1 + static_cast<std::size_t>(rng.index(model.size()));
      const auto strategy = static_cast<SamplingStrategy>(rng.index(3));
      const auto s = q.sample(strategy, count, sample_rng);
      if (static_cast<std::size_t>(s.keys.cols()) != count) {
        ++mismatches;
        continue;
      }
      const std::size_t off = strategy == SamplingStrategy::kNewest ? model.size() - count : 0;
      if (strategy == SamplingStrategy::kRandom) {
        std::vector<double> got(s.keys.data(), s.keys.data() + s.keys.size());
        std::sort(got.begin(), got.end());
        if (std::adjacent_find(got.begin(), got.end()) != got.end()) ++mismatches;
        for (const double g : got) {
          if (g < model.front().first || g > model.back().first) ++mismatches;
        }
      } else {
        for (std::size_t i = 0; i < count; ++i) {
          if (s.keys(0, static_cast<Eigen::Index>(i)) != model[off + i].first ||
              s.tags[i] != model[off + i].second) {
            ++mismatches;
          }
        }
      }
    }
    if (q.size() != model.size()) ++mismatches;
  }

  const std::vector<double> online{1.5, -2.0, 0.25};
  std::vector<double> target{7.0, 8.0, 9.0};
  const std::vector<double> original = target;
  momentum_update(online, target, MomentumConfig{1.0});
  const bool keep = target == original;
  momentum_update(online, target, MomentumConfig{0.0});
  const bool copy = target == online;
  const bool ok = mismatches == 0 && keep && copy;
  return {ok, fmt("%.0f queue mismatches; ema m=1 keeps target %.0f, m=0 copies online %.0f", mismatches, keep,
                  copy)};
}

Outcome determinism() {
  SyntheticSpec spec{8, 16, 1.0, 512, 128};
  Rng data_rng(77);
  const SplitDataset data = generate_synthetic_pairs(spec, data_rng);
  std::string first;
  bool ok = true;
  for (const auto f : {Framework::kMocoV2, Framework::kSimCo, Framework::kNonClByol}) {
    TrainConfig cfg;
    cfg.framework.framework = f;
    cfg.framework.dict_size_scalar = 256;
    cfg.framework.dict_size_vector = 256;
    cfg.framework.sample_count = 64;
    cfg.network = NetworkShape{16, 32, 32, 32, 16, 16};
    cfg.schedule.batch_size = 64;
    cfg.schedule.total_epochs = 3;
    cfg.schedule.warmup_epochs = 1;
    cfg.seed = 5;
    std::ostringstream a, b;
    write_metric_log(a, run_training(cfg, data));
    write_metric_log(b, run_training(cfg, data));
    ok = ok && a.str() == b.str() && !a.str().empty();
  }
  return {ok, ok ? "byte-identical logs for mocov2, simco, noncl-byol" : "logs differ"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient identity", gradient_identity},
      {"finite-difference validation", finite_differences},
      {"single-temperature reduction", single_temperature_reduction},
      {"CE equivalence", ce_equivalence},
      {"anchor weight invariants", anchor_weight_invariants},
      {"r+ entropy trend", entropy_trend},
      {"r+ resampling similarity trend", similarity_trend},
      {"temperature ordering", temperature_ordering},
      {"sampling strategy ordering", sampling_ordering},
      {"inter-anchor hardness toggle", hardness_toggle},
      {"queue and EMA properties", queue_and_ema},
      {"determinism", determinism},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::stoi(argv[i]));
  if (selected.empty()) {
    for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) selected.push_back(i);
  }
  int failures = 0;
  for (const int n : selected) {
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::cerr << "unknown criterion " << n << '\n';
      return 2;
    }
    const auto& [name, run] = criteria[static_cast<std::size_t>(n - 1)];
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << n << ". " << name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
