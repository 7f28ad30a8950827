#include "dtcl/gradcheck.hpp"

#include "dtcl/gradients.hpp"
#include "dtcl/losses.hpp"
#include "dtcl/trainer.hpp"

#include <algorithm>
#include <array>
#include <functional>

namespace dtcl {

double relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric,
                      double floor) {
  return (analytic - numeric).norm() / std::max(numeric.norm(), floor);
}

namespace {

constexpr std::array<double, 3> kTaus{0.05, 0.1, 0.5};

ContrastiveInstance<double> random_instance(Rng& rng, Eigen::Index dim, Eigen::Index k) {
  return {rng.unit_vector(dim), rng.unit_vector(dim), rng.unit_vectors(dim, k)};
}

Eigen::VectorXd stack(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::VectorXd v(a.size() + b.size());
  v << a.reshaped(), b.reshaped();
  return v;
}

// W_beta / W_alpha per row of S = A^T C, recomputed here rather than taken
// from the loss under test.
Eigen::VectorXd frozen_ratios(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c, double tau_a,
                              double tau_b) {
  const Eigen::MatrixXd s = a.transpose() * c;
  Eigen::VectorXd r(s.rows());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const Eigen::VectorXd row = s.row(i).transpose();
    const Eigen::VectorXd pa = tempered_softmax(row, tau_a);
    const Eigen::VectorXd pb = tempered_softmax(row, tau_b);
    r(i) = (pb.sum() - pb(i)) / (pa.sum() - pa(i));
  }
  return r;
}

double weighted_nll(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c, const Eigen::VectorXd& w,
                    double tau) {
  const Eigen::MatrixXd s = a.transpose() * c / tau;
  double total = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    total += w(i) * neg_log_softmax_at(Eigen::VectorXd(s.row(i).transpose()), i);
  }
  return total / static_cast<double>(s.rows());
}

void track(GradcheckItem& item, double err) {
  ++item.instances;
  item.max_relative_error = std::max(item.max_relative_error, err);
}

EncoderParams smooth_fixture(bool with_predictor, Rng& rng) {
  NetworkShape shape{6, 5, 5, 4, 3, 3};
  EncoderParams p = init_encoder(shape, with_predictor, rng);
  auto smooth = [&rng](Mlp& m) {
    for (auto& l : m.layers) {
      if (l.activation == Activation::kRelu) l.activation = Activation::kTanh;
      l.bias = 0.1 * rng.normal_vector(l.bias.size());
    }
  };
  smooth(p.backbone);
  smooth(p.projector);
  if (p.predictor) smooth(*p.predictor);
  return p;
}

}  // namespace

std::vector<GradcheckItem> run_gradcheck(std::uint64_t seed, int instances, double h) {
  Rng rng(seed);
  GradcheckItem infonce{"infonce_loss"}, simple{"simple_loss"}, dt{"dt_loss"},
      dt_sym{"dt_loss_symmetric"}, decomposed{"decomposed_batch_loss"}, noncl{"noncl_loss"},
      ce{"ce_loss"}, ce_dt{"ce_dt_loss"};

  for (int t = 0; t < instances; ++t) {
    const double tau = kTaus[static_cast<std::size_t>(t) % kTaus.size()];
    const ContrastiveInstance<double> inst = random_instance(rng, 16, 32);

    const Eigen::VectorXd fd_info = fd_gradient(
        [&](const Eigen::VectorXd& q) {
          return infonce_loss(ContrastiveInstance<double>{q, inst.positive, inst.negatives}, tau);
        },
        inst.query, h);
    track(infonce, relative_error(infonce_grad(inst, tau).full_grad, fd_info));

    const Eigen::VectorXd fd_simple = fd_gradient(
        [&](const Eigen::VectorXd& q) {
          return simple_loss(ContrastiveInstance<double>{q, inst.positive, inst.negatives});
        },
        inst.query, h);
    track(simple, relative_error(simple_grad(inst), fd_simple));

    // Batch losses: gradients on both queries and keys, ratios frozen.
    const Eigen::Index n = 8, d = 16;
    const Eigen::MatrixXd q = rng.unit_vectors(d, n);
    const Eigen::MatrixXd k = rng.unit_vectors(d, n);
    const DualTempConfig temps{tau, kTaus[static_cast<std::size_t>(t + 1) % kTaus.size()] * 4};
    auto unstack = [&](const Eigen::VectorXd& v, Eigen::MatrixXd& a, Eigen::MatrixXd& b) {
      a = v.head(d * n).reshaped(d, n);
      b = v.tail(d * n).reshaped(d, n);
    };
    const Eigen::VectorXd rq = frozen_ratios(q, k, temps.tau_alpha, temps.tau_beta);
    const Eigen::VectorXd rk = frozen_ratios(k, q, temps.tau_alpha, temps.tau_beta);
    for (const bool symmetric : {false, true}) {
      const BatchLoss<double> bl = dt_loss_with_grad(BatchPair<double>{q, k}, temps, symmetric);
      const Eigen::VectorXd fd = fd_gradient(
          [&](const Eigen::VectorXd& v) {
            Eigen::MatrixXd a, b;
            unstack(v, a, b);
            if (!symmetric) return weighted_nll(a, b, rq, temps.tau_alpha);
            return 0.5 * (weighted_nll(a, b, rq, temps.tau_alpha) +
                          weighted_nll(b, a, rk, temps.tau_alpha));
          },
          stack(q, k), h);
      track(symmetric ? dt_sym : dt, relative_error(stack(bl.grad_queries, bl.grad_keys), fd));
    }

    // Dictionary negatives: scalar and vector factors from different key sets.
    {
      const Eigen::MatrixXd pos = rng.unit_vectors(d, n);
      const Eigen::MatrixXd neg_s = rng.unit_vectors(d, 24);
      const Eigen::MatrixXd neg_v = rng.unit_vectors(d, 12);
      const BatchLoss<double> bl = decomposed_batch_loss<double>(q, pos, neg_s, neg_v, temps);
      const Eigen::VectorXd fd = fd_gradient(
          [&](const Eigen::VectorXd& v) {
            const Eigen::MatrixXd qq = v.reshaped(d, n);
            double total = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
              Eigen::VectorXd logits(neg_v.cols() + 1);
              logits(0) = qq.col(i).dot(pos.col(i));
              logits.tail(neg_v.cols()) = neg_v.transpose() * qq.col(i);
              total += bl.ratios(i) * neg_log_softmax_at(Eigen::VectorXd(logits / temps.tau_alpha), 0);
            }
            return total / static_cast<double>(n);
          },
          Eigen::VectorXd(q.reshaped()), h);
      track(decomposed, relative_error(Eigen::VectorXd(bl.grad_queries.reshaped()), fd));
    }

    {
      const Eigen::VectorXd predicted = (0.5 + 2.0 * rng.uniform()) * rng.unit_vector(d);
      const Eigen::VectorXd target = rng.unit_vector(d);
      const double ha = rng.uniform();
      const auto out = noncl_loss<double>(predicted, target, ha);
      const Eigen::VectorXd fd = fd_gradient(
          [&](const Eigen::VectorXd& p) { return noncl_loss<double>(p, target, ha).loss; },
          predicted, h);
      track(noncl, relative_error(out.grad_predicted, fd));
    }

    {
      const LogitInstance<double> li{rng.normal_vector(10), static_cast<Eigen::Index>(rng.index(10))};
      const auto plain = ce_loss_with_grad(li, tau);
      const Eigen::VectorXd fd_plain = fd_gradient(
          [&](const Eigen::VectorXd& z) { return ce_loss(LogitInstance<double>{z, li.gt_index}, tau); },
          li.logits, h);
      track(ce, relative_error(plain.grad_logits, fd_plain));

      const auto dual = ce_dt_loss_with_grad(li, temps);
      const Eigen::VectorXd fd_dual = fd_gradient(
          [&](const Eigen::VectorXd& z) {
            return dual.ratio * neg_log_softmax_at(Eigen::VectorXd(z / temps.tau_alpha), li.gt_index);
          },
          li.logits, h);
      track(ce_dt, relative_error(dual.grad_logits, fd_dual));
    }
  }

  // Trainer parameter gradients. Only objectives without a parameter
  // dependent stop-gradient factor are differenced end to end.
  struct Case {
    const char* name;
    FrameworkSpec spec;
  };
  std::vector<Case> cases;
  {
    FrameworkSpec st{Framework::kSingleTemp, {0.2, 0.2}, true};
    FrameworkSpec simco{Framework::kSimCo, {0.3, 0.3}, true};
    FrameworkSpec simmoco{Framework::kSimMoCo, {0.2, 0.2}, true};
    FrameworkSpec moco{Framework::kMocoV2, {0.2, 0.2}, false};
    moco.dict_size_vector = 16;
    moco.sample_count = 8;
    moco.shared_dictionary = true;
    FrameworkSpec byol{Framework::kNonClByol, {0.1, 1.0}, true};
    cases = {{"trainer_st", st},
             {"trainer_simco", simco},
             {"trainer_simmoco", simmoco},
             {"trainer_mocov2", moco},
             {"trainer_noncl_byol", byol}};
  }
  std::vector<GradcheckItem> items{infonce, simple, dt, dt_sym, decomposed, noncl, ce, ce_dt};
  const int param_instances = std::max(1, instances / 10);
  for (const auto& c : cases) {
    GradcheckItem item{c.name};
    for (int t = 0; t < param_instances; ++t) {
      TrainState state;
      state.online = smooth_fixture(uses_predictor(c.spec.framework), rng);
      if (uses_momentum_encoder(c.spec.framework)) {
        EncoderParams target = smooth_fixture(false, rng);
        state.momentum_copy = std::move(target);
      }
      if (uses_queues(c.spec.framework)) {
        state.queue_scalar.emplace(c.spec.dict_size_vector, 3);
        state.queue_vector.emplace(c.spec.dict_size_vector, 3);
        const Eigen::MatrixXd keys = rng.unit_vectors(3, 16);
        state.queue_scalar->push(keys, 0);
        state.queue_vector->push(keys, 0);
      }
      const Eigen::MatrixXd x1 = rng.normal_matrix(6, 5);
      const Eigen::MatrixXd x2 = rng.normal_matrix(6, 5);
      const Rng sample_rng = rng.fork(static_cast<std::uint64_t>(t));
      Rng r0 = sample_rng;
      const ObjectiveResult base = objective(state, c.spec, x1, x2, r0);
      const Eigen::VectorXd fd = fd_gradient(
          [&](const Eigen::VectorXd& theta) {
            TrainState probe = state;
            unflatten(theta, probe.online);
            Rng r = sample_rng;
            return objective(probe, c.spec, x1, x2, r).loss;
          },
          flatten(state.online), h);
      track(item, relative_error(flatten(base.grads), fd));
    }
    items.push_back(item);
  }
  return items;
}

}  // namespace dtcl
