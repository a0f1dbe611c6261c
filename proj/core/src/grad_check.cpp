#include "effloc/grad_check.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "effloc/errors.hpp"
#include "effloc/loss.hpp"
#include "effloc/model.hpp"

namespace effloc {

double gradient_rel_err(double analytic, double numeric, double floor) {
  const double denom =
      std::max({std::fabs(analytic), std::fabs(numeric), floor});
  return std::fabs(analytic - numeric) / denom;
}

GradCheckReport check_gradients(
    const std::function<Tensor()>& fn,
    const std::vector<std::pair<std::string, Tensor>>& inputs, double h,
    double tolerance, double floor) {
  GradCheckReport report;

  // Analytic pass.
  for (auto& [name, t] : inputs) {
    Tensor(t).zero_grad();
  }
  Tensor loss = fn();
  if (loss.numel() != 1) throw ContractError("check_gradients: loss not scalar");
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& [name, t] : inputs) {
    analytic.push_back(t.has_grad() ? t.grad()
                                    : std::vector<double>(t.numel(), 0.0));
  }

  // Numeric pass: central differences through the forward function only.
  NoGradGuard no_grad;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor t = inputs[ti].second;
    auto& v = t.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + h;
      const double up = fn().item();
      v[i] = saved - h;
      const double down = fn().item();
      v[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[ti][i];
      const double rel = gradient_rel_err(a, numeric, floor);
      report.max_rel_err = std::max(report.max_rel_err, rel);
      ++report.checked;
      if (rel >= tolerance) {
        report.failures.push_back({inputs[ti].first, i, a, numeric, rel});
      }
    }
  }
  return report;
}

namespace {

struct GradCheckProblem {
  Tensor images;
  std::vector<Pose> truth;
};

GradCheckProblem make_problem(const ModelConfig& cfg, std::uint64_t seed,
                              std::size_t batch) {
  GradCheckProblem p;
  Rng rng = Rng(seed).fork(0x66DC);
  p.images = Tensor::uniform(
      {batch, 3, cfg.input_resolution, cfg.input_resolution}, -1.0, 1.0, rng);
  for (std::size_t b = 0; b < batch; ++b) {
    Pose pose;
    pose.position = {rng.uniform(-1, 1), rng.uniform(-1, 1),
                     rng.uniform(-1, 1)};
    pose.orientation = canonicalize(
        quat_exp({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                  rng.uniform(-0.5, 0.5)}));
    p.truth.push_back(pose);
  }
  return p;
}

}  // namespace

GradCheckReport model_grad_check(const ModelConfig& config,
                                 const ModelGradCheckOptions& opts) {
  ModelConfig cfg = config;
  cfg.dropout_p = 0.0;  // finite differences need a deterministic forward
  cfg.validate();

  const GradCheckProblem problem = make_problem(cfg, opts.seed, opts.batch);

  // Analytic gradients on the reference model.
  EffLocModel model(cfg, opts.seed);
  model.set_training(true);
  LossState loss_state = LossState::init();
  model.zero_grad();
  Tensor loss = pose_loss(model.forward(problem.images), problem.truth,
                          loss_state);
  backward(loss);

  // Flattened (parameter, element) enumeration. The loss weights ride along
  // at the end so one pass covers everything trainable.
  struct Entry {
    std::string name;
    std::size_t param_index;  // into params list; loss weights use >= size
    std::size_t offset;
    std::size_t count;
    std::vector<double> analytic;
  };
  std::vector<Entry> entries;
  std::size_t total = 0;
  const auto& params = model.store().params();
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const auto& [name, t] = params[pi];
    Entry e;
    e.name = name;
    e.param_index = pi;
    e.offset = total;
    e.count = t.numel();
    e.analytic = t.has_grad() ? t.grad() : std::vector<double>(t.numel(), 0.0);
    total += e.count;
    entries.push_back(std::move(e));
  }
  auto add_loss_entry = [&](const std::string& name, const Tensor& t,
                            std::size_t tag) {
    Entry e;
    e.name = name;
    e.param_index = params.size() + tag;
    e.offset = total;
    e.count = 1;
    e.analytic = t.has_grad() ? t.grad() : std::vector<double>{0.0};
    total += 1;
    entries.push_back(std::move(e));
  };
  add_loss_entry("loss/alpha", loss_state.alpha, 0);
  add_loss_entry("loss/beta", loss_state.beta, 1);

  std::vector<double> rel_errs(total, 0.0);
  std::vector<double> numerics(total, 0.0);

#ifdef _OPENMP
#pragma omp parallel
#endif
  {
    // Every worker gets its own model built from the same seed, so values
    // match the reference exactly and in-place nudges stay private.
    EffLocModel worker(cfg, opts.seed);
    worker.set_training(true);
    LossState worker_loss = LossState::init();
    NoGradGuard no_grad;

    auto loss_value = [&]() {
      return pose_loss(worker.forward(problem.images), problem.truth,
                       worker_loss)
          .item();
    };
    auto element_of = [&](const Entry& e) -> std::vector<double>& {
      if (e.param_index < params.size()) {
        return Tensor(worker.store().params()[e.param_index].second).values();
      }
      return e.param_index == params.size() ? worker_loss.alpha.values()
                                            : worker_loss.beta.values();
    };

#ifdef _OPENMP
    const std::size_t nthreads = std::size_t(omp_get_num_threads());
    const std::size_t tid = std::size_t(omp_get_thread_num());
#else
    const std::size_t nthreads = 1, tid = 0;
#endif
    const std::size_t chunk = (total + nthreads - 1) / nthreads;
    const std::size_t lo = tid * chunk;
    const std::size_t hi = std::min(total, lo + chunk);

    for (const auto& e : entries) {
      if (e.offset + e.count <= lo || e.offset >= hi) continue;
      std::vector<double>& vals = element_of(e);
      const std::size_t i_lo = lo > e.offset ? lo - e.offset : 0;
      const std::size_t i_hi = std::min(e.count, hi - e.offset);
      for (std::size_t i = i_lo; i < i_hi; ++i) {
        const double saved = vals[i];
        vals[i] = saved + opts.h;
        const double up = loss_value();
        vals[i] = saved - opts.h;
        const double down = loss_value();
        vals[i] = saved;
        const double numeric = (up - down) / (2.0 * opts.h);
        numerics[e.offset + i] = numeric;
        rel_errs[e.offset + i] =
            gradient_rel_err(e.analytic[i], numeric, opts.floor);
      }
    }
  }

  GradCheckReport report;
  report.checked = total;
  for (const auto& e : entries) {
    for (std::size_t i = 0; i < e.count; ++i) {
      const double rel = rel_errs[e.offset + i];
      report.max_rel_err = std::max(report.max_rel_err, rel);
      if (rel >= opts.tolerance) {
        report.failures.push_back(
            {e.name, i, e.analytic[i], numerics[e.offset + i], rel});
      }
    }
  }
  return report;
}

}  // namespace effloc
