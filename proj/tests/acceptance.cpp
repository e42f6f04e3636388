// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "aastereo/cli.hpp"
#include "aastereo/complexity.hpp"
#include "aastereo/cross_scale.hpp"
#include "aastereo/disparity_head.hpp"
#include "aastereo/gradcheck_suite.hpp"
#include "aastereo/intra_scale.hpp"
#include "aastereo/trainer.hpp"

using namespace aastereo;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
}

Outcome complexity_ratio() {
  const auto t0 = Clock::now();
  std::ostringstream out, err;
  const int code = cli::run({"complexity", "--k", "3", "--c", "64", "--d", "64"}, out, err);
  const ComplexityReport r = compute_complexity({3, 64, 64, 1, 1, 1});
  const double t = seconds_since(t0);
  std::ostringstream d;
  d << "F_def/F_3d=" << r.fdef << "/" << r.f3d << " (" << r.ratio_num << "/" << r.ratio_den
    << "), " << t << " s";
  const bool ok = code == 0 && r.fdef == 54144 && r.f3d == 7077888 && r.ratio_at_most(1, 130) &&
                  out.str().find("ratio_at_most_1_130=true") != std::string::npos && t < 1.0;
  return {ok, d.str()};
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  std::ostringstream out, err;
  const int code = cli::run({"gradcheck", "all"}, out, err);
  double worst = 0.0;
  for (const auto& name : gradcheck_suite_names()) {
    const auto c = make_gradcheck_case(name);
    worst = std::max(worst, finite_difference_check(c.op, c.inputs, c.options).max_relative_error);
  }
  const double t = seconds_since(t0);
  std::ostringstream d;
  d << gradcheck_suite_names().size() << " operators, max relative error " << worst << ", " << t
    << " s";
  return {code == 0 && worst < 1e-4 && t < 60.0, d.str()};
}

Outcome degenerate_equivalence() {
  std::mt19937_64 rng(50);
  std::uniform_int_distribution<std::size_t> size(3, 12), dil(1, 3), half(1, 3);
  std::uniform_real_distribution<double> mod_dist(0.1, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 2 * half(rng) + 1, r = dil(rng), groups = trial % 2 ? 2 : 1;
    const std::size_t depth = 2 * groups, h = size(rng), w = size(rng);
    SamplingGrid grid{k, r, groups};
    const std::size_t kk = k * k;
    const double m = mod_dist(rng);
    Tensor vol = random_uniform({depth, h, w}, -1, 1, rng);
    Tensor off({groups * kk * 2, h, w});
    Tensor mod({groups * kk, h, w}, m);
    Tensor weights({kk}, 1.0 / (m * static_cast<double>(kk)));
    WindowAggregationParams window;
    window.kernel = k;
    window.dilation = r;
    window.border = BorderMode::kZero;
    worst = std::max(worst, max_abs_diff(deform_aggregate_forward(vol, off, mod, weights, grid),
                                         window_aggregate(vol, window)));
  }
  std::ostringstream d;
  d << "50 volumes, max abs difference " << worst;
  return {worst <= 1e-12, d.str()};
}

Outcome cross_scale_solver() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-5, 5);
  double solve_err = 0.0, row_err = 0.0;
  bool identity = true;
  for (std::size_t n : {2u, 3u, 4u}) {
    for (double lambda : {0.0, 0.1, 1.0, 10.0}) {
      std::vector<double> v(n);
      for (auto& x : v) x = u(rng);
      const auto sol = solve_cross_scale({v, lambda});
      Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
      for (std::size_t s = 1; s < n; ++s) {
        a(s, s) += lambda;
        a(s - 1, s - 1) += lambda;
        a(s, s - 1) -= lambda;
        a(s - 1, s) -= lambda;
      }
      const Eigen::VectorXd ref = a.partialPivLu().solve(Eigen::Map<Eigen::VectorXd>(v.data(), n));
      for (std::size_t i = 0; i < n; ++i) {
        solve_err = std::max(solve_err, std::abs(sol.v_hat[i] - ref(i)));
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          row += sol.P(i, j);
          if (lambda == 0.0 && sol.P(i, j) != (i == j ? 1.0 : 0.0)) identity = false;
        }
        row_err = std::max(row_err, std::abs(row - 1.0));
      }
      if (lambda == 0.0 && sol.v_hat != v) identity = false;
    }
  }
  std::ostringstream d;
  d << "max solve error " << solve_err << ", max row-sum error " << row_err
    << ", lambda=0 identity " << (identity ? "exact" : "inexact");
  return {solve_err <= 1e-10 && row_err <= 1e-12 && identity, d.str()};
}

Outcome soft_argmin_oracle() {
  std::mt19937_64 rng(100);
  std::uniform_int_distribution<std::size_t> len(2, 64);
  std::uniform_real_distribution<double> cost(-10, 10);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = len(rng);
    std::vector<double> c(n);
    for (auto& x : c) x = cost(rng);
    double mx = c[0];
    for (double x : c) mx = std::max(mx, x);
    double z = 0.0, e = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = std::exp(c[i] - mx);
      z += w;
      e += static_cast<double>(i) * w;
    }
    worst = std::max(worst, std::abs(soft_argmin_forward(Tensor({n, 1, 1}, c))[0] - e / z));
  }
  bool uniform = true;
  for (std::size_t n : {1u, 2u, 7u, 24u, 64u}) {
    const double mid = static_cast<double>(n - 1) / 2.0;
    const Tensor out = soft_argmin_forward(Tensor({n, 2, 3}, 0.3));
    for (double v : out.data()) uniform &= v == mid;
  }
  std::ostringstream d;
  d << "100 vectors, max error " << worst << ", uniform costs "
    << (uniform ? "exactly (D-1)/2" : "off");
  return {worst <= 1e-12 && uniform, d.str()};
}

struct DeskRun {
  double untrained_epe = 0.0;
  double trained_epe = 0.0;
  std::vector<Tensor> parameters;
  std::vector<std::string> log;
};

DeskRun desk_run() {
  SyntheticSceneSpec spec;
  spec.height = 32;
  spec.width = 64;
  spec.min_disparity = 0;
  spec.max_disparity = 8;
  spec.seed = 11;
  const auto train_set = generate_dataset(spec, 64);
  spec.seed = ~spec.seed;
  const auto val_set = generate_dataset(spec, 16);

  ModelConfig mc;
  mc.max_disparity = 24;
  Model model = make_model(mc);
  DeskRun run;
  run.untrained_epe = evaluate_model(model, val_set).epe;
  TrainerConfig tc;
  tc.steps = 500;
  train(model, train_set, val_set, tc, [&](const EpochLog& e) { run.log.push_back(e.to_line()); });
  run.trained_epe = evaluate_model(model, val_set).epe;
  model.visit([&](const std::string&, Tensor& t) { run.parameters.push_back(t); });
  return run;
}

Outcome desk_training() {
  const auto t0 = Clock::now();
  const DeskRun a = desk_run();
  const double t = seconds_since(t0);
  const DeskRun b = desk_run();
  const bool deterministic = a.parameters == b.parameters && a.log == b.log &&
                             a.trained_epe == b.trained_epe;
  std::ostringstream d;
  d << "val EPE " << a.untrained_epe << " -> " << a.trained_epe << " px, "
    << (deterministic ? "repeat run identical" : "repeat run differs") << ", " << t << " s";
  return {a.trained_epe < 0.5 * a.untrained_epe && a.trained_epe < 1.0 && deterministic && t < 300.0,
          d.str()};
}

struct LossGrads {
  double loss;
  Tensor pred, gt, pseudo;
};

LossGrads loss_grads(const Tensor& pred, const Tensor& gt, const Tensor& pseudo,
                     const Tensor& mask) {
  Tape tape;
  Var p = tape.variable(pred), g = tape.variable(gt), s = tape.variable(pseudo);
  Var loss = masked_loss(tape, p, g, s, mask);
  tape.backward(loss);
  return {tape.value(loss).item(), tape.grad(p), tape.grad(g), tape.grad(s)};
}

Outcome loss_masking() {
  std::mt19937_64 rng(8);
  const Shape shape{6, 9};
  bool ok = true;
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor pred = random_uniform(shape, 0, 8, rng);
    const Tensor fixed = random_uniform(shape, 0, 8, rng);
    // Valid everywhere: the pseudo map is irrelevant.
    const auto a = loss_grads(pred, fixed, random_uniform(shape, 0, 8, rng), Tensor(shape, 1.0));
    const auto b = loss_grads(pred, fixed, random_uniform(shape, 0, 8, rng), Tensor(shape, 1.0));
    ok &= a.loss == b.loss && a.pred == b.pred && a.gt == b.gt && a.pseudo == b.pseudo;
    for (double v : a.pseudo.data()) ok &= v == 0.0;
    // Invalid everywhere: the ground truth is irrelevant.
    const auto c = loss_grads(pred, random_uniform(shape, 0, 8, rng), fixed, Tensor(shape, 0.0));
    const auto e = loss_grads(pred, random_uniform(shape, 0, 8, rng), fixed, Tensor(shape, 0.0));
    ok &= c.loss == e.loss && c.pred == e.pred && c.pseudo == e.pseudo && c.gt == e.gt;
    for (double v : c.gt.data()) ok &= v == 0.0;
  }
  return {ok, ok ? "10 trials per mask, loss and gradients unchanged, masked gradients exactly 0"
                 : "perturbation leaked through the mask"};
}

Outcome codec_round_trips() {
  const fs::path dir = fs::temp_directory_path() / "aastereo_acceptance";
  fs::create_directories(dir);
  std::mt19937_64 rng(9);

  // Float-representable values come back exactly; a non-finite one is invalid.
  Tensor d = random_uniform({13, 17}, 0, 24, rng);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<float>(d[i]);
  d[5] = std::numeric_limits<double>::infinity();
  write_pfm(DisparityMap{d}, dir / "d.pfm");
  const DisparityMap back = read_pfm(dir / "d.pfm");
  bool pfm_ok = back.disparity.shape() == d.shape() && back.has_mask() && back.mask[5] == 0.0 &&
                back.valid_count() == d.size() - 1;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (i != 5) pfm_ok &= back.disparity[i] == d[i];

  ModelConfig mc;
  mc.max_disparity = 24;
  Model model = make_model(mc);
  SyntheticSceneSpec spec;
  spec.seed = 3;
  const auto data = generate_dataset(spec, 2);
  TrainerConfig tc;
  tc.steps = 2;
  const auto result = train(model, data, {}, tc);
  save_checkpoint({model, result.optimizer, result.rng_state}, dir / "model.bin");
  const Checkpoint loaded = load_checkpoint(dir / "model.bin", mc);
  const bool ckpt_ok = predict(loaded.model, data[0].left, data[0].right) ==
                       predict(model, data[0].left, data[0].right);
  fs::remove_all(dir);
  std::ostringstream s;
  s << "PFM " << (pfm_ok ? "value-exact" : "mismatch") << ", checkpoint forward "
    << (ckpt_ok ? "bitwise identical" : "differs");
  return {pfm_ok && ckpt_ok, s.str()};
}

}  // namespace

int main() {
  report("complexity ratio", complexity_ratio);
  report("gradient suite", gradient_suite);
  report("degenerate equivalence", degenerate_equivalence);
  report("cross-scale solver", cross_scale_solver);
  report("soft-argmin", soft_argmin_oracle);
  report("desk training", desk_training);
  report("loss masking", loss_masking);
  report("codec round trips", codec_round_trips);
  return failures == 0 ? 0 : 1;
}
