#include "aastereo/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "aastereo/complexity.hpp"
#include "aastereo/cross_scale.hpp"
#include "aastereo/data_io.hpp"
#include "aastereo/error.hpp"
#include "aastereo/gradcheck_suite.hpp"
#include "aastereo/trainer.hpp"

#ifndef AASTEREO_VERSION
#define AASTEREO_VERSION "unknown"
#endif

namespace aastereo::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Thrown for bad flag values found after CLI parsing.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Manifest {
  std::string command;
  std::vector<std::string> args;
  json config = json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Writes the manifest to `path`, or as one JSON line to `err` when no path
// applies.
void emit_manifest(const Manifest& m, const std::string& path, std::ostream& err) {
  const json j{{"command", m.command},
               {"args", m.args},
               {"config", m.config},
               {"seed", m.seed},
               {"timestamp", utc_timestamp()},
               {"inputs", m.inputs},
               {"outputs", m.outputs},
               {"code_version", AASTEREO_VERSION}};
  if (path.empty()) {
    err << "manifest " << j.dump() << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write manifest " + path);
  out << j.dump(2) << '\n';
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& text) {
  const auto x = text.find('x');
  std::size_t h = 0, w = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    std::size_t used = 0;
    h = std::stoul(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(text);
    w = std::stoul(text.substr(x + 1), &used);
    if (used != text.size() - x - 1) throw std::invalid_argument(text);
  } catch (const std::exception&) {
    throw UsageError("--size expects HEIGHTxWIDTH, got '" + text + "'");
  }
  if (h == 0 || w == 0) throw UsageError("--size must be positive");
  return {h, w};
}

json ini_to_json(const IniDocument& doc, const std::vector<std::string>& keys) {
  json j = json::object();
  for (const auto& k : keys) {
    if (auto v = doc.get(k)) j[k] = *v;
  }
  return j;
}

// ---------------------------------------------------------------------------
// train

const std::vector<std::string>& data_keys() {
  static const std::vector<std::string> k{
      "data.samples",       "data.val_samples",   "data.height",  "data.width",
      "data.min_disparity", "data.max_disparity", "data.density", "data.num_layers",
      "data.seed"};
  return k;
}

std::vector<std::string> all_config_keys() {
  std::vector<std::string> keys = ModelConfig::keys();
  keys.insert(keys.end(), TrainerConfig::keys().begin(), TrainerConfig::keys().end());
  keys.insert(keys.end(), data_keys().begin(), data_keys().end());
  return keys;
}

struct TrainOptions {
  std::string config;
  std::string data;
  std::string val;
  std::string out;
  std::string manifest;
  bool synthetic = false;
  std::map<std::string, std::string> overrides;
};

void add_override(CLI::App* app, const std::string& flag, const std::string& key,
                  std::map<std::string, std::string>& overrides, const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&overrides, key](const std::string& v) { overrides[key] = v; }, help);
}

SyntheticSceneSpec synthetic_spec(const IniDocument& doc) {
  SyntheticSceneSpec spec;
  spec.height = doc.get_size("data.height", 32);
  spec.width = doc.get_size("data.width", 64);
  spec.min_disparity = doc.get_size("data.min_disparity", 0);
  spec.max_disparity = doc.get_size("data.max_disparity", 8);
  spec.density = doc.get_double("data.density", 0.5);
  spec.num_layers = doc.get_size("data.num_layers", 3);
  spec.seed = doc.get_u64("data.seed", 1);
  return spec;
}

int cmd_train(const TrainOptions& o, const std::vector<std::string>& args, std::ostream& out,
              std::ostream& err) {
  IniDocument doc;
  if (!o.config.empty()) {
    try {
      doc = IniDocument::load(o.config);
    } catch (const ConfigError& e) {
      throw ConfigError(o.config + ": " + e.what());
    }
  }
  for (const auto& [key, value] : o.overrides) doc.set(key, value);
  doc.require_known(all_config_keys());

  const ModelConfig model_config = ModelConfig::read(doc);
  const TrainerConfig trainer_config = TrainerConfig::read(doc);
  model_config.validate();
  trainer_config.validate();

  Manifest manifest;
  manifest.command = "train";
  manifest.args = args;
  std::vector<StereoPair> train_set, val_set;
  if (o.synthetic) {
    SyntheticSceneSpec spec = synthetic_spec(doc);
    train_set = generate_dataset(spec, doc.get_size("data.samples", 1));
    // Validation scenes come from a disjoint seed stream.
    spec.seed = ~spec.seed;
    const std::size_t val_count = doc.get_size("data.val_samples", 8);
    if (val_count > 0) val_set = generate_dataset(spec, val_count);
  } else {
    if (o.data.empty()) throw UsageError("train: give --data DIR or --synthetic");
    train_set = read_dataset(o.data);
    manifest.inputs.push_back(o.data);
    if (!o.val.empty()) {
      val_set = read_dataset(o.val);
      manifest.inputs.push_back(o.val);
    }
  }
  if (!o.config.empty()) manifest.inputs.push_back(o.config);

  fs::create_directories(o.out);
  const fs::path log_path = fs::path(o.out) / "train.log";
  const fs::path ckpt_path = fs::path(o.out) / "checkpoint.bin";
  const fs::path config_path = fs::path(o.out) / "config.ini";
  {
    std::ofstream cfg(config_path);
    cfg << doc.to_text();
  }

  Model model = make_model(model_config);
  std::ofstream log(log_path);
  if (!log) throw FormatError("cannot write " + log_path.string());
  const TrainResult result = train(model, train_set, val_set, trainer_config, [&](const EpochLog& e) {
    log << e.to_line() << '\n' << std::flush;
  });
  if (!result.log.empty()) {
    out << "epochs=" << result.log.size() << "\nfirst_loss=" << result.log.front().train_loss
        << "\nfinal_loss=" << result.log.back().train_loss
        << "\nfinal_val_epe=" << result.log.back().val_epe << '\n';
  }

  save_checkpoint(Checkpoint{model, result.optimizer, result.rng_state}, ckpt_path);
  out << "checkpoint=" << ckpt_path.string() << '\n';

  manifest.config = ini_to_json(doc, all_config_keys());
  manifest.seed = trainer_config.seed;
  manifest.outputs = {ckpt_path.string(), log_path.string(), config_path.string()};
  const std::string manifest_path =
      o.manifest.empty() ? (fs::path(o.out) / "manifest.json").string() : o.manifest;
  emit_manifest(manifest, manifest_path, err);
  return kSuccess;
}

// ---------------------------------------------------------------------------
// infer

struct InferOptions {
  std::string checkpoint, left, right, out, preview, manifest;
};

int cmd_infer(const InferOptions& o, const std::vector<std::string>& args, std::ostream& out,
              std::ostream& err) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const Tensor left = read_image(o.left);
  const Tensor right = read_image(o.right);
  if (left.shape() != right.shape()) {
    throw ShapeError("left image " + shape_string(left.shape()) + " and right image " +
                     shape_string(right.shape()) + " differ in size");
  }
  check_input_size(ckpt.model.config, left.dim(0), left.dim(1));
  const Tensor disparity = predict(ckpt.model, left, right);
  write_pfm(DisparityMap{disparity, {}}, o.out);

  Manifest manifest;
  manifest.command = "infer";
  manifest.args = args;
  manifest.inputs = {o.checkpoint, o.left, o.right};
  manifest.outputs = {o.out};
  if (!o.preview.empty()) {
    const double scale = 1.0 / static_cast<double>(ckpt.model.config.max_disparity);
    Tensor gray({disparity.dim(0), disparity.dim(1), 1});
    for (std::size_t i = 0; i < disparity.size(); ++i) gray[i] = disparity[i] * scale;
    write_image(gray, o.preview);
    manifest.outputs.push_back(o.preview);
  }

  double sum = 0.0;
  for (double v : disparity.data()) sum += v;
  out << "height=" << disparity.dim(0) << "\nwidth=" << disparity.dim(1)
      << "\nmean_disparity=" << std::setprecision(10) << sum / static_cast<double>(disparity.size())
      << "\noutput=" << o.out << '\n';

  IniDocument config;
  ckpt.model.config.write(config);
  manifest.config = ini_to_json(config, ModelConfig::keys());
  manifest.seed = ckpt.model.config.seed;
  emit_manifest(manifest, o.manifest.empty() ? o.out + ".manifest.json" : o.manifest, err);
  return kSuccess;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::string pred, gt, mask, out, manifest;
};

int cmd_eval(const EvalOptions& o, const std::vector<std::string>& args, std::ostream& out,
             std::ostream& err) {
  const DisparityMap pred = read_pfm(o.pred);
  DisparityMap gt = read_pfm(o.gt);
  Manifest manifest;
  manifest.command = "eval";
  manifest.args = args;
  manifest.inputs = {o.pred, o.gt};
  if (!o.mask.empty()) {
    const Tensor m = read_image(o.mask);
    if (m.dim(0) != gt.height() || m.dim(1) != gt.width() || m.dim(2) != 1) {
      throw ShapeError("mask " + shape_string(m.shape()) + " does not match ground truth " +
                       shape_string(gt.disparity.shape()));
    }
    Tensor mask(gt.disparity.shape());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = m[i] != 0.0 && gt.valid(i) ? 1.0 : 0.0;
    gt.mask = std::move(mask);
    manifest.inputs.push_back(o.mask);
  }
  manifest.config = json{{"pred", o.pred}, {"gt", o.gt}, {"mask", o.mask}};
  const std::string manifest_path =
      !o.manifest.empty() ? o.manifest : (o.out.empty() ? "" : o.out + ".manifest.json");

  MetricsReport report;
  try {
    report = evaluate(pred.disparity, gt);
  } catch (const EmptyEvaluationError&) {
    emit_manifest(manifest, manifest_path, err);
    throw;
  }
  out << report.to_text();
  if (!o.out.empty()) {
    std::ofstream f(o.out);
    if (!f) throw FormatError("cannot write " + o.out);
    f << report.to_line() << '\n';
    manifest.outputs.push_back(o.out);
  }
  emit_manifest(manifest, manifest_path, err);
  return kSuccess;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckOptions {
  std::string scope = "all";
  std::uint64_t seed = 2024;
  std::string manifest;
};

int cmd_gradcheck(const GradcheckOptions& o, const std::vector<std::string>& args,
                  std::ostream& out, std::ostream& err) {
  std::vector<std::string> names;
  if (o.scope == "all") {
    names = gradcheck_suite_names();
  } else {
    const auto& known = gradcheck_suite_names();
    if (std::find(known.begin(), known.end(), o.scope) == known.end()) {
      std::string list;
      for (const auto& n : known) list += " " + n;
      throw UsageError("gradcheck: unknown operator '" + o.scope + "'; known:" + list);
    }
    names = {o.scope};
  }
  bool all_pass = true;
  out << std::left << std::setw(20) << "op" << std::setw(14) << "max_rel_err" << std::setw(8)
      << "coords" << "result\n";
  for (const auto& name : names) {
    const GradCheckCase c = make_gradcheck_case(name, o.seed);
    const GradCheckReport r = finite_difference_check(c.op, c.inputs, c.options);
    all_pass = all_pass && r.pass;
    char err_text[32];
    std::snprintf(err_text, sizeof err_text, "%.3e", r.max_relative_error);
    out << std::setw(20) << name << std::setw(14) << err_text << std::setw(8) << r.coordinates
        << (r.pass ? "pass" : "FAIL") << '\n';
  }
  Manifest manifest;
  manifest.command = "gradcheck";
  manifest.args = args;
  manifest.config = json{{"scope", o.scope}, {"tolerance", GradCheckOptions{}.tolerance},
                         {"step", GradCheckOptions{}.step}};
  manifest.seed = o.seed;
  emit_manifest(manifest, o.manifest, err);
  return all_pass ? kSuccess : kInternalFailure;
}

// ---------------------------------------------------------------------------
// complexity, solve-xscale

struct ComplexityOptions {
  ComplexityQuery query;
  std::string manifest;
};

int cmd_complexity(const ComplexityOptions& o, const std::vector<std::string>& args,
                   std::ostream& out, std::ostream& err) {
  const ComplexityReport r = compute_complexity(o.query);
  out << r.to_text();
  Manifest manifest;
  manifest.command = "complexity";
  manifest.args = args;
  manifest.config = json{{"k", o.query.k}, {"c", o.query.c}, {"d", o.query.d},
                         {"h", o.query.h}, {"w", o.query.w}, {"layers", o.query.layers}};
  emit_manifest(manifest, o.manifest, err);
  return kSuccess;
}

struct SolveOptions {
  double lambda = 1.0;
  std::vector<double> values;
  std::size_t scales = 0;
  std::string manifest;
};

int cmd_solve(const SolveOptions& o, const std::vector<std::string>& args, std::ostream& out,
              std::ostream& err) {
  if (o.scales != 0 && o.scales != o.values.size()) {
    throw UsageError("solve-xscale: --scales " + std::to_string(o.scales) + " but " +
                     std::to_string(o.values.size()) + " values given");
  }
  if (!(o.lambda >= 0.0)) throw UsageError("solve-xscale: --lambda must be >= 0");
  const CrossScaleSolution sol = solve_cross_scale({o.values, o.lambda});
  const std::size_t n = o.values.size();
  out << std::setprecision(12);
  out << "P=\n";
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) out << (c ? " " : "  ") << sol.P(r, c);
    out << '\n';
  }
  out << "v_hat=";
  for (std::size_t i = 0; i < n; ++i) out << (i ? " " : "") << sol.v_hat[i];
  out << '\n';
  Manifest manifest;
  manifest.command = "solve-xscale";
  manifest.args = args;
  manifest.config = json{{"lambda", o.lambda}, {"values", o.values}};
  emit_manifest(manifest, o.manifest, err);
  return kSuccess;
}

// ---------------------------------------------------------------------------
// gen-data

struct GenOptions {
  std::string out;
  std::size_t count = 16;
  std::string size = "32x64";
  std::size_t disp_min = 0;
  std::size_t disp_max = 8;
  std::size_t layers = 3;
  std::size_t channels = 3;
  double density = 0.5;
  double sparsify = 1.0;
  bool pseudo = false;
  std::uint64_t seed = 1;
  std::string manifest;
};

int cmd_gen(const GenOptions& o, const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  SyntheticSceneSpec spec;
  std::tie(spec.height, spec.width) = parse_size(o.size);
  spec.min_disparity = o.disp_min;
  spec.max_disparity = o.disp_max;
  spec.num_layers = o.layers;
  spec.channels = o.channels;
  spec.density = o.density;
  spec.seed = o.seed;
  std::vector<StereoPair> pairs = generate_dataset(spec, o.count);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (o.pseudo) pairs[i].pseudo = DisparityMap{pairs[i].gt->disparity, {}};
    if (o.sparsify < 1.0) pairs[i].gt = sparsify_mask(*pairs[i].gt, o.sparsify, o.seed + i);
  }
  write_dataset(pairs, o.out);
  out << "wrote " << pairs.size() << " stereo pairs to " << o.out << '\n';
  Manifest manifest;
  manifest.command = "gen-data";
  manifest.args = args;
  manifest.config = json{{"count", o.count},       {"size", o.size},     {"disp_min", o.disp_min},
                         {"disp_max", o.disp_max}, {"layers", o.layers}, {"channels", o.channels},
                         {"density", o.density},   {"sparsify", o.sparsify},
                         {"pseudo", o.pseudo}};
  manifest.seed = o.seed;
  manifest.outputs = {o.out};
  emit_manifest(manifest, o.manifest.empty() ? (fs::path(o.out) / "manifest.json").string()
                                             : o.manifest,
                err);
  return kSuccess;
}

// ---------------------------------------------------------------------------

std::vector<std::string> manifest_args(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open manifest " + path);
  json j;
  try {
    in >> j;
    return j.at("args").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw UsageError("manifest " + path + " is malformed: " + e.what());
  }
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive-aggregation stereo matching at desk scale", "aastereo"};
  app.require_subcommand(0, 1);
  std::string from_manifest;
  app.add_option("--from-manifest", from_manifest, "Replay the command recorded in a manifest");

  TrainOptions train_o;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  train_cmd->add_option("--config", train_o.config, "Config file ([model]/[train]/[data])");
  train_cmd->add_option("--data", train_o.data, "Training dataset directory");
  train_cmd->add_option("--val", train_o.val, "Validation dataset directory");
  train_cmd->add_option("--out", train_o.out, "Output directory")->required();
  train_cmd->add_option("--manifest", train_o.manifest, "Manifest path");
  train_cmd->add_flag("--synthetic", train_o.synthetic, "Train on generated stereograms");
  auto& ov = train_o.overrides;
  train_cmd->add_option_function<std::string>(
      "--size",
      [&ov](const std::string& v) {
        const auto [h, w] = parse_size(v);
        ov["data.height"] = std::to_string(h);
        ov["data.width"] = std::to_string(w);
      },
      "Synthetic image size HEIGHTxWIDTH");
  add_override(train_cmd, "--dmax", "model.max_disparity", ov, "Maximum disparity D_max");
  add_override(train_cmd, "--scales", "model.scales", ov, "Number of pyramid scales");
  add_override(train_cmd, "--channels", "model.feature_channels", ov, "Feature channels");
  add_override(train_cmd, "--modules", "model.modules", ov, "Number of aggregation modules");
  add_override(train_cmd, "--plain-modules", "model.plain_modules", ov,
               "Leading modules with plain convolutions");
  add_override(train_cmd, "--steps", "train.steps", ov, "Adam steps");
  add_override(train_cmd, "--lr", "train.learning_rate", ov, "Initial learning rate");
  add_override(train_cmd, "--batch", "train.batch_size", ov, "Batch size");
  add_override(train_cmd, "--samples", "data.samples", ov, "Synthetic training samples");
  add_override(train_cmd, "--val-samples", "data.val_samples", ov, "Synthetic validation samples");
  add_override(train_cmd, "--disp-min", "data.min_disparity", ov, "Synthetic min disparity");
  add_override(train_cmd, "--disp-max", "data.max_disparity", ov, "Synthetic max disparity");
  add_override(train_cmd, "--density", "data.density", ov, "Synthetic dot density");
  train_cmd->add_option_function<std::string>(
      "--seed",
      [&ov](const std::string& v) {
        ov["model.seed"] = v;
        ov["train.seed"] = v;
        ov["data.seed"] = v;
      },
      "Seed for initialization, data order and synthetic data");
  train_cmd->add_flag_callback("--no-refine", [&ov] { ov["model.refine"] = "false"; },
                               "Disable the refinement stage");
  train_cmd->add_flag_callback("--final-only", [&ov] { ov["train.final_only"] = "true"; },
                               "Supervise only the final prediction");

  InferOptions infer_o;
  auto* infer_cmd = app.add_subcommand("infer", "Predict a disparity map");
  infer_cmd->add_option("--checkpoint", infer_o.checkpoint, "Checkpoint file")->required();
  infer_cmd->add_option("--left", infer_o.left, "Left image (PGM/PPM)")->required();
  infer_cmd->add_option("--right", infer_o.right, "Right image (PGM/PPM)")->required();
  infer_cmd->add_option("--out", infer_o.out, "Output PFM")->required();
  infer_cmd->add_option("--preview", infer_o.preview, "Optional 8-bit PGM preview");
  infer_cmd->add_option("--manifest", infer_o.manifest, "Manifest path");

  EvalOptions eval_o;
  auto* eval_cmd = app.add_subcommand("eval", "Score a disparity map against ground truth");
  eval_cmd->add_option("--pred", eval_o.pred, "Predicted PFM")->required();
  eval_cmd->add_option("--gt", eval_o.gt, "Ground-truth PFM")->required();
  eval_cmd->add_option("--mask", eval_o.mask, "Validity mask PGM (nonzero = valid)");
  eval_cmd->add_option("--out", eval_o.out, "Write the metrics as one line to this file");
  eval_cmd->add_option("--manifest", eval_o.manifest, "Manifest path");

  GradcheckOptions grad_o;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every operator");
  grad_cmd->add_option("scope", grad_o.scope, "'all' or one operator name");
  grad_cmd->add_option("--seed", grad_o.seed, "Input seed");
  grad_cmd->add_option("--manifest", grad_o.manifest, "Manifest path");

  ComplexityOptions cx_o;
  auto* cx_cmd = app.add_subcommand("complexity", "Compare 3D convolution and adaptive aggregation cost");
  cx_cmd->add_option("--k", cx_o.query.k, "Kernel extent");
  cx_cmd->add_option("--c", cx_o.query.c, "Feature channels");
  cx_cmd->add_option("--d", cx_o.query.d, "Disparity candidates");
  cx_cmd->add_option("--height", cx_o.query.h, "Height");
  cx_cmd->add_option("--width", cx_o.query.w, "Width");
  cx_cmd->add_option("--layers", cx_o.query.layers, "Layer count for totals");
  cx_cmd->add_option("--manifest", cx_o.manifest, "Manifest path");

  SolveOptions solve_o;
  auto* solve_cmd = app.add_subcommand("solve-xscale", "Closed-form cross-scale solution");
  solve_cmd->add_option("--lambda", solve_o.lambda, "Coupling weight (>= 0)");
  solve_cmd->add_option("--values", solve_o.values, "Aggregated costs, one per scale")
      ->required()
      ->delimiter(',');
  solve_cmd->add_option("--scales", solve_o.scales, "Expected number of scales");
  solve_cmd->add_option("--manifest", solve_o.manifest, "Manifest path");

  GenOptions gen_o;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic stereogram dataset");
  gen_cmd->add_option("--out", gen_o.out, "Output directory")->required();
  gen_cmd->add_option("--count", gen_o.count, "Number of stereo pairs");
  gen_cmd->add_option("--size", gen_o.size, "Image size HEIGHTxWIDTH");
  gen_cmd->add_option("--disp-min", gen_o.disp_min, "Minimum layer disparity");
  gen_cmd->add_option("--disp-max", gen_o.disp_max, "Maximum layer disparity");
  gen_cmd->add_option("--layers", gen_o.layers, "Layers including the background");
  gen_cmd->add_option("--channels", gen_o.channels, "1 (PGM) or 3 (PPM)");
  gen_cmd->add_option("--density", gen_o.density, "Dot density in (0, 1]");
  gen_cmd->add_option("--sparsify", gen_o.sparsify, "Fraction of valid gt pixels to keep");
  gen_cmd->add_flag("--pseudo", gen_o.pseudo, "Also write dense pseudo labels");
  gen_cmd->add_option("--seed", gen_o.seed, "Seed");
  gen_cmd->add_option("--manifest", gen_o.manifest, "Manifest path");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }

  if (!from_manifest.empty()) {
    if (app.get_subcommands().size() > 0) {
      throw UsageError("--from-manifest cannot be combined with a command");
    }
    return dispatch(manifest_args(from_manifest), out, err);
  }
  if (train_cmd->parsed()) return cmd_train(train_o, args, out, err);
  if (infer_cmd->parsed()) return cmd_infer(infer_o, args, out, err);
  if (eval_cmd->parsed()) return cmd_eval(eval_o, args, out, err);
  if (grad_cmd->parsed()) return cmd_gradcheck(grad_o, args, out, err);
  if (cx_cmd->parsed()) return cmd_complexity(cx_o, args, out, err);
  if (solve_cmd->parsed()) return cmd_solve(solve_o, args, out, err);
  if (gen_cmd->parsed()) return cmd_gen(gen_o, args, out, err);
  err << app.help();
  return kUsageError;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const EmptyEvaluationError& e) {
    err << "error: " << e.what() << '\n';
    return kEmptyEvaluation;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsageError;
  } catch (const NonFiniteLossError& e) {
    err << "error: " << e.what() << '\n';
    return kInternalFailure;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternalFailure;
  }
}

}  // namespace aastereo::cli
