#include "aastereo/model.hpp"

#include <cmath>

#include "aastereo/error.hpp"
#include "aastereo/ops.hpp"

namespace aastereo {

void ModelConfig::validate() const {
  if (scales == 0) throw ConfigError("model.scales must be >= 1");
  if (base_factor == 0) throw ConfigError("model.base_factor must be >= 1");
  if (feature_channels == 0) throw ConfigError("model.feature_channels must be >= 1");
  if (plain_modules > modules) {
    throw ConfigError("model.plain_modules (" + std::to_string(plain_modules) +
                      ") exceeds model.modules (" + std::to_string(modules) + ")");
  }
  if (isa_kernel % 2 == 0) throw ConfigError("model.isa_kernel must be odd");
  if (dilation == 0) throw ConfigError("model.dilation must be >= 1");
  if (groups == 0) throw ConfigError("model.groups must be >= 1");
  if (refine && refine_channels == 0) throw ConfigError("model.refine_channels must be >= 1");
  if (!std::isfinite(leaky_slope)) throw ConfigError("model.leaky_slope must be finite");
  std::vector<std::size_t> ds;
  try {
    ds = scale_disparities();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model.max_disparity: ") + e.what());
  }
  if (modules > plain_modules) {
    for (std::size_t s = 0; s < ds.size(); ++s) {
      if (ds[s] % groups != 0) {
        throw ConfigError("model.groups: " + std::to_string(groups) + " groups do not divide the " +
                          std::to_string(ds[s]) + " disparities of scale " + std::to_string(s + 1));
      }
    }
  }
}

std::vector<std::size_t> ModelConfig::scale_disparities() const {
  return aastereo::scale_disparities(max_disparity, base_factor, scales);
}

const std::vector<std::string>& ModelConfig::keys() {
  static const std::vector<std::string> k{
      "model.scales",      "model.base_factor",   "model.feature_channels",
      "model.max_disparity", "model.modules",     "model.plain_modules",
      "model.isa_kernel",  "model.groups",        "model.dilation",
      "model.refine_channels", "model.refine",    "model.leaky_slope",
      "model.seed"};
  return k;
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void ModelConfig::write(IniDocument& doc) const {
  doc.set("model.scales", std::to_string(scales));
  doc.set("model.base_factor", std::to_string(base_factor));
  doc.set("model.feature_channels", std::to_string(feature_channels));
  doc.set("model.max_disparity", std::to_string(max_disparity));
  doc.set("model.modules", std::to_string(modules));
  doc.set("model.plain_modules", std::to_string(plain_modules));
  doc.set("model.isa_kernel", std::to_string(isa_kernel));
  doc.set("model.groups", std::to_string(groups));
  doc.set("model.dilation", std::to_string(dilation));
  doc.set("model.refine_channels", std::to_string(refine_channels));
  doc.set("model.refine", refine ? "true" : "false");
  doc.set("model.leaky_slope", format_double(leaky_slope));
  doc.set("model.seed", std::to_string(seed));
}

ModelConfig ModelConfig::read(const IniDocument& doc) {
  ModelConfig c;
  c.scales = doc.get_size("model.scales", c.scales);
  c.base_factor = doc.get_size("model.base_factor", c.base_factor);
  c.feature_channels = doc.get_size("model.feature_channels", c.feature_channels);
  c.max_disparity = doc.get_size("model.max_disparity", c.max_disparity);
  c.modules = doc.get_size("model.modules", c.modules);
  c.plain_modules = doc.get_size("model.plain_modules", c.plain_modules);
  c.isa_kernel = doc.get_size("model.isa_kernel", c.isa_kernel);
  c.groups = doc.get_size("model.groups", c.groups);
  c.dilation = doc.get_size("model.dilation", c.dilation);
  c.refine_channels = doc.get_size("model.refine_channels", c.refine_channels);
  c.refine = doc.get_bool("model.refine", c.refine);
  c.leaky_slope = doc.get_double("model.leaky_slope", c.leaky_slope);
  c.seed = doc.get_u64("model.seed", c.seed);
  return c;
}

// ---------------------------------------------------------------------------

void PlainStageParams::visit(const std::string& prefix, const ParamVisitor& visitor) {
  conv1.visit(prefix + ".conv1", visitor);
  conv2.visit(prefix + ".conv2", visitor);
}

void IntraStageParams::visit(const std::string& prefix, const ParamVisitor& visitor) {
  if (adaptive) {
    isa.visit(prefix + ".isa", visitor);
  } else {
    plain.visit(prefix + ".plain", visitor);
  }
}

void AaModuleParams::visit(const std::string& prefix, const ParamVisitor& visitor) {
  for (std::size_t s = 0; s < stages.size(); ++s) {
    stages[s].visit(prefix + ".intra" + std::to_string(s + 1), visitor);
  }
  csa.visit(prefix + ".cross", visitor);
}

void RefineParams::visit(const std::string& prefix, const ParamVisitor& visitor) {
  conv1.visit(prefix + ".conv1", visitor);
  conv2.visit(prefix + ".conv2", visitor);
  conv3.visit(prefix + ".conv3", visitor);
}

void Model::visit(const ParamVisitor& visitor) {
  features.visit("features", visitor);
  for (std::size_t m = 0; m < modules.size(); ++m) {
    modules[m].visit("aa" + std::to_string(m + 1), visitor);
  }
  if (config.refine) refinement.visit("refine", visitor);
}

std::size_t Model::parameter_count() {
  std::size_t n = 0;
  visit([&n](const std::string&, Tensor& t) { n += t.size(); });
  return n;
}

Model make_model(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  Model model;
  model.config = config;
  model.features = make_feature_extractor(3, config.feature_channels, config.base_factor,
                                          config.scales, rng);
  model.features.leaky_slope = config.leaky_slope;
  const auto ds = config.scale_disparities();
  const ConvGeometry same{1, 1};
  for (std::size_t m = 0; m < config.modules; ++m) {
    AaModuleParams module;
    for (std::size_t s = 0; s < config.scales; ++s) {
      IntraStageParams stage;
      stage.adaptive = m >= config.plain_modules;
      if (stage.adaptive) {
        stage.isa = make_isa_block(ds[s], config.grid());
      } else {
        stage.plain.conv1 = make_conv(ds[s], ds[s], 3, same, rng);
        stage.plain.conv2 = make_zero_conv(ds[s], ds[s], 3, same);
      }
      module.stages.push_back(std::move(stage));
    }
    module.csa = make_csa(ds);
    model.modules.push_back(std::move(module));
  }
  if (config.refine) {
    const std::size_t c = config.refine_channels;
    model.refinement.conv1 = make_conv(4, c, 3, same, rng);
    model.refinement.conv2 = make_conv(c, c, 3, same, rng);
    model.refinement.conv3 = make_zero_conv(c, 1, 3, same);
  }
  return model;
}

// ---------------------------------------------------------------------------

void check_input_size(const ModelConfig& config, std::size_t height, std::size_t width) {
  const std::size_t total = config.scale_factor(config.scales);
  if (height >= total && width >= total) return;
  throw ShapeError("input " + std::to_string(height) + "x" + std::to_string(width) +
                   " is smaller than the total downsampling factor " + std::to_string(total) +
                   "; pad to at least " + std::to_string(std::max(height, total)) + "x" +
                   std::to_string(std::max(width, total)));
}

Tensor prepare_image(const Tensor& image) {
  require_rank("prepare_image", image, 3);
  const std::size_t channels = image.dim(2);
  Tensor chw({3, image.dim(0), image.dim(1)});
  const std::size_t plane = image.dim(0) * image.dim(1);
  if (channels == 1) {
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < plane; ++i) chw[c * plane + i] = image[i];
  } else if (channels == 3) {
    for (std::size_t i = 0; i < plane; ++i)
      for (std::size_t c = 0; c < 3; ++c) chw[c * plane + i] = image[i * 3 + c];
  } else {
    throw ShapeError("prepare_image: expected 1 or 3 channels, got " + std::to_string(channels));
  }
  return normalize_image(chw, kImageNetMean, kImageNetStd);
}

Var upsample_disparity(Tape& tape, Var disparity, std::size_t height, std::size_t width,
                       double factor) {
  const Tensor& d = tape.value(disparity);
  require_rank("upsample_disparity", d, 2);
  Var x = ops::reshape(tape, disparity, {1, d.dim(0), d.dim(1)});
  x = bilinear_upsample(tape, x, height, width);
  x = ops::scale(tape, x, factor);
  return ops::reshape(tape, x, {height, width});
}

Var refine(ParamBinder& params, const RefineParams& layer, Var low_res, Var image,
           std::size_t base_factor, double leaky_slope) {
  Tape& tape = params.tape();
  const Tensor& d = tape.value(low_res);
  const Tensor& img = tape.value(image);
  require_rank("refine (disparity)", d, 2);
  require_rank("refine (image)", img, 3);
  const std::size_t H = img.dim(1), W = img.dim(2);
  const std::size_t h = (H + base_factor - 1) / base_factor;
  const std::size_t w = (W + base_factor - 1) / base_factor;
  if (d.dim(0) != h || d.dim(1) != w) {
    throw ShapeError("refine: disparity " + shape_string(d.shape()) + " does not match image " +
                     shape_string(img.shape()) + " at factor " + std::to_string(base_factor) +
                     " (expected " + shape_string({h, w}) + ")");
  }
  if (layer.conv1.in_channels() != img.dim(0) + 1) {
    throw ShapeError("refine: first conv expects " + std::to_string(layer.conv1.in_channels()) +
                     " channels, got " + std::to_string(img.dim(0) + 1));
  }
  Var up = upsample_disparity(tape, low_res, H, W, static_cast<double>(base_factor));
  Var up3 = ops::reshape(tape, up, {1, H, W});
  const Var parts[] = {up3, image};
  Var x = ops::concat(tape, parts);
  x = ops::leaky_relu(tape, apply_conv(params, layer.conv1, x), leaky_slope);
  x = ops::leaky_relu(tape, apply_conv(params, layer.conv2, x), leaky_slope);
  x = apply_conv(params, layer.conv3, x);
  return ops::add(tape, up, ops::reshape(tape, x, {H, W}));
}

namespace {

Var plain_stage(ParamBinder& params, const PlainStageParams& stage, Var volume, double slope) {
  Tape& tape = params.tape();
  Var x = ops::leaky_relu(tape, apply_conv(params, stage.conv1, volume), slope);
  x = apply_conv(params, stage.conv2, x);
  return ops::add(tape, volume, x);
}

}  // namespace

ForwardResult forward(ParamBinder& params, const Model& model, Var left, Var right, bool training) {
  Tape& tape = params.tape();
  const ModelConfig& config = model.config;
  const Tensor& img = tape.value(left);
  require_rank("forward", img, 3);
  require_same_shape("forward (left, right)", img, tape.value(right));
  const std::size_t H = img.dim(1), W = img.dim(2);
  check_input_size(config, H, W);

  const auto fl = extract_pyramid(params, model.features, left);
  const auto fr = extract_pyramid(params, model.features, right);
  const auto ds = config.scale_disparities();
  std::vector<Var> volumes;
  for (std::size_t s = 0; s < config.scales; ++s) {
    volumes.push_back(correlate(tape, fl[s], fr[s], ds[s]));
  }

  for (const auto& module : model.modules) {
    for (std::size_t s = 0; s < config.scales; ++s) {
      const auto& stage = module.stages[s];
      volumes[s] = stage.adaptive ? isa_block(params, stage.isa, volumes[s])
                                  : plain_stage(params, stage.plain, volumes[s], config.leaky_slope);
    }
    volumes = csa(params, module.csa, volumes);
  }

  ForwardResult result;
  result.volumes = volumes;
  const Var finest = soft_argmin(tape, volumes[0]);
  result.final = config.refine
                     ? refine(params, model.refinement, finest, left, config.base_factor,
                              config.leaky_slope)
                     : upsample_disparity(tape, finest, H, W,
                                          static_cast<double>(config.scale_factor(1)));
  result.predictions.push_back(result.final);
  if (training) {
    for (std::size_t s = 0; s < config.scales; ++s) {
      if (s == 0 && !config.refine) continue;
      const Var d = s == 0 ? finest : soft_argmin(tape, volumes[s]);
      result.predictions.push_back(
          upsample_disparity(tape, d, H, W, static_cast<double>(config.scale_factor(s + 1))));
    }
  }
  return result;
}

Tensor predict(const Model& model, const Tensor& left, const Tensor& right) {
  require_same_shape("predict (left, right)", left, right);
  Tape tape;
  ParamBinder params(tape, false);
  const ForwardResult r = forward(params, model, tape.constant(prepare_image(left)),
                                  tape.constant(prepare_image(right)), false);
  return tape.value(r.final);
}

}  // namespace aastereo
