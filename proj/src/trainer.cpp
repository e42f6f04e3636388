#include "aastereo/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "aastereo/error.hpp"

namespace aastereo {

void TrainerConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train.learning_rate must be finite and >= 0");
  }
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("train.beta1 must be in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("train.beta2 must be in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("train.epsilon must be > 0");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  for (double p : halving_points) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("train.halving_points must lie in [0, 1]");
  }
  for (double w : loss_weights) {
    if (!(w >= 0.0)) throw ConfigError("train.loss_weights must be >= 0");
  }
}

double TrainerConfig::learning_rate_at(std::size_t step) const {
  double lr = learning_rate;
  for (double p : halving_points) {
    const auto boundary = static_cast<std::size_t>(std::floor(p * static_cast<double>(steps)));
    if (step >= boundary) lr *= 0.5;
  }
  return lr;
}

const std::vector<std::string>& TrainerConfig::keys() {
  static const std::vector<std::string> k{
      "train.learning_rate", "train.beta1",      "train.beta2",        "train.epsilon",
      "train.halving_points", "train.batch_size", "train.steps",       "train.final_only",
      "train.loss_weights",  "train.seed"};
  return k;
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_list(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? ", " : "") + format_double(values[i]);
  return out;
}

}  // namespace

void TrainerConfig::write(IniDocument& doc) const {
  doc.set("train.learning_rate", format_double(learning_rate));
  doc.set("train.beta1", format_double(beta1));
  doc.set("train.beta2", format_double(beta2));
  doc.set("train.epsilon", format_double(epsilon));
  doc.set("train.halving_points", format_list(halving_points));
  doc.set("train.batch_size", std::to_string(batch_size));
  doc.set("train.steps", std::to_string(steps));
  doc.set("train.final_only", final_only ? "true" : "false");
  doc.set("train.loss_weights", format_list(loss_weights));
  doc.set("train.seed", std::to_string(seed));
}

TrainerConfig TrainerConfig::read(const IniDocument& doc) {
  TrainerConfig c;
  c.learning_rate = doc.get_double("train.learning_rate", c.learning_rate);
  c.beta1 = doc.get_double("train.beta1", c.beta1);
  c.beta2 = doc.get_double("train.beta2", c.beta2);
  c.epsilon = doc.get_double("train.epsilon", c.epsilon);
  c.halving_points = doc.get_doubles("train.halving_points", c.halving_points);
  c.batch_size = doc.get_size("train.batch_size", c.batch_size);
  c.steps = doc.get_size("train.steps", c.steps);
  c.final_only = doc.get_bool("train.final_only", c.final_only);
  c.loss_weights = doc.get_doubles("train.loss_weights", c.loss_weights);
  c.seed = doc.get_u64("train.seed", c.seed);
  return c;
}

// ---------------------------------------------------------------------------

void adam_step(Model& model, AdamState& state, const std::vector<Tensor>& grads,
               const TrainerConfig& config, double learning_rate) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(config.beta1, t);
  const double correct2 = 1.0 - std::pow(config.beta2, t);
  std::size_t i = 0;
  model.visit([&](const std::string& name, Tensor& param) {
    if (i >= grads.size() || grads[i].shape() != param.shape()) {
      throw ShapeError("adam_step: gradient for " + name + " is missing or misshapen");
    }
    if (state.m.size() <= i) {
      state.m.push_back(Tensor::zeros_like(param));
      state.v.push_back(Tensor::zeros_like(param));
    }
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    const Tensor& g = grads[i];
    for (std::size_t k = 0; k < param.size(); ++k) {
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
      const double update = (m[k] / correct1) / (std::sqrt(v[k] / correct2) + config.epsilon);
      param[k] -= learning_rate * update;
    }
    ++i;
  });
}

SampleLoss sample_loss(Model& model, const StereoPair& sample, const TrainerConfig& config,
                       std::vector<Tensor>* grads, double grad_scale) {
  sample.validate();
  if (!sample.gt) throw std::invalid_argument("training sample has no ground-truth disparity");
  const DisparityMap& gt = *sample.gt;

  Tape tape;
  ParamBinder params(tape, grads != nullptr);
  const ForwardResult fwd = forward(params, model, tape.constant(prepare_image(sample.left)),
                                    tape.constant(prepare_image(sample.right)), !config.final_only);

  const Tensor mask = gt.has_mask() ? gt.mask : Tensor(gt.disparity.shape(), 1.0);
  const Var gt_var = tape.constant(gt.disparity);
  std::optional<Var> pseudo;
  if (sample.pseudo) pseudo = tape.constant(sample.pseudo->disparity);

  const std::vector<Var>& preds = fwd.predictions;
  LossWeights weights = config.final_only || config.loss_weights.empty()
                            ? LossWeights::defaults(preds.size())
                            : LossWeights{config.loss_weights};
  SampleLoss result;
  std::vector<Var> terms;
  for (Var p : preds) {
    terms.push_back(masked_loss(tape, p, gt_var, pseudo, mask));
    result.terms.push_back(tape.value(terms.back()).item());
  }
  const Var total = total_loss(tape, terms, weights);
  result.total = tape.value(total).item();

  if (grads) {
    tape.backward(total);
    std::size_t i = 0;
    model.visit([&](const std::string&, Tensor& param) {
      if (grads->size() <= i) grads->push_back(Tensor::zeros_like(param));
      Tensor g = params.grad(param);
      g *= grad_scale;
      (*grads)[i] += g;
      ++i;
    });
  }
  return result;
}

MetricsReport evaluate_model(const Model& model, const std::vector<StereoPair>& samples) {
  MetricsReport pooled;
  double epe = 0.0, over1 = 0.0, d1 = 0.0;
  for (const auto& s : samples) {
    if (!s.gt) continue;
    MetricsReport r;
    try {
      r = evaluate(predict(model, s.left, s.right), *s.gt);
    } catch (const EmptyEvaluationError&) {
      continue;
    }
    const double n = static_cast<double>(r.evaluated_pixels);
    epe += r.epe * n;
    over1 += r.over_1px * n;
    d1 += r.d1 * n;
    pooled.evaluated_pixels += r.evaluated_pixels;
  }
  if (pooled.evaluated_pixels == 0) throw EmptyEvaluationError("evaluate_model: no valid pixels");
  const double n = static_cast<double>(pooled.evaluated_pixels);
  pooled.epe = epe / n;
  pooled.over_1px = over1 / n;
  pooled.d1 = d1 / n;
  return pooled;
}

std::string EpochLog::to_line() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu\t%.9g\t%.9g\t%.9g", epoch, train_loss, val_epe, val_over_1px);
  return buf;
}

TrainResult train(Model& model, const std::vector<StereoPair>& train_set,
                  const std::vector<StereoPair>& validation_set, const TrainerConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("train: dataset is empty");

  TrainResult result;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = std::min(config.batch_size, train_set.size());
  const std::size_t per_epoch = (train_set.size() + batch - 1) / batch;

  EpochLog current;
  std::size_t in_epoch = per_epoch;
  for (std::size_t step = 0; step < config.steps; ++step) {
    if (in_epoch == per_epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      in_epoch = 0;
      current = EpochLog{};
      current.epoch = result.log.size() + 1;
    }
    const std::size_t begin = in_epoch * batch;
    const std::size_t end = std::min(begin + batch, train_set.size());
    const double scale = 1.0 / static_cast<double>(end - begin);

    std::vector<Tensor> grads;
    double loss = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      loss += sample_loss(model, train_set[order[i]], config, &grads, scale).total * scale;
    }
    if (!std::isfinite(loss)) throw NonFiniteLossError(step + 1, loss);
    adam_step(model, result.optimizer, grads, config, config.learning_rate_at(step));

    ++in_epoch;
    current.train_loss += loss;
    current.step = step + 1;
    if (in_epoch == per_epoch || step + 1 == config.steps) {
      current.train_loss /= static_cast<double>(in_epoch);
      current.val_epe = std::numeric_limits<double>::quiet_NaN();
      current.val_over_1px = std::numeric_limits<double>::quiet_NaN();
      if (!validation_set.empty()) {
        const MetricsReport r = evaluate_model(model, validation_set);
        current.val_epe = r.epe;
        current.val_over_1px = r.over_1px;
      }
      result.log.push_back(current);
      if (on_epoch) on_epoch(current);
    }
  }
  std::ostringstream state;
  state << rng;
  result.rng_state = state.str();
  return result;
}

// ---------------------------------------------------------------------------

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.append(c, n);
  }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor_values(const Tensor& t) {
    for (double v : t.data()) f64(v);
  }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string data, std::string file) : data_(std::move(data)), file_(std::move(file)) {}

  void need(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) throw FormatError(file_ + ": truncated checkpoint while reading " + what);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<std::uint8_t>(data_[pos_++])} << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<std::uint8_t>(data_[pos_++])} << (8 * i);
    return v;
  }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void values(Tensor& t, const char* what) {
    need(t.size() * 8, what);
    for (auto& v : t.data()) v = std::bit_cast<double>(u64(what));
  }
  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }
  const std::string& file() const { return file_; }

 private:
  std::string data_;
  std::string file_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[] = "AASTEREO";
constexpr std::size_t kMagicLength = 8;

struct ParamRecord {
  std::string name;
  Tensor value;
};

// Matches the stored table against `model`, in order, and copies values.
void fill_model(Model& model, std::vector<ParamRecord>& records, const std::string& file) {
  std::size_t i = 0;
  model.visit([&](const std::string& name, Tensor& param) {
    if (i >= records.size()) {
      throw FormatError(file + ": checkpoint has no entry for parameter " + name);
    }
    const ParamRecord& rec = records[i];
    if (rec.name != name) {
      throw FormatError(file + ": parameter " + std::to_string(i) + " is '" + rec.name +
                        "' in the checkpoint but '" + name + "' in the model");
    }
    if (rec.value.shape() != param.shape()) {
      throw FormatError(file + ": parameter " + name + " has shape " +
                        shape_string(rec.value.shape()) + " in the checkpoint but " +
                        shape_string(param.shape()) + " in the model");
    }
    param = rec.value;
    ++i;
  });
  if (i != records.size()) {
    throw FormatError(file + ": checkpoint has unexpected parameter " + records[i].name);
  }
}

Checkpoint load_impl(const std::filesystem::path& path, const ModelConfig* expected) {
  const std::string file = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + file);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), file);

  if (r.take(kMagicLength, "magic") != std::string(kMagic, kMagicLength)) {
    throw FormatError(file + ": not a checkpoint (bad magic)");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError(file + ": checkpoint version " + std::to_string(version) +
                      " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const ModelConfig stored = ModelConfig::read(IniDocument::parse(r.str("config")));

  const std::uint32_t count = r.u32("parameter count");
  std::vector<ParamRecord> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    ParamRecord rec;
    rec.name = r.str("parameter name");
    const std::uint32_t rank = r.u32("parameter rank");
    if (rank == 0 || rank > 8) throw FormatError(file + ": parameter " + rec.name + " has bad rank");
    Shape shape;
    std::uint64_t total = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::uint64_t e = r.u64("parameter extent");
      if (e == 0 || total > (std::uint64_t{1} << 40) / e) {
        throw FormatError(file + ": parameter " + rec.name + " has bad extents");
      }
      total *= e;
      shape.push_back(e);
    }
    rec.value = Tensor(shape);
    r.values(rec.value, "parameter values");
    records.push_back(std::move(rec));
  }

  Checkpoint ckpt;
  ckpt.model = make_model(expected ? *expected : stored);
  fill_model(ckpt.model, records, file);
  if (expected) ckpt.model.config = stored;

  if (r.u8("moment flag")) {
    AdamState state;
    state.step = r.u64("optimizer step");
    for (auto* moments : {&state.m, &state.v}) {
      for (const auto& rec : records) {
        Tensor t(rec.value.shape());
        r.values(t, "optimizer moments");
        moments->push_back(std::move(t));
      }
    }
    ckpt.optimizer = std::move(state);
  }
  ckpt.rng_state = r.str("rng state");
  if (!r.done()) throw FormatError(file + ": trailing bytes after checkpoint");
  return ckpt;
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  Model model = checkpoint.model;
  IniDocument config;
  model.config.write(config);

  Writer w;
  w.bytes(kMagic, kMagicLength);
  w.u32(kCheckpointVersion);
  w.str(config.to_text());
  std::vector<std::pair<std::string, const Tensor*>> params;
  model.visit([&](const std::string& name, Tensor& t) { params.emplace_back(name, &t); });
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t->rank()));
    for (std::size_t e : t->shape()) w.u64(e);
    w.tensor_values(*t);
  }
  const auto& opt = checkpoint.optimizer;
  const bool moments = opt && opt->m.size() == params.size() && opt->v.size() == params.size();
  w.u8(moments ? 1 : 0);
  if (moments) {
    w.u64(opt->step);
    for (const auto& t : opt->m) w.tensor_values(t);
    for (const auto& t : opt->v) w.tensor_values(t);
  }
  w.str(checkpoint.rng_state);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  if (!out) throw FormatError("short write to checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return load_impl(path, nullptr); }

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  return load_impl(path, &expected);
}

}  // namespace aastereo
