#include "aastereo/ops.hpp"

#include <algorithm>
#include <cmath>

#include "aastereo/error.hpp"

namespace aastereo::ops {

Var add(Tape& tape, Var a, Var b) {
  require_same_shape("add", tape.value(a), tape.value(b));
  Tensor out = tape.value(a) + tape.value(b);
  return tape.record("add", std::move(out), {a, b},
                     [](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{g, g};
                     });
}

Var scale(Tape& tape, Var a, double factor) {
  Tensor out = tape.value(a) * factor;
  return tape.record("scale", std::move(out), {a},
                     [factor](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{g * factor};
                     });
}

Var square(Tape& tape, Var a) {
  const Tensor& x = tape.value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * x[i];
  return tape.record("square", std::move(out), {a},
                     [&tape, a](const Tensor& g, const std::vector<bool>&) {
                       const Tensor& x = tape.value(a);
                       Tensor gx(x.shape());
                       for (std::size_t i = 0; i < x.size(); ++i) gx[i] = 2.0 * x[i] * g[i];
                       return std::vector<Tensor>{std::move(gx)};
                     });
}

Var sum(Tape& tape, Var a) {
  double acc = 0.0;
  for (double v : tape.value(a).data()) acc += v;
  return tape.record("sum", Tensor::scalar(acc), {a},
                     [&tape, a](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{Tensor(tape.value(a).shape(), g.item())};
                     });
}

Var reshape(Tape& tape, Var a, Shape shape) {
  const Shape original = tape.value(a).shape();
  Tensor out = tape.value(a).reshaped(std::move(shape));
  return tape.record("reshape", std::move(out), {a},
                     [original](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{g.reshaped(original)};
                     });
}

Var sigmoid(Tape& tape, Var a) {
  const Tensor& x = tape.value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
  Tensor saved = out;
  return tape.record("sigmoid", std::move(out), {a},
                     [y = std::move(saved)](const Tensor& g, const std::vector<bool>&) {
                       Tensor gx(y.shape());
                       for (std::size_t i = 0; i < y.size(); ++i) {
                         gx[i] = g[i] * y[i] * (1.0 - y[i]);
                       }
                       return std::vector<Tensor>{std::move(gx)};
                     });
}

Var leaky_relu(Tape& tape, Var a, double slope) {
  const Tensor& x = tape.value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : slope * x[i];
  return tape.record("leaky_relu", std::move(out), {a},
                     [&tape, a, slope](const Tensor& g, const std::vector<bool>&) {
                       const Tensor& x = tape.value(a);
                       Tensor gx(x.shape());
                       for (std::size_t i = 0; i < x.size(); ++i) {
                         gx[i] = x[i] > 0.0 ? g[i] : slope * g[i];
                       }
                       return std::vector<Tensor>{std::move(gx)};
                     });
}

Var softmax(Tape& tape, Var a) {
  const Tensor& x = tape.value(a);
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.size() / rows;
  Tensor out(x.shape());
  for (std::size_t c = 0; c < cols; ++c) {
    double peak = x[c];
    for (std::size_t r = 1; r < rows; ++r) peak = std::max(peak, x[r * cols + c]);
    double z = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      out[r * cols + c] = std::exp(x[r * cols + c] - peak);
      z += out[r * cols + c];
    }
    for (std::size_t r = 0; r < rows; ++r) out[r * cols + c] /= z;
  }
  Tensor saved = out;
  return tape.record("softmax", std::move(out), {a},
                     [y = std::move(saved), rows, cols](const Tensor& g, const std::vector<bool>&) {
                       Tensor gx(y.shape());
                       for (std::size_t c = 0; c < cols; ++c) {
                         double inner = 0.0;
                         for (std::size_t r = 0; r < rows; ++r) {
                           inner += g[r * cols + c] * y[r * cols + c];
                         }
                         for (std::size_t r = 0; r < rows; ++r) {
                           gx[r * cols + c] = y[r * cols + c] * (g[r * cols + c] - inner);
                         }
                       }
                       return std::vector<Tensor>{std::move(gx)};
                     });
}

Var concat(Tape& tape, std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape shape = tape.value(parts[0]).shape();
  Shape trailing(shape.begin() + 1, shape.end());
  std::size_t rows = 0;
  for (Var p : parts) {
    const Shape& s = tape.value(p).shape();
    if (Shape(s.begin() + 1, s.end()) != trailing) {
      throw ShapeError("concat: trailing shape mismatch " + shape_string(shape) + " vs " +
                       shape_string(s));
    }
    rows += s[0];
  }
  shape[0] = rows;
  Tensor out(shape);
  std::size_t pos = 0;
  for (Var p : parts) {
    const Tensor& v = tape.value(p);
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + pos);
    pos += v.size();
  }
  std::vector<Shape> shapes;
  for (Var p : parts) shapes.push_back(tape.value(p).shape());
  return tape.record("concat", std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                     [shapes](const Tensor& g, const std::vector<bool>& needs) {
                       std::vector<Tensor> grads(shapes.size());
                       std::size_t pos = 0;
                       for (std::size_t k = 0; k < shapes.size(); ++k) {
                         const std::size_t n = shape_numel(shapes[k]);
                         if (needs[k]) {
                           grads[k] = Tensor(shapes[k]);
                           std::copy(g.data().begin() + pos, g.data().begin() + pos + n,
                                     grads[k].data().begin());
                         }
                         pos += n;
                       }
                       return grads;
                     });
}

}  // namespace aastereo::ops
