#include "aastereo/parameters.hpp"

namespace aastereo {

Var ParamBinder::operator()(const Tensor& param) {
  auto it = vars_.find(&param);
  if (it != vars_.end()) return it->second;
  Var v = trainable_ ? tape_.variable(param) : tape_.constant(param);
  vars_.emplace(&param, v);
  return v;
}

Tensor ParamBinder::grad(const Tensor& param) const {
  auto it = vars_.find(&param);
  if (it == vars_.end()) return Tensor::zeros_like(param);
  return tape_.grad(it->second);
}

}  // namespace aastereo
