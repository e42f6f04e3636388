#pragma once

#include <span>

#include "aastereo/autodiff.hpp"

// Elementwise and reduction operators recorded on a Tape.
namespace aastereo::ops {

Var add(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var a, double factor);
Var square(Tape& tape, Var a);
// Sum of all elements, shape {1}.
Var sum(Tape& tape, Var a);
Var sigmoid(Tape& tape, Var a);
Var leaky_relu(Tape& tape, Var a, double slope);
// Softmax along axis 0; the remaining axes index independent columns.
Var softmax(Tape& tape, Var a);
// Same values under a new shape with equal element count.
Var reshape(Tape& tape, Var a, Shape shape);
// Concatenation along axis 0; trailing extents must agree.
Var concat(Tape& tape, std::span<const Var> parts);

}  // namespace aastereo::ops
