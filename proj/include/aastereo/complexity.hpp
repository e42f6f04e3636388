#pragma once

#include <cstdint>
#include <string>

namespace aastereo {

struct ComplexityQuery {
  std::uint64_t k = 3;  // kernel extent
  std::uint64_t c = 64;  // concatenated feature channels
  std::uint64_t d = 64;  // disparity candidates
  std::uint64_t h = 1;
  std::uint64_t w = 1;
  std::uint64_t layers = 1;

  void validate() const;
};

// Multiply-accumulate counts of one 3D convolution layer over a C x D x H x W
// volume, F_3d = K^3 C^2 D H W, and of one deformable aggregation layer over
// a D x H x W volume, F_def = K^2 D^2 H W + 3 K^4 D H W + 3 K^2 D H W. All
// arithmetic is exact; overflow of 64 bits is rejected.
struct ComplexityReport {
  ComplexityQuery query;
  std::uint64_t f3d = 0;
  std::uint64_t fdef = 0;
  std::uint64_t f3d_total = 0;  // times query.layers
  std::uint64_t fdef_total = 0;
  // fdef / f3d in lowest terms.
  std::uint64_t ratio_num = 0;
  std::uint64_t ratio_den = 0;

  // Exact test of fdef / f3d <= num / den.
  bool ratio_at_most(std::uint64_t num, std::uint64_t den) const;
  std::string to_text() const;
};

ComplexityReport compute_complexity(const ComplexityQuery& query);

}  // namespace aastereo
