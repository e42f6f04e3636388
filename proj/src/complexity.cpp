#include "aastereo/complexity.hpp"

#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace aastereo {

void ComplexityQuery::validate() const {
  if (k == 0 || c == 0 || d == 0 || h == 0 || w == 0 || layers == 0) {
    throw std::invalid_argument("complexity: K, C, D, H, W and layers must all be positive");
  }
}

namespace {

std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r = 0;
  if (__builtin_mul_overflow(a, b, &r)) throw std::overflow_error("complexity: count exceeds 64 bits");
  return r;
}

std::uint64_t add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r = 0;
  if (__builtin_add_overflow(a, b, &r)) throw std::overflow_error("complexity: count exceeds 64 bits");
  return r;
}

}  // namespace

ComplexityReport compute_complexity(const ComplexityQuery& q) {
  q.validate();
  ComplexityReport r;
  r.query = q;
  const std::uint64_t hw = mul(q.h, q.w);
  const std::uint64_t k2 = mul(q.k, q.k);
  r.f3d = mul(mul(mul(k2, q.k), mul(q.c, q.c)), mul(q.d, hw));
  const std::uint64_t dhw = mul(q.d, hw);
  r.fdef = add(add(mul(k2, mul(q.d, dhw)), mul(3, mul(mul(k2, k2), dhw))), mul(3, mul(k2, dhw)));
  r.f3d_total = mul(r.f3d, q.layers);
  r.fdef_total = mul(r.fdef, q.layers);
  const std::uint64_t g = std::gcd(r.fdef, r.f3d);
  r.ratio_num = r.fdef / g;
  r.ratio_den = r.f3d / g;
  return r;
}

bool ComplexityReport::ratio_at_most(std::uint64_t num, std::uint64_t den) const {
  return static_cast<unsigned __int128>(fdef) * den <= static_cast<unsigned __int128>(f3d) * num;
}

std::string ComplexityReport::to_text() const {
  char buf[512];
  const double inverse = static_cast<double>(f3d) / static_cast<double>(fdef);
  std::snprintf(buf, sizeof buf,
                "K=%llu C=%llu D=%llu H=%llu W=%llu layers=%llu\n"
                "F_3d=%llu\n"
                "F_def=%llu\n"
                "ratio=%llu/%llu (1/%.4f)\n"
                "ratio_at_most_1_130=%s\n"
                "F_3d_total=%llu\n"
                "F_def_total=%llu\n",
                static_cast<unsigned long long>(query.k), static_cast<unsigned long long>(query.c),
                static_cast<unsigned long long>(query.d), static_cast<unsigned long long>(query.h),
                static_cast<unsigned long long>(query.w),
                static_cast<unsigned long long>(query.layers),
                static_cast<unsigned long long>(f3d), static_cast<unsigned long long>(fdef),
                static_cast<unsigned long long>(ratio_num),
                static_cast<unsigned long long>(ratio_den), inverse,
                ratio_at_most(1, 130) ? "true" : "false",
                static_cast<unsigned long long>(f3d_total),
                static_cast<unsigned long long>(fdef_total));
  return buf;
}

}  // namespace aastereo
