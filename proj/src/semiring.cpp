#include "sopa/semiring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sopa/error.hpp"

namespace sopa {

namespace {

void check_operands(const char* op, Score a, Score b) {
  if (std::isnan(a) || std::isnan(b)) {
    throw Error(std::string("semiring ") + op + ": NaN operand");
  }
}

}  // namespace

std::string_view to_string(SemiringKind kind) {
  switch (kind) {
    case SemiringKind::kMaxProduct: return "max-product";
    case SemiringKind::kMaxSum: return "max-sum";
    case SemiringKind::kSumProduct: return "sum-product";
  }
  return "?";
}

SemiringKind parse_semiring_kind(std::string_view name) {
  if (name == "max-product") return SemiringKind::kMaxProduct;
  if (name == "max-sum") return SemiringKind::kMaxSum;
  if (name == "sum-product") return SemiringKind::kSumProduct;
  throw Error("unknown semiring '" + std::string(name) +
              "' (expected max-product, max-sum or sum-product)");
}

Score Semiring::zero() const {
  return kind_ == SemiringKind::kMaxSum ? -std::numeric_limits<Score>::infinity() : 0.0;
}

Score Semiring::one() const { return kind_ == SemiringKind::kMaxSum ? 0.0 : 1.0; }

Score Semiring::plus(Score a, Score b) const {
  check_operands("plus", a, b);
  if (kind_ == SemiringKind::kSumProduct) return a + b;
  return std::max(a, b);
}

Score Semiring::times(Score a, Score b) const {
  check_operands("times", a, b);
  if (kind_ == SemiringKind::kMaxSum) {
    // -inf annihilates even against +inf.
    if (a == -std::numeric_limits<Score>::infinity() ||
        b == -std::numeric_limits<Score>::infinity()) {
      return -std::numeric_limits<Score>::infinity();
    }
    return a + b;
  }
  return a * b;
}

Score plus(SemiringKind kind, Score a, Score b) { return Semiring(kind).plus(a, b); }
Score times(SemiringKind kind, Score a, Score b) { return Semiring(kind).times(a, b); }

}  // namespace sopa
