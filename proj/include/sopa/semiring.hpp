#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace sopa {

using Score = double;

enum class SemiringKind { kMaxProduct, kMaxSum, kSumProduct };

std::string_view to_string(SemiringKind kind);
SemiringKind parse_semiring_kind(std::string_view name);

/// The three semirings used for pattern scoring.
///
///   max-product: (max, *, 0, 1)
///   max-sum:     (max, +, -inf, 0)
///   sum-product: (+, *, 0, 1)
///
/// max-product is only a semiring over non-negative scores; with negative
/// transition scores dynamic programming no longer equals the best path.
class Semiring {
 public:
  constexpr explicit Semiring(SemiringKind kind) : kind_(kind) {}

  SemiringKind kind() const { return kind_; }
  Score zero() const;
  Score one() const;
  bool idempotent_plus() const { return kind_ != SemiringKind::kSumProduct; }

  // Both throw sopa::Error on NaN input.
  Score plus(Score a, Score b) const;
  Score times(Score a, Score b) const;

 private:
  SemiringKind kind_;
};

Score plus(SemiringKind kind, Score a, Score b);
Score times(SemiringKind kind, Score a, Score b);

/// Semiring that counts every plus/times call. Used to check the linear
/// cost of document scoring by operation counts rather than wall clock.
class CountingSemiring {
 public:
  explicit CountingSemiring(SemiringKind kind) : base_(kind) {}

  SemiringKind kind() const { return base_.kind(); }
  Score zero() const { return base_.zero(); }
  Score one() const { return base_.one(); }
  bool idempotent_plus() const { return base_.idempotent_plus(); }

  Score plus(Score a, Score b) const {
    ++plus_count_;
    return base_.plus(a, b);
  }
  Score times(Score a, Score b) const {
    ++times_count_;
    return base_.times(a, b);
  }
  // Records a plus that the caller resolved itself (argmax selection).
  void note_plus() const { ++plus_count_; }

  std::uint64_t plus_count() const { return plus_count_; }
  std::uint64_t times_count() const { return times_count_; }
  std::uint64_t total() const { return plus_count_ + times_count_; }
  void reset() const { plus_count_ = times_count_ = 0; }

 private:
  Semiring base_;
  mutable std::uint64_t plus_count_ = 0;
  mutable std::uint64_t times_count_ = 0;
};

}  // namespace sopa
