#pragma once

// Single-pass pattern recurrence shared by inference (plain doubles),
// operation counting and training (tape variables).
//
// For t = 1..n, with P = H_{t-1} and H_0 = eps_step(pi):
//   pre_j = (P_j * self_j) + (P_{j-1} * main_{j-1})
//   cur_j = pre_j + (pre_{j-1} * eps_{j-1})         (first-order epsilon)
//   s_t   = cur_L
//   H_t   = cur + H_0                                (restart: spans starting at t+1)
// and the document score is the semiring sum of s_1..s_n. Extracting s_t
// before the restart merge keeps zero-token "matches" out of the score, so
// the total is exactly the semiring sum over all nonempty subspans.
//
// Under idempotent semirings, + is resolved by selection so that the chosen
// operand is known. Ties prefer the earlier span start, then
// main > epsilon > self-loop.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "sopa/error.hpp"

namespace sopa::detail {

enum class Step : std::uint8_t { kNone, kMain, kSelf, kEps };

struct Backpointers {
  int length = 0;
  int tokens = 0;
  // Indexed [(t - 1) * (L + 1) + j] for t = 1..n.
  std::vector<Step> pre;            // kMain or kSelf
  std::vector<std::uint8_t> eps;    // cur_j came through epsilon from pre_{j-1}
  std::vector<std::uint8_t> restart;  // H_t[j] taken from the restart row
  std::vector<int> start;           // span start of cur_t[j]

  std::size_t at(int t, int j) const {
    return static_cast<std::size_t>(t - 1) * static_cast<std::size_t>(length + 1) +
           static_cast<std::size_t>(j);
  }
};

template <class V>
struct RecurrenceResult {
  V total;
  std::vector<V> per_token;
  int best_end = 0;    // 1-based token index of the chosen s_t (idempotent only)
  int best_start = 0;  // 0-based span start of that match
};

template <class V>
struct Cell {
  V value;
  int start;
};

// Strictly better: larger score, or equal score with an earlier start.
template <class Ops, class V>
bool strictly_better(const Ops& ops, const Cell<V>& a, const Cell<V>& b) {
  const double va = ops.value(a.value);
  const double vb = ops.value(b.value);
  if (std::isnan(va) || std::isnan(vb)) throw Error("NaN score in pattern recurrence");
  if (va != vb) return va > vb;
  return a.start < b.start;
}

/// `self` and `main` hold n * L band scores (token-major), `eps` holds L.
/// `hidden` (optional) receives H_0..H_n as doubles.
template <class Ops>
RecurrenceResult<typename Ops::Value> run_recurrence(
    Ops& ops, int length, int n, std::span<const typename Ops::Value> self,
    std::span<const typename Ops::Value> main, std::span<const typename Ops::Value> eps,
    Backpointers* back = nullptr, std::vector<std::vector<double>>* hidden = nullptr) {
  using V = typename Ops::Value;
  const int L = length;
  const bool idem = ops.idempotent();
  const auto width = static_cast<std::size_t>(L + 1);

  // Restart row H_0 = eps_step(pi).
  std::vector<V> restart(width, ops.zero());
  restart[0] = ops.one();
  if (L >= 1) {
    const V via_eps = ops.times(ops.one(), eps[0]);
    if (idem) {
      ops.note_plus();
      // pi_1 is zero, so the epsilon path wins unless it is zero as well.
      if (ops.value(via_eps) > ops.value(restart[1])) restart[1] = via_eps;
    } else {
      restart[1] = ops.plus(restart[1], via_eps);
    }
  }

  if (back) {
    back->length = L;
    back->tokens = n;
    const auto cells = width * static_cast<std::size_t>(n);
    back->pre.assign(cells, Step::kNone);
    back->eps.assign(cells, 0);
    back->restart.assign(cells, 0);
    back->start.assign(cells, 0);
  }
  auto record_hidden = [&](const std::vector<V>& row) {
    if (!hidden) return;
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = ops.value(row[j]);
    hidden->push_back(std::move(out));
  };
  record_hidden(restart);

  std::vector<Cell<V>> prev(width, Cell<V>{ops.zero(), 0});
  for (std::size_t j = 0; j < width; ++j) prev[j] = {restart[j], 0};
  std::vector<Cell<V>> pre(width, Cell<V>{ops.zero(), 0});
  std::vector<Step> pre_kind(width, Step::kNone);
  std::vector<Cell<V>> cur(width, Cell<V>{ops.zero(), 0});
  std::vector<V> merged(width, ops.zero());

  RecurrenceResult<V> result{ops.zero(), {}, 0, 0};
  result.per_token.reserve(static_cast<std::size_t>(n));
  Cell<V> best{ops.zero(), 0};

  for (int t = 1; t <= n; ++t) {
    const auto band = static_cast<std::size_t>(t - 1) * static_cast<std::size_t>(L);

    for (int j = 0; j <= L; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      bool have = false;
      Cell<V> chosen{ops.zero(), 0};
      Step kind = Step::kNone;
      if (j >= 1) {
        chosen = {ops.times(prev[uj - 1].value, main[band + uj - 1]), prev[uj - 1].start};
        kind = Step::kMain;
        have = true;
      }
      if (j < L) {
        Cell<V> via_self{ops.times(prev[uj].value, self[band + uj]), prev[uj].start};
        if (!have) {
          chosen = via_self;
          kind = Step::kSelf;
        } else if (idem) {
          ops.note_plus();
          if (strictly_better(ops, via_self, chosen)) {
            chosen = via_self;
            kind = Step::kSelf;
          }
        } else {
          chosen.value = ops.plus(chosen.value, via_self.value);
        }
      }
      pre[uj] = chosen;
      pre_kind[uj] = kind;
    }

    for (int j = 0; j <= L; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      Cell<V> chosen = pre[uj];
      bool took_eps = false;
      if (j >= 1) {
        Cell<V> via_eps{ops.times(pre[uj - 1].value, eps[uj - 1]), pre[uj - 1].start};
        if (idem) {
          ops.note_plus();
          // Epsilon outranks a self-loop on a full tie, loses to a main step.
          const bool eps_first = pre_kind[uj] == Step::kSelf;
          if (eps_first ? !strictly_better(ops, chosen, via_eps)
                        : strictly_better(ops, via_eps, chosen)) {
            chosen = via_eps;
            took_eps = true;
          }
        } else {
          chosen.value = ops.plus(chosen.value, via_eps.value);
        }
      }
      cur[uj] = chosen;
      if (back) {
        const auto at = back->at(t, j);
        back->pre[at] = pre_kind[uj];
        back->eps[at] = took_eps ? 1 : 0;
        back->start[at] = chosen.start;
      }
    }

    // s_t
    const Cell<V>& end = cur[static_cast<std::size_t>(L)];
    result.per_token.push_back(end.value);
    if (t == 1) {
      best = end;
      result.best_end = 1;
    } else if (idem) {
      ops.note_plus();
      if (strictly_better(ops, end, best)) {
        best = end;
        result.best_end = t;
      }
    } else {
      best.value = ops.plus(best.value, end.value);
    }

    // H_t = cur + restart; the restart row's spans start at token t (0-based).
    for (std::size_t j = 0; j < width; ++j) {
      Cell<V> fresh{restart[j], t};
      if (idem) {
        ops.note_plus();
        if (strictly_better(ops, fresh, cur[j])) {
          prev[j] = fresh;
          if (back) back->restart[back->at(t, static_cast<int>(j))] = 1;
        } else {
          prev[j] = cur[j];
        }
      } else {
        prev[j] = {ops.plus(cur[j].value, restart[j]), 0};
      }
      merged[j] = prev[j].value;
    }
    record_hidden(merged);
  }

  result.total = best.value;
  result.best_start = best.start;
  return result;
}

}  // namespace sopa::detail
