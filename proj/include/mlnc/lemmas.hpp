#pragma once

// Exhaustive and randomized checks of the combinatorial and loss identities the
// analytic solution rests on.

#include <cstdint>
#include <string>
#include <vector>

namespace mlnc {

struct LemmaRow {
  std::string suite;
  int K = 0;  // 0 for suites pooled over K
  int m = 0;
  double value = 0.0;  // worst residual or violation found
  bool passed = false;
};

struct LemmaReport {
  std::vector<LemmaRow> rows;
  std::int64_t draws = 0;
  bool passed() const;
};

/// Gram and pseudo-inverse identities in exact rationals, the Pascal norm
/// identity on centered tag-wise features, and the PAL-CE linear lower bound
/// (random draws plus tightness at two-valued logits), for 2 <= K <= max_k.
/// Throws std::invalid_argument for max_k < 2 or draws < 0.
LemmaReport run_lemma_suite(int max_k, std::int64_t draws = 10000, std::uint64_t seed = 2024);

}  // namespace mlnc
