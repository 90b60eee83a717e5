#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "sensindex/errors.hpp"
#include "sensindex/rng.hpp"

namespace sensindex {

// Paired observations (x_i, y_i); y is scalar (ys.size() == 1) or a d-vector
// stored column-wise: ys[k][i] is component k of observation i.
struct Sample {
  std::vector<double> xs;
  std::vector<std::vector<double>> ys;

  std::size_t n() const { return xs.size(); }
  std::size_t dim() const { return ys.size(); }
  const std::vector<double>& y() const { return ys.at(0); }

  void validate() const {
    if (ys.empty()) throw ParseError("sample: no y columns");
    for (const auto& col : ys)
      if (col.size() != xs.size()) throw ParseError("sample: column length mismatch");
    for (double v : xs)
      if (!std::isfinite(v)) throw NonFinite("sample: non-finite x value");
    for (const auto& col : ys)
      for (double v : col)
        if (!std::isfinite(v)) throw NonFinite("sample: non-finite y value");
  }
};

enum class TiePolicy { error, stable_index, random_jitter };

inline const char* to_string(TiePolicy p) {
  switch (p) {
    case TiePolicy::error: return "error";
    case TiePolicy::stable_index: return "stable-index";
    case TiePolicy::random_jitter: return "random-jitter";
  }
  return "?";
}

inline TiePolicy tie_policy_from_string(const std::string& s) {
  if (s == "error") return TiePolicy::error;
  if (s == "stable-index") return TiePolicy::stable_index;
  if (s == "random-jitter") return TiePolicy::random_jitter;
  throw InvalidLevel("unknown tie policy '" + s + "' (error|stable-index|random-jitter)");
}

// Order permutation: sigma[k] is the (0-based) index of the (k+1)-th smallest
// value. Deterministic: stable sort, with ties resolved by the policy
// (error -> throw; stable-index -> original index order; random-jitter ->
// seeded uniform perturbation, seed recorded by the caller via RankStructure).
inline std::vector<std::size_t> sort_permutation(const std::vector<double>& values, TiePolicy policy,
                                                 std::uint64_t jitter_seed = 0) {
  const std::size_t n = values.size();
  for (double v : values)
    if (!std::isfinite(v)) throw NonFinite("sort_permutation: non-finite value");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  if (policy == TiePolicy::random_jitter) {
    std::vector<double> jitter(n);
    for (std::size_t i = 0; i < n; ++i) jitter[i] = Stream(jitter_seed, i).uniform01();
    std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
      if (values[a] != values[b]) return values[a] < values[b];
      return jitter[a] < jitter[b];
    });
  } else {
    std::stable_sort(perm.begin(), perm.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    if (policy == TiePolicy::error) {
      for (std::size_t k = 0; k + 1 < n; ++k)
        if (values[perm[k]] == values[perm[k + 1]])
          throw TiesPresent("duplicate value " + std::to_string(values[perm[k]]) +
                            " (tie policy 'error'); rerun with --tie-policy stable-index or random-jitter");
    }
  }
  return perm;
}

inline std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) inv[perm[k]] = k;
  return inv;
}

// Cyclic right-neighbor map: the successor of index j in x-order, with the
// largest observation wrapping to the smallest. Always a single n-cycle.
inline std::vector<std::size_t> neighbor_map(const std::vector<std::size_t>& sigma) {
  const std::size_t n = sigma.size();
  std::vector<std::size_t> nb(n);
  for (std::size_t k = 0; k < n; ++k) nb[sigma[k]] = sigma[(k + 1) % n];
  return nb;
}

// Strict ranks R_i = #{ j : y_j <= y_i } in {1..n} (no ties); under a
// tie-breaking policy, tied values receive distinct ranks in policy order.
inline std::vector<std::int64_t> ranks(const std::vector<double>& ys, TiePolicy policy,
                                       std::uint64_t jitter_seed = 0) {
  const auto order = sort_permutation(ys, policy, jitter_seed);
  std::vector<std::int64_t> r(ys.size());
  for (std::size_t k = 0; k < order.size(); ++k) r[order[k]] = static_cast<std::int64_t>(k) + 1;
  return r;
}

// Everything downstream consumes this bundle. All indices are 0-based in
// memory; formulas documented 1-based.
struct RankStructure {
  std::vector<std::size_t> sigma;      // sigma[k]: index of (k+1)-th smallest x
  std::vector<std::size_t> sigma_inv;  // sigma_inv[j]: sorted position of j
  std::vector<std::size_t> neighbor;   // j -> N(j)
  std::vector<std::int64_t> ranks_y;   // strict ranks of scalar y (empty if d > 1
                                       // or the caller skipped them)
  TiePolicy policy = TiePolicy::error;
  std::uint64_t jitter_seed = 0;       // recorded when policy == random_jitter
};

// The y ranks are only consumed by the rank-gap statistics (CvM, Chatterjee);
// variance-ratio estimation works on tied or constant outputs, so callers on
// that path ask for the x-structure alone via with_y_ranks = false.
inline RankStructure build_rank_structure(const Sample& sample, TiePolicy policy,
                                          std::uint64_t jitter_seed = 0,
                                          bool with_y_ranks = true) {
  sample.validate();
  if (sample.n() < 2) throw ParseError("rank structure needs n >= 2");
  RankStructure rs;
  rs.policy = policy;
  rs.jitter_seed = jitter_seed;
  rs.sigma = sort_permutation(sample.xs, policy, jitter_seed);
  rs.sigma_inv = invert_permutation(rs.sigma);
  rs.neighbor = neighbor_map(rs.sigma);
  if (with_y_ranks && sample.dim() == 1) rs.ranks_y = ranks(sample.y(), policy, jitter_seed);
  return rs;
}

}  // namespace sensindex
