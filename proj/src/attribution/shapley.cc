#include "ctformer/attribution/shapley.h"

#include <bit>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "ctformer/util/parallel.h"

namespace ctformer::attribution {

namespace {

Coalition coalition_of(std::uint64_t bits, std::size_t n) {
  Coalition c(n, 0);
  for (std::size_t i = 0; i < n; ++i) c[i] = static_cast<std::uint8_t>((bits >> i) & 1U);
  return c;
}

}  // namespace

ShapleyValues exact_shapley(const CoalitionGame& game, std::size_t threads) {
  const std::size_t n = game.n_players;
  if (n > kMaxExactPlayers) {
    throw std::invalid_argument("exact_shapley: " + std::to_string(n) +
                                " players exceed the enumeration limit of " +
                                std::to_string(kMaxExactPlayers) + "; use sampled_shapley");
  }
  const std::size_t n_subsets = std::size_t{1} << n;
  std::vector<double> v(n_subsets);
  util::parallel_for(n_subsets, threads, [&](std::size_t s) { v[s] = game.value(coalition_of(s, n)); });

  // weight(|S|) = |S|! (n - |S| - 1)! / n!
  std::vector<double> weight(n == 0 ? 1 : n);
  for (std::size_t k = 0; k < n; ++k) {
    weight[k] = std::exp(std::lgamma(static_cast<double>(k) + 1.0) +
                         std::lgamma(static_cast<double>(n - k)) -
                         std::lgamma(static_cast<double>(n) + 1.0));
  }
  ShapleyValues out;
  out.values.assign(n, 0.0);
  out.standard_errors.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t bit = std::size_t{1} << i;
    double total = 0.0;
    for (std::size_t s = 0; s < n_subsets; ++s) {
      if (s & bit) continue;
      total += weight[static_cast<std::size_t>(std::popcount(s))] * (v[s | bit] - v[s]);
    }
    out.values[i] = total;
  }
  out.background_value = v[0];
  out.full_value = v[n_subsets - 1];
  out.exact = true;
  out.evaluations = n_subsets;
  return out;
}

ShapleyValues sampled_shapley(const CoalitionGame& game, std::size_t n_permutations,
                              std::uint64_t seed, std::size_t threads) {
  if (n_permutations == 0) throw std::invalid_argument("sampled_shapley: need at least one permutation");
  const std::size_t n = game.n_players;

  // Permutations are drawn up front so the result does not depend on threads.
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> perms(n_permutations, std::vector<std::size_t>(n));
  for (auto& perm : perms) {
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng() % i);
      std::swap(perm[i - 1], perm[j]);
    }
  }

  const double background = game.value(Coalition(n, 0));
  const double full = game.value(Coalition(n, 1));
  std::vector<std::vector<double>> marginals(n_permutations, std::vector<double>(n, 0.0));
  util::parallel_for(n_permutations, threads, [&](std::size_t p) {
    Coalition c(n, 0);
    double prev = background;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t player = perms[p][k];
      c[player] = 1;
      // The last step is the full coalition, already known.
      const double cur = k + 1 == n ? full : game.value(c);
      marginals[p][player] = cur - prev;
      prev = cur;
    }
  });

  ShapleyValues out;
  out.values.assign(n, 0.0);
  out.standard_errors.assign(n, 0.0);
  const auto m = static_cast<double>(n_permutations);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t p = 0; p < n_permutations; ++p) sum += marginals[p][i];
    const double mean = sum / m;
    double sq = 0.0;
    for (std::size_t p = 0; p < n_permutations; ++p) {
      sq += (marginals[p][i] - mean) * (marginals[p][i] - mean);
    }
    out.values[i] = mean;
    out.standard_errors[i] = n_permutations > 1 ? std::sqrt(sq / (m - 1.0) / m) : 0.0;
  }
  out.background_value = background;
  out.full_value = full;
  out.exact = false;
  out.permutations = n_permutations;
  out.evaluations = 2 + n_permutations * (n > 0 ? n - 1 : 0);
  return out;
}

}  // namespace ctformer::attribution
