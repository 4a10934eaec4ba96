#ifndef CTFORMER_ATTRIBUTION_SHAPLEY_H_
#define CTFORMER_ATTRIBUTION_SHAPLEY_H_

#include <cstdint>
#include <functional>
#include <vector>

namespace ctformer::attribution {

// Coalition as a membership vector: on[i] != 0 means player i is present.
using Coalition = std::vector<std::uint8_t>;

// The empty coalition is the background. value must be deterministic and
// safe to call from several threads at once.
struct CoalitionGame {
  std::size_t n_players = 0;
  std::function<double(const Coalition&)> value;
};

struct ShapleyValues {
  std::vector<double> values;
  // Zero in exact mode.
  std::vector<double> standard_errors;
  double full_value = 0.0;
  double background_value = 0.0;
  bool exact = true;
  std::size_t permutations = 0;
  std::size_t evaluations = 0;
};

inline constexpr std::size_t kMaxExactPlayers = 15;

// Full subset enumeration. Throws std::invalid_argument for more than 15
// players; use sampled_shapley instead.
ShapleyValues exact_shapley(const CoalitionGame& game, std::size_t threads = 1);

// Permutation sampling. Every permutation's marginals telescope to
// v(all) - v(empty), so efficiency holds exactly. Deterministic in seed and
// independent of the thread count.
ShapleyValues sampled_shapley(const CoalitionGame& game, std::size_t n_permutations,
                              std::uint64_t seed, std::size_t threads = 1);

}  // namespace ctformer::attribution

#endif  // CTFORMER_ATTRIBUTION_SHAPLEY_H_
