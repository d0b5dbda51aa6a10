#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace esgrad {

namespace detail {

inline constexpr std::uint64_t kPhiloxM2x64 = 0xD2B74407B1CE6E93ull;
inline constexpr std::uint64_t kPhiloxW64 = 0x9E3779B97F4A7C15ull;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace detail

// Philox-2x64 with 10 rounds (Salmon et al., SC'11). Counter in, two words out.
inline std::array<std::uint64_t, 2> philox2x64(std::array<std::uint64_t, 2> ctr,
                                               std::uint64_t key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) key += detail::kPhiloxW64;
    const unsigned __int128 product =
        static_cast<unsigned __int128>(detail::kPhiloxM2x64) * ctr[0];
    const auto hi = static_cast<std::uint64_t>(product >> 64);
    const auto lo = static_cast<std::uint64_t>(product);
    ctr = {hi ^ key ^ ctr[1], lo};
  }
  return ctr;
}

/// Immutable 128-bit key naming an independent random stream.
///
/// Keys never advance: every derived value is a pure function of the key and
/// a counter, so streams can be handed to any thread in any order.
class RngKey {
 public:
  RngKey() = default;
  explicit RngKey(std::uint64_t seed)
      : words_{detail::splitmix64(seed),
               detail::splitmix64(detail::splitmix64(seed) ^ 0x5851f42d4c957f2dull)} {}
  static RngKey from_words(std::uint64_t k0, std::uint64_t k1) {
    RngKey key;
    key.words_ = {k0, k1};
    return key;
  }

  // Derives a child key for `data`; distinct data give independent children.
  [[nodiscard]] RngKey fold_in(std::uint64_t data) const {
    const auto out = philox2x64({data, ~words_[1]}, words_[0] ^ kFoldDomain);
    return from_words(out[0], out[1]);
  }

  // Raw 128 bits of the stream at position `counter`.
  [[nodiscard]] std::array<std::uint64_t, 2> block(std::uint64_t counter) const {
    return philox2x64({counter, words_[1]}, words_[0]);
  }

  [[nodiscard]] const std::array<std::uint64_t, 2>& words() const { return words_; }

  friend bool operator==(const RngKey&, const RngKey&) = default;

 private:
  static constexpr std::uint64_t kFoldDomain = 0x243f6a8885a308d3ull;
  std::array<std::uint64_t, 2> words_{0, 0};
};

[[nodiscard]] inline std::vector<RngKey> split(const RngKey& key, std::size_t n) {
  if (n < 1) throw std::invalid_argument("split: n must be >= 1");
  std::vector<RngKey> keys;
  keys.reserve(n);
  for (std::size_t i = 0; i < n; ++i) keys.push_back(key.fold_in(i));
  return keys;
}

// Top 53 bits mapped to [0, 1).
inline double to_unit_interval(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Uniform draws in [0, 1); element i is a pure function of (key, i).
inline void fill_uniform(const RngKey& key, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); i += 2) {
    const auto bits = key.block(i / 2);
    out[i] = to_unit_interval(bits[0]);
    if (i + 1 < out.size()) out[i + 1] = to_unit_interval(bits[1]);
  }
}

// Standard normals by Box-Muller: block c yields (r cos(2 pi u2), r sin(2 pi u2))
// with r = sqrt(-2 ln u1), u1 in (0, 1].
inline void fill_normal(const RngKey& key, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); i += 2) {
    const auto bits = key.block(i / 2);
    const double u1 = 1.0 - to_unit_interval(bits[0]);
    const double u2 = to_unit_interval(bits[1]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    out[i] = radius * std::cos(angle);
    if (i + 1 < out.size()) out[i + 1] = radius * std::sin(angle);
  }
}

inline Eigen::VectorXd normal_vector(const RngKey& key, Eigen::Index dim) {
  Eigen::VectorXd v(dim);
  fill_normal(key, std::span<double>(v.data(), static_cast<std::size_t>(dim)));
  return v;
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Gaussian perturbation of one antithetic pair: sigma * z with z ~ N(0, I).
inline Eigen::VectorXd sample_pair(const RngKey& pair_key, Eigen::Index dim, double sigma) {
  return sigma * normal_vector(pair_key, dim);
}

/// N x P perturbations; with `antithetic`, row 2i+1 is exactly -row 2i.
struct PerturbationBlock {
  RowMatrix rows;
  bool antithetic = true;

  [[nodiscard]] Eigen::Index particles() const { return rows.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return rows.cols(); }
};

// Pair i draws from key.fold_in(i); negation is applied after sigma scaling.
[[nodiscard]] inline PerturbationBlock sample_antithetic(const RngKey& key, Eigen::Index n_pairs,
                                                         Eigen::Index dim, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sample_antithetic: sigma must be > 0");
  if (n_pairs < 1 || dim < 1)
    throw std::invalid_argument("sample_antithetic: n_pairs and dim must be >= 1");
  PerturbationBlock block{RowMatrix(2 * n_pairs, dim), true};
  for (Eigen::Index pair = 0; pair < n_pairs; ++pair) {
    const Eigen::VectorXd v = sample_pair(key.fold_in(static_cast<std::uint64_t>(pair)), dim, sigma);
    block.rows.row(2 * pair) = v.transpose();
    block.rows.row(2 * pair + 1) = -v.transpose();
  }
  return block;
}

}  // namespace esgrad
