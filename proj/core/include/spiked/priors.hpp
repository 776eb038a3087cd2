#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "spiked/rng.hpp"

namespace spiked {

struct Atom {
  double value;
  double weight;
};

// Centered prior P_X with D-bounded support, stored as a finite atom list.
//
// Atoms are kept sorted by value; atoms closer than 1e-14 are merged. Instances
// are immutable after construction.
class Prior {
 public:
  // Validates: weights > 0 summing to 1, centered, |v| <= support_bound.
  // A negative support_bound means "use max |v|".
  static Prior from_atoms(std::vector<Atom> atoms, std::string label,
                          double support_bound = -1.0);

  std::span<const Atom> atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  double second_moment() const { return rho_; }
  double support_bound() const { return bound_; }
  const std::string& label() const { return label_; }
  double mean() const;

  // True when the atom list is invariant under v -> -v.
  bool is_symmetric(double tol = 1e-12) const;

  std::string to_json() const;
  static Prior from_json(const std::string& text);

  friend bool operator==(const Prior& a, const Prior& b);

 private:
  Prior() = default;

  std::vector<Atom> atoms_;
  double rho_ = 0.0;
  double bound_ = 0.0;
  std::string label_;
};

Prior make_rademacher();

// Atoms {-1, 0, +1} with weights {p/2, 1-p, p/2}; p in (0, 1].
Prior make_sparse_rademacher(double p);

// Uniform law on [-D, D] discretized by n_nodes Gauss-Legendre atoms.
Prior make_discretized_uniform(double bound, int n_nodes);

// Draws count i.i.d. values; deterministic given the generator state.
std::vector<double> sample(const Prior& prior, std::size_t count, Philox4x32& stream);

}  // namespace spiked
