#include "spiked/priors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>

#include "json.hpp"
#include "spiked/error.hpp"
#include "spiked/quadrature.hpp"

namespace spiked {
namespace {

std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

constexpr double kMomentTol = 1e-12;
constexpr double kMergeSpacing = 1e-14;

}  // namespace

Prior Prior::from_atoms(std::vector<Atom> atoms, std::string label, double support_bound) {
  require(!atoms.empty(), "prior: atom list is empty");
  for (const Atom& a : atoms) {
    require(std::isfinite(a.value) && std::isfinite(a.weight), "prior: non-finite atom");
    require(a.weight > 0.0, "prior: atom weights must be strictly positive");
  }
  std::sort(atoms.begin(), atoms.end(),
            [](const Atom& a, const Atom& b) { return a.value < b.value; });
  std::vector<Atom> merged;
  for (const Atom& a : atoms) {
    if (!merged.empty() && a.value - merged.back().value < kMergeSpacing) {
      merged.back().weight += a.weight;
    } else {
      merged.push_back(a);
    }
  }

  double total = 0.0, mean = 0.0, second = 0.0, vmax = 0.0;
  for (const Atom& a : merged) {
    total += a.weight;
    mean += a.weight * a.value;
    second += a.weight * a.value * a.value;
    vmax = std::max(vmax, std::abs(a.value));
  }
  require(std::abs(total - 1.0) <= kMomentTol, "prior: weights must sum to 1");
  require(std::abs(mean) <= kMomentTol, "prior: distribution must be centered");
  const double bound = support_bound < 0.0 ? vmax : support_bound;
  require(vmax <= bound + kMomentTol, "prior: atom outside the declared support bound");

  Prior p;
  p.atoms_ = std::move(merged);
  p.rho_ = second;
  p.bound_ = bound;
  p.label_ = std::move(label);
  return p;
}

double Prior::mean() const {
  double m = 0.0;
  for (const Atom& a : atoms_) m += a.weight * a.value;
  return m;
}

bool Prior::is_symmetric(double tol) const {
  const std::size_t k = atoms_.size();
  for (std::size_t i = 0; i < k; ++i) {
    const Atom& a = atoms_[i];
    const Atom& b = atoms_[k - 1 - i];
    if (std::abs(a.value + b.value) > tol || std::abs(a.weight - b.weight) > tol) return false;
  }
  return true;
}

std::string Prior::to_json() const {
  nlohmann::json j;
  j["label"] = label_;
  j["atoms"] = nlohmann::json::array();
  for (const Atom& a : atoms_) j["atoms"].push_back({a.value, a.weight});
  j["rho"] = rho_;
  j["D"] = bound_;
  return j.dump();
}

Prior Prior::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("prior: invalid JSON: ") + e.what());
  }
  require(j.contains("atoms") && j["atoms"].is_array(), "prior: missing atoms array");
  std::vector<Atom> atoms;
  for (const auto& pair : j["atoms"]) {
    require(pair.is_array() && pair.size() == 2, "prior: atoms must be [value, weight] pairs");
    atoms.push_back({pair[0].get<double>(), pair[1].get<double>()});
  }
  const double bound = j.contains("D") ? j["D"].get<double>() : -1.0;
  Prior p = from_atoms(std::move(atoms), j.value("label", std::string("custom")), bound);
  if (j.contains("rho")) {
    require(std::abs(j["rho"].get<double>() - p.rho_) <= kMomentTol,
            "prior: stated rho disagrees with the atoms");
  }
  return p;
}

bool operator==(const Prior& a, const Prior& b) {
  if (a.atoms_.size() != b.atoms_.size()) return false;
  for (std::size_t i = 0; i < a.atoms_.size(); ++i) {
    if (a.atoms_[i].value != b.atoms_[i].value || a.atoms_[i].weight != b.atoms_[i].weight)
      return false;
  }
  return a.bound_ == b.bound_;
}

Prior make_rademacher() {
  return Prior::from_atoms({{-1.0, 0.5}, {1.0, 0.5}}, "rademacher", 1.0);
}

Prior make_sparse_rademacher(double p) {
  require(p > 0.0 && p <= 1.0, "sparse_rademacher: p must lie in (0, 1]");
  if (p == 1.0) return make_rademacher();
  return Prior::from_atoms({{-1.0, p / 2}, {0.0, 1.0 - p}, {1.0, p / 2}},
                           "sparse_rademacher(" + shortest(p) + ")", 1.0);
}

Prior make_discretized_uniform(double bound, int n_nodes) {
  require(bound > 0.0, "discretized_uniform: D must be positive");
  require(n_nodes >= 2, "discretized_uniform: need at least 2 nodes");
  const GaussQuadrature gl = gauss_legendre(n_nodes);
  std::vector<Atom> atoms;
  for (int i = 0; i < n_nodes; ++i) atoms.push_back({bound * gl.nodes[i], gl.weights[i]});
  return Prior::from_atoms(std::move(atoms),
                           "uniform(" + shortest(bound) + "," + std::to_string(n_nodes) + ")",
                           bound);
}

std::vector<double> sample(const Prior& prior, std::size_t count, Philox4x32& stream) {
  std::vector<double> w;
  for (const Atom& a : prior.atoms()) w.push_back(a.weight);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  std::vector<double> out(count);
  for (double& v : out) v = prior.atoms()[pick(stream)].value;
  return out;
}

}  // namespace spiked
