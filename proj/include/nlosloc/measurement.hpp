#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "nlosloc/network.hpp"
#include "nlosloc/rng.hpp"

namespace nlosloc {

enum class EdgeType { kAgentAgent, kAgentAnchor };

struct EdgeRef {
  EdgeType type = EdgeType::kAgentAgent;
  int i = 0;
  int j = 0;

  friend bool operator==(const EdgeRef&, const EdgeRef&) = default;
};

enum class BiasConvention {
  kSquaredDomain,   // observation = d^2 + b + n
  kDistanceDomain,  // observation = (d + b + n)^2, b and n in meters
};

// Mixture noise model: an alpha fraction of edges carries a nonnegative
// NLOS bias on top of zero-mean Gaussian noise.
struct NoiseSpec {
  double nlos_fraction = 0.0;  // alpha in [0, 1]
  double gaussian_sigma = 0.0;
  double bias_low = 0.0;       // bias ~ U[bias_low, bias_high], 0 <= low <= high
  double bias_high = 0.0;
  BiasConvention bias_convention = BiasConvention::kSquaredDomain;
  std::uint64_t seed = 0;
  // NLOS flags are i.i.d. per edge by default; exact_fraction instead marks
  // exactly round(alpha * m) edges chosen by a seeded shuffle.
  bool exact_fraction = false;

  void validate() const {
    if (!(nlos_fraction >= 0.0 && nlos_fraction <= 1.0)) {
      throw std::invalid_argument("NoiseSpec: nlos_fraction outside [0,1]");
    }
    if (!(gaussian_sigma >= 0.0)) {
      throw std::invalid_argument("NoiseSpec: negative sigma");
    }
    if (!(bias_low >= 0.0 && bias_high >= bias_low)) {
      throw std::invalid_argument("NoiseSpec: bias interval must satisfy 0 <= low <= high");
    }
  }
};

// Evaluation-only ground truth. Solver-facing code consumes
// MeasurementSet::observations() and never sees these fields.
struct GroundTruth {
  double true_dsq = 0.0;
  bool nlos = false;
  double true_bias = 0.0;  // squared-domain bias; 0 on LOS edges
};

struct MeasurementRecord {
  EdgeRef edge;
  double observed_dsq = 0.0;
  GroundTruth truth;
};

struct Observation {
  EdgeRef edge;
  double observed_dsq = 0.0;
};

// Per-edge observations aligned one-to-one with the union of agent_edges
// and anchor_edges of the Network they were synthesized from (agent edges
// first, both in network order).
struct MeasurementSet {
  std::vector<MeasurementRecord> records;
  int clamped_count = 0;   // squared observations clamped up to zero
  bool has_truth = true;   // false for sets loaded without ground-truth columns

  std::vector<Observation> observations() const {
    std::vector<Observation> out;
    out.reserve(records.size());
    for (const MeasurementRecord& r : records) {
      out.push_back({r.edge, r.observed_dsq});
    }
    return out;
  }
};

// Draws the LOS/NLOS mixture. Per record the draw order is flag, bias,
// Gaussian noise, so a fixed seed reproduces the set bitwise.
//
// Squared-domain convention: obs = d^2 + b + n, clamped up to 0.
// Distance-domain convention: obs = max(0, d + b + n)^2; true_bias is
// recorded as the squared-domain equivalent (d + b)^2 - d^2 so that LOS
// records always carry true_bias = 0.
inline MeasurementSet synthesize_measurements(const Network& net,
                                              const NoiseSpec& spec) {
  net.validate();
  spec.validate();
  Rng rng(derive_seed(spec.seed, streams::kNoise));

  std::vector<EdgeRef> edges;
  edges.reserve(net.n_edges());
  for (const Edge& e : net.agent_edges) {
    edges.push_back({EdgeType::kAgentAgent, e.i, e.j});
  }
  for (const Edge& e : net.anchor_edges) {
    edges.push_back({EdgeType::kAgentAnchor, e.i, e.j});
  }

  std::vector<bool> nlos_flags(edges.size(), false);
  if (spec.exact_fraction) {
    const int m = static_cast<int>(edges.size());
    const int n_nlos = static_cast<int>(std::llround(spec.nlos_fraction * m));
    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    for (int i = m - 1; i > 0; --i) {  // Fisher-Yates
      const int j = static_cast<int>(rng.next_below(i + 1));
      std::swap(order[i], order[j]);
    }
    for (int t = 0; t < n_nlos; ++t) nlos_flags[order[t]] = true;
  }

  MeasurementSet out;
  out.records.reserve(edges.size());
  for (std::size_t t = 0; t < edges.size(); ++t) {
    const EdgeRef& e = edges[t];
    const double dsq =
        (e.type == EdgeType::kAgentAgent)
            ? squared_distance(net.agents.row(e.i), net.agents.row(e.j))
            : squared_distance(net.agents.row(e.i), net.anchors.row(e.j));

    MeasurementRecord rec;
    rec.edge = e;
    rec.truth.true_dsq = dsq;
    rec.truth.nlos = spec.exact_fraction
                         ? static_cast<bool>(nlos_flags[t])
                         : (rng.next_double() < spec.nlos_fraction);
    const double bias =
        rec.truth.nlos ? rng.uniform(spec.bias_low, spec.bias_high) : 0.0;
    const double noise =
        (spec.gaussian_sigma > 0.0) ? rng.gaussian(spec.gaussian_sigma) : 0.0;

    if (spec.bias_convention == BiasConvention::kSquaredDomain) {
      rec.truth.true_bias = bias;
      double obs = dsq + bias + noise;
      if (obs < 0.0) {
        obs = 0.0;
        ++out.clamped_count;
      }
      rec.observed_dsq = obs;
    } else {
      const double d = std::sqrt(dsq);
      // sqrt/square round-tripping must not leak a phantom bias onto LOS
      // edges, so only NLOS records get the squared-domain equivalent.
      rec.truth.true_bias =
          rec.truth.nlos ? (d + bias) * (d + bias) - dsq : 0.0;
      double meas = d + bias + noise;
      if (meas < 0.0) {
        meas = 0.0;
        ++out.clamped_count;
      }
      rec.observed_dsq = meas * meas;
    }
    out.records.push_back(rec);
  }
  return out;
}

}  // namespace nlosloc
