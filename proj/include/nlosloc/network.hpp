#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "nlosloc/geometry.hpp"
#include "nlosloc/rng.hpp"

namespace nlosloc {

// Undirected edge. Agent-agent edges keep i < j; agent-anchor edges carry
// (agent index, anchor index).
struct Edge {
  int i = 0;
  int j = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Agent/anchor coordinates plus the measurement graph. Agent rows are
// ground truth when has_agent_truth is set (synthetic instances); loaded
// instances may carry only the topology.
struct Network {
  Eigen::MatrixXd agents;           // N x k
  Eigen::MatrixXd anchors;          // M x k
  std::vector<Edge> agent_edges;    // i < j, strictly increasing
  std::vector<Edge> anchor_edges;   // (agent, anchor), lexicographic
  bool has_agent_truth = true;

  int n_agents() const { return static_cast<int>(agents.rows()); }
  int n_anchors() const { return static_cast<int>(anchors.rows()); }
  int dim() const { return static_cast<int>(agents.cols()); }
  int n_edges() const {
    return static_cast<int>(agent_edges.size() + anchor_edges.size());
  }

  void validate() const {
    const int n = n_agents();
    const int m = n_anchors();
    const int k = dim();
    if (k < 1) throw std::invalid_argument("Network: dimension must be >= 1");
    if (n < 1) throw std::invalid_argument("Network: need at least one agent");
    if (m > 0 && anchors.cols() != k) {
      throw std::invalid_argument("Network: anchor/agent dimension mismatch");
    }
    Edge prev{-1, -1};
    for (const Edge& e : agent_edges) {
      if (e.i < 0 || e.j >= n || e.i >= e.j) {
        throw std::invalid_argument("Network: bad agent edge");
      }
      if (!(prev < e)) {
        throw std::invalid_argument("Network: agent edges not sorted/unique");
      }
      prev = e;
    }
    prev = Edge{-1, -1};
    for (const Edge& e : anchor_edges) {
      if (e.i < 0 || e.i >= n || e.j < 0 || e.j >= m) {
        throw std::invalid_argument("Network: bad anchor edge");
      }
      if (!(prev < e)) {
        throw std::invalid_argument("Network: anchor edges not sorted/unique");
      }
      prev = e;
    }
  }
};

enum class AnchorPlacement {
  kBoundaryRows,  // split between the top and bottom box edges
  kExplicit,      // caller supplies coordinates
};

// Boundary-row layout: ceil(M/2) anchors along the upper edge, the rest
// along the lower edge, equally spaced from corner to corner. A row of one
// sits at the edge midpoint. Defined for k <= 2; higher dimensions take
// explicit coordinates.
inline Eigen::MatrixXd boundary_row_anchors(int n_anchors, const Box& box) {
  const int k = box.dim();
  if (k > 2) {
    throw std::invalid_argument(
        "boundary_row_anchors: defined for dimension <= 2; "
        "use explicit placement");
  }
  Eigen::MatrixXd anchors(n_anchors, k);
  const int n_top = (n_anchors + 1) / 2;
  const int n_bottom = n_anchors - n_top;
  auto fill_row = [&](int offset, int count, double level) {
    for (int c = 0; c < count; ++c) {
      double x = (count == 1)
                     ? 0.5 * (box.lo(0) + box.hi(0))
                     : box.lo(0) + (box.hi(0) - box.lo(0)) * c / (count - 1);
      if (k == 1) {
        anchors(offset + c, 0) = level;
      } else {
        anchors(offset + c, 0) = x;
        anchors(offset + c, 1) = level;
      }
    }
  };
  const int level_axis = (k == 1) ? 0 : 1;
  fill_row(0, n_top, box.hi(level_axis));
  fill_row(n_top, n_bottom, box.lo(level_axis));
  return anchors;
}

// Random placement plus radius graph. Agents are drawn uniformly in the box
// (agent by agent, coordinate by coordinate, from the placement stream of
// `seed`); an edge exists exactly between node pairs at distance <= radius.
// Anchor-anchor edges are never generated: anchor positions are known, so
// they contribute nothing to the fit.
inline Network generate_network(int n_agents, int n_anchors, const Box& box,
                                double radius, AnchorPlacement placement,
                                std::uint64_t seed,
                                const Eigen::MatrixXd* explicit_anchors = nullptr) {
  if (!box.nondegenerate()) {
    throw std::invalid_argument("generate_network: degenerate box");
  }
  if (n_agents < 1) {
    throw std::invalid_argument("generate_network: need at least one agent");
  }
  if (n_anchors < 0) {
    throw std::invalid_argument("generate_network: negative anchor count");
  }
  if (!(radius > 0.0)) {
    throw std::invalid_argument("generate_network: radius must be positive");
  }
  const int k = box.dim();

  Network net;
  if (placement == AnchorPlacement::kExplicit) {
    if (explicit_anchors == nullptr || explicit_anchors->rows() != n_anchors ||
        (n_anchors > 0 && explicit_anchors->cols() != k)) {
      throw std::invalid_argument(
          "generate_network: explicit placement needs an n_anchors x k matrix");
    }
    net.anchors = *explicit_anchors;
  } else {
    net.anchors = boundary_row_anchors(n_anchors, box);
  }

  Rng rng(derive_seed(seed, streams::kPlacement));
  net.agents.resize(n_agents, k);
  for (int i = 0; i < n_agents; ++i) {
    for (int c = 0; c < k; ++c) {
      net.agents(i, c) = rng.uniform(box.lo(c), box.hi(c));
    }
  }

  const double rsq = radius * radius;
  for (int i = 0; i < n_agents; ++i) {
    for (int j = i + 1; j < n_agents; ++j) {
      if (squared_distance(net.agents.row(i), net.agents.row(j)) <= rsq) {
        net.agent_edges.push_back({i, j});
      }
    }
  }
  for (int i = 0; i < n_agents; ++i) {
    for (int j = 0; j < n_anchors; ++j) {
      if (squared_distance(net.agents.row(i), net.anchors.row(j)) <= rsq) {
        net.anchor_edges.push_back({i, j});
      }
    }
  }
  net.validate();
  return net;
}

// Agents with no incident edge at all. Such nodes stay in the instance and
// the solver still runs; they are simply unresolvable, so callers surface
// this as a diagnostic rather than an error.
inline std::vector<int> isolated_agents(const Network& net) {
  std::vector<int> degree(net.n_agents(), 0);
  for (const Edge& e : net.agent_edges) {
    ++degree[e.i];
    ++degree[e.j];
  }
  for (const Edge& e : net.anchor_edges) ++degree[e.i];
  std::vector<int> out;
  for (int i = 0; i < net.n_agents(); ++i) {
    if (degree[i] == 0) out.push_back(i);
  }
  return out;
}

}  // namespace nlosloc
