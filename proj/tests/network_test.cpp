#include "nlosloc/network.hpp"

#include <Eigen/Dense>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gtest/gtest.h"

using namespace nlosloc;

TEST(GenerateNetwork, SingleAgentLargeRadiusIsStarGraph) {
  Eigen::MatrixXd anchors(3, 2);
  anchors << 0, 0, 1, 0, 0, 1;
  const Network net =
      generate_network(1, 3, Box::square(-1, 1), 1e6,
                       AnchorPlacement::kExplicit, 7, &anchors);
  EXPECT_EQ(net.agent_edges.size(), 0u);
  ASSERT_EQ(net.anchor_edges.size(), 3u);
  for (int j = 0; j < 3; ++j) {
    EXPECT_EQ(net.anchor_edges[j].i, 0);
    EXPECT_EQ(net.anchor_edges[j].j, j);
  }
}

TEST(GenerateNetwork, FixedSeedIsBitwiseDeterministic) {
  const Box box = Box::square(-1, 1);
  const Network a = generate_network(12, 5, box, 0.9,
                                     AnchorPlacement::kBoundaryRows, 99);
  const Network b = generate_network(12, 5, box, 0.9,
                                     AnchorPlacement::kBoundaryRows, 99);
  EXPECT_TRUE(a.agents == b.agents);
  EXPECT_TRUE(a.anchors == b.anchors);
  EXPECT_TRUE(a.agent_edges == b.agent_edges);
  EXPECT_TRUE(a.anchor_edges == b.anchor_edges);
}

// Exhaustive soundness: emitted edges are exactly the pairs within radius.
TEST(GenerateNetwork, RadiusGraphIsExact) {
  const Box box = Box::square(-1, 1);
  const double r = 0.8;
  const Network net = generate_network(30, 10, box, r,
                                       AnchorPlacement::kBoundaryRows, 3);
  std::set<std::pair<int, int>> aa, ax;
  for (const Edge& e : net.agent_edges) aa.insert({e.i, e.j});
  for (const Edge& e : net.anchor_edges) ax.insert({e.i, e.j});
  for (int i = 0; i < net.n_agents(); ++i) {
    for (int j = i + 1; j < net.n_agents(); ++j) {
      const double d2 = squared_distance(net.agents.row(i), net.agents.row(j));
      EXPECT_EQ(aa.count({i, j}) == 1, d2 <= r * r);
    }
    for (int j = 0; j < net.n_anchors(); ++j) {
      const double d2 = squared_distance(net.agents.row(i), net.anchors.row(j));
      EXPECT_EQ(ax.count({i, j}) == 1, d2 <= r * r);
    }
  }
}

TEST(GenerateNetwork, PaperScaleTopology) {
  const Box box = Box::square(-1, 1);
  const Network net = generate_network(50, 15, box, 1.5,
                                       AnchorPlacement::kBoundaryRows, 2024);
  EXPECT_EQ(net.n_agents(), 50);
  EXPECT_EQ(net.n_anchors(), 15);
  for (int i = 0; i < 50; ++i) {
    for (int c = 0; c < 2; ++c) {
      EXPECT_GE(net.agents(i, c), -1.0);
      EXPECT_LE(net.agents(i, c), 1.0);
    }
  }
  // All anchors sit on the upper or lower boundary.
  for (int j = 0; j < 15; ++j) {
    EXPECT_TRUE(net.anchors(j, 1) == 1.0 || net.anchors(j, 1) == -1.0);
  }
  EXPECT_GT(net.n_edges(), 0);
}

TEST(BoundaryRowAnchors, SplitsEvenlyCornerToCorner) {
  const Box box = Box::square(-1, 1);
  const Eigen::MatrixXd a = boundary_row_anchors(15, box);
  // ceil(15/2) = 8 on the top edge, 7 on the bottom.
  for (int c = 0; c < 8; ++c) {
    EXPECT_DOUBLE_EQ(a(c, 1), 1.0);
    EXPECT_NEAR(a(c, 0), -1.0 + 2.0 * c / 7.0, 1e-12);
  }
  for (int c = 0; c < 7; ++c) {
    EXPECT_DOUBLE_EQ(a(8 + c, 1), -1.0);
    EXPECT_NEAR(a(8 + c, 0), -1.0 + 2.0 * c / 6.0, 1e-12);
  }
}

TEST(BoundaryRowAnchors, SingleAnchorAtMidpoint) {
  const Eigen::MatrixXd a = boundary_row_anchors(1, Box::square(0, 4));
  ASSERT_EQ(a.rows(), 1);
  EXPECT_DOUBLE_EQ(a(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(a(0, 1), 4.0);
}

TEST(GenerateNetwork, IsolatedAgentsAreDiagnosedNotFatal) {
  // Radius too small for any connection.
  const Network net = generate_network(5, 4, Box::square(-1, 1), 1e-6,
                                       AnchorPlacement::kBoundaryRows, 17);
  const std::vector<int> isolated = isolated_agents(net);
  EXPECT_EQ(isolated.size(), 5u);
  EXPECT_EQ(net.n_edges(), 0);
}

TEST(GenerateNetwork, RejectsDegenerateBox) {
  EXPECT_THROW(generate_network(3, 2, Box::square(1, 1), 1.0,
                                AnchorPlacement::kBoundaryRows, 1),
               std::invalid_argument);
}

TEST(GenerateNetwork, RejectsNonpositiveRadius) {
  EXPECT_THROW(generate_network(3, 2, Box::square(-1, 1), 0.0,
                                AnchorPlacement::kBoundaryRows, 1),
               std::invalid_argument);
}

TEST(NetworkValidate, CatchesBadEdges) {
  Network net;
  net.agents = Eigen::MatrixXd::Zero(3, 2);
  net.anchors = Eigen::MatrixXd::Zero(2, 2);

  net.agent_edges = {{0, 0}};  // self loop
  EXPECT_THROW(net.validate(), std::invalid_argument);

  net.agent_edges = {{0, 1}, {0, 1}};  // duplicate
  EXPECT_THROW(net.validate(), std::invalid_argument);

  net.agent_edges = {{1, 2}, {0, 1}};  // unsorted
  EXPECT_THROW(net.validate(), std::invalid_argument);

  net.agent_edges = {{0, 3}};  // out of bounds
  EXPECT_THROW(net.validate(), std::invalid_argument);

  net.agent_edges = {{0, 1}, {1, 2}};
  net.anchor_edges = {{0, 2}};  // anchor index out of bounds
  EXPECT_THROW(net.validate(), std::invalid_argument);

  net.anchor_edges = {{0, 0}, {0, 1}, {2, 1}};
  EXPECT_NO_THROW(net.validate());
}
