#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nlosloc/measurement.hpp"
#include "nlosloc/network.hpp"
#include "nlosloc/program.hpp"
#include "nlosloc/solver.hpp"

namespace nlosloc {

namespace detail {

// Round-trip-exact double formatting for data files.
inline std::string fmt_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Compact formatting for plot-ready CSV.
inline std::string fmt_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

struct LineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double parse_double(const std::string& s, const std::string& ctx) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw LineError(ctx + ": expected a number, got '" + s + "'");
  }
  if (pos != s.size()) {
    throw LineError(ctx + ": trailing characters in number '" + s + "'");
  }
  return v;
}

inline long long parse_int(const std::string& s, const std::string& ctx) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    throw LineError(ctx + ": expected an integer, got '" + s + "'");
  }
  if (pos != s.size()) {
    throw LineError(ctx + ": trailing characters in integer '" + s + "'");
  }
  return v;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  return in;
}

}  // namespace detail

// Text format: header `dim,<k>`; `anchor,<id>,<coords...>`;
// `agent,<id>,<coords...>` (ground truth, optional); `edge,<AA|AX>,<i>,<j>`.
// Blank lines and lines starting with '#' are ignored on read.
inline void save_network(const Network& net, const std::string& path) {
  std::ofstream out = detail::open_out(path);
  out << "dim," << net.dim() << "\n";
  for (int j = 0; j < net.n_anchors(); ++j) {
    out << "anchor," << j;
    for (int c = 0; c < net.dim(); ++c) {
      out << "," << detail::fmt_full(net.anchors(j, c));
    }
    out << "\n";
  }
  if (net.has_agent_truth) {
    for (int i = 0; i < net.n_agents(); ++i) {
      out << "agent," << i;
      for (int c = 0; c < net.dim(); ++c) {
        out << "," << detail::fmt_full(net.agents(i, c));
      }
      out << "\n";
    }
  }
  for (const Edge& e : net.agent_edges) {
    out << "edge,AA," << e.i << "," << e.j << "\n";
  }
  for (const Edge& e : net.anchor_edges) {
    out << "edge,AX," << e.i << "," << e.j << "\n";
  }
}

inline Network load_network(const std::string& path) {
  std::ifstream in = detail::open_in(path);
  std::string line;
  int line_no = 0;
  int k = -1;
  std::vector<std::pair<int, std::vector<double>>> anchors, agents;
  std::vector<Edge> aa, ax;

  auto ctx = [&](int no) { return path + ":" + std::to_string(no); };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || line == "\r") continue;
    const std::vector<std::string> f = detail::split_csv(line);
    const std::string& tag = f[0];
    if (tag == "dim") {
      if (f.size() != 2) throw detail::LineError(ctx(line_no) + ": dim line needs one value");
      k = static_cast<int>(detail::parse_int(f[1], ctx(line_no)));
      if (k < 1) throw detail::LineError(ctx(line_no) + ": dimension must be >= 1");
    } else if (tag == "anchor" || tag == "agent") {
      if (k < 0) throw detail::LineError(ctx(line_no) + ": dim header must come first");
      if (static_cast<int>(f.size()) != 2 + k) {
        throw detail::LineError(ctx(line_no) + ": expected id plus " +
                                std::to_string(k) + " coordinates");
      }
      const int id = static_cast<int>(detail::parse_int(f[1], ctx(line_no)));
      std::vector<double> coords(k);
      for (int c = 0; c < k; ++c) {
        coords[c] = detail::parse_double(f[2 + c], ctx(line_no));
      }
      (tag == "anchor" ? anchors : agents).emplace_back(id, std::move(coords));
    } else if (tag == "edge") {
      if (f.size() != 4) throw detail::LineError(ctx(line_no) + ": edge line needs type,i,j");
      const int i = static_cast<int>(detail::parse_int(f[2], ctx(line_no)));
      const int j = static_cast<int>(detail::parse_int(f[3], ctx(line_no)));
      if (f[1] == "AA") {
        aa.push_back(i <= j ? Edge{i, j} : Edge{j, i});
      } else if (f[1] == "AX") {
        ax.push_back(Edge{i, j});
      } else {
        throw detail::LineError(ctx(line_no) + ": edge type must be AA or AX");
      }
    } else {
      throw detail::LineError(ctx(line_no) + ": unknown record '" + tag + "'");
    }
  }
  if (k < 0) throw detail::LineError(path + ": missing dim header");

  int n_agents = static_cast<int>(agents.size());
  if (n_agents == 0) {
    // Truthless file: infer the agent count from edge indices.
    int max_idx = -1;
    for (const Edge& e : aa) max_idx = std::max({max_idx, e.i, e.j});
    for (const Edge& e : ax) max_idx = std::max(max_idx, e.i);
    if (max_idx < 0) throw detail::LineError(path + ": no agents derivable from file");
    n_agents = max_idx + 1;
  }

  Network net;
  net.agents = Eigen::MatrixXd::Zero(n_agents, k);
  net.anchors = Eigen::MatrixXd::Zero(static_cast<int>(anchors.size()), k);
  net.has_agent_truth = !agents.empty();
  std::vector<bool> seen_agent(n_agents, false), seen_anchor(anchors.size(), false);
  for (const auto& [id, coords] : agents) {
    if (id < 0 || id >= n_agents || seen_agent[id]) {
      throw detail::LineError(path + ": agent ids must be unique and cover 0.." +
                              std::to_string(n_agents - 1));
    }
    seen_agent[id] = true;
    for (int c = 0; c < k; ++c) net.agents(id, c) = coords[c];
  }
  for (const auto& [id, coords] : anchors) {
    if (id < 0 || id >= static_cast<int>(anchors.size()) || seen_anchor[id]) {
      throw detail::LineError(path + ": anchor ids must be unique and cover 0.." +
                              std::to_string(anchors.size() - 1));
    }
    seen_anchor[id] = true;
    for (int c = 0; c < k; ++c) net.anchors(id, c) = coords[c];
  }
  std::sort(aa.begin(), aa.end(), [](const Edge& a, const Edge& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  std::sort(ax.begin(), ax.end(), [](const Edge& a, const Edge& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  net.agent_edges = std::move(aa);
  net.anchor_edges = std::move(ax);
  net.validate();
  return net;
}

// Text format: `meas,<AA|AX>,<i>,<j>,<dsq_observed>` with optional trailing
// `,<dsq_true>,<nlos01>` ground-truth columns (all lines or none).
inline void save_measurements(const MeasurementSet& ms, const std::string& path,
                              bool include_truth = true) {
  std::ofstream out = detail::open_out(path);
  const bool truth = include_truth && ms.has_truth;
  for (const MeasurementRecord& r : ms.records) {
    out << "meas," << (r.edge.type == EdgeType::kAgentAgent ? "AA" : "AX")
        << "," << r.edge.i << "," << r.edge.j << ","
        << detail::fmt_full(r.observed_dsq);
    if (truth) {
      out << "," << detail::fmt_full(r.truth.true_dsq) << ","
          << (r.truth.nlos ? 1 : 0);
    }
    out << "\n";
  }
}

inline MeasurementSet load_measurements(const std::string& path) {
  std::ifstream in = detail::open_in(path);
  MeasurementSet ms;
  ms.has_truth = true;
  std::string line;
  int line_no = 0;
  bool any = false;
  auto ctx = [&](int no) { return path + ":" + std::to_string(no); };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || line == "\r") continue;
    const std::vector<std::string> f = detail::split_csv(line);
    if (f[0] != "meas") {
      throw detail::LineError(ctx(line_no) + ": unknown record '" + f[0] + "'");
    }
    if (f.size() != 5 && f.size() != 7) {
      throw detail::LineError(ctx(line_no) +
                              ": expected meas,type,i,j,dsq[,dsq_true,nlos01]");
    }
    MeasurementRecord rec;
    if (f[1] == "AA") {
      rec.edge.type = EdgeType::kAgentAgent;
    } else if (f[1] == "AX") {
      rec.edge.type = EdgeType::kAgentAnchor;
    } else {
      throw detail::LineError(ctx(line_no) + ": measurement type must be AA or AX");
    }
    rec.edge.i = static_cast<int>(detail::parse_int(f[2], ctx(line_no)));
    rec.edge.j = static_cast<int>(detail::parse_int(f[3], ctx(line_no)));
    rec.observed_dsq = detail::parse_double(f[4], ctx(line_no));
    if (rec.observed_dsq < 0.0) {
      throw detail::LineError(ctx(line_no) + ": observed squared distance must be >= 0");
    }
    if (f.size() == 7) {
      rec.truth.true_dsq = detail::parse_double(f[5], ctx(line_no));
      const long long flag = detail::parse_int(f[6], ctx(line_no));
      if (flag != 0 && flag != 1) {
        throw detail::LineError(ctx(line_no) + ": nlos column must be 0 or 1");
      }
      rec.truth.nlos = flag == 1;
      rec.truth.true_bias = 0.0;  // not represented in the file format
    } else {
      ms.has_truth = false;
      rec.truth.true_dsq = std::numeric_limits<double>::quiet_NaN();
    }
    ms.records.push_back(rec);
    any = true;
  }
  if (!any) ms.has_truth = false;
  return ms;
}

// Reorders file-order records into the network's canonical edge order
// (agent edges then anchor edges); errors on missing or unknown edges.
inline MeasurementSet align_measurements(const Network& net,
                                         const MeasurementSet& loaded) {
  auto key = [](EdgeType t, int i, int j) {
    return std::to_string(t == EdgeType::kAgentAgent ? 0 : 1) + ":" +
           std::to_string(i) + ":" + std::to_string(j);
  };
  std::vector<MeasurementRecord> ordered;
  ordered.reserve(loaded.records.size());
  std::map<std::string, const MeasurementRecord*> by_key;
  for (const MeasurementRecord& r : loaded.records) {
    int i = r.edge.i, j = r.edge.j;
    if (r.edge.type == EdgeType::kAgentAgent && i > j) std::swap(i, j);
    const std::string kk = key(r.edge.type, i, j);
    if (by_key.count(kk)) {
      throw std::runtime_error("duplicate measurement for edge " + kk);
    }
    by_key[kk] = &r;
  }
  auto take = [&](EdgeType t, const Edge& e) {
    const auto it = by_key.find(key(t, e.i, e.j));
    if (it == by_key.end()) {
      throw std::runtime_error("missing measurement for edge " + key(t, e.i, e.j));
    }
    MeasurementRecord rec = *it->second;
    rec.edge = EdgeRef{t, e.i, e.j};
    ordered.push_back(rec);
    by_key.erase(it);
  };
  for (const Edge& e : net.agent_edges) take(EdgeType::kAgentAgent, e);
  for (const Edge& e : net.anchor_edges) take(EdgeType::kAgentAnchor, e);
  if (!by_key.empty()) {
    throw std::runtime_error("measurement file has " +
                             std::to_string(by_key.size()) +
                             " entries with no matching network edge");
  }
  MeasurementSet out;
  out.records = std::move(ordered);
  out.has_truth = loaded.has_truth;
  out.clamped_count = loaded.clamped_count;
  return out;
}

// One line per residual term: touched packed Z indices with coefficients,
// bias index (-1 if none), constant offset.
inline void dump_program(const ConvexProgram& prog, std::ostream& out) {
  out << "block_dim," << prog.block_dim << ",n_bias," << prog.n_bias << ",mode,"
      << (prog.mode == ProgramMode::kNlos ? "nlos" : "baseline") << "\n";
  for (std::size_t t = 0; t < prog.terms.size(); ++t) {
    const ResidualTerm& term = prog.terms[t];
    out << "term," << t << ",bias," << term.bias_index << ",offset,"
        << detail::fmt_full(term.offset);
    for (const TermEntry& e : term.entries) {
      out << ",z," << e.p << "," << e.q << "," << detail::fmt_full(e.coef);
    }
    out << "\n";
  }
}

inline void save_trace(const SolverTrace& trace, const std::string& path) {
  std::ofstream out = detail::open_out(path);
  out << "iter,objective,primal_res,dual_res\n";
  for (std::size_t i = 0; i < trace.rows.size(); ++i) {
    out << (i + 1) << "," << detail::fmt_short(trace.rows[i].objective) << ","
        << detail::fmt_short(trace.rows[i].primal_residual) << ","
        << detail::fmt_short(trace.rows[i].dual_residual) << "\n";
  }
}

}  // namespace nlosloc
