#pragma once

// Typed reasoning DAG: a problem root, propositions with a verification
// lifecycle, critiques carrying verdicts, and summaries. Mutations enforce
// edge typing and acyclicity; node ids are dense and never reused.

#include <cstdint>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dot/result.hpp"

namespace dot {

using NodeId = std::uint32_t;
inline constexpr NodeId kRootId = 0;

enum class NodeKind { Problem, Proposition, Critique, Summary };
enum class PropStatus { Proposed, Verified, Invalidated };
enum class Verdict { Verify, Refute };
enum class EdgeKind { Deduce, Critique, Refine, Summarize, Context };

inline const char* to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Problem: return "problem";
    case NodeKind::Proposition: return "proposition";
    case NodeKind::Critique: return "critique";
    case NodeKind::Summary: return "summary";
  }
  return "?";
}

inline const char* to_string(PropStatus s) {
  switch (s) {
    case PropStatus::Proposed: return "proposed";
    case PropStatus::Verified: return "verified";
    case PropStatus::Invalidated: return "invalidated";
  }
  return "?";
}

inline const char* to_string(Verdict v) {
  return v == Verdict::Verify ? "verify" : "refute";
}

inline const char* to_string(EdgeKind k) {
  switch (k) {
    case EdgeKind::Deduce: return "deduce";
    case EdgeKind::Critique: return "critique";
    case EdgeKind::Refine: return "refine";
    case EdgeKind::Summarize: return "summarize";
    case EdgeKind::Context: return "context";
  }
  return "?";
}

struct Node {
  NodeId id = 0;
  NodeKind kind = NodeKind::Problem;
  std::string text;
  std::optional<PropStatus> status;  // propositions only
  std::optional<Verdict> verdict;    // critiques only
  std::string display_name;          // cosmetic label ("p1", "c2"); may be empty
};

struct Edge {
  NodeId src = 0;
  NodeId dst = 0;
  EdgeKind kind = EdgeKind::Deduce;

  friend bool operator==(const Edge&, const Edge&) = default;
};

enum class GraphErrorKind {
  EmptyProblem,
  EmptyParents,
  UnknownNode,
  EdgeTypeMismatch,
  DuplicateEdge,
  CycleRejected,
  NotAProposition,
  AlreadyResolved,
  NotACritique,
  VerifyHasNoRefinement,
  UnverifiedSummaryBasis,
  EmptyBasis,
};

inline const char* to_string(GraphErrorKind k) {
  switch (k) {
    case GraphErrorKind::EmptyProblem: return "EmptyProblem";
    case GraphErrorKind::EmptyParents: return "EmptyParents";
    case GraphErrorKind::UnknownNode: return "UnknownNode";
    case GraphErrorKind::EdgeTypeMismatch: return "EdgeTypeMismatch";
    case GraphErrorKind::DuplicateEdge: return "DuplicateEdge";
    case GraphErrorKind::CycleRejected: return "CycleRejected";
    case GraphErrorKind::NotAProposition: return "NotAProposition";
    case GraphErrorKind::AlreadyResolved: return "AlreadyResolved";
    case GraphErrorKind::NotACritique: return "NotACritique";
    case GraphErrorKind::VerifyHasNoRefinement: return "VerifyHasNoRefinement";
    case GraphErrorKind::UnverifiedSummaryBasis: return "UnverifiedSummaryBasis";
    case GraphErrorKind::EmptyBasis: return "EmptyBasis";
  }
  return "?";
}

struct GraphError {
  GraphErrorKind kind;
  std::string message;
  std::vector<NodeId> nodes;
};

struct NodeCounts {
  std::size_t problems = 0;
  std::size_t propositions = 0;
  std::size_t critiques = 0;
  std::size_t summaries = 0;
  std::size_t proposed = 0;
  std::size_t verified = 0;
  std::size_t invalidated = 0;
  std::size_t edges = 0;

  std::size_t total_nodes() const { return problems + propositions + critiques + summaries; }
};

// Critiques authored by the session driver when a line runs out of its
// refinement budget start with this prefix; such lines are settled, so
// sufficiency and open-refutation checks skip them.
inline constexpr std::string_view kAbandonedCritiquePrefix = "abandoned:";

inline bool is_abandonment_critique(const Node& n) {
  return n.kind == NodeKind::Critique && n.verdict == Verdict::Refute &&
         std::string_view(n.text).starts_with(kAbandonedCritiquePrefix);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_ws(s.back())) s.remove_suffix(1);
  return s;
}

} // namespace detail

class ReasoningDag {
public:
  // An empty placeholder; usable instances come from create, from_parts or
  // apply_trace.
  ReasoningDag() = default;

  static Result<ReasoningDag, GraphError> create(std::string_view problem_text) {
    if (detail::trim(problem_text).empty()) {
      return GraphError{GraphErrorKind::EmptyProblem, "problem statement is empty", {}};
    }
    ReasoningDag dag;
    Node root;
    root.id = kRootId;
    root.kind = NodeKind::Problem;
    root.text = std::string(problem_text);
    dag.nodes_.push_back(std::move(root));
    dag.out_adj_.emplace_back();
    return dag;
  }

  // Reassembles a DAG from raw parts without any checking. Deserializers and
  // corruption-injection tests use this; callers must run the validator.
  static ReasoningDag from_parts(std::vector<Node> nodes, std::vector<Edge> edges) {
    ReasoningDag dag;
    dag.nodes_ = std::move(nodes);
    dag.edges_ = std::move(edges);
    dag.out_adj_.assign(dag.nodes_.size(), {});
    for (const Edge& e : dag.edges_) {
      if (e.src < dag.nodes_.size()) dag.out_adj_[e.src].push_back(e.dst);
    }
    return dag;
  }

  Result<NodeId, GraphError> add_proposition(std::string text, std::span<const NodeId> parents,
                                             std::span<const EdgeKind> kinds) {
    if (parents.empty()) {
      return GraphError{GraphErrorKind::EmptyParents, "proposition requires at least one parent", {}};
    }
    if (parents.size() != kinds.size()) {
      return GraphError{GraphErrorKind::EdgeTypeMismatch, "parents and kinds differ in length", {}};
    }
    for (NodeId p : parents) {
      if (!contains(p)) {
        return GraphError{GraphErrorKind::UnknownNode, "unknown parent node", {p}};
      }
    }
    const NodeId id = next_id();
    Node tentative;
    tentative.id = id;
    tentative.kind = NodeKind::Proposition;
    tentative.status = PropStatus::Proposed;
    for (std::size_t i = 0; i < parents.size(); ++i) {
      if (kinds[i] != EdgeKind::Deduce && kinds[i] != EdgeKind::Context) {
        return GraphError{GraphErrorKind::EdgeTypeMismatch,
                          "proposition in-edges must be deduce or context", {parents[i]}};
      }
      if (auto err = check_edge_typing(nodes_[parents[i]], tentative, kinds[i])) return *err;
      for (std::size_t j = 0; j < i; ++j) {
        if (parents[j] == parents[i] && kinds[j] == kinds[i]) {
          return GraphError{GraphErrorKind::DuplicateEdge, "duplicate parent edge", {parents[i]}};
        }
      }
      // New nodes have no out-edges, so no cycle is possible; checked uniformly anyway.
      if (path_exists(id, parents[i])) {
        return GraphError{GraphErrorKind::CycleRejected, "edge would close a cycle", {parents[i], id}};
      }
    }
    tentative.text = std::move(text);
    push_node(std::move(tentative));
    for (std::size_t i = 0; i < parents.size(); ++i) {
      push_edge({parents[i], id, kinds[i]});
    }
    return id;
  }

  Result<NodeId, GraphError> add_critique(NodeId target, Verdict verdict, std::string text) {
    if (!contains(target)) {
      return GraphError{GraphErrorKind::UnknownNode, "unknown critique target", {target}};
    }
    if (nodes_[target].kind != NodeKind::Proposition) {
      return GraphError{GraphErrorKind::NotAProposition, "critique target is not a proposition", {target}};
    }
    if (nodes_[target].status != PropStatus::Proposed) {
      return GraphError{GraphErrorKind::AlreadyResolved, "proposition already has a terminal status", {target}};
    }
    const NodeId id = next_id();
    Node c;
    c.id = id;
    c.kind = NodeKind::Critique;
    c.verdict = verdict;
    c.text = std::move(text);
    push_node(std::move(c));
    push_edge({target, id, EdgeKind::Critique});
    if (verdict == Verdict::Verify) {
      nodes_[target].status = PropStatus::Verified;
    }
    return id;
  }

  Result<NodeId, GraphError> add_refinement(NodeId critique, std::string text) {
    if (!contains(critique)) {
      return GraphError{GraphErrorKind::UnknownNode, "unknown critique node", {critique}};
    }
    const Node& c = nodes_[critique];
    if (c.kind != NodeKind::Critique) {
      return GraphError{GraphErrorKind::NotACritique, "refinement source is not a critique", {critique}};
    }
    if (c.verdict != Verdict::Refute) {
      return GraphError{GraphErrorKind::VerifyHasNoRefinement,
                        "a verifying critique takes no refinement", {critique}};
    }
    const NodeId id = next_id();
    Node p;
    p.id = id;
    p.kind = NodeKind::Proposition;
    p.status = PropStatus::Proposed;
    p.text = std::move(text);
    push_node(std::move(p));
    push_edge({critique, id, EdgeKind::Refine});
    // The refuted proposition is settled once a refinement replaces it.
    if (auto target = critique_target(critique)) {
      Node& t = nodes_[*target];
      if (t.status == PropStatus::Proposed) t.status = PropStatus::Invalidated;
    }
    return id;
  }

  Result<NodeId, GraphError> add_summary(std::span<const NodeId> basis, std::string text,
                                         bool include_context) {
    if (basis.empty()) {
      return GraphError{GraphErrorKind::EmptyBasis, "summary requires a non-empty basis", {}};
    }
    for (NodeId b : basis) {
      if (!contains(b)) {
        return GraphError{GraphErrorKind::UnknownNode, "unknown basis node", {b}};
      }
      const Node& n = nodes_[b];
      if (n.kind != NodeKind::Proposition || n.status != PropStatus::Verified) {
        return GraphError{GraphErrorKind::UnverifiedSummaryBasis,
                          "summary basis must be verified propositions", {b}};
      }
    }
    for (std::size_t i = 0; i < basis.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (basis[j] == basis[i]) {
          return GraphError{GraphErrorKind::DuplicateEdge, "duplicate basis node", {basis[i]}};
        }
      }
    }
    const NodeId id = next_id();
    Node s;
    s.id = id;
    s.kind = NodeKind::Summary;
    s.text = std::move(text);
    push_node(std::move(s));
    for (NodeId b : basis) {
      push_edge({b, id, EdgeKind::Summarize});
    }
    if (include_context) {
      push_edge({kRootId, id, EdgeKind::Context});
    }
    return id;
  }

  // Low-level checked insert used by tooling and fuzzing: typing, duplicate
  // and cycle checks all apply.
  std::optional<GraphError> add_edge(NodeId src, NodeId dst, EdgeKind kind) {
    if (!contains(src) || !contains(dst)) {
      return GraphError{GraphErrorKind::UnknownNode, "unknown edge endpoint", {contains(src) ? dst : src}};
    }
    if (auto err = check_edge_typing(nodes_[src], nodes_[dst], kind)) return err;
    if (kind == EdgeKind::Summarize && nodes_[src].status != PropStatus::Verified) {
      return GraphError{GraphErrorKind::UnverifiedSummaryBasis,
                        "summarize edge source must be verified", {src}};
    }
    if (has_edge(src, dst, kind)) {
      return GraphError{GraphErrorKind::DuplicateEdge, "edge already present", {src, dst}};
    }
    if (src == dst || path_exists(dst, src)) {
      return GraphError{GraphErrorKind::CycleRejected, "edge would close a cycle", {src, dst}};
    }
    push_edge({src, dst, kind});
    return std::nullopt;
  }

  // Kahn's algorithm; among ready nodes the smallest id (= insertion order)
  // goes first, which makes the order fully deterministic.
  std::vector<NodeId> topological_order() const {
    std::vector<std::size_t> indegree(nodes_.size(), 0);
    for (const Edge& e : edges_) ++indegree[e.dst];
    std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
    for (NodeId id = 0; id < nodes_.size(); ++id) {
      if (indegree[id] == 0) ready.push(id);
    }
    std::vector<NodeId> order;
    order.reserve(nodes_.size());
    while (!ready.empty()) {
      const NodeId u = ready.top();
      ready.pop();
      order.push_back(u);
      for (NodeId v : out_adj_[u]) {
        if (--indegree[v] == 0) ready.push(v);
      }
    }
    return order;
  }

  std::vector<NodeId> verified_chain() const {
    std::vector<NodeId> chain;
    for (NodeId id : topological_order()) {
      const Node& n = nodes_[id];
      if (n.kind == NodeKind::Proposition && n.status == PropStatus::Verified) {
        chain.push_back(id);
      }
    }
    return chain;
  }

  NodeCounts node_counts() const {
    NodeCounts c;
    for (const Node& n : nodes_) {
      switch (n.kind) {
        case NodeKind::Problem: ++c.problems; break;
        case NodeKind::Proposition:
          ++c.propositions;
          switch (*n.status) {
            case PropStatus::Proposed: ++c.proposed; break;
            case PropStatus::Verified: ++c.verified; break;
            case PropStatus::Invalidated: ++c.invalidated; break;
          }
          break;
        case NodeKind::Critique: ++c.critiques; break;
        case NodeKind::Summary: ++c.summaries; break;
      }
    }
    c.edges = edges_.size();
    return c;
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  bool contains(NodeId id) const { return id < nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_[id]; }
  const std::string& problem_text() const { return nodes_[kRootId].text; }
  NodeId next_id() const { return static_cast<NodeId>(nodes_.size()); }

  void set_display_name(NodeId id, std::string name) {
    if (contains(id)) nodes_[id].display_name = std::move(name);
  }

  bool has_edge(NodeId src, NodeId dst, EdgeKind kind) const {
    for (const Edge& e : edges_) {
      if (e.src == src && e.dst == dst && e.kind == kind) return true;
    }
    return false;
  }

  // The proposition a critique targets: source of its unique critique in-edge.
  std::optional<NodeId> critique_target(NodeId critique) const {
    for (const Edge& e : edges_) {
      if (e.dst == critique && e.kind == EdgeKind::Critique) return e.src;
    }
    return std::nullopt;
  }

  std::vector<NodeId> critiques_of(NodeId prop) const {
    std::vector<NodeId> out;
    for (const Edge& e : edges_) {
      if (e.src == prop && e.kind == EdgeKind::Critique) out.push_back(e.dst);
    }
    return out;
  }

  bool has_refinement(NodeId critique) const {
    for (const Edge& e : edges_) {
      if (e.src == critique && e.kind == EdgeKind::Refine) return true;
    }
    return false;
  }

  std::size_t summary_count() const {
    std::size_t n = 0;
    for (const Node& node : nodes_) {
      if (node.kind == NodeKind::Summary) ++n;
    }
    return n;
  }

  // A proposed proposition whose refuting critique never got a refinement,
  // ignoring abandoned lines.
  bool has_open_refutation(NodeId prop) const {
    const Node& p = nodes_[prop];
    if (p.kind != NodeKind::Proposition || p.status != PropStatus::Proposed) return false;
    bool open = false;
    for (NodeId c : critiques_of(prop)) {
      const Node& cn = nodes_[c];
      if (is_abandonment_critique(cn)) return false;
      if (cn.verdict == Verdict::Refute && !has_refinement(c)) open = true;
    }
    return open;
  }

private:
  static std::optional<GraphError> check_edge_typing(const Node& src, const Node& dst, EdgeKind kind) {
    const auto mismatch = [&](const char* msg) {
      return GraphError{GraphErrorKind::EdgeTypeMismatch, msg, {src.id, dst.id}};
    };
    switch (kind) {
      case EdgeKind::Deduce:
        if ((src.kind != NodeKind::Problem && src.kind != NodeKind::Proposition) ||
            dst.kind != NodeKind::Proposition) {
          return mismatch("deduce edges run problem/proposition -> proposition");
        }
        return std::nullopt;
      case EdgeKind::Critique:
        if (src.kind != NodeKind::Proposition || dst.kind != NodeKind::Critique) {
          return mismatch("critique edges run proposition -> critique");
        }
        return std::nullopt;
      case EdgeKind::Refine:
        if (src.kind != NodeKind::Critique || dst.kind != NodeKind::Proposition) {
          return mismatch("refine edges run critique -> proposition");
        }
        if (src.verdict != Verdict::Refute) {
          return mismatch("refine edges start at refuting critiques");
        }
        return std::nullopt;
      case EdgeKind::Summarize:
        if (src.kind != NodeKind::Proposition || dst.kind != NodeKind::Summary) {
          return mismatch("summarize edges run proposition -> summary");
        }
        return std::nullopt;
      case EdgeKind::Context:
        if (src.kind != NodeKind::Problem ||
            (dst.kind != NodeKind::Proposition && dst.kind != NodeKind::Summary)) {
          return mismatch("context edges run problem -> proposition/summary");
        }
        return std::nullopt;
    }
    return mismatch("unknown edge kind");
  }

  bool path_exists(NodeId from, NodeId to) const {
    if (from >= nodes_.size()) return false;
    std::vector<bool> seen(nodes_.size(), false);
    std::vector<NodeId> stack{from};
    seen[from] = true;
    while (!stack.empty()) {
      const NodeId u = stack.back();
      stack.pop_back();
      if (u == to) return true;
      for (NodeId v : out_adj_[u]) {
        if (!seen[v]) {
          seen[v] = true;
          stack.push_back(v);
        }
      }
    }
    return false;
  }

  void push_node(Node n) {
    nodes_.push_back(std::move(n));
    out_adj_.emplace_back();
  }

  void push_edge(Edge e) {
    out_adj_[e.src].push_back(e.dst);
    edges_.push_back(e);
  }

  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::vector<NodeId>> out_adj_;
};

} // namespace dot
