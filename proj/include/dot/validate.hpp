#pragma once

// Whole-graph soundness checks. Runs its own traversals so it can catch
// corruption in deserialized data that never went through the mutation ops.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "dot/graph.hpp"
#include "dot/result.hpp"

namespace dot {

enum class ViolationKind {
  Cycle,
  UnreachableNode,
  UnverifiedSummaryBasis,
  VerifiedWithoutVerdict,
  InvalidatedWithoutRefinement,
  OrphanCritique,
  MultipleSummaries,
  EdgeTypeMismatch,
  OpenRefutation,
};

inline const char* to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::Cycle: return "Cycle";
    case ViolationKind::UnreachableNode: return "UnreachableNode";
    case ViolationKind::UnverifiedSummaryBasis: return "UnverifiedSummaryBasis";
    case ViolationKind::VerifiedWithoutVerdict: return "VerifiedWithoutVerdict";
    case ViolationKind::InvalidatedWithoutRefinement: return "InvalidatedWithoutRefinement";
    case ViolationKind::OrphanCritique: return "OrphanCritique";
    case ViolationKind::MultipleSummaries: return "MultipleSummaries";
    case ViolationKind::EdgeTypeMismatch: return "EdgeTypeMismatch";
    case ViolationKind::OpenRefutation: return "OpenRefutation";
  }
  return "?";
}

struct Violation {
  ViolationKind kind;
  std::vector<NodeId> nodes;
  std::string message;
};

namespace detail {

inline std::vector<std::vector<NodeId>> out_adjacency(const ReasoningDag& dag) {
  std::vector<std::vector<NodeId>> adj(dag.nodes().size());
  for (const Edge& e : dag.edges()) {
    if (e.src < adj.size() && e.dst < adj.size()) adj[e.src].push_back(e.dst);
  }
  return adj;
}

// Three-colour DFS; returns one directed cycle if any exists.
inline std::optional<std::vector<NodeId>> find_cycle(const ReasoningDag& dag) {
  const auto adj = out_adjacency(dag);
  enum Colour { White, Grey, Black };
  std::vector<Colour> colour(adj.size(), White);
  std::vector<NodeId> parent(adj.size(), 0);

  for (NodeId start = 0; start < adj.size(); ++start) {
    if (colour[start] != White) continue;
    std::vector<std::pair<NodeId, std::size_t>> stack{{start, 0}};
    colour[start] = Grey;
    while (!stack.empty()) {
      auto& [u, next] = stack.back();
      if (next < adj[u].size()) {
        const NodeId v = adj[u][next++];
        if (colour[v] == Grey) {
          std::vector<NodeId> cycle{v};
          for (NodeId w = u; w != v; w = parent[w]) cycle.push_back(w);
          std::reverse(cycle.begin() + 1, cycle.end());
          return cycle;
        }
        if (colour[v] == White) {
          colour[v] = Grey;
          parent[v] = u;
          stack.push_back({v, 0});
        }
      } else {
        colour[u] = Black;
        stack.pop_back();
      }
    }
  }
  return std::nullopt;
}

inline std::optional<GraphError> edge_typing_error(const Node& src, const Node& dst, EdgeKind kind) {
  switch (kind) {
    case EdgeKind::Deduce:
      if ((src.kind == NodeKind::Problem || src.kind == NodeKind::Proposition) &&
          dst.kind == NodeKind::Proposition) {
        return std::nullopt;
      }
      break;
    case EdgeKind::Critique:
      if (src.kind == NodeKind::Proposition && dst.kind == NodeKind::Critique) return std::nullopt;
      break;
    case EdgeKind::Refine:
      if (src.kind == NodeKind::Critique && src.verdict == Verdict::Refute &&
          dst.kind == NodeKind::Proposition) {
        return std::nullopt;
      }
      break;
    case EdgeKind::Summarize:
      if (src.kind == NodeKind::Proposition && dst.kind == NodeKind::Summary) return std::nullopt;
      break;
    case EdgeKind::Context:
      if (src.kind == NodeKind::Problem &&
          (dst.kind == NodeKind::Proposition || dst.kind == NodeKind::Summary)) {
        return std::nullopt;
      }
      break;
  }
  return GraphError{GraphErrorKind::EdgeTypeMismatch, "edge endpoints do not fit its kind",
                    {src.id, dst.id}};
}

} // namespace detail

// Findings, not failures: an empty list means every structural invariant
// holds. Deterministic ordering by (kind, first node).
inline std::vector<Violation> validate(const ReasoningDag& dag) {
  std::vector<Violation> out;
  const std::vector<Node>& nodes = dag.nodes();

  if (auto cycle = detail::find_cycle(dag)) {
    out.push_back({ViolationKind::Cycle, *cycle, "directed cycle"});
  }

  for (const Edge& e : dag.edges()) {
    if (e.src >= nodes.size() || e.dst >= nodes.size()) continue;
    if (detail::edge_typing_error(nodes[e.src], nodes[e.dst], e.kind)) {
      out.push_back({ViolationKind::EdgeTypeMismatch,
                     {e.src, e.dst},
                     std::string(to_string(e.kind)) + " edge " + std::to_string(e.src) + "->" +
                         std::to_string(e.dst) + " violates endpoint typing"});
    }
  }

  {
    const auto adj = detail::out_adjacency(dag);
    std::vector<bool> reached(nodes.size(), false);
    if (!nodes.empty()) {
      std::vector<NodeId> stack{kRootId};
      reached[kRootId] = true;
      while (!stack.empty()) {
        const NodeId u = stack.back();
        stack.pop_back();
        for (NodeId v : adj[u]) {
          if (!reached[v]) {
            reached[v] = true;
            stack.push_back(v);
          }
        }
      }
    }
    for (NodeId id = 0; id < nodes.size(); ++id) {
      if (!reached[id]) {
        out.push_back({ViolationKind::UnreachableNode,
                       {id},
                       "node " + std::to_string(id) + " is not reachable from the problem root"});
      }
    }
  }

  std::vector<NodeId> summaries;
  for (const Node& n : nodes) {
    if (n.kind == NodeKind::Summary) summaries.push_back(n.id);
  }
  if (summaries.size() > 1) {
    out.push_back({ViolationKind::MultipleSummaries, summaries,
                   "expected at most one summary node, found " + std::to_string(summaries.size())});
  }

  for (const Node& n : nodes) {
    if (n.kind == NodeKind::Proposition) {
      if (n.status == PropStatus::Verified) {
        bool verified_by_critique = false;
        for (NodeId c : dag.critiques_of(n.id)) {
          if (nodes[c].kind == NodeKind::Critique && nodes[c].verdict == Verdict::Verify) {
            verified_by_critique = true;
            break;
          }
        }
        if (!verified_by_critique) {
          out.push_back({ViolationKind::VerifiedWithoutVerdict,
                         {n.id},
                         "verified proposition " + std::to_string(n.id) +
                             " has no verifying critique"});
        }
      } else if (n.status == PropStatus::Invalidated) {
        bool refuted_and_refined = false;
        for (NodeId c : dag.critiques_of(n.id)) {
          if (nodes[c].kind == NodeKind::Critique && nodes[c].verdict == Verdict::Refute &&
              dag.has_refinement(c)) {
            refuted_and_refined = true;
            break;
          }
        }
        if (!refuted_and_refined) {
          out.push_back({ViolationKind::InvalidatedWithoutRefinement,
                         {n.id},
                         "invalidated proposition " + std::to_string(n.id) +
                             " lacks a refuting critique with a refinement"});
        }
      }
    }
    if (n.kind == NodeKind::Critique) {
      std::size_t incoming = 0;
      for (const Edge& e : dag.edges()) {
        if (e.dst == n.id && e.kind == EdgeKind::Critique) ++incoming;
      }
      if (incoming != 1) {
        out.push_back({ViolationKind::OrphanCritique,
                       {n.id},
                       "critique " + std::to_string(n.id) + " has " + std::to_string(incoming) +
                           " incoming critique edges, expected 1"});
      }
    }
  }

  for (const Edge& e : dag.edges()) {
    if (e.kind != EdgeKind::Summarize || e.src >= nodes.size()) continue;
    const Node& src = nodes[e.src];
    if (src.kind == NodeKind::Proposition && src.status != PropStatus::Verified) {
      out.push_back({ViolationKind::UnverifiedSummaryBasis,
                     {e.src},
                     "summary basis " + std::to_string(e.src) + " is not verified"});
    }
  }

  if (!summaries.empty()) {
    for (const Node& n : nodes) {
      if (n.kind == NodeKind::Proposition && dag.has_open_refutation(n.id)) {
        out.push_back({ViolationKind::OpenRefutation,
                       {n.id},
                       "proposition " + std::to_string(n.id) +
                           " carries an unanswered refutation while a summary exists"});
      }
    }
  }

  std::sort(out.begin(), out.end(), [](const Violation& a, const Violation& b) {
    if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
    const NodeId an = a.nodes.empty() ? 0 : a.nodes.front();
    const NodeId bn = b.nodes.empty() ? 0 : b.nodes.front();
    return an < bn;
  });
  return out;
}

// The summary's ancestor set. Verification is traversed as if each verifying
// critique fed the proposition it verified, so critiques of verified steps
// belong to the closure even though verification mutates status in place.
//
// Checks: the closure covers every verified proposition, only verified
// propositions feed the summary directly, and the root is an ancestor.
inline Result<std::vector<NodeId>, std::vector<Violation>> summary_closure(const ReasoningDag& dag) {
  const std::vector<Node>& nodes = dag.nodes();
  std::vector<NodeId> summaries;
  for (const Node& n : nodes) {
    if (n.kind == NodeKind::Summary) summaries.push_back(n.id);
  }
  if (summaries.size() != 1) {
    return std::vector<Violation>{
        {ViolationKind::MultipleSummaries, summaries.empty() ? std::vector<NodeId>{kRootId} : summaries,
         "expected exactly one summary node, found " + std::to_string(summaries.size())}};
  }

  std::vector<std::vector<NodeId>> in_adj(nodes.size());
  for (const Edge& e : dag.edges()) {
    if (e.src < nodes.size() && e.dst < nodes.size()) in_adj[e.dst].push_back(e.src);
  }
  for (const Node& n : nodes) {
    if (n.kind != NodeKind::Critique || n.verdict != Verdict::Verify) continue;
    if (auto target = dag.critique_target(n.id)) {
      if (nodes[*target].status == PropStatus::Verified) in_adj[*target].push_back(n.id);
    }
  }

  std::vector<bool> in_closure(nodes.size(), false);
  std::vector<NodeId> stack{summaries.front()};
  in_closure[summaries.front()] = true;
  while (!stack.empty()) {
    const NodeId u = stack.back();
    stack.pop_back();
    for (NodeId v : in_adj[u]) {
      if (!in_closure[v]) {
        in_closure[v] = true;
        stack.push_back(v);
      }
    }
  }

  std::vector<Violation> violations;
  for (const Node& n : nodes) {
    if (n.kind == NodeKind::Proposition && n.status == PropStatus::Verified && !in_closure[n.id]) {
      violations.push_back({ViolationKind::UnreachableNode,
                            {n.id},
                            "verified proposition " + std::to_string(n.id) +
                                " is not aggregated by the summary"});
    }
  }
  for (const Edge& e : dag.edges()) {
    if (e.kind != EdgeKind::Summarize || e.src >= nodes.size()) continue;
    const Node& src = nodes[e.src];
    if (src.kind == NodeKind::Proposition && src.status != PropStatus::Verified) {
      violations.push_back({ViolationKind::UnverifiedSummaryBasis,
                            {e.src},
                            "summary basis " + std::to_string(e.src) + " is not verified"});
    }
  }
  if (!in_closure[kRootId]) {
    violations.push_back({ViolationKind::UnreachableNode,
                          {kRootId},
                          "the problem root is not an ancestor of the summary"});
  }
  if (!violations.empty()) return violations;

  std::vector<NodeId> closure;
  for (NodeId id = 0; id < nodes.size(); ++id) {
    if (in_closure[id]) closure.push_back(id);
  }
  return closure;
}

} // namespace dot
