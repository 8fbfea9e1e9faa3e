#pragma once

// Shared test utilities. The oracles here deliberately work on raw node/edge
// lists with their own traversals, independent of the library's incremental
// checks.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <tuple>
#include <unistd.h>
#include <vector>

#include "dot/graph.hpp"
#include "dot/trace.hpp"

namespace testutil {

struct Rng {
  std::uint64_t state;

  explicit Rng(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t below(std::uint64_t n) { return next() % n; }

  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
};

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

// DFS cycle oracle over a plain edge list.
inline bool has_cycle(std::size_t node_count, const std::vector<dot::Edge>& edges) {
  std::vector<std::vector<dot::NodeId>> adj(node_count);
  for (const dot::Edge& e : edges) adj[e.src].push_back(e.dst);
  enum { White, Grey, Black };
  std::vector<int> colour(node_count, White);

  const auto dfs = [&](auto&& self, dot::NodeId u) -> bool {
    colour[u] = Grey;
    for (dot::NodeId v : adj[u]) {
      if (colour[v] == Grey) return true;
      if (colour[v] == White && self(self, v)) return true;
    }
    colour[u] = Black;
    return false;
  };
  for (dot::NodeId u = 0; u < node_count; ++u) {
    if (colour[u] == White && dfs(dfs, u)) return true;
  }
  return false;
}

// Brute force: the lexicographically smallest valid linearization, found by
// walking permutations in lexicographic order.
inline std::optional<std::vector<dot::NodeId>> lexmin_topo(std::size_t node_count,
                                                           const std::vector<dot::Edge>& edges) {
  std::vector<dot::NodeId> perm(node_count);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::size_t> position(node_count);
  do {
    for (std::size_t i = 0; i < perm.size(); ++i) position[perm[i]] = i;
    bool valid = true;
    for (const dot::Edge& e : edges) {
      if (position[e.src] >= position[e.dst]) {
        valid = false;
        break;
      }
    }
    if (valid) return perm;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::nullopt;
}

// Exhaustive path search: does any directed path lead from `from` to `to`?
inline bool path_exists_brute(std::size_t node_count, const std::vector<dot::Edge>& edges,
                              dot::NodeId from, dot::NodeId to) {
  if (from == to) return true;
  std::vector<bool> visited(node_count, false);
  const auto walk = [&](auto&& self, dot::NodeId u) -> bool {
    if (u == to) return true;
    visited[u] = true;
    for (const dot::Edge& e : edges) {
      if (e.src == u && !visited[e.dst] && self(self, e.dst)) return true;
    }
    return false;
  };
  return walk(walk, from);
}

// ---------------------------------------------------------------------------
// Canonical Figure-style golden graph
// ---------------------------------------------------------------------------

// Problem root; a first proposition refuted and refined; the refinement
// verified; a second proposition drawn from it (with root context) and
// verified; a summary over both verified steps plus root context.
inline dot::ReasoningDag golden_dag() {
  using namespace dot;
  ReasoningDag dag = ReasoningDag::create("Which one is larger, 9.11 or 9.8?").value();
  const NodeId p1 =
      dag.add_proposition("9.11 is larger than 9.8 because 11 is greater than 8.",
                          std::array{kRootId}, std::array{EdgeKind::Deduce})
          .value();
  const NodeId c1 =
      dag.add_critique(p1, Verdict::Refute,
                       "Comparing fractional digits positionally, 0.8 is 0.80, which exceeds 0.11.")
          .value();
  const NodeId p2 =
      dag.add_refinement(c1, "Compare digit by digit: 9.80 versus 9.11, and 0.80 > 0.11.").value();
  const NodeId c2 =
      dag.add_critique(p2, Verdict::Verify, "valid: the positional comparison is correct.").value();
  const NodeId p3 = dag.add_proposition("Therefore 9.8 is the larger number.", std::array{p2, kRootId},
                                        std::array{EdgeKind::Deduce, EdgeKind::Context})
                        .value();
  const NodeId c3 =
      dag.add_critique(p3, Verdict::Verify, "verified: follows from the established comparison.")
          .value();
  const NodeId s1 =
      dag.add_summary(std::array{p2, p3},
                      "9.8 is larger than 9.11: aligning decimals gives 9.80 > 9.11.", true)
          .value();
  dag.set_display_name(p1, "p1");
  dag.set_display_name(c1, "c1");
  dag.set_display_name(p2, "p2");
  dag.set_display_name(c2, "c2");
  dag.set_display_name(p3, "p3");
  dag.set_display_name(c3, "c3");
  dag.set_display_name(s1, "s1");
  return dag;
}

// ---------------------------------------------------------------------------
// Random mutation sequences
// ---------------------------------------------------------------------------

struct MutationFuzz {
  dot::ReasoningDag dag = dot::ReasoningDag::create("fuzz problem").value();
  std::size_t rejected_cycles = 0;
  std::size_t rejected_other = 0;
  std::size_t applied = 0;
  // (src, dst, kind) raw insertions rejected as cycle-closing.
  std::vector<dot::Edge> cycle_rejections;
};

// Applies `ops` random mutations (plus raw edge-insert attempts) and records
// what the DAG rejected, for confirmation against the oracles.
inline MutationFuzz random_mutations(Rng& rng, int ops) {
  using namespace dot;
  MutationFuzz fuzz;
  ReasoningDag& dag = fuzz.dag;

  for (int i = 0; i < ops; ++i) {
    const std::uint64_t roll = rng.below(100);
    const NodeId n = dag.next_id();
    if (roll < 35) {
      std::vector<NodeId> parents{static_cast<NodeId>(rng.below(n))};
      std::vector<EdgeKind> kinds{EdgeKind::Deduce};
      if (parents[0] != kRootId && rng.below(2) == 0) {
        parents.push_back(kRootId);
        kinds.push_back(EdgeKind::Context);
      }
      if (dag.add_proposition("step " + std::to_string(n), parents, kinds).ok()) ++fuzz.applied;
    } else if (roll < 60) {
      const NodeId target = static_cast<NodeId>(rng.below(n));
      if (dag.add_critique(target, rng.below(2) ? Verdict::Verify : Verdict::Refute,
                           "critique of " + std::to_string(target))
              .ok()) {
        ++fuzz.applied;
      }
    } else if (roll < 75) {
      const NodeId critique = static_cast<NodeId>(rng.below(n));
      if (dag.add_refinement(critique, "refined " + std::to_string(n)).ok()) ++fuzz.applied;
    } else if (roll < 82) {
      std::vector<NodeId> basis;
      for (const Node& node : dag.nodes()) {
        if (node.kind == NodeKind::Proposition && node.status == PropStatus::Verified &&
            rng.below(2) == 0) {
          basis.push_back(node.id);
        }
      }
      if (!basis.empty() &&
          dag.add_summary(basis, "summary " + std::to_string(n), rng.below(2) == 0).ok()) {
        ++fuzz.applied;
      }
    } else {
      const NodeId src = static_cast<NodeId>(rng.below(n));
      const NodeId dst = static_cast<NodeId>(rng.below(n));
      const auto kind = static_cast<EdgeKind>(rng.below(5));
      if (auto err = dag.add_edge(src, dst, kind)) {
        if (err->kind == GraphErrorKind::CycleRejected) {
          ++fuzz.rejected_cycles;
          fuzz.cycle_rejections.push_back({src, dst, kind});
        } else {
          ++fuzz.rejected_other;
        }
      } else {
        ++fuzz.applied;
      }
    }
  }
  return fuzz;
}

// ---------------------------------------------------------------------------
// Random trace generation
// ---------------------------------------------------------------------------

inline const char* pick_body(Rng& rng, const std::vector<const char*>& pool) {
  return pool[rng.below(pool.size())];
}

inline const std::vector<const char*>& proposal_bodies() {
  static const std::vector<const char*> pool = {
      "split the claim into two lemmas and prove each",
      "compare 0.80 > 0.11 and conclude from the digits",
      "for x < 2 the claim is immediate, handle the rest by bounding",
      "reduce to the base case n = 1",
      "apply the definition term by term",
  };
  return pool;
}

inline const std::vector<const char*>& refutation_bodies() {
  static const std::vector<const char*> pool = {
      "wrong: the bound fails at the endpoint",
      "the second lemma is unsupported",
      "no, a case is missing for negative inputs",
  };
  return pool;
}

inline const std::vector<const char*>& refinement_bodies() {
  static const std::vector<const char*> pool = {
      "treat the endpoint separately, then the bound holds",
      "prove the second lemma by direct computation",
      "add the negative case and close the argument",
  };
  return pool;
}

inline const std::vector<const char*>& verification_bodies() {
  static const std::vector<const char*> pool = {
      "valid and complete",
      "verified against every case",
  };
  return pool;
}

// Session-shaped trace with every attribute explicit and canonical.
inline dot::Trace random_resolved_trace(Rng& rng) {
  using namespace dot;
  Trace trace;
  trace.problem = "does property " + std::to_string(rng.below(1000)) + " hold?";
  int next_p = 1, next_c = 1;
  std::vector<std::string> verified;
  std::string last_verified;
  const int lines = 1 + static_cast<int>(rng.below(3));
  for (int line = 0; line < lines; ++line) {
    RoleBlock proposal;
    proposal.role = Role::Proposer;
    proposal.body = pick_body(rng, proposal_bodies());
    std::string pid = "p" + std::to_string(next_p++);
    proposal.set_attr("id", pid);
    if (last_verified.empty()) {
      proposal.set_attr("from", "root");
    } else {
      proposal.set_attr("from", rng.below(2) ? last_verified + ",root" : last_verified);
    }
    trace.blocks.push_back(std::move(proposal));

    const int rounds = static_cast<int>(rng.below(3));
    for (int r = 0; r < rounds; ++r) {
      RoleBlock refute;
      refute.role = Role::Critic;
      refute.body = pick_body(rng, refutation_bodies());
      const std::string cid = "c" + std::to_string(next_c++);
      refute.set_attr("id", cid);
      refute.set_attr("of", pid);
      refute.set_attr("verdict", "refute");
      trace.blocks.push_back(std::move(refute));

      RoleBlock refined;
      refined.role = Role::Proposer;
      refined.body = pick_body(rng, refinement_bodies());
      pid = "p" + std::to_string(next_p++);
      refined.set_attr("id", pid);
      refined.set_attr("refines", cid);
      trace.blocks.push_back(std::move(refined));
    }

    RoleBlock verify;
    verify.role = Role::Critic;
    verify.body = pick_body(rng, verification_bodies());
    verify.set_attr("id", "c" + std::to_string(next_c++));
    verify.set_attr("of", pid);
    verify.set_attr("verdict", "verify");
    trace.blocks.push_back(std::move(verify));
    verified.push_back(pid);
    last_verified = pid;
  }
  RoleBlock summary;
  summary.role = Role::Summarizer;
  summary.body = "the verified steps settle the question";
  summary.set_attr("id", "s1");
  std::vector<std::string> uses = verified;
  if (rng.below(2)) uses.push_back("root");
  summary.set_attr("uses", dot::detail::join_refs(uses));
  trace.blocks.push_back(std::move(summary));
  return trace;
}

struct BarePair {
  std::string bare;            // tokens and bodies only, no attributes
  dot::Trace explicit_trace;   // the same session with inferred attrs spelled out
};

// The bare stream resolves, by the default inference rules, to exactly the
// explicit trace: verify critiques lead with a marker word, refinements
// immediately follow their refutation, and new lines descend from the most
// recent verified step.
inline BarePair random_bare_pair(Rng& rng) {
  using namespace dot;
  BarePair pair;
  Trace& trace = pair.explicit_trace;
  trace.problem = "bare stream " + std::to_string(rng.below(1000));
  int next_p = 1, next_c = 1;
  std::vector<std::string> verified;
  std::string last_verified;

  const auto append = [&](Role role, const char* body) -> RoleBlock& {
    pair.bare += role_open_token(role);
    pair.bare += body;
    pair.bare += role_close_token(role);
    pair.bare += '\n';
    RoleBlock block;
    block.role = role;
    block.body = body;
    trace.blocks.push_back(std::move(block));
    return trace.blocks.back();
  };

  const int lines = 1 + static_cast<int>(rng.below(3));
  for (int line = 0; line < lines; ++line) {
    RoleBlock& proposal = append(Role::Proposer, pick_body(rng, proposal_bodies()));
    std::string pid = "p" + std::to_string(next_p++);
    proposal.set_attr("id", pid);
    proposal.set_attr("from", last_verified.empty() ? "root" : last_verified);

    const int rounds = static_cast<int>(rng.below(3));
    for (int r = 0; r < rounds; ++r) {
      RoleBlock& refute = append(Role::Critic, pick_body(rng, refutation_bodies()));
      const std::string cid = "c" + std::to_string(next_c++);
      refute.set_attr("id", cid);
      refute.set_attr("of", pid);
      refute.set_attr("verdict", "refute");

      RoleBlock& refined = append(Role::Proposer, pick_body(rng, refinement_bodies()));
      pid = "p" + std::to_string(next_p++);
      refined.set_attr("id", pid);
      refined.set_attr("refines", cid);
    }

    RoleBlock& verify = append(Role::Critic, pick_body(rng, verification_bodies()));
    verify.set_attr("id", "c" + std::to_string(next_c++));
    verify.set_attr("of", pid);
    verify.set_attr("verdict", "verify");
    verified.push_back(pid);
    last_verified = pid;
  }
  RoleBlock& summary = append(Role::Summarizer, "the verified steps settle the question");
  summary.set_attr("id", "s1");
  summary.set_attr("uses", dot::detail::join_refs(verified));
  for (RoleBlock& b : trace.blocks) b.sort_attrs();
  return pair;
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration of small DAGs
// ---------------------------------------------------------------------------

// Visits every distinct DAG reachable with at most `max_nodes` nodes through
// a trace-expressible mutation grammar: proposals from [root], [p] or
// [p, root-context], critiques of any proposed node, refinements of
// unanswered refutations, and one summary over any verified subset.
// Returns the number of DAGs visited.
template <typename Fn>
inline std::size_t enumerate_small_dags(std::size_t max_nodes, Fn&& per_dag) {
  using namespace dot;
  const auto encode = [](const ReasoningDag& dag) {
    std::string key;
    for (const Node& n : dag.nodes()) {
      key += std::to_string(static_cast<int>(n.kind));
      if (n.status) key += 's' + std::to_string(static_cast<int>(*n.status));
      if (n.verdict) key += 'v' + std::to_string(static_cast<int>(*n.verdict));
      key += ';';
    }
    key += '|';
    std::vector<Edge> edges = dag.edges();
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
      return std::tuple(a.src, a.dst, static_cast<int>(a.kind)) <
             std::tuple(b.src, b.dst, static_cast<int>(b.kind));
    });
    for (const Edge& e : edges) {
      key += std::to_string(e.src) + '>' + std::to_string(e.dst) + 'k' +
             std::to_string(static_cast<int>(e.kind)) + ';';
    }
    return key;
  };

  std::vector<ReasoningDag> frontier{ReasoningDag::create("q").value()};
  std::set<std::string> seen;
  std::size_t visited = 0;
  for (std::size_t cursor = 0; cursor < frontier.size(); ++cursor) {
    const ReasoningDag dag = frontier[cursor];
    per_dag(dag);
    ++visited;
    if (dag.nodes().size() >= max_nodes) continue;

    std::vector<ReasoningDag> next;
    for (NodeId p = 0; p < dag.nodes().size(); ++p) {
      const Node& n = dag.node(p);
      const bool is_prop = n.kind == NodeKind::Proposition;
      if (n.kind == NodeKind::Problem || is_prop) {
        ReasoningDag d1 = dag;
        if (d1.add_proposition("t", std::array{p}, std::array{EdgeKind::Deduce}).ok()) {
          next.push_back(std::move(d1));
        }
        if (is_prop) {
          ReasoningDag d2 = dag;
          if (d2.add_proposition("t", std::array{p, kRootId},
                                 std::array{EdgeKind::Deduce, EdgeKind::Context})
                  .ok()) {
            next.push_back(std::move(d2));
          }
        }
      }
      if (is_prop && n.status == PropStatus::Proposed) {
        for (Verdict v : {Verdict::Verify, Verdict::Refute}) {
          ReasoningDag d = dag;
          if (d.add_critique(p, v, "c").ok()) next.push_back(std::move(d));
        }
      }
      if (n.kind == NodeKind::Critique && n.verdict == Verdict::Refute && !dag.has_refinement(p)) {
        ReasoningDag d = dag;
        if (d.add_refinement(p, "r").ok()) next.push_back(std::move(d));
      }
    }
    if (dag.summary_count() == 0) {
      std::vector<NodeId> verified;
      for (const Node& n : dag.nodes()) {
        if (n.kind == NodeKind::Proposition && n.status == PropStatus::Verified) {
          verified.push_back(n.id);
        }
      }
      for (std::size_t mask = 1; mask < (1u << verified.size()); ++mask) {
        std::vector<NodeId> basis;
        for (std::size_t b = 0; b < verified.size(); ++b) {
          if (mask & (1u << b)) basis.push_back(verified[b]);
        }
        for (bool ctx : {false, true}) {
          ReasoningDag d = dag;
          if (d.add_summary(basis, "s", ctx).ok()) next.push_back(std::move(d));
        }
      }
    }
    for (ReasoningDag& d : next) {
      if (seen.insert(encode(d)).second) frontier.push_back(std::move(d));
    }
  }
  return visited;
}

// ---------------------------------------------------------------------------
// Minimal Graphviz grammar check
// ---------------------------------------------------------------------------

// Accepts: digraph IDENT { stmt* } where stmt is `ID [attrs];`,
// `ID -> ID [attrs];` or `key=value;`, attrs being [k=v ...] with quoted or
// bare values. Returns false on anything else.
inline bool dot_grammar_ok(const std::string& text) {
  std::size_t i = 0;
  const auto skip_ws = [&] {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\n' || text[i] == '\r'))
      ++i;
  };
  const auto ident = [&]() -> std::string {
    std::size_t start = i;
    while (i < text.size() &&
           (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '_' || text[i] == '.')) {
      ++i;
    }
    return text.substr(start, i - start);
  };
  const auto value = [&]() -> bool {
    if (i < text.size() && text[i] == '"') {
      ++i;
      while (i < text.size() && text[i] != '"') {
        if (text[i] == '\\') ++i;
        ++i;
      }
      if (i >= text.size()) return false;
      ++i;  // closing quote
      return true;
    }
    return !ident().empty();
  };
  const auto attr_block = [&]() -> bool {
    if (i >= text.size() || text[i] != '[') return true;
    ++i;
    skip_ws();
    while (i < text.size() && text[i] != ']') {
      if (ident().empty()) return false;
      skip_ws();
      if (i >= text.size() || text[i] != '=') return false;
      ++i;
      skip_ws();
      if (!value()) return false;
      skip_ws();
    }
    if (i >= text.size()) return false;
    ++i;  // ']'
    return true;
  };

  skip_ws();
  if (ident() != "digraph") return false;
  skip_ws();
  if (ident().empty()) return false;
  skip_ws();
  if (i >= text.size() || text[i] != '{') return false;
  ++i;
  while (true) {
    skip_ws();
    if (i < text.size() && text[i] == '}') {
      ++i;
      break;
    }
    const std::string head = ident();
    if (head.empty()) return false;
    skip_ws();
    if (i < text.size() && text[i] == '=') {
      ++i;
      skip_ws();
      if (!value()) return false;
    } else if (i + 1 < text.size() && text[i] == '-' && text[i + 1] == '>') {
      i += 2;
      skip_ws();
      if (ident().empty()) return false;
      skip_ws();
      if (!attr_block()) return false;
    } else {
      if (!attr_block()) return false;
    }
    skip_ws();
    if (i >= text.size() || text[i] != ';') return false;
    ++i;
  }
  skip_ws();
  return i == text.size();
}

// ---------------------------------------------------------------------------
// Process and filesystem helpers
// ---------------------------------------------------------------------------

struct CommandResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

inline CommandResult run_command(const std::string& command) {
  CommandResult result;
  FILE* pipe = popen((command + " 2>&1").c_str(), "r");
  if (pipe == nullptr) return result;
  char buffer[4096];
  std::size_t n = 0;
  while ((n = fread(buffer, 1, sizeof(buffer), pipe)) > 0) {
    result.output.append(buffer, n);
  }
  const int status = pclose(pipe);
  if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
  return result;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::filesystem::path fresh_temp_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("dot-test-" + tag + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

} // namespace testutil
