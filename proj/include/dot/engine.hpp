#pragma once

// Session driver: chooses the next role, prompts the backend, folds each
// generated block into the DAG and the transcript, and decides termination.

#include <cassert>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dot/backend.hpp"
#include "dot/graph.hpp"
#include "dot/result.hpp"
#include "dot/trace.hpp"

namespace dot {

struct EngineConfig {
  int min_verified = 1;
  int max_rounds = 16;
  int max_refinements_per_line = 4;
  std::vector<std::string> verify_markers = {"valid", "verified"};
  bool include_context_edges = true;
  // Request knobs forwarded to the backend.
  int max_tokens = 512;
  double temperature = 0.0;
};

enum class Phase { AwaitProposal, AwaitCritique, AwaitRefinement, AwaitSummary, Done, Failed };

enum class Outcome { Summarized, BudgetExhausted, BackendFailure };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::AwaitProposal: return "await-proposal";
    case Phase::AwaitCritique: return "await-critique";
    case Phase::AwaitRefinement: return "await-refinement";
    case Phase::AwaitSummary: return "await-summary";
    case Phase::Done: return "done";
    case Phase::Failed: return "failed";
  }
  return "?";
}

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Summarized: return "summarized";
    case Outcome::BudgetExhausted: return "budget-exhausted";
    case Outcome::BackendFailure: return "backend-failure";
  }
  return "?";
}

inline constexpr std::string_view kAbandonedCritiqueText = "abandoned: refinement budget exceeded";

struct EngineState {
  Phase phase = Phase::AwaitProposal;
  ReasoningDag dag;
  int round = 0;
  std::optional<NodeId> open_line;  // proposition currently under critique/refinement
  Trace transcript;

  // Session bookkeeping.
  std::optional<NodeId> pending_refute;  // refuting critique awaiting its refinement
  int refinements_in_line = 0;
  std::optional<Outcome> failure;
  std::string failure_message;

  static Result<EngineState, GraphError> create(std::string_view problem) {
    Result<ReasoningDag, GraphError> dag = ReasoningDag::create(problem);
    if (!dag.ok()) return std::move(dag).error();
    EngineState state;
    state.dag = std::move(dag).value();
    state.transcript.problem = std::string(detail::trim(problem));
    return state;
  }

  bool terminal() const { return phase == Phase::Done || phase == Phase::Failed; }
};

struct SessionResult {
  ReasoningDag dag;
  Trace trace;
  std::string answer;
  int rounds_used = 0;
  Outcome outcome = Outcome::BackendFailure;
  std::string message;
};

inline Role next_role(const EngineState& state) {
  switch (state.phase) {
    case Phase::AwaitProposal: return Role::Proposer;
    case Phase::AwaitCritique: return Role::Critic;
    case Phase::AwaitRefinement: return Role::Proposer;
    case Phase::AwaitSummary: return Role::Summarizer;
    case Phase::Done:
    case Phase::Failed: break;
  }
  assert(false && "next_role on a terminal phase");
  return Role::Proposer;
}

// Enough verified propositions and no line mid-refutation. Abandoned lines
// are settled and do not block.
inline bool sufficiency(const ReasoningDag& dag, const EngineConfig& config) {
  std::size_t verified = 0;
  for (const Node& n : dag.nodes()) {
    if (n.kind == NodeKind::Proposition && n.status == PropStatus::Verified) ++verified;
  }
  if (verified < static_cast<std::size_t>(config.min_verified)) return false;
  for (const Node& n : dag.nodes()) {
    if (n.kind == NodeKind::Proposition && dag.has_open_refutation(n.id)) return false;
  }
  return true;
}

// Prompt = problem header + transcript so far + the opening token of the
// requested role; the backend completes through the matching close token.
inline BackendRequest build_prompt(const EngineState& state, Role role, const EngineConfig& config) {
  BackendRequest request;
  request.prompt = "#problem: " + state.transcript.problem + "\n\n";
  if (!state.transcript.blocks.empty()) {
    Result<std::string, RenderError> rendered = render_trace(state.transcript);
    assert(rendered.ok() && "engine transcripts are always resolved");
    if (rendered.ok()) {
      request.prompt += rendered.value();
      request.prompt += '\n';
    }
  }
  request.prompt += role_open_token(role);
  request.stop_sequences = {role_close_token(Role::Proposer), role_close_token(Role::Critic),
                            role_close_token(Role::Summarizer)};
  request.role_hint = role;
  request.max_tokens = config.max_tokens;
  request.temperature = config.temperature;
  return request;
}

namespace detail {

inline std::vector<std::string> transcript_ids(const Trace& transcript) {
  std::vector<std::string> ids;
  for (const RoleBlock& b : transcript.blocks) {
    if (const std::string* id = b.attr("id")) ids.push_back(*id);
  }
  return ids;
}

inline std::string fresh_block_id(const Trace& transcript, char prefix) {
  const std::vector<std::string> taken = transcript_ids(transcript);
  for (int n = 1;; ++n) {
    std::string id = prefix + std::to_string(n);
    if (std::find(taken.begin(), taken.end(), id) == taken.end()) return id;
  }
}

inline std::optional<NodeId> node_by_block_id(const ReasoningDag& dag, std::string_view id) {
  if (id == "root") return kRootId;
  for (const Node& n : dag.nodes()) {
    if (n.display_name == id) return n.id;
  }
  return std::nullopt;
}

inline std::string most_recent_verified_id(const ReasoningDag& dag) {
  for (auto it = dag.nodes().rbegin(); it != dag.nodes().rend(); ++it) {
    if (it->kind == NodeKind::Proposition && it->status == PropStatus::Verified) {
      return it->display_name;
    }
  }
  return {};
}

inline bool marker_verdict(std::string_view body, const std::vector<std::string>& markers) {
  const std::string lowered = to_lower(body);
  for (const std::string& marker : markers) {
    if (std::string_view(lowered).starts_with(to_lower(marker))) return true;
  }
  return false;
}

// Missing attributes are resolved against the session state: critiques target
// the open line, refinements answer the pending refutation, new proposals
// descend from the latest verified step (plus root context when configured),
// and summaries take every verified proposition.
inline void resolve_block_attrs(RoleBlock& block, const EngineState& state,
                                const EngineConfig& config) {
  switch (block.role) {
    case Role::Proposer: {
      if (!block.has_attr("id")) block.set_attr("id", fresh_block_id(state.transcript, 'p'));
      if (block.has_attr("refines") && block.has_attr("from")) block.erase_attr("from");
      if (!block.has_attr("from") && !block.has_attr("refines")) {
        if (state.phase == Phase::AwaitRefinement && state.pending_refute) {
          block.set_attr("refines", state.dag.node(*state.pending_refute).display_name);
        } else {
          std::string from = most_recent_verified_id(state.dag);
          if (from.empty()) {
            from = "root";
          } else if (config.include_context_edges) {
            from += ",root";
          }
          block.set_attr("from", std::move(from));
        }
      }
      break;
    }
    case Role::Critic: {
      if (!block.has_attr("id")) block.set_attr("id", fresh_block_id(state.transcript, 'c'));
      if (!block.has_attr("of") && state.open_line) {
        block.set_attr("of", state.dag.node(*state.open_line).display_name);
      }
      if (!block.has_attr("verdict")) {
        block.set_attr("verdict",
                       marker_verdict(block.body, config.verify_markers) ? "verify" : "refute");
      }
      break;
    }
    case Role::Summarizer: {
      if (!block.has_attr("id")) block.set_attr("id", fresh_block_id(state.transcript, 's'));
      if (!block.has_attr("uses")) {
        std::vector<std::string> uses;
        for (NodeId id : state.dag.verified_chain()) uses.push_back(state.dag.node(id).display_name);
        if (config.include_context_edges) uses.push_back("root");
        block.set_attr("uses", join_refs(uses));
      }
      break;
    }
  }
  block.sort_attrs();
}

// One block -> one graph mutation, mirroring apply_trace.
inline Result<NodeId, GraphError> fold_block(EngineState& state, const RoleBlock& block) {
  const auto lookup = [&](const std::string& ref) { return node_by_block_id(state.dag, ref); };
  switch (block.role) {
    case Role::Proposer: {
      if (const std::string* refines = block.attr("refines")) {
        const auto critique = lookup(*refines);
        if (!critique) {
          return GraphError{GraphErrorKind::UnknownNode, "unknown id '" + *refines + "'", {}};
        }
        return state.dag.add_refinement(*critique, block.body);
      }
      const std::string* from = block.attr("from");
      if (!from) return GraphError{GraphErrorKind::EmptyParents, "proposer has no parents", {}};
      const std::vector<std::string> refs = split_refs(*from);
      bool has_non_root = false;
      for (const std::string& r : refs) has_non_root |= (r != "root");
      std::vector<NodeId> parents;
      std::vector<EdgeKind> kinds;
      for (const std::string& r : refs) {
        const auto parent = lookup(r);
        if (!parent) return GraphError{GraphErrorKind::UnknownNode, "unknown id '" + r + "'", {}};
        parents.push_back(*parent);
        kinds.push_back(r == "root" && has_non_root ? EdgeKind::Context : EdgeKind::Deduce);
      }
      return state.dag.add_proposition(block.body, parents, kinds);
    }
    case Role::Critic: {
      const std::string* of = block.attr("of");
      const std::string* verdict = block.attr("verdict");
      if (!of || !verdict) {
        return GraphError{GraphErrorKind::UnknownNode, "critic block is unresolved", {}};
      }
      const auto target = lookup(*of);
      if (!target) return GraphError{GraphErrorKind::UnknownNode, "unknown id '" + *of + "'", {}};
      return state.dag.add_critique(*target, *verdict == "verify" ? Verdict::Verify : Verdict::Refute,
                                    block.body);
    }
    case Role::Summarizer: {
      const std::string* uses = block.attr("uses");
      if (!uses) return GraphError{GraphErrorKind::EmptyBasis, "summarizer block is unresolved", {}};
      std::vector<NodeId> basis;
      bool include_context = false;
      for (const std::string& r : split_refs(*uses)) {
        if (r == "root") {
          include_context = true;
          continue;
        }
        const auto b = lookup(r);
        if (!b) return GraphError{GraphErrorKind::UnknownNode, "unknown id '" + r + "'", {}};
        basis.push_back(*b);
      }
      return state.dag.add_summary(basis, block.body, include_context);
    }
  }
  return GraphError{GraphErrorKind::UnknownNode, "unreachable", {}};
}

inline EngineConfig sanitized(EngineConfig config) {
  if (config.min_verified < 1) config.min_verified = 1;
  if (config.max_rounds < config.min_verified) config.max_rounds = config.min_verified;
  if (config.max_refinements_per_line < 1) config.max_refinements_per_line = 1;
  if (config.max_tokens < 1) config.max_tokens = 1;
  if (config.temperature < 0.0) config.temperature = 0.0;
  return config;
}

} // namespace detail

// One iteration of the loop: exactly one backend call (plus up to two retries
// on unusable output), its block folded into DAG and transcript, and the
// phase advanced.
inline EngineState step(EngineState state, Backend& backend, const EngineConfig& config) {
  if (state.terminal()) return state;
  const Role role = next_role(state);

  if (role == Role::Critic && state.round + 1 > config.max_rounds) {
    state.phase = Phase::Failed;
    state.failure = Outcome::BudgetExhausted;
    state.failure_message =
        "round budget exhausted after " + std::to_string(state.round) + " critic steps";
    return state;
  }

  const BackendRequest request = build_prompt(state, role, config);

  std::optional<RoleBlock> block;
  std::string failure_detail = "backend produced no usable output";
  for (int attempt = 0; attempt < 3 && !block; ++attempt) {
    Result<BackendResponse, BackendError> response = backend.generate(request);
    if (!response.ok()) {
      failure_detail =
          std::string(to_string(response.error().kind)) + ": " + response.error().message;
      continue;
    }
    ParseOptions opts;
    opts.lenient = true;
    opts.known_ids = detail::transcript_ids(state.transcript);
    const ParseReport report = parse_stream(role_open_token(role) + response.value().text, opts);
    if (report.trace.blocks.empty() || report.trace.blocks.front().role != role ||
        report.trace.blocks.front().body.empty()) {
      failure_detail =
          std::string("completion did not contain a usable <") + role_name(role) + "> block";
      continue;
    }
    block = report.trace.blocks.front();
  }
  if (!block) {
    state.phase = Phase::Failed;
    state.failure = Outcome::BackendFailure;
    state.failure_message = failure_detail;
    return state;
  }

  detail::resolve_block_attrs(*block, state, config);
  Result<NodeId, GraphError> folded = detail::fold_block(state, *block);
  if (!folded.ok()) {
    state.phase = Phase::Failed;
    state.failure = Outcome::BackendFailure;
    state.failure_message = std::string(to_string(folded.error().kind)) + ": " +
                            folded.error().message;
    return state;
  }
  const NodeId added = folded.value();
  state.dag.set_display_name(added, *block->attr("id"));
  state.transcript.blocks.push_back(*block);

  switch (role) {
    case Role::Proposer:
      if (block->has_attr("refines")) {
        ++state.refinements_in_line;
      } else {
        state.refinements_in_line = 0;
      }
      state.open_line = added;
      state.pending_refute = std::nullopt;
      state.phase = Phase::AwaitCritique;
      break;
    case Role::Critic: {
      ++state.round;
      const Node& critique = state.dag.node(added);
      if (critique.verdict == Verdict::Verify) {
        state.open_line = std::nullopt;
        state.pending_refute = std::nullopt;
        state.phase = sufficiency(state.dag, config) ? Phase::AwaitSummary : Phase::AwaitProposal;
      } else if (state.refinements_in_line >= config.max_refinements_per_line) {
        // Refinement budget gone: settle the line with a driver-authored
        // critique and start fresh. The proposition keeps no refinement.
        const auto target = state.dag.critique_target(added);
        assert(target);
        Result<NodeId, GraphError> abandon =
            state.dag.add_critique(*target, Verdict::Refute, std::string(kAbandonedCritiqueText));
        assert(abandon.ok());
        if (abandon.ok()) {
          RoleBlock marker;
          marker.role = Role::Critic;
          marker.body = std::string(kAbandonedCritiqueText);
          marker.set_attr("id", detail::fresh_block_id(state.transcript, 'c'));
          marker.set_attr("of", state.dag.node(*target).display_name);
          marker.set_attr("verdict", "refute");
          marker.sort_attrs();
          state.dag.set_display_name(abandon.value(), *marker.attr("id"));
          state.transcript.blocks.push_back(std::move(marker));
        }
        state.open_line = std::nullopt;
        state.pending_refute = std::nullopt;
        state.refinements_in_line = 0;
        state.phase = Phase::AwaitProposal;
      } else {
        state.pending_refute = added;
        if (const auto target = state.dag.critique_target(added)) state.open_line = *target;
        state.phase = Phase::AwaitRefinement;
      }
      break;
    }
    case Role::Summarizer:
      state.open_line = std::nullopt;
      state.pending_refute = std::nullopt;
      state.phase = Phase::Done;
      break;
  }
  return state;
}

// Runs steps until a terminal phase. Never throws past the boundary; failures
// surface in the result's outcome and message.
inline SessionResult run_session(std::string_view problem, Backend& backend,
                                 const EngineConfig& config = {}) {
  const EngineConfig cfg = detail::sanitized(config);
  SessionResult result;

  Result<EngineState, GraphError> created = EngineState::create(problem);
  if (!created.ok()) {
    result.outcome = Outcome::BackendFailure;
    result.message = created.error().message;
    return result;
  }
  if (!backend.try_acquire()) {
    result.outcome = Outcome::BackendFailure;
    result.message = "backend is already serving a session";
    return result;
  }
  EngineState state = std::move(created).value();
  while (!state.terminal()) {
    state = step(std::move(state), backend, cfg);
  }
  backend.release();

  result.rounds_used = state.round;
  if (state.phase == Phase::Done) {
    result.outcome = Outcome::Summarized;
    for (const Node& n : state.dag.nodes()) {
      if (n.kind == NodeKind::Summary) result.answer = n.text;
    }
  } else {
    result.outcome = state.failure.value_or(Outcome::BackendFailure);
    result.message = state.failure_message;
  }
  result.dag = std::move(state.dag);
  result.trace = std::move(state.transcript);
  return result;
}

} // namespace dot
