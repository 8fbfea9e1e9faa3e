#pragma once

// Seeded generator of well-formed traces for test corpora and demos. Output
// is a pure function of (options, index): no std::random machinery, so the
// bytes are stable across platforms and runs.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dot/trace.hpp"

namespace dot {

struct SynthOptions {
  std::uint64_t seed = 0;
  int depth = 2;             // verified reasoning lines per trace
  double refute_rate = 0.25; // chance a line is refuted and refined first
  bool include_context = true;
};

namespace detail {

struct SplitMix64 {
  std::uint64_t state;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

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

inline constexpr std::array<const char*, 6> kSynthProposals = {
    "Split the claim into a base case and an inductive step.",
    "Bound the quantity above by its dominant term.",
    "Rewrite both sides so they share a common form.",
    "Reduce the question to a finite case check.",
    "Apply the definition directly to the given instance.",
    "Eliminate the impossible branches one by one.",
};

inline constexpr std::array<const char*, 3> kSynthRefutations = {
    "The step skips a boundary condition and fails on the edge case.",
    "The inequality flips for small values, so the bound does not hold.",
    "A case is missing, which leaves the conclusion unsupported.",
};

inline constexpr std::array<const char*, 3> kSynthRefinements = {
    "Handle the boundary case separately; then the step holds.",
    "Restrict the bound to the valid range and restate the step.",
    "Add the missing case and close the argument.",
};

inline constexpr std::array<const char*, 2> kSynthVerifications = {
    "valid: the step follows from the premises.",
    "verified: the reasoning holds in every case.",
};

} // namespace detail

inline Trace synth_trace(const SynthOptions& opts, std::uint64_t index) {
  detail::SplitMix64 rng(opts.seed ^ (0x9E3779B97F4A7C15ULL * (index + 1)));
  const int depth = opts.depth < 1 ? 1 : opts.depth;

  Trace trace;
  trace.problem =
      "Synthetic derivation " + std::to_string(index + 1) + ": show the claim follows from its premises.";

  int next_p = 1, next_c = 1;
  std::string last_verified;
  std::vector<std::string> verified;

  const auto pick = [&](const auto& pool) { return std::string(pool[rng.below(pool.size())]); };

  for (int line = 0; line < depth; ++line) {
    RoleBlock proposal;
    proposal.role = Role::Proposer;
    proposal.body = pick(detail::kSynthProposals);
    std::string pid = "p" + std::to_string(next_p++);
    proposal.set_attr("id", pid);
    if (last_verified.empty()) {
      proposal.set_attr("from", "root");
    } else {
      proposal.set_attr("from",
                        opts.include_context ? last_verified + ",root" : last_verified);
    }
    trace.blocks.push_back(std::move(proposal));

    if (rng.unit() < opts.refute_rate) {
      const int rounds = 1 + static_cast<int>(rng.below(2));
      for (int r = 0; r < rounds; ++r) {
        RoleBlock refute;
        refute.role = Role::Critic;
        refute.body = pick(detail::kSynthRefutations);
        const std::string cid = "c" + std::to_string(next_c++);
        refute.set_attr("id", cid);
        refute.set_attr("of", pid);
        refute.set_attr("verdict", "refute");
        trace.blocks.push_back(std::move(refute));

        RoleBlock refined;
        refined.role = Role::Proposer;
        refined.body = pick(detail::kSynthRefinements);
        pid = "p" + std::to_string(next_p++);
        refined.set_attr("id", pid);
        refined.set_attr("refines", cid);
        trace.blocks.push_back(std::move(refined));
      }
    }

    RoleBlock verify;
    verify.role = Role::Critic;
    verify.body = pick(detail::kSynthVerifications);
    verify.set_attr("id", "c" + std::to_string(next_c++));
    verify.set_attr("of", pid);
    verify.set_attr("verdict", "verify");
    trace.blocks.push_back(std::move(verify));

    last_verified = pid;
    verified.push_back(pid);
  }

  RoleBlock summary;
  summary.role = Role::Summarizer;
  summary.body = "The verified steps chain together and settle the claim.";
  summary.set_attr("id", "s1");
  std::vector<std::string> uses = verified;
  if (opts.include_context) uses.push_back("root");
  summary.set_attr("uses", detail::join_refs(uses));
  trace.blocks.push_back(std::move(summary));

  return trace;
}

} // namespace dot
