#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dot/serialize.hpp"
#include "dot/synth.hpp"
#include "dot/validate.hpp"
#include "helpers.hpp"

using namespace dot;

TEST_CASE("generation is a pure function of options and index") {
  SynthOptions opts;
  opts.seed = 7;
  opts.depth = 3;
  opts.refute_rate = 0.5;
  const Trace a = synth_trace(opts, 4);
  const Trace b = synth_trace(opts, 4);
  CHECK(a == b);
  CHECK(format_trace_file(a).value() == format_trace_file(b).value());

  const Trace other = synth_trace(opts, 5);
  CHECK(other.problem != a.problem);
}

TEST_CASE("every generated trace parses strictly, applies and validates") {
  testutil::Rng rng(1234);
  for (int i = 0; i < 50; ++i) {
    SynthOptions opts;
    opts.seed = rng.next();
    opts.depth = 1 + static_cast<int>(rng.below(4));
    opts.refute_rate = rng.unit();
    opts.include_context = rng.below(2) == 0;

    const Trace trace = synth_trace(opts, i);
    const std::string file = format_trace_file(trace).value();
    auto parsed = parse_stream(file);
    REQUIRE(parsed.ok());
    CHECK(parsed.value() == trace);
    auto dag = apply_trace(parsed.value());
    REQUIRE(dag.ok());
    CHECK(validate(dag.value()).empty());
    auto closure = summary_closure(dag.value());
    CHECK(closure.ok());
  }
}

TEST_CASE("refute rate one forces a refinement into every line") {
  SynthOptions opts;
  opts.seed = 99;
  opts.depth = 3;
  opts.refute_rate = 1.0;
  const Trace trace = synth_trace(opts, 0);

  std::size_t lines = 0, refinements = 0;
  std::size_t refined_lines = 0;
  bool line_has_refinement = false;
  for (const RoleBlock& block : trace.blocks) {
    if (block.role != Role::Proposer) continue;
    if (block.has_attr("from")) {
      if (lines > 0 && line_has_refinement) ++refined_lines;
      ++lines;
      line_has_refinement = false;
    } else {
      ++refinements;
      line_has_refinement = true;
    }
  }
  if (lines > 0 && line_has_refinement) ++refined_lines;
  CHECK(lines == 3);
  CHECK(refined_lines == 3);
  CHECK(refinements >= 3);

  SUBCASE("rate zero means no refinements at all") {
    opts.refute_rate = 0.0;
    const Trace clean = synth_trace(opts, 0);
    for (const RoleBlock& block : clean.blocks) {
      CHECK(!block.has_attr("refines"));
    }
  }
}

TEST_CASE("context handling follows the option") {
  SynthOptions opts;
  opts.depth = 2;
  opts.refute_rate = 0.0;
  opts.include_context = false;
  const Trace bare = synth_trace(opts, 0);
  for (const RoleBlock& block : bare.blocks) {
    if (const std::string* uses = block.attr("uses")) {
      CHECK(uses->find("root") == std::string::npos);
    }
    if (const std::string* from = block.attr("from")) {
      CHECK((*from == "root" || from->find("root") == std::string::npos));
    }
  }
  auto dag = apply_trace(bare);
  REQUIRE(dag.ok());
  for (const Edge& e : dag.value().edges()) {
    CHECK(e.kind != EdgeKind::Context);
  }
}

TEST_CASE("depth below one is clamped") {
  SynthOptions opts;
  opts.depth = 0;
  const Trace trace = synth_trace(opts, 0);
  auto dag = apply_trace(trace);
  REQUIRE(dag.ok());
  CHECK(dag.value().node_counts().verified >= 1);
}
