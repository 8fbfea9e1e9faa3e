#pragma once

// Serialization boundary. JSON output is written by hand so that key order,
// indentation and escaping are byte-stable across runs; reading goes through
// nlohmann::json and a strict schema check, then the validator.

#include <algorithm>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dot/graph.hpp"
#include "dot/result.hpp"
#include "dot/trace.hpp"
#include "dot/validate.hpp"

namespace dot {

inline constexpr std::string_view kDagFormatVersion = "dot-dag/1";

enum class SerializeErrorKind { BadJson, SchemaViolation, IntegrityViolation };

inline const char* to_string(SerializeErrorKind k) {
  switch (k) {
    case SerializeErrorKind::BadJson: return "BadJson";
    case SerializeErrorKind::SchemaViolation: return "SchemaViolation";
    case SerializeErrorKind::IntegrityViolation: return "IntegrityViolation";
  }
  return "?";
}

struct SerializeError {
  SerializeErrorKind kind;
  std::string path;  // JSON pointer to the offending field, when known
  std::string message;
  std::vector<Violation> violations;  // IntegrityViolation only
};

namespace detail {

// JSON string escaping; '<' is escaped too so role tokens never appear
// verbatim inside serialized documents.
inline void json_escape_to(std::string& out, std::string_view s) {
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      case '<': out += "\\u003c"; break;
      default:
        if (c < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
    }
  }
}

inline std::string json_quote(std::string_view s) {
  std::string out = "\"";
  json_escape_to(out, s);
  out += '"';
  return out;
}

inline std::vector<Edge> sorted_edges(const ReasoningDag& dag) {
  std::vector<Edge> edges = dag.edges();
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    if (a.src != b.src) return a.src < b.src;
    if (a.dst != b.dst) return a.dst < b.dst;
    return static_cast<int>(a.kind) < static_cast<int>(b.kind);
  });
  return edges;
}

inline std::string dag_json(const ReasoningDag& dag, bool pretty) {
  const std::string nl = pretty ? "\n" : "";
  const std::string sp = pretty ? " " : "";
  const auto indent = [&](int level) { return pretty ? std::string(2 * level, ' ') : std::string(); };

  std::string out;
  out += '{' + nl;
  out += indent(1) + "\"format_version\":" + sp + json_quote(kDagFormatVersion) + ',' + nl;
  out += indent(1) + "\"problem\":" + sp + json_quote(dag.problem_text()) + ',' + nl;
  out += indent(1) + "\"nodes\":" + sp + '[';
  const std::vector<Node>& nodes = dag.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    out += (i ? "," : "") + nl + indent(2) + '{' + nl;
    out += indent(3) + "\"id\":" + sp + std::to_string(n.id) + ',' + nl;
    out += indent(3) + "\"kind\":" + sp + json_quote(to_string(n.kind)) + ',' + nl;
    out += indent(3) + "\"text\":" + sp + json_quote(n.text);
    if (n.status) {
      out += ',' + nl + indent(3) + "\"status\":" + sp + json_quote(to_string(*n.status));
    }
    if (n.verdict) {
      out += ',' + nl + indent(3) + "\"verdict\":" + sp + json_quote(to_string(*n.verdict));
    }
    if (!n.display_name.empty()) {
      out += ',' + nl + indent(3) + "\"display_name\":" + sp + json_quote(n.display_name);
    }
    out += nl + indent(2) + '}';
  }
  out += nodes.empty() ? "]" : nl + indent(1) + "]";
  out += ',' + nl;
  out += indent(1) + "\"edges\":" + sp + '[';
  const std::vector<Edge> edges = sorted_edges(dag);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const Edge& e = edges[i];
    out += (i ? "," : "") + nl + indent(2) + '{' + nl;
    out += indent(3) + "\"src\":" + sp + std::to_string(e.src) + ',' + nl;
    out += indent(3) + "\"dst\":" + sp + std::to_string(e.dst) + ',' + nl;
    out += indent(3) + "\"kind\":" + sp + json_quote(to_string(e.kind)) + nl;
    out += indent(2) + '}';
  }
  out += edges.empty() ? "]" : nl + indent(1) + "]";
  out += nl + '}';
  return out;
}

} // namespace detail

// Byte-stable document: fixed key order, 2-space indentation, nodes sorted by
// id and edges by (src, dst, kind).
inline std::string to_json(const ReasoningDag& dag) { return detail::dag_json(dag, true); }

// Schema checking only; callers that accept untrusted data must also run the
// validator (from_json does both).
inline Result<ReasoningDag, SerializeError> parse_dag_document(std::string_view text) {
  const auto schema_error = [](std::string path, std::string message) {
    return SerializeError{SerializeErrorKind::SchemaViolation, std::move(path), std::move(message), {}};
  };

  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) {
    return SerializeError{SerializeErrorKind::BadJson, "", "input is not valid JSON", {}};
  }
  if (!j.is_object()) return schema_error("", "top level must be an object");

  for (const auto& [key, _] : j.items()) {
    if (key != "format_version" && key != "problem" && key != "nodes" && key != "edges") {
      return schema_error("/" + key, "unknown field");
    }
  }
  if (!j.contains("format_version") || !j["format_version"].is_string()) {
    return schema_error("/format_version", "missing or non-string");
  }
  if (j["format_version"].get<std::string>() != kDagFormatVersion) {
    return schema_error("/format_version",
                        "unrecognized format version '" + j["format_version"].get<std::string>() + "'");
  }
  if (!j.contains("problem") || !j["problem"].is_string()) {
    return schema_error("/problem", "missing or non-string");
  }
  const std::string problem = j["problem"].get<std::string>();
  if (detail::trim(problem).empty()) return schema_error("/problem", "problem must be non-empty");
  if (!j.contains("nodes") || !j["nodes"].is_array() || j["nodes"].empty()) {
    return schema_error("/nodes", "missing or empty node list");
  }
  if (!j.contains("edges") || !j["edges"].is_array()) {
    return schema_error("/edges", "missing edge list");
  }

  std::vector<Node> nodes;
  std::size_t problem_count = 0;
  for (std::size_t i = 0; i < j["nodes"].size(); ++i) {
    const std::string path = "/nodes/" + std::to_string(i);
    const nlohmann::json& nj = j["nodes"][i];
    if (!nj.is_object()) return schema_error(path, "node must be an object");
    for (const auto& [key, _] : nj.items()) {
      if (key != "id" && key != "kind" && key != "text" && key != "status" && key != "verdict" &&
          key != "display_name") {
        return schema_error(path + "/" + key, "unknown field");
      }
    }
    if (!nj.contains("id") || !nj["id"].is_number_unsigned()) {
      return schema_error(path + "/id", "missing or non-integer id");
    }
    if (nj["id"].get<std::size_t>() != i) {
      return schema_error(path + "/id", "node ids must be dense and sorted from 0");
    }
    if (!nj.contains("kind") || !nj["kind"].is_string()) {
      return schema_error(path + "/kind", "missing or non-string kind");
    }
    if (!nj.contains("text") || !nj["text"].is_string()) {
      return schema_error(path + "/text", "missing or non-string text");
    }
    Node n;
    n.id = static_cast<NodeId>(i);
    n.text = nj["text"].get<std::string>();
    const std::string kind = nj["kind"].get<std::string>();
    if (kind == "problem") {
      n.kind = NodeKind::Problem;
      ++problem_count;
    } else if (kind == "proposition") {
      n.kind = NodeKind::Proposition;
    } else if (kind == "critique") {
      n.kind = NodeKind::Critique;
    } else if (kind == "summary") {
      n.kind = NodeKind::Summary;
    } else {
      return schema_error(path + "/kind", "unknown node kind '" + kind + "'");
    }
    if (nj.contains("status")) {
      if (n.kind != NodeKind::Proposition || !nj["status"].is_string()) {
        return schema_error(path + "/status", "status belongs to propositions only");
      }
      const std::string status = nj["status"].get<std::string>();
      if (status == "proposed") n.status = PropStatus::Proposed;
      else if (status == "verified") n.status = PropStatus::Verified;
      else if (status == "invalidated") n.status = PropStatus::Invalidated;
      else return schema_error(path + "/status", "unknown status '" + status + "'");
    } else if (n.kind == NodeKind::Proposition) {
      return schema_error(path + "/status", "proposition is missing its status");
    }
    if (nj.contains("verdict")) {
      if (n.kind != NodeKind::Critique || !nj["verdict"].is_string()) {
        return schema_error(path + "/verdict", "verdict belongs to critiques only");
      }
      const std::string verdict = nj["verdict"].get<std::string>();
      if (verdict == "verify") n.verdict = Verdict::Verify;
      else if (verdict == "refute") n.verdict = Verdict::Refute;
      else return schema_error(path + "/verdict", "unknown verdict '" + verdict + "'");
    } else if (n.kind == NodeKind::Critique) {
      return schema_error(path + "/verdict", "critique is missing its verdict");
    }
    if (nj.contains("display_name")) {
      if (!nj["display_name"].is_string()) {
        return schema_error(path + "/display_name", "display_name must be a string");
      }
      n.display_name = nj["display_name"].get<std::string>();
    }
    nodes.push_back(std::move(n));
  }
  if (problem_count != 1 || nodes[kRootId].kind != NodeKind::Problem) {
    return schema_error("/nodes", "expected exactly one problem node at id 0");
  }
  if (nodes[kRootId].text != problem) {
    return schema_error("/problem", "problem field and root node text disagree");
  }

  std::vector<Edge> edges;
  for (std::size_t i = 0; i < j["edges"].size(); ++i) {
    const std::string path = "/edges/" + std::to_string(i);
    const nlohmann::json& ej = j["edges"][i];
    if (!ej.is_object()) return schema_error(path, "edge must be an object");
    for (const auto& [key, _] : ej.items()) {
      if (key != "src" && key != "dst" && key != "kind") {
        return schema_error(path + "/" + key, "unknown field");
      }
    }
    if (!ej.contains("src") || !ej["src"].is_number_unsigned() || !ej.contains("dst") ||
        !ej["dst"].is_number_unsigned() || !ej.contains("kind") || !ej["kind"].is_string()) {
      return schema_error(path, "edge needs integer src/dst and string kind");
    }
    Edge e;
    e.src = ej["src"].get<NodeId>();
    e.dst = ej["dst"].get<NodeId>();
    if (e.src >= nodes.size() || e.dst >= nodes.size()) {
      return schema_error(path, "edge endpoint out of range");
    }
    const std::string kind = ej["kind"].get<std::string>();
    if (kind == "deduce") e.kind = EdgeKind::Deduce;
    else if (kind == "critique") e.kind = EdgeKind::Critique;
    else if (kind == "refine") e.kind = EdgeKind::Refine;
    else if (kind == "summarize") e.kind = EdgeKind::Summarize;
    else if (kind == "context") e.kind = EdgeKind::Context;
    else return schema_error(path + "/kind", "unknown edge kind '" + kind + "'");
    for (const Edge& prior : edges) {
      if (prior == e) return schema_error(path, "duplicate edge");
    }
    edges.push_back(e);
  }

  return ReasoningDag::from_parts(std::move(nodes), std::move(edges));
}

// Untrusted files must not bypass the graph invariants, so deserialization
// is gated on a clean validation report.
inline Result<ReasoningDag, SerializeError> from_json(std::string_view text) {
  Result<ReasoningDag, SerializeError> parsed = parse_dag_document(text);
  if (!parsed.ok()) return parsed;
  std::vector<Violation> violations = validate(parsed.value());
  if (!violations.empty()) {
    std::string message = "document violates graph invariants:";
    for (const Violation& v : violations) {
      message += ' ';
      message += to_string(v.kind);
    }
    return SerializeError{SerializeErrorKind::IntegrityViolation, "", std::move(message),
                          std::move(violations)};
  }
  return parsed;
}

namespace detail {

inline std::string dot_quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  out += '"';
  return out;
}

inline std::string node_label(const Node& n) {
  if (!n.display_name.empty()) return n.display_name;
  switch (n.kind) {
    case NodeKind::Problem: return "Problem";
    case NodeKind::Proposition: return "P" + std::to_string(n.id);
    case NodeKind::Critique: return "C" + std::to_string(n.id);
    case NodeKind::Summary: return "S" + std::to_string(n.id);
  }
  return std::to_string(n.id);
}

inline std::string node_shape_attrs(const Node& n) {
  switch (n.kind) {
    case NodeKind::Problem: return "shape=plaintext";
    case NodeKind::Proposition:
      switch (*n.status) {
        case PropStatus::Proposed: return "shape=circle";
        case PropStatus::Verified: return "shape=circle style=filled";
        case PropStatus::Invalidated: return "shape=circle style=dashed";
      }
      return "shape=circle";
    case NodeKind::Critique: return "shape=box";
    case NodeKind::Summary: return "shape=ellipse";
  }
  return "";
}

} // namespace detail

// Graphviz text. Plain mode draws one statement per node with the legend
// shapes (filled = verified, dashed = invalidated, box = critique, ellipse =
// summary) and labels verifying critique edges "Verified". figure_style
// additionally expands every verified proposition into the pre-verification
// node plus a "(Verified)" node joined by a labeled edge, with derivation and
// summary edges re-routed through the expansion.
inline std::string to_graphviz(const ReasoningDag& dag, bool figure_style) {
  const std::vector<Node>& nodes = dag.nodes();
  const auto is_expanded = [&](NodeId id) {
    return figure_style && nodes[id].kind == NodeKind::Proposition &&
           nodes[id].status == PropStatus::Verified;
  };
  const auto name = [](NodeId id) { return "n" + std::to_string(id); };
  const auto expansion_name = [&](NodeId id) { return name(id) + "v"; };

  std::string out = "digraph reasoning {\n";
  out += "  rankdir=TB;\n";
  for (const Node& n : nodes) {
    out += "  " + name(n.id) + " [label=" + detail::dot_quote(detail::node_label(n)) + ' ' +
           detail::node_shape_attrs(n) + "];\n";
    if (is_expanded(n.id)) {
      out += "  " + expansion_name(n.id) + " [label=" +
             detail::dot_quote(detail::node_label(n) + " (Verified)") +
             " shape=circle style=filled];\n";
    }
  }
  for (const Edge& e : detail::sorted_edges(dag)) {
    // Out-edges that carry a verified proposition forward leave its
    // expansion node; critique edges stay on the base node.
    std::string src = name(e.src);
    if (is_expanded(e.src) && (e.kind == EdgeKind::Deduce || e.kind == EdgeKind::Summarize)) {
      src = expansion_name(e.src);
    }
    std::string attrs;
    if (e.kind == EdgeKind::Refine) {
      attrs = " [label=\"Refine\"]";
    } else if (!figure_style && e.kind == EdgeKind::Critique &&
               nodes[e.dst].verdict == Verdict::Verify) {
      attrs = " [label=\"Verified\"]";
    }
    out += "  " + src + " -> " + name(e.dst) + attrs + ";\n";
  }
  if (figure_style) {
    for (const Node& n : nodes) {
      if (!is_expanded(n.id)) continue;
      for (NodeId c : dag.critiques_of(n.id)) {
        if (nodes[c].verdict == Verdict::Verify) {
          out += "  " + name(c) + " -> " + expansion_name(n.id) + " [label=\"Verified\"];\n";
        }
      }
    }
  }
  out += "}\n";
  return out;
}

// One supervised-fine-tuning record per reasoning session:
// {"problem": ..., "stream": <canonical trace>, "dag": <compact document>}.
inline Result<std::string, SerializeError> to_training_example(const Trace& trace) {
  Result<std::string, RenderError> stream = render_trace(trace);
  if (!stream.ok()) {
    return SerializeError{SerializeErrorKind::IntegrityViolation, "",
                          "trace cannot be rendered: " + stream.error().message, {}};
  }
  Result<ReasoningDag, ApplyError> dag = apply_trace(trace);
  if (!dag.ok()) {
    return SerializeError{SerializeErrorKind::IntegrityViolation, "",
                          "trace does not build a graph: " + dag.error().message, {}};
  }
  std::vector<Violation> violations = validate(dag.value());
  if (!violations.empty()) {
    std::string message = "trace graph violates invariants:";
    for (const Violation& v : violations) {
      message += ' ';
      message += to_string(v.kind);
    }
    return SerializeError{SerializeErrorKind::IntegrityViolation, "", std::move(message),
                          std::move(violations)};
  }
  std::string out = "{\"problem\":" + detail::json_quote(trace.problem) +
                    ",\"stream\":" + detail::json_quote(stream.value()) +
                    ",\"dag\":" + detail::dag_json(dag.value(), false) + "}";
  return out;
}

} // namespace dot
