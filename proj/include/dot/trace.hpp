#pragma once

// Role-token stream grammar. A trace is an ordered list of role blocks
// (<proposer>, <critic>, <summarizer>) with an optional attribute list in the
// open tag. Bare streams (no attributes) are resolved by infer_linkage;
// render_trace emits the canonical form, which parse_stream round-trips.

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dot/graph.hpp"
#include "dot/result.hpp"

namespace dot {

enum class Role { Proposer, Critic, Summarizer };

inline const char* role_name(Role r) {
  switch (r) {
    case Role::Proposer: return "proposer";
    case Role::Critic: return "critic";
    case Role::Summarizer: return "summarizer";
  }
  return "?";
}

inline std::string role_open_token(Role r) { return "<" + std::string(role_name(r)) + ">"; }
inline std::string role_close_token(Role r) { return "</" + std::string(role_name(r)) + ">"; }

// Canonical attribute order; also the full legal key set.
inline constexpr std::array<std::string_view, 6> kAttrOrder = {"id",      "from",    "of",
                                                               "refines", "verdict", "uses"};

inline bool attr_legal_for(Role role, std::string_view key) {
  switch (role) {
    case Role::Proposer: return key == "id" || key == "from" || key == "refines";
    case Role::Critic: return key == "id" || key == "of" || key == "verdict";
    case Role::Summarizer: return key == "id" || key == "uses";
  }
  return false;
}

struct RoleBlock {
  Role role = Role::Proposer;
  // Kept in canonical key order once resolved; parse preserves source order.
  std::vector<std::pair<std::string, std::string>> attrs;
  std::string body;
  std::size_t span_begin = 0;
  std::size_t span_end = 0;

  const std::string* attr(std::string_view key) const {
    for (const auto& [k, v] : attrs) {
      if (k == key) return &v;
    }
    return nullptr;
  }

  bool has_attr(std::string_view key) const { return attr(key) != nullptr; }

  void set_attr(std::string_view key, std::string value) {
    for (auto& [k, v] : attrs) {
      if (k == key) {
        v = std::move(value);
        return;
      }
    }
    attrs.emplace_back(std::string(key), std::move(value));
    sort_attrs();
  }

  void erase_attr(std::string_view key) {
    std::erase_if(attrs, [&](const auto& kv) { return kv.first == key; });
  }

  void sort_attrs() {
    const auto rank = [](std::string_view k) {
      for (std::size_t i = 0; i < kAttrOrder.size(); ++i) {
        if (kAttrOrder[i] == k) return i;
      }
      return kAttrOrder.size();
    };
    std::stable_sort(attrs.begin(), attrs.end(),
                     [&](const auto& a, const auto& b) { return rank(a.first) < rank(b.first); });
  }

  // Spans locate blocks in their source text; they carry no meaning of their
  // own, so equality ignores them.
  friend bool operator==(const RoleBlock& a, const RoleBlock& b) {
    return a.role == b.role && a.attrs == b.attrs && a.body == b.body;
  }
};

struct Trace {
  std::string problem;
  std::vector<RoleBlock> blocks;

  friend bool operator==(const Trace&, const Trace&) = default;
};

enum class ParseErrorKind {
  UnterminatedBlock,
  UnknownTag,
  NestedBlock,
  DanglingCritique,
  DanglingRefinement,
  BadAttribute,
  DuplicateId,
  UnknownReference,
  SummaryBeforeVerification,
};

inline const char* to_string(ParseErrorKind k) {
  switch (k) {
    case ParseErrorKind::UnterminatedBlock: return "UnterminatedBlock";
    case ParseErrorKind::UnknownTag: return "UnknownTag";
    case ParseErrorKind::NestedBlock: return "NestedBlock";
    case ParseErrorKind::DanglingCritique: return "DanglingCritique";
    case ParseErrorKind::DanglingRefinement: return "DanglingRefinement";
    case ParseErrorKind::BadAttribute: return "BadAttribute";
    case ParseErrorKind::DuplicateId: return "DuplicateId";
    case ParseErrorKind::UnknownReference: return "UnknownReference";
    case ParseErrorKind::SummaryBeforeVerification: return "SummaryBeforeVerification";
  }
  return "?";
}

struct ParseError {
  ParseErrorKind kind;
  std::size_t position = 0;
  std::string message;
};

struct ParseOptions {
  bool lenient = false;
  // Ids defined outside this stream (e.g. the session transcript) that
  // references may legally point at.
  std::vector<std::string> known_ids;
};

// Lenient parses always carry a best-effort trace next to the findings.
struct ParseReport {
  Trace trace;
  std::vector<ParseError> errors;
};

namespace detail {

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::vector<std::string> split_refs(std::string_view value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    const std::size_t comma = value.find(',', start);
    if (comma == std::string_view::npos) {
      out.emplace_back(value.substr(start));
      break;
    }
    out.emplace_back(value.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

inline std::string join_refs(const std::vector<std::string>& refs) {
  std::string out;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (i) out += ',';
    out += refs[i];
  }
  return out;
}

inline constexpr std::array<std::string_view, 3> kOpenPrefixes = {"<proposer", "<critic",
                                                                  "<summarizer"};

inline bool body_contains_tag(std::string_view body) {
  for (std::string_view p : kOpenPrefixes) {
    if (body.find(p) != std::string_view::npos) return true;
  }
  for (Role r : {Role::Proposer, Role::Critic, Role::Summarizer}) {
    std::string close = "</" + std::string(role_name(r));
    if (body.find(close) != std::string_view::npos) return true;
  }
  return false;
}

class StreamParser {
public:
  StreamParser(std::string_view src, const ParseOptions& opts) : src_(src), opts_(opts) {
    for (const std::string& id : opts.known_ids) defined_.push_back(id);
  }

  ParseReport run() {
    parse_header();
    while (!failed() && pos_ < src_.size()) {
      const std::size_t lt = src_.find('<', pos_);
      if (lt == std::string_view::npos) break;
      pos_ = lt;
      scan_tag_at_top_level();
    }
    return {std::move(trace_), std::move(errors_)};
  }

private:
  bool failed() const { return !opts_.lenient && !errors_.empty(); }

  void fail(ParseErrorKind kind, std::size_t position, std::string message) {
    errors_.push_back({kind, position, std::move(message)});
  }

  void parse_header() {
    constexpr std::string_view kHeader = "#problem:";
    if (!src_.substr(0, kHeader.size()).starts_with(kHeader)) return;
    std::size_t eol = src_.find('\n', kHeader.size());
    if (eol == std::string_view::npos) eol = src_.size();
    trace_.problem = std::string(trim(src_.substr(kHeader.size(), eol - kHeader.size())));
    pos_ = eol < src_.size() ? eol + 1 : src_.size();
    if (pos_ >= src_.size()) return;
    // The header line is followed by one blank line.
    std::size_t line_end = src_.find('\n', pos_);
    if (line_end == std::string_view::npos) line_end = src_.size();
    if (!trim(src_.substr(pos_, line_end - pos_)).empty()) {
      fail(ParseErrorKind::BadAttribute, pos_, "expected a blank line after the #problem: header");
      return;
    }
    pos_ = line_end < src_.size() ? line_end + 1 : src_.size();
  }

  // pos_ is at '<'. Role open tags start blocks; role close tags are
  // unmatched here; anything else is stray text and is skipped.
  void scan_tag_at_top_level() {
    const std::size_t tag_start = pos_;
    std::size_t i = pos_ + 1;
    const bool closing = i < src_.size() && src_[i] == '/';
    if (closing) ++i;
    const std::size_t name_start = i;
    while (i < src_.size() && std::islower(static_cast<unsigned char>(src_[i]))) ++i;
    const std::string_view name = src_.substr(name_start, i - name_start);
    const std::optional<Role> role = role_from_name(name);
    if (!role) {
      if (!name.empty() && i < src_.size() && (src_[i] == '>' || src_[i] == ' ')) {
        fail(ParseErrorKind::UnknownTag, tag_start, "unknown tag <" + std::string(name) + ">");
        if (failed()) return;
        const std::size_t gt = src_.find('>', i);
        pos_ = gt == std::string_view::npos ? src_.size() : gt + 1;
        return;
      }
      pos_ = tag_start + 1;  // literal '<' in stray text
      return;
    }
    if (closing) {
      fail(ParseErrorKind::UnknownTag, tag_start,
           "close tag </" + std::string(name) + "> without an open block");
      if (failed()) return;
      const std::size_t gt = src_.find('>', i);
      pos_ = gt == std::string_view::npos ? src_.size() : gt + 1;
      return;
    }
    parse_block(*role, tag_start, i);
  }

  void parse_block(Role role, std::size_t tag_start, std::size_t after_name) {
    // The open tag must close before any further '<'.
    std::size_t gt = after_name;
    while (gt < src_.size() && src_[gt] != '>' && src_[gt] != '<') ++gt;
    if (gt >= src_.size() || src_[gt] == '<') {
      fail(ParseErrorKind::UnterminatedBlock, tag_start, "open tag never closes");
      pos_ = gt >= src_.size() ? src_.size() : gt;
      return;
    }
    RoleBlock block;
    block.role = role;
    block.span_begin = tag_start;
    if (!parse_attrs(block, src_.substr(after_name, gt - after_name), after_name)) return;
    if (failed()) return;

    // Body runs to the matching close token; any open-tag prefix inside it is
    // a nesting violation. Mismatched close tokens are literal text.
    const std::string close = role_close_token(role);
    std::size_t body_start = gt + 1;
    std::size_t cursor = body_start;
    while (true) {
      const std::size_t lt = src_.find('<', cursor);
      if (lt == std::string_view::npos) {
        fail(ParseErrorKind::UnterminatedBlock, tag_start, "block never closes");
        if (failed()) return;
        block.body = std::string(trim(src_.substr(body_start)));
        block.span_end = src_.size();
        pos_ = src_.size();
        finish_block(std::move(block));
        return;
      }
      if (src_.substr(lt).starts_with(close)) {
        block.body = std::string(trim(src_.substr(body_start, lt - body_start)));
        block.span_end = lt + close.size();
        pos_ = block.span_end;
        finish_block(std::move(block));
        return;
      }
      bool nested = false;
      for (std::string_view p : kOpenPrefixes) {
        if (src_.substr(lt).starts_with(p)) {
          nested = true;
          break;
        }
      }
      if (nested) {
        fail(ParseErrorKind::NestedBlock, lt, "role blocks do not nest");
        if (failed()) return;
        // Recover by ending the current block where the nested tag begins.
        block.body = std::string(trim(src_.substr(body_start, lt - body_start)));
        block.span_end = lt;
        pos_ = lt;
        finish_block(std::move(block));
        return;
      }
      cursor = lt + 1;
    }
  }

  bool parse_attrs(RoleBlock& block, std::string_view raw, std::size_t offset) {
    std::size_t i = 0;
    const auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (i < raw.size()) {
      while (i < raw.size() && is_ws(raw[i])) ++i;
      if (i >= raw.size()) break;
      const std::size_t key_start = i;
      while (i < raw.size() && raw[i] != '=' && !is_ws(raw[i])) ++i;
      const std::string key(raw.substr(key_start, i - key_start));
      if (i >= raw.size() || raw[i] != '=') {
        fail(ParseErrorKind::BadAttribute, offset + key_start, "attribute '" + key + "' has no value");
        if (failed()) return false;
        continue;
      }
      ++i;
      const std::size_t val_start = i;
      while (i < raw.size() && !is_ws(raw[i]) && raw[i] != '>') ++i;
      std::string value(raw.substr(val_start, i - val_start));
      const std::size_t at = offset + key_start;
      if (key.empty() || value.empty()) {
        fail(ParseErrorKind::BadAttribute, at, "empty attribute key or value");
        if (failed()) return false;
        continue;
      }
      if (!attr_legal_for(block.role, key)) {
        fail(ParseErrorKind::BadAttribute, at,
             "attribute '" + key + "' is not legal for <" + role_name(block.role) + ">");
        if (failed()) return false;
        continue;
      }
      if (block.has_attr(key)) {
        fail(ParseErrorKind::BadAttribute, at, "duplicate attribute '" + key + "'");
        if (failed()) return false;
        continue;
      }
      if (key == "verdict") {
        value = to_lower(value);
        if (value != "verify" && value != "refute") {
          fail(ParseErrorKind::BadAttribute, at, "verdict must be verify or refute");
          if (failed()) return false;
          continue;
        }
      }
      if (key == "id" && value == "root") {
        fail(ParseErrorKind::BadAttribute, at, "'root' is a reserved id");
        if (failed()) return false;
        continue;
      }
      block.attrs.emplace_back(key, std::move(value));
    }
    return true;
  }

  void finish_block(RoleBlock block) {
    check_references(block);
    if (failed()) return;
    if (const std::string* id = block.attr("id")) defined_.push_back(*id);
    trace_.blocks.push_back(std::move(block));
  }

  // References must point at ids already defined, in stream order.
  void check_references(RoleBlock& block) {
    const auto known = [&](const std::string& id) {
      return std::find(defined_.begin(), defined_.end(), id) != defined_.end();
    };
    if (const std::string* id = block.attr("id")) {
      if (known(*id)) {
        fail(ParseErrorKind::DuplicateId, block.span_begin, "id '" + *id + "' is already defined");
        if (failed()) return;
        block.erase_attr("id");
      }
    }
    for (const char* key : {"from", "of", "refines", "uses"}) {
      const std::string* value = block.attr(key);
      if (!value) continue;
      const bool root_ok = std::string_view(key) == "from" || std::string_view(key) == "uses";
      bool drop = false;
      for (const std::string& ref : split_refs(*value)) {
        if (ref.empty()) {
          fail(ParseErrorKind::BadAttribute, block.span_begin,
               std::string("empty reference in '") + key + "'");
          drop = true;
          break;
        }
        if (ref == "root") {
          if (root_ok) continue;
          fail(ParseErrorKind::BadAttribute, block.span_begin,
               std::string("'") + key + "' may not reference root");
          drop = true;
          break;
        }
        if (!known(ref)) {
          fail(ParseErrorKind::UnknownReference, block.span_begin,
               std::string("'") + key + "' references unknown id '" + ref + "'");
          drop = true;
          break;
        }
      }
      if (drop) {
        if (failed()) return;
        block.erase_attr(key);
      }
    }
  }

  static std::optional<Role> role_from_name(std::string_view name) {
    if (name == "proposer") return Role::Proposer;
    if (name == "critic") return Role::Critic;
    if (name == "summarizer") return Role::Summarizer;
    return std::nullopt;
  }

  std::string_view src_;
  const ParseOptions& opts_;
  std::size_t pos_ = 0;
  Trace trace_;
  std::vector<ParseError> errors_;
  std::vector<std::string> defined_;
};

} // namespace detail

inline ParseReport parse_stream(std::string_view source, const ParseOptions& options) {
  return detail::StreamParser(source, options).run();
}

// Strict parse: the first error wins and no trace is produced.
inline Result<Trace, ParseError> parse_stream(std::string_view source) {
  ParseReport report = parse_stream(source, ParseOptions{});
  if (!report.errors.empty()) return report.errors.front();
  return std::move(report.trace);
}

struct InferOptions {
  std::vector<std::string> verify_markers = {"valid", "verified"};
  // When set, inferred parent/basis lists also attach the problem root as
  // context, mirroring the session driver's include_context_edges.
  bool attach_root_context = false;
};

// Deterministically fills in missing ids, targets, verdicts, parents and
// summary bases so that every block is fully resolved. Pure function.
inline Result<Trace, ParseError> infer_linkage(Trace trace, const InferOptions& opts = {}) {
  struct PropState {
    std::string id;
    enum { Proposed, Verified, Invalidated } status = Proposed;
  };
  std::vector<PropState> props;
  std::vector<std::string> verified_order;
  // critic id -> (target prop index, verdict)
  std::vector<std::pair<std::string, std::pair<std::size_t, Verdict>>> critics;

  std::vector<std::string> taken;
  for (const RoleBlock& b : trace.blocks) {
    if (const std::string* id = b.attr("id")) taken.push_back(*id);
  }
  const auto is_taken = [&](const std::string& id) {
    return std::find(taken.begin(), taken.end(), id) != taken.end();
  };
  int next_p = 1, next_c = 1, next_s = 1;
  const auto fresh_id = [&](char prefix, int& counter) {
    std::string id;
    do {
      id = prefix + std::to_string(counter++);
    } while (is_taken(id));
    taken.push_back(id);
    return id;
  };

  const auto find_prop = [&](const std::string& id) -> PropState* {
    for (PropState& p : props) {
      if (p.id == id) return &p;
    }
    return nullptr;
  };
  const auto find_critic = [&](const std::string& id)
      -> const std::pair<std::string, std::pair<std::size_t, Verdict>>* {
    for (const auto& c : critics) {
      if (c.first == id) return &c;
    }
    return nullptr;
  };

  for (std::size_t bi = 0; bi < trace.blocks.size(); ++bi) {
    RoleBlock& block = trace.blocks[bi];
    const std::size_t at = block.span_begin;
    const RoleBlock* prev = bi > 0 ? &trace.blocks[bi - 1] : nullptr;

    switch (block.role) {
      case Role::Proposer: {
        if (!block.has_attr("id")) block.set_attr("id", fresh_id('p', next_p));
        if (block.has_attr("from") && block.has_attr("refines")) {
          return ParseError{ParseErrorKind::BadAttribute, at,
                            "'from' and 'refines' are mutually exclusive"};
        }
        if (!block.has_attr("from") && !block.has_attr("refines")) {
          const bool after_refute = prev && prev->role == Role::Critic &&
                                    prev->attr("verdict") && *prev->attr("verdict") == "refute";
          if (after_refute) {
            block.set_attr("refines", *prev->attr("id"));
          } else if (!verified_order.empty()) {
            std::string from = verified_order.back();
            if (opts.attach_root_context) from += ",root";
            block.set_attr("from", std::move(from));
          } else {
            block.set_attr("from", "root");
          }
        }
        if (const std::string* refines = block.attr("refines")) {
          const auto* critic = find_critic(*refines);
          if (!critic) {
            return ParseError{ParseErrorKind::BadAttribute, at,
                              "'refines' must reference a critic block"};
          }
          if (critic->second.second == Verdict::Verify) {
            return ParseError{ParseErrorKind::DanglingRefinement, at,
                              "refinement of a verifying critique '" + *refines + "'"};
          }
          PropState& target = props[critic->second.first];
          if (target.status == PropState::Proposed) target.status = PropState::Invalidated;
        }
        if (const std::string* from = block.attr("from")) {
          for (const std::string& ref : detail::split_refs(*from)) {
            if (ref != "root" && !find_prop(ref)) {
              return ParseError{ParseErrorKind::BadAttribute, at,
                                "'from' must reference proposer blocks or root"};
            }
          }
        }
        props.push_back({*block.attr("id"), PropState::Proposed});
        break;
      }
      case Role::Critic: {
        if (!block.has_attr("id")) block.set_attr("id", fresh_id('c', next_c));
        if (!block.has_attr("of")) {
          const PropState* target = nullptr;
          for (auto it = props.rbegin(); it != props.rend(); ++it) {
            if (it->status == PropState::Proposed) {
              target = &*it;
              break;
            }
          }
          if (!target) {
            return ParseError{ParseErrorKind::DanglingCritique, at,
                              "no unresolved proposition to critique"};
          }
          block.set_attr("of", target->id);
        }
        PropState* target = find_prop(*block.attr("of"));
        if (!target) {
          return ParseError{ParseErrorKind::BadAttribute, at,
                            "'of' must reference a proposer block"};
        }
        if (!block.has_attr("verdict")) {
          const std::string lowered = detail::to_lower(block.body);
          bool verify = false;
          for (const std::string& marker : opts.verify_markers) {
            if (std::string_view(lowered).starts_with(detail::to_lower(marker))) {
              verify = true;
              break;
            }
          }
          block.set_attr("verdict", verify ? "verify" : "refute");
        }
        const Verdict verdict = *block.attr("verdict") == "verify" ? Verdict::Verify : Verdict::Refute;
        if (verdict == Verdict::Verify && target->status == PropState::Proposed) {
          target->status = PropState::Verified;
          verified_order.push_back(target->id);
        }
        critics.push_back({*block.attr("id"),
                           {static_cast<std::size_t>(target - props.data()), verdict}});
        break;
      }
      case Role::Summarizer: {
        if (!block.has_attr("id")) block.set_attr("id", fresh_id('s', next_s));
        if (!block.has_attr("uses")) {
          if (verified_order.empty()) {
            return ParseError{ParseErrorKind::SummaryBeforeVerification, at,
                              "summary requires at least one verified proposition"};
          }
          std::vector<std::string> uses = verified_order;
          if (opts.attach_root_context) uses.push_back("root");
          block.set_attr("uses", detail::join_refs(uses));
        } else {
          for (const std::string& ref : detail::split_refs(*block.attr("uses"))) {
            if (ref != "root" && !find_prop(ref)) {
              return ParseError{ParseErrorKind::BadAttribute, at,
                                "'uses' must reference proposer blocks or root"};
            }
          }
        }
        break;
      }
    }
    block.sort_attrs();
  }
  return trace;
}

enum class RenderErrorKind { UnresolvedTrace, BodyContainsTag, BadAttribute };

struct RenderError {
  RenderErrorKind kind;
  std::size_t block_index = 0;
  std::string message;
};

// Canonical form: `<role k=v ...>body</role>`, attributes in fixed order,
// one block per line. parse_stream inverts it exactly.
inline Result<std::string, RenderError> render_trace(const Trace& trace) {
  std::string out;
  for (std::size_t i = 0; i < trace.blocks.size(); ++i) {
    const RoleBlock& block = trace.blocks[i];
    const auto missing = [&](const char* what) {
      return RenderError{RenderErrorKind::UnresolvedTrace, i,
                         std::string("block is not fully resolved: missing '") + what + "'"};
    };
    if (!block.has_attr("id")) return missing("id");
    switch (block.role) {
      case Role::Proposer:
        if (block.has_attr("from") == block.has_attr("refines")) {
          return RenderError{RenderErrorKind::UnresolvedTrace, i,
                             "proposer needs exactly one of 'from' and 'refines'"};
        }
        break;
      case Role::Critic:
        if (!block.has_attr("of")) return missing("of");
        if (!block.has_attr("verdict")) return missing("verdict");
        break;
      case Role::Summarizer:
        if (!block.has_attr("uses")) return missing("uses");
        break;
    }
    for (const auto& [key, value] : block.attrs) {
      if (!attr_legal_for(block.role, key)) {
        return RenderError{RenderErrorKind::BadAttribute, i,
                           "attribute '" + key + "' is not legal for <" + role_name(block.role) + ">"};
      }
      if (value.empty() ||
          value.find_first_of(" \t\r\n<>=") != std::string::npos) {
        return RenderError{RenderErrorKind::BadAttribute, i,
                           "attribute '" + key + "' has an unrenderable value"};
      }
    }
    if (detail::body_contains_tag(block.body)) {
      return RenderError{RenderErrorKind::BodyContainsTag, i, "body contains a role token"};
    }
    if (i) out += '\n';
    out += '<';
    out += role_name(block.role);
    RoleBlock ordered = block;
    ordered.sort_attrs();
    for (const auto& [key, value] : ordered.attrs) {
      out += ' ';
      out += key;
      out += '=';
      out += value;
    }
    out += '>';
    out += block.body;
    out += role_close_token(block.role);
  }
  return out;
}

// Stored trace files carry the problem statement in a header line.
inline Result<std::string, RenderError> format_trace_file(const Trace& trace) {
  Result<std::string, RenderError> body = render_trace(trace);
  if (!body.ok()) return body;
  std::string out = "#problem: " + trace.problem + "\n\n";
  out += body.value();
  out += '\n';
  return out;
}

struct ApplyError {
  std::optional<GraphError> graph;
  std::size_t block_index = 0;
  std::size_t span_begin = 0;
  std::size_t span_end = 0;
  std::string message;
};

// Folds a fully resolved trace into graph mutations, block by block.
inline Result<ReasoningDag, ApplyError> apply_trace(const Trace& trace) {
  Result<ReasoningDag, GraphError> created = ReasoningDag::create(trace.problem);
  if (!created.ok()) {
    return ApplyError{created.error(), 0, 0, 0, "problem statement rejected"};
  }
  ReasoningDag dag = std::move(created).value();
  std::vector<std::pair<std::string, NodeId>> ids;
  const auto lookup = [&](const std::string& ref) -> std::optional<NodeId> {
    if (ref == "root") return kRootId;
    for (const auto& [id, node] : ids) {
      if (id == ref) return node;
    }
    return std::nullopt;
  };

  for (std::size_t i = 0; i < trace.blocks.size(); ++i) {
    const RoleBlock& block = trace.blocks[i];
    const auto fail = [&](std::optional<GraphError> g, std::string msg) {
      return ApplyError{std::move(g), i, block.span_begin, block.span_end, std::move(msg)};
    };
    const std::string* id = block.attr("id");
    if (!id) return fail(std::nullopt, "block is not fully resolved: missing 'id'");

    Result<NodeId, GraphError> added = [&]() -> Result<NodeId, GraphError> {
      switch (block.role) {
        case Role::Proposer: {
          if (const std::string* refines = block.attr("refines")) {
            const auto critique = lookup(*refines);
            if (!critique) {
              return GraphError{GraphErrorKind::UnknownNode, "unknown id '" + *refines + "'", {}};
            }
            return dag.add_refinement(*critique, block.body);
          }
          const std::string* from = block.attr("from");
          if (!from) {
            return GraphError{GraphErrorKind::EmptyParents,
                              "block is not fully resolved: missing 'from'", {}};
          }
          const std::vector<std::string> refs = detail::split_refs(*from);
          bool has_non_root = false;
          for (const std::string& r : refs) has_non_root |= (r != "root");
          std::vector<NodeId> parents;
          std::vector<EdgeKind> kinds;
          for (const std::string& r : refs) {
            const auto parent = lookup(r);
            if (!parent) {
              return GraphError{GraphErrorKind::UnknownNode, "unknown id '" + r + "'", {}};
            }
            parents.push_back(*parent);
            // A lone root parent is a plain derivation; alongside other
            // parents the root contributes context.
            kinds.push_back(r == "root" && has_non_root ? EdgeKind::Context : EdgeKind::Deduce);
          }
          return dag.add_proposition(block.body, parents, kinds);
        }
        case Role::Critic: {
          const std::string* of = block.attr("of");
          const std::string* verdict = block.attr("verdict");
          if (!of || !verdict) {
            return GraphError{GraphErrorKind::UnknownNode,
                              "block is not fully resolved: missing 'of' or 'verdict'", {}};
          }
          const auto target = lookup(*of);
          if (!target) {
            return GraphError{GraphErrorKind::UnknownNode, "unknown id '" + *of + "'", {}};
          }
          return dag.add_critique(*target, *verdict == "verify" ? Verdict::Verify : Verdict::Refute,
                                  block.body);
        }
        case Role::Summarizer: {
          const std::string* uses = block.attr("uses");
          if (!uses) {
            return GraphError{GraphErrorKind::EmptyBasis,
                              "block is not fully resolved: missing 'uses'", {}};
          }
          std::vector<NodeId> basis;
          bool include_context = false;
          for (const std::string& r : detail::split_refs(*uses)) {
            if (r == "root") {
              include_context = true;
              continue;
            }
            const auto b = lookup(r);
            if (!b) {
              return GraphError{GraphErrorKind::UnknownNode, "unknown id '" + r + "'", {}};
            }
            basis.push_back(*b);
          }
          return dag.add_summary(basis, block.body, include_context);
        }
      }
      return GraphError{GraphErrorKind::UnknownNode, "unreachable", {}};
    }();

    if (!added.ok()) {
      GraphError g = std::move(added).error();
      std::string msg = g.message;
      return fail(std::move(g), std::move(msg));
    }
    dag.set_display_name(added.value(), *id);
    ids.emplace_back(*id, added.value());
  }
  return dag;
}

} // namespace dot
