#pragma once

#include <cmath>
#include <cstddef>
#include <iterator>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tfm/means.hpp"
#include "tfm/spaces.hpp"
#include "tfm/transforms.hpp"

namespace tfm::io {

using json = nlohmann::ordered_json;

/// Carries the JSON pointer and source line of the offending value.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(const std::string& source, int line, std::string pointer, const std::string& msg)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + (pointer.empty() ? "/" : pointer) + ": " + msg),
        line_(line),
        pointer_(std::move(pointer)) {}
  int line() const { return line_; }
  const std::string& pointer() const { return pointer_; }

 private:
  int line_;
  std::string pointer_;
};

/// Parsed document plus the source line where each value (by JSON pointer) starts.
struct Source {
  std::string name = "<input>";
  json doc;
  std::map<std::string, int> lines;

  int line_of(std::string ptr) const {
    for (;;) {
      if (auto it = lines.find(ptr); it != lines.end()) return it->second;
      if (ptr.empty()) return 1;
      ptr.erase(ptr.rfind('/'));
    }
  }
};

namespace detail {

struct LineCounter {
  int line = 1;
  int last_token_line = 1;
};

/// Input iterator over chars that records the line of the last non-blank character consumed.
class CountingIterator {
 public:
  using iterator_category = std::input_iterator_tag;
  using value_type = char;
  using difference_type = std::ptrdiff_t;
  using pointer = const char*;
  using reference = const char&;

  CountingIterator() = default;
  CountingIterator(const char* p, LineCounter* c) : p_(p), c_(c) {}
  reference operator*() const {
    const char ch = *p_;
    if (ch != ' ' && ch != '\t' && ch != '\r' && ch != '\n') c_->last_token_line = c_->line;
    return *p_;
  }
  CountingIterator& operator++() {
    if (*p_ == '\n') ++c_->line;
    ++p_;
    return *this;
  }
  CountingIterator operator++(int) {
    auto t = *this;
    ++*this;
    return t;
  }
  bool operator==(const CountingIterator& o) const { return p_ == o.p_; }
  bool operator!=(const CountingIterator& o) const { return p_ != o.p_; }

 private:
  const char* p_ = nullptr;
  LineCounter* c_ = nullptr;
};

inline std::string escape_token(const std::string& k) {
  std::string out;
  for (char ch : k) {
    if (ch == '~') out += "~0";
    else if (ch == '/') out += "~1";
    else out += ch;
  }
  return out;
}

class LineSax {
 public:
  using number_integer_t = json::number_integer_t;
  using number_unsigned_t = json::number_unsigned_t;
  using number_float_t = json::number_float_t;
  using string_t = json::string_t;
  using binary_t = json::binary_t;

  LineSax(json& out, LineCounter& counter, std::map<std::string, int>& lines)
      : dom_(out, true), counter_(counter), lines_(lines) {}

  bool null() { return mark(), dom_.null(); }
  bool boolean(bool v) { return mark(), dom_.boolean(v); }
  bool number_integer(number_integer_t v) { return mark(), dom_.number_integer(v); }
  bool number_unsigned(number_unsigned_t v) { return mark(), dom_.number_unsigned(v); }
  bool number_float(number_float_t v, const string_t& s) { return mark(), dom_.number_float(v, s); }
  bool string(string_t& v) { return mark(), dom_.string(v); }
  bool binary(binary_t& v) { return mark(), dom_.binary(v); }
  bool start_object(std::size_t n) {
    frames_.push_back(Frame{false, 0, "", mark()});
    return dom_.start_object(n);
  }
  bool key(string_t& k) {
    frames_.back().key = k;
    return dom_.key(k);
  }
  bool end_object() {
    frames_.pop_back();
    return dom_.end_object();
  }
  bool start_array(std::size_t n) {
    frames_.push_back(Frame{true, 0, "", mark()});
    return dom_.start_array(n);
  }
  bool end_array() {
    frames_.pop_back();
    return dom_.end_array();
  }
  bool parse_error(std::size_t pos, const std::string& tok, const nlohmann::detail::exception& ex) {
    // the DOM parser would rethrow through the base class and lose the byte offset
    if (const auto* pe = dynamic_cast<const nlohmann::detail::parse_error*>(&ex)) throw *pe;
    return dom_.parse_error(pos, tok, ex);
  }

 private:
  struct Frame {
    bool array;
    std::size_t index;
    std::string key;
    std::string pointer;
  };

  std::string mark() {
    std::string ptr;
    if (!frames_.empty()) {
      Frame& f = frames_.back();
      ptr = f.pointer + "/" + (f.array ? std::to_string(f.index++) : escape_token(f.key));
    }
    lines_.emplace(ptr, counter_.last_token_line);
    return ptr;
  }

  nlohmann::detail::json_sax_dom_parser<json> dom_;
  LineCounter& counter_;
  std::map<std::string, int>& lines_;
  std::vector<Frame> frames_;
};

}  // namespace detail

inline Source parse_source(const std::string& text, std::string name = "<input>") {
  Source src;
  src.name = std::move(name);
  detail::LineCounter counter;
  detail::LineSax sax(src.doc, counter, src.lines);
  const char* b = text.data();
  try {
    json::sax_parse(detail::CountingIterator(b, &counter), detail::CountingIterator(b + text.size(), &counter), &sax);
  } catch (const json::parse_error& e) {
    int line = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i)
      if (text[i] == '\n') ++line;
    throw SchemaError(src.name, line, "", std::string("malformed JSON: ") + e.what());
  }
  return src;
}

/// Cursor into a Source: the value at one JSON pointer.
class Node {
 public:
  Node(const Source& src, const json& j, std::string ptr = "") : src_(&src), j_(&j), ptr_(std::move(ptr)) {}

  const json& raw() const { return *j_; }
  const std::string& pointer() const { return ptr_; }
  [[noreturn]] void fail(const std::string& msg) const { throw SchemaError(src_->name, src_->line_of(ptr_), ptr_, msg); }

  bool is_object() const { return j_->is_object(); }
  bool is_array() const { return j_->is_array(); }
  bool is_string() const { return j_->is_string(); }
  bool is_number() const { return j_->is_number(); }
  bool has(const std::string& k) const { return j_->is_object() && j_->contains(k); }

  Node at(const std::string& k) const {
    if (!j_->is_object()) fail("expected an object");
    if (!j_->contains(k)) fail("missing required field \"" + k + "\"");
    return Node(*src_, (*j_)[k], ptr_ + "/" + detail::escape_token(k));
  }
  std::optional<Node> opt(const std::string& k) const {
    if (!has(k)) return std::nullopt;
    return at(k);
  }
  Node at(std::size_t i) const {
    if (!j_->is_array() || i >= j_->size()) fail("index " + std::to_string(i) + " out of range");
    return Node(*src_, (*j_)[i], ptr_ + "/" + std::to_string(i));
  }
  std::size_t size() const { return j_->size(); }
  std::vector<Node> items() const {
    if (!j_->is_array()) fail("expected an array");
    std::vector<Node> out;
    for (std::size_t i = 0; i < j_->size(); ++i) out.push_back(at(i));
    return out;
  }

  /// Rejects fields outside `allowed`.
  void only(std::initializer_list<const char*> allowed) const {
    if (!j_->is_object()) fail("expected an object");
    for (const auto& [k, v] : j_->items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || k == a;
      if (!ok) Node(*src_, v, ptr_ + "/" + detail::escape_token(k)).fail("unknown field \"" + k + "\"");
    }
  }

  double number() const {
    if (!j_->is_number()) fail("expected a number");
    const double v = j_->get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
  }
  double positive() const {
    const double v = number();
    if (!(v > 0.0)) fail("expected a positive number");
    return v;
  }
  long long integer() const {
    if (!j_->is_number_integer()) fail("expected an integer");
    return j_->get<long long>();
  }
  std::uint64_t u64() const {
    if (!j_->is_number_unsigned() && !(j_->is_number_integer() && j_->get<long long>() >= 0))
      fail("expected a nonnegative integer");
    return j_->get<std::uint64_t>();
  }
  std::string string() const {
    if (!j_->is_string()) fail("expected a string");
    return j_->get<std::string>();
  }
  std::vector<double> numbers() const {
    std::vector<double> v;
    for (const auto& n : items()) v.push_back(n.number());
    return v;
  }

 private:
  const Source* src_;
  const json* j_;
  std::string ptr_;
};

// ---------------------------------------------------------------------------
// Transforms

inline Transform transform_from_json(const Node& n) {
  n.only({"kind", "params"});
  const std::string kind = n.at("kind").string();
  const std::optional<Node> pn = n.opt("params");
  auto param = [&](const char* key) -> Node {
    if (!pn) n.fail(kind + " needs params." + key);
    return pn->at(key);
  };
  auto check_params = [&](std::initializer_list<const char*> allowed) {
    if (pn) pn->only(allowed);
  };
  if (kind == "power" || kind == "power_normalized") {
    check_params({"alpha"});
    const Node a = param("alpha");
    try {
      return kind == "power" ? Transform::power(a.number()) : Transform::power_normalized(a.number());
    } catch (const std::invalid_argument& e) {
      a.fail(e.what());
    }
  }
  if (kind == "huber" || kind == "pseudo_huber") {
    check_params({"delta"});
    const Node d = param("delta");
    try {
      return kind == "huber" ? Transform::huber(d.number()) : Transform::pseudo_huber(d.number());
    } catch (const std::invalid_argument& e) {
      d.fail(e.what());
    }
  }
  if (kind == "log_cosh" || kind == "linear") {
    check_params({});
    return kind == "log_cosh" ? Transform::log_cosh() : Transform::linear();
  }
  if (kind == "conic") {
    check_params({"terms"});
    const Node terms = param("terms");
    std::vector<std::pair<double, Transform>> parts;
    for (const auto& t : terms.items()) {
      t.only({"weight", "transform"});
      const Node w = t.at("weight");
      if (!(w.number() >= 0.0)) w.fail("conic weight must be >= 0");
      parts.emplace_back(w.number(), transform_from_json(t.at("transform")));
    }
    try {
      return Transform::conic(parts);
    } catch (const std::invalid_argument& e) {
      terms.fail(e.what());
    }
  }
  n.at("kind").fail("unknown transform kind \"" + kind + "\"");
}

inline json transform_to_json(const Transform& t) {
  json j;
  j["kind"] = t.name();
  switch (t.kind()) {
    case TransformKind::Power:
    case TransformKind::PowerNormalized: j["params"] = {{"alpha", t.param()}}; break;
    case TransformKind::Huber:
    case TransformKind::PseudoHuber: j["params"] = {{"delta", t.param()}}; break;
    case TransformKind::Conic: {
      json terms = json::array();
      for (const auto& term : t.terms())
        terms.push_back({{"weight", term.weight}, {"transform", transform_to_json(term.inner[0])}});
      j["params"] = {{"terms", terms}};
      break;
    }
    default: j["params"] = json::object(); break;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Spaces

inline Eigen::Vector2d vec2(const Node& n) {
  const auto v = n.numbers();
  if (v.size() != 2) n.fail("expected [x, y]");
  return Eigen::Vector2d(v[0], v[1]);
}

inline int vertex_ref(const Node& n, const MetricTree& t) {
  if (n.is_string()) {
    if (auto v = t.vertex_index(n.string())) return *v;
    n.fail("unknown vertex \"" + n.string() + "\"");
  }
  const long long i = n.integer();
  if (i < 0 || i >= t.vertex_count()) n.fail("vertex index out of range");
  return static_cast<int>(i);
}

inline MetricTree tree_from_json(const Node& n) {
  n.only({"kind", "vertices", "edges"});
  std::vector<std::string> names;
  std::vector<std::optional<Eigen::Vector2d>> coords;
  for (const auto& v : n.at("vertices").items()) {
    if (v.is_string()) {
      names.push_back(v.string());
      coords.emplace_back();
    } else {
      v.only({"name", "xy"});
      names.push_back(v.at("name").string());
      if (auto xy = v.opt("xy")) coords.emplace_back(vec2(*xy));
      else coords.emplace_back();
    }
  }
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < names.size(); ++i)
    if (!index.emplace(names[i], static_cast<int>(i)).second)
      n.at("vertices").at(i).fail("duplicate vertex name \"" + names[i] + "\"");
  std::vector<MetricTree::Edge> edges;
  const Node en = n.at("edges");
  for (const auto& e : en.items()) {
    if (!e.is_array() || e.size() != 3) e.fail("edge must be [u, v, length]");
    auto ref = [&](const Node& r) {
      if (r.is_string()) {
        auto it = index.find(r.string());
        if (it == index.end()) r.fail("unknown vertex \"" + r.string() + "\"");
        return it->second;
      }
      const long long i = r.integer();
      if (i < 0 || i >= static_cast<long long>(names.size())) r.fail("vertex index out of range");
      return static_cast<int>(i);
    };
    edges.push_back({ref(e.at(0)), ref(e.at(1)), e.at(2).positive()});
  }
  try {
    return MetricTree(names, edges, coords);
  } catch (const std::invalid_argument& e) {
    en.fail(e.what());
  }
}

inline Component component_from_json(const Node& n) {
  const std::string kind = n.at("kind").string();
  if (kind == "euclidean") {
    n.only({"kind", "dim"});
    const Node d = n.at("dim");
    if (d.integer() < 1) d.fail("dim must be >= 1");
    return EuclideanSpace{static_cast<int>(d.integer())};
  }
  if (kind == "disk") {
    n.only({"kind", "center", "radius"});
    return DiskSpace{vec2(n.at("center")), n.at("radius").positive()};
  }
  if (kind == "tree") return tree_from_json(n);
  n.at("kind").fail("unknown component kind \"" + kind + "\" (glued spaces take euclidean, disk or tree parts)");
}

/// Local point in component c: an array for vector components; {"edge", "offset"} or {"vertex"} or a vertex name for trees.
inline Point local_point_from_json(const Node& n, const Space& s, int c) {
  const Component& comp = s.component(c);
  Point p;
  if (const auto* tr = std::get_if<MetricTree>(&comp)) {
    if (n.is_string()) {
      p = Point{c, tr->at_vertex(vertex_ref(n, *tr))};
    } else if (n.has("vertex")) {
      n.only({"vertex"});
      p = Point{c, tr->at_vertex(vertex_ref(n.at("vertex"), *tr))};
    } else {
      n.only({"edge", "offset"});
      const Node en = n.at("edge");
      int e = -1;
      if (en.is_array()) {
        if (en.size() != 2) en.fail("edge must be an index or [u, v]");
        const int u = vertex_ref(en.at(0), *tr), v = vertex_ref(en.at(1), *tr);
        for (int k = 0; k < tr->edge_count(); ++k)
          if ((tr->edge(k).u == u && tr->edge(k).v == v) || (tr->edge(k).u == v && tr->edge(k).v == u)) e = k;
        if (e < 0) en.fail("no edge between these vertices");
        const double off = n.at("offset").number();
        // offsets are measured from the first listed vertex
        p = Point::tree(e, tr->edge(e).u == u ? off : tr->edge(e).length - off, c);
      } else {
        e = static_cast<int>(en.integer());
        if (e < 0 || e >= tr->edge_count()) en.fail("edge index out of range");
        p = Point::tree(e, n.at("offset").number(), c);
      }
    }
  } else {
    const auto v = n.numbers();
    if (static_cast<int>(v.size()) != s.vector_dim(c))
      n.fail("expected " + std::to_string(s.vector_dim(c)) + " coordinates, got " + std::to_string(v.size()));
    Vec x(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) x[static_cast<Eigen::Index>(i)] = v[i];
    p = Point::vec(x, c);
  }
  try {
    return s.checked(p);
  } catch (const std::exception& e) {
    n.fail(e.what());
  }
}

/// Point in s: a landmark or vertex name, a local point (single-component spaces), or {"component", "point"}.
inline Point point_from_json(const Node& n, const Space& s) {
  if (n.is_string()) {
    if (auto p = s.named_point(n.string())) return *p;
    n.fail("unknown named point \"" + n.string() + "\"");
  }
  if (n.has("component")) {
    n.only({"component", "point"});
    const Node cn = n.at("component");
    const long long c = cn.integer();
    if (c < 0 || c >= s.component_count()) cn.fail("component index out of range");
    return local_point_from_json(n.at("point"), s, static_cast<int>(c));
  }
  if (s.component_count() != 1) n.fail("points in glued spaces need {\"component\", \"point\"} or a name");
  return local_point_from_json(n, s, 0);
}

inline Space space_from_json(const Node& n) {
  const std::string kind = n.at("kind").string();
  if (kind == "stickfigure") {
    n.only({"kind"});
    return Space::stickfigure();
  }
  if (kind == "euclidean") {
    n.only({"kind", "dim"});
    const Node d = n.at("dim");
    if (d.integer() < 1) d.fail("dim must be >= 1");
    return Space::euclidean(static_cast<int>(d.integer()));
  }
  if (kind == "disk") {
    n.only({"kind", "center", "radius"});
    return Space::disk(vec2(n.at("center")), n.at("radius").positive());
  }
  if (kind == "tree") return Space::tree(tree_from_json(n));
  if (kind == "glued") {
    n.only({"kind", "components", "glue"});
    std::vector<Component> comps;
    for (const auto& c : n.at("components").items()) comps.push_back(component_from_json(c));
    if (comps.empty()) n.at("components").fail("need at least one component");
    std::vector<Space> single;
    for (const auto& c : comps) single.push_back(Space::glued_flat({c}, {}, "part"));
    auto glue_point = [&](const Node& g) {
      g.only({"component", "point"});
      const Node cn = g.at("component");
      const long long c = cn.integer();
      if (c < 0 || c >= static_cast<long long>(comps.size())) cn.fail("component index out of range");
      Point p = local_point_from_json(g.at("point"), single[static_cast<std::size_t>(c)], 0);
      p.component = static_cast<int>(c);
      return p;
    };
    std::vector<Space::Glue> glue;
    const Node gn = n.has("glue") ? n.at("glue") : n;
    if (n.has("glue")) {
      for (const auto& g : gn.items()) {
        if (!g.is_array() || g.size() != 2) g.fail("glue entry must be a pair of {component, point}");
        glue.push_back(Space::Glue{glue_point(g.at(0)), glue_point(g.at(1))});
      }
    }
    try {
      return Space::glued_flat(std::move(comps), std::move(glue), "glued");
    } catch (const std::invalid_argument& e) {
      gn.fail(e.what());
    }
  }
  n.at("kind").fail("unknown space kind \"" + kind + "\"");
}

/// Canonical JSON rendering of a point: name-free, with explicit component for multi-component spaces.
inline json point_to_json(const Point& p, const Space& s) {
  json local;
  if (p.is_vector()) {
    local = json::array();
    for (Eigen::Index i = 0; i < p.coords().size(); ++i) local.push_back(p.coords()[i]);
  } else {
    local = {{"edge", p.tree_point().edge}, {"offset", p.tree_point().offset}};
  }
  if (s.component_count() == 1) return local;
  return {{"component", p.component}, {"point", local}};
}

}  // namespace tfm::io
