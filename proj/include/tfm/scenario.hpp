#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfm/inequalities.hpp"
#include "tfm/io.hpp"
#include "tfm/means.hpp"
#include "tfm/spaces.hpp"
#include "tfm/transforms.hpp"

namespace tfm::scenario {

using io::json;
using io::Node;

struct CheckSpec {
  std::string id;
  json params = json::object();
  bool operator==(const CheckSpec&) const = default;
};

struct OutputSpec {
  std::string path;
  std::string format = "csv";
  bool operator==(const OutputSpec&) const = default;
};

/// Space, distribution, reference and probes stay as validated JSON descriptors; they resolve
/// against the space (and seed) in build().
struct Scenario {
  std::string name;
  std::uint64_t seed = 0;
  json space;
  Transform transform = Transform::power(2.0);
  json distribution;
  std::optional<json> reference;
  json probes;
  std::vector<CheckSpec> checks;
  std::optional<OutputSpec> output;

  // Where the scenario came from, for line-precise errors; not part of the value.
  std::shared_ptr<const io::Source> source;
  std::string pointer;

  bool operator==(const Scenario& o) const {
    return name == o.name && seed == o.seed && space == o.space && transform == o.transform &&
           distribution == o.distribution && reference == o.reference && probes == o.probes && checks == o.checks &&
           output == o.output;
  }
};

inline const std::vector<std::string>& check_ids() {
  static const std::vector<std::string> ids = {
      "hadamard_mean", "transformed_mean", "point_mass",     "median_bowtie", "affine_reduction",
      "set_identity",  "median_on_geodesic", "median_trivial", "general_bounds", "asymptotic_ratio",
      "growth_regime", "huber_reference",  "mean_set",       "median_set",    "left_right_mass",
      "uniqueness"};
  return ids;
}

namespace detail {

inline const std::vector<const char*>& check_params(const std::string& id) {
  static const std::map<std::string, std::vector<const char*>> allowed = {
      {"hadamard_mean", {}},
      {"transformed_mean", {}},
      {"point_mass", {}},
      {"median_bowtie", {"eta"}},
      {"affine_reduction", {}},
      {"set_identity", {"tol"}},
      {"median_on_geodesic", {"from", "to"}},
      {"median_trivial", {}},
      {"general_bounds", {"split"}},
      {"asymptotic_ratio", {"radii", "direction", "band", "near_radius", "near_slack"}},
      {"growth_regime", {"beta", "near", "far", "direction"}},
      {"huber_reference", {"z", "tol"}},
      {"mean_set", {"expect", "tol"}},
      {"median_set", {"expect", "tol"}},
      {"left_right_mass", {"from", "to", "tol"}},
      {"uniqueness", {"expect"}},
  };
  return allowed.at(id);
}

inline void check_probes_shape(const Node& n) {
  if (n.has("points")) {
    n.only({"points"});
    if (n.at("points").items().empty()) n.at("points").fail("probe list must be nonempty");
  } else if (n.has("grid")) {
    n.only({"grid"});
    const Node g = n.at("grid");
    g.only({"from", "to", "count"});
    g.at("from");
    g.at("to");
    if (g.at("count").integer() < 2) g.at("count").fail("grid count must be >= 2");
  } else if (n.has("random")) {
    n.only({"random"});
    const Node r = n.at("random");
    r.only({"count", "radius"});
    if (r.at("count").integer() < 1) r.at("count").fail("random probe count must be >= 1");
    if (auto rad = r.opt("radius")) rad->positive();
  } else {
    n.fail("probes need one of \"points\", \"grid\" or \"random\"");
  }
}

inline void check_distribution_shape(const Node& n) {
  if (n.has("atoms")) {
    n.only({"atoms", "normalize"});
    const Node atoms = n.at("atoms");
    if (atoms.items().empty()) atoms.fail("need at least one atom");
    for (const auto& a : atoms.items()) {
      a.only({"point", "weight"});
      a.at("point");
      if (!(a.at("weight").number() >= 0.0)) a.at("weight").fail("weight must be >= 0");
    }
  } else if (n.has("sampler")) {
    n.only({"sampler", "count"});
    const Node s = n.at("sampler");
    s.only({"kind", "params"});
    const std::string kind = s.at("kind").string();
    const Node p = s.at("params");
    if (kind == "uniform_segment") p.only({"from", "to"});
    else if (kind == "uniform_disk") p.only({"center", "radius", "component"});
    else if (kind == "uniform_sphere") p.only({"dim", "radius", "component"});
    else s.at("kind").fail("unknown sampler kind \"" + kind + "\"");
    if (n.at("count").integer() < 1) n.at("count").fail("sample count must be >= 1");
  } else {
    n.fail("distribution needs \"atoms\" or \"sampler\"");
  }
}

inline Scenario scenario_from_node(const Node& n, const std::shared_ptr<const io::Source>& src) {
  n.only({"name", "seed", "space", "transform", "distribution", "reference", "probes", "checks", "output"});
  Scenario sc;
  sc.source = src;
  sc.pointer = n.pointer();
  sc.name = n.at("name").string();
  if (auto s = n.opt("seed")) sc.seed = s->u64();
  const Node space = n.at("space");
  io::space_from_json(space);  // validates
  sc.space = space.raw();
  sc.transform = io::transform_from_json(n.at("transform"));
  const Node dist = n.at("distribution");
  check_distribution_shape(dist);
  sc.distribution = dist.raw();
  if (auto r = n.opt("reference")) sc.reference = r->raw();
  const Node probes = n.at("probes");
  check_probes_shape(probes);
  sc.probes = probes.raw();
  if (auto checks = n.opt("checks")) {
    for (const auto& c : checks->items()) {
      CheckSpec cs;
      Node idn = c;
      if (c.is_object()) {
        c.only({"id", "params"});
        idn = c.at("id");
        if (auto p = c.opt("params")) {
          if (!p->is_object()) p->fail("check params must be an object");
          cs.params = p->raw();
        }
      }
      cs.id = idn.string();
      const auto& ids = check_ids();
      if (std::find(ids.begin(), ids.end(), cs.id) == ids.end()) idn.fail("unknown check id \"" + cs.id + "\"");
      if (c.is_object() && c.has("params")) {
        const auto& allowed = check_params(cs.id);
        const Node p = c.at("params");
        for (const auto& [k, v] : p.raw().items())
          if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }) == allowed.end())
            p.at(k).fail("check \"" + cs.id + "\" takes no parameter \"" + k + "\"");
        for (const char* k : {"eta", "tol", "split", "band", "near_radius", "near_slack", "beta", "z"})
          if (p.has(k)) p.at(k).number();
        for (const char* k : {"radii", "near", "far", "direction"})
          if (p.has(k)) {
            for (double r : p.at(k).numbers())
              if (std::string(k) != "direction" && !(r > 0.0)) p.at(k).fail("radii must be positive");
          }
        if (p.has("expect") && cs.id == "uniqueness") p.at("expect").string();
        if (p.has("expect") && cs.id != "uniqueness" && !p.at("expect").is_object())
          p.at("expect").fail("expect must be {\"point\": P} or {\"segment\": [P, P]}");
      }
      if (cs.id == "huber_reference" && !(c.is_object() && c.has("params") && c.at("params").has("z")))
        c.fail("huber_reference needs params.z");
      if ((cs.id == "mean_set" || cs.id == "median_set") && !(c.is_object() && c.has("params") && c.at("params").has("expect")))
        c.fail(cs.id + " needs params.expect");
      if (cs.id == "median_on_geodesic" && !(c.is_object() && c.has("params") && c.at("params").has("from") && c.at("params").has("to")))
        c.fail("median_on_geodesic needs params.from and params.to");
      sc.checks.push_back(std::move(cs));
    }
  }
  if (auto o = n.opt("output")) {
    o->only({"path", "format"});
    OutputSpec out;
    if (auto p = o->opt("path")) out.path = p->string();
    if (auto f = o->opt("format")) {
      out.format = f->string();
      if (out.format != "csv" && out.format != "json") f->fail("format must be \"csv\" or \"json\"");
    }
    sc.output = out;
  }
  return sc;
}

}  // namespace detail

/// A single scenario object or {"scenarios": [...]}.
inline std::vector<Scenario> parse_scenarios(const std::string& text, const std::string& source_name = "<input>") {
  auto src = std::make_shared<const io::Source>(io::parse_source(text, source_name));
  const Node root(*src, src->doc);
  std::vector<Scenario> out;
  if (root.has("scenarios")) {
    root.only({"scenarios"});
    const Node list = root.at("scenarios");
    if (list.items().empty()) list.fail("scenario list is empty");
    for (const auto& n : list.items()) out.push_back(detail::scenario_from_node(n, src));
  } else {
    out.push_back(detail::scenario_from_node(root, src));
  }
  return out;
}

inline std::vector<Scenario> load_scenarios(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open scenario file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenarios(ss.str(), path);
}

inline json to_json(const Scenario& sc) {
  json j;
  j["name"] = sc.name;
  j["seed"] = sc.seed;
  j["space"] = sc.space;
  j["transform"] = io::transform_to_json(sc.transform);
  j["distribution"] = sc.distribution;
  if (sc.reference) j["reference"] = *sc.reference;
  j["probes"] = sc.probes;
  json checks = json::array();
  for (const auto& c : sc.checks) {
    if (c.params.empty()) checks.push_back(c.id);
    else checks.push_back({{"id", c.id}, {"params", c.params}});
  }
  j["checks"] = checks;
  if (sc.output) {
    json o;
    if (!sc.output->path.empty()) o["path"] = sc.output->path;
    o["format"] = sc.output->format;
    j["output"] = o;
  }
  return j;
}

inline std::string serialize(const std::vector<Scenario>& scs) {
  json arr = json::array();
  for (const auto& s : scs) arr.push_back(to_json(s));
  return json{{"scenarios", arr}}.dump(2) + "\n";
}

/// Resolved objects of a scenario.
struct Instance {
  Space space;
  Transform tau = Transform::power(2.0);
  DiscreteDistribution dist;
  std::optional<Point> reference;
  std::vector<Point> probes;
};

namespace detail {

/// Node for a JSON value stored in the scenario, keeping its original pointer for error lines.
class Anchored {
 public:
  explicit Anchored(const Scenario& sc) : sc_(sc) {
    static const io::Source empty;
    src_ = sc.source ? sc.source.get() : &empty;
  }
  Node node(const json& j, const std::string& rel) const { return Node(*src_, j, sc_.pointer + rel); }

 private:
  const Scenario& sc_;
  const io::Source* src_;
};

inline Sampler sampler_from(const Node& s, const Space& space, std::uint64_t seed) {
  const std::string kind = s.at("kind").string();
  const Node p = s.at("params");
  auto component = [&]() -> int {
    if (!p.has("component")) return 0;
    const long long c = p.at("component").integer();
    if (c < 0 || c >= space.component_count()) p.at("component").fail("component index out of range");
    return static_cast<int>(c);
  };
  if (kind == "uniform_segment") {
    const Point a = io::point_from_json(p.at("from"), space), b = io::point_from_json(p.at("to"), space);
    return Sampler::uniform_segment(space.geodesic(a, b), seed);
  }
  if (kind == "uniform_disk") {
    const int c = component();
    if (space.vector_dim(c) != 2) p.fail("uniform_disk needs a 2-dimensional vector component");
    return Sampler::uniform_disk(io::vec2(p.at("center")), p.at("radius").positive(), seed, c);
  }
  const int c = component();
  const long long dim = p.at("dim").integer();
  if (dim != space.vector_dim(c) || space.is_tree_component(c)) p.at("dim").fail("dim does not match the component");
  return Sampler::uniform_sphere(static_cast<int>(dim), p.at("radius").positive(), seed, c);
}

inline Point random_probe(const Space& s, std::uint64_t seed, std::uint64_t i, double radius) {
  CounterRng rng(seed ^ 0x9e3779b97f4a7c15ULL, i);
  const int c = std::min(s.component_count() - 1, static_cast<int>(rng.uniform() * s.component_count()));
  const Component& comp = s.component(c);
  if (const auto* tr = std::get_if<MetricTree>(&comp)) {
    const int e = std::min(tr->edge_count() - 1, static_cast<int>(rng.uniform() * tr->edge_count()));
    return Point::tree(e, rng.uniform() * tr->edge(e).length, c);
  }
  if (const auto* d = std::get_if<DiskSpace>(&comp)) {
    const double r = d->radius * std::sqrt(rng.uniform());
    const double phi = 2.0 * std::numbers::pi * rng.uniform();
    return Point::vec(Vec(d->center + r * Eigen::Vector2d(std::cos(phi), std::sin(phi))), c);
  }
  Vec x(s.vector_dim(c));
  for (Eigen::Index k = 0; k < x.size(); ++k) x[k] = radius * rng.normal();
  return Point::vec(x, c);
}

}  // namespace detail

inline Instance build(const Scenario& sc) {
  const detail::Anchored at(sc);
  Instance inst{io::space_from_json(at.node(sc.space, "/space")), sc.transform, DiscreteDistribution::point_mass(Point{}),
                std::nullopt, {}};
  const Space& s = inst.space;

  const Node dn = at.node(sc.distribution, "/distribution");
  if (dn.has("atoms")) {
    std::vector<Atom> atoms;
    for (const auto& a : dn.at("atoms").items())
      atoms.push_back(Atom{io::point_from_json(a.at("point"), s), a.at("weight").number()});
    const bool normalize = dn.has("normalize") && dn.at("normalize").raw().get<bool>();
    try {
      inst.dist = normalize ? DiscreteDistribution::normalized(std::move(atoms)) : DiscreteDistribution(std::move(atoms));
    } catch (const std::invalid_argument& e) {
      dn.at("atoms").fail(e.what());
    }
  } else {
    const Sampler smp = detail::sampler_from(dn.at("sampler"), s, sc.seed);
    const auto n = static_cast<std::uint64_t>(dn.at("count").integer());
    std::vector<Atom> atoms;
    for (std::uint64_t i = 0; i < n; ++i) atoms.push_back(Atom{smp.draw(i), 1.0 / static_cast<double>(n)});
    inst.dist = DiscreteDistribution::normalized(std::move(atoms));
  }

  if (sc.reference) inst.reference = io::point_from_json(at.node(*sc.reference, "/reference"), s);

  const Node pn = at.node(sc.probes, "/probes");
  if (pn.has("points")) {
    for (const auto& p : pn.at("points").items()) inst.probes.push_back(io::point_from_json(p, s));
  } else if (pn.has("grid")) {
    const Node g = pn.at("grid");
    const Point a = io::point_from_json(g.at("from"), s), b = io::point_from_json(g.at("to"), s);
    const Geodesic geo = s.geodesic(a, b);
    const auto n = g.at("count").integer();
    for (long long i = 0; i < n; ++i)
      inst.probes.push_back(geo.eval(geo.length() * static_cast<double>(i) / static_cast<double>(n - 1)));
  } else {
    const Node r = pn.at("random");
    const double radius = r.has("radius") ? r.at("radius").number() : 1.0;
    const auto n = static_cast<std::uint64_t>(r.at("count").integer());
    for (std::uint64_t i = 0; i < n; ++i) inst.probes.push_back(detail::random_probe(s, sc.seed, i, radius));
  }
  return inst;
}

struct ProfileRow {
  std::size_t index = 0;
  Point point;
  double distance_to_reference = 0.0;
  double objective = 0.0;  // E[tau(d(Y,q)) - tau(d(Y,reference))]
};

struct ScenarioResult {
  std::string name;
  std::uint64_t seed = 0;
  std::string space_kind;
  std::vector<InequalityReport> reports;
  std::vector<ProfileRow> profile;
  std::optional<MeanResult> mean;
  std::optional<Segment> median_set;
  std::optional<LeftRightMass> median_mass;
  Instance instance;

  bool all_satisfied() const {
    for (const auto& r : reports)
      if (!r.diagnostic && !r.satisfied) return false;
    return true;
  }
};

struct RunOptions {
  std::optional<std::uint64_t> seed;  // overrides the scenario seed
  double tol = kDefaultTol;
  bool profile = false;
  bool mean = false;
  bool median = false;
};

namespace detail {

inline double param_or(const json& p, const char* key, double dflt) {
  return p.contains(key) ? p.at(key).get<double>() : dflt;
}

inline std::vector<double> list_or(const json& p, const char* key, std::vector<double> dflt) {
  if (!p.contains(key)) return dflt;
  return p.at(key).get<std::vector<double>>();
}

class Runner {
 public:
  Runner(const Scenario& sc, Instance inst, const RunOptions& opt) : sc_(sc), at_(sc), inst_(std::move(inst)), opt_(opt) {}

  Instance& instance() { return inst_; }

  /// {"point": P} or {"segment": [P, P]}
  Segment expected_segment(const Node& e) const {
    const Space& s = inst_.space;
    if (e.has("point")) {
      e.only({"point"});
      const Point x = io::point_from_json(e.at("point"), s);
      return make_segment(s, x, x);
    }
    e.only({"segment"});
    const Node seg = e.at("segment");
    if (!seg.is_array() || seg.size() != 2) seg.fail("segment must be [from, to]");
    return make_segment(s, io::point_from_json(seg.at(0), s), io::point_from_json(seg.at(1), s));
  }

  const MeanResult& mean() {
    if (!mean_) {
      mean_ = frechet_mean(inst_.space, inst_.tau, inst_.dist);
      require_certified(*mean_, mean_->objective);
    }
    return *mean_;
  }
  const MeanResult& median() {
    if (!median_) {
      median_ = frechet_mean(inst_.space, Transform::linear(), inst_.dist);
      require_certified(*median_, median_->objective);
    }
    return *median_;
  }
  Point reference() { return inst_.reference ? *inst_.reference : mean().minimizer; }

  void run_check(const CheckSpec& c, std::size_t k, std::vector<InequalityReport>& out) {
    const Space& s = inst_.space;
    const Transform& tau = inst_.tau;
    const DiscreteDistribution& d = inst_.dist;
    const json& p = c.params;
    const std::string base = "/checks/" + std::to_string(k);
    auto pnode = [&](const char* key) { return at_.node(p.at(key), base + "/params/" + key); };
    auto push = [&](InequalityReport r) {
      if (r.tol == kDefaultTol) {
        r.tol = opt_.tol;
        r.satisfied = r.margin >= -r.tol * (1.0 + std::abs(r.lhs));
      }
      out.push_back(std::move(r));
    };
    auto distinct = [&](const Point& m, const Point& q) { return s.distance(m, q) > kPointTol; };

    if (c.id == "hadamard_mean") {
      const auto m = frechet_mean(s, Transform::power(2.0), d);
      require_certified(m, m.objective);
      for (const auto& q : inst_.probes) push(vi_hadamard_mean(s, d, m.minimizer, q));
    } else if (c.id == "transformed_mean") {
      const Point m = mean().minimizer;
      for (const auto& q : inst_.probes)
        if (distinct(m, q)) push(vi_transformed(s, tau, d, m, q));
    } else if (c.id == "point_mass") {
      const Point m = mean().minimizer;
      for (const auto& q : inst_.probes) push(vi_pointmass(s, tau, d, m, q));
    } else if (c.id == "median_bowtie") {
      const double eta = param_or(p, "eta", 0.5);
      const Point m = median().minimizer;
      for (const auto& q : inst_.probes)
        if (distinct(m, q)) push(vi_median(s, d, m, q, eta));
    } else if (c.id == "affine_reduction") {
      const Point m = mean().minimizer;
      for (const auto& q : inst_.probes) push(vi_affine_reduction(s, tau, d, m, q).report);
    } else if (c.id == "set_identity") {
      push(affine_set_identity(s, tau, d, param_or(p, "tol", 1e-8)));
    } else if (c.id == "median_on_geodesic") {
      const Geodesic g = s.geodesic(io::point_from_json(pnode("from"), s), io::point_from_json(pnode("to"), s));
      const Point m = median().minimizer;
      for (const auto& q : inst_.probes) push(vi_median_on_geodesic(s, d, g, m, q));
    } else if (c.id == "median_trivial") {
      const Point ref = inst_.reference ? *inst_.reference : median().minimizer;
      for (const auto& q : inst_.probes) push(vi_trivial_median(s, d, ref, q));
    } else if (c.id == "general_bounds") {
      const double split = param_or(p, "split", 1.0);
      const Point ref = reference();
      for (const auto& q : inst_.probes) {
        const auto b = general_bounds(s, tau, d, ref, q, split);
        push(make_report("general_upper", s.kind_name(), tau.name(), b.upper, b.exact));
        if (b.upper_near) push(make_report("general_upper_near", s.kind_name(), tau.name(), *b.upper_near, b.exact));
        if (b.lower) push(make_report("general_lower", s.kind_name(), tau.name(), b.exact, *b.lower));
      }
    } else if (c.id == "asymptotic_ratio") {
      const Point ref = reference();
      double diam = 0.0;
      for (const auto& a : d.atoms()) diam = std::max(diam, s.distance(a.point, ref));
      const auto radii = list_or(p, "radii", {1e3 * std::max(1.0, 2.0 * diam)});
      std::optional<Vec> dir;
      if (p.contains("direction")) {
        const auto v = p.at("direction").get<std::vector<double>>();
        dir = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
      }
      const double band = param_or(p, "band", 0.05);
      for (const auto& row : asymptotic_ratio_check(s, tau, d, ref, radii, dir)) {
        auto r = make_within_report("asymptotic_far", s.kind_name(), tau.name(), band, std::abs(row.far_ratio - 1.0));
        r.diagnostic = true;
        r.detail = "r=" + std::to_string(row.radius);
        push(r);
      }
      const double near_r = param_or(p, "near_radius", 1e-6);
      const auto near = asymptotic_ratio_check(s, tau, d, ref, {near_r}, dir).front();
      auto r = make_report("asymptotic_near", s.kind_name(), tau.name(), near.near_bound + param_or(p, "near_slack", 1e-3),
                           near.near_ratio);
      r.diagnostic = true;
      push(r);
    } else if (c.id == "growth_regime") {
      const double beta = param_or(p, "beta", 0.0);
      const auto near = list_or(p, "near", {1e-4, 2e-4, 4e-4, 8e-4, 1.6e-3});
      const auto far = list_or(p, "far", {});
      std::optional<Vec> dir;
      if (p.contains("direction")) {
        const auto v = p.at("direction").get<std::vector<double>>();
        dir = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
      }
      const auto g = growth_regime_probe(s, tau, d, mean().minimizer, beta, near, far, dir);
      auto r = make_report("growth_regime", s.kind_name(), tau.name(), 2.0 - beta + 0.1, g.near_exponent, 0.0);
      r.diagnostic = true;
      r.detail = "near_exponent=" + std::to_string(g.near_exponent) + " far_band=[" + std::to_string(g.far_ratio_min) +
                 "," + std::to_string(g.far_ratio_max) + "]";
      push(r);
    } else if (c.id == "huber_reference") {
      if (tau.kind() != TransformKind::Huber) at_.node(c.params, base).fail("huber_reference needs a huber transform");
      if (!(s.component_count() == 1 && s.vector_dim(0) == 1))
        at_.node(c.params, base).fail("huber_reference needs 1-dimensional Euclidean space");
      const double z = p.at("z").get<double>();
      const Point origin = Point::vec({0.0});
      double worst = 0.0;
      for (const auto& q : inst_.probes)
        worst = std::max(worst, std::abs(variance_functional(s, tau, d, q, origin) -
                                         huber_reference_functional(z, tau.param(), q.coords()[0])));
      push(make_within_report("huber_reference", s.kind_name(), tau.name(), param_or(p, "tol", 1e-12), worst));
    } else if (c.id == "mean_set" || c.id == "median_set") {
      const Segment got = c.id == "mean_set" ? mean_set(s, tau, d) : median_set(s, d);
      const Segment want = expected_segment(pnode("expect"));
      push(make_within_report(c.id, s.kind_name(), c.id == "mean_set" ? tau.name() : "linear",
                              param_or(p, "tol", 1e-8), hausdorff(s, got, want)));
    } else if (c.id == "left_right_mass") {
      Segment seg;
      if (p.contains("from")) seg = make_segment(s, io::point_from_json(pnode("from"), s), io::point_from_json(pnode("to"), s));
      else seg = median_set(s, d);
      InequalityReport r;
      if (!(seg.length > 0.0)) {
        r = make_within_report("left_right_mass", s.kind_name(), "linear", param_or(p, "tol", 1e-12), kInf);
        r.detail = "median set is a single point";
      } else {
        const auto lr = left_right_mass(s, d, s.geodesic(seg.a, seg.b));
        const double dev = std::max({std::abs(lr.left - 0.5), std::abs(lr.interior), std::abs(lr.right - 0.5)});
        r = make_within_report("left_right_mass", s.kind_name(), "linear", param_or(p, "tol", 1e-12), dev);
        char buf[128];
        std::snprintf(buf, sizeof buf, "L=%.17g I=%.17g R=%.17g", lr.left, lr.interior, lr.right);
        r.detail = buf;
      }
      push(r);
    } else if (c.id == "uniqueness") {
      const Uniqueness u = uniqueness_certificate(s, tau, d, mean().minimizer);
      InequalityReport r = make_report("uniqueness", s.kind_name(), tau.name(), 0.0, 0.0);
      r.detail = to_string(u);
      if (p.contains("expect")) {
        r.satisfied = p.at("expect").get<std::string>() == to_string(u);
        if (!r.satisfied) r.rhs = r.margin = 1.0;
      } else {
        r.diagnostic = true;
      }
      push(r);
    }
  }

 private:
  const Scenario& sc_;
  Anchored at_;
  Instance inst_;
  RunOptions opt_;
  std::optional<MeanResult> mean_, median_;
};

}  // namespace detail

/// Deterministic given the scenario and seed.
inline ScenarioResult run_scenario(const Scenario& scenario, const RunOptions& opt = {}) {
  Scenario sc = scenario;
  if (opt.seed) sc.seed = *opt.seed;
  detail::Runner runner(sc, build(sc), opt);
  ScenarioResult res;
  res.name = sc.name;
  res.seed = sc.seed;
  res.space_kind = runner.instance().space.kind_name();
  for (std::size_t k = 0; k < sc.checks.size(); ++k) runner.run_check(sc.checks[k], k, res.reports);
  for (auto& r : res.reports) r.seed = sc.seed;
  Instance& inst = runner.instance();
  if (opt.profile || sc.checks.empty()) {
    const Point ref = runner.reference();
    for (std::size_t i = 0; i < inst.probes.size(); ++i) {
      const Point& q = inst.probes[i];
      res.profile.push_back(ProfileRow{i, q, inst.space.distance(q, ref), variance_functional(inst.space, inst.tau, inst.dist, q, ref)});
    }
  }
  if (opt.mean) res.mean = runner.mean();
  if (opt.median) {
    res.median_set = median_set(inst.space, inst.dist);
    if (res.median_set->length > 0.0)
      res.median_mass = left_right_mass(inst.space, inst.dist, inst.space.geodesic(res.median_set->a, res.median_set->b));
  }
  res.instance = std::move(inst);
  return res;
}

// ---------------------------------------------------------------------------
// Writers

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string point_text(const Point& p) {
  std::string out = "c" + std::to_string(p.component) + ":";
  if (p.is_vector()) {
    for (Eigen::Index i = 0; i < p.coords().size(); ++i) out += (i ? " " : "") + fmt(p.coords()[i]);
  } else {
    out += "e" + std::to_string(p.tree_point().edge) + "@" + fmt(p.tree_point().offset);
  }
  return out;
}

inline void write_reports_csv(std::ostream& os, const std::vector<ScenarioResult>& results) {
  os << "theorem_id,space_kind,tau_kind,lhs,rhs,margin,satisfied,seed\n";
  for (const auto& res : results)
    for (const auto& r : res.reports)
      os << r.theorem_id << ',' << r.space_kind << ',' << r.tau_kind << ',' << fmt(r.lhs) << ',' << fmt(r.rhs) << ','
         << fmt(r.margin) << ',' << (r.satisfied ? "true" : "false") << ',' << r.seed << '\n';
}

inline void write_profile_csv(std::ostream& os, const std::vector<ScenarioResult>& results) {
  os << "scenario,index,point,distance_to_reference,objective\n";
  for (const auto& res : results)
    for (const auto& p : res.profile)
      os << res.name << ',' << p.index << ',' << point_text(p.point) << ',' << fmt(p.distance_to_reference) << ','
         << fmt(p.objective) << '\n';
}

inline json report_json(const InequalityReport& r) {
  return {{"theorem_id", r.theorem_id}, {"space_kind", r.space_kind}, {"tau_kind", r.tau_kind},
          {"lhs", r.lhs},               {"rhs", r.rhs},               {"margin", r.margin},
          {"tol", r.tol},               {"satisfied", r.satisfied},   {"diagnostic", r.diagnostic},
          {"seed", r.seed},             {"digest", r.digest},         {"detail", r.detail}};
}

inline json result_json(const ScenarioResult& res) {
  const Space& s = res.instance.space;
  json j{{"name", res.name}, {"seed", res.seed}, {"space_kind", res.space_kind}, {"satisfied", res.all_satisfied()}};
  json reps = json::array();
  for (const auto& r : res.reports) reps.push_back(report_json(r));
  j["reports"] = reps;
  if (!res.profile.empty()) {
    json prof = json::array();
    for (const auto& p : res.profile)
      prof.push_back({{"point", io::point_to_json(p.point, s)}, {"distance_to_reference", p.distance_to_reference},
                      {"objective", p.objective}});
    j["profile"] = prof;
  }
  if (res.mean)
    j["mean"] = {{"minimizer", io::point_to_json(res.mean->minimizer, s)}, {"objective", res.mean->objective},
                 {"certified_gap", res.mean->certified_gap}, {"method", res.mean->method}};
  if (res.median_set) {
    json m{{"a", io::point_to_json(res.median_set->a, s)}, {"b", io::point_to_json(res.median_set->b, s)},
           {"length", res.median_set->length}};
    if (const auto a = s.embed_2d(res.median_set->a), b = s.embed_2d(res.median_set->b); a && b)
      m["xy"] = {{(*a)[0], (*a)[1]}, {(*b)[0], (*b)[1]}};
    if (res.median_mass)
      m["left_right_mass"] = {{"left", res.median_mass->left}, {"interior", res.median_mass->interior},
                              {"right", res.median_mass->right}, {"other", res.median_mass->other}};
    j["median_set"] = m;
  }
  return j;
}

inline void write_mean_csv(std::ostream& os, const std::vector<ScenarioResult>& results) {
  os << "scenario,method,minimizer,objective,certified_gap\n";
  for (const auto& r : results)
    if (r.mean)
      os << r.name << ',' << r.mean->method << ',' << point_text(r.mean->minimizer) << ',' << fmt(r.mean->objective) << ','
         << fmt(r.mean->certified_gap) << '\n';
}

inline void write_median_csv(std::ostream& os, const std::vector<ScenarioResult>& results) {
  os << "scenario,a,b,length,left,interior,right\n";
  for (const auto& r : results) {
    if (!r.median_set) continue;
    os << r.name << ',' << point_text(r.median_set->a) << ',' << point_text(r.median_set->b) << ','
       << fmt(r.median_set->length);
    if (r.median_mass) os << ',' << fmt(r.median_mass->left) << ',' << fmt(r.median_mass->interior) << ',' << fmt(r.median_mass->right);
    else os << ",,,";
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Figure data

enum class Figure { TransformCurves, Stickfigure, HuberProfiles };

inline void emit_figure_data(Figure which, std::ostream& os) {
  switch (which) {
    case Figure::TransformCurves: {
      const std::vector<std::pair<std::string, Transform>> curves = {
          {"tau1", Transform::power_normalized(1.0)},     {"tau1.5", Transform::power_normalized(1.5)},
          {"tau2", Transform::power_normalized(2.0)},     {"huber1", Transform::huber(1.0)},
          {"pseudo_huber1", Transform::pseudo_huber(1.0)}};
      os << "x";
      for (const auto& [n, t] : curves) os << ',' << n << ",d_" << n;
      os << '\n';
      for (int i = 0; i <= 300; ++i) {
        const double x = i / 100.0;
        os << fmt(x);
        for (const auto& [n, t] : curves) os << ',' << fmt(t.value(x)) << ',' << fmt(t.first(x));
        os << '\n';
      }
      break;
    }
    case Figure::Stickfigure: {
      const Space s = Space::stickfigure();
      os << "element,name,x0,y0,x1,y1,radius\n";
      const auto& disk = std::get<DiskSpace>(s.component(0));
      os << "disk,head," << fmt(disk.center[0]) << ',' << fmt(disk.center[1]) << ",,," << fmt(disk.radius) << '\n';
      const MetricTree& t = s.tree_component(1);
      for (int e = 0; e < t.edge_count(); ++e) {
        const auto a = *t.coords()[static_cast<std::size_t>(t.edge(e).u)], b = *t.coords()[static_cast<std::size_t>(t.edge(e).v)];
        os << "edge," << t.names()[static_cast<std::size_t>(t.edge(e).u)] << '-' << t.names()[static_cast<std::size_t>(t.edge(e).v)]
           << ',' << fmt(a[0]) << ',' << fmt(a[1]) << ',' << fmt(b[0]) << ',' << fmt(b[1]) << ",\n";
      }
      for (const auto& [name, p] : s.landmarks()) {
        const auto xy = *s.embed_2d(p);
        os << "landmark," << name << ',' << fmt(xy[0]) << ',' << fmt(xy[1]) << ",,,\n";
      }
      break;
    }
    case Figure::HuberProfiles: {
      const Space r = Space::euclidean(1);
      const Transform h = Transform::huber(1.0), lin = Transform::linear();
      os << "q,huber_z0.5,huber_z2,median_z0.5,median_z2\n";
      std::vector<DiscreteDistribution> ds;
      for (double z : {0.5, 2.0}) ds.push_back(DiscreteDistribution({{Point::vec({z}), 0.5}, {Point::vec({-z}), 0.5}}));
      const Point o = Point::vec({0.0});
      for (int i = 0; i <= 1000; ++i) {
        const Point q = Point::vec({-5.0 + 10.0 * i / 1000.0});
        os << fmt(q.coords()[0]);
        for (const auto& d : ds) os << ',' << fmt(variance_functional(r, h, d, q, o));
        for (const auto& d : ds) os << ',' << fmt(variance_functional(r, lin, d, q, o));
        os << '\n';
      }
      break;
    }
  }
}

}  // namespace tfm::scenario
