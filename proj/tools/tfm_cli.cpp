// tfm: batch front end over scenario files.
//
// Exit codes: 0 all non-diagnostic checks satisfied, 2 some check violated, 1 usage or schema error.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "tfm/scenario.hpp"

namespace {

using tfm::scenario::RunOptions;
using tfm::scenario::Scenario;
using tfm::scenario::ScenarioResult;

struct Options {
  std::vector<std::string> scenario_paths;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "csv";
  unsigned jobs = 1;
  double tol = tfm::kDefaultTol;
  std::string which;
};

std::vector<Scenario> load_all(const Options& o) {
  std::vector<Scenario> all;
  for (const auto& p : o.scenario_paths) {
    auto scs = tfm::scenario::load_scenarios(p);
    all.insert(all.end(), scs.begin(), scs.end());
  }
  return all;
}

/// Runs scenarios on up to `jobs` threads; results keep input order.
std::vector<ScenarioResult> run_all(const std::vector<Scenario>& scs, const RunOptions& ro, unsigned jobs) {
  std::vector<ScenarioResult> results(scs.size());
  std::vector<std::exception_ptr> errors(scs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < scs.size(); i = next++) {
      try {
        results[i] = tfm::scenario::run_scenario(scs[i], ro);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(scs.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < scs.size(); ++i)
    if (errors[i]) {
      try {
        std::rethrow_exception(errors[i]);
      } catch (const std::exception& e) {
        throw std::runtime_error("scenario \"" + scs[i].name + "\": " + e.what());
      }
    }
  return results;
}

template <class Write>
void emit(const Options& o, const std::vector<Scenario>& scs, Write&& write) {
  std::string path = o.out;
  if (path.empty() && scs.size() == 1 && scs.front().output && !scs.front().output->path.empty())
    path = scs.front().output->path;
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  write(f);
}

std::string effective_format(const Options& o, const std::vector<Scenario>& scs, const CLI::App& sub) {
  if (sub.count("--format") == 0 && scs.size() == 1 && scs.front().output) return scs.front().output->format;
  return o.format;
}

void write_json(std::ostream& os, const std::vector<ScenarioResult>& results) {
  tfm::io::json arr = tfm::io::json::array();
  for (const auto& r : results) arr.push_back(tfm::scenario::result_json(r));
  os << tfm::io::json{{"results", arr}}.dump(2) << '\n';
}

int exit_code(const std::vector<ScenarioResult>& results) {
  for (const auto& r : results)
    if (!r.all_satisfied()) return 2;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformed Frechet means: solvers, variance-inequality checks and figure data"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--scenario", o.scenario_paths, "Scenario JSON file (repeatable)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Override every scenario seed");
    sub->add_option("--out", o.out, "Output path ('-' for stdout)");
    sub->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--jobs", o.jobs, "Scenarios run in parallel")->check(CLI::Range(1u, 256u));
    sub->add_option("--tol", o.tol, "Relative tolerance of inequality margins")->check(CLI::PositiveNumber);
  };

  auto* profile = app.add_subcommand("profile", "Evaluate F(q) - F(reference) at the scenario probes");
  auto* verify = app.add_subcommand("verify", "Run the scenario checks and report margins");
  auto* mean = app.add_subcommand("mean", "Compute the tau-Frechet mean with its certified gap");
  auto* median = app.add_subcommand("median-set", "Compute the Frechet median set and its left/right masses");
  for (auto* s : {profile, verify, mean, median}) add_common(s);
  auto* figure = app.add_subcommand("figure-data", "Emit CSV data for the reference figures");
  figure->add_option("--which", o.which, "Figure")
      ->required()
      ->check(CLI::IsMember({"transform_curves", "stickfigure", "huber_profiles"}));
  figure->add_option("--out", o.out, "Output path ('-' for stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (figure->parsed()) {
      using tfm::scenario::Figure;
      const Figure f = o.which == "transform_curves" ? Figure::TransformCurves
                       : o.which == "stickfigure"    ? Figure::Stickfigure
                                                     : Figure::HuberProfiles;
      emit(o, {}, [&](std::ostream& os) { tfm::scenario::emit_figure_data(f, os); });
      return 0;
    }

    const auto scs = load_all(o);
    RunOptions ro;
    ro.seed = o.seed;
    ro.tol = o.tol;
    CLI::App* sub = app.get_subcommands().front();
    ro.profile = profile->parsed();
    ro.mean = mean->parsed();
    ro.median = median->parsed();
    const auto results = run_all(scs, ro, o.jobs);
    const std::string fmt = effective_format(o, scs, *sub);

    if (fmt == "json") {
      emit(o, scs, [&](std::ostream& os) { write_json(os, results); });
    } else if (profile->parsed()) {
      emit(o, scs, [&](std::ostream& os) { tfm::scenario::write_profile_csv(os, results); });
    } else if (mean->parsed()) {
      emit(o, scs, [&](std::ostream& os) { tfm::scenario::write_mean_csv(os, results); });
    } else if (median->parsed()) {
      emit(o, scs, [&](std::ostream& os) { tfm::scenario::write_median_csv(os, results); });
    } else {
      bool any_checks = false;
      for (const auto& s : scs) any_checks = any_checks || !s.checks.empty();
      emit(o, scs, [&](std::ostream& os) {
        if (any_checks) tfm::scenario::write_reports_csv(os, results);
        else tfm::scenario::write_profile_csv(os, results);
      });
    }
    if (verify->parsed()) {
      const int rc = exit_code(results);
      if (rc != 0)
        for (const auto& r : results)
          for (const auto& rep : r.reports)
            if (!rep.diagnostic && !rep.satisfied)
              std::cerr << "violated: " << r.name << ' ' << rep.theorem_id << " margin " << rep.margin
                        << (rep.detail.empty() ? "" : " (" + rep.detail + ")") << '\n';
      return rc;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
