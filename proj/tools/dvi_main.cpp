// Copyright 2026 The dvi-density Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// dvi: scenario-driven solver front end.
//
//   dvi solve <config>        equilibrium (piecewise when breakpoints are set)
//   dvi stability <config>    perturbation sweep over k = 1..k_max
//   dvi regime-map <config>   Cournot regime sweep
//   dvi list-scenarios        builtin scenarios
//   dvi show-config <name>    builtin config as JSON
//
// <config> is a JSON file or a builtin name. Exit codes: 0 success, 2 config
// error, 3 definiteness error, 4 iteration budget exhausted, 5 divergence,
// 1 anything else. Failures print one line to stderr:
//   error: kind=<kind> message="<text>"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "dvi/error.hpp"
#include "dvi/scenario.hpp"

namespace {

using dvi::scenario::json;

struct Overrides {
  std::optional<std::string> output_dir;
  std::optional<double> eps0;
  std::optional<double> tol;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  bool dump_trajectory = false;
};

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch == '\n' ? ' ' : ch;
  }
  return out;
}

int exit_code(dvi::ErrorKind kind) {
  switch (kind) {
    case dvi::ErrorKind::config:
    case dvi::ErrorKind::schedule_infeasible: return 2;
    case dvi::ErrorKind::definiteness: return 3;
    case dvi::ErrorKind::max_iters: return 4;
    case dvi::ErrorKind::divergence: return 5;
    default: return 1;
  }
}

int report(std::string_view kind, const std::string& message, int code) {
  std::cerr << "error: kind=" << kind << " message=\"" << escape(message) << "\"\n";
  return code;
}

// Overrides are written into the config so the manifest records what ran.
dvi::scenario::ScenarioConfig prepare(const std::string& ref, const Overrides& o) {
  json j = dvi::scenario::load_config(ref);
  if (!j.is_object()) dvi::detail::fail(dvi::ErrorKind::config, ref + ": config must be a JSON object");
  if (o.eps0) j["solver"]["eps0"] = *o.eps0;
  if (o.tol) j["solver"]["tol"] = *o.tol;
  if (o.seed) j["solver"]["seed"] = *o.seed;
  if (o.mode) j["mode"] = *o.mode;
  if (o.dump_trajectory) j["dump_trajectory"] = true;
  return dvi::scenario::parse_config(j);
}

std::filesystem::path output_dir(const dvi::scenario::ScenarioConfig& c, const Overrides& o) {
  if (o.output_dir) return *o.output_dir;
  if (c.output_dir) return *c.output_dir;
  if (const char* env = std::getenv("DVI_OUTPUT_DIR"); env != nullptr && *env != '\0') {
    return std::filesystem::path(env) / c.name;
  }
  return std::filesystem::path("dvi_out") / c.name;
}

void print_summary(const dvi::scenario::RunOutput& out) {
  std::cout << out.summary.dump(2) << "\nwrote " << out.files.size() + 1 << " files to " << out.dir.string()
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Equilibria of density-constrained differential games"};
  app.require_subcommand(1);
  Overrides o;
  std::string ref;

  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("config", ref, "JSON config file or builtin scenario name")->required();
    sub->add_option("--output-dir", o.output_dir, "artifact directory (default $DVI_OUTPUT_DIR/<name>)");
    sub->add_option("--eps0", o.eps0, "step size override");
    sub->add_option("--tol", o.tol, "stopping tolerance");
    sub->add_option("--seed", o.seed, "seed for the sampled VI residual");
    sub->add_option("--mode", o.mode, "nne or mne")->check(CLI::IsMember({"nne", "mne"}));
  };
  CLI::App* solve = app.add_subcommand("solve", "compute an equilibrium");
  add_run_flags(solve);
  solve->add_flag("--dump-trajectory", o.dump_trajectory, "write the state trajectory t,x,value");
  CLI::App* stability = app.add_subcommand("stability", "perturbation sweep");
  add_run_flags(stability);
  CLI::App* regime = app.add_subcommand("regime-map", "Cournot regime sweep");
  add_run_flags(regime);
  app.add_subcommand("list-scenarios", "list builtin scenarios");
  CLI::App* show = app.add_subcommand("show-config", "print a builtin config");
  std::string show_name;
  show->add_option("name", show_name, "builtin scenario name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(dvi::kind_name(dvi::ErrorKind::config), e.what(), 2);
  }

  try {
    if (app.got_subcommand("list-scenarios")) {
      for (const auto& b : dvi::scenario::builtins()) std::cout << b.name << "\t" << b.description << "\n";
      return 0;
    }
    if (app.got_subcommand("show-config")) {
      auto j = dvi::scenario::builtin_config(show_name);
      if (!j) dvi::detail::fail(dvi::ErrorKind::config, show_name + ": no such builtin scenario");
      std::cout << j->dump(2) << "\n";
      return 0;
    }
    const auto cfg = prepare(ref, o);
    const auto dir = output_dir(cfg, o);
    if (app.got_subcommand("solve")) {
      print_summary(dvi::scenario::run_solve(cfg, dir));
    } else if (app.got_subcommand("stability")) {
      print_summary(dvi::scenario::run_stability(cfg, dir));
    } else {
      print_summary(dvi::scenario::run_regime_map(cfg, dir));
    }
  } catch (const dvi::Error& e) {
    return report(dvi::kind_name(e.kind()), e.what(), exit_code(e.kind()));
  } catch (const std::exception& e) {
    return report(dvi::kind_name(dvi::ErrorKind::internal), e.what(), 1);
  }
  return 0;
}
