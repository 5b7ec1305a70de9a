#include "icr/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "icr/cycles.hpp"
#include "icr/discrete_icr.hpp"
#include "icr/gaussian.hpp"
#include "icr/io.hpp"
#include "icr/sampler.hpp"

namespace icr::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Options {
  std::string model_path;
  std::string cycle;
  std::string out_dir;
  std::string against;
  std::string report;
  std::string track = "kl";
  std::optional<double> tol;
  double compat_tol = -1.0;
  std::size_t max_cycles = 0;
  bool strict = false;
  ChainConfig chain;
};

/// Thrown to leave a command with a specific exit code after printing.
struct Exit {
  int code;
};

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::InvalidModel:
    case ErrorCode::InvalidDistribution:
    case ErrorCode::InvalidArgument:
    case ErrorCode::NotAPermutation:
    case ErrorCode::NotAllFull:
    case ErrorCode::TooManyConditionals:
    case ErrorCode::NotPositiveDefinite:
    case ErrorCode::InconsistentMargins:
      return kUsage;
    case ErrorCode::NotPermissible:
    case ErrorCode::NotPermissibleStep:
      return kNotPermissible;
    default:
      return kFailure;
  }
}

CycleMode mode_of(const Options& o) {
  return o.strict ? CycleMode::Strict : CycleMode::Permissive;
}

std::vector<std::size_t> parse_order(const std::string& text) {
  std::vector<std::size_t> order;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v < 1) throw std::invalid_argument(item);
      order.push_back(std::size_t(v) - 1);
    } catch (const std::exception&) {
      throw Error(ErrorCode::NotAPermutation,
                  "--cycle expects comma-separated 1-based indices, got '" + text + "'");
    }
  }
  return order;
}

void print_violations(const UpdatingCycle& cycle, std::ostream& out) {
  for (const auto& v : cycle.violations) {
    out << "  ";
    if (v.position) out << "step " << *v.position + 1 << ": ";
    out << v.reason << '\n';
  }
}

/// The explicit --cycle when given, otherwise the first permissible cycle.
UpdatingCycle resolve_cycle(const ConditionalModel& model, const std::string& flag,
                            CycleMode mode, std::ostream& err) {
  UpdatingCycle cycle;
  if (!flag.empty()) {
    cycle = is_permissible(model, parse_order(flag), mode);
  } else {
    auto all = enumerate_permissible(model, mode);
    if (all.empty()) {
      err << "model has no permissible updating cycle\n";
      throw Exit{kNotPermissible};
    }
    cycle = std::move(all.front());
  }
  if (!cycle.permissible) {
    err << "cycle " << order_label(cycle.order) << " is not permissible:\n";
    print_violations(cycle, err);
    throw Exit{kNotPermissible};
  }
  return cycle;
}

std::string names_of(const ConditionalModel& model, const VarSet& set) {
  std::string out;
  for (std::size_t k = 0; k < set.size(); ++k) {
    if (k) out += ",";
    out += model.variables()[set[k]].name;
  }
  return out;
}

std::string describe_position(const ConditionalModel& model, const UpdatingCycle& cycle,
                              std::size_t i) {
  const std::size_t c = cycle.order[i];
  std::string s = "position " + std::to_string(i + 1) + " (after conditional " +
                  std::to_string(c + 1) + ": " + names_of(model, model.target(c));
  if (!model.parents(c).empty()) s += " | " + names_of(model, model.parents(c));
  return s + ")";
}

void print_discrete(const DiscreteDistribution& d, const ConditionalModel& model,
                    std::ostream& out) {
  std::vector<std::size_t> digits(d.dims().size(), 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::size_t rest = i;
    for (std::size_t k = d.dims().size(); k-- > 0;) {
      digits[k] = rest % d.dims()[k];
      rest /= d.dims()[k];
    }
    out << "   ";
    for (std::size_t k = 0; k < digits.size(); ++k) {
      out << ' ' << model.variables()[d.scope()[k]].name << '=' << digits[k];
    }
    out << "  " << std::setprecision(12) << d[i] << '\n';
  }
}

std::string cell(double x) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << x;
  if (auto r = rational_approximation(x); r && r->find('/') != std::string::npos) {
    os << " (" << *r << ")";
  }
  return os.str();
}

void print_gaussian(const GaussianDistribution& g, const ConditionalModel& model,
                    std::ostream& out) {
  out << "    scope: " << names_of(model, g.scope()) << '\n' << "    mean:";
  for (Eigen::Index i = 0; i < g.mean().size(); ++i) out << "  " << cell(g.mean()(i));
  out << "\n    covariance:\n";
  for (Eigen::Index r = 0; r < g.covariance().rows(); ++r) {
    out << "     ";
    for (Eigen::Index c = 0; c < g.covariance().cols(); ++c) {
      out << std::setw(24) << cell(g.covariance()(r, c));
    }
    out << '\n';
  }
}

void write_file(const std::string& dir, const std::string& name, const std::string& body) {
  fs::create_directories(dir);
  std::ofstream f(fs::path(dir) / name);
  if (!f) throw Error(ErrorCode::InvalidArgument, "cannot write " + (fs::path(dir) / name).string());
  f << body;
}

IcrConfig discrete_config(const Options& o) {
  IcrConfig cfg;
  if (o.track == "tv") cfg.track = TrackMetric::TV;
  if (o.tol) (cfg.track == TrackMetric::KL ? cfg.kl_tol : cfg.tv_tol) = *o.tol;
  if (o.max_cycles) cfg.max_cycles = o.max_cycles;
  return cfg;
}

GaussianIcrConfig gaussian_config(const Options& o) {
  GaussianIcrConfig cfg;
  if (o.tol) cfg.frob_tol = *o.tol;
  if (o.max_cycles) cfg.max_cycles = o.max_cycles;
  return cfg;
}

bool all_full(const ConditionalModel& model) {
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (!model.is_full(i)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

int cmd_cycles(const Options& o, std::ostream& out) {
  const auto model = load_model(o.model_path);
  const auto kinds = classify(model);
  out << "conditionals:\n";
  for (std::size_t i = 0; i < model.size(); ++i) {
    out << "  " << i + 1 << ": " << names_of(model, model.target(i));
    if (!model.parents(i).empty()) out << " | " << names_of(model, model.parents(i));
    out << "  [" << (kinds[i] == ConditionalKind::Full ? "full" : "non-full") << "]\n";
  }

  std::vector<UpdatingCycle> accepted, rejected;
  if (model.size() > 9) {
    throw Error(ErrorCode::TooManyConditionals, "cannot enumerate more than 9 conditionals");
  }
  std::vector<std::size_t> order(model.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  do {
    auto c = is_permissible(model, order, mode_of(o));
    (c.permissible ? accepted : rejected).push_back(std::move(c));
  } while (std::next_permutation(order.begin() + 1, order.end()));

  out << "permissible cycles (" << accepted.size() << ", one per rotation class, "
      << (o.strict ? "strict" : "permissive") << " mode):\n";
  for (const auto& c : accepted) {
    out << "  " << order_label(c.order) << "  " << target_label(model, c.order) << '\n';
  }
  if (!rejected.empty()) {
    out << "rejected cycles (" << rejected.size() << "):\n";
    for (const auto& c : rejected) {
      out << "  " << order_label(c.order) << "  " << target_label(model, c.order) << '\n';
      print_violations(c, out);
    }
  }
  return kOk;
}

int cmd_icr(const Options& o, std::ostream& out, std::ostream& err) {
  const auto model = load_model(o.model_path);
  const auto cycle = resolve_cycle(model, o.cycle, mode_of(o), err);
  out << "cycle " << order_label(cycle.order) << "  (" << target_label(model, cycle.order)
      << ")\n";

  json doc;
  std::string trace;
  bool converged = false;
  if (model.family() == Family::Discrete) {
    const auto cfg = discrete_config(o);
    IcrReport report;
    if (all_full(model)) {
      report = compatibility_check(model, cycle, cfg, o.compat_tol > 0 ? o.compat_tol : 1e-9)
                   .report;
    } else {
      report = icr_run(model, cycle, cfg);
    }
    converged = report.converged;
    out << (converged ? "converged" : "did not converge") << " after " << report.cycles_used
        << " cycles\n";
    for (std::size_t i = 0; i < report.stationary.size(); ++i) {
      out << describe_position(model, cycle, i) << ":\n";
      print_discrete(report.stationary[i], model, out);
    }
    if (report.compatible) out << "compatible: " << std::boolalpha << *report.compatible << '\n';
    doc = report_to_json(report, model);
    std::ostringstream csv;
    write_trace_csv(report, csv);
    trace = csv.str();
  } else {
    const auto cfg = gaussian_config(o);
    GaussianIcrReport report;
    if (all_full(model)) {
      report = gaussian_compatibility_check(model, cycle, cfg,
                                            o.compat_tol > 0 ? o.compat_tol : 1e-8)
                   .report;
    } else {
      report = gaussian_icr_run(model, cycle, cfg);
    }
    converged = report.converged();
    if (converged) {
      out << "converged after " << report.cycles_used << " cycles\n";
    } else {
      out << "NonConvergent (" << to_string(report.status) << " after " << report.cycles_used
          << " cycles): no stationary distribution for this cycle\n";
    }
    for (std::size_t i = 0; i < report.stationary.size(); ++i) {
      out << describe_position(model, cycle, i) << ":\n";
      print_gaussian(report.stationary[i], model, out);
    }
    if (report.compatible) out << "compatible: " << std::boolalpha << *report.compatible << '\n';
    doc = report_to_json(report, model);
    std::ostringstream csv;
    write_trace_csv(report, csv);
    trace = csv.str();
  }

  if (!o.out_dir.empty()) {
    write_file(o.out_dir, "report.json", doc.dump(2) + "\n");
    write_file(o.out_dir, "trace.csv", trace);
  }
  return converged ? kOk : kNonConvergent;
}

int cmd_compat(const Options& o, std::ostream& out, std::ostream& err) {
  const auto model = load_model(o.model_path);
  const auto cycle = resolve_cycle(model, o.cycle, mode_of(o), err);
  Compatibility verdict;
  double spread;
  json doc;
  if (model.family() == Family::Discrete) {
    auto r = compatibility_check(model, cycle, discrete_config(o),
                                 o.compat_tol > 0 ? o.compat_tol : 1e-9);
    verdict = r.verdict;
    spread = r.max_pairwise_tv;
    doc = report_to_json(r.report, model);
    out << "max pairwise total variation between stationary joints: " << spread << '\n';
  } else {
    auto r = gaussian_compatibility_check(model, cycle, gaussian_config(o),
                                          o.compat_tol > 0 ? o.compat_tol : 1e-8);
    verdict = r.verdict;
    spread = r.max_pairwise_difference;
    doc = report_to_json(r.report, model);
    out << "max pairwise parameter difference between stationary joints: " << spread << '\n';
  }
  out << "cycle " << order_label(cycle.order) << ": " << to_string(verdict) << '\n';
  if (!o.out_dir.empty()) write_file(o.out_dir, "report.json", doc.dump(2) + "\n");
  return verdict == Compatibility::Undecidable ? kNonConvergent : kOk;
}

int cmd_sample(const Options& o, std::ostream& out, std::ostream& err) {
  const auto model = load_model(o.model_path);
  std::optional<json> against;
  std::string cycle_flag = o.cycle;
  if (!o.against.empty()) {
    against = read_json(o.against);
    if (cycle_flag.empty()) {
      std::string joined;
      for (std::size_t i : report_cycle(*against)) {
        joined += (joined.empty() ? "" : ",") + std::to_string(i + 1);
      }
      cycle_flag = joined;
    }
  }
  const auto cycle = resolve_cycle(model, cycle_flag, mode_of(o), err);
  const auto batches = run_chain(model, cycle, o.chain);
  out << "chain " << order_label(cycle.order) << "  (" << target_label(model, cycle.order)
      << "), " << o.chain.samples << " samples, seed " << o.chain.seed << '\n';

  if (!o.out_dir.empty()) {
    write_file(o.out_dir, "batches.json", batches_to_json(batches, model).dump(2) + "\n");
    std::ostringstream csv;
    write_batches_csv(batches, model, csv);
    write_file(o.out_dir, "batches.csv", csv.str());
  }

  if (!against) {
    for (const auto& b : batches) {
      out << describe_position(model, cycle, b.position) << ":\n";
      if (b.family == Family::Gaussian) {
        out << "    empirical covariance:\n";
        for (Eigen::Index r = 0; r < b.empirical_cov.rows(); ++r) {
          out << "     ";
          for (Eigen::Index c = 0; c < b.empirical_cov.cols(); ++c) {
            out << std::setw(12) << std::fixed << std::setprecision(4) << b.empirical_cov(r, c);
          }
          out << '\n';
        }
        out.unsetf(std::ios::fixed);
      } else {
        print_discrete(*b.empirical_table, model, out);
      }
    }
    return kOk;
  }

  const auto& limits = against->at("stationary");
  const bool gaussian_report = against->value("family", "") == "gaussian";
  if (gaussian_report != (model.family() == Family::Gaussian)) {
    err << "report family does not match the model\n";
    return kUsage;
  }
  if (limits.size() != batches.size()) {
    err << "report has " << limits.size() << " stationary distributions, chain has "
        << batches.size() << " positions\n";
    return kComparisonFailed;
  }
  bool all_pass = true;
  out << std::left << std::setw(10) << "position" << std::setw(13) << "conditional"
      << std::setw(12) << "max|z|" << std::setw(16) << "worst" << "result\n";
  for (const auto& b : batches) {
    Comparison cmp;
    try {
      cmp = gaussian_report ? compare(b, gaussian_from_json(limits[b.position], model))
                            : compare(b, discrete_from_json(limits[b.position], model));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ScopeMismatch) throw;
      cmp.pass = false;
      cmp.max_z = std::numeric_limits<double>::infinity();
      cmp.worst_entry = "scope";
    }
    all_pass = all_pass && cmp.pass;
    std::ostringstream z;
    z << std::fixed << std::setprecision(3) << cmp.max_z;
    out << std::setw(10) << b.position + 1 << std::setw(13) << cycle.order[b.position] + 1
        << std::setw(12) << z.str() << std::setw(16) << cmp.worst_entry
        << (cmp.pass ? "pass" : "FAIL") << '\n';
  }
  out << std::right;
  return all_pass ? kOk : kComparisonFailed;
}

int cmd_assemble(const Options& o, std::ostream& out, std::ostream& err) {
  const auto model = load_model(o.model_path);
  if (model.family() != Family::Gaussian) {
    err << "assemble needs a Gaussian model\n";
    return kUsage;
  }
  std::vector<GaussianDistribution> margins;
  if (!o.report.empty()) {
    const auto doc = read_json(o.report);
    for (const auto& entry : doc.at("stationary")) margins.push_back(gaussian_from_json(entry, model));
  } else {
    const auto cycle = resolve_cycle(model, o.cycle, mode_of(o), err);
    auto report = gaussian_icr_run(model, cycle, gaussian_config(o));
    if (!report.converged()) {
      err << "ICR did not converge (" << to_string(report.status) << ")\n";
      return kNonConvergent;
    }
    margins = std::move(report.stationary);
  }
  if (margins.size() != 3) {
    err << "assemble needs exactly three bivariate margins, got " << margins.size() << '\n';
    return kUsage;
  }
  const auto joint = assemble_trivariate(margins[0], margins[1], margins[2]);
  out << "assembled trivariate Gaussian:\n";
  print_gaussian(joint, model, out);
  if (!o.out_dir.empty()) {
    write_file(o.out_dir, "assembled.json", to_json(joint, model).dump(2) + "\n");
  }
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Iterative conditional replacement for conditionally specified models"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("model", o.model_path, "model JSON file")->required();
    sub->add_option("--cycle", o.cycle, "update order, comma-separated 1-based indices");
    sub->add_flag("--strict", o.strict, "require a proper subset at every step");
  };
  auto add_icr = [&](CLI::App* sub) {
    sub->add_option("--tol", o.tol, "convergence tolerance (KL/TV gap or Frobenius gap)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--max-cycles", o.max_cycles, "iteration limit")->check(CLI::PositiveNumber);
    sub->add_option("--track", o.track, "discrete stopping metric")
        ->check(CLI::IsMember({"kl", "tv"}));
    sub->add_option("--compat-tol", o.compat_tol, "tolerance for equal stationary joints")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", o.out_dir, "output directory");
  };

  auto* cycles = app.add_subcommand("cycles", "list permissible updating cycles");
  add_common(cycles);

  auto* icr = app.add_subcommand("icr", "run iterative conditional replacement");
  add_common(icr);
  add_icr(icr);

  auto* compat = app.add_subcommand("compat", "decide compatibility of full conditionals");
  add_common(compat);
  add_icr(compat);

  auto* sample = app.add_subcommand("sample", "run a Gibbs-type chain and summarize batches");
  add_common(sample);
  sample->add_option("--samples", o.chain.samples, "recorded cycles")->check(CLI::PositiveNumber);
  sample->add_option("--burn-in", o.chain.burn_in, "discarded cycles")->check(CLI::PositiveNumber);
  sample->add_option("--seed", o.chain.seed, "RNG seed");
  sample->add_option("--thin", o.chain.thin, "record every n-th cycle")->check(CLI::PositiveNumber);
  sample->add_option("--batches", o.chain.batches, "batches for standard errors")
      ->check(CLI::Range(2, 100000));
  sample->add_option("--against", o.against, "ICR report to compare against");
  sample->add_option("--out", o.out_dir, "output directory");

  auto* assemble = app.add_subcommand("assemble", "trivariate Gaussian from bivariate limits");
  add_common(assemble);
  assemble->add_option("--report", o.report, "ICR report holding the three limits");
  assemble->add_option("--tol", o.tol, "Frobenius convergence tolerance")
      ->check(CLI::PositiveNumber);
  assemble->add_option("--max-cycles", o.max_cycles, "iteration limit")
      ->check(CLI::PositiveNumber);
  assemble->add_option("--out", o.out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (cycles->parsed()) return cmd_cycles(o, out);
    if (icr->parsed()) return cmd_icr(o, out, err);
    if (compat->parsed()) return cmd_compat(o, out, err);
    if (sample->parsed()) return cmd_sample(o, out, err);
    if (assemble->parsed()) return cmd_assemble(o, out, err);
  } catch (const Exit& e) {
    return e.code;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace icr::cli
