#include "icr/io.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "tensor_index.hpp"

namespace icr {

using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& what) {
  throw Error(ErrorCode::InvalidModel, what);
}

const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) invalid(where + ": missing \"" + key + "\"");
  return j.at(key);
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) invalid(where + ": expected a number");
  return j.get<double>();
}

VarSet names_to_set(const json& names, const std::map<std::string, VarIndex>& index,
                    const std::string& where) {
  if (!names.is_array()) invalid(where + ": expected a list of variable names");
  std::vector<VarIndex> members;
  for (const auto& n : names) {
    if (!n.is_string()) invalid(where + ": variable names must be strings");
    auto it = index.find(n.get<std::string>());
    if (it == index.end()) invalid(where + ": unknown variable '" + n.get<std::string>() + "'");
    members.push_back(it->second);
  }
  try {
    return VarSet(std::move(members));
  } catch (const Error&) {
    invalid(where + ": duplicate variable");
  }
}

json set_to_names(const VarSet& set, const ConditionalModel& model) {
  json out = json::array();
  for (VarIndex v : set) out.push_back(model.variables()[v].name);
  return out;
}

/// Flattens a nested array of the given shape in row-major order.
void flatten(const json& j, std::span<const std::size_t> shape, std::vector<double>& out,
             const std::string& where) {
  if (shape.empty()) {
    out.push_back(number(j, where));
    return;
  }
  if (!j.is_array() || j.size() != shape[0]) {
    invalid(where + ": table level has " + std::to_string(j.is_array() ? j.size() : 0) +
            " entries, expected " + std::to_string(shape[0]));
  }
  for (const auto& item : j) flatten(item, shape.subspan(1), out, where);
}

json nest(std::span<const double> flat, std::span<const std::size_t> shape) {
  if (shape.empty()) return flat[0];
  json out = json::array();
  const std::size_t stride = flat.size() / shape[0];
  for (std::size_t i = 0; i < shape[0]; ++i) {
    out.push_back(nest(flat.subspan(i * stride, stride), shape.subspan(1)));
  }
  return out;
}

Eigen::MatrixXd matrix(const json& j, Eigen::Index rows, Eigen::Index cols,
                       const std::string& where) {
  Eigen::MatrixXd m(rows, cols);
  if (rows == 1 && cols == 1 && j.is_number()) {
    m(0, 0) = j.get<double>();
    return m;
  }
  if (cols == 0) {
    if (!j.is_array()) invalid(where + ": expected a matrix");
    return m;
  }
  if (!j.is_array() || Eigen::Index(j.size()) != rows) {
    invalid(where + ": expected " + std::to_string(rows) + " rows");
  }
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[std::size_t(r)];
    if (!row.is_array() || Eigen::Index(row.size()) != cols) {
      invalid(where + ": row " + std::to_string(r) + " needs " + std::to_string(cols) +
              " entries");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = number(row[std::size_t(c)], where);
  }
  return m;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

std::string names_of(const VarSet& set, const ConditionalModel& model) {
  std::string out;
  for (std::size_t k = 0; k < set.size(); ++k) {
    if (k) out += ",";
    out += model.variables()[set[k]].name;
  }
  return out;
}

json cycle_to_json(const UpdatingCycle& cycle) {
  json out = json::array();
  for (std::size_t i : cycle.order) out.push_back(i + 1);
  return out;
}

json position_header(std::size_t position, const UpdatingCycle& cycle) {
  return json{{"position", position + 1}, {"conditional", cycle.order[position] + 1}};
}

}  // namespace

ConditionalModel parse_model(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError,
                "malformed JSON at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  return model_from_json(doc);
}

ConditionalModel model_from_json(const json& doc) {
  if (!doc.is_object()) invalid("model document must be a JSON object");
  const auto& family_field = field(doc, "family", "model");
  if (!family_field.is_string()) invalid("model: \"family\" must be a string");
  const std::string family = family_field.get<std::string>();
  if (family != "discrete" && family != "gaussian") {
    invalid("model: family must be \"discrete\" or \"gaussian\"");
  }

  std::vector<VariableSpec> variables;
  std::map<std::string, VarIndex> index;
  const auto& vars = field(doc, "variables", "model");
  if (!vars.is_array()) invalid("model: \"variables\" must be a list");
  for (const auto& v : vars) {
    const std::string where = "variable " + std::to_string(variables.size() + 1);
    VariableSpec spec;
    const auto& name = field(v, "name", where);
    if (!name.is_string()) invalid(where + ": name must be a string");
    spec.name = name.get<std::string>();
    const auto& kind = field(v, "kind", where);
    if (kind == "discrete") {
      spec.kind = VariableSpec::Kind::Discrete;
      const auto& size = field(v, "support_size", where);
      if (!size.is_number_integer() || size.get<long long>() < 0) {
        invalid(where + ": support_size must be a non-negative integer");
      }
      spec.support_size = size.get<std::size_t>();
    } else if (kind == "continuous") {
      spec.kind = VariableSpec::Kind::Continuous;
    } else {
      invalid(where + ": kind must be \"discrete\" or \"continuous\"");
    }
    index.emplace(spec.name, variables.size());
    variables.push_back(std::move(spec));
  }

  const auto& conds = field(doc, "conditionals", "model");
  if (!conds.is_array()) invalid("model: \"conditionals\" must be a list");

  if (family == "discrete") {
    std::vector<DiscreteConditional> out;
    for (const auto& c : conds) {
      const std::string where = "conditional " + std::to_string(out.size() + 1);
      const VarSet target = names_to_set(field(c, "target", where), index, where);
      const VarSet parents = names_to_set(field(c, "parents", where), index, where);
      std::vector<std::size_t> tdims, pdims;
      for (VarIndex v : target) tdims.push_back(variables[v].support_size);
      for (VarIndex v : parents) pdims.push_back(variables[v].support_size);
      std::vector<std::size_t> shape = pdims;
      shape.insert(shape.end(), tdims.begin(), tdims.end());
      std::vector<double> table;
      flatten(field(c, "table", where), shape, table, where);
      out.emplace_back(target, std::move(tdims), parents, std::move(pdims), std::move(table));
    }
    return ConditionalModel(std::move(variables), std::move(out));
  }

  std::vector<GaussianConditional> out;
  for (const auto& c : conds) {
    const std::string where = "conditional " + std::to_string(out.size() + 1);
    const VarSet target = names_to_set(field(c, "target", where), index, where);
    const VarSet parents = names_to_set(field(c, "parents", where), index, where);
    const auto a = Eigen::Index(target.size());
    const auto b = Eigen::Index(parents.size());
    Eigen::MatrixXd coef = Eigen::MatrixXd::Zero(a, b);
    if (c.contains("coef")) coef = matrix(c.at("coef"), a, b, where + " coef");
    else if (b > 0) invalid(where + ": missing \"coef\"");
    Eigen::VectorXd intercept = Eigen::VectorXd::Zero(a);
    if (c.contains("intercept")) {
      const auto& j = c.at("intercept");
      if (!j.is_array() || Eigen::Index(j.size()) != a) {
        invalid(where + ": intercept needs one entry per target");
      }
      for (Eigen::Index i = 0; i < a; ++i) intercept(i) = number(j[std::size_t(i)], where);
    }
    Eigen::MatrixXd cond_cov = matrix(field(c, "cond_cov", where), a, a, where + " cond_cov");
    out.emplace_back(target, parents, std::move(coef), std::move(intercept), std::move(cond_cov));
  }
  return ConditionalModel(std::move(variables), std::move(out));
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return json::parse(buffer.str());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": malformed JSON at byte " +
                                           std::to_string(e.byte) + ": " + e.what());
  }
}

ConditionalModel load_model(const std::filesystem::path& path) {
  return model_from_json(read_json(path));
}

json model_to_json(const ConditionalModel& model) {
  json doc;
  doc["family"] = model.family() == Family::Discrete ? "discrete" : "gaussian";
  json vars = json::array();
  for (const auto& v : model.variables()) {
    json spec{{"name", v.name}};
    if (v.kind == VariableSpec::Kind::Discrete) {
      spec["kind"] = "discrete";
      spec["support_size"] = v.support_size;
    } else {
      spec["kind"] = "continuous";
    }
    vars.push_back(spec);
  }
  doc["variables"] = vars;
  json conds = json::array();
  for (std::size_t i = 0; i < model.size(); ++i) {
    json c{{"target", set_to_names(model.target(i), model)},
           {"parents", set_to_names(model.parents(i), model)}};
    if (model.family() == Family::Discrete) {
      const auto& f = model.discrete()[i];
      std::vector<std::size_t> shape = f.parent_dims();
      shape.insert(shape.end(), f.target_dims().begin(), f.target_dims().end());
      c["table"] = nest(f.table(), shape);
    } else {
      const auto& f = model.gaussian()[i];
      c["coef"] = matrix_to_json(f.coef());
      c["intercept"] = vector_to_json(f.intercept());
      c["cond_cov"] = matrix_to_json(f.cond_cov());
    }
    conds.push_back(c);
  }
  doc["conditionals"] = conds;
  return doc;
}

json to_json(const DiscreteDistribution& d, const ConditionalModel& model) {
  return json{{"scope", set_to_names(d.scope(), model)},
              {"dims", d.dims()},
              {"table", std::vector<double>(d.table().begin(), d.table().end())}};
}

json to_json(const GaussianDistribution& g, const ConditionalModel& model) {
  return json{{"scope", set_to_names(g.scope(), model)},
              {"mean", vector_to_json(g.mean())},
              {"covariance", matrix_to_json(g.covariance())}};
}

DiscreteDistribution discrete_from_json(const json& j, const ConditionalModel& model) {
  std::map<std::string, VarIndex> index;
  for (std::size_t i = 0; i < model.dimension(); ++i) index[model.variables()[i].name] = i;
  const VarSet scope = names_to_set(field(j, "scope", "distribution"), index, "distribution");
  const auto dims = model.dims_of(scope);
  std::vector<double> table;
  const auto& t = field(j, "table", "distribution");
  if (!t.is_array()) invalid("distribution: table must be a list");
  for (const auto& v : t) table.push_back(number(v, "distribution"));
  return DiscreteDistribution(scope, dims, std::move(table));
}

GaussianDistribution gaussian_from_json(const json& j, const ConditionalModel& model) {
  std::map<std::string, VarIndex> index;
  for (std::size_t i = 0; i < model.dimension(); ++i) index[model.variables()[i].name] = i;
  const VarSet scope = names_to_set(field(j, "scope", "distribution"), index, "distribution");
  const auto k = Eigen::Index(scope.size());
  const auto& m = field(j, "mean", "distribution");
  if (!m.is_array() || Eigen::Index(m.size()) != k) invalid("distribution: mean size");
  Eigen::VectorXd mean(k);
  for (Eigen::Index i = 0; i < k; ++i) mean(i) = number(m[std::size_t(i)], "distribution");
  return GaussianDistribution(scope, mean,
                              matrix(field(j, "covariance", "distribution"), k, k,
                                     "distribution covariance"));
}

json report_to_json(const IcrReport& report, const ConditionalModel& model) {
  json doc;
  doc["version"] = kFormatVersion;
  doc["family"] = "discrete";
  doc["cycle"] = cycle_to_json(report.cycle);
  doc["update_order"] = target_label(model, report.cycle.order);
  doc["converged"] = report.converged;
  doc["status"] = report.converged ? "converged" : "max_cycles";
  doc["cycles_used"] = report.cycles_used;
  doc["compatible"] = report.compatible ? json(*report.compatible) : json(nullptr);
  json limits = json::array();
  for (std::size_t i = 0; i < report.stationary.size(); ++i) {
    json entry = position_header(i, report.cycle);
    entry.update(to_json(report.stationary[i], model));
    limits.push_back(entry);
  }
  doc["stationary"] = limits;
  return doc;
}

json report_to_json(const GaussianIcrReport& report, const ConditionalModel& model) {
  json doc;
  doc["version"] = kFormatVersion;
  doc["family"] = "gaussian";
  doc["cycle"] = cycle_to_json(report.cycle);
  doc["update_order"] = target_label(model, report.cycle.order);
  doc["converged"] = report.converged();
  doc["status"] = to_string(report.status);
  doc["cycles_used"] = report.cycles_used;
  doc["compatible"] = report.compatible ? json(*report.compatible) : json(nullptr);
  json limits = json::array();
  for (std::size_t i = 0; i < report.stationary.size(); ++i) {
    json entry = position_header(i, report.cycle);
    entry.update(to_json(report.stationary[i], model));
    limits.push_back(entry);
  }
  doc["stationary"] = limits;
  return doc;
}

std::vector<std::size_t> report_cycle(const json& report) {
  const auto& c = field(report, "cycle", "report");
  if (!c.is_array()) invalid("report: cycle must be a list");
  std::vector<std::size_t> order;
  for (const auto& v : c) {
    if (!v.is_number_integer() || v.get<long long>() < 1) invalid("report: bad cycle entry");
    order.push_back(v.get<std::size_t>() - 1);
  }
  return order;
}

json batches_to_json(const std::vector<BatchSummary>& batches, const ConditionalModel& model) {
  json out = json::array();
  for (const auto& b : batches) {
    json entry{{"position", b.position + 1},
               {"scope", set_to_names(b.scope, model)},
               {"count", b.count}};
    if (b.family == Family::Gaussian) {
      entry["empirical_mean"] = vector_to_json(b.empirical_mean);
      entry["mean_se"] = vector_to_json(b.mean_se);
      entry["empirical_cov"] = matrix_to_json(b.empirical_cov);
      entry["cov_se"] = matrix_to_json(b.cov_se);
    } else {
      entry["dims"] = b.empirical_table->dims();
      entry["empirical_table"] = std::vector<double>(b.empirical_table->table().begin(),
                                                     b.empirical_table->table().end());
      entry["table_se"] = b.table_se;
    }
    out.push_back(entry);
  }
  return out;
}

void write_batches_csv(const std::vector<BatchSummary>& batches,
                       const ConditionalModel& model, std::ostream& out) {
  out << "position,entry,estimate,standard_error\n" << std::setprecision(17);
  for (const auto& b : batches) {
    const auto& names = model.variables();
    if (b.family == Family::Gaussian) {
      for (std::size_t r = 0; r < b.scope.size(); ++r) {
        out << b.position + 1 << ",mean[" << names[b.scope[r]].name << "],"
            << b.empirical_mean(Eigen::Index(r)) << ',' << b.mean_se(Eigen::Index(r)) << '\n';
      }
      for (std::size_t r = 0; r < b.scope.size(); ++r) {
        for (std::size_t c = r; c < b.scope.size(); ++c) {
          out << b.position + 1 << ",cov[" << names[b.scope[r]].name << ';'
              << names[b.scope[c]].name << "]," << b.empirical_cov(Eigen::Index(r), Eigen::Index(c))
              << ',' << b.cov_se(Eigen::Index(r), Eigen::Index(c)) << '\n';
        }
      }
    } else {
      const auto& t = *b.empirical_table;
      for (std::size_t c = 0; c < t.size(); ++c) {
        out << b.position + 1 << ",p[" << names_of(b.scope, model) << "=" << c << "]," << t[c]
            << ',' << b.table_se[c] << '\n';
      }
    }
  }
}

}  // namespace icr
