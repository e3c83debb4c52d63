#pragma once

#include "sweep/problems.hpp"
#include "sweep/smoothed.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace sweep::io {

using json = nlohmann::json;

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(16) << v;
  return os.str();
}

/// Header "t,<prefix>_1..<prefix>_d"; one row per node.
inline void write_path_csv(const std::string& file, const Path& path, const std::string& prefix) {
  std::ofstream os(file, std::ios::binary);
  require(static_cast<bool>(os), ErrorKind::configuration, "cannot write " + file);
  os << "t";
  for (int i = 0; i < path.dim(); ++i) os << ',' << prefix << '_' << i + 1;
  os << '\n';
  for (int j = 0; j <= path.mesh.k; ++j) {
    os << format_double(path.mesh.t(j));
    for (int i = 0; i < path.dim(); ++i) os << ',' << format_double(path.values(i, j));
    os << '\n';
  }
}

/// Columns of values per row with a leading time column; used for interval data (eta, step records).
inline void write_table_csv(const std::string& file, const std::vector<std::string>& header,
                            const std::vector<std::vector<double>>& rows) {
  std::ofstream os(file, std::ios::binary);
  require(static_cast<bool>(os), ErrorKind::configuration, "cannot write " + file);
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << format_double(r[i]);
    os << '\n';
  }
}

inline std::vector<std::vector<double>> read_table_csv(const std::string& file, std::vector<std::string>* header = nullptr) {
  std::ifstream is(file);
  require(static_cast<bool>(is), ErrorKind::schema, "cannot read " + file);
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorKind::schema, file + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> head;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) head.push_back(cell);
  }
  require(!head.empty(), ErrorKind::schema, file + ": empty header");
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> r;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        r.push_back(std::stod(cell, &used));
        require(used == cell.size(), ErrorKind::schema, "");
      } catch (...) {
        throw Error(ErrorKind::schema, file + ": bad number on line " + std::to_string(lineno));
      }
    }
    require(r.size() == head.size(), ErrorKind::schema, file + ": wrong column count on line " + std::to_string(lineno));
    rows.push_back(std::move(r));
  }
  if (header) *header = head;
  return rows;
}

/// Reads a node path on a uniform mesh starting at t = 0.
inline Path read_path_csv(const std::string& file) {
  std::vector<std::string> head;
  auto rows = read_table_csv(file, &head);
  require(head[0] == "t", ErrorKind::schema, file + ": first column must be t");
  require(rows.size() >= 2, ErrorKind::schema, file + ": need at least two nodes");
  const int k = static_cast<int>(rows.size()) - 1;
  const int d = static_cast<int>(rows[0].size()) - 1;
  Mesh mesh(k, rows.back()[0]);
  require(mesh.T > 0.0, ErrorKind::schema, file + ": horizon must be positive");
  Mat V(d, k + 1);
  for (int j = 0; j <= k; ++j) {
    require(std::abs(rows[j][0] - mesh.t(j)) <= 1e-9 * mesh.T, ErrorKind::schema,
            file + ": time column is not a uniform mesh from 0");
    for (int i = 0; i < d; ++i) V(i, j) = rows[j][i + 1];
  }
  return Path(mesh, V);
}

// ---- JSON helpers

inline json to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v(i))) a.push_back(v(i));
    else a.push_back(nullptr);
  }
  return a;
}

inline json to_json(const Mat& M) {
  json a = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) a.push_back(to_json(Vec(M.row(r).transpose())));
  return a;
}

/// Columns of a node-indexed matrix as an array of vectors.
inline json columns_to_json(const Mat& M) {
  json a = json::array();
  for (Eigen::Index c = 0; c < M.cols(); ++c) a.push_back(to_json(Vec(M.col(c))));
  return a;
}

inline Vec vec_from(const json& j, const std::string& what, double null_value = kInf) {
  require(j.is_array(), ErrorKind::schema, what + " must be an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j[i].is_null()) v(static_cast<Eigen::Index>(i)) = null_value;
    else {
      require(j[i].is_number(), ErrorKind::schema, what + " must hold numbers");
      v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
  }
  return v;
}

inline Mat mat_from(const json& j, const std::string& what) {
  require(j.is_array() && !j.empty(), ErrorKind::schema, what + " must be a nonempty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Mat M(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    Vec row = vec_from(j[r], what);
    require(static_cast<std::size_t>(row.size()) == cols, ErrorKind::schema, what + " has ragged rows");
    M.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return M;
}

inline Mat columns_from(const json& j, Eigen::Index rows, const std::string& what) {
  require(j.is_array(), ErrorKind::schema, what + " must be an array");
  Mat M(rows, static_cast<Eigen::Index>(j.size()));
  for (std::size_t c = 0; c < j.size(); ++c) {
    Vec v = vec_from(j[c], what);
    require(v.size() == rows, ErrorKind::schema, what + " entry has wrong length");
    M.col(static_cast<Eigen::Index>(c)) = v;
  }
  return M;
}

inline const json& field(const json& j, const std::string& key, const std::string& where) {
  require(j.is_object() && j.contains(key), ErrorKind::schema, where + ": missing field '" + key + "'");
  return j.at(key);
}

inline std::string tag_of(const json& j, const std::string& where, const std::string& key = "tag") {
  const json& t = field(j, key, where);
  require(t.is_string(), ErrorKind::schema, where + ": '" + key + "' must be a string");
  return t.get<std::string>();
}

// ---- problem spec

struct SolverSettings {
  int k = 100;
  Mode mode = Mode::w12w12;
  std::vector<double> sigma_schedule = SmoothedOptions{}.sigma_schedule;
  std::string solver = "smoothed";
};

struct LoadedSpec {
  NamedInstance instance;
  SolverSettings settings;
  json document;
};

inline Mode parse_mode(const std::string& s) {
  if (s == "w12w12") return Mode::w12w12;
  if (s == "w12c") return Mode::w12c;
  throw Error(ErrorKind::schema, "mode must be w12w12 or w12c");
}

namespace detail {

inline ThetaSet parse_theta(const json& j, int s) {
  const std::string v = tag_of(j, "moving_set.theta", "variant");
  if (v == "orthant") return ThetaSet::orthant(s);
  if (v == "box") {
    Vec lo = vec_from(field(j, "lower", "theta"), "theta.lower", -kInf);
    Vec hi = vec_from(field(j, "upper", "theta"), "theta.upper", kInf);
    require(lo.size() == s && hi.size() == s, ErrorKind::schema, "box bounds must have length s");
    return ThetaSet::box(lo, hi);
  }
  if (v == "linear_image") {
    Mat A = mat_from(field(j, "A", "theta"), "theta.A");
    Mat G = mat_from(field(j, "G", "theta"), "theta.G");
    Vec g = vec_from(field(j, "g", "theta"), "theta.g");
    require(A.rows() == s, ErrorKind::schema, "theta.A must be s x s");
    return ThetaSet::linear_image(A, G, g, j.value("require_spd", false));
  }
  throw Error(ErrorKind::schema, "unsupported theta variant '" + v + "'");
}

inline FieldMap parse_psi(const json& j, int n, int m, int s) {
  const std::string t = tag_of(j, "moving_set.psi");
  FieldMap f;
  if (t == "affine") {
    f = FieldMap::linear(mat_from(field(j, "Ax", "psi"), "psi.Ax"), mat_from(field(j, "Bu", "psi"), "psi.Bu"),
                         vec_from(field(j, "c", "psi"), "psi.c"));
  } else if (t == "fixed_rows") {
    f = FieldMap::fixed_rows(mat_from(field(j, "U", "psi"), "psi.U"));
  } else if (t == "polyhedral") {
    f = FieldMap::polyhedral(n, s);
  } else if (t == "quadratic_example") {
    f = quadratic_example_field();
  } else {
    throw Error(ErrorKind::schema, "unsupported psi tag '" + t + "'");
  }
  require(f.n == n && f.m == m && f.s == s, ErrorKind::schema,
          "psi dimensions (" + std::to_string(f.n) + "," + std::to_string(f.m) + "," + std::to_string(f.s) +
              ") differ from dims");
  return f;
}

inline void parse_phi(const json& j, OcpProblem& p, int n) {
  const std::string t = tag_of(j, "cost.phi");
  if (t == "zero") {
    p.phi = [](const Vec&) { return 0.0; };
    p.phi_grad = [n](const Vec&) -> Vec { return Vec::Zero(n); };
  } else if (t == "quadratic") {
    Vec target = vec_from(field(j, "target", "phi"), "phi.target");
    require(target.size() == n, ErrorKind::schema, "phi.target must have length n");
    sweep::detail::set_quadratic_terminal(p, target);
  } else {
    throw Error(ErrorKind::schema, "unsupported phi tag '" + t + "'");
  }
}

inline void parse_ell(const json& j, OcpProblem& p, int n, int m) {
  const std::string t = tag_of(j, "cost.ell");
  if (t == "zero") {
    p.ell = [](double, const Vec&, const Vec&, const Vec&, const Vec&) { return 0.0; };
    p.ell_grad = [n, m](double, const Vec&, const Vec&, const Vec&, const Vec&) -> Vec { return Vec::Zero(2 * (n + m)); };
  } else if (t == "control_energy") {
    sweep::detail::set_control_energy(p);
  } else if (t == "remark45") {
    require(n == 1 && m == 1, ErrorKind::schema, "ell tag remark45 needs n = m = 1");
    auto ref = remark45().problem;
    p.ell = ref.ell;
    p.ell_grad = ref.ell_grad;
  } else {
    throw Error(ErrorKind::schema, "unsupported ell tag '" + t + "'");
  }
}

}  // namespace detail

/// Builds an instance from a spec document. Numerical data comes from the document; the optional
/// "reference" names a registry instance that supplies the known pair, certificate, shift map and initial guess.
inline LoadedSpec load_spec(const json& doc) {
  require(doc.is_object(), ErrorKind::schema, "spec must be a JSON object");
  require(doc.contains("schema") && doc["schema"].is_number_integer() && doc["schema"].get<int>() == 1,
          ErrorKind::schema, "spec must declare \"schema\": 1");
  const json& dims = field(doc, "dims", "spec");
  auto dim = [&](const char* key) {
    const json& d = field(dims, key, "dims");
    require(d.is_number_integer() && d.get<int>() >= 0, ErrorKind::schema, std::string("dims.") + key + " must be a nonnegative integer");
    return d.get<int>();
  };
  const int n = dim("n"), m = dim("m"), s = dim("s");
  require(n >= 1, ErrorKind::schema, "dims.n must be positive");

  LoadedSpec out;
  out.document = doc;
  NamedInstance& in = out.instance;
  in.id = doc.value("id", std::string("custom"));
  OcpProblem& p = in.problem;
  SweepingSystem& sys = p.system;

  const json& dyn = field(doc, "dynamics", "spec");
  const json& f = field(dyn, "f", "dynamics");
  const std::string ft = tag_of(f, "dynamics.f");
  if (ft == "zero") {
    sys.f = zero_drift;
    sys.f_jac = [n](double, const Vec&) -> Mat { return Mat::Zero(n, n); };
  } else if (ft == "affine") {
    Mat F = mat_from(field(f, "F", "dynamics.f"), "dynamics.f.F");
    Vec c = vec_from(field(f, "c", "dynamics.f"), "dynamics.f.c");
    require(F.rows() == n && F.cols() == n && c.size() == n, ErrorKind::schema, "dynamics.f has wrong shape");
    sys.f = [F, c](double, const Vec& x) -> Vec { return F * x + c; };
    sys.f_jac = [F](double, const Vec&) -> Mat { return F; };
    sys.L_f = F.norm();
  } else {
    throw Error(ErrorKind::schema, "unsupported dynamics.f tag '" + ft + "'");
  }
  if (dyn.contains("g") && !(dyn["g"].is_string() && dyn["g"].get<std::string>() == "identity")) {
    Mat G = mat_from(dyn["g"], "dynamics.g");
    require(G.rows() == n && G.cols() == n, ErrorKind::schema, "dynamics.g must be n x n");
    sys.g = G;
    sys.L_g = G.norm();
  }
  const json& ms = field(doc, "moving_set", "spec");
  sys.field = detail::parse_psi(field(ms, "psi", "moving_set"), n, m, s);
  sys.theta = detail::parse_theta(field(ms, "theta", "moving_set"), s);

  const json& init = field(doc, "initial", "spec");
  sys.x0 = vec_from(field(init, "x0", "initial"), "initial.x0");
  p.u0 = vec_from(field(init, "u0", "initial"), "initial.u0");
  require(sys.x0.size() == n, ErrorKind::schema, "initial.x0 must have length n");
  require(p.u0.size() == m, ErrorKind::schema, "initial.u0 must have length m");
  const json& T = field(doc, "T", "spec");
  require(T.is_number() && T.get<double>() > 0.0, ErrorKind::schema, "T must be a positive number");
  sys.T = T.get<double>();

  const json& cost = field(doc, "cost", "spec");
  detail::parse_phi(field(cost, "phi", "cost"), p, n);
  detail::parse_ell(field(cost, "ell", "cost"), p, n, m);

  if (doc.contains("solver")) {
    const json& sv = doc["solver"];
    require(sv.is_object(), ErrorKind::schema, "solver must be an object");
    if (sv.contains("k")) {
      require(sv["k"].is_number_integer() && sv["k"].get<int>() >= 1, ErrorKind::schema, "solver.k must be a positive integer");
      out.settings.k = sv["k"].get<int>();
    }
    if (sv.contains("mode")) out.settings.mode = parse_mode(sv["mode"].get<std::string>());
    if (sv.contains("sigma_schedule")) {
      Vec sg = vec_from(sv["sigma_schedule"], "solver.sigma_schedule");
      out.settings.sigma_schedule.assign(sg.data(), sg.data() + sg.size());
    }
    if (sv.contains("solver")) out.settings.solver = sv["solver"].get<std::string>();
  }
  p.mode = out.settings.mode;

  sys.validate();
  in.initial_guess = [u0 = p.u0](const Mesh& mesh) { return Path::constant(mesh, u0); };
  if (doc.contains("reference")) {
    const json& ref = doc["reference"];
    std::string id = tag_of(ref, "reference", "instance");
    NamedInstance reg = instance(id);
    require(reg.problem.n() == n && reg.problem.m() == m && reg.problem.system.field.s == s, ErrorKind::schema,
            "reference instance dimensions differ from dims");
    in.known_solution = reg.known_solution;
    in.known_certificate = reg.known_certificate;
    in.vartheta = reg.vartheta;
    in.initial_guess = reg.initial_guess;
    in.notes = reg.notes;
  }
  if (doc.contains("solver") && doc["solver"].contains("anchor")) {
    const json& a = doc["solver"]["anchor"];
    require(in.known_solution.has_value(), ErrorKind::schema, "anchor needs a reference pair");
    Anchor an;
    Mesh fine(std::max(1000, 4 * out.settings.k), sys.T);
    an.x = in.known_solution->state(fine);
    an.u = in.known_solution->control(fine);
    an.rho = a.value("rho", 0.0);
    an.epsilon = a.contains("epsilon") && !a["epsilon"].is_null() ? a["epsilon"].get<double>() : kInf;
    p.anchor = an;
  }
  p.validate();
  return out;
}

inline LoadedSpec load_spec_file(const std::string& file) {
  std::ifstream is(file);
  require(static_cast<bool>(is), ErrorKind::schema, "cannot read " + file);
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::schema, std::string("malformed JSON: ") + e.what());
  }
  try {
    return load_spec(doc);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::schema, e.what());
  }
}

/// Spec document for a registry instance.
inline json export_instance(const std::string& id, const SolverSettings& settings = {}) {
  NamedInstance in = instance(id);
  const auto& sys = in.problem.system;
  json doc;
  doc["schema"] = 1;
  doc["id"] = id;
  doc["dims"] = {{"n", sys.n()}, {"m", sys.m()}, {"s", sys.field.s}};
  doc["dynamics"] = {{"f", {{"tag", "zero"}}}, {"g", "identity"}};
  json psi, theta;
  if (id == "remark45") {
    psi = {{"tag", "affine"}, {"Ax", to_json(Mat(Mat::Ones(1, 1)))}, {"Bu", to_json(Mat(Mat::Ones(1, 1)))}, {"c", to_json(Vec(Vec::Zero(1)))}};
    theta = {{"variant", "orthant"}};
  } else if (id == "counterexample53") {
    psi = {{"tag", "fixed_rows"}, {"U", to_json(Mat(Mat::Identity(2, 2)))}};
    theta = {{"variant", "orthant"}};
  } else if (id == "elastoplastic61") {
    psi = {{"tag", "affine"}, {"Ax", to_json(Mat(Mat::Ones(1, 1)))}, {"Bu", to_json(Mat(Mat::Ones(1, 1)))}, {"c", to_json(Vec(Vec::Zero(1)))}};
    theta = {{"variant", "linear_image"}, {"A", to_json(sys.theta.A)}, {"G", to_json(sys.theta.G)}, {"g", to_json(sys.theta.g)},
             {"require_spd", true}};
  } else {
    psi = {{"tag", "quadratic_example"}};
    theta = {{"variant", "orthant"}};
  }
  doc["moving_set"] = {{"psi", psi}, {"theta", theta}};
  Vec target = -in.problem.phi_grad(Vec::Zero(sys.n()));
  doc["cost"] = {{"phi", {{"tag", "quadratic"}, {"target", to_json(target)}}},
                 {"ell", {{"tag", id == "remark45" ? "remark45" : "control_energy"}}}};
  doc["initial"] = {{"x0", to_json(sys.x0)}, {"u0", to_json(in.problem.u0)}};
  doc["T"] = sys.T;
  doc["solver"] = {{"k", settings.k},
                   {"mode", to_string(settings.mode)},
                   {"sigma_schedule", settings.sigma_schedule},
                   {"solver", settings.solver}};
  doc["reference"] = {{"instance", id}};
  return doc;
}

// ---- certificates and reports

inline json certificate_to_json(const Certificate& c) {
  json j;
  j["schema"] = 1;
  j["k"] = c.mesh.k;
  j["T"] = c.mesh.T;
  j["lambda"] = c.lambda;
  j["p"] = columns_to_json(c.p);
  json atoms = json::array();
  for (const auto& a : c.gamma.atoms) atoms.push_back({{"node", a.node}, {"weight", to_json(a.weight)}});
  j["gamma"] = {{"density", columns_to_json(c.gamma.density)}, {"atoms", atoms}};
  if (c.q.size()) j["q"] = columns_to_json(c.q);
  if (c.nu.size()) j["nu"] = columns_to_json(c.nu);
  return j;
}

inline Certificate certificate_from_json(const json& j, const OcpProblem& p, const Mesh& mesh) {
  const int nm = p.n() + p.m(), s = p.system.field.s;
  Certificate c;
  c.mesh = mesh;
  require(field(j, "k", "certificate").get<int>() == mesh.k, ErrorKind::schema, "certificate mesh differs from the solution mesh");
  c.lambda = field(j, "lambda", "certificate").get<double>();
  require(c.lambda >= 0.0, ErrorKind::schema, "lambda must be nonnegative");
  c.p = columns_from(field(j, "p", "certificate"), nm, "certificate.p");
  require(c.p.cols() == mesh.k + 1, ErrorKind::schema, "certificate.p needs k+1 nodes");
  const json& g = field(j, "gamma", "certificate");
  c.gamma.density = columns_from(field(g, "density", "gamma"), s, "gamma.density");
  require(c.gamma.density.cols() == mesh.k, ErrorKind::schema, "gamma.density needs k intervals");
  if (g.contains("atoms"))
    for (const auto& a : g["atoms"]) {
      Atom at{field(a, "node", "atom").get<int>(), vec_from(field(a, "weight", "atom"), "atom.weight")};
      require(at.node >= 0 && at.node <= mesh.k && at.weight.size() == s, ErrorKind::schema, "bad gamma atom");
      c.gamma.atoms.push_back(at);
    }
  if (j.contains("q")) c.q = columns_from(j["q"], nm, "certificate.q");
  if (j.contains("nu")) c.nu = columns_from(j["nu"], s, "certificate.nu");
  return c;
}

inline json report_to_json(const ResidualReport& r) {
  json checks = json::object();
  for (const auto& c : r.checks) {
    json e = {{"residual", c.residual}, {"tolerance", c.tolerance}, {"pass", c.pass}};
    if (!c.note.empty()) e["note"] = c.note;
    checks[c.name] = e;
  }
  return {{"checks", checks}, {"pass", r.all_pass()}};
}

inline json solve_report_to_json(const SolveReport& r) {
  auto num = [](double v) -> json { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"schema", 1},
          {"cost", num(r.cost)},
          {"complementarity", num(r.complementarity)},
          {"stationarity", num(r.stationarity)},
          {"dynamics", num(r.dynamics)},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"sigma_trace", r.sigma_trace},
          {"stage_costs", r.stage_costs},
          {"cost_trace", r.cost_trace},
          {"message", r.message}};
}

inline void write_json(const std::string& file, const json& j) {
  std::ofstream os(file, std::ios::binary);
  require(static_cast<bool>(os), ErrorKind::configuration, "cannot write " + file);
  os << j.dump(2) << '\n';
}

inline json read_json(const std::string& file) {
  std::ifstream is(file);
  require(static_cast<bool>(is), ErrorKind::schema, "cannot read " + file);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::schema, std::string("malformed JSON in ") + file + ": " + e.what());
  }
}

}  // namespace sweep::io
