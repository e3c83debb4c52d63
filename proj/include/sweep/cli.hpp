#pragma once

#include "sweep/io.hpp"
#include "sweep/shooting.hpp"
#include "sweep/smoothed.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <thread>

#include "CLI11.hpp"

namespace sweep::cli {

enum Exit : int { ok = 0, failure = 1, schema = 2, simulation = 3, nonconvergence = 4, certify_fail = 5 };

struct Overrides {
  std::optional<int> k;
  std::optional<double> tol;
  std::optional<std::string> mode;
  std::optional<std::string> solver;
  std::vector<double> sigma;
};

inline io::LoadedSpec load(const std::string& spec, const Overrides& o) {
  io::LoadedSpec ls = io::load_spec_file(spec);
  if (o.k) {
    require(*o.k >= 1, ErrorKind::schema, "--k must be positive");
    ls.settings.k = *o.k;
  }
  if (o.mode) ls.settings.mode = io::parse_mode(*o.mode);
  if (o.solver) ls.settings.solver = *o.solver;
  if (!o.sigma.empty()) ls.settings.sigma_schedule = o.sigma;
  require(ls.settings.solver == "smoothed" || ls.settings.solver == "shooting", ErrorKind::schema,
          "solver must be smoothed or shooting");
  ls.instance.problem.mode = ls.settings.mode;
  return ls;
}

inline int exit_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::schema:
    case ErrorKind::configuration:
    case ErrorKind::unknown_instance:
    case ErrorKind::precondition:
    case ErrorKind::not_in_cone:
    case ErrorKind::surjectivity:
    case ErrorKind::domain: return schema;
    case ErrorKind::simulation:
    case ErrorKind::projection_failure: return simulation;
    case ErrorKind::numerical_failure: return nonconvergence;
    default: return failure;
  }
}

/// Prints the message and, when a location is known, writes it as error.json there.
inline int report_error(const std::string& error_file, int code, const std::string& kind, const std::string& message) {
  std::cerr << "error: " << message << '\n';
  if (!error_file.empty()) {
    try {
      std::filesystem::path f(error_file);
      if (f.has_parent_path()) std::filesystem::create_directories(f.parent_path());
      io::write_json(error_file, {{"schema", 1}, {"exit_code", code}, {"kind", kind}, {"message", message}});
    } catch (...) {
    }
  }
  return code;
}

template <class F>
int guarded(const std::string& error_file, F&& body, int error_code_override = -1) {
  try {
    return body();
  } catch (const Error& e) {
    int code = error_code_override >= 0 && exit_for(e.kind()) != schema ? error_code_override : exit_for(e.kind());
    return report_error(error_file, code, to_string(e.kind()), e.what());
  } catch (const std::exception& e) {
    return report_error(error_file, failure, "internal", e.what());
  }
}

inline std::string in_dir(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline int cmd_simulate(const std::string& spec, const std::string& control_csv, const std::string& out_dir,
                        const Overrides& o = {}) {
  std::string err = in_dir(out_dir, "error.json");
  io::LoadedSpec ls;
  Path u;
  int rc = guarded(err, [&] {
    ls = load(spec, o);
    u = io::read_path_csv(control_csv);
    require(u.dim() == ls.instance.problem.m(), ErrorKind::schema, "control CSV has wrong column count");
    require(std::abs(u.mesh.T - ls.instance.problem.system.T) <= 1e-9 * u.mesh.T, ErrorKind::schema,
            "control CSV horizon differs from T");
    return static_cast<int>(ok);
  });
  if (rc != ok) return rc;
  return guarded(
      err,
      [&] {
        Simulation sim = simulate(ls.instance.problem.system, u);
        std::filesystem::create_directories(out_dir);
        io::write_path_csv(in_dir(out_dir, "state.csv"), sim.state, "x");
        const int s = ls.instance.problem.system.field.s;
        std::vector<std::string> head{"t"};
        for (int i = 0; i < s; ++i) head.push_back("eta_" + std::to_string(i + 1));
        head.push_back("residual");
        std::vector<std::vector<double>> rows;
        for (int j = 0; j < u.mesh.k; ++j) {
          std::vector<double> r{u.mesh.t(j + 1)};
          for (int i = 0; i < s; ++i) r.push_back(sim.records[j].eta(i));
          r.push_back(sim.records[j].projection_residual);
          rows.push_back(r);
        }
        io::write_table_csv(in_dir(out_dir, "steps.csv"), head, rows);
        return static_cast<int>(ok);
      },
      simulation);
}

inline void write_solution(const std::string& out_dir, const Solution& sol) {
  std::filesystem::create_directories(out_dir);
  io::write_path_csv(in_dir(out_dir, "x.csv"), sol.z.state(), "x");
  io::write_path_csv(in_dir(out_dir, "u.csv"), sol.z.control(), "u");
  const Mesh& mesh = sol.z.mesh;
  std::vector<std::string> head{"t"};
  for (Eigen::Index i = 0; i < sol.z.eta.rows(); ++i) head.push_back("eta_" + std::to_string(i + 1));
  std::vector<std::vector<double>> rows;
  for (int j = 0; j < mesh.k; ++j) {
    std::vector<double> r{mesh.t(j)};
    for (Eigen::Index i = 0; i < sol.z.eta.rows(); ++i) r.push_back(sol.z.eta(i, j));
    rows.push_back(r);
  }
  io::write_table_csv(in_dir(out_dir, "eta.csv"), head, rows);
  io::write_json(in_dir(out_dir, "report.json"), io::solve_report_to_json(sol.report));
}

inline Solution run_solver(const io::LoadedSpec& ls, int k, const Overrides& o) {
  const NamedInstance& in = ls.instance;
  Mesh mesh(k, in.problem.system.T);
  Path guess = in.initial_guess(mesh);
  if (ls.settings.solver == "shooting") {
    ShootingOptions so;
    if (o.tol) so.tol = *o.tol;
    return solve_shooting(in.problem, k, guess, so);
  }
  Transcription tr = transcribe(in.problem, k);
  DiscreteDecision warm;
  try {
    warm = warm_start_from_control(in.problem, guess);
  } catch (const Error& e) {
    throw Error(ErrorKind::simulation, std::string("warm start: ") + e.message());
  }
  SmoothedOptions so;
  so.sigma_schedule = ls.settings.sigma_schedule;
  if (o.tol) so.tol_stat = *o.tol;
  return solve_smoothed(tr, warm, so);
}

inline int cmd_solve(const std::string& spec, const std::string& out_dir, const Overrides& o = {}) {
  std::string err = in_dir(out_dir, "error.json");
  return guarded(err, [&] {
    io::LoadedSpec ls = load(spec, o);
    Solution sol = run_solver(ls, ls.settings.k, o);
    write_solution(out_dir, sol);
    if (!sol.report.converged) {
      std::cerr << "solver did not converge: " << sol.report.message << '\n';
      io::write_json(err, {{"schema", 1}, {"exit_code", 4}, {"kind", "nonconvergence"}, {"message", sol.report.message}});
      return static_cast<int>(nonconvergence);
    }
    return static_cast<int>(ok);
  });
}

inline int cmd_certify(const std::string& spec, const std::string& solution_dir, const std::string& out,
                       const std::string& certificate = "", const Overrides& o = {}) {
  std::string err = out + ".error.json";
  return guarded(err, [&] {
    io::LoadedSpec ls = load(spec, o);
    const OcpProblem& p = ls.instance.problem;
    Path x = io::read_path_csv(in_dir(solution_dir, "x.csv"));
    Path u = io::read_path_csv(in_dir(solution_dir, "u.csv"));
    require(x.mesh == u.mesh, ErrorKind::schema, "x.csv and u.csv have different meshes");
    require(x.dim() == p.n() && u.dim() == p.m(), ErrorKind::schema, "solution CSVs have wrong column counts");
    Tolerances tol;
    if (o.tol) tol.residual = *o.tol;
    io::json doc;
    doc["schema"] = 1;
    Certificate cert;
    if (certificate.empty()) {
      auto as = assemble_certificate(p, x, u);
      cert = as.cert;
      doc["assembled"] = {{"residual", as.residual}, {"non_unique", as.non_unique}, {"endpoint_sign_ok", as.endpoint_sign_ok}};
    } else if (certificate == "known") {
      require(ls.instance.has_certificate(), ErrorKind::schema, "the spec has no known certificate");
      cert = ls.instance.known_certificate(x.mesh);
    } else {
      cert = io::certificate_from_json(io::read_json(certificate), p, x.mesh);
    }
    ResidualReport rep = residual_continuous_EL(p, x, u, cert, tol);
    io::json r = io::report_to_json(rep);
    doc["checks"] = r["checks"];
    doc["pass"] = r["pass"];
    const auto& theta = p.system.theta;
    if (theta.kind == ThetaSet::Kind::orthant) {
      auto F = sweep::detail::frames(p, x, u, cert);
      FieldMap fm = p.system.composed();
      int unbounded = 0;
      for (int j = 0; j < F.k; ++j) {
        Vec pv = F.qbar.col(j).head(F.n) - cert.lambda * F.sub.col(j).segment(F.n + F.m, F.n);
        if (conventional_hamiltonian(fm, theta, x.node(j), u.node(j), pv).unbounded) ++unbounded;
      }
      doc["conventional_hamiltonian"] = {{"unbounded", unbounded > 0},
                                         {"value", unbounded > 0 ? io::json("+inf") : io::json(0.0)},
                                         {"intervals_unbounded", unbounded}};
      auto suff = conventional_sufficiency_check(p, x, u, cert, tol);
      int checked = 0, skipped = 0, vacuous = 0;
      for (const auto& row : suff.rows) {
        if (row.status == SufficiencyRow::Status::checked) ++checked;
        else if (row.status == SufficiencyRow::Status::skipped) ++skipped;
        else ++vacuous;
      }
      doc["conventional_sufficiency"] = {{"hypothesis_met", suff.hypothesis_met}, {"pass", suff.pass},
                                         {"checked", checked}, {"skipped", skipped}, {"vacuous", vacuous}};
    }
    if (theta.rows_linear()) {
      auto mc = max_condition_check(p, x, u, cert, tol.residual);
      doc["max_condition_detail"] = {{"worst", mc.worst}, {"pass", mc.pass}, {"intervals", mc.rows.size()}};
    }
    std::filesystem::path op(out);
    if (op.has_parent_path()) std::filesystem::create_directories(op.parent_path());
    io::write_json(out, doc);
    return rep.all_pass() ? static_cast<int>(ok) : static_cast<int>(certify_fail);
  });
}

inline std::vector<int> parse_ks(const std::string& s) {
  std::vector<int> ks;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      int k = std::stoi(item, &used);
      require(used == item.size() && k >= 1, ErrorKind::schema, "");
      ks.push_back(k);
    } catch (...) {
      throw Error(ErrorKind::schema, "ks must be a comma list of positive integers");
    }
  }
  require(!ks.empty(), ErrorKind::schema, "ks is empty");
  for (std::size_t i = 1; i < ks.size(); ++i) require(ks[i] > ks[i - 1], ErrorKind::schema, "ks must increase");
  return ks;
}

inline unsigned thread_cap(std::size_t jobs) {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SWEEP_THREADS")) {
    try {
      int v = std::stoi(env);
      if (v >= 1) n = static_cast<unsigned>(v);
    } catch (...) {
    }
  }
  return static_cast<unsigned>(std::min<std::size_t>(n, jobs));
}

/// method "approximate": constructive approximation of the reference pair; "solve": discrete optimal solutions.
inline int cmd_converge(const std::string& spec, const std::string& ks_list, const std::string& out,
                        const std::string& method = "approximate", const Overrides& o = {}) {
  std::string err = out + ".error.json";
  return guarded(err, [&] {
    io::LoadedSpec ls = load(spec, o);
    std::vector<int> ks = parse_ks(ks_list);
    const NamedInstance& in = ls.instance;
    require(in.known_solution.has_value(), ErrorKind::schema, "converge needs a reference pair");
    require(method == "approximate" || method == "solve", ErrorKind::schema, "method must be approximate or solve");
    require(method == "solve" || static_cast<bool>(in.vartheta), ErrorKind::schema, "approximation needs a shift map");
    const auto& sys = in.problem.system;
    Mesh fine(std::max(4000, 8 * ks.back()), sys.T);
    Path xr = in.known_solution->state(fine), ur = in.known_solution->control(fine);
    DiscreteDecision zr{fine, xr.values, ur.values, Mat()};
    const double J_ref = cost_eval(in.problem, zr);

    std::vector<std::vector<double>> rows(ks.size());
    std::vector<std::string> errors(ks.size());
    bool nonconv = false;
    std::mutex mtx;
    std::size_t next = 0;
    auto worker = [&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard<std::mutex> lk(mtx);
          if (next >= ks.size()) return;
          i = next++;
        }
        try {
          const int k = ks[i];
          Mesh mk(k, sys.T);
          Path xs, us;
          if (method == "approximate") {
            auto ap = feasible_approximation(sys, xr, ur, k, in.vartheta);
            xs = ap.state;
            us = ap.control;
          } else {
            Solution sol = run_solver(ls, k, o);
            if (!sol.report.converged) {
              std::lock_guard<std::mutex> lk(mtx);
              nonconv = true;
            }
            xs = sol.z.state();
            us = sol.z.control();
          }
          DiscreteDecision z{mk, xs.values, us.values, Mat()};
          double w12 = w12_distance(xs, xr.resample(mk)).w12;
          double sup = w12_distance(us, ur.resample(mk)).sup;
          rows[i] = {static_cast<double>(k), w12, sup, std::abs(cost_eval(in.problem, z) - J_ref)};
        } catch (const Error& e) {
          errors[i] = e.what();
        }
      }
    };
    unsigned nt = thread_cap(ks.size());
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < nt; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (std::size_t i = 0; i < ks.size(); ++i)
      if (!errors[i].empty()) throw Error(ErrorKind::simulation, "k=" + std::to_string(ks[i]) + ": " + errors[i]);

    std::filesystem::path op(out);
    if (op.has_parent_path()) std::filesystem::create_directories(op.parent_path());
    std::ofstream os(out, std::ios::binary);
    require(static_cast<bool>(os), ErrorKind::configuration, "cannot write " + out);
    os << "k,w12_x,sup_u,cost_gap\n";
    for (const auto& r : rows)
      os << static_cast<int>(r[0]) << ',' << io::format_double(r[1]) << ',' << io::format_double(r[2]) << ','
         << io::format_double(r[3]) << '\n';
    return nonconv ? static_cast<int>(nonconvergence) : static_cast<int>(ok);
  });
}

inline int cmd_export(const std::string& id, const std::string& out, const Overrides& o = {}) {
  return guarded(out + ".error.json", [&] {
    io::SolverSettings st;
    if (o.k) st.k = *o.k;
    if (o.mode) st.mode = io::parse_mode(*o.mode);
    if (o.solver) st.solver = *o.solver;
    if (!o.sigma.empty()) st.sigma_schedule = o.sigma;
    io::write_json(out, io::export_instance(id, st));
    return static_cast<int>(ok);
  });
}

inline int main(int argc, char** argv) {
  CLI::App app{"Optimal control of sweeping processes with controlled moving sets"};
  app.require_subcommand(1);
  Overrides o;
  auto add_common = [&](CLI::App* sc) {
    sc->add_option_function<int>("--k", [&](const int& v) { o.k = v; }, "mesh size");
    sc->add_option_function<double>("--tol", [&](const double& v) { o.tol = v; }, "tolerance");
    sc->add_option_function<std::string>("--mode", [&](const std::string& v) { o.mode = v; }, "w12w12 or w12c");
    sc->add_option_function<std::string>("--solver", [&](const std::string& v) { o.solver = v; }, "smoothed or shooting");
    sc->add_option("--sigma-schedule", o.sigma, "decreasing smoothing parameters")->delimiter(',');
  };
  std::string spec, a, b, c, method = "approximate", cert;

  auto* sim = app.add_subcommand("simulate", "simulate a control CSV");
  sim->add_option("spec", spec)->required();
  sim->add_option("control", a)->required();
  sim->add_option("out", b)->required();
  add_common(sim);

  auto* sol = app.add_subcommand("solve", "solve the discrete problem");
  sol->add_option("spec", spec)->required();
  sol->add_option("out", a)->required();
  add_common(sol);

  auto* cer = app.add_subcommand("certify", "check optimality conditions");
  cer->add_option("spec", spec)->required();
  cer->add_option("solution", a)->required();
  cer->add_option("out", b)->required();
  cer->add_option("--certificate", cert, "certificate JSON, or 'known'");
  add_common(cer);

  auto* con = app.add_subcommand("converge", "mesh refinement table");
  con->add_option("spec", spec)->required();
  con->add_option("ks", a)->required();
  con->add_option("out", b)->required();
  con->add_option("--method", method, "approximate or solve");
  add_common(con);

  auto* exp = app.add_subcommand("export", "write the spec of a built-in instance");
  exp->add_option("id", a)->required();
  exp->add_option("out", b)->required();
  add_common(exp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(schema);
  }
  if (*sim) return cmd_simulate(spec, a, b, o);
  if (*sol) return cmd_solve(spec, a, o);
  if (*cer) return cmd_certify(spec, a, b, cert, o);
  if (*con) return cmd_converge(spec, a, b, method, o);
  return cmd_export(a, b, o);
}

}  // namespace sweep::cli
