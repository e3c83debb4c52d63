#include <sweep/cli.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sweep;
namespace fs = std::filesystem;

namespace {

class Workdir : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / (std::string("sweep_io_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string path(const std::string& name) const { return (dir / name).string(); }

  std::string exported(const std::string& id, int k = 100) {
    io::SolverSettings st;
    st.k = k;
    std::string f = path(id + ".json");
    io::write_json(f, io::export_instance(id, st));
    return f;
  }

  fs::path dir;
};

std::string slurp(const std::string& f) {
  std::ifstream is(f, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Csv, PathRoundTripIsLossless) {
  auto f = (fs::temp_directory_path() / "sweep_io_path.csv").string();
  Mesh mesh(7, 2.0);
  Path p = Path::sample(mesh, [](double t) { return vec2(std::sin(t) / 3.0, std::exp(-t) * 1e-17); });
  io::write_path_csv(f, p, "x");
  Path q = io::read_path_csv(f);
  EXPECT_EQ(q.mesh, mesh);
  EXPECT_EQ(q.values, p.values);
  EXPECT_EQ(slurp(f).substr(0, 10), "t,x_1,x_2\n");
  fs::remove(f);
}

TEST(Csv, NonUniformMeshIsRejected) {
  auto f = (fs::temp_directory_path() / "sweep_io_bad.csv").string();
  std::ofstream(f) << "t,x_1\n0,1\n0.5,1\n0.6,1\n";
  try {
    io::read_path_csv(f);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::schema);
  }
  fs::remove(f);
}

TEST(Certificate, JsonRoundTrip) {
  auto in = elastoplastic61();
  Mesh mesh(10, 1.0);
  Certificate c = in.known_certificate(mesh);
  Certificate d = io::certificate_from_json(io::certificate_to_json(c), in.problem, mesh);
  EXPECT_EQ(d.lambda, c.lambda);
  EXPECT_EQ(d.p, c.p);
  EXPECT_EQ(d.gamma.density, c.gamma.density);
  ASSERT_EQ(d.gamma.atoms.size(), 1u);
  EXPECT_EQ(d.gamma.atoms[0].node, 10);
  EXPECT_EQ(d.gamma.atoms[0].weight, c.gamma.atoms[0].weight);
}

TEST(Spec, ExportedInstancesLoad) {
  for (const auto& id : instance_ids()) {
    auto ls = io::load_spec(io::export_instance(id));
    EXPECT_EQ(ls.instance.problem.n(), instance(id).problem.n());
    EXPECT_EQ(ls.settings.k, 100);
    EXPECT_TRUE(ls.instance.known_solution.has_value()) << id;
  }
}

TEST(Spec, MissingSchemaAndDimensionMismatch) {
  auto doc = io::export_instance("remark45");
  auto a = doc;
  a.erase("schema");
  EXPECT_THROW(io::load_spec(a), Error);
  auto b = doc;
  b["dims"]["n"] = 2;
  try {
    io::load_spec(b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::schema);
  }
}

TEST_F(Workdir, SimulateRemark) {
  std::string spec = exported("remark45");
  auto in = remark45();
  Mesh mesh(200, 2.0);
  io::write_path_csv(path("u.csv"), in.known_solution->control(mesh), "u");
  ASSERT_EQ(cli::cmd_simulate(spec, path("u.csv"), path("sim")), 0);
  Path x = io::read_path_csv(path("sim/state.csv"));
  EXPECT_LE((x.values - in.known_solution->state(mesh).values).cwiseAbs().maxCoeff(), 2 * mesh.h());
  EXPECT_TRUE(fs::exists(path("sim/steps.csv")));
}

TEST_F(Workdir, SimulateErrors) {
  std::ofstream(path("broken.json")) << "{ \"schema\": 1, ";
  io::write_path_csv(path("u.csv"), Path::constant(Mesh(4, 2.0), vec1(-2)), "u");
  EXPECT_EQ(cli::cmd_simulate(path("broken.json"), path("u.csv"), path("a")), 2);
  EXPECT_TRUE(fs::exists(path("a/error.json")));
  std::string spec = exported("remark45");
  io::write_path_csv(path("bad_u.csv"), Path::constant(Mesh(4, 2.0), vec1(0.0)), "u");
  EXPECT_EQ(cli::cmd_simulate(spec, path("bad_u.csv"), path("b")), 3);
  auto err = io::read_json(path("b/error.json"));
  EXPECT_NE(err["message"].get<std::string>().find("step 0"), std::string::npos);
}

TEST_F(Workdir, SolveRejectsUnsupportedTheta) {
  auto doc = io::export_instance("remark45");
  doc["moving_set"]["theta"] = {{"variant", "smooth_inequality"}};
  io::write_json(path("s.json"), doc);
  EXPECT_EQ(cli::cmd_solve(path("s.json"), path("out")), 2);
}

TEST_F(Workdir, SolveAndCertifyElastoplastic) {
  std::string spec = exported("elastoplastic61", 50);
  ASSERT_EQ(cli::cmd_solve(spec, path("sol")), 0);
  Path u = io::read_path_csv(path("sol/u.csv"));
  Vec slopes(u.mesh.k);
  for (int j = 0; j < u.mesh.k; ++j) slopes(j) = u.slope(j)(0);
  EXPECT_LE((slopes.array() - slopes.mean()).abs().maxCoeff(), 1e-3);
  auto rep = io::read_json(path("sol/report.json"));
  EXPECT_TRUE(rep.contains("cost"));
}

TEST_F(Workdir, CertifyKnownAndZeroed) {
  std::string spec = exported("elastoplastic61", 50);
  auto in = elastoplastic61();
  Mesh mesh(50, 1.0);
  fs::create_directories(path("sol"));
  io::write_path_csv(path("sol/x.csv"), in.known_solution->state(mesh), "x");
  io::write_path_csv(path("sol/u.csv"), in.known_solution->control(mesh), "u");
  io::write_json(path("cert.json"), io::certificate_to_json(in.known_certificate(mesh)));
  EXPECT_EQ(cli::cmd_certify(spec, path("sol"), path("r1.json"), path("cert.json")), 0);
  EXPECT_TRUE(io::read_json(path("r1.json"))["pass"].get<bool>());

  Certificate zero = in.known_certificate(mesh).scaled(0.0);
  io::write_json(path("zero.json"), io::certificate_to_json(zero));
  EXPECT_EQ(cli::cmd_certify(spec, path("sol"), path("r2.json"), path("zero.json")), 5);
  auto r2 = io::read_json(path("r2.json"));
  ASSERT_TRUE(r2["checks"].contains("nontriviality_margin"));
  EXPECT_FALSE(r2["checks"]["nontriviality_margin"]["pass"].get<bool>());
}

TEST_F(Workdir, CertifyCounterexample) {
  std::string spec = exported("counterexample53", 20);
  auto in = counterexample53();
  Mesh mesh(20, 1.0);
  fs::create_directories(path("sol"));
  io::write_path_csv(path("sol/x.csv"), in.known_solution->state(mesh), "x");
  io::write_path_csv(path("sol/u.csv"), in.known_solution->control(mesh), "u");
  cli::cmd_certify(spec, path("sol"), path("r.json"), "known");
  auto r = io::read_json(path("r.json"));
  EXPECT_EQ(r["conventional_hamiltonian"]["value"], "+inf");
  EXPECT_TRUE(r["max_condition_detail"]["pass"].get<bool>());
  EXPECT_LE(r["max_condition_detail"]["worst"].get<double>(), 1e-10);
}

TEST_F(Workdir, ConvergeRemark) {
  std::string spec = exported("remark45");
  ASSERT_EQ(cli::cmd_converge(spec, "25,50,100,200", path("c.csv")), 0);
  auto rows = io::read_table_csv(path("c.csv"));
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LT(rows[i][1], rows[i - 1][1]);
  ASSERT_EQ(cli::cmd_converge(spec, "40", path("one.csv")), 0);
  EXPECT_EQ(io::read_table_csv(path("one.csv")).size(), 1u);
}

TEST_F(Workdir, ConvergeWithoutReference) {
  auto doc = io::export_instance("remark45");
  doc.erase("reference");
  io::write_json(path("s.json"), doc);
  EXPECT_EQ(cli::cmd_converge(path("s.json"), "25,50", path("c.csv")), 2);
}

TEST_F(Workdir, ExportIngestRoundTripIsBitIdentical) {
  std::string spec = exported("remark45", 40);
  io::write_path_csv(path("u.csv"), remark45().initial_guess(Mesh(40, 2.0)), "u");
  ASSERT_EQ(cli::cmd_simulate(spec, path("u.csv"), path("a")), 0);
  // re-export from the ingested document and run again
  io::write_json(path("again.json"), io::load_spec_file(spec).document);
  ASSERT_EQ(cli::cmd_simulate(path("again.json"), path("u.csv"), path("b")), 0);
  EXPECT_EQ(slurp(path("a/state.csv")), slurp(path("b/state.csv")));
  EXPECT_EQ(slurp(path("a/steps.csv")), slurp(path("b/steps.csv")));
}

TEST_F(Workdir, ExportUnknownId) { EXPECT_EQ(cli::cmd_export("nope", path("x.json")), 2); }
