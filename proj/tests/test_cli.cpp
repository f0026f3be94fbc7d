#include <doctest.h>

#include <json.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "xgen/dataset.hpp"
#include "xgen/mesh_io.hpp"
#include "xgen/shapes.hpp"
#include "xgen/tsdf.hpp"
#include "xgen/util.hpp"

using namespace xgen;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
  fs::path dir = fs::temp_directory_path() / "xgen_cli_tests";
  fs::create_directories(dir);
  return dir;
}

struct CliResult {
  int exit_code = -1;
  json out;
};

CliResult run_cli(const std::string& args) {
  static std::atomic<int> counter{0};
  fs::path out_file = work_dir() / ("stdout_" + std::to_string(counter.fetch_add(1)) + ".txt");
  std::string cmd = std::string(XGEN_CLI_PATH) + " " + args + " > " + out_file.string() + " 2>/dev/null";
  int rc = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WEXITSTATUS(rc);
  std::ifstream is(out_file);
  std::string line, last;
  while (std::getline(is, line))
    if (!line.empty()) last = line;
  if (!last.empty()) r.out = json::parse(last, nullptr, false);
  return r;
}

fs::path write_config(const std::string& name, const json& j) {
  fs::path p = work_dir() / name;
  std::ofstream os(p);
  os << j.dump(2);
  return p;
}

json desk_test_config() {
  json j;
  j["seed"] = 4242;
  j["tsdf"] = {{"resolution", 32}, {"truncation", 0.1}, {"shell_epsilon", 0.02},
               {"shell_count", 512}, {"shell_include_surface", true}};
  j["grid"] = {{"resolution", 32}};
  j["network"] = {{"input_resolution", 32},
                  {"encoder_channels", json::array({4, 8, 8})},
                  {"decoder_channels", json::array({8, 8})},
                  {"latent_dim", 8},
                  {"head_hidden", 16}};
  j["gt_field"] = {{"iterations", 15}};
  j["dataset"] = {{"augmentations", 2}, {"surface_samples", 3000}};
  j["train"] = {{"epochs", 2}, {"batch_size", 2}, {"checkpoint_every_epochs", 1},
                {"points_per_step", 128}, {"queries_per_step", 128},
                {"augment_rotations", false}};
  return j;
}

}  // namespace

TEST_CASE("cli: dataset -> train -> infer -> eval pipeline") {
  fs::path in_dir = work_dir() / "meshes";
  fs::create_directories(in_dir);
  save_mesh(in_dir / "sphere.obj", shapes::icosphere(1.0, 2));
  save_mesh(in_dir / "box.obj", shapes::box(1.5, 1.2, 1.0, 4));
  fs::path cfg = write_config("cfg.json", desk_test_config());
  fs::path data_dir = work_dir() / "data";

  CliResult ds = run_cli("dataset --in " + in_dir.string() + " --out " + data_dir.string() +
                         " --config " + cfg.string());
  REQUIRE(ds.exit_code == 0);
  REQUIRE(ds.out.is_object());
  CHECK(ds.out["ok"] == true);
  CHECK(ds.out["entries"] == 4);  // 2 meshes x 2 augmentations
  std::string manifest = ds.out["manifest"];
  std::string hash1 = ds.out["manifest_hash"];

  SUBCASE("dataset rerun is idempotent (same manifest hash)") {
    CliResult again = run_cli("dataset --in " + in_dir.string() + " --out " +
                              (work_dir() / "data2").string() + " --config " + cfg.string());
    REQUIRE(again.exit_code == 0);
    CHECK(std::string(again.out["manifest_hash"]) == hash1);
  }

  SUBCASE("unreadable mesh: skipped with exit code 1, others complete") {
    fs::path broken_dir = work_dir() / "broken";
    fs::create_directories(broken_dir);
    save_mesh(broken_dir / "good.obj", shapes::icosphere(1.0, 1));
    std::ofstream(broken_dir / "bad.obj") << "v 0 0 0\nf 1 2 3\n";
    CliResult r = run_cli("dataset --in " + broken_dir.string() + " --out " +
                          (work_dir() / "data3").string() + " --config " + cfg.string());
    CHECK(r.exit_code == 1);
    CHECK(r.out["entries"] == 2);
    CHECK(r.out["failures"].size() == 2);
  }

  // --- train ---
  fs::path ckpt = work_dir() / "model.xgck";
  CliResult tr = run_cli("train --manifest " + manifest + " --out " + ckpt.string() +
                         " --config " + cfg.string());
  REQUIRE(tr.exit_code == 0);
  CHECK(fs::exists(ckpt));
  std::string ckpt_hash = tr.out["checkpoint_hash"];

  SUBCASE("train rerun with the same seed is bit-identical") {
    fs::path ckpt2 = work_dir() / "model2.xgck";
    CliResult tr2 = run_cli("train --manifest " + manifest + " --out " + ckpt2.string() +
                            " --config " + cfg.string());
    REQUIRE(tr2.exit_code == 0);
    CHECK(std::string(tr2.out["checkpoint_hash"]) == ckpt_hash);
  }

  // --- infer on a mesh ---
  std::vector<ManifestEntry> entries = load_manifest(manifest);
  std::string mesh_path;
  for (const auto& e : entries)
    if (e.split == "train") {
      mesh_path = e.files.at("mesh");
      break;
    }
  REQUIRE(!mesh_path.empty());
  fs::path field_out = work_dir() / "pred.xfld";
  CliResult inf = run_cli("infer --input " + mesh_path + " --checkpoint " + ckpt.string() +
                          " --out " + field_out.string() + " --config " + cfg.string());
  REQUIRE(inf.exit_code == 0);
  CHECK(inf.out.contains("seconds"));
  CHECK(fs::exists(field_out));

  // --- eval-field ---
  CliResult ef = run_cli("eval-field --field " + field_out.string() + " --mesh " + mesh_path +
                         " --config " + cfg.string());
  REQUIRE(ef.exit_code == 0);
  CHECK(ef.out.contains("angular_error"));

  // --- infer on a point cloud (reconstruction path) ---
  std::string cloud_path;
  for (const auto& e : entries)
    if (e.split == "train") {
      cloud_path = e.files.at("cloud");
      break;
    }
  fs::path field2 = work_dir() / "pred_cloud.xfld";
  fs::path mesh_out = work_dir() / "recon.obj";
  fs::path sdf_out = work_dir() / "pred.tsdf";
  CliResult infc = run_cli("infer --input " + cloud_path + " --checkpoint " + ckpt.string() +
                           " --out " + field2.string() + " --mesh-out " + mesh_out.string() +
                           " --sdf-out " + sdf_out.string() + " --config " + cfg.string());
  REQUIRE(infc.exit_code == 0);
  CHECK(fs::exists(mesh_out));
  CHECK(fs::exists(sdf_out));
}

TEST_CASE("cli: gt-field and mc on fixtures") {
  fs::path mesh_path = work_dir() / "cyl.obj";
  TriangleMesh cyl = normalize_to_unit_cube(shapes::cylinder(0.5, 2.0, 48, 24)).first;
  save_mesh(mesh_path, cyl);
  fs::path field = work_dir() / "cyl.xfld";
  CliResult gt = run_cli("gt-field --mesh " + mesh_path.string() + " --out " + field.string());
  REQUIRE(gt.exit_code == 0);
  CHECK(double(gt.out["energy_final"]) <= double(gt.out["energy_initial"]) + 1e-9);

  CliResult ef = run_cli("eval-field --field " + field.string() + " --mesh " + mesh_path.string());
  REQUIRE(ef.exit_code == 0);
  CHECK(double(ef.out["angular_error"]) < 0.05);

  // mc on a sphere TSDF: watertight output
  TriangleMesh sphere = shapes::icosphere(0.4, 3);
  DenseSdfGrid grid = compute_tsdf(sphere, 48, 0.1);
  fs::path tsdf_path = work_dir() / "sphere.tsdf";
  save_tsdf(tsdf_path, grid);
  fs::path mc_out = work_dir() / "mc.obj";
  CliResult mc = run_cli("mc --tsdf " + tsdf_path.string() + " --out " + mc_out.string());
  REQUIRE(mc.exit_code == 0);
  TriangleMesh mesh = load_mesh(mc_out);
  CHECK(is_watertight(mesh));
}

TEST_CASE("cli: eval-quad on a perfect grid") {
  fs::path quad_path = work_dir() / "grid.obj";
  save_quad_mesh(quad_path, shapes::quad_grid(1.0, 1.0, 6, 6));
  CliResult r = run_cli("eval-quad --quad " + quad_path.string());
  REQUIRE(r.exit_code == 0);
  CHECK(double(r.out["angle"]) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(double(r.out["jacobian_ratio"]) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(double(r.out["area"]) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("cli: unknown config keys are fatal (exit 2)") {
  json bad = desk_test_config();
  bad["surprise"] = 1;
  fs::path cfg = write_config("bad.json", bad);
  CliResult r = run_cli("mc --tsdf nonexistent.tsdf --out x.obj --config " + cfg.string());
  CHECK(r.exit_code == 2);
  CHECK(r.out["ok"] == false);
  CHECK(std::string(r.out["error"]).find("unknown key") != std::string::npos);
}
