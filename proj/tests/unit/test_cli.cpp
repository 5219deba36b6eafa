#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "app.hpp"
#include "kgad/png_io.hpp"

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("kgad_cli_" + name);
  fs::remove_all(p);
  return p;
}

// A small face dataset shared by the tests below.
const fs::path& face_data() {
  static const fs::path dir = [] {
    const fs::path d = fresh("faces");
    EXPECT_EQ(kgad::cli::run({"kgad", "gen-data", "--kind", "face", "--count", "3", "--size", "32",
                              "--seed", "4", "--out", d.string()}),
              0);
    return d;
  }();
  return dir;
}

std::string manifest() { return (face_data() / "manifest.json").string(); }

nlohmann::json run_json(const fs::path& out) { return nlohmann::json::parse(slurp(out / "run.json")); }

}  // namespace

TEST(Cli, GenDataWritesManifestAndImages) {
  EXPECT_TRUE(fs::exists(face_data() / "manifest.json"));
  EXPECT_EQ(std::distance(fs::directory_iterator(face_data() / "images"), fs::directory_iterator{}), 3);
}

TEST(Cli, EmptyBudgetProtectCopiesInputsBitwise) {
  const fs::path out = fresh("protect0");
  ASSERT_EQ(kgad::cli::run({"kgad", "protect", "--dataset", manifest(), "--epsilon", "0", "--alpha", "0",
                            "--steps", "2", "--out", out.string()}),
            0);
  int seen = 0;
  for (const auto& entry : fs::directory_iterator(out / "samples")) {
    const std::string id = entry.path().filename().string();
    EXPECT_EQ(slurp(entry.path() / "protected.png"), slurp(face_data() / "images" / (id + ".png")));
    EXPECT_TRUE(fs::exists(entry.path() / "noise.png"));
    EXPECT_TRUE(fs::exists(entry.path() / "fake_clean.png"));
    EXPECT_TRUE(fs::exists(entry.path() / "fake_protected.png"));
    ++seen;
  }
  EXPECT_EQ(seen, 3);
  EXPECT_TRUE(fs::exists(out / "protect.json"));
}

TEST(Cli, ProfileDefaultsAreExpandedInRunRecord) {
  const fs::path out = fresh("profile_face");
  ASSERT_EQ(kgad::cli::run({"kgad", "protect", "--dataset", manifest(), "--steps", "1", "--out", out.string()}), 0);
  const auto j = run_json(out);
  EXPECT_EQ(j["profile"], "face");
  EXPECT_EQ(j["epsilon"], 7.0);
  EXPECT_EQ(j["alpha"], 1.0);
  EXPECT_EQ(j["lambda"], 1.0);
  EXPECT_EQ(j["model"], "attribute_edit");

  const fs::path scenes = fresh("scenes");
  ASSERT_EQ(kgad::cli::run({"kgad", "gen-data", "--kind", "scene", "--count", "1", "--size", "32", "--out",
                            scenes.string()}),
            0);
  const fs::path out2 = fresh("profile_style");
  ASSERT_EQ(kgad::cli::run({"kgad", "protect", "--dataset", (scenes / "manifest.json").string(), "--steps", "1",
                            "--out", out2.string()}),
            0);
  const auto s = run_json(out2);
  EXPECT_EQ(s["profile"], "style");
  EXPECT_EQ(s["epsilon"], 12.0);
  EXPECT_EQ(s["lambda"], 6e-2);
  EXPECT_EQ(s["alpha"], 1.0);
}

TEST(Cli, CompareEmitsOneRowPerDefense) {
  const fs::path out = fresh("compare");
  ASSERT_EQ(kgad::cli::run({"kgad", "compare", "--dataset", manifest(), "--steps", "2", "--threshold", "0",
                            "--out", out.string()}),
            0);
  const std::string csv = slurp(out / "report.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_EQ(csv.find("kgad,"), csv.find('\n') + 1);
  EXPECT_NE(csv.find("\nitd,"), std::string::npos);
  // Threshold 0 counts every record as a success.
  EXPECT_NE(csv.find(",1.0000,"), std::string::npos);
}

TEST(Cli, AblateLabelsAndGridLayout) {
  const fs::path out = fresh("ablate");
  ASSERT_EQ(kgad::cli::run({"kgad", "ablate", "--dataset", manifest(), "--steps", "2", "--out", out.string()}), 0);
  const std::string csv = slurp(out / "ablation.csv");
  for (const char* label : {"\nkgad,", "\nkgad-no-dk,", "\nkgad-no-pk,"}) EXPECT_NE(csv.find(label), std::string::npos);
  int grids = 0;
  for (const auto& entry : fs::directory_iterator(out / "grids")) {
    const kgad::Image g = kgad::load_png(entry.path().string());
    EXPECT_EQ(g.height(), 32);
    EXPECT_EQ(g.width(), 32 * 4);
    ++grids;
  }
  EXPECT_EQ(grids, 3);

  // The no-dk row is the same run as an evaluate with lambda 0.
  const fs::path ev = fresh("ablate_lambda0");
  ASSERT_EQ(kgad::cli::run({"kgad", "evaluate", "--dataset", manifest(), "--steps", "2", "--lambda", "0",
                            "--out", ev.string()}),
            0);
  const std::string row = slurp(ev / "report.csv").substr(slurp(ev / "report.csv").find('\n') + 1);
  const std::string no_dk = csv.substr(csv.find("\nkgad-no-dk,") + 1);
  EXPECT_EQ(row.substr(row.find(',')), no_dk.substr(no_dk.find(','), row.size() - row.find(',')));
}

TEST(Cli, ConfigFileIsOverriddenByFlags) {
  const fs::path out = fresh("config");
  fs::create_directories(out);
  {
    std::ofstream cfg(out / "run.toml");
    cfg << "steps = 1\nlambda = 3.5\nseed = 11\n";
  }
  ASSERT_EQ(kgad::cli::run({"kgad", "protect", "--config", (out / "run.toml").string(), "--dataset", manifest(),
                            "--seed", "12", "--out", out.string()}),
            0);
  const auto j = run_json(out);
  EXPECT_EQ(j["steps"], 1);
  EXPECT_EQ(j["lambda"], 3.5);
  EXPECT_EQ(j["seed"], 12);
}

TEST(Cli, ErrorsGiveNonzeroStatus) {
  EXPECT_EQ(kgad::cli::run({"kgad", "protect", "--dataset", "/nonexistent.json", "--out",
                            fresh("err").string()}),
            2);
  EXPECT_NE(kgad::cli::run({"kgad", "protect", "--bogus"}), 0);
  EXPECT_EQ(kgad::cli::run({"kgad", "evaluate", "--dataset", manifest(), "--defense", "pgd", "--out",
                            fresh("err2").string()}),
            2);
  EXPECT_EQ(kgad::cli::run({"kgad", "protect", "--dataset", manifest(), "--model", "external:false",
                            "--steps", "1", "--out", fresh("err3").string()}),
            1);
}

TEST(Cli, WorkersDoNotChangeReports) {
  const fs::path a = fresh("det_a"), b = fresh("det_b");
  for (const auto& [dir, workers] : {std::pair{a, "1"}, std::pair{b, "3"}}) {
    ASSERT_EQ(kgad::cli::run({"kgad", "compare", "--dataset", manifest(), "--steps", "3", "--workers", workers,
                              "--out", dir.string()}),
              0);
  }
  EXPECT_EQ(slurp(a / "report.json"), slurp(b / "report.json"));
  EXPECT_EQ(slurp(a / "report.csv"), slurp(b / "report.csv"));
}
