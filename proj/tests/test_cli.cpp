#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "bandgauge/datagen.hpp"
#include "bandgauge/image_io.hpp"
#include "test_helpers.hpp"

using namespace bandgauge;
using bandgauge::testing::scratch_dir;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run run(const fs::path& dir, const std::string& args, const std::string& env = "") {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = "cd '" + dir.string() + "' && " + env + " '" + BANDGAUGE_CLI + "' " + args + " >'" + out.string() +
                          "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    rows.push_back(f);
  }
  return rows;
}

std::string metric(const std::string& report, const std::string& name) {
  for (const auto& r : parse_csv(report))
    if (r.size() == 2 && r[0] == name) return r[1];
  return "";
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST(Cli, UsageExitCodes) {
  const auto dir = scratch_dir("cli_usage");
  EXPECT_EQ(run(dir, "").code, 1);
  EXPECT_EQ(run(dir, "--help").code, 0);
  EXPECT_EQ(run(dir, "frobnicate").code, 1);
  EXPECT_EQ(run(dir, "score").code, 1);
}

TEST(Cli, GenIsDeterministic) {
  const auto dir = scratch_dir("cli_gen");
  ASSERT_EQ(run(dir, "--seed 7 gen -o a -n 10 --image-size 64 --patch-size 32").code, 0);
  ASSERT_EQ(run(dir, "--seed 7 gen -o b -n 10 --image-size 64 --patch-size 32").code, 0);
  ASSERT_EQ(run(dir, "--seed 8 gen -o c -n 10 --image-size 64 --patch-size 32").code, 0);
  const auto a = slurp(dir / "a" / "manifest.csv");
  EXPECT_EQ(a, slurp(dir / "b" / "manifest.csv"));
  EXPECT_NE(a, slurp(dir / "c" / "manifest.csv"));
  EXPECT_EQ(slurp(dir / "a" / "img_0003.png"), slurp(dir / "b" / "img_0003.png"));
  const auto rows = parse_csv(a);
  ASSERT_EQ(rows.size(), 41u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"image_path", "patch_x", "patch_y", "N", "label", "split"}));
  EXPECT_EQ(run(dir, "gen -o d -n 5").code, 1);
}

TEST(Cli, ScoreConstantAndDepthOrdering) {
  const auto dir = scratch_dir("cli_score");
  save_image(PlanarImage(Plane8(128, 96, 128)), dir / "gray.pgm");
  datagen::SynthSpec spec;
  spec.size = 256;
  const auto base = datagen::gen_base(spec);
  save_image(datagen::quantize_bitdepth(base, 3), dir / "d3.png");
  save_image(datagen::quantize_bitdepth(base, 7), dir / "d7.png");
  const auto r = run(dir, "score --patch-size 64 gray.pgm d3.png d7.png");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"path", "Q", "banded_patch_count", "M"}));
  EXPECT_EQ(rows[1][1], "0");
  EXPECT_EQ(rows[1][3], "2");
  EXPECT_GT(std::stod(rows[2][1]), std::stod(rows[3][1]));

  // Same bytes for any thread count.
  const auto t4 = run(dir, "score --threads 4 --patch-size 64 gray.pgm d3.png d7.png");
  EXPECT_EQ(t4.out, r.out);
  EXPECT_EQ(run(dir, "score --patch-size 64 gray.pgm d3.png d7.png", "BANDGAUGE_THREADS=3").out, r.out);
  EXPECT_EQ(run(dir, "score --patch-size 64 gray.pgm d3.png d7.png", "BANDGAUGE_THREADS=zero").code, 1);
}

TEST(Cli, ScoreReportsFailuresPerImage) {
  const auto dir = scratch_dir("cli_score_fail");
  save_image(PlanarImage(Plane8(64, 64, 10)), dir / "ok.pgm");
  write(dir / "bad.png", "garbage");
  const auto r = run(dir, "score --patch-size 32 ok.pgm bad.png");
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(parse_csv(r.out).size(), 2u);
  EXPECT_NE(r.err.find("bad.png"), std::string::npos);
  EXPECT_EQ(run(dir, "score --patch-size 4 ok.pgm").code, 1);
  EXPECT_EQ(run(dir, "score --patch-size 32 --p 0 ok.pgm").code, 1);
}

TEST(Cli, ConfigFilePrecedence) {
  const auto dir = scratch_dir("cli_config");
  save_image(PlanarImage(Plane8(100, 70, 50)), dir / "g.pgm");
  write(dir / "cfg.json", R"({"patch_size": 32})");
  EXPECT_EQ(parse_csv(run(dir, "--config cfg.json score g.pgm").out)[1][3], "6");
  EXPECT_EQ(parse_csv(run(dir, "--config cfg.json score --patch-size 16 g.pgm").out)[1][3], "24");
  write(dir / "bad.json", "{not json");
  EXPECT_EQ(run(dir, "--config bad.json score g.pgm").code, 1);
  write(dir / "wrong.json", R"({"patch_size": "big"})");
  EXPECT_EQ(run(dir, "--config wrong.json score g.pgm").code, 1);
}

TEST(Cli, DetectDimensionsAndBlackMap) {
  const auto dir = scratch_dir("cli_detect");
  Rng rng(5);
  for (int i = 0; i < 10; ++i) {
    const int w = 32 + static_cast<int>(rng.below(80)), h = 32 + static_cast<int>(rng.below(80));
    save_image(PlanarImage(bandgauge::testing::random_plane8(w, h, rng)), dir / "in.png");
    const auto r = run(dir, "detect in.png -o map.png --patch-size 16");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto map = load_image(dir / "map.png");
    EXPECT_EQ(map.width(), w);
    EXPECT_EQ(map.height(), h);
  }
  save_image(PlanarImage(Plane8(64, 48, 90)), dir / "flat.pgm");
  ASSERT_EQ(run(dir, "detect flat.pgm -o flat_map.pgm --raw flat.bgf --dump-dir dump --patch-size 16").code, 0);
  const auto flat_map = load_image(dir / "flat_map.pgm");
  for (auto v : flat_map.plane8(0).data) EXPECT_EQ(v, 0);
  EXPECT_EQ(fs::file_size(dir / "flat.bgf"), 12u + 64u * 48u * 4u);
  for (const char* f : {"hfm.bgf", "lfm.bgf", "hfm.png", "lfm.png", "patches.csv"}) EXPECT_TRUE(fs::exists(dir / "dump" / f)) << f;
}

TEST(Cli, EvalIdenticalVectors) {
  const auto dir = scratch_dir("cli_eval");
  std::string pairs = "id,predicted,mos\n";
  for (int i = 0; i < 12; ++i) pairs += "i" + std::to_string(i) + "," + std::to_string(i * 3 % 12) + "," + std::to_string(i * 3 % 12) + "\n";
  write(dir / "pairs.csv", pairs);
  const auto r = run(dir, "eval --pairs pairs.csv");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(metric(r.out, "srcc"), "1");
  EXPECT_EQ(metric(r.out, "krcc"), "1");
  EXPECT_NEAR(std::stod(metric(r.out, "plcc")), 1.0, 1e-9);

  write(dir / "bin.csv", "id,score,label\na,0.1,0\nb,0.4,0\nc,0.35,1\nd,0.8,1\n");
  const auto b = run(dir, "eval --binary bin.csv --curves-dir curves -o report.csv");
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(metric(slurp(dir / "report.csv"), "auroc"), "0.75");
  EXPECT_TRUE(fs::exists(dir / "curves" / "roc.csv"));
  EXPECT_TRUE(fs::exists(dir / "curves" / "pr.csv"));

  write(dir / "bad.csv", "id,score,label\na,0.1,0\nb,0.4,2\n");
  const auto bad = run(dir, "eval --binary bad.csv");
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("bad.csv:3"), std::string::npos) << bad.err;
  EXPECT_EQ(run(dir, "eval").code, 1);
}

TEST(Cli, Mos) {
  const auto dir = scratch_dir("cli_mos");
  write(dir / "r.csv", "image_id,rater_id,score\nx,1,1\nx,2,1\nx,3,1\nx,4,1\nx,5,100\ny,1,50\ny,2,60\ny,3,70\n");
  const auto r = run(dir, "mos r.csv");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "image_id,mos,n_kept,n_removed\nx,1,4,1\ny,60,3,0\n");
  const auto conj = run(dir, "mos r.csv --rule grubbs_and_sd");
  EXPECT_EQ(conj.out, "image_id,mos,n_kept,n_removed\nx,20.8,5,0\ny,60,3,0\n");
  write(dir / "bad.csv", "image_id,rater_id,score\nx,1,10\nx,2,150\n");
  const auto bad = run(dir, "mos bad.csv");
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("bad.csv:3"), std::string::npos) << bad.err;
}

TEST(Cli, TrainToySet) {
  const auto dir = scratch_dir("cli_train");
  ASSERT_EQ(run(dir, "--seed 3 gen -o toy --toy 200 --patch-size 16").code, 0);
  const auto r = run(dir, "--seed 1 train toy/manifest.csv -o model.bin --report curve.csv --lr 1e-3 --epochs 6 --batch 16");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto curve = parse_csv(slurp(dir / "curve.csv"));
  ASSERT_EQ(curve.size(), 7u);
  EXPECT_EQ(curve[0], (std::vector<std::string>{"epoch", "train_loss", "val_loss", "val_acc"}));
  EXPECT_EQ(curve.back()[3], "1");

  ASSERT_EQ(run(dir, "--seed 1 train toy/manifest.csv -o model2.bin --report curve2.csv --lr 1e-3 --epochs 6 --batch 16").code, 0);
  EXPECT_EQ(slurp(dir / "model.bin"), slurp(dir / "model2.bin"));

  // A model fixes the patch size used for scoring.
  save_image(PlanarImage(Plane8(48, 48, 100)), dir / "g.pgm");
  const auto s = run(dir, "score --model model.bin g.pgm");
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_EQ(parse_csv(s.out)[1][3], "9");
  EXPECT_EQ(run(dir, "score --model model.bin --patch-size 24 g.pgm").code, 1);

  const auto nan = run(dir, "train toy/manifest.csv -o boom.bin --report boom.csv --lr 1e30 --epochs 2");
  EXPECT_EQ(nan.code, 2) << nan.err;
}

TEST(Cli, MalformedManifest) {
  const auto dir = scratch_dir("cli_manifest");
  save_image(PlanarImage(Plane8(16, 16, 3)), dir / "a.png");
  write(dir / "m.csv", "image_path,patch_x,patch_y,N,label,split\na.png,0,0,16,banded,train\na.png,0,x,16,banded,train\n");
  auto r = run(dir, "train m.csv -o out.bin");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("m.csv:3"), std::string::npos) << r.err;
  write(dir / "m2.csv", "image_path,patch_x,patch_y,N,label,split\na.png,0,0,16,banded,train\na.png,0,0,16,maybe,train\n");
  r = run(dir, "train m2.csv -o out.bin");
  EXPECT_NE(r.err.find("m2.csv:3"), std::string::npos) << r.err;
  write(dir / "m3.csv", "image_path,patch_x,patch_y,N,label\na.png,0,0,16,banded\n");
  EXPECT_EQ(run(dir, "train m3.csv -o out.bin").code, 1);
  write(dir / "m4.csv", "image_path,patch_x,patch_y,N,label,split\na.png,8,0,16,banded,train\n");
  r = run(dir, "train m4.csv -o out.bin");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("m4.csv:2"), std::string::npos) << r.err;
}
