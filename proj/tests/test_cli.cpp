#include <gtest/gtest.h>

#include <map>

#include "cli.hpp"
#include "objcomp/datagen/scene.hpp"
#include "objcomp/image.hpp"
#include "support/tiny_config.hpp"

using namespace objcomp;
using objcomp::testing::read_bytes;
using objcomp::testing::TempDir;
namespace fs = std::filesystem;

namespace {

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "objcomp");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  return cli::run(static_cast<int>(args.size()), argv.data());
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_bytes(e.path());
  return out;
}

fs::path write_tiny_config(const TempDir& dir, const fs::path& out) {
  const fs::path p = dir / "config.json";
  objcomp::testing::write_text(p, objcomp::testing::tiny_config(out).to_json().dump(2));
  return p;
}

}  // namespace

TEST(Cli, ExitCodes) {
  TempDir dir("cli-codes");
  const auto cfg = write_tiny_config(dir, dir / "run");
  EXPECT_EQ(run_cli({"config", "-c", cfg.string()}), cli::kExitOk);
  EXPECT_EQ(run_cli({"train", "-c", cfg.string(), "--stage", "7"}), cli::kExitConfig);
  EXPECT_EQ(run_cli({"config", "-c", cfg.string(), "--set", "stages.stage9.steps=1"}), cli::kExitConfig);
  EXPECT_EQ(run_cli({"config", "-c", (dir / "missing.json").string()}), cli::kExitConfig);
  EXPECT_EQ(run_cli({"no-such-command"}), cli::kExitConfig);
  EXPECT_EQ(run_cli({"train", "-c", cfg.string(), "--stage", "2"}), cli::kExitOrdering);
  EXPECT_EQ(run_cli({"train", "-c", cfg.string(), "--stage", "3"}), cli::kExitOrdering);
  EXPECT_EQ(run_cli({"composite", "-c", cfg.string(), "--background", (dir / "nope.png").string(), "--object",
                     (dir / "nope.png").string(), "--bbox", "1,1,4,4", "--out", (dir / "x.png").string()}),
            cli::kExitRuntime);
}

TEST(Cli, LockedOutputDirIsRuntimeError) {
  TempDir dir("cli-lock");
  const auto cfg = write_tiny_config(dir, dir / "run");
  fs::create_directories(dir / "run");
  objcomp::testing::write_text(dir / "run/.lock", "1");
  EXPECT_EQ(run_cli({"train", "-c", cfg.string(), "--stage", "1"}), cli::kExitRuntime);
}

TEST(Cli, DatagenByteIdentical) {
  TempDir dir("cli-datagen");
  const auto cfg = write_tiny_config(dir, dir / "run");
  ASSERT_EQ(run_cli({"datagen", "-c", cfg.string(), "--out", (dir / "a").string(), "--count", "5"}), 0);
  ASSERT_EQ(run_cli({"datagen", "-c", cfg.string(), "--out", (dir / "b").string(), "--count", "5"}), 0);
  const auto a = tree_bytes(dir / "a"), b = tree_bytes(dir / "b");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, b);
  ASSERT_EQ(run_cli({"datagen", "-c", cfg.string(), "--seed", "2", "--set", "dataset.seed=2", "--out",
                     (dir / "c").string(), "--count", "5"}),
            0);
  EXPECT_NE(a, tree_bytes(dir / "c"));
}

TEST(Cli, TrainAndCompositeByteIdentical) {
  TempDir dir("cli-train");
  const fs::path run = dir / "run";
  const auto cfg = write_tiny_config(dir, run);
  const Image bg = datagen::generate_scene({.canvas_size = 32, .num_objects = 1, .rng_seed = 4}).image;
  write_png(dir / "bg.png", bg);
  write_png(dir / "obj.png", datagen::generate_scene({.canvas_size = 32, .num_objects = 1, .rng_seed = 5}).image);
  std::map<std::string, std::string> first;
  for (int pass = 0; pass < 2; ++pass) {
    fs::remove_all(run);
    for (int s = 0; s <= 3; ++s) ASSERT_EQ(run_cli({"train", "-c", cfg.string(), "--stage", std::to_string(s)}), 0);
    ASSERT_EQ(run_cli({"composite", "-c", cfg.string(), "--background", (dir / "bg.png").string(), "--object",
                       (dir / "obj.png").string(), "--bbox", "6,8,12,10", "--seed", "3", "--out",
                       (run / "comp/out.png").string()}),
              0);
    const auto bytes = tree_bytes(run);
    EXPECT_TRUE(bytes.count("checkpoints/generator.stage3.ckpt"));
    EXPECT_TRUE(bytes.count("curves/adaptor.stage1.csv"));
    EXPECT_TRUE(bytes.count("comp/out.json"));
    if (pass == 0) {
      first = bytes;
    } else {
      EXPECT_EQ(first.size(), bytes.size());
      for (const auto& [name, content] : first) EXPECT_EQ(content, bytes.at(name)) << name;
    }
  }
  const Image out = read_png(run / "comp/out.png");
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      if (x >= 6 && x < 18 && y >= 8 && y < 18) continue;
      for (int c = 0; c < 3; ++c) ASSERT_EQ(out.at(x, y, c), bg.at(x, y, c));
    }
}
