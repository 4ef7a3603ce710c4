#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <thread>

#include "objcomp/annotation/server.hpp"
#include "support/annotation_fixture.hpp"

#include <httplib.h>

using namespace objcomp;
using namespace objcomp::annotation;
using objcomp::testing::TempDir;
using nlohmann::json;
using objcomp::testing::AssetFixture;
using objcomp::testing::blend8;
using objcomp::testing::gradient_background;
using objcomp::testing::ramp_object;

TEST(Catalog, ListsSortedAndWarnsOnNonImages) {
  AssetFixture f;
  std::vector<std::string> warnings;
  AssetCatalog cat(f.root(), [&](const std::string& w) { warnings.push_back(w); });
  const auto objs = cat.list(AssetKind::Object);
  ASSERT_EQ(objs.size(), 2u);
  EXPECT_EQ(objs[0].id, "object-a_disc");
  EXPECT_EQ(objs[1].id, "object-b_star");
  EXPECT_EQ(objs[1].width, 8);
  EXPECT_EQ(objs[1].height, 6);
  EXPECT_EQ(cat.list(AssetKind::Background).at(0).id, "background-room");
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("notes.txt"), std::string::npos);
  EXPECT_THROW(cat.find("object-missing"), NotFoundError);
}

TEST(Preview, ExactSizeMatchesIntegerAlphaBlend) {
  const Image bg = gradient_background(40, 30), obj = ramp_object(8, 6);
  const BBox box{5, 7, 8, 6};
  const Image out = copy_paste(bg, obj, box);
  ASSERT_EQ(out.channels, 3);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 40; ++x)
      for (int c = 0; c < 3; ++c) {
        const int b8 = float_to_level(bg.at(x, y, c));
        int expected = b8;
        if (x >= 5 && x < 13 && y >= 7 && y < 13) {
          expected = blend8(float_to_level(obj.at(x - 5, y - 7, 3)), float_to_level(obj.at(x - 5, y - 7, c)), b8);
        }
        ASSERT_EQ(float_to_level(out.at(x, y, c)), expected) << x << "," << y << "," << c;
        ASSERT_EQ(out.at(x, y, c), level_to_float(static_cast<std::uint8_t>(expected)));
      }
}

TEST(Preview, FitKeepsAspectAndCentres) {
  const auto p = fit_placement(10, 5, {0, 0, 20, 20});
  EXPECT_EQ(p.width, 20);
  EXPECT_EQ(p.height, 10);
  EXPECT_EQ(p.x, 0);
  EXPECT_EQ(p.y, 5);
  const auto q = fit_placement(4, 8, {10, 2, 6, 6});
  EXPECT_EQ(q.width, 3);
  EXPECT_EQ(q.height, 6);
}

TEST(Preview, ResizedObjectUsesBilinearThenBlend) {
  const Image bg = gradient_background(40, 30), obj = ramp_object(10, 10);
  const BBox box{2, 3, 20, 20};
  const Image scaled = resize_bilinear(obj, 20, 20);
  const Image out = copy_paste(bg, obj, box);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x)
      for (int c = 0; c < 3; ++c) {
        const double a = scaled.at(x, y, 3);
        const double v = a * scaled.at(x, y, c) + (1 - a) * bg.at(x + 2, y + 3, c);
        ASSERT_EQ(float_to_level(out.at(x + 2, y + 3, c)), float_to_level(static_cast<float>(v)));
      }
}

TEST(Preview, RejectsBboxOutsideBackground) {
  const Image bg = gradient_background(40, 30), obj = ramp_object(4, 4);
  try {
    copy_paste(bg, obj, {35, 0, 10, 10});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.fields(), std::vector<std::string>{"bbox.x"});
  }
  EXPECT_THROW(copy_paste(bg, obj, {0, 0, 0, 5}), ValidationError);
  EXPECT_THROW(parse_bbox("1,2,3"), ValidationError);
  EXPECT_EQ(parse_bbox("1,2.5,3,4"), (BBox{1, 2.5, 3, 4}));
}

TEST(Store, DurableAcrossReopen) {
  TempDir dir("store");
  std::vector<AnnotationRecord> written;
  {
    AnnotationStore s(dir / "ann.jsonl");
    for (int i = 0; i < 3; ++i) {
      AnnotationRecord r;
      r.object_id = "object-a_disc";
      r.background_id = "background-room";
      r.bbox = {1.0 + i, 2, 5, 5};
      written.push_back(s.append(r));
    }
  }
  EXPECT_EQ(written[0].id, "ann-000001");
  EXPECT_EQ(written[2].id, "ann-000003");
  AnnotationStore reopened(dir / "ann.jsonl");
  EXPECT_EQ(reopened.list(), written);
  AnnotationRecord next;
  next.object_id = "object-a_disc";
  next.background_id = "background-room";
  next.bbox = {0, 0, 1, 1};
  EXPECT_EQ(reopened.append(next).id, "ann-000004");
}

TEST(Store, CorruptLineReported) {
  TempDir dir("corrupt");
  objcomp::testing::write_text(dir / "ann.jsonl", "{\"id\":\"ann-000000\"}\n{broken\n");
  EXPECT_THROW(AnnotationStore(dir / "ann.jsonl"), std::exception);
}

TEST(Store, ConcurrentAppendsGetDistinctIds) {
  TempDir dir("conc");
  AnnotationStore s(dir / "ann.jsonl");
  std::vector<std::thread> threads;
  std::mutex m;
  std::set<std::string> ids;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&] {
      for (int i = 0; i < 10; ++i) {
        AnnotationRecord r;
        r.object_id = "object-a_disc";
        r.background_id = "background-room";
        r.bbox = {0, 0, 2, 2};
        const auto id = s.append(r).id;
        std::lock_guard lock(m);
        ids.insert(id);
      }
    });
  for (auto& t : threads) t.join();
  EXPECT_EQ(ids.size(), 80u);
  EXPECT_EQ(AnnotationStore(dir / "ann.jsonl").list().size(), 80u);
}

TEST(Store, ValidationNamesFields) {
  AssetFixture f;
  AssetCatalog cat(f.root());
  try {
    validate_new_record(json{{"object_id", "object-a_disc"}}, cat);
    FAIL();
  } catch (const ValidationError& e) {
    const std::set<std::string> fields(e.fields().begin(), e.fields().end());
    EXPECT_TRUE(fields.count("background_id"));
    EXPECT_TRUE(fields.count("bbox"));
  }
  const auto ok = validate_new_record(
      json{{"object_id", "object-a_disc"}, {"background_id", "background-room"}, {"bbox", {1, 1, 5, 8}}}, cat);
  EXPECT_DOUBLE_EQ(ok.scale, 0.5);
  EXPECT_THROW(validate_new_record(
                   json{{"object_id", "background-room"}, {"background_id", "background-room"}, {"bbox", {1, 1, 5, 8}}},
                   cat),
               ValidationError);
}

TEST(Export, MaskZeroExactlyInsideBbox) {
  AssetFixture f;
  AssetCatalog cat(f.root());
  AnnotationRecord r;
  r.id = "ann-000000";
  r.object_id = "object-b_star";
  r.background_id = "background-room";
  r.bbox = {3, 4, 10, 7};
  const auto reqs = export_requests({r}, cat, 25, 9);
  ASSERT_EQ(reqs.size(), 1u);
  EXPECT_EQ(reqs[0].steps, 25);
  const auto& m = reqs[0].mask;
  ASSERT_EQ(m.width, 40);
  ASSERT_EQ(m.height, 30);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 40; ++x) {
      const bool inside = x >= 3 && x < 13 && y >= 4 && y < 11;
      ASSERT_EQ(m.at(x, y, 0), inside ? 0.0f : 1.0f) << x << "," << y;
    }
  const auto j = export_json({r}, reqs);
  EXPECT_EQ(j[0]["mask"][4].get<std::string>().substr(0, 14), "11100000000001");
}

class ServerTest : public ::testing::Test {
 protected:
  void start() {
    ServerOptions o;
    o.asset_dir = assets.root();
    o.store_path = store_dir / "ann.jsonl";
    o.export_steps = 30;
    server = std::make_unique<AnnotationServer>(o);
    port = server->bind_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    thread = std::thread([this] { server->listen_after_bind(); });
    server->wait_until_ready();
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
  }
  void stop() {
    server->stop();
    if (thread.joinable()) thread.join();
    client.reset();
    server.reset();
  }
  void SetUp() override { start(); }
  void TearDown() override {
    if (server) stop();
  }

  AssetFixture assets;
  TempDir store_dir{"srv"};
  std::unique_ptr<AnnotationServer> server;
  std::unique_ptr<httplib::Client> client;
  std::thread thread;
  int port = -1;
};

TEST_F(ServerTest, ListsAssetsAndServesImages) {
  auto res = client->Get("/assets?kind=object");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const auto j = json::parse(res->body);
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j[0]["id"], "object-a_disc");
  auto img = client->Get("/assets/background-room/image");
  ASSERT_TRUE(img);
  EXPECT_EQ(img->status, 200);
  const Image decoded = decode_png(std::vector<std::uint8_t>(img->body.begin(), img->body.end()));
  EXPECT_EQ(decoded.width, 40);
  EXPECT_EQ(client->Get("/assets/object-nope/image")->status, 404);
  EXPECT_EQ(client->Get("/assets?kind=furniture")->status, 400);
}

TEST_F(ServerTest, PreviewMatchesLibraryCompositeAndIsDeterministic) {
  auto a = client->Get("/preview?object=object-b_star&background=background-room&bbox=5,7,8,6");
  auto b = client->Get("/preview?object=object-b_star&background=background-room&bbox=5,7,8,6");
  ASSERT_TRUE(a && b);
  ASSERT_EQ(a->status, 200);
  EXPECT_EQ(a->body, b->body);
  const Image got = decode_png(std::vector<std::uint8_t>(a->body.begin(), a->body.end()));
  const Image bg = read_png(assets.dir / "backgrounds/room.png");
  const Image obj = read_png(assets.dir / "objects/b_star.png");
  EXPECT_EQ(got, copy_paste(bg, obj, {5, 7, 8, 6}));
  auto bad = client->Get("/preview?object=object-b_star&background=background-room&bbox=38,0,8,6");
  ASSERT_EQ(bad->status, 400);
  EXPECT_EQ(json::parse(bad->body)["fields"], json::array({"bbox.x"}));
  EXPECT_EQ(client->Get("/preview?object=object-zzz&background=background-room&bbox=1,1,2,2")->status, 404);
}

TEST_F(ServerTest, CreateRestartListExport) {
  const json body{{"object_id", "object-a_disc"}, {"background_id", "background-room"}, {"bbox", {2, 3, 6, 4}}};
  auto res = client->Post("/annotations", body.dump(), "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 201);
  const auto created = json::parse(res->body);
  EXPECT_EQ(created["id"], "ann-000001");
  auto bad = client->Post("/annotations", json{{"object_id", "object-a_disc"}}.dump(), "application/json");
  EXPECT_EQ(bad->status, 400);
  EXPECT_FALSE(json::parse(bad->body)["fields"].empty());
  EXPECT_EQ(client->Post("/annotations", "{nope", "application/json")->status, 400);

  stop();
  start();
  auto list = client->Get("/annotations");
  ASSERT_EQ(list->status, 200);
  const auto records = json::parse(list->body);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0], created);

  auto exp = client->Get("/annotations/export");
  ASSERT_EQ(exp->status, 200);
  const auto e = json::parse(exp->body);
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0]["steps"], 30);
  const auto& rows = e[0]["mask"];
  ASSERT_EQ(rows.size(), 30u);
  for (int y = 0; y < 30; ++y) {
    const auto row = rows[y].get<std::string>();
    ASSERT_EQ(row.size(), 40u);
    for (int x = 0; x < 40; ++x) {
      const bool inside = x >= 2 && x < 8 && y >= 3 && y < 7;
      ASSERT_EQ(row[x], inside ? '0' : '1') << x << "," << y;
    }
  }
}
