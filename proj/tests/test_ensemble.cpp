#include "sfanet/ensemble.hpp"

#include <doctest.h>

#include <atomic>
#include <random>
#include <thread>

using namespace sfanet;

namespace {

ImageSample face(const std::string& id, int side = 64, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  Image img(side, side);
  for (int ch = 0; ch < 3; ++ch)
    for (Eigen::Index i = 0; i < img.channel(ch).size(); ++i) img.channel(ch)(i) = std::uint8_t(rng() & 0xff);
  ImageSample s;
  s.id = id;
  s.pixels = img;
  return s;
}

EnsembleConfig constant_ensemble(double a, double b, double c) {
  EnsembleConfig e;
  e.swinatten = constant_scorer("swinatten", a);
  e.swinfusion = constant_scorer("swinfusion", b);
  e.sfnet = constant_scorer("sfnet", c);
  return e;
}

struct NotReady final : ImageScorer {
  std::string name() const override { return "not_ready"; }
  bool ready() const override { return false; }
  Score score(const Image&) const override { return Score(0.5); }
};

struct FixedRes final : ImageScorer {
  int res;
  explicit FixedRes(int r) : res(r) {}
  std::string name() const override { return "fixed"; }
  std::optional<int> resolution() const override { return res; }
  Score score(const Image&) const override { return Score(0.5); }
};

ModelConfig tiny(ModelKind kind) {
  ModelConfig c;
  c.kind = kind;
  c.resolution = 16;
  c.patch_size = 8;
  c.extractor.preset = "patch_mean_std";
  c.extractor.patch_size = 8;
  c.encoder.channels = 2;
  c.encoder.freq_dim = 3;
  c.dropout = 0.0;
  return c;
}

}  // namespace

TEST_CASE("gate true averages the pair exactly") {
  const auto cfg = constant_ensemble(0.8, 0.6, 0.1);
  const auto r = final_pipeline_score(cfg, StubPartsProvider::all_present(), face("a"));
  CHECK(r.path == PathTaken::gated_pair);
  CHECK(r.fused.value() == (0.8 + 0.6) / 2.0);
  CHECK(*r.swinatten == 0.8);
  CHECK(*r.swinfusion == 0.6);
  CHECK_FALSE(r.sfnet);
  CHECK(r.verdict == Label::real);
}

TEST_CASE("gate false returns the fallback score exactly") {
  const auto cfg = constant_ensemble(0.8, 0.6, 0.1);
  for (int p = 0; p < kFacePartCount; ++p) {
    const auto r = final_pipeline_score(cfg, StubPartsProvider::missing(FacePart(p)), face("a"));
    CHECK(r.path == PathTaken::fallback);
    CHECK(r.fused.value() == 0.1);
    CHECK(*r.sfnet == 0.1);
    CHECK_FALSE(r.swinatten);
    CHECK(r.verdict == Label::fake);
  }
}

TEST_CASE("router agrees with the rule on random scores and gates") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 200; ++i) {
    const double a = u(rng), b = u(rng), c = u(rng);
    std::array<bool, kFacePartCount> present{};
    bool all = true;
    for (auto& x : present) {
      x = u(rng) < 0.85;
      all = all && x;
    }
    auto cfg = constant_ensemble(a, b, c);
    cfg.parallel = i % 2 == 0;
    const auto r = final_pipeline_score(cfg, StubPartsProvider(present), face("r"));
    const double expect = all ? (a + b) / 2.0 : c;
    CHECK(r.fused.value() == expect);
    CHECK(r.verdict == (expect < 0.3 ? Label::fake : Label::real));
  }
}

TEST_CASE("threshold is a parameter of the ensemble") {
  auto cfg = constant_ensemble(0.4, 0.4, 0.4);
  CHECK(final_pipeline_score(cfg, StubPartsProvider::all_present(), face("t")).verdict == Label::real);
  cfg.policy = DecisionPolicy(0.5);
  CHECK(final_pipeline_score(cfg, StubPartsProvider::all_present(), face("t")).verdict == Label::fake);
  cfg.policy = DecisionPolicy(0.4);
  CHECK(final_pipeline_score(cfg, StubPartsProvider::all_present(), face("t")).verdict == Label::real);
}

TEST_CASE("all-absent provider makes the ensemble equal the fallback model") {
  auto sa = std::make_shared<ModelBundle>(ModelBundle::initialized(tiny(ModelKind::swinatten), 1));
  auto sf = std::make_shared<ModelBundle>(ModelBundle::initialized(tiny(ModelKind::swinfusion), 2));
  auto sn = std::make_shared<ModelBundle>(ModelBundle::initialized(tiny(ModelKind::sfnet), 3));
  EnsembleConfig cfg;
  cfg.swinatten = std::make_shared<BundleScorer>(sa, "swinatten");
  cfg.swinfusion = std::make_shared<BundleScorer>(sf, "swinfusion");
  cfg.sfnet = std::make_shared<BundleScorer>(sn, "sfnet");
  const StubPartsProvider none({false, false, false, false, false, false}, false);
  for (std::uint64_t i = 0; i < 10; ++i) {
    const auto s = face("x", 16, i);
    const auto r = final_pipeline_score(cfg, none, s);
    CHECK(r.fused.value() == sn->score(*s.pixels).value());
    const auto g = final_pipeline_score(cfg, StubPartsProvider::all_present(), s);
    CHECK(g.fused.value() == (sa->score(*s.pixels).value() + sf->score(*s.pixels).value()) / 2.0);
  }
  // Other sizes are resized to the bundle resolution.
  CHECK_NOTHROW(final_pipeline_score(cfg, none, face("big", 32)));
}

TEST_CASE("provider failure routes to the fallback") {
  const auto cfg = constant_ensemble(0.9, 0.9, 0.2);
  const auto r = final_pipeline_score(cfg, FailingPartsProvider{}, face("f"));
  CHECK(r.path == PathTaken::fallback);
  CHECK(r.fused.value() == 0.2);
  const auto rep = detect_parts(FailingPartsProvider{}, face("f"));
  CHECK_FALSE(rep.gate());
  CHECK(rep.error);
}

TEST_CASE("model failures surface as pipeline errors") {
  auto cfg = constant_ensemble(0.5, 0.5, 0.5);
  cfg.sfnet = std::make_shared<FunctionScorer>("broken", [](const Image&) -> double { throw InvalidInput("x"); });
  CHECK_THROWS_AS(final_pipeline_score(cfg, FailingPartsProvider{}, face("e")), PipelineError);
  cfg.swinatten = std::make_shared<FunctionScorer>("nan", [](const Image&) { return 2.0; });
  CHECK_THROWS_AS(final_pipeline_score(cfg, StubPartsProvider::all_present(), face("e")), PipelineError);
}

TEST_CASE("ensemble validation") {
  auto cfg = constant_ensemble(0.5, 0.5, 0.5);
  cfg.sfnet.reset();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = constant_ensemble(0.5, 0.5, 0.5);
  cfg.swinfusion = std::make_shared<NotReady>();
  CHECK_THROWS_AS(final_pipeline_score(cfg, StubPartsProvider::all_present(), face("v")), StateError);
  cfg = constant_ensemble(0.5, 0.5, 0.5);
  cfg.swinatten = std::make_shared<FixedRes>(224);
  cfg.sfnet = std::make_shared<FixedRes>(256);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.sfnet = std::make_shared<FixedRes>(224);
  CHECK_NOTHROW(cfg.validate());
  auto unloaded = std::make_shared<ModelBundle>(tiny(ModelKind::sfnet));
  cfg.sfnet = std::make_shared<BundleScorer>(unloaded, "sfnet");
  CHECK_THROWS_AS(cfg.validate(), StateError);
}

TEST_CASE("gate models run concurrently when parallel") {
  std::atomic<int> inside{0}, peak{0};
  auto slow = [&](const Image&) {
    const int now = ++inside;
    int p = peak.load();
    while (now > p && !peak.compare_exchange_weak(p, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    --inside;
    return 0.5;
  };
  EnsembleConfig cfg;
  cfg.swinatten = std::make_shared<FunctionScorer>("a", slow);
  cfg.swinfusion = std::make_shared<FunctionScorer>("b", slow);
  cfg.sfnet = constant_scorer("c", 0.5);
  final_pipeline_score(cfg, StubPartsProvider::all_present(), face("p"));
  CHECK(peak.load() == 2);
}

TEST_CASE("face-crop scoring") {
  auto eyes = constant_scorer("eyes", 0.9);
  auto lips = constant_scorer("lips", 0.2);
  const auto s = face("c", 256);
  const auto r = facecrop_score(*eyes, *lips, StubPartsProvider::all_present(), s);
  CHECK(r.path == PathTaken::facecrop);
  CHECK(r.fused.value() == (0.9 + 0.2) / 2.0);
  for (int p = 0; p < kFacePartCount; ++p) {
    const auto d = facecrop_score(*eyes, *lips, StubPartsProvider::missing(FacePart(p)), s);
    CHECK(d.path == PathTaken::facecrop_default);
    CHECK(d.fused.value() == 0.5);
  }
  CHECK(facecrop_score(*eyes, *lips, FailingPartsProvider{}, s).fused.value() == 0.5);

  // The crop models see crops, not the full frame.
  std::vector<std::pair<int, int>> seen;
  auto record = std::make_shared<FunctionScorer>("rec", [&](const Image& img) {
    seen.emplace_back(img.height(), img.width());
    return 0.5;
  });
  facecrop_score(*record, *record, StubPartsProvider::all_present(), s);
  REQUIRE(seen.size() == 2);
  CHECK(seen[0] == std::pair{61, 163});
  CHECK(seen[1].first == 67);

  // Gate true with no usable masks is an inconsistency, not a silent default.
  const StubPartsProvider maskless({true, true, true, true, true, true}, false);
  CHECK_THROWS_AS(facecrop_score(*eyes, *lips, maskless, s), PipelineError);
  NotReady nr;
  CHECK_THROWS_AS(facecrop_score(nr, *lips, StubPartsProvider::all_present(), s), StateError);
}

TEST_CASE("score file round trip") {
  std::vector<PipelineScore> rows(3);
  rows[0].id = "a";
  rows[0].path = PathTaken::gated_pair;
  rows[0].swinatten = 0.1 + 0.2;
  rows[0].swinfusion = 1.0 / 3.0;
  rows[0].fused = Score((*rows[0].swinatten + *rows[0].swinfusion) / 2);
  rows[1].id = "b,\"quoted\"";
  rows[1].path = PathTaken::fallback;
  rows[1].sfnet = 0.01;
  rows[1].fused = Score(0.01);
  rows[1].verdict = Label::fake;
  rows[2].id = "c";
  rows[2].path = PathTaken::facecrop_default;
  const auto text = score_file_csv(rows);
  CHECK(text.rfind(std::string(kScoreFileHeader) + "\n", 0) == 0);
  const auto back = parse_score_file(text);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].id == rows[i].id);
    CHECK(back[i].path == rows[i].path);
    CHECK(back[i].swinatten == rows[i].swinatten);
    CHECK(back[i].swinfusion == rows[i].swinfusion);
    CHECK(back[i].sfnet == rows[i].sfnet);
    CHECK(back[i].fused == rows[i].fused);
    CHECK(back[i].verdict == rows[i].verdict);
  }
  CHECK(score_file_csv(back) == text);
  CHECK_THROWS_AS(parse_score_file("id,score\n"), IngestError);
  CHECK_THROWS_AS(parse_score_file(std::string(kScoreFileHeader) + "\na,teleport,,,,0.5,real\n"), IngestError);
  CHECK_THROWS_AS(parse_score_file(std::string(kScoreFileHeader) + "\na,single,,,,,real\n"), IngestError);
}
