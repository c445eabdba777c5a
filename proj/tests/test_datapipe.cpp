#include "oracles.hpp"
#include "sfanet/datapipe.hpp"

#include <doctest.h>

using namespace sfanet;

namespace {

ImageSample sample(std::string id, std::optional<Label> label) {
  ImageSample s;
  s.id = std::move(id);
  s.path = s.id + ".ppm";
  s.label = label;
  s.origin = "test";
  s.pixels = Image::filled(16, 16, 128);
  return s;
}

std::vector<Embedding> blobs() {
  std::vector<Embedding> e;
  const double pts[8][2] = {{0, 0}, {0.1, 0}, {0, 0.1}, {0.1, 0.1}, {10, 10}, {10.1, 10}, {10, 10.1}, {10.1, 10.1}};
  for (int i = 0; i < 8; ++i) e.push_back({"p" + std::to_string(i), (vector_t(2) << pts[i][0], pts[i][1]).finished()});
  return e;
}

/// Best 2-way split by exhaustive enumeration.
std::pair<double, unsigned> best_split(const std::vector<Embedding>& e) {
  const unsigned n = unsigned(e.size());
  double best = 1e300;
  unsigned best_mask = 0;
  for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
    if (mask & 1u) continue;  // fix point 0 in cluster 0 to skip mirrored labelings
    vector_t c[2] = {vector_t::Zero(2), vector_t::Zero(2)};
    int cnt[2] = {0, 0};
    for (unsigned i = 0; i < n; ++i) {
      const int k = (mask >> i) & 1u;
      c[k] += e[i].vector;
      ++cnt[k];
    }
    c[0] /= cnt[0];
    c[1] /= cnt[1];
    double obj = 0;
    for (unsigned i = 0; i < n; ++i) obj += (e[i].vector - c[(mask >> i) & 1u]).squaredNorm();
    if (obj < best) {
      best = obj;
      best_mask = mask;
    }
  }
  return {best, best_mask};
}

}  // namespace

TEST_CASE("csv quoting round trip") {
  const std::string odd = "a,\"b\"\nc";
  const auto rows = parse_csv("x," + csv_field(odd) + "\r\ny,z\n");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0][1] == odd);
  CHECK(rows[1] == std::vector<std::string>{"y", "z"});
  CHECK(parse_csv("a,,b\n")[0].size() == 3);
  CHECK_THROWS_AS(parse_csv("\"open"), IngestError);
}

TEST_CASE("manifest parsing") {
  const auto m = parse_manifest("id,path,label,origin,category\na,a.ppm,real,x,\nb,b.ppm,fake,y,white_happy\n");
  CHECK(m.size() == 2);
  CHECK(m.real == 1);
  CHECK(m.fake == 1);
  CHECK(m.samples[1].category == parse_category("white_happy"));
  CHECK_THROWS_WITH_AS(parse_manifest("id,path,label,origin,category\na,a.ppm,real,x,\nb,b.ppm,reall,y,\n"),
                       doctest::Contains("row 2"), IngestError);
  CHECK_THROWS_WITH_AS(parse_manifest("id,path,label,origin,category\n"), doctest::Contains("empty manifest"),
                       IngestError);
  CHECK_THROWS_AS(parse_manifest("id,path,label\na,b,real\n"), IngestError);
  CHECK_THROWS_AS(parse_manifest("id,path,label,origin,category\na,a.ppm,real,x,\na,b.ppm,fake,y,\n"), IngestError);
  CHECK_THROWS_AS(load_manifest("/nonexistent/manifest.csv"), IngestError);
  const auto u = parse_manifest("id,path,label,origin,category\na,a.ppm,,x,\n");
  CHECK(u.unlabeled == 1);
}

TEST_CASE("manifest write then load reproduces order, labels and checksum") {
  const auto dir = oracle::temp_dir("manifest");
  std::vector<ImageSample> v = {sample("z", Label::fake), sample("a", Label::real), sample("m", std::nullopt)};
  v[0].category = Category{RaceGroup::white, EmotionGroup::scared};
  v[1].origin = "with,comma";
  const Manifest m = make_manifest(v, dir);
  write_manifest(dir / "m.csv", m);
  const Manifest back = load_manifest(dir / "m.csv");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.samples[i].id == m.samples[i].id);
    CHECK(back.samples[i].label == m.samples[i].label);
    CHECK(back.samples[i].category == m.samples[i].category);
    CHECK(back.samples[i].origin == m.samples[i].origin);
  }
  CHECK(back.checksum == m.checksum);
  CHECK(indices_with_label(back, Label::real) == std::vector<std::size_t>{1});
  std::filesystem::remove_all(dir);
}

TEST_CASE("categorisation") {
  CHECK(to_string(*categorize_raw({"white", "happy"})) == "white_happy");
  CHECK(to_string(*categorize_raw({"asian", "sad"})) == "other_negative");
  CHECK(to_string(*categorize_raw({"white", "surprise"})) == "white_scared");
  CHECK(to_string(*categorize_raw({"black", "angry"})) == "other_negative");
  CHECK(to_string(*categorize_raw({"White", "Fear"})) == "white_scared");
  CHECK(to_string(*categorize_raw({"indian", "neutral"})) == "other_neutral");
  CHECK_FALSE(categorize_raw({"white", "bored"}));

  struct Failing : AttributePredictor {
    std::string name() const override { return "failing"; }
    RawAttributes predict(const ImageSample&, const Image&) const override { throw Error("boom"); }
  };
  const auto s = sample("x", Label::real);
  CHECK_FALSE(categorize(Failing{}, s, *s.pixels));

  // The stub is deterministic and total.
  StubAttributePredictor stub;
  std::mt19937_64 rng(1);
  std::array<int, 8> hist{};
  for (int i = 0; i < 64; ++i) {
    Image img(8, 8);
    for (int ch = 0; ch < 3; ++ch)
      for (Eigen::Index k = 0; k < 64; ++k) img.channel(ch)(k) = std::uint8_t(rng() & 0xff);
    const auto c = categorize(stub, s, img);
    REQUIRE(c);
    CHECK(categorize(stub, s, img) == c);
    ++hist[std::size_t(c->index())];
  }
  int total = 0;
  for (int h : hist) total += h;
  CHECK(total == 64);
}

TEST_CASE("category report") {
  std::vector<ImageSample> v = {sample("a", Label::real), sample("b", Label::fake), sample("c", Label::fake)};
  v[0].category = Category{RaceGroup::white, EmotionGroup::happy};
  v[1].category = Category{RaceGroup::white, EmotionGroup::happy};
  const Manifest m = make_manifest(v);
  const auto r = category_report(m, &m);
  const auto i = std::size_t(Category{RaceGroup::white, EmotionGroup::happy}.index());
  CHECK(r.train[i] == 2);
  CHECK(r.train_real[i] == 1);
  CHECK(r.validation_fake[i] == 1);
  CHECK(r.uncategorized_train == 1);
  CHECK(category_report_csv(r).find("white_happy,2,1,1,2,1,1") != std::string::npos);
}

TEST_CASE("k-means basics") {
  const auto e = blobs();
  const auto one = cluster_fakes(e, 1, 3);
  CHECK(one.sizes() == std::vector<long>{8});
  CHECK((one.centroids.row(0).transpose() - (vector_t(2) << 5.05, 5.05).finished()).norm() < 1e-12);
  CHECK_THROWS_AS(cluster_fakes(e, 9, 1), ConfigError);
  CHECK_THROWS_AS(cluster_fakes(e, 0, 1), ConfigError);
}

TEST_CASE("two separated blobs are recovered for every seed") {
  const auto e = blobs();
  const auto [best, mask] = best_split(e);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = cluster_fakes(e, 2, seed);
    for (int i = 0; i < 8; ++i) CHECK((a.cluster[std::size_t(i)] == a.cluster[0]) == (((mask >> i) & 1u) == 0));
    CHECK(kmeans_objective(e, a.cluster, a.centroids) == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("k-means properties on random data") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Embedding> e;
    for (int i = 0; i < 60; ++i) {
      vector_t v(3);
      v << n(rng), n(rng), n(rng);
      e.push_back({"e" + std::to_string(i), v});
    }
    const int k = 2 + trial % 4;
    const auto a = cluster_fakes(e, k, std::uint64_t(trial));
    const auto b = cluster_fakes(e, k, std::uint64_t(trial));
    CHECK(a.cluster == b.cluster);
    for (std::size_t i = 1; i < a.objective_history.size(); ++i)
      CHECK(a.objective_history[i] <= a.objective_history[i - 1] + 1e-12);
    long total = 0;
    for (long s : a.sizes()) {
      CHECK(s > 0);
      total += s;
    }
    CHECK(total == 60);
    // Fixed point: every point sits with its nearest centroid.
    for (std::size_t i = 0; i < e.size(); ++i) {
      Eigen::Index best = 0;
      (a.centroids.rowwise() - e[i].vector.transpose()).rowwise().squaredNorm().minCoeff(&best);
      CHECK(best == a.cluster[i]);
    }
  }
}

TEST_CASE("empty clusters are re-seeded") {
  // Duplicate points force k-means++ to pick coincident centres.
  std::vector<Embedding> e;
  for (int i = 0; i < 6; ++i) e.push_back({"d" + std::to_string(i), vector_t::Zero(2)});
  e.push_back({"far", (vector_t(2) << 5, 5).finished()});
  const auto a = cluster_fakes(e, 3, 1);
  for (long s : a.sizes()) CHECK(s > 0);
}

TEST_CASE("cluster file round trip") {
  const auto a = cluster_fakes(blobs(), 2, 4);
  const auto b = parse_cluster_csv(cluster_csv(a));
  CHECK(b.ids == a.ids);
  CHECK(b.cluster == a.cluster);
  CHECK(b.k == 2);
  CHECK_THROWS_AS(parse_cluster_csv("id,cluster\na,-1\n"), IngestError);
}

TEST_CASE("folds share the reals and partition the fakes") {
  std::vector<ImageSample> v;
  for (int i = 0; i < 10; ++i) v.push_back(sample("r" + std::to_string(i), Label::real));
  for (int i = 0; i < 20; ++i) v.push_back(sample("f" + std::to_string(i), Label::fake));
  const Manifest m = make_manifest(v);
  ClusterAssignment a;
  a.k = 5;
  for (int i = 0; i < 20; ++i) {
    a.ids.push_back("f" + std::to_string(i));
    a.cluster.push_back(i % 5);
  }
  const auto folds = build_folds(m, a);
  REQUIRE(folds.size() == 5);
  std::set<std::size_t> fakes;
  for (std::size_t f = 0; f < 5; ++f) {
    CHECK(folds[f].index == int(f) + 1);
    CHECK(folds[f].members.size() == 14);
    CHECK(folds[f].real_count == 10);
    for (std::size_t j = 10; j < 14; ++j) CHECK(fakes.insert(folds[f].members[j]).second);
  }
  CHECK(fakes.size() == 20);

  a.ids.pop_back();
  a.cluster.pop_back();
  CHECK_THROWS_AS(build_folds(m, a), ConsistencyError);
  a.ids.push_back("r0");
  a.cluster.push_back(0);
  CHECK_THROWS_AS(build_folds(m, a), ConsistencyError);
}

TEST_CASE("crop geometry on canonical masks") {
  const Image img = Image::filled(256, 256, 50);
  StubPartsProvider stub;
  ImageSample s = sample("c", Label::real);
  s.pixels = img;
  const auto report = stub.parse(s);
  const auto crops = extract_crops(img, report);
  REQUIRE(crops.kind == CropResult::Kind::dual_crop);
  // Eyes and brows span rows 60..110 (extent 50, pad 5); columns 60..196 (extent 136, pad 13.6).
  CHECK(*crops.eyes_box == CropBox{55, 47, 115, 209});
  // Lips span rows 170..200 (extent 30, pad 3), extended down to 230 for the chin.
  CHECK(crops.lips_box->row0 == 167);
  CHECK(crops.lips_box->row1 == 233);
  CHECK(crops.eyes_crop->height() == 61);
  CHECK(crops.lips_crop->height() == 67);
}

TEST_CASE("crops fall back to the full image when a part is missing") {
  const Image img = Image::filled(256, 256, 50);
  ImageSample s = sample("c", Label::real);
  s.pixels = img;
  const auto report = StubPartsProvider::missing(FacePart::right_eyebrow).parse(s);
  const auto crops = extract_crops(img, report);
  CHECK(crops.kind == CropResult::Kind::full_image);
  CHECK_FALSE(crops.eyes_crop);
  CHECK_FALSE(crops.lips_crop);
}

TEST_CASE("crops are clamped at the border and validated") {
  const int n = 40;
  const Image img = Image::filled(n, n, 50);
  FacePartsReport r;
  for (int i = 0; i < kFacePartCount; ++i) {
    Plane m = Plane::Zero(n, n);
    if (i < 4) m.block(0, 0, 10, n).setConstant(1);  // touches the top and both sides
    else m.block(30, 5, 10, 30).setConstant(1);        // touches the bottom
    r.set(static_cast<FacePart>(i), true, m);
  }
  const auto c = extract_crops(img, r);
  REQUIRE(c.kind == CropResult::Kind::dual_crop);
  for (const auto& b : {*c.eyes_box, *c.lips_box}) {
    CHECK(b.row0 >= 0);
    CHECK(b.col0 >= 0);
    CHECK(b.row1 <= n - 1);
    CHECK(b.col1 <= n - 1);
    CHECK(b.height() > 0);
    CHECK(b.width() > 0);
  }
  CHECK(c.lips_box->row1 == n - 1);

  FacePartsReport bad = r;
  bad.masks[0] = Plane::Zero(n + 1, n);
  CHECK_THROWS_AS(extract_crops(img, bad), ConsistencyError);
}

TEST_CASE("embedders") {
  DownsampleEmbedder d(4);
  const auto s = sample("e", Label::fake);
  const vector_t v = d.embed(s, *s.pixels);
  CHECK(v.size() == 16);
  CHECK(v.minCoeff() == doctest::Approx(128.0 / 255.0));
  CHECK_THROWS_AS(d.embed(s, Image::filled(2, 2, 0)), InvalidInput);

  const auto dir = oracle::temp_dir("embed");
  write_file_atomic(dir / "e.csv", "id,e0,e1\ne,1.5,2\n");
  EmbeddingTableEmbedder t(dir / "e.csv");
  CHECK(t.dim() == 2);
  CHECK(t.embed(s, *s.pixels)(1) == 2.0);
  CHECK_THROWS_AS(t.embed(sample("other", Label::fake), *s.pixels), IngestError);
  std::filesystem::remove_all(dir);
}
