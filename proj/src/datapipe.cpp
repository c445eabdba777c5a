#include "sfanet/datapipe.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

namespace sfanet {

// ---------------------------------------------------------------------------
// CSV

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
    }
  }
  if (quoted) throw IngestError("CSV ends inside a quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

namespace {

std::string join_header(const std::vector<std::string>& row) {
  std::string h;
  for (std::size_t i = 0; i < row.size(); ++i) h += (i ? "," : "") + row[i];
  return h;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifest

void Manifest::refresh() {
  real = fake = unlabeled = 0;
  for (const auto& s : samples) {
    if (!s.label) ++unlabeled;
    else if (*s.label == Label::real) ++real;
    else ++fake;
  }
  checksum = hex64(fnv1a64(manifest_csv(*this)));
}

Image Manifest::image(const ImageSample& s) const {
  if (s.pixels) return *s.pixels;
  if (s.path.is_relative() && !root.empty()) return read_pnm(root / s.path);
  return read_pnm(s.path);
}

Manifest make_manifest(std::vector<ImageSample> samples, std::filesystem::path root) {
  std::set<std::string> seen;
  for (const auto& s : samples) {
    if (s.id.empty()) throw IngestError("sample with empty id");
    if (!seen.insert(s.id).second) throw IngestError("duplicate sample id " + s.id);
  }
  Manifest m;
  m.samples = std::move(samples);
  m.root = std::move(root);
  m.refresh();
  return m;
}

std::string manifest_csv(const Manifest& m) {
  std::string out(kManifestHeader);
  out += '\n';
  for (const auto& s : m.samples) {
    out += csv_field(s.id) + ',' + csv_field(s.path.generic_string()) + ',' +
           (s.label ? std::string(to_string(*s.label)) : std::string()) + ',' + csv_field(s.origin) +
           ',' + (s.category ? to_string(*s.category) : std::string()) + '\n';
  }
  return out;
}

Manifest parse_manifest(std::string_view text, std::filesystem::path root) {
  const auto table = parse_csv(text);
  if (table.empty()) throw IngestError("empty manifest: no header");
  if (join_header(table[0]) != kManifestHeader)
    throw IngestError("manifest header must be '" + std::string(kManifestHeader) + "'");
  if (table.size() == 1) throw IngestError("empty manifest");
  std::vector<ImageSample> samples;
  samples.reserve(table.size() - 1);
  for (std::size_t i = 1; i < table.size(); ++i) {
    const auto& f = table[i];
    const std::string where = "manifest row " + std::to_string(i);
    if (f.size() != 5) throw IngestError(where + ": expected 5 fields, got " + std::to_string(f.size()));
    ImageSample s;
    s.id = f[0];
    s.path = f[1];
    if (!f[2].empty()) {
      s.label = parse_label(f[2]);
      if (!s.label) throw IngestError(where + ": unknown label '" + f[2] + "'");
    }
    s.origin = f[3];
    if (!f[4].empty()) {
      s.category = parse_category(f[4]);
      if (!s.category) throw IngestError(where + ": unknown category '" + f[4] + "'");
    }
    samples.push_back(std::move(s));
  }
  try {
    return make_manifest(std::move(samples), std::move(root));
  } catch (const IngestError& e) {
    throw IngestError(std::string("manifest: ") + e.what());
  }
}

Manifest load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IngestError("manifest not found: " + path.string());
  return parse_manifest(read_file(path), path.parent_path());
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  write_file_atomic(path, manifest_csv(m));
}

std::vector<std::size_t> indices_with_label(const Manifest& m, Label label) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.samples.size(); ++i)
    if (m.samples[i].label == label) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------
// Attributes

AttributeTablePredictor::AttributeTablePredictor(const std::filesystem::path& table) {
  const auto rows = parse_csv(read_file(table));
  if (rows.empty() || join_header(rows[0]) != "id,race,emotion")
    throw IngestError("attribute table needs header id,race,emotion: " + table.string());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 3) throw IngestError("attribute table row " + std::to_string(i) + ": expected 3 fields");
    rows_[rows[i][0]] = {rows[i][1], rows[i][2]};
  }
}

RawAttributes AttributeTablePredictor::predict(const ImageSample& sample, const Image&) const {
  const auto it = rows_.find(sample.id);
  if (it == rows_.end()) throw Error("no attributes for " + sample.id);
  return it->second;
}

RawAttributes StubAttributePredictor::predict(const ImageSample&, const Image& image) const {
  static constexpr std::array<const char*, 7> emotions = {"angry", "disgust", "fear",   "happy",
                                                          "sad",   "surprise", "neutral"};
  const matrix_t lum = image.luminance();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int c = 0; c < 3; ++c) {
    const Plane& p = image.channel(c);
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(p.data()), static_cast<std::size_t>(p.size())), h);
  }
  return {lum.mean() >= 0.5 ? "white" : "asian", emotions[h % emotions.size()]};
}

EmotionGrouping EmotionGrouping::standard() {
  EmotionGrouping g;
  g.table = {{"happy", EmotionGroup::happy},      {"neutral", EmotionGroup::neutral},
             {"angry", EmotionGroup::negative},   {"sad", EmotionGroup::negative},
             {"disgust", EmotionGroup::negative}, {"fear", EmotionGroup::scared},
             {"surprise", EmotionGroup::scared}};
  return g;
}

std::optional<Category> categorize_raw(const RawAttributes& raw, const EmotionGrouping& grouping) {
  const auto it = grouping.table.find(lower(raw.emotion));
  if (it == grouping.table.end()) return std::nullopt;
  Category c;
  c.race = lower(raw.race) == "white" ? RaceGroup::white : RaceGroup::other;
  c.emotion = it->second;
  return c;
}

std::optional<Category> categorize(const AttributePredictor& predictor, const ImageSample& sample,
                                   const Image& image, const EmotionGrouping& grouping) {
  try {
    return categorize_raw(predictor.predict(sample, image), grouping);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

CategoryReport category_report(const Manifest& train, const Manifest* validation) {
  CategoryReport r;
  auto tally = [](const Manifest& m, auto& total, auto& reals, auto& fakes, long& uncategorized) {
    for (const auto& s : m.samples) {
      if (!s.category) {
        ++uncategorized;
        continue;
      }
      const auto i = static_cast<std::size_t>(s.category->index());
      ++total[i];
      if (s.label == Label::real) ++reals[i];
      if (s.label == Label::fake) ++fakes[i];
    }
  };
  tally(train, r.train, r.train_real, r.train_fake, r.uncategorized_train);
  if (validation)
    tally(*validation, r.validation, r.validation_real, r.validation_fake, r.uncategorized_validation);
  return r;
}

std::string category_report_csv(const CategoryReport& r) {
  std::ostringstream os;
  os << "category,train,train_real,train_fake,validation,validation_real,validation_fake\n";
  for (int i = 0; i < Category::kCount; ++i) {
    const auto k = static_cast<std::size_t>(i);
    os << to_string(Category::from_index(i)) << ',' << r.train[k] << ',' << r.train_real[k] << ','
       << r.train_fake[k] << ',' << r.validation[k] << ',' << r.validation_real[k] << ','
       << r.validation_fake[k] << '\n';
  }
  os << "uncategorized," << r.uncategorized_train << ",,," << r.uncategorized_validation << ",,\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Embedders

vector_t DownsampleEmbedder::embed(const ImageSample&, const Image& image) const {
  const int h = image.height();
  const int w = image.width();
  if (h < side_ || w < side_) throw InvalidInput("image smaller than the embedding grid");
  const matrix_t lum = image.luminance();
  vector_t out(side_ * side_);
  for (int i = 0; i < side_; ++i) {
    const int r0 = i * h / side_, r1 = (i + 1) * h / side_;
    for (int j = 0; j < side_; ++j) {
      const int c0 = j * w / side_, c1 = (j + 1) * w / side_;
      out(i * side_ + j) = lum.block(r0, c0, r1 - r0, c1 - c0).mean();
    }
  }
  return out;
}

EmbeddingTableEmbedder::EmbeddingTableEmbedder(const std::filesystem::path& table) {
  const auto rows = parse_csv(read_file(table));
  if (rows.size() < 2 || rows[0].empty() || rows[0][0] != "id")
    throw IngestError("embedding table needs an id,e0,... header and at least one row");
  dim_ = static_cast<int>(rows[0].size()) - 1;
  if (dim_ < 1) throw IngestError("embedding table has no vector columns");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (static_cast<int>(rows[i].size()) != dim_ + 1)
      throw IngestError("embedding table row " + std::to_string(i) + ": wrong field count");
    vector_t v(dim_);
    try {
      for (int j = 0; j < dim_; ++j) v(j) = std::stod(rows[i][static_cast<std::size_t>(j) + 1]);
    } catch (const std::exception&) {
      throw IngestError("embedding table row " + std::to_string(i) + ": bad number");
    }
    rows_[rows[i][0]] = std::move(v);
  }
}

vector_t EmbeddingTableEmbedder::embed(const ImageSample& sample, const Image&) const {
  const auto it = rows_.find(sample.id);
  if (it == rows_.end()) throw IngestError("no embedding for " + sample.id);
  return it->second;
}

// ---------------------------------------------------------------------------
// k-means

int ClusterAssignment::cluster_of(const std::string& id) const {
  const auto it = std::find(ids.begin(), ids.end(), id);
  return it == ids.end() ? -1 : cluster[static_cast<std::size_t>(it - ids.begin())];
}

std::vector<long> ClusterAssignment::sizes() const {
  std::vector<long> out(static_cast<std::size_t>(k), 0);
  for (int c : cluster) ++out[static_cast<std::size_t>(c)];
  return out;
}

double kmeans_objective(std::span<const Embedding> embeddings, const std::vector<int>& cluster,
                        const matrix_t& centroids) {
  double total = 0.0;
  for (std::size_t i = 0; i < embeddings.size(); ++i)
    total += (embeddings[i].vector.transpose() - centroids.row(cluster[i])).squaredNorm();
  return total;
}

namespace {

// Portable uniform draw in [0,1).
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

ClusterAssignment cluster_fakes(std::span<const Embedding> embeddings, int k, std::uint64_t seed,
                                const KMeansOptions& options) {
  const auto n = static_cast<int>(embeddings.size());
  if (k < 1) throw ConfigError("k must be positive");
  if (k > n) throw ConfigError("k=" + std::to_string(k) + " exceeds the " + std::to_string(n) + " samples");
  if (options.max_iterations < 1) throw ConfigError("k-means needs at least one iteration");
  const auto dim = embeddings[0].vector.size();
  if (dim == 0) throw InvalidInput("empty embedding vector");
  matrix_t x(n, dim);
  for (int i = 0; i < n; ++i) {
    if (embeddings[static_cast<std::size_t>(i)].vector.size() != dim)
      throw InvalidInput("embedding " + embeddings[static_cast<std::size_t>(i)].id + " has the wrong dimension");
    x.row(i) = embeddings[static_cast<std::size_t>(i)].vector.transpose();
  }
  if (!x.allFinite()) throw InvalidInput("non-finite embedding value");

  std::mt19937_64 rng(seed);
  matrix_t centroids(k, dim);
  // k-means++ seeding
  centroids.row(0) = x.row(static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n)));
  vector_t d2 = (x.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    int pick = n - 1;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<int>(rng() % static_cast<std::uint64_t>(n));
    }
    centroids.row(c) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }

  ClusterAssignment out;
  out.k = k;
  out.seed = seed;
  for (const auto& e : embeddings) out.ids.push_back(e.id);
  std::vector<int> assign(static_cast<std::size_t>(n), -1);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    bool changed = false;
    double objective = 0.0;
    for (int i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      const double d = (centroids.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
      objective += d;
      if (assign[static_cast<std::size_t>(i)] != best) {
        assign[static_cast<std::size_t>(i)] = static_cast<int>(best);
        changed = true;
      }
    }
    out.objective_history.push_back(objective);
    out.iterations = iter + 1;
    if (!changed) break;

    // Update step; an empty cluster takes over the point farthest from its centroid.
    std::vector<long> count(static_cast<std::size_t>(k), 0);
    for (int c : assign) ++count[static_cast<std::size_t>(c)];
    for (int c = 0; c < k; ++c) {
      if (count[static_cast<std::size_t>(c)] > 0) continue;
      int far = -1;
      double far_d = -1.0;
      for (int i = 0; i < n; ++i) {
        const int own = assign[static_cast<std::size_t>(i)];
        if (count[static_cast<std::size_t>(own)] < 2) continue;
        const double d = (x.row(i) - centroids.row(own)).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far < 0) throw StateError("k-means could not re-seed an empty cluster");
      --count[static_cast<std::size_t>(assign[static_cast<std::size_t>(far)])];
      assign[static_cast<std::size_t>(far)] = c;
      count[static_cast<std::size_t>(c)] = 1;
    }
    centroids.setZero();
    for (int i = 0; i < n; ++i) centroids.row(assign[static_cast<std::size_t>(i)]) += x.row(i);
    for (int c = 0; c < k; ++c) centroids.row(c) /= static_cast<double>(count[static_cast<std::size_t>(c)]);
  }
  out.cluster = std::move(assign);
  out.centroids = std::move(centroids);
  return out;
}

std::string cluster_csv(const ClusterAssignment& a) {
  std::ostringstream os;
  os << "id,cluster\n";
  for (std::size_t i = 0; i < a.ids.size(); ++i) os << csv_field(a.ids[i]) << ',' << a.cluster[i] << '\n';
  return os.str();
}

ClusterAssignment parse_cluster_csv(std::string_view text) {
  const auto rows = parse_csv(text);
  if (rows.empty() || join_header(rows[0]) != "id,cluster")
    throw IngestError("cluster file needs header id,cluster");
  ClusterAssignment a;
  std::set<std::string> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 2) throw IngestError("cluster file row " + std::to_string(i) + ": expected 2 fields");
    int c = -1;
    try {
      std::size_t pos = 0;
      c = std::stoi(rows[i][1], &pos);
      if (pos != rows[i][1].size()) c = -1;
    } catch (const std::exception&) {
    }
    if (c < 0) throw IngestError("cluster file row " + std::to_string(i) + ": bad cluster index");
    if (!seen.insert(rows[i][0]).second) throw IngestError("cluster file lists " + rows[i][0] + " twice");
    a.ids.push_back(rows[i][0]);
    a.cluster.push_back(c);
    a.k = std::max(a.k, c + 1);
  }
  if (a.ids.empty()) throw IngestError("cluster file has no rows");
  return a;
}

// ---------------------------------------------------------------------------
// Folds

std::vector<Fold> build_folds(const Manifest& manifest, const ClusterAssignment& assignment) {
  if (assignment.k < 1) throw ConsistencyError("cluster assignment has no clusters");
  const auto fakes = indices_with_label(manifest, Label::fake);
  if (fakes.size() != assignment.ids.size())
    throw ConsistencyError("cluster assignment covers " + std::to_string(assignment.ids.size()) +
                           " samples but the manifest has " + std::to_string(fakes.size()) + " fakes");
  const auto reals = indices_with_label(manifest, Label::real);
  std::vector<Fold> folds(static_cast<std::size_t>(assignment.k));
  for (int i = 0; i < assignment.k; ++i) {
    auto& f = folds[static_cast<std::size_t>(i)];
    f.index = i + 1;
    f.members = reals;
    f.real_count = reals.size();
  }
  std::unordered_map<std::string, int> by_id;
  for (std::size_t i = 0; i < assignment.ids.size(); ++i)
    if (!by_id.emplace(assignment.ids[i], assignment.cluster[i]).second)
      throw ConsistencyError("cluster assignment lists " + assignment.ids[i] + " twice");
  for (std::size_t idx : fakes) {
    const auto it = by_id.find(manifest.samples[idx].id);
    const int c = it == by_id.end() ? -1 : it->second;
    if (c < 0 || c >= assignment.k)
      throw ConsistencyError("fake sample " + manifest.samples[idx].id + " has no cluster");
    folds[static_cast<std::size_t>(c)].members.push_back(idx);
  }
  return folds;
}

// ---------------------------------------------------------------------------
// Crops

std::optional<CropBox> mask_union_box(std::span<const Plane* const> masks) {
  std::optional<CropBox> box;
  for (const Plane* m : masks) {
    for (Eigen::Index r = 0; r < m->rows(); ++r)
      for (Eigen::Index c = 0; c < m->cols(); ++c) {
        if ((*m)(r, c) == 0) continue;
        const int ri = static_cast<int>(r), ci = static_cast<int>(c);
        if (!box) {
          box = CropBox{ri, ci, ri, ci};
        } else {
          box->row0 = std::min(box->row0, ri);
          box->row1 = std::max(box->row1, ri);
          box->col0 = std::min(box->col0, ci);
          box->col1 = std::max(box->col1, ci);
        }
      }
  }
  return box;
}

namespace {

// Pad is a fraction of the tight extent (last - first index) on each side.
CropBox pad_and_clamp(CropBox b, int tight_rows, int tight_cols, double fraction, int h, int w) {
  const double pr = fraction * tight_rows;
  const double pc = fraction * tight_cols;
  CropBox out;
  out.row0 = std::max(0, static_cast<int>(std::ceil(b.row0 - pr)));
  out.row1 = std::min(h - 1, static_cast<int>(std::floor(b.row1 + pr)));
  out.col0 = std::max(0, static_cast<int>(std::ceil(b.col0 - pc)));
  out.col1 = std::min(w - 1, static_cast<int>(std::floor(b.col1 + pc)));
  return out;
}

}  // namespace

CropResult extract_crops(const Image& image, const FacePartsReport& report, const CropGeometry& geometry) {
  CropResult out;
  if (!report.gate()) return out;
  const int h = image.height(), w = image.width();
  std::array<const Plane*, kFacePartCount> masks{};
  for (int i = 0; i < kFacePartCount; ++i) {
    const auto& m = report.masks[static_cast<std::size_t>(i)];
    const auto part = std::string(to_string(static_cast<FacePart>(i)));
    if (!m) throw ConsistencyError("part " + part + " is present but has no mask");
    if (m->rows() != h || m->cols() != w)
      throw ConsistencyError("mask for " + part + " is " + std::to_string(m->rows()) + "x" +
                             std::to_string(m->cols()) + ", image is " + std::to_string(h) + "x" +
                             std::to_string(w));
    masks[static_cast<std::size_t>(i)] = &*m;
  }
  const auto eyes = mask_union_box(std::span<const Plane* const>(masks.data(), 4));
  const auto lips = mask_union_box(std::span<const Plane* const>(masks.data() + 4, 2));
  if (!eyes || !lips) throw ConsistencyError("present parts have empty masks");

  const CropBox eb = pad_and_clamp(*eyes, eyes->row1 - eyes->row0, eyes->col1 - eyes->col0,
                                   geometry.pad_fraction, h, w);
  CropBox lx = *lips;
  const int lip_rows = lips->row1 - lips->row0;
  lx.row1 = lips->row1 + static_cast<int>(std::lround(geometry.chin_extension * lip_rows));
  const CropBox lb = pad_and_clamp(lx, lip_rows, lips->col1 - lips->col0, geometry.pad_fraction, h, w);

  out.kind = CropResult::Kind::dual_crop;
  out.eyes_box = eb;
  out.lips_box = lb;
  out.eyes_crop = image.crop(eb.row0, eb.col0, eb.row1, eb.col1);
  out.lips_crop = image.crop(lb.row0, lb.col0, lb.row1, lb.col1);
  return out;
}

}  // namespace sfanet
