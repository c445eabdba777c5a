// One PASS/FAIL line per acceptance criterion. Exit status is non-zero if any fail.
#include "oracles.hpp"
#include "sfanet/ensemble.hpp"
#include "sfanet/freqfeat.hpp"
#include "sfanet/metrics.hpp"
#include "sfanet/synthetic.hpp"
#include "sfanet/trainsched.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>

using namespace sfanet;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

int failures = 0;

void criterion(const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s %s (%.1fs) %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), secs, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

Image random_image(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image img(n, n);
  for (int ch = 0; ch < 3; ++ch)
    for (Eigen::Index i = 0; i < img.channel(ch).size(); ++i) img.channel(ch)(i) = std::uint8_t(rng() & 0xff);
  return img;
}

// ---------------------------------------------------------------------------

Outcome weighted_accuracy_check() {
  const long n[] = {79, 653, 554, 77, 109, 783, 594, 190};
  const double acc[] = {0.9241, 0.9158, 0.9025, 0.7792, 0.8257, 0.8748, 0.8704, 0.8158};
  std::vector<metrics::CategoryStat> stats;
  for (int i = 0; i < 8; ++i) stats.push_back({Category::from_index(i), n[i], acc[i]});
  const double w = metrics::weighted_accuracy(stats);
  Outcome o;
  o.detail = "weighted_accuracy=" + fmt(w);
  o.require(std::abs(w - 0.8812) <= 0.0005, "weighted accuracy " + fmt(w) + " outside 0.8812 +- 0.0005");
  return o;
}

Outcome metric_oracles() {
  Outcome o;
  std::mt19937_64 rng(2024);
  double worst = 0;
  const metrics::DcfParams dcf{};
  for (int i = 0; i < 1000; ++i) {
    const auto set = oracle::random_set(rng, 100, i % 2 == 1);
    o.require(metrics::roc_auc(set) == oracle::auc(set), "AUC mismatch on set " + std::to_string(i));
    for (double tau : {0.1, 0.3, 0.5, 0.77}) {
      const auto got = metrics::threshold_metrics(set, DecisionPolicy(tau)).counts;
      const auto want = oracle::confusion(set, tau);
      o.require(got.tp == want.tp && got.fp == want.fp && got.tn == want.tn && got.fn == want.fn,
                "confusion mismatch on set " + std::to_string(i));
    }
    const double de = std::abs(metrics::eer(set) - oracle::eer(set));
    const double dd = std::abs(metrics::min_dcf(set, dcf) - oracle::min_dcf(set, dcf.c_miss, dcf.c_fa, dcf.p_target));
    worst = std::max({worst, de, dd});
  }
  o.require(worst <= 1e-9, "EER/DCF deviation " + fmt(worst));
  if (o.pass) o.detail = "1000 sets, max EER/DCF deviation " + fmt(worst);
  return o;
}

Outcome fft_suite() {
  Outcome o;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  double worst = 0;
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0}); };
  for (int n = 4; n <= 64; ++n) {
    matrix_t f(n, n);
    for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = u(rng);
    const auto X = freq::fft2(f);
    // Parseval
    const double lhs = f.squaredNorm();
    const double rhs = X.cwiseAbs2().sum() / double(n * n);
    worst = std::max(worst, rel(lhs, rhs));
    // Conjugate symmetry of a real input.
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        worst = std::max(worst, std::abs(X(a, b) - std::conj(X((n - a) % n, (n - b) % n))) /
                                    std::max(1.0, std::abs(X(a, b))));
    // Direct DFT on a subset of sizes (it is O(n^4)).
    if (n <= 16 || n == 31 || n == 32) {
      const auto D = oracle::dft2(f);
      worst = std::max(worst, (X - D).norm() / D.norm());
    }
    // Constant image: all energy at DC.
    const auto C = freq::fft_magnitude_phase(matrix_t::Constant(n, n, 0.5));
    worst = std::max(worst, rel(C.magnitude(0, 0), 0.5 * n * n));
    worst = std::max(worst, (C.magnitude.sum() - C.magnitude(0, 0)) / (n * n));
    // Impulse: flat magnitude.
    matrix_t d = matrix_t::Zero(n, n);
    d(0, 0) = 1;
    const auto I = freq::fft_magnitude_phase(d);
    worst = std::max(worst, (I.magnitude.array() - 1.0).abs().maxCoeff());
    worst = std::max(worst, I.phase.cwiseAbs().maxCoeff());
    // Patch tiling: each patch spectrum equals the FFT of the cropped tile.
    for (int p = 2; p <= n / 2; ++p) {
      if (n % p != 0) continue;
      const auto ps = freq::per_patch_spectra(f, p);
      o.require(ps.size() == std::size_t((n / p) * (n / p)), "patch count for n=" + std::to_string(n));
      for (int k = 0; k < int(ps.size()); ++k) {
        const matrix_t block = f.block((k / (n / p)) * p, (k % (n / p)) * p, p, p);
        const auto ref = freq::fft2(block);
        worst = std::max(worst, (ps.patches[std::size_t(k)].magnitude - ref.cwiseAbs()).norm() /
                                    std::max(1.0, ref.cwiseAbs().norm()));
      }
    }
  }
  o.require(worst <= 1e-9, "max relative error " + fmt(worst));
  if (o.pass) o.detail = "sizes 4..64, max relative error " + fmt(worst);
  return o;
}

ModelConfig tiny(ModelKind kind) {
  ModelConfig c;
  c.kind = kind;
  c.resolution = 8;
  c.patch_size = 4;
  c.extractor.preset = "patch_mean_std";
  c.extractor.patch_size = 4;
  c.encoder.channels = 2;
  c.encoder.freq_dim = 3;
  c.dropout = 0.0;
  return c;
}

const ModelKind kAllKinds[] = {ModelKind::sfnet, ModelKind::sfpnet, ModelKind::swinatten, ModelKind::swinfusion,
                               ModelKind::facecrop_pair};

Outcome head_contracts() {
  Outcome o;
  for (ModelKind k : kAllKinds) {
    ModelBundle b = ModelBundle::initialized(tiny(k), 1);
    auto w = b.weights();
    for (auto& m : w) m.setZero();
    b.set_weights(w);
    o.require(b.score(random_image(8, 2)).value() == 0.5, std::string("zeroed ") + std::string(to_string(k)));
  }

  {
    ModelConfig cfg = tiny(ModelKind::sfpnet);
    cfg.resolution = 16;
    ModelBundle b = ModelBundle::initialized(cfg, 5);
    auto& det = b.model();
    const PreparedInput in = det.prepare(random_image(16, 4));
    std::vector<int> perm(in.spectra.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(9);
    std::shuffle(perm.begin(), perm.end(), rng);
    PreparedInput sh = in;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      sh.spatial.row(Eigen::Index(i)) = in.spatial.row(perm[i]);
      sh.spectra[i] = in.spectra[std::size_t(perm[i])];
    }
    const double d = std::abs(det.logit(in) - det.logit(sh));
    o.require(d <= 1e-6, "SFPnet permutation deviation " + fmt(d));
  }

  double worst = 0;
  for (ModelKind k : kAllKinds) {
    ModelBundle b = ModelBundle::initialized(tiny(k), 11);
    Detector& det = b.model();
    const PreparedInput in = det.prepare(random_image(8, 12));
    det.zero_grad();
    det.train_logit(in, nullptr);
    det.backward(1.0);
    for (auto* p : det.parameters()) {
      matrix_t num(p->value.rows(), p->value.cols());
      for (Eigen::Index i = 0; i < p->value.size(); ++i) {
        const double keep = p->value(i), h = 1e-6;
        p->value(i) = keep + h;
        const double up = det.logit(in);
        p->value(i) = keep - h;
        const double down = det.logit(in);
        p->value(i) = keep;
        num(i) = (up - down) / (2 * h);
      }
      worst = std::max(worst, (p->grad - num).norm() / std::max({p->grad.norm(), num.norm(), 1e-4}));
    }
  }
  o.require(worst <= 1e-4, "gradient relative error " + fmt(worst));

  std::mt19937_64 rng(21);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  for (int trial = 0; trial < 20; ++trial) {
    const int grid = pick(1, 4), patch = 4 * pick(1, 2), S = pick(1, 6), Fq = pick(1, 5), B = pick(1, 3);
    ModelConfig cfg;
    cfg.kind = ModelKind::sfpnet;
    cfg.resolution = grid * patch;
    cfg.patch_size = patch;
    cfg.extractor.preset = "projection";
    cfg.extractor.patch_size = patch;
    cfg.extractor.dim = S;
    cfg.encoder.channels = 2;
    cfg.encoder.freq_dim = Fq;
    ModelBundle b = ModelBundle::initialized(cfg, std::uint64_t(trial));
    auto& det = dynamic_cast<SfpnetModel&>(b.model());
    std::vector<Image> batch;
    for (int i = 0; i < B; ++i) batch.push_back(random_image(cfg.resolution, std::uint64_t(trial * 10 + i)));
    for (const auto& img : batch) {
      const matrix_t f = det.fuse(det.prepare(img));
      o.require(f.rows() == grid * grid && f.cols() == S + Fq, "shape chain trial " + std::to_string(trial));
    }
    o.require(sfpnet_forward(b, batch).size() == std::size_t(B), "batch size trial " + std::to_string(trial));
  }
  if (o.pass) o.detail = "max gradient relative error " + fmt(worst);
  return o;
}

Outcome router() {
  Outcome o;
  ImageSample s;
  s.id = "x";
  s.pixels = random_image(64, 1);
  EnsembleConfig cfg;
  cfg.swinatten = constant_scorer("swinatten", 0.8);
  cfg.swinfusion = constant_scorer("swinfusion", 0.5);
  cfg.sfnet = constant_scorer("sfnet", 0.15);
  const auto g = final_pipeline_score(cfg, StubPartsProvider::all_present(), s);
  o.require(g.path == PathTaken::gated_pair && g.fused.value() == (0.8 + 0.5) / 2, "gate-true mean");
  const auto f = final_pipeline_score(cfg, StubPartsProvider::missing(FacePart::upper_lip), s);
  o.require(f.path == PathTaken::fallback && f.fused.value() == 0.15, "gate-false fallback");
  const auto c = facecrop_score(*cfg.swinatten, *cfg.swinfusion, StubPartsProvider::missing(FacePart::left_eye), s);
  o.require(c.fused.value() == 0.5, "face-crop default");

  ModelConfig mc = tiny(ModelKind::sfnet);
  auto sn = std::make_shared<ModelBundle>(ModelBundle::initialized(mc, 3));
  mc.kind = ModelKind::swinatten;
  auto sa = std::make_shared<ModelBundle>(ModelBundle::initialized(mc, 4));
  mc.kind = ModelKind::swinfusion;
  auto sf = std::make_shared<ModelBundle>(ModelBundle::initialized(mc, 5));
  EnsembleConfig real;
  real.swinatten = std::make_shared<BundleScorer>(sa, "swinatten");
  real.swinfusion = std::make_shared<BundleScorer>(sf, "swinfusion");
  real.sfnet = std::make_shared<BundleScorer>(sn, "sfnet");
  const StubPartsProvider none({false, false, false, false, false, false}, false);
  for (std::uint64_t i = 0; i < 50; ++i) {
    ImageSample t;
    t.id = "t";
    t.pixels = random_image(8, 100 + i);
    o.require(final_pipeline_score(real, none, t).fused.value() == sn->score(*t.pixels).value(),
              "all-gate-false ensemble differs from SFnet");
  }
  return o;
}

Outcome sequential_training() {
  Outcome o;
  const auto s = make_schedule(5, 3, 3);
  const std::vector<std::string> want = {"fold_1", "fold_2", "fold_3", "fold_4", "fold_5", "FULL"};
  o.require(s.phases.size() == 6 && s.total_epochs() == 18, "schedule shape");
  for (std::size_t i = 0; i < std::min<std::size_t>(6, s.phases.size()); ++i)
    o.require(s.phases[i].dataset() == want[i] && s.phases[i].epochs == 3, "phase " + std::to_string(i + 1));

  synthetic::CorpusSpec spec;
  spec.real = 20;
  spec.fake = 40;
  spec.size = 16;
  const Manifest m = make_manifest(synthetic::make_corpus(spec));
  std::vector<Embedding> emb;
  const DownsampleEmbedder embedder(4);
  for (const auto& smp : m.samples)
    if (smp.label == Label::fake) emb.push_back({smp.id, embedder.embed(smp, *smp.pixels)});
  const auto folds = build_folds(m, cluster_fakes(emb, 5, 7));

  ModelConfig cfg;
  cfg.kind = ModelKind::swinfusion;
  cfg.resolution = 16;
  cfg.extractor.preset = "global_mean";
  cfg.head_hidden = 0;
  cfg.dropout = 0.0;
  TrainConfig tc;
  tc.learning_rate = 0.05;
  tc.batch_size = 8;

  auto run = [&](bool check_boundaries) {
    ModelBundle model = ModelBundle::initialized(cfg, 1);
    std::vector<std::vector<matrix_t>> starts, ends;
    SequentialOptions opts;
    opts.on_phase_start = [&](const Phase&, int, const ModelBundle& b) { starts.push_back(b.weights()); };
    opts.on_phase_end = [&](const Phase&, int, const ModelBundle& b) { ends.push_back(b.weights()); };
    const auto r = run_sequential(model, m, folds, s, tc, opts);
    if (check_boundaries) {
      o.require(model.weights().size() == 2, "stub model should have two parameters");
      o.require(starts.size() == 6 && ends.size() == 6, "phase callbacks");
      for (std::size_t i = 0; i + 1 < std::min(starts.size(), ends.size()); ++i)
        for (std::size_t j = 0; j < ends[i].size(); ++j)
          o.require(ends[i][j] == starts[i + 1][j], "weights changed across boundary " + std::to_string(i + 1));
    }
    return r.phases.front().loss_curve;
  };
  const auto a = run(true), b = run(false);
  o.require(!a.empty() && a == b, "phase-1 loss curves differ between seeded reruns");
  if (o.pass) o.detail = "phase-1 curve of " + std::to_string(a.size()) + " steps reproduced";
  return o;
}

Outcome desk_scale() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  synthetic::CorpusSpec spec;  // 400 + 400 at 64x64
  const Manifest train = make_manifest(synthetic::make_corpus(spec));
  synthetic::CorpusSpec vspec = spec;
  vspec.real = 100;
  vspec.fake = 100;
  vspec.seed = 99;
  const Manifest val = make_manifest(synthetic::make_corpus(vspec));

  ModelConfig cfg;
  cfg.kind = ModelKind::sfnet;
  cfg.resolution = 64;
  cfg.extractor.preset = "patch_mean";
  cfg.extractor.patch_size = 16;
  cfg.encoder.channels = 4;
  cfg.encoder.freq_dim = 8;
  cfg.dropout = 0.1;
  TrainConfig tc;
  tc.learning_rate = 3e-3;
  tc.batch_size = 32;

  auto fit = [&](bool ablate) {
    ModelConfig c = cfg;
    c.ablate_frequency = ablate;
    ModelBundle model = ModelBundle::initialized(c, 1);
    train_full(model, train, 8, tc);
    const PreparedCache cache(model.model(), val);
    return evaluate_examples(model, cache.all_labelled()).accuracy;
  };
  const double full = fit(false);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double ablated = fit(true);
  o.detail = "val_accuracy=" + fmt(full) + " ablated=" + fmt(ablated) + " train_seconds=" + fmt(secs);
  o.require(full >= 0.95, "accuracy below 0.95: " + o.detail);
  o.require(secs < 300, "slower than 5 minutes: " + o.detail);
  o.require(ablated < full, "ablated model not lower: " + o.detail);
  if (!o.pass) return o;
  return o;
}

Outcome threshold_rule() {
  Outcome o;
  const DecisionPolicy tau(0.3);
  o.require(decide(Score(0.25), tau) == Label::fake, "0.25 should be fake");
  o.require(decide(Score(0.35), tau) == Label::real, "0.35 should be real");
  o.require(decide(Score(0.3), tau) == Label::real, "tie should be real");
  std::mt19937_64 rng(17);
  for (int i = 0; i < 100; ++i) {
    const auto set = oracle::random_set(rng, 100, i % 2 == 0);
    const auto grid = metrics::threshold_grid(0.05, 0.95, 0.05);
    const auto cal = metrics::calibrate(set, grid);
    for (std::size_t j = 1; j < cal.rows.size(); ++j) {
      const auto& a = cal.rows[j - 1].counts;
      const auto& b = cal.rows[j].counts;
      o.require(b.tp <= a.tp && b.fp <= a.fp && b.tn >= a.tn && b.fn >= a.fn, "calibration not monotone");
    }
    o.require(cal.rows.size() == 19, "grid size");
  }
  return o;
}

}  // namespace

int main() {
  criterion("weighted-accuracy", weighted_accuracy_check);
  criterion("metric-oracle-equivalence", metric_oracles);
  criterion("fft-suite", fft_suite);
  criterion("head-contracts", head_contracts);
  criterion("router-behavior", router);
  criterion("sequential-training", sequential_training);
  criterion("desk-scale-end-to-end", desk_scale);
  criterion("threshold-rule", threshold_rule);
  return failures == 0 ? 0 : 1;
}
