#include "sfanet/core.hpp"

#include <cmath>
#include <cstdio>

namespace sfanet {

Label decode_label(int v) {
  if (v == 1) return Label::real;
  if (v == 0) return Label::fake;
  throw InvalidInput("label encoding must be 0 or 1, got " + std::to_string(v));
}

std::string_view to_string(Label l) noexcept { return l == Label::real ? "real" : "fake"; }

std::optional<Label> parse_label(std::string_view s) noexcept {
  if (s == "real") return Label::real;
  if (s == "fake") return Label::fake;
  return std::nullopt;
}

Score::Score(double v) : value_(v) {
  if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("score outside [0,1]: " + std::to_string(v));
}

DecisionPolicy::DecisionPolicy(double threshold) : threshold_(threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ConfigError("decision threshold must lie in (0,1), got " + std::to_string(threshold));
}

namespace {

constexpr std::string_view kRaceNames[] = {"white", "other"};
constexpr std::string_view kEmotionNames[] = {"happy", "negative", "neutral", "scared"};

}  // namespace

int Category::index() const noexcept {
  const int r = race == RaceGroup::other ? 0 : 1;
  return r * 4 + static_cast<int>(emotion);
}

Category Category::from_index(int i) {
  if (i < 0 || i >= kCount) throw InvalidInput("category index out of range: " + std::to_string(i));
  return Category{i < 4 ? RaceGroup::other : RaceGroup::white, static_cast<EmotionGroup>(i % 4)};
}

std::string to_string(const Category& c) {
  std::string s(kRaceNames[static_cast<int>(c.race)]);
  s += '_';
  s += kEmotionNames[static_cast<int>(c.emotion)];
  return s;
}

std::optional<Category> parse_category(std::string_view s) noexcept {
  const auto us = s.find('_');
  if (us == std::string_view::npos) return std::nullopt;
  const auto race = s.substr(0, us);
  const auto emo = s.substr(us + 1);
  Category c;
  if (race == "white") c.race = RaceGroup::white;
  else if (race == "other") c.race = RaceGroup::other;
  else return std::nullopt;
  for (int e = 0; e < 4; ++e) {
    if (emo == kEmotionNames[e]) {
      c.emotion = static_cast<EmotionGroup>(e);
      return c;
    }
  }
  return std::nullopt;
}

double clamped_sigmoid(double logit) noexcept {
  constexpr double lo = 1e-12;
  constexpr double hi = 1.0 - 1e-12;
  double s;
  if (logit >= 0) {
    s = 1.0 / (1.0 + std::exp(-logit));
  } else {
    const double e = std::exp(logit);
    s = e / (1.0 + e);
  }
  return s < lo ? lo : (s > hi ? hi : s);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) noexcept {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace sfanet
