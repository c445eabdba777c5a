#include "sfanet/config.hpp"
#include "sfanet/heads.hpp"

#include <bit>
#include <cstring>

namespace sfanet {

namespace {

constexpr std::string_view kMagic = "SFANETW1";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view s) : s_(s) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, s_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto v = s_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  bool done() const { return pos_ == s_.size(); }

 private:
  void need(std::size_t n) const {
    if (s_.size() - pos_ < n) throw IngestError("truncated tensor blob");
  }
  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_tensors(const NamedTensors& tensors) {
  std::string out(kMagic);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    out.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  return out;
}

NamedTensors decode_tensors(std::string_view blob) {
  Reader r(blob);
  if (r.bytes(kMagic.size()) != kMagic) throw IngestError("not a tensor blob (bad magic)");
  const auto count = r.get<std::uint32_t>();
  NamedTensors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>();
    std::string name(r.bytes(len));
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (rows > (1u << 28) || cols > (1u << 28)) throw IngestError("implausible tensor shape for " + name);
    matrix_t m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const auto data = r.bytes(static_cast<std::size_t>(rows * cols) * sizeof(double));
    std::memcpy(m.data(), data.data(), data.size());
    out.emplace_back(std::move(name), std::move(m));
  }
  if (!r.done()) throw IngestError("trailing bytes after tensor blob");
  return out;
}

std::string serialize_weights(const ModelBundle& bundle) {
  const auto names = bundle.weight_names();
  const auto values = bundle.weights();
  NamedTensors t;
  for (std::size_t i = 0; i < names.size(); ++i) t.emplace_back(names[i], values[i]);
  return encode_tensors(t);
}

void deserialize_weights(ModelBundle& bundle, std::string_view blob) {
  const auto t = decode_tensors(blob);
  const auto names = bundle.weight_names();
  if (t.size() != names.size())
    throw ConsistencyError("checkpoint has " + std::to_string(t.size()) + " tensors, model expects " +
                           std::to_string(names.size()));
  std::vector<matrix_t> w;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i].first != names[i])
      throw ConsistencyError("checkpoint tensor " + t[i].first + " where " + names[i] + " was expected");
    w.push_back(t[i].second);
  }
  bundle.set_weights(w);
}

std::filesystem::path sidecar_path(const std::filesystem::path& ckpt) {
  auto p = ckpt;
  p += ".json";
  return p;
}

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path,
                     const std::map<std::string, std::string>& extra) {
  if (!bundle.loaded()) throw StateError("cannot checkpoint a model without weights");
  const std::string blob = serialize_weights(bundle);
  const auto& m = bundle.model();
  json meta{{"name", std::string(to_string(bundle.kind()))},
            {"dims", {{"P", m.num_patches()}, {"S", m.spatial_dim()}, {"Fq", m.freq_dim()}}},
            {"patch_size", bundle.config().patch_size},
            {"config", to_json(bundle.config())},
            {"config_hash", config_hash(bundle.config())},
            {"weights_fnv1a", hex64(fnv1a64(blob))}};
  for (const auto& [k, v] : extra) meta[k] = v;
  write_file_atomic(path, blob);
  write_file_atomic(sidecar_path(path), meta.dump(2) + "\n");
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  json meta;
  try {
    meta = json::parse(read_file(sidecar_path(path)));
  } catch (const json::exception& e) {
    throw IngestError("bad checkpoint sidecar for " + path.string() + ": " + e.what());
  }
  if (!meta.contains("config")) throw IngestError("checkpoint sidecar has no config: " + path.string());
  ModelBundle bundle(model_config_from_json(meta["config"]));
  const std::string blob = read_file(path);
  if (meta.contains("weights_fnv1a") && meta["weights_fnv1a"] != hex64(fnv1a64(blob)))
    throw ConsistencyError("checkpoint weights do not match their sidecar checksum: " + path.string());
  deserialize_weights(bundle, blob);
  return bundle;
}

}  // namespace sfanet
