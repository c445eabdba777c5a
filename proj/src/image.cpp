#include "sfanet/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace sfanet {

Image::Image(int height, int width) {
  if (height <= 0 || width <= 0) throw InvalidInput("image dimensions must be positive");
  for (auto& c : channels_) c = Plane::Zero(height, width);
}

Image::Image(Plane r, Plane g, Plane b) : channels_{std::move(r), std::move(g), std::move(b)} {
  if (channels_[0].size() == 0) throw InvalidInput("image dimensions must be positive");
  for (const auto& c : channels_)
    if (c.rows() != channels_[0].rows() || c.cols() != channels_[0].cols())
      throw InvalidInput("image channels differ in size");
}

Image Image::filled(int height, int width, std::uint8_t value) {
  Image img(height, width);
  for (auto& c : img.channels_) c.setConstant(value);
  return img;
}

Image Image::from_gray(const matrix_t& gray01) {
  Image img(static_cast<int>(gray01.rows()), static_cast<int>(gray01.cols()));
  for (Eigen::Index i = 0; i < gray01.rows(); ++i)
    for (Eigen::Index j = 0; j < gray01.cols(); ++j) {
      const double v = std::clamp(gray01(i, j), 0.0, 1.0);
      const auto q = static_cast<std::uint8_t>(std::lround(v * 255.0));
      for (auto& c : img.channels_) c(i, j) = q;
    }
  return img;
}

matrix_t Image::luminance() const {
  return (0.299 * channels_[0].cast<double>() + 0.587 * channels_[1].cast<double>() +
          0.114 * channels_[2].cast<double>()) /
         255.0;
}

Image Image::crop(int row0, int col0, int row1, int col1) const {
  if (row0 < 0 || col0 < 0 || row1 >= height() || col1 >= width() || row0 > row1 || col0 > col1)
    throw InvalidInput("crop box out of bounds");
  const int h = row1 - row0 + 1;
  const int w = col1 - col0 + 1;
  return Image(channels_[0].block(row0, col0, h, w), channels_[1].block(row0, col0, h, w),
               channels_[2].block(row0, col0, h, w));
}

Image Image::resized(int height, int width) const {
  if (height == this->height() && width == this->width()) return *this;
  Image out(height, width);
  const double sy = static_cast<double>(this->height()) / height;
  const double sx = static_cast<double>(this->width()) / width;
  for (int i = 0; i < height; ++i) {
    const double y = std::clamp((i + 0.5) * sy - 0.5, 0.0, this->height() - 1.0);
    const int y0 = static_cast<int>(y);
    const int y1 = std::min(y0 + 1, this->height() - 1);
    const double fy = y - y0;
    for (int j = 0; j < width; ++j) {
      const double x = std::clamp((j + 0.5) * sx - 0.5, 0.0, this->width() - 1.0);
      const int x0 = static_cast<int>(x);
      const int x1 = std::min(x0 + 1, this->width() - 1);
      const double fx = x - x0;
      for (int c = 0; c < 3; ++c) {
        const auto& p = channels_[c];
        const double v = (1 - fy) * ((1 - fx) * p(y0, x0) + fx * p(y0, x1)) +
                         fy * ((1 - fx) * p(y1, x0) + fx * p(y1, x1));
        out.channels_[c](i, j) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

bool operator==(const Image& a, const Image& b) {
  if (a.height() != b.height() || a.width() != b.width()) return false;
  for (int c = 0; c < 3; ++c)
    if (a.channels_[c] != b.channels_[c]) return false;
  return true;
}

namespace {

struct PnmHeader {
  char kind;
  int width, height, maxval;
};

PnmHeader read_header(std::istream& in, const std::filesystem::path& path) {
  auto next_token = [&]() {
    std::string tok;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!tok.empty()) break;
        continue;
      }
      tok += ch;
    }
    return tok;
  };
  const std::string magic = next_token();
  if (magic != "P5" && magic != "P6") throw IngestError(path.string() + ": not a binary PGM/PPM");
  PnmHeader h{magic[1], 0, 0, 0};
  try {
    h.width = std::stoi(next_token());
    h.height = std::stoi(next_token());
    h.maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw IngestError(path.string() + ": malformed PNM header");
  }
  if (h.width <= 0 || h.height <= 0 || h.maxval != 255)
    throw IngestError(path.string() + ": only 8-bit PNM with positive size is supported");
  return h;
}

std::string pnm_bytes(char kind, int height, int width, const Plane* planes, int nplanes) {
  std::ostringstream os;
  os << 'P' << kind << '\n' << width << ' ' << height << "\n255\n";
  std::string data(static_cast<std::size_t>(height) * width * nplanes, '\0');
  std::size_t k = 0;
  for (int i = 0; i < height; ++i)
    for (int j = 0; j < width; ++j)
      for (int c = 0; c < nplanes; ++c) data[k++] = static_cast<char>(planes[c](i, j));
  return os.str() + data;
}

}  // namespace

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open image " + path.string());
  const auto h = read_header(in, path);
  const int nc = h.kind == '6' ? 3 : 1;
  std::string data(static_cast<std::size_t>(h.width) * h.height * nc, '\0');
  if (!in.read(data.data(), static_cast<std::streamsize>(data.size())))
    throw IngestError(path.string() + ": truncated pixel data");
  std::array<Plane, 3> planes;
  for (auto& p : planes) p.resize(h.height, h.width);
  std::size_t k = 0;
  for (int i = 0; i < h.height; ++i)
    for (int j = 0; j < h.width; ++j)
      for (int c = 0; c < nc; ++c) planes[c](i, j) = static_cast<std::uint8_t>(data[k++]);
  if (nc == 1) planes[1] = planes[2] = planes[0];
  return Image(std::move(planes[0]), std::move(planes[1]), std::move(planes[2]));
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  const Plane planes[3] = {image.channel(0), image.channel(1), image.channel(2)};
  write_file_atomic(path, pnm_bytes('6', image.height(), image.width(), planes, 3));
}

Plane read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open map " + path.string());
  const auto h = read_header(in, path);
  if (h.kind != '5') throw IngestError(path.string() + ": expected single-channel PGM");
  Plane p(h.height, h.width);
  if (!in.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(p.size())))
    throw IngestError(path.string() + ": truncated pixel data");
  return p;
}

void write_pgm(const std::filesystem::path& path, const Plane& plane) {
  write_file_atomic(path, pnm_bytes('5', static_cast<int>(plane.rows()),
                                    static_cast<int>(plane.cols()), &plane, 1));
}

Image ImageSample::load() const {
  if (pixels) return *pixels;
  if (path.empty()) throw IngestError("sample " + id + " has neither pixels nor a path");
  return read_pnm(path);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace sfanet
