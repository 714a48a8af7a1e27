#include "trajattn/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace trajattn {

namespace {

constexpr double kOverlayAlpha = 0.5;
constexpr double kHighlight[3] = {255.0, 32.0, 32.0};

int read_ppm_token(std::istream& in) {
  // Skips whitespace and '#' comments between header tokens.
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int value = 0;
  if (!(in >> value)) throw std::runtime_error("ppm: malformed header");
  return value;
}

}  // namespace

void RgbImage::validate() const {
  if (width <= 0 || height <= 0) throw std::runtime_error("image: non-positive dimensions");
  if (pixels.size() != static_cast<size_t>(width) * height * 3)
    throw std::runtime_error("image: pixel buffer size mismatch");
}

RgbImage image_from_channel_major(const std::vector<std::uint8_t>& data, int height, int width) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("image: non-positive dimensions");
  const size_t plane = static_cast<size_t>(height) * width;
  if (data.size() != plane * 3) throw std::invalid_argument("image: channel-major size mismatch");
  RgbImage img;
  img.width = width;
  img.height = height;
  img.pixels.resize(plane * 3);
  for (size_t i = 0; i < plane; ++i) {
    img.pixels[i * 3 + 0] = data[i];
    img.pixels[i * 3 + 1] = data[plane + i];
    img.pixels[i * 3 + 2] = data[2 * plane + i];
  }
  return img;
}

void save_ppm(const std::string& path, const RgbImage& image) {
  image.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open image file for writing: " + path);
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw std::runtime_error("image write failed: " + path);
}

RgbImage load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image file: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw std::runtime_error("ppm: unsupported format: " + magic);
  RgbImage img;
  img.width = read_ppm_token(in);
  img.height = read_ppm_token(in);
  const int maxval = read_ppm_token(in);
  if (maxval != 255) throw std::runtime_error("ppm: only 8-bit images are supported");
  in.get();  // single whitespace after maxval
  if (img.width <= 0 || img.height <= 0) throw std::runtime_error("ppm: bad dimensions");
  img.pixels.resize(static_cast<size_t>(img.width) * img.height * 3);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw std::runtime_error("ppm: truncated pixel data");
  return img;
}

RgbImage overlay_mask(const RgbImage& image, const Tensor& mask) {
  image.validate();
  if (!mask.defined() || mask.shape().size() != 2)
    throw std::invalid_argument("overlay: mask must be a 2-d tensor");
  const int mh = static_cast<int>(mask.shape()[0]);
  const int mw = static_cast<int>(mask.shape()[1]);
  if (mh <= 0 || mw <= 0) throw std::invalid_argument("overlay: empty mask");
  const std::vector<double>& w = mask.values();

  double peak = 0.0;
  for (double v : w) {
    if (!(v >= 0.0)) throw std::invalid_argument("overlay: mask weights must be non-negative");
    peak = std::max(peak, v);
  }
  const double norm = peak > 0.0 ? 1.0 / peak : 0.0;

  const double sx = static_cast<double>(image.width) / mw;
  const double sy = static_cast<double>(image.height) / mh;

  RgbImage out = image;
  for (int y = 0; y < image.height; ++y) {
    // Image pixel centers map to feature coordinates at 1/scale resolution.
    const double fy = (y + 0.5) / sy - 0.5;
    const double cy = std::clamp(fy, 0.0, static_cast<double>(mh - 1));
    const int y0 = static_cast<int>(std::floor(cy));
    const int y1 = std::min(y0 + 1, mh - 1);
    const double ty = cy - y0;
    for (int x = 0; x < image.width; ++x) {
      const double fx = (x + 0.5) / sx - 0.5;
      const double cx = std::clamp(fx, 0.0, static_cast<double>(mw - 1));
      const int x0 = static_cast<int>(std::floor(cx));
      const int x1 = std::min(x0 + 1, mw - 1);
      const double tx = cx - x0;
      const double v00 = w[static_cast<size_t>(y0) * mw + x0];
      const double v01 = w[static_cast<size_t>(y0) * mw + x1];
      const double v10 = w[static_cast<size_t>(y1) * mw + x0];
      const double v11 = w[static_cast<size_t>(y1) * mw + x1];
      const double value =
          norm * ((1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11));
      const double alpha = kOverlayAlpha * value;
      std::uint8_t* px = &out.pixels[(static_cast<size_t>(y) * image.width + x) * 3];
      for (int c = 0; c < 3; ++c) {
        const double blended = (1.0 - alpha) * px[c] + alpha * kHighlight[c];
        px[c] = static_cast<std::uint8_t>(std::lround(std::clamp(blended, 0.0, 255.0)));
      }
    }
  }
  return out;
}

}  // namespace trajattn
