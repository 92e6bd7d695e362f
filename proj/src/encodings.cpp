#include "cds/encodings.hpp"

#include <array>

#include <Eigen/LU>
#include <cmath>
#include <fstream>

#include "cds/log.hpp"

namespace cds {

std::string_view to_string(Encoding e) {
  switch (e) {
    case Encoding::rgb_as_real: return "rgb";
    case Encoding::sliding: return "sliding";
    case Encoding::lab_complex: return "lab";
    case Encoding::native: return "native";
  }
  return "?";
}

Encoding parse_encoding(std::string_view s) {
  if (s == "rgb" || s == "rgb_as_real") return Encoding::rgb_as_real;
  if (s == "sliding") return Encoding::sliding;
  if (s == "lab" || s == "lab_complex") return Encoding::lab_complex;
  if (s == "native") return Encoding::native;
  throw ConfigError("unknown encoding '" + std::string(s) + "'");
}

Index encoded_channels(Encoding e) {
  switch (e) {
    case Encoding::rgb_as_real: return 3;
    case Encoding::sliding:
    case Encoding::lab_complex: return 2;
    case Encoding::native: break;
  }
  throw ConfigError("native encoding has no fixed channel count");
}

RgbImage make_rgb(Index height, Index width) {
  return {{3, height, width}, Eigen::ArrayXd::Zero(3 * height * width)};
}

namespace {

void check_rgb(const RgbImage& rgb) {
  if (rgb.shape.size() != 3 || rgb.shape[0] != 3)
    throw ShapeError("expected an RGB image [3,H,W], got " + shape_string(rgb.shape));
  if (rgb.data.size() != shape_size(rgb.shape)) throw ShapeError("RGB data does not match its shape");
}

Eigen::ArrayXd clamped(const RgbImage& rgb, std::string_view what) {
  check_rgb(rgb);
  if ((rgb.data < 0).any() || (rgb.data > 1).any()) {
    log_warn(std::string(what) + ": input values outside [0,1] clamped");
    return rgb.data.max(0.0).min(1.0);
  }
  return rgb.data;
}

// sRGB primaries with D65 white (IEC 61966-2-1).
const Eigen::Matrix3d& rgb_to_xyz() {
  static const Eigen::Matrix3d m = (Eigen::Matrix3d() << 0.4124564, 0.3575761, 0.1804375,
                                    0.2126729, 0.7151522, 0.0721750,
                                    0.0193339, 0.1191920, 0.9503041)
                                       .finished();
  return m;
}

const Eigen::Vector3d& white() {
  static const Eigen::Vector3d w = rgb_to_xyz().rowwise().sum();
  return w;
}

constexpr double kDelta = 6.0 / 29.0;

double lab_f(double t) {
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3 * kDelta * kDelta) + 4.0 / 29.0;
}

double lab_finv(double t) {
  return t > kDelta ? t * t * t : 3 * kDelta * kDelta * (t - 4.0 / 29.0);
}

}  // namespace

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double c) {
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1 / 2.4) - 0.055;
}

Lab srgb_to_lab(double r, double g, double b) {
  const Eigen::Vector3d lin(srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b));
  const Eigen::Vector3d xyz = rgb_to_xyz() * lin;
  const double fx = lab_f(xyz[0] / white()[0]);
  const double fy = lab_f(xyz[1] / white()[1]);
  const double fz = lab_f(xyz[2] / white()[2]);
  return {116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz)};
}

std::array<double, 3> lab_to_srgb(const Lab& lab) {
  const double fy = (lab.l + 16) / 116;
  const double fx = fy + lab.a / 500;
  const double fz = fy - lab.b / 200;
  const Eigen::Vector3d xyz(white()[0] * lab_finv(fx), white()[1] * lab_finv(fy),
                            white()[2] * lab_finv(fz));
  static const Eigen::Matrix3d inv = rgb_to_xyz().inverse();
  const Eigen::Vector3d lin = inv * xyz;
  return {linear_to_srgb(lin[0]), linear_to_srgb(lin[1]), linear_to_srgb(lin[2])};
}

EncodedImage rgb_as_real(const RgbImage& rgb) {
  check_rgb(rgb);
  return {ComplexTensor<double>(rgb.shape, rgb.data, Eigen::ArrayXd::Zero(rgb.data.size())),
          Encoding::rgb_as_real};
}

EncodedImage rgb_to_sliding(const RgbImage& rgb) {
  const Eigen::ArrayXd d = clamped(rgb, "sliding encoding");
  const Index hw = rgb.shape[1] * rgb.shape[2];
  ComplexTensor<double> t({2, rgb.shape[1], rgb.shape[2]});
  t.re().segment(0, hw) = d.segment(0, hw);
  t.im().segment(0, hw) = d.segment(hw, hw);
  t.re().segment(hw, hw) = d.segment(hw, hw);
  t.im().segment(hw, hw) = d.segment(2 * hw, hw);
  return {std::move(t), Encoding::sliding};
}

EncodedImage rgb_to_lab_complex(const RgbImage& rgb) {
  const Eigen::ArrayXd d = clamped(rgb, "lab encoding");
  const Index hw = rgb.shape[1] * rgb.shape[2];
  ComplexTensor<double> t({2, rgb.shape[1], rgb.shape[2]});
  for (Index p = 0; p < hw; ++p) {
    const Lab lab = srgb_to_lab(d[p], d[hw + p], d[2 * hw + p]);
    t.re()[p] = lab.l / 100;
    t.re()[hw + p] = lab.a / 128;
    t.im()[hw + p] = lab.b / 128;
  }
  return {std::move(t), Encoding::lab_complex};
}

RgbImage lab_complex_to_rgb(const EncodedImage& enc) {
  if (enc.encoding != Encoding::lab_complex)
    throw FormatError("expected a lab-encoded image, got '" + std::string(to_string(enc.encoding)) +
                      "'");
  const auto& t = enc.tensor;
  if (t.rank() != 3 || t.dim(0) != 2) throw ShapeError("lab image must be [2,H,W]");
  const Index hw = t.dim(1) * t.dim(2);
  RgbImage rgb = make_rgb(t.dim(1), t.dim(2));
  for (Index p = 0; p < hw; ++p) {
    const auto c = lab_to_srgb({t.re()[p] * 100, t.re()[hw + p] * 128, t.im()[hw + p] * 128});
    for (int k = 0; k < 3; ++k) rgb.data[k * hw + p] = std::clamp(c[static_cast<std::size_t>(k)], 0.0, 1.0);
  }
  return rgb;
}

EncodedImage encode(const RgbImage& rgb, Encoding e) {
  switch (e) {
    case Encoding::rgb_as_real: return rgb_as_real(rgb);
    case Encoding::sliding: return rgb_to_sliding(rgb);
    case Encoding::lab_complex: return rgb_to_lab_complex(rgb);
    case Encoding::native: break;
  }
  throw ConfigError("cannot encode RGB images with the native encoding");
}

std::complex<double> sample_scale(const ScaleRange& range, Rng& rng) {
  const double phase = rng.uniform(-range.phase_max, range.phase_max);
  const double logmag = rng.uniform(range.logmag_min, range.logmag_max);
  return std::polar(std::exp(logmag), phase);
}

EncodedImage complex_scale_transform(const EncodedImage& enc, std::complex<double> s) {
  return {s * enc.tensor, enc.encoding};
}

EncodedImage complex_scale_transform(const EncodedImage& enc, const ScaleRange& range, Rng& rng) {
  return complex_scale_transform(enc, sample_scale(range, rng));
}

double mean_phase(const ComplexTensor<double>& z) {
  std::complex<double> acc{};
  for (Index i = 0; i < z.size(); ++i) {
    const std::complex<double> v = z[i];
    const double m = std::abs(v);
    if (m > 0) acc += v / m;
  }
  return std::arg(acc);
}

EncodedImage phase_normalize(const EncodedImage& enc) {
  if ((enc.tensor.re() == 0).all() && (enc.tensor.im() == 0).all()) return enc;
  return complex_scale_transform(enc, std::polar(1.0, -mean_phase(enc.tensor)));
}

namespace {

std::string ppm_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) return tok;
    } else {
      tok += c;
    }
  }
  return tok;
}

}  // namespace

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  if (ppm_token(in) != "P6") throw FormatError(path.string() + " is not a binary PPM (P6)");
  Index w, h, maxval;
  try {
    w = std::stol(ppm_token(in));
    h = std::stol(ppm_token(in));
    maxval = std::stol(ppm_token(in));
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": malformed PPM header");
  }
  if (w < 1 || h < 1) throw FormatError(path.string() + ": bad PPM dimensions");
  if (maxval != 255) throw FormatError(path.string() + ": only 8-bit PPM is supported");
  std::vector<unsigned char> bytes(static_cast<std::size_t>(3 * w * h));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw FormatError(path.string() + ": truncated PPM data");
  RgbImage rgb = make_rgb(h, w);
  const Index hw = h * w;
  for (Index p = 0; p < hw; ++p)
    for (Index k = 0; k < 3; ++k)
      rgb.data[k * hw + p] = bytes[static_cast<std::size_t>(3 * p + k)] / 255.0;
  return rgb;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& rgb) {
  check_rgb(rgb);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  const Index h = rgb.shape[1], w = rgb.shape[2], hw = h * w;
  out << "P6\n" << w << ' ' << h << "\n255\n";
  for (Index p = 0; p < hw; ++p)
    for (Index k = 0; k < 3; ++k) {
      const double v = std::clamp(rgb.data[k * hw + p], 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255))));
    }
}

}  // namespace cds
