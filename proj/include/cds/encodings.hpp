#ifndef CDS_ENCODINGS_HPP
#define CDS_ENCODINGS_HPP

#include <array>
#include <filesystem>

#include "cds/tensor.hpp"

namespace cds {

enum class Encoding { rgb_as_real, sliding, lab_complex, native };

std::string_view to_string(Encoding e);
Encoding parse_encoding(std::string_view s);

/// Channel count of an encoded 3-channel RGB image.
Index encoded_channels(Encoding e);

/// RGB image [3,H,W] with values in [0,1].
using RgbImage = RealTensor<double>;

RgbImage make_rgb(Index height, Index width);

struct EncodedImage {
  ComplexTensor<double> tensor;
  Encoding encoding = Encoding::native;
};

/// Three real-valued channels R, G, B.
EncodedImage rgb_as_real(const RgbImage& rgb);

/// [R + iG, G + iB]. Values outside [0,1] are clamped with a warning.
EncodedImage rgb_to_sliding(const RgbImage& rgb);

/// sRGB -> linear -> XYZ -> CIELAB under the D65 white of the sRGB
/// primaries. Channel 0 = L*/100, channel 1 = (a* + i b*)/128.
EncodedImage rgb_to_lab_complex(const RgbImage& rgb);

/// Inverse of rgb_to_lab_complex, clamped to [0,1].
RgbImage lab_complex_to_rgb(const EncodedImage& enc);

EncodedImage encode(const RgbImage& rgb, Encoding e);

struct Lab {
  double l, a, b;
};

double srgb_to_linear(double c);
double linear_to_srgb(double c);
Lab srgb_to_lab(double r, double g, double b);
/// Gamma-encoded sRGB, not clamped to [0,1].
std::array<double, 3> lab_to_srgb(const Lab& lab);

/// Global complex scale distribution: phase uniform in [-phase_max,
/// phase_max], log-magnitude uniform in [logmag_min, logmag_max].
struct ScaleRange {
  double phase_max = 0;
  double logmag_min = 0;
  double logmag_max = 0;
};

/// Draws phase first, then log-magnitude.
std::complex<double> sample_scale(const ScaleRange& range, Rng& rng);

/// Multiplies every channel by the same scalar s.
EncodedImage complex_scale_transform(const EncodedImage& enc, std::complex<double> s);
EncodedImage complex_scale_transform(const EncodedImage& enc, const ScaleRange& range, Rng& rng);

/// Argument of the sum of unit-normalized nonzero entries.
double mean_phase(const ComplexTensor<double>& z);

/// Multiplies by exp(-i * mean_phase). All-zero input is returned as is.
EncodedImage phase_normalize(const EncodedImage& enc);

/// Binary PPM (P6, maxval 255) I/O. Comments in the header are skipped.
RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& rgb);

}  // namespace cds

#endif  // CDS_ENCODINGS_HPP
