#include "cds/serialize.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace cds {
namespace io {

namespace {

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T)))
    throw FormatError("unexpected end of stream");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace

void write_u32(std::ostream& os, std::uint32_t v) { write_le(os, v); }
std::uint32_t read_u32(std::istream& is) { return read_le<std::uint32_t>(is); }
void write_u64(std::ostream& os, std::uint64_t v) { write_le(os, v); }
std::uint64_t read_u64(std::istream& is) { return read_le<std::uint64_t>(is); }

template <typename Scalar>
void write_plane(std::ostream& os, const Eigen::Array<Scalar, Eigen::Dynamic, 1>& plane) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(plane.data()),
             static_cast<std::streamsize>(plane.size() * sizeof(Scalar)));
  } else {
    for (Index i = 0; i < plane.size(); ++i) write_le(os, plane[i]);
  }
}

template <typename Scalar>
void read_plane(std::istream& is, Eigen::Array<Scalar, Eigen::Dynamic, 1>& plane) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!is.read(reinterpret_cast<char*>(plane.data()),
                 static_cast<std::streamsize>(plane.size() * sizeof(Scalar))))
      throw FormatError("truncated tensor plane");
  } else {
    for (Index i = 0; i < plane.size(); ++i) plane[i] = read_le<Scalar>(is);
  }
}

template void write_plane<float>(std::ostream&, const Eigen::Array<float, Eigen::Dynamic, 1>&);
template void write_plane<double>(std::ostream&, const Eigen::Array<double, Eigen::Dynamic, 1>&);
template void read_plane<float>(std::istream&, Eigen::Array<float, Eigen::Dynamic, 1>&);
template void read_plane<double>(std::istream&, Eigen::Array<double, Eigen::Dynamic, 1>&);

}  // namespace io

namespace {

nlohmann::json read_descriptor(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("not a CDS1 tensor (bad magic)");
  const std::uint32_t len = io::read_u32(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), len)) throw FormatError("truncated CDS1 descriptor");
  nlohmann::json desc = nlohmann::json::parse(text, nullptr, false);
  if (desc.is_discarded() || !desc.is_object()) throw FormatError("CDS1 descriptor is not JSON");
  if (desc.value("layout", "") != "planar") throw FormatError("CDS1 layout must be planar");
  if (!desc.contains("shape") || !desc["shape"].is_array())
    throw FormatError("CDS1 descriptor lacks shape");
  return desc;
}

}  // namespace

template <typename Scalar>
void write_tensor(std::ostream& os, const ComplexTensor<Scalar>& t) {
  nlohmann::json desc;
  desc["shape"] = t.shape();
  desc["precision"] = std::string(to_string(precision_of<Scalar>()));
  desc["layout"] = "planar";
  const std::string text = desc.dump();
  os.write(kMagic, 4);
  io::write_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  io::write_plane(os, t.re());
  io::write_plane(os, t.im());
}

template <typename Scalar>
ComplexTensor<Scalar> read_tensor(std::istream& is) {
  const nlohmann::json desc = read_descriptor(is);
  const Precision p = parse_precision(desc.value("precision", ""));
  if (p != precision_of<Scalar>())
    throw FormatError("CDS1 tensor holds " + std::string(to_string(p)) + ", expected " +
                      std::string(to_string(precision_of<Scalar>())));
  Shape shape;
  try {
    shape = desc["shape"].get<Shape>();
    validate_shape(shape);
  } catch (const ShapeError& e) {
    throw FormatError(std::string("CDS1 shape invalid: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("CDS1 shape invalid: ") + e.what());
  }
  typename ComplexTensor<Scalar>::Plane re(shape_size(shape)), im(shape_size(shape));
  io::read_plane(is, re);
  io::read_plane(is, im);
  return ComplexTensor<Scalar>(std::move(shape), std::move(re), std::move(im));
}

template <typename Scalar>
void save_tensor(const std::filesystem::path& path, const ComplexTensor<Scalar>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
}

template <typename Scalar>
ComplexTensor<Scalar> load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_tensor<Scalar>(is);
}

nlohmann::json peek_tensor_descriptor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_descriptor(is);
}

template void write_tensor<float>(std::ostream&, const ComplexTensor<float>&);
template void write_tensor<double>(std::ostream&, const ComplexTensor<double>&);
template ComplexTensor<float> read_tensor<float>(std::istream&);
template ComplexTensor<double> read_tensor<double>(std::istream&);
template void save_tensor<float>(const std::filesystem::path&, const ComplexTensor<float>&);
template void save_tensor<double>(const std::filesystem::path&, const ComplexTensor<double>&);
template ComplexTensor<float> load_tensor<float>(const std::filesystem::path&);
template ComplexTensor<double> load_tensor<double>(const std::filesystem::path&);

}  // namespace cds
