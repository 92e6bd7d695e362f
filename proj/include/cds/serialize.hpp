#ifndef CDS_SERIALIZE_HPP
#define CDS_SERIALIZE_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "cds/tensor.hpp"

namespace cds {

/// CDS1 tensor container:
///   bytes 0..3   "CDS1"
///   uint32 LE    length L of the JSON descriptor
///   L bytes      {"shape":[...],"precision":"fp32|fp64","layout":"planar"}
///   re plane     little-endian IEEE values, row-major
///   im plane     same
inline constexpr char kMagic[4] = {'C', 'D', 'S', '1'};

template <typename Scalar>
void write_tensor(std::ostream& os, const ComplexTensor<Scalar>& t);

/// Throws FormatError on a bad header or when the stored precision differs
/// from Scalar (no silent conversions).
template <typename Scalar>
ComplexTensor<Scalar> read_tensor(std::istream& is);

template <typename Scalar>
void save_tensor(const std::filesystem::path& path, const ComplexTensor<Scalar>& t);

template <typename Scalar>
ComplexTensor<Scalar> load_tensor(const std::filesystem::path& path);

/// Reads only the descriptor of a CDS1 tensor file.
nlohmann::json peek_tensor_descriptor(const std::filesystem::path& path);

namespace io {

void write_u32(std::ostream& os, std::uint32_t v);
std::uint32_t read_u32(std::istream& is);
void write_u64(std::ostream& os, std::uint64_t v);
std::uint64_t read_u64(std::istream& is);

/// Raw little-endian plane I/O.
template <typename Scalar>
void write_plane(std::ostream& os, const Eigen::Array<Scalar, Eigen::Dynamic, 1>& plane);
template <typename Scalar>
void read_plane(std::istream& is, Eigen::Array<Scalar, Eigen::Dynamic, 1>& plane);

}  // namespace io
}  // namespace cds

#endif  // CDS_SERIALIZE_HPP
