#include "kvslim/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace kvslim {

namespace {

constexpr char kMagic[4] = {'K', 'V', 'S', 'L'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "tensor I/O assumes a little-endian host");

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("tensor read: truncated file");
    return v;
}

}  // namespace

std::uint64_t Tensor::element_count() const {
    std::uint64_t n = 1;
    for (std::uint64_t d : dims) n *= d;
    return dims.empty() ? 0 : n;
}

Matrix Tensor::as_matrix() const {
    if (dims.size() != 2) throw DimensionMismatch("tensor: expected 2-D");
    Matrix m(static_cast<std::size_t>(dims[0]), static_cast<std::size_t>(dims[1]));
    m.data = values;
    return m;
}

Tensor Tensor::from_matrix(const Matrix& m, TensorDtype dtype) {
    Tensor t;
    t.dtype = dtype;
    t.dims = {m.rows, m.cols};
    t.values = m.data;
    return t;
}

void write_tensor(const std::string& path, const Tensor& t) {
    if (t.dims.empty()) throw IoError("tensor write: no dimensions");
    if (t.values.size() != t.element_count())
        throw DimensionMismatch("tensor write: payload size != product of dims");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("tensor write: cannot open " + path);
    out.write(kMagic, 4);
    write_raw(out, kVersion);
    write_raw(out, static_cast<std::uint8_t>(t.dtype));
    write_raw(out, static_cast<std::uint8_t>(t.dims.size()));
    const std::uint8_t zero = 0;
    write_raw(out, zero);
    write_raw(out, zero);
    for (std::uint64_t d : t.dims) write_raw(out, d);
    if (t.dtype == TensorDtype::f64) {
        out.write(reinterpret_cast<const char*>(t.values.data()),
                  static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    } else {
        for (double v : t.values) {
            const float f = static_cast<float>(v);
            out.write(reinterpret_cast<const char*>(&f), sizeof(float));
        }
    }
    if (!out) throw IoError("tensor write: write failed for " + path);
}

Tensor read_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("tensor read: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw BadMagic("tensor read: bad magic in " + path);
    const auto version = read_raw<std::uint32_t>(in);
    if (version != kVersion)
        throw BadVersion("tensor read: unsupported version " + std::to_string(version));
    const auto dtype = read_raw<std::uint8_t>(in);
    if (dtype > 1) throw IoError("tensor read: unknown dtype");
    const auto ndim = read_raw<std::uint8_t>(in);
    read_raw<std::uint8_t>(in);
    read_raw<std::uint8_t>(in);

    Tensor t;
    t.dtype = static_cast<TensorDtype>(dtype);
    t.dims.resize(ndim);
    for (std::uint8_t i = 0; i < ndim; ++i) t.dims[i] = read_raw<std::uint64_t>(in);
    const std::uint64_t count = t.element_count();
    t.values.resize(count);
    if (t.dtype == TensorDtype::f64) {
        in.read(reinterpret_cast<char*>(t.values.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        if (!in) throw IoError("tensor read: truncated payload");
    } else {
        for (std::uint64_t i = 0; i < count; ++i)
            t.values[i] = static_cast<double>(read_raw<float>(in));
    }
    return t;
}

}  // namespace kvslim
