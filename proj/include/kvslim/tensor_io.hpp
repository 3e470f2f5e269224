#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kvslim/errors.hpp"
#include "kvslim/numerics.hpp"

namespace kvslim {

enum class TensorDtype : std::uint8_t { f32 = 0, f64 = 1 };

/// In-memory form of the "KVSL" tensor file: header (magic, version 1,
/// dtype, ndim, 2 reserved zero bytes, little-endian u64 dims) followed by
/// row-major little-endian scalars.
struct Tensor {
    TensorDtype dtype = TensorDtype::f64;
    std::vector<std::uint64_t> dims;
    std::vector<double> values;  // f32 payloads are held as exactly representable doubles

    std::uint64_t element_count() const;
    Matrix as_matrix() const;  // requires ndim == 2
    static Tensor from_matrix(const Matrix& m, TensorDtype dtype = TensorDtype::f64);
};

void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

}  // namespace kvslim
