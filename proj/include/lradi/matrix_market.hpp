#pragma once

#include <filesystem>

#include "lradi/sparse.hpp"

namespace lradi::mm {

/// Reads a coordinate-format real matrix. Symmetric files are expanded to the
/// full pattern. Indices are 1-based on disk.
SparseMatrix read_matrix_market(const std::filesystem::path& path);

/// Writes coordinate real general format with round-trip exact values.
void write_matrix_market(const SparseMatrix& matrix, const std::filesystem::path& path);

/// Dense blocks (right-hand sides, solution factors) use the array format,
/// real or complex field, column-major.
ComplexVectorBlock read_dense_array(const std::filesystem::path& path);
void write_dense_array(const ComplexVectorBlock& block, const std::filesystem::path& path,
                       bool force_complex = false);

}  // namespace lradi::mm
