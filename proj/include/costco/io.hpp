#pragma once

// Plain-text file formats. Lines starting with '#' and blank lines are
// ignored everywhere. Decimals are written with 17 significant digits.
//
//   tensor <K> <n1> ... <nK> base=<0|1>
//   <i1> ... <iK> <value>                      one line per observed entry
//
//   matrix <rows> <cols>
//   <cols decimals>                            one line per row
//
//   matrix-coo <rows> <cols> [base=<0|1>]      masked matrix, base defaults to 0
//   <i> <j> <value>
//
//   coordinates <K> base=<0|1>
//   <i1> ... <iK>
//
// Model files are described at write_model.

#include "costco/solver.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace costco {

ObservedTensord read_tensor(std::istream& in, const std::string& source = "<input>");
void write_tensor(std::ostream& out, const ObservedTensord& t, int base = 0);

struct MatrixData {
    Eigen::MatrixXd values;  // zero where unobserved
    std::optional<MaskMatrix> mask;
};

MatrixData read_matrix(std::istream& in, const std::string& source = "<input>");
void write_matrix(std::ostream& out, const Eigen::MatrixXd& m);
void write_matrix_coo(std::ostream& out, const Eigen::MatrixXd& m, const MaskMatrix& mask, int base = 0);

std::vector<Coordinate> read_coordinates(std::istream& in, const std::string& source = "<input>");
void write_coordinates(std::ostream& out, const std::vector<Coordinate>& coords, Index order, int base = 0);

struct ModelFile {
    CoupledModel model;
    std::uint64_t seed = 0;
    double objective = 0;
};

/// Layout:
///   costco-model 1
///   rank <R>
///   dims <K> <n1> ... <nK>
///   coupling <C> <mode> <width> ...
///   seed <seed>
///   objective <value>
///   weights <R decimals>
///   factor <k>           followed by n_k rows of R decimals, for k = 0..K-1
///   covariate <mode>     followed by a sigma line, then width rows of R decimals
ModelFile read_model(std::istream& in, const std::string& source = "<input>");
void write_model(std::ostream& out, const ModelFile& model);

// File-path conveniences; DataError when the file cannot be opened.
ObservedTensord load_tensor(const std::filesystem::path& p);
MatrixData load_matrix(const std::filesystem::path& p);
ModelFile load_model(const std::filesystem::path& p);
std::vector<Coordinate> load_coordinates(const std::filesystem::path& p);
void save_tensor(const std::filesystem::path& p, const ObservedTensord& t, int base = 0);
void save_matrix(const std::filesystem::path& p, const Eigen::MatrixXd& m);
void save_model(const std::filesystem::path& p, const ModelFile& model);

}  // namespace costco
