#pragma once

// FLD1 field files and CSV matrix export.
//
// FLD1 layout:
//   line 1: "FLD1 <ndim> <n1> <n2> [<n3>]"   axis point counts, fastest axis first
//   line 2: "<min1> <max1> <min2> <max2> ..."  one range per axis
//   then ndim-product IEEE-754 little-endian doubles, first axis fastest.
// Spatial fields are written with axes (x, y), space-time fields with (x, y, t).

#include "sirinv/grid.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <vector>

namespace sirinv {

/// Raw content of an FLD1 file.
struct FieldFile {
  std::vector<Axis> axes;
  Eigen::VectorXd values;
};

void write_fld1(const std::filesystem::path& path, const FieldFile& file);
FieldFile read_fld1(const std::filesystem::path& path);

/// Parses FLD1 bytes held in memory; used by read_fld1.
FieldFile parse_fld1(const std::string& bytes);

void write_field(const std::filesystem::path& path, const ScalarField& f);
ScalarField read_field(const std::filesystem::path& path);

/// Converts between FieldFile and ScalarField (2 axes = spatial, 3 = space-time).
FieldFile to_file(const ScalarField& f);
ScalarField to_field(const FieldFile& file);

/// Spatial field as CSV: rows = y ascending, columns = x ascending.
std::string csv_matrix(const ScalarField& spatial);
void write_csv_matrix(const std::filesystem::path& path, const ScalarField& spatial);
/// Reads a CSV matrix back onto the given spatial grid.
ScalarField read_csv_matrix(const std::filesystem::path& path, const GridSpec& grid);

/// Writes one CSV per time slice: <dir>/<stem>_t<k>.csv. Spatial fields get
/// a single file <dir>/<stem>.csv.
std::vector<std::filesystem::path> write_csv_slices(const std::filesystem::path& dir,
                                                    const std::string& stem,
                                                    const ScalarField& f);

}  // namespace sirinv
