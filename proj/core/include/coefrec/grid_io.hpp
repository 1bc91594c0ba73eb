#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "coefrec/mesh.hpp"

namespace coefrec {

struct GridDump {
    GridFunction u;
    std::string field;
    std::optional<double> time;
};

/// Writes `x[,y],value` rows to csv_path and {dim, n, field[, time]} to the sibling .json file.
void write_grid(const std::filesystem::path& csv_path, const GridFunction& u, const std::string& field,
                std::optional<double> time = std::nullopt);

/// Reads a dump written by write_grid, rebuilding the mesh from the metadata.
GridDump read_grid(const std::filesystem::path& csv_path);

}  // namespace coefrec
