#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "biref/discretization.hpp"
#include "biref/reflector.hpp"
#include "biref/transport.hpp"

namespace biref {

/// Shortest form that is guaranteed to round-trip: 17 significant digits.
std::string format_double(double v);

/// "i,j,mass" header, one line per entry.
void write_plan_csv(std::ostream& os, const TransportPlan& plan);
TransportPlan read_plan_csv(std::istream& is);

/// "node_kind,index,value" header; node_kind is "source" (r) or "target" (zeta).
/// Indices of each kind must form 0..n-1 in any order.
void write_potentials_csv(std::ostream& os, const DualPotentials& pot);
DualPotentials read_potentials_csv(std::istream& is, std::size_t gauge_node = 0);

/// Wavefront OBJ with v and f records (1-based).
void write_obj(std::ostream& os, const Mesh& mesh, const std::string& name);

/// First line: nx,ny,x_min,x_max,y_min,y_max, either as those literal names
/// followed by a line of values, or as the values themselves. Then ny rows of
/// nx nonnegative values, y_min row first.
Bitmap read_bitmap_csv(std::istream& is);

// Path wrappers; failures to open or write raise kIoError.
void write_plan_csv(const std::filesystem::path& path, const TransportPlan& plan);
TransportPlan read_plan_csv(const std::filesystem::path& path);
void write_potentials_csv(const std::filesystem::path& path, const DualPotentials& pot);
DualPotentials read_potentials_csv(const std::filesystem::path& path, std::size_t gauge_node = 0);
void write_obj(const std::filesystem::path& path, const Mesh& mesh, const std::string& name);
Bitmap read_bitmap_csv(const std::filesystem::path& path);

}  // namespace biref
