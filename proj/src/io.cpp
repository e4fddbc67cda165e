#include "biref/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string_view>
#include <vector>

#include "biref/errors.hpp"

namespace biref {

namespace {

std::string trim(std::string_view s) {
  const char* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string_view rest(line);
  while (true) {
    auto comma = rest.find(',');
    out.push_back(trim(rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
  throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": " + what);
}

double parse_double(const std::string& s, std::size_t line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    parse_fail(line_no, "not a number: '" + s + "'");
  }
  return v;
}

std::size_t parse_index(const std::string& s, std::size_t line_no) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    parse_fail(line_no, "not an index: '" + s + "'");
  }
  return v;
}

// Reads non-blank lines; returns false at end of input.
bool next_line(std::istream& is, std::string& line, std::size_t& line_no) {
  while (std::getline(is, line)) {
    ++line_no;
    if (!trim(line).empty()) return true;
  }
  return false;
}

void expect_header(std::istream& is, std::size_t& line_no, const char* header) {
  std::string line;
  if (!next_line(is, line, line_no) || trim(line) != header) {
    parse_fail(line_no, std::string("expected header '") + header + "'");
  }
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  return in;
}

template <typename Writer>
void write_file(const std::filesystem::path& path, Writer&& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  w(out);
  out.flush();
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_plan_csv(std::ostream& os, const TransportPlan& plan) {
  os << "i,j,mass\n";
  for (const PlanEntry& e : plan.entries) {
    os << e.i << ',' << e.j << ',' << format_double(e.mass) << '\n';
  }
}

TransportPlan read_plan_csv(std::istream& is) {
  std::size_t line_no = 0;
  expect_header(is, line_no, "i,j,mass");
  TransportPlan plan;
  std::string line;
  while (next_line(is, line, line_no)) {
    auto f = split_csv(line);
    if (f.size() != 3) parse_fail(line_no, "expected 3 fields");
    plan.entries.push_back(
        {parse_index(f[0], line_no), parse_index(f[1], line_no), parse_double(f[2], line_no)});
  }
  return plan;
}

void write_potentials_csv(std::ostream& os, const DualPotentials& pot) {
  os << "node_kind,index,value\n";
  for (std::size_t i = 0; i < pot.r.size(); ++i) {
    os << "source," << i << ',' << format_double(pot.r[i]) << '\n';
  }
  for (std::size_t j = 0; j < pot.zeta.size(); ++j) {
    os << "target," << j << ',' << format_double(pot.zeta[j]) << '\n';
  }
}

DualPotentials read_potentials_csv(std::istream& is, std::size_t gauge_node) {
  std::size_t line_no = 0;
  expect_header(is, line_no, "node_kind,index,value");
  std::vector<std::pair<std::size_t, double>> src, tgt;
  std::string line;
  while (next_line(is, line, line_no)) {
    auto f = split_csv(line);
    if (f.size() != 3) parse_fail(line_no, "expected 3 fields");
    auto entry = std::make_pair(parse_index(f[1], line_no), parse_double(f[2], line_no));
    if (f[0] == "source") {
      src.push_back(entry);
    } else if (f[0] == "target") {
      tgt.push_back(entry);
    } else {
      parse_fail(line_no, "unknown node kind '" + f[0] + "'");
    }
  }
  auto scatter = [](const std::vector<std::pair<std::size_t, double>>& in, const char* kind) {
    std::vector<double> out(in.size());
    std::vector<char> seen(in.size(), 0);
    for (const auto& [k, v] : in) {
      if (k >= in.size() || seen[k]) {
        throw Error(ErrorCode::kParseError,
                    std::string(kind) + " indices must cover 0..n-1 exactly once");
      }
      seen[k] = 1;
      out[k] = v;
    }
    return out;
  };
  DualPotentials pot;
  pot.r = scatter(src, "source");
  pot.zeta = scatter(tgt, "target");
  pot.gauge_node = gauge_node;
  return pot;
}

void write_obj(std::ostream& os, const Mesh& mesh, const std::string& name) {
  os << "o " << name << '\n';
  for (const auto& v : mesh.vertices) {
    os << "v " << format_double(v.x()) << ' ' << format_double(v.y()) << ' '
       << format_double(v.z()) << '\n';
  }
  for (const auto& f : mesh.faces) {
    os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  }
}

Bitmap read_bitmap_csv(std::istream& is) {
  std::size_t line_no = 0;
  std::string line;
  if (!next_line(is, line, line_no)) parse_fail(line_no, "empty bitmap file");
  auto head = split_csv(line);
  if (head == std::vector<std::string>{"nx", "ny", "x_min", "x_max", "y_min", "y_max"}) {
    if (!next_line(is, line, line_no)) parse_fail(line_no, "missing bitmap dimensions");
    head = split_csv(line);
  }
  if (head.size() != 6) parse_fail(line_no, "header needs nx,ny,x_min,x_max,y_min,y_max");
  Bitmap b;
  double nx = parse_double(head[0], line_no);
  double ny = parse_double(head[1], line_no);
  if (nx < 1 || ny < 1 || nx != static_cast<int>(nx) || ny != static_cast<int>(ny)) {
    parse_fail(line_no, "nx and ny must be positive integers");
  }
  b.nx = static_cast<int>(nx);
  b.ny = static_cast<int>(ny);
  b.x_min = parse_double(head[2], line_no);
  b.x_max = parse_double(head[3], line_no);
  b.y_min = parse_double(head[4], line_no);
  b.y_max = parse_double(head[5], line_no);
  b.values.reserve(static_cast<std::size_t>(b.nx) * b.ny);
  for (int k = 0; k < b.ny; ++k) {
    if (!next_line(is, line, line_no)) parse_fail(line_no, "bitmap has fewer than ny rows");
    auto row = split_csv(line);
    if (row.size() != static_cast<std::size_t>(b.nx)) parse_fail(line_no, "row needs nx values");
    for (const auto& s : row) {
      double v = parse_double(s, line_no);
      if (!(v >= 0.0) || !std::isfinite(v)) parse_fail(line_no, "bitmap values must be >= 0");
      b.values.push_back(v);
    }
  }
  if (next_line(is, line, line_no)) parse_fail(line_no, "bitmap has more than ny rows");
  return b;
}

void write_plan_csv(const std::filesystem::path& path, const TransportPlan& plan) {
  write_file(path, [&](std::ostream& os) { write_plan_csv(os, plan); });
}

TransportPlan read_plan_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_plan_csv(in);
}

void write_potentials_csv(const std::filesystem::path& path, const DualPotentials& pot) {
  write_file(path, [&](std::ostream& os) { write_potentials_csv(os, pot); });
}

DualPotentials read_potentials_csv(const std::filesystem::path& path, std::size_t gauge_node) {
  auto in = open_in(path);
  return read_potentials_csv(in, gauge_node);
}

void write_obj(const std::filesystem::path& path, const Mesh& mesh, const std::string& name) {
  write_file(path, [&](std::ostream& os) { write_obj(os, mesh, name); });
}

Bitmap read_bitmap_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_bitmap_csv(in);
}

}  // namespace biref
