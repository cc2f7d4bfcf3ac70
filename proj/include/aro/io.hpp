#pragma once

// ASCII mesh / point-cloud readers and writers, plus little-endian binary helpers.

#include <bit>
#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "aro/geom.hpp"

namespace aro {

namespace io_detail {

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

inline double parse_real(const std::string& tok, const std::string& where) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0' || errno == ERANGE)
    throw Error(where + ": cannot parse number '" + tok + "'");
  if (!std::isfinite(v)) throw Error(where + ": non-finite value '" + tok + "'");
  return v;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open '" + path + "'");
  return is;
}

inline std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  return os;
}

}  // namespace io_detail

// ---------------------------------------------------------------------------------------------
// Little-endian binary

template <class T>
void write_le(std::ostream& os, T value) {
  static_assert(std::is_arithmetic_v<T>);
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                                     std::uint8_t>>>;
  auto bits = std::bit_cast<U>(value);
  char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  os.write(bytes, sizeof(T));
}

template <class T>
T read_le(std::istream& is) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                                     std::uint8_t>>>;
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw Error("binary: unexpected end of data");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

// ---------------------------------------------------------------------------------------------
// OBJ (v / f records only)

inline TriMesh read_obj(std::istream& is, bool declare_watertight) {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> tris;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto tok = io_detail::split_ws(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    const std::string where = "obj line " + std::to_string(lineno);
    if (tok[0] == "v") {
      if (tok.size() < 4) throw Error(where + ": vertex needs 3 coordinates");
      vertices.push_back({io_detail::parse_real(tok[1], where), io_detail::parse_real(tok[2], where),
                          io_detail::parse_real(tok[3], where)});
    } else if (tok[0] == "f") {
      if (tok.size() < 4) throw Error(where + ": face needs at least 3 vertices");
      std::vector<std::uint32_t> idx;
      for (std::size_t i = 1; i < tok.size(); ++i) {
        const std::string head = tok[i].substr(0, tok[i].find('/'));
        long v = 0;
        try {
          v = std::stol(head);
        } catch (const std::exception&) {
          throw Error(where + ": bad face index '" + tok[i] + "'");
        }
        if (v < 0) v = static_cast<long>(vertices.size()) + v + 1;
        if (v < 1 || static_cast<std::size_t>(v) > vertices.size())
          throw Error(where + ": face index out of range");
        idx.push_back(static_cast<std::uint32_t>(v - 1));
      }
      for (std::size_t i = 1; i + 1 < idx.size(); ++i) tris.push_back({idx[0], idx[i], idx[i + 1]});
    }
    // Other record types (vn, vt, o, g, s, usemtl, ...) are ignored.
  }
  return TriMesh(std::move(vertices), std::move(tris), declare_watertight);
}

inline void write_obj(std::ostream& os, const TriMesh& mesh) {
  os << std::setprecision(17);
  for (const auto& v : mesh.vertices) os << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
  for (const auto& f : mesh.triangles) os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

inline TriMesh load_obj(const std::string& path, bool declare_watertight) {
  auto is = io_detail::open_in(path);
  return read_obj(is, declare_watertight);
}

inline void save_obj(const std::string& path, const TriMesh& mesh) {
  auto os = io_detail::open_out(path);
  write_obj(os, mesh);
}

// ---------------------------------------------------------------------------------------------
// XYZ: one "x y z" per line

inline PointCloud read_xyz(std::istream& is) {
  PointCloud cloud;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto tok = io_detail::split_ws(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    const std::string where = "xyz line " + std::to_string(lineno);
    if (tok.size() < 3) throw Error(where + ": expected 3 coordinates");
    cloud.points.push_back({io_detail::parse_real(tok[0], where), io_detail::parse_real(tok[1], where),
                            io_detail::parse_real(tok[2], where)});
  }
  if (cloud.empty()) throw Error("xyz: no points");
  return cloud;
}

inline void write_xyz(std::ostream& os, const std::vector<Vec3>& pts) {
  os << std::setprecision(17);
  for (const auto& p : pts) os << p.x << ' ' << p.y << ' ' << p.z << '\n';
}

// ---------------------------------------------------------------------------------------------
// ASCII PLY (vertex x/y/z; other properties and elements skipped)

inline PointCloud read_ply(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("ply", 0) != 0) throw Error("ply: missing magic");
  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> props;
  };
  std::vector<Element> elements;
  bool ascii = false;
  while (std::getline(is, line)) {
    const auto tok = io_detail::split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "format") {
      if (tok.size() < 2 || tok[1] != "ascii") throw Error("ply: only ascii format is supported");
      ascii = true;
    } else if (tok[0] == "element") {
      if (tok.size() < 3) throw Error("ply: malformed element line");
      elements.push_back({tok[1], std::stoul(tok[2]), {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) throw Error("ply: property before element");
      elements.back().props.push_back(tok.back());
    }
  }
  if (!ascii) throw Error("ply: missing format line");
  PointCloud cloud;
  for (const auto& el : elements) {
    int ix = -1, iy = -1, iz = -1;
    for (std::size_t i = 0; i < el.props.size(); ++i) {
      if (el.props[i] == "x") ix = static_cast<int>(i);
      if (el.props[i] == "y") iy = static_cast<int>(i);
      if (el.props[i] == "z") iz = static_cast<int>(i);
    }
    for (std::size_t n = 0; n < el.count; ++n) {
      if (!std::getline(is, line)) throw Error("ply: truncated " + el.name + " data");
      if (el.name != "vertex") continue;
      if (ix < 0 || iy < 0 || iz < 0) throw Error("ply: vertex element lacks x/y/z");
      const auto tok = io_detail::split_ws(line);
      const std::string where = "ply vertex " + std::to_string(n);
      if (tok.size() < el.props.size()) throw Error(where + ": too few values");
      cloud.points.push_back({io_detail::parse_real(tok[ix], where), io_detail::parse_real(tok[iy], where),
                              io_detail::parse_real(tok[iz], where)});
    }
  }
  if (cloud.empty()) throw Error("ply: no vertices");
  return cloud;
}

inline void write_ply(std::ostream& os, const std::vector<Vec3>& pts) {
  os << "ply\nformat ascii 1.0\nelement vertex " << pts.size()
     << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  write_xyz(os, pts);
}

/// Loads a cloud by extension: .ply is PLY, anything else XYZ.
inline PointCloud load_cloud(const std::string& path) {
  auto is = io_detail::open_in(path);
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".ply") return read_ply(is);
  return read_xyz(is);
}

inline void save_cloud(const std::string& path, const std::vector<Vec3>& pts) {
  auto os = io_detail::open_out(path);
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".ply")
    write_ply(os, pts);
  else
    write_xyz(os, pts);
}

}  // namespace aro
