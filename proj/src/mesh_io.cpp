#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "scenekit/error.hpp"
#include "scenekit/mesh.hpp"

namespace scenekit {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "binary mesh and depth I/O assumes a little-endian host");

namespace {

[[noreturn]] void io_error(const fs::path& path, const std::string& what) {
  throw Error(ErrorCode::kIo, path.string() + ": " + what);
}

std::string format_g9(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return buf;
}

}  // namespace

void write_obj(const fs::path& path, const TriangleMesh& mesh) {
  std::ofstream out(path);
  if (!out) io_error(path, "cannot open for writing");
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    const Vec3& p = mesh.vertices[v];
    out << "v " << format_g9(p.x()) << ' ' << format_g9(p.y()) << ' ' << format_g9(p.z());
    if (mesh.has_colors()) {
      const Vec3& c = mesh.vertex_colors[v];
      out << ' ' << format_g9(c.x()) << ' ' << format_g9(c.y()) << ' ' << format_g9(c.z());
    }
    out << '\n';
  }
  const auto write_faces = [&](std::size_t begin, std::size_t end) {
    for (std::size_t f = begin; f < end; ++f) {
      const Face& face = mesh.faces[f];
      out << "f " << face[0] + 1 << ' ' << face[1] + 1 << ' ' << face[2] + 1 << '\n';
    }
  };
  if (mesh.groups.empty()) {
    write_faces(0, mesh.faces.size());
  } else {
    for (const MeshGroup& g : mesh.groups) {
      out << "g " << g.name << '\n';
      write_faces(g.face_begin, g.face_end);
    }
  }
  if (!out) io_error(path, "write failed");
}

TriangleMesh read_obj(const fs::path& path) {
  std::ifstream in(path);
  if (!in) io_error(path, "cannot open");
  TriangleMesh mesh;
  std::vector<Vec3> colors;
  std::string line;
  std::size_t line_no = 0;
  bool any_color = false;
  const auto close_group = [&] {
    if (mesh.groups.empty()) return;
    MeshGroup& g = mesh.groups.back();
    g.face_end = mesh.faces.size();
    g.vertex_begin = mesh.vertices.size();
    g.vertex_end = 0;
    for (std::size_t f = g.face_begin; f < g.face_end; ++f) {
      for (auto v : mesh.faces[f]) {
        g.vertex_begin = std::min<std::size_t>(g.vertex_begin, v);
        g.vertex_end = std::max<std::size_t>(g.vertex_end, v + 1);
      }
    }
    if (g.face_begin == g.face_end) g.vertex_begin = g.vertex_end = 0;
  };
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      double vals[6];
      int count = 0;
      while (count < 6 && ss >> vals[count]) ++count;
      if (count != 3 && count != 6) {
        io_error(path, "line " + std::to_string(line_no) + ": expected 3 or 6 numbers");
      }
      mesh.vertices.emplace_back(vals[0], vals[1], vals[2]);
      colors.push_back(count == 6 ? Vec3(vals[3], vals[4], vals[5]) : Vec3::Constant(kNeutral));
      any_color = any_color || count == 6;
    } else if (tag == "f") {
      std::vector<std::int32_t> idx;
      std::string tok;
      while (ss >> tok) {
        const long raw = std::stol(tok.substr(0, tok.find('/')));
        const long n = static_cast<long>(mesh.vertices.size());
        const long resolved = raw < 0 ? n + raw : raw - 1;
        if (resolved < 0 || resolved >= n) {
          io_error(path, "line " + std::to_string(line_no) + ": face index out of range");
        }
        idx.push_back(static_cast<std::int32_t>(resolved));
      }
      if (idx.size() < 3) io_error(path, "line " + std::to_string(line_no) + ": short face");
      for (std::size_t t = 1; t + 1 < idx.size(); ++t) {
        mesh.faces.push_back({idx[0], idx[t], idx[t + 1]});
      }
    } else if (tag == "g" || tag == "o") {
      close_group();
      std::string name;
      std::getline(ss >> std::ws, name);
      MeshGroup g;
      g.name = name;
      g.face_begin = mesh.faces.size();
      mesh.groups.push_back(g);
    }
  }
  close_group();
  if (any_color) {
    mesh.vertex_colors = std::move(colors);
    for (MeshGroup& g : mesh.groups) g.colored = true;
  }
  return mesh;
}

void write_ply(const fs::path& path, const TriangleMesh& mesh) {
  std::ofstream out(path, std::ios::binary);
  if (!out) io_error(path, "cannot open for writing");
  out << "ply\nformat binary_little_endian 1.0\n";
  for (const MeshGroup& g : mesh.groups) {
    out << "comment group " << g.name << ' ' << g.vertex_begin << ' ' << g.vertex_end << ' '
        << g.face_begin << ' ' << g.face_end << ' ' << (g.colored ? 1 : 0) << '\n';
  }
  out << "element vertex " << mesh.vertices.size() << '\n'
      << "property float x\nproperty float y\nproperty float z\n";
  if (mesh.has_colors()) {
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  }
  out << "element face " << mesh.faces.size() << '\n'
      << "property list uchar int vertex_indices\nend_header\n";
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    const float xyz[3] = {static_cast<float>(mesh.vertices[v].x()),
                          static_cast<float>(mesh.vertices[v].y()),
                          static_cast<float>(mesh.vertices[v].z())};
    out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
    if (mesh.has_colors()) {
      unsigned char rgb[3];
      for (int c = 0; c < 3; ++c) {
        rgb[c] = static_cast<unsigned char>(
            std::clamp(std::lround(mesh.vertex_colors[v][c] * 255.0), 0L, 255L));
      }
      out.write(reinterpret_cast<const char*>(rgb), 3);
    }
  }
  for (const Face& f : mesh.faces) {
    const unsigned char n = 3;
    out.write(reinterpret_cast<const char*>(&n), 1);
    out.write(reinterpret_cast<const char*>(f.data()), sizeof(std::int32_t) * 3);
  }
  if (!out) io_error(path, "write failed");
}

namespace {

struct PlyProperty {
  std::string name;
  std::string type;
  bool is_list = false;
  std::string count_type;
};

std::size_t type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" ||
      t == "float32") {
    return 4;
  }
  if (t == "double" || t == "float64") return 8;
  return 0;
}

double read_scalar(std::istream& in, const std::string& t) {
  unsigned char buf[8];
  const std::size_t n = type_size(t);
  in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n));
  if (t == "char" || t == "int8") return static_cast<std::int8_t>(buf[0]);
  if (t == "uchar" || t == "uint8") return buf[0];
  if (t == "short" || t == "int16") return std::bit_cast<std::int16_t>(std::array{buf[0], buf[1]});
  if (t == "ushort" || t == "uint16") return std::bit_cast<std::uint16_t>(std::array{buf[0], buf[1]});
  std::array<unsigned char, 4> b4{buf[0], buf[1], buf[2], buf[3]};
  if (t == "int" || t == "int32") return std::bit_cast<std::int32_t>(b4);
  if (t == "uint" || t == "uint32") return std::bit_cast<std::uint32_t>(b4);
  if (t == "float" || t == "float32") return std::bit_cast<float>(b4);
  std::array<unsigned char, 8> b8{};
  std::memcpy(b8.data(), buf, 8);
  return std::bit_cast<double>(b8);
}

}  // namespace

TriangleMesh read_ply(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_error(path, "cannot open");
  std::string line;
  std::getline(in, line);
  if (line != "ply") io_error(path, "missing ply magic");
  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> props;
  };
  std::vector<Element> elements;
  std::vector<MeshGroup> groups;
  bool binary_le = false;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "format") {
      std::string fmt;
      ss >> fmt;
      binary_le = fmt == "binary_little_endian";
    } else if (tag == "comment") {
      std::string kind;
      ss >> kind;
      if (kind == "group") {
        MeshGroup g;
        int colored = 0;
        ss >> g.name >> g.vertex_begin >> g.vertex_end >> g.face_begin >> g.face_end >> colored;
        g.colored = colored != 0;
        if (ss) groups.push_back(g);
      }
    } else if (tag == "element") {
      Element e;
      ss >> e.name >> e.count;
      elements.push_back(e);
    } else if (tag == "property") {
      if (elements.empty()) io_error(path, "property before element");
      PlyProperty p;
      std::string t;
      ss >> t;
      if (t == "list") {
        p.is_list = true;
        ss >> p.count_type >> p.type >> p.name;
      } else {
        p.type = t;
        ss >> p.name;
      }
      if (type_size(p.type) == 0) io_error(path, "unsupported property type " + p.type);
      elements.back().props.push_back(p);
    } else if (tag == "end_header") {
      break;
    }
  }
  if (!binary_le) io_error(path, "only binary_little_endian PLY is supported");

  TriangleMesh mesh;
  bool has_color = false;
  for (const Element& e : elements) {
    for (std::size_t r = 0; r < e.count; ++r) {
      Vec3 pos = Vec3::Zero(), col = Vec3::Constant(kNeutral);
      for (const PlyProperty& p : e.props) {
        if (p.is_list) {
          const auto n = static_cast<std::size_t>(read_scalar(in, p.count_type));
          std::vector<std::int32_t> idx(n);
          for (auto& i : idx) i = static_cast<std::int32_t>(read_scalar(in, p.type));
          if (e.name == "face" && (p.name == "vertex_indices" || p.name == "vertex_index")) {
            for (std::size_t t = 1; t + 1 < n; ++t) mesh.faces.push_back({idx[0], idx[t], idx[t + 1]});
          }
          continue;
        }
        const double value = read_scalar(in, p.type);
        if (e.name != "vertex") continue;
        const double color_scale = (p.type == "uchar" || p.type == "uint8") ? 1.0 / 255.0 : 1.0;
        if (p.name == "x") pos.x() = value;
        else if (p.name == "y") pos.y() = value;
        else if (p.name == "z") pos.z() = value;
        else if (p.name == "red") { col.x() = value * color_scale; has_color = true; }
        else if (p.name == "green") col.y() = value * color_scale;
        else if (p.name == "blue") col.z() = value * color_scale;
      }
      if (e.name == "vertex") {
        mesh.vertices.push_back(pos);
        mesh.vertex_colors.push_back(col);
      }
    }
    if (!in) io_error(path, "truncated data in element " + e.name);
  }
  if (!has_color) mesh.vertex_colors.clear();
  mesh.groups = std::move(groups);
  for (const MeshGroup& g : mesh.groups) {
    if (g.vertex_end > mesh.vertices.size() || g.face_end > mesh.faces.size()) {
      io_error(path, "group " + g.name + " exceeds mesh bounds");
    }
  }
  return mesh;
}

TriangleMesh read_mesh(const fs::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".obj" || ext == ".OBJ") return read_obj(path);
  if (ext == ".ply" || ext == ".PLY") return read_ply(path);
  io_error(path, "unknown mesh extension (expected .obj or .ply)");
}

void write_mesh(const fs::path& path, const TriangleMesh& mesh) {
  const std::string ext = path.extension().string();
  if (ext == ".obj" || ext == ".OBJ") return write_obj(path, mesh);
  if (ext == ".ply" || ext == ".PLY") return write_ply(path, mesh);
  io_error(path, "unknown mesh extension (expected .obj or .ply)");
}

}  // namespace scenekit
