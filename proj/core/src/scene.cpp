#include "splatfuse/scene.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace splatfuse {

Eigen::Matrix3d Gaussian::covariance() const {
  const Eigen::Matrix3d r = rotation.normalized().toRotationMatrix();
  const Eigen::Vector3d s2 = (2.0 * log_scales).array().exp();
  return r * s2.asDiagonal() * r.transpose();
}

void GaussianScene::check_consistent() const {
  if (ids.size() != gaussians.size()) throw DataError("scene: id/gaussian count mismatch");
  std::unordered_set<int> seen;
  for (int id : ids)
    if (!seen.insert(id).second) throw DataError("scene: duplicate gaussian id " + std::to_string(id));
}

namespace {

const std::array<const char*, 14> kFields = {
    "x",       "y",       "z",       "f_dc_0", "f_dc_1",  "f_dc_2",  "opacity",
    "scale_0", "scale_1", "scale_2", "rot_0",  "rot_1",   "rot_2",   "rot_3"};

}  // namespace

GaussianScene load_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PlyError(PlyError::Kind::kIo, 0, "cannot open PLY: " + path.string());

  // Header is ASCII lines terminated by "end_header".
  std::size_t offset = 0;
  auto read_line = [&](std::string& line) {
    if (!std::getline(in, line))
      throw PlyError(PlyError::Kind::kMalformedHeader, offset, "unterminated PLY header");
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };

  std::string line;
  read_line(line);
  if (line != "ply") throw PlyError(PlyError::Kind::kMalformedHeader, 0, "missing 'ply' magic");
  read_line(line);
  if (line != "format binary_little_endian 1.0")
    throw PlyError(PlyError::Kind::kMalformedHeader, offset - line.size() - 1,
                   "unsupported PLY format: " + line);

  std::size_t vertex_count = 0;
  bool in_vertex_element = false;
  bool seen_vertex_element = false;
  std::vector<std::string> props;  // vertex property names in file order
  while (true) {
    read_line(line);
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    if (token == "comment" || token == "obj_info") continue;
    if (token == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      in_vertex_element = (name == "vertex");
      if (in_vertex_element) {
        seen_vertex_element = true;
        vertex_count = count;
      }
      continue;
    }
    if (token == "property") {
      if (!in_vertex_element) continue;
      std::string type, name;
      ls >> type >> name;
      if (type != "float" && type != "float32")
        throw PlyError(PlyError::Kind::kMalformedHeader, offset - line.size() - 1,
                       "unsupported vertex property type: " + type);
      props.push_back(name);
      continue;
    }
    throw PlyError(PlyError::Kind::kMalformedHeader, offset - line.size() - 1,
                   "unexpected header line: " + line);
  }
  if (!seen_vertex_element)
    throw PlyError(PlyError::Kind::kMalformedHeader, offset, "no vertex element");

  std::array<int, kFields.size()> field_index;
  for (std::size_t f = 0; f < kFields.size(); ++f) {
    auto it = std::find(props.begin(), props.end(), kFields[f]);
    if (it == props.end())
      throw PlyError(PlyError::Kind::kMissingProperty, offset,
                     std::string("missing vertex property '") + kFields[f] + "'");
    field_index[f] = static_cast<int>(it - props.begin());
  }

  const std::size_t stride = props.size();
  GaussianScene scene;
  scene.gaussians.reserve(vertex_count);
  scene.ids.reserve(vertex_count);
  std::vector<float> row(stride);
  for (std::size_t i = 0; i < vertex_count; ++i) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(stride * 4));
    if (static_cast<std::size_t>(in.gcount()) != stride * 4)
      throw PlyError(PlyError::Kind::kWrongElementCount, offset + i * stride * 4,
                     "truncated PLY body: expected " + std::to_string(vertex_count) +
                         " vertices, file ends inside vertex " + std::to_string(i));
    Gaussian g;
    g.center = {row[field_index[0]], row[field_index[1]], row[field_index[2]]};
    g.color = {row[field_index[3]] * kShC0 + 0.5, row[field_index[4]] * kShC0 + 0.5,
               row[field_index[5]] * kShC0 + 0.5};
    g.opacity_logit = row[field_index[6]];
    g.log_scales = {row[field_index[7]], row[field_index[8]], row[field_index[9]]};
    g.rotation = Eigen::Quaterniond(row[field_index[10]], row[field_index[11]],
                                    row[field_index[12]], row[field_index[13]]);
    if (g.rotation.norm() > 1e-12) g.rotation.normalize();
    scene.gaussians.push_back(g);
    scene.ids.push_back(static_cast<int>(i));
  }
  return scene;
}

void save_ply(const GaussianScene& scene, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PlyError(PlyError::Kind::kIo, 0, "cannot write PLY: " + path.string());

  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << scene.size() << "\n";
  for (const char* f : kFields) out << "property float " << f << "\n";
  out << "end_header\n";

  std::vector<float> row(kFields.size());
  for (const Gaussian& g : scene.gaussians) {
    row[0] = static_cast<float>(g.center.x());
    row[1] = static_cast<float>(g.center.y());
    row[2] = static_cast<float>(g.center.z());
    row[3] = static_cast<float>((g.color.x() - 0.5) / kShC0);
    row[4] = static_cast<float>((g.color.y() - 0.5) / kShC0);
    row[5] = static_cast<float>((g.color.z() - 0.5) / kShC0);
    row[6] = static_cast<float>(g.opacity_logit);
    row[7] = static_cast<float>(g.log_scales.x());
    row[8] = static_cast<float>(g.log_scales.y());
    row[9] = static_cast<float>(g.log_scales.z());
    row[10] = static_cast<float>(g.rotation.w());
    row[11] = static_cast<float>(g.rotation.x());
    row[12] = static_cast<float>(g.rotation.y());
    row[13] = static_cast<float>(g.rotation.z());
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * 4));
  }
  if (!out) throw PlyError(PlyError::Kind::kIo, 0, "PLY write failed: " + path.string());
}

}  // namespace splatfuse
