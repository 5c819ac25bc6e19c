#include "stereocenter/kitti_io.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "stereocenter/error.hpp"
#include "stereocenter/log.hpp"

namespace sc {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

double to_double(std::string_view text, std::size_t field) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw Error(ErrorCode::kMalformedLine,
                "field " + std::to_string(field) + " is not a number: '" + std::string(text) + "'");
  }
  return value;
}

int to_int(std::string_view text, std::size_t field) {
  const double value = to_double(text, field);
  if (value != std::floor(value)) {
    throw Error(ErrorCode::kMalformedLine,
                "field " + std::to_string(field) + " is not an integer: '" + std::string(text) + "'");
  }
  return static_cast<int>(value);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

void append_fixed(std::string& out, double value, const char* format = " %.2f") {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, format, value);
  out += buffer;
}

ProjectionMatrix to_projection(const std::vector<double>& values, const std::string& key) {
  if (values.size() != 12) {
    throw Error(ErrorCode::kMalformedLine,
                key + " needs 12 values, got " + std::to_string(values.size()));
  }
  ProjectionMatrix m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) m(r, c) = values[static_cast<std::size_t>(4 * r + c)];
  }
  return m;
}

std::vector<double> from_projection(const ProjectionMatrix& m) {
  std::vector<double> values;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) values.push_back(m(r, c));
  }
  return values;
}

}  // namespace

KittiLabel parse_label_line(std::string_view line) {
  const std::vector<std::string_view> f = split_fields(line);
  if (f.size() != 15 && f.size() != 16) {
    throw Error(ErrorCode::kMalformedLine,
                "expected 15 or 16 fields, got " + std::to_string(f.size()));
  }
  KittiLabel label;
  label.type = std::string(f[0]);
  label.truncated = to_double(f[1], 2);
  label.occluded = to_int(f[2], 3);
  label.alpha = to_double(f[3], 4);
  label.bbox = {to_double(f[4], 5), to_double(f[5], 6), to_double(f[6], 7), to_double(f[7], 8)};
  label.height = to_double(f[8], 9);
  label.width = to_double(f[9], 10);
  label.length = to_double(f[10], 11);
  label.x = to_double(f[11], 12);
  label.y = to_double(f[12], 13);
  label.z = to_double(f[13], 14);
  label.rotation_y = to_double(f[14], 15);
  if (f.size() == 16) label.score = to_double(f[15], 16);
  return label;
}

std::string format_label_line(const KittiLabel& label) {
  std::string out = label.type;
  append_fixed(out, label.truncated);
  out += ' ';
  out += std::to_string(label.occluded);
  for (double v : {label.alpha, label.bbox.x1, label.bbox.y1, label.bbox.x2, label.bbox.y2,
                   label.height, label.width, label.length, label.x, label.y, label.z,
                   label.rotation_y}) {
    append_fixed(out, v);
  }
  if (label.score) append_fixed(out, *label.score, " %.4f");
  return out;
}

std::vector<KittiLabel> read_label_file(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  std::vector<KittiLabel> labels;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (split_fields(line).empty()) continue;
    try {
      labels.push_back(parse_label_line(line));
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return labels;
}

void write_label_file(const std::filesystem::path& path, const std::vector<KittiLabel>& labels) {
  std::string text;
  for (const KittiLabel& label : labels) {
    text += format_label_line(label);
    text += '\n';
  }
  write_text(path, text);
}

double KittiCalib::baseline() const {
  if (P2(0, 0) == 0.0) return 0.0;
  return -(P3(0, 3) - P2(0, 3)) / P2(0, 0);
}

KittiCalib parse_calib(std::string_view text) {
  KittiCalib calib;
  bool have_p2 = false;
  bool have_p3 = false;
  std::size_t pos = 0;
  int number = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++number;
    const std::vector<std::string_view> fields = split_fields(line);
    if (fields.empty()) continue;
    std::string key(fields[0]);
    if (key.empty() || key.back() != ':') {
      throw Error(ErrorCode::kMalformedLine,
                  "calib line " + std::to_string(number) + ": expected 'key:'");
    }
    key.pop_back();
    std::vector<double> values;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      try {
        values.push_back(to_double(fields[i], i + 1));
      } catch (const Error& e) {
        throw Error(e.code(), "calib line " + std::to_string(number) + ": " + e.what());
      }
    }
    if (key == "P2") {
      calib.P2 = to_projection(values, key);
      have_p2 = true;
    } else if (key == "P3") {
      calib.P3 = to_projection(values, key);
      have_p3 = true;
    }
    calib.entries.emplace_back(std::move(key), std::move(values));
  }
  if (!have_p2 || !have_p3) {
    throw Error(ErrorCode::kMalformedLine, "calibration lacks P2 or P3");
  }
  return calib;
}

KittiCalib read_calib_file(const std::filesystem::path& path) {
  try {
    return parse_calib(read_text(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIoError) throw;
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::string format_calib(const KittiCalib& calib) {
  std::string out;
  for (const auto& [key, values] : calib.entries) {
    out += key;
    out += ':';
    for (double v : values) append_fixed(out, v, " %.12e");
    out += '\n';
  }
  return out;
}

void write_calib_file(const std::filesystem::path& path, const KittiCalib& calib) {
  write_text(path, format_calib(calib));
}

StereoCalibration calib_to_rig(const KittiCalib& calib, int image_width, int image_height) {
  if (!(calib.P2(0, 0) > 0.0) || !(calib.P2(1, 1) > 0.0)) {
    throw Error(ErrorCode::kDegenerateCalibration, "non-positive focal length in P2");
  }
  const double b = calib.baseline();
  if (!(b > 0.0)) {
    throw Error(ErrorCode::kDegenerateCalibration,
                "non-positive stereo baseline " + std::to_string(b));
  }
  StereoCalibration rig;
  rig.fx = calib.P2(0, 0);
  rig.fy = calib.P2(1, 1);
  rig.cx = calib.P2(0, 2);
  rig.cy = calib.P2(1, 2);
  rig.baseline = b;
  rig.image_width = image_width;
  rig.image_height = image_height;
  rig.validate();
  return rig;
}

KittiCalib rig_to_calib(const StereoCalibration& rig) {
  KittiCalib calib;
  calib.P2 << rig.fx, 0.0, rig.cx, 0.0,  //
      0.0, rig.fy, rig.cy, 0.0,          //
      0.0, 0.0, 1.0, 0.0;
  calib.P3 = calib.P2;
  calib.P3(0, 3) = -rig.fx * rig.baseline;
  const std::vector<double> p2 = from_projection(calib.P2);
  const std::vector<double> identity3{1, 0, 0, 0, 1, 0, 0, 0, 1};
  const std::vector<double> identity34{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
  calib.entries = {{"P0", p2},
                   {"P1", p2},
                   {"P2", p2},
                   {"P3", from_projection(calib.P3)},
                   {"R0_rect", identity3},
                   {"Tr_velo_to_cam", identity34},
                   {"Tr_imu_to_velo", identity34}};
  return calib;
}

Eigen::Vector3d left_camera_offset(const KittiCalib& calib) {
  const Eigen::Matrix3d K = calib.P2.leftCols<3>();
  if (std::abs(K.determinant()) < 1e-12) {
    throw Error(ErrorCode::kDegenerateCalibration, "singular intrinsics in P2");
  }
  return K.lu().solve(calib.P2.col(3));
}

Box3D label_to_box(const KittiLabel& label, const Eigen::Vector3d& offset) {
  Box3D box;
  box.x = label.x + offset.x();
  box.y = label.y - label.height / 2.0 + offset.y();
  box.z = label.z + offset.z();
  box.theta = normalize_angle(label.rotation_y + kPi / 2.0);
  box.length = label.length;
  box.width = label.width;
  box.height = label.height;
  return box;
}

double label_alpha(const KittiLabel& label) { return normalize_angle(label.alpha + kPi / 2.0); }

KittiLabel box_to_label(const Box3D& box, const std::string& type, const Box2D& bbox,
                        std::optional<double> score, const Eigen::Vector3d& offset) {
  KittiLabel label;
  label.type = type;
  label.bbox = bbox;
  label.height = box.height;
  label.width = box.width;
  label.length = box.length;
  label.x = box.x - offset.x();
  label.y = box.y + box.height / 2.0 - offset.y();
  label.z = box.z - offset.z();
  label.rotation_y = normalize_angle(box.theta - kPi / 2.0);
  label.alpha = normalize_angle(theta_to_alpha(box.theta, box.x, box.z) - kPi / 2.0);
  label.score = score;
  return label;
}

bool check_alpha_consistency(const KittiLabel& label, double tolerance) {
  if (label.dont_care() || !(label.z > 0.0)) return true;
  const double expected = normalize_angle(label.rotation_y - std::atan2(label.x, label.z));
  const double diff = std::abs(normalize_angle(expected - label.alpha));
  if (diff > tolerance) {
    log::warn("label {}: alpha {:.3f} disagrees with rotation_y by {:.3f} rad", label.type,
              label.alpha, diff);
    return false;
  }
  return true;
}

}  // namespace sc
