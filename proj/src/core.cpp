#include "cytocount/core.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>

namespace cyto {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

int parse_int_field(const std::string& field, const std::filesystem::path& file, int line_no) {
  const std::string t = trim(field);
  int value = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc{} || ptr != t.data() + t.size()) {
    throw UserError(fmt::format("{}:{}: malformed integer field '{}'", file.string(), line_no, field));
  }
  return value;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::uint8_t to_byte(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

}  // namespace

std::string split_name(Split split) { return split == Split::Train ? "train" : "test"; }

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "test") return Split::Test;
  throw UserError(fmt::format("unknown split '{}' (expected train or test)", name));
}

const ImageRecord* Dataset::find(const std::string& id) const {
  for (const auto& rec : records) {
    if (rec.id == id) return &rec;
  }
  return nullptr;
}

std::vector<PointAnnotation> validate_annotations(const std::vector<PointAnnotation>& annotations,
                                                  int rows, int cols) {
  std::string offenders;
  for (const auto& a : annotations) {
    if (a.x < 0 || a.x >= cols || a.y < 0 || a.y >= rows) {
      offenders += fmt::format("{}(x={}, y={}, label={})", offenders.empty() ? "" : ", ", a.x, a.y,
                               a.label);
    }
    if (a.label != 0 && a.label != 1) {
      throw UserError(fmt::format("annotation label must be 0 or 1, got {} at (x={}, y={})",
                                  a.label, a.x, a.y));
    }
  }
  if (!offenders.empty()) {
    throw UserError(
        fmt::format("point out of bounds for {}x{} image: {}", rows, cols, offenders));
  }
  std::vector<PointAnnotation> result;
  std::set<std::tuple<int, int, int>> seen;
  result.reserve(annotations.size());
  for (const auto& a : annotations) {
    if (seen.insert({a.x, a.y, a.label}).second) result.push_back(a);
  }
  return result;
}

ImagePixels load_png_rgb(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw UserError(fmt::format("cannot read image '{}'", path.string()));
  ImagePixels img(bgr.rows, bgr.cols);
  for (int i = 0; i < bgr.rows; ++i) {
    const auto* row = bgr.ptr<cv::Vec3b>(i);
    for (int j = 0; j < bgr.cols; ++j) {
      img.at(i, j, 0) = row[j][2] / 255.0;
      img.at(i, j, 1) = row[j][1] / 255.0;
      img.at(i, j, 2) = row[j][0] / 255.0;
    }
  }
  return img;
}

void save_png_rgb(const ImagePixels& image, const std::filesystem::path& path) {
  cv::Mat bgr(image.rows, image.cols, CV_8UC3);
  for (int i = 0; i < image.rows; ++i) {
    auto* row = bgr.ptr<cv::Vec3b>(i);
    for (int j = 0; j < image.cols; ++j) {
      row[j][2] = to_byte(image.at(i, j, 0));
      row[j][1] = to_byte(image.at(i, j, 1));
      row[j][0] = to_byte(image.at(i, j, 2));
    }
  }
  if (!cv::imwrite(path.string(), bgr)) {
    throw UserError(fmt::format("cannot write image '{}'", path.string()));
  }
}

void save_mask_png(const Mask& mask, const std::filesystem::path& path) {
  cv::Mat gray(mask.rows, mask.cols, CV_8UC1);
  for (int i = 0; i < mask.rows; ++i) {
    auto* row = gray.ptr<std::uint8_t>(i);
    for (int j = 0; j < mask.cols; ++j) row[j] = mask.at(i, j) ? 255 : 0;
  }
  if (!cv::imwrite(path.string(), gray)) {
    throw UserError(fmt::format("cannot write mask '{}'", path.string()));
  }
}

Mask load_mask_png(const std::filesystem::path& path) {
  cv::Mat gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (gray.empty()) throw UserError(fmt::format("cannot read mask '{}'", path.string()));
  Mask mask(gray.rows, gray.cols);
  for (int i = 0; i < gray.rows; ++i) {
    const auto* row = gray.ptr<std::uint8_t>(i);
    for (int j = 0; j < gray.cols; ++j) mask.at(i, j) = row[j] >= 128 ? 1 : 0;
  }
  return mask;
}

std::vector<PointAnnotation> load_annotation_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError(fmt::format("cannot open annotation file '{}'", path.string()));
  std::vector<PointAnnotation> annotations;
  std::string line;
  int line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (!saw_header) {
      if (t != "x,y,label") {
        throw UserError(fmt::format("{}:{}: expected header 'x,y,label', got '{}'", path.string(),
                                    line_no, t));
      }
      saw_header = true;
      continue;
    }
    const auto fields = split_fields(t);
    if (fields.size() != 3) {
      throw UserError(
          fmt::format("{}:{}: expected 3 fields, got {}", path.string(), line_no, fields.size()));
    }
    PointAnnotation a;
    a.x = parse_int_field(fields[0], path, line_no);
    a.y = parse_int_field(fields[1], path, line_no);
    a.label = parse_int_field(fields[2], path, line_no);
    annotations.push_back(a);
  }
  return annotations;
}

void save_annotation_csv(const std::vector<PointAnnotation>& annotations,
                         const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw UserError(fmt::format("cannot write annotation file '{}'", path.string()));
  out << "x,y,label\n";
  for (const auto& a : annotations) out << a.x << ',' << a.y << ',' << a.label << '\n';
}

Dataset load_dataset(const std::filesystem::path& root, Split split) {
  const auto split_file = root / "splits" / (split_name(split) + ".txt");
  std::ifstream in(split_file);
  if (!in) throw UserError(fmt::format("cannot open split list '{}'", split_file.string()));

  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    const std::string id = trim(line);
    if (!id.empty()) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw UserError(fmt::format("duplicate image id in '{}'", split_file.string()));
  }

  Dataset ds;
  ds.split = split;
  ds.records.reserve(ids.size());
  for (const auto& id : ids) {
    const auto image_path = root / "images" / (id + ".png");
    const auto ann_path = root / "annotations" / (id + ".csv");
    if (!std::filesystem::exists(image_path)) {
      throw UserError(fmt::format("missing image file for id '{}': {}", id, image_path.string()));
    }
    if (!std::filesystem::exists(ann_path)) {
      throw UserError(
          fmt::format("missing annotation file for id '{}': {}", id, ann_path.string()));
    }
    ImageRecord rec;
    rec.id = id;
    rec.pixels = load_png_rgb(image_path);
    if (rec.pixels.rows < 32 || rec.pixels.cols < 32) {
      throw UserError(fmt::format("image '{}' is {}x{}; the minimum supported size is 32x32", id,
                                  rec.pixels.rows, rec.pixels.cols));
    }
    try {
      rec.annotations =
          validate_annotations(load_annotation_csv(ann_path), rec.pixels.rows, rec.pixels.cols);
    } catch (const UserError& e) {
      throw UserError(fmt::format("image '{}': {}", id, e.what()));
    }
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& root) {
  std::filesystem::create_directories(root / "images");
  std::filesystem::create_directories(root / "annotations");
  std::filesystem::create_directories(root / "splits");
  const auto split_file = root / "splits" / (split_name(dataset.split) + ".txt");
  std::ofstream out(split_file);
  if (!out) throw UserError(fmt::format("cannot write split list '{}'", split_file.string()));
  for (const auto& rec : dataset.records) {
    save_png_rgb(rec.pixels, root / "images" / (rec.id + ".png"));
    save_annotation_csv(rec.annotations, root / "annotations" / (rec.id + ".csv"));
    out << rec.id << '\n';
  }
}

}  // namespace cyto
