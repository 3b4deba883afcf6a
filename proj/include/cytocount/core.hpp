// Shared domain types, dataset representation and on-disk I/O.
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace cyto {

// Error caused by user input (bad files, bad config, infeasible request).
// The CLI maps these to exit code 1; everything else is an internal error.
class UserError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major rows x cols grid of doubles.
struct Map {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Map() = default;
  Map(int r, int c, double fill = 0.0)
      : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill) {}

  double& at(int i, int j) { return v[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const { return v[static_cast<std::size_t>(i) * cols + j]; }
  std::size_t size() const { return v.size(); }
  bool same_shape(const Map& o) const { return rows == o.rows && cols == o.cols; }
};

// Binary rows x cols grid; values are exactly 0 or 1.
struct Mask {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> v;

  Mask() = default;
  Mask(int r, int c, std::uint8_t fill = 0)
      : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill) {}

  std::uint8_t& at(int i, int j) { return v[static_cast<std::size_t>(i) * cols + j]; }
  std::uint8_t at(int i, int j) const { return v[static_cast<std::size_t>(i) * cols + j]; }
  std::size_t size() const { return v.size(); }
  bool same_shape(const Mask& o) const { return rows == o.rows && cols == o.cols; }

  long long count() const {
    long long n = 0;
    for (auto b : v) n += b;
    return n;
  }
  Map to_map() const {
    Map m(rows, cols);
    for (std::size_t i = 0; i < v.size(); ++i) m.v[i] = v[i] ? 1.0 : 0.0;
    return m;
  }
};

// One annotated cell: pixel column x, pixel row y, class label
// (1 = positive-tumor, 0 = other).
struct PointAnnotation {
  int x = 0;
  int y = 0;
  int label = 0;

  bool operator==(const PointAnnotation&) const = default;
};

// RGB image as floats in [0,1], interleaved r,g,b. Pixel values are quantized
// to 8-bit steps so that a PNG round trip is lossless.
struct ImagePixels {
  int rows = 0;
  int cols = 0;
  std::vector<double> rgb;  // rows * cols * 3

  ImagePixels() = default;
  ImagePixels(int r, int c, double fill = 0.0)
      : rows(r), cols(c), rgb(static_cast<std::size_t>(r) * c * 3, fill) {}

  double& at(int i, int j, int ch) {
    return rgb[(static_cast<std::size_t>(i) * cols + j) * 3 + ch];
  }
  double at(int i, int j, int ch) const {
    return rgb[(static_cast<std::size_t>(i) * cols + j) * 3 + ch];
  }
};

struct ImageRecord {
  std::string id;
  ImagePixels pixels;
  std::vector<PointAnnotation> annotations;
};

enum class Split { Train, Test };

std::string split_name(Split split);
Split split_from_string(const std::string& name);

enum class MaskKind { Circle, Dynamic, Prior };

struct Dataset {
  std::vector<ImageRecord> records;
  Split split = Split::Train;

  const ImageRecord* find(const std::string& id) const;
};

// Removes exact duplicate (x, y, label) triples, keeping the first occurrence
// and otherwise preserving order. Throws UserError listing every out-of-bounds
// point.
std::vector<PointAnnotation> validate_annotations(const std::vector<PointAnnotation>& annotations,
                                                  int rows, int cols);

// Directory layout:
//   root/images/<id>.png          8-bit RGB
//   root/annotations/<id>.csv     header "x,y,label", one row per cell
//   root/splits/{train,test}.txt  one id per line
// Records are returned sorted lexicographically by id.
Dataset load_dataset(const std::filesystem::path& root, Split split);
void save_dataset(const Dataset& dataset, const std::filesystem::path& root);

ImagePixels load_png_rgb(const std::filesystem::path& path);
void save_png_rgb(const ImagePixels& image, const std::filesystem::path& path);

// Masks are written as 8-bit grayscale PNG with values 0/255.
void save_mask_png(const Mask& mask, const std::filesystem::path& path);
Mask load_mask_png(const std::filesystem::path& path);

std::vector<PointAnnotation> load_annotation_csv(const std::filesystem::path& path);
void save_annotation_csv(const std::vector<PointAnnotation>& annotations,
                         const std::filesystem::path& path);

}  // namespace cyto
