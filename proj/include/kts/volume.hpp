#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace kts {

// Bad files, bad configs, out-of-range arguments. The CLI maps this to exit
// code 2; everything else lands on 3.
class input_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense 3D intensity grid, x-fastest storage order. Data is held in double
// precision; files store float32, and every volume this project writes
// carries float32-representable values so read/write round-trips exactly.
struct ScalarVolume {
  std::array<int, 3> dims{0, 0, 0};          // voxels
  std::array<double, 3> spacing{1.0, 1.0, 1.0};  // mm/voxel
  std::array<double, 3> origin{0.0, 0.0, 0.0};   // mm
  std::vector<double> data;

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(y) +
                static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(z));
  }
  bool inside(int x, int y, int z) const {
    return x >= 0 && x < dims[0] && y >= 0 && y < dims[1] && z >= 0 && z < dims[2];
  }
  double at(int x, int y, int z) const { return data[index(x, y, z)]; }
  double& at(int x, int y, int z) { return data[index(x, y, z)]; }
};

// Integer label grid sharing ScalarVolume geometry. 0 is background,
// foreground labels are 1..num_labels.
struct LabelVolume {
  std::array<int, 3> dims{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::array<double, 3> origin{0.0, 0.0, 0.0};
  std::vector<std::int32_t> data;
  int num_labels = 0;

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(y) +
                static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(z));
  }
  bool inside(int x, int y, int z) const {
    return x >= 0 && x < dims[0] && y >= 0 && y < dims[1] && z >= 0 && z < dims[2];
  }
  std::int32_t at(int x, int y, int z) const { return data[index(x, y, z)]; }
  std::int32_t& at(int x, int y, int z) { return data[index(x, y, z)]; }
};

// NRRD I/O. Raw little-endian encoding, 3-D only. Accepted element types:
// uint8, uint16, int16, float32. Scalar volumes are written as float32,
// label volumes as uint16; reads accept any of the four (labels reject
// float and negative values). num_labels is recovered as the data maximum.
ScalarVolume read_scalar_volume(const std::string& path);
LabelVolume read_label_volume(const std::string& path);
void write_volume(const ScalarVolume& vol, const std::string& path);
void write_volume(const LabelVolume& vol, const std::string& path);

// Axis-aligned crop [lo, hi). Output voxel x maps to input voxel x + lo;
// origin shifts by lo * spacing. Empty or out-of-range boxes are rejected.
ScalarVolume crop(const ScalarVolume& vol, const std::array<int, 3>& lo,
                  const std::array<int, 3>& hi);
LabelVolume crop(const LabelVolume& vol, const std::array<int, 3>& lo,
                 const std::array<int, 3>& hi);

}  // namespace kts
