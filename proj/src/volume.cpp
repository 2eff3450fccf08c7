#include "kts/volume.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "raw NRRD payloads are read/written as little-endian");

namespace kts {

namespace {

enum class ElemType { UInt8, UInt16, Int16, Float32 };

std::size_t elem_size(ElemType t) {
  switch (t) {
    case ElemType::UInt8: return 1;
    case ElemType::UInt16: return 2;
    case ElemType::Int16: return 2;
    case ElemType::Float32: return 4;
  }
  return 0;
}

struct NrrdHeader {
  ElemType type = ElemType::Float32;
  int dimension = 0;
  std::array<int, 3> sizes{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::array<double, 3> origin{0.0, 0.0, 0.0};
  bool have_sizes = false;
  bool have_type = false;
  bool have_encoding = false;
};

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw input_error(path + ": " + msg);
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

ElemType parse_type(const std::string& path, const std::string& v) {
  if (v == "uchar" || v == "unsigned char" || v == "uint8" || v == "uint8_t")
    return ElemType::UInt8;
  if (v == "ushort" || v == "unsigned short" || v == "unsigned short int" ||
      v == "uint16" || v == "uint16_t")
    return ElemType::UInt16;
  if (v == "short" || v == "short int" || v == "signed short" || v == "int16" ||
      v == "int16_t")
    return ElemType::Int16;
  if (v == "float" || v == "float32") return ElemType::Float32;
  fail(path, "unsupported element type '" + v + "'");
}

// "space directions" must be diagonal: (a,0,0) (0,b,0) (0,0,c).
std::array<double, 3> parse_space_directions(const std::string& path,
                                             const std::string& v) {
  std::array<std::array<double, 3>, 3> rows{};
  std::string s = v;
  for (char& c : s)
    if (c == '(' || c == ')' || c == ',') c = ' ';
  std::istringstream in(s);
  for (auto& row : rows)
    for (double& x : row)
      if (!(in >> x)) fail(path, "malformed space directions '" + v + "'");
  std::array<double, 3> diag{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      if (rows[i][j] != 0.0)
        fail(path, "space directions must be diagonal, got '" + v + "'");
    }
    diag[i] = rows[i][i];
  }
  return diag;
}

NrrdHeader read_header(const std::string& path, std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(path, "empty file");
  line = trim(line);
  if (line.rfind("NRRD", 0) != 0) fail(path, "missing NRRD magic");

  NrrdHeader h;
  bool have_spacing = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) break;  // header/data separator
    if (line[0] == '#') continue;
    std::size_t colon = line.find(':');
    if (colon == std::string::npos) fail(path, "malformed header line '" + line + "'");
    std::string key = trim(line.substr(0, colon));
    std::string value = line.substr(colon + 1);
    if (!value.empty() && value[0] == '=') value = value.substr(1);  // key:=value form
    value = trim(value);

    if (key == "type") {
      h.type = parse_type(path, value);
      h.have_type = true;
    } else if (key == "dimension") {
      h.dimension = std::stoi(value);
      if (h.dimension != 3) fail(path, "dimension must be 3, got " + value);
    } else if (key == "sizes") {
      std::istringstream v(value);
      for (int& s : h.sizes)
        if (!(v >> s) || s <= 0) fail(path, "bad sizes '" + value + "'");
      h.have_sizes = true;
    } else if (key == "spacings") {
      std::istringstream v(value);
      for (double& s : h.spacing)
        if (!(v >> s)) fail(path, "bad spacings '" + value + "'");
      have_spacing = true;
    } else if (key == "space directions") {
      h.spacing = parse_space_directions(path, value);
      have_spacing = true;
    } else if (key == "space origin") {
      std::string s = value;
      for (char& c : s)
        if (c == '(' || c == ')' || c == ',') c = ' ';
      std::istringstream v(s);
      for (double& x : h.origin)
        if (!(v >> x)) fail(path, "bad space origin '" + value + "'");
    } else if (key == "encoding") {
      if (value != "raw") fail(path, "unsupported encoding '" + value + "'");
      h.have_encoding = true;
    } else if (key == "endian") {
      if (value != "little") fail(path, "unsupported endian '" + value + "'");
    } else {
      // Unknown fields (content, kinds, space, ...) are ignored.
    }
  }
  if (h.dimension != 3) fail(path, "missing 'dimension: 3'");
  if (!h.have_sizes) fail(path, "missing 'sizes'");
  if (!h.have_type) fail(path, "missing 'type'");
  if (!h.have_encoding) fail(path, "missing 'encoding'");
  if (have_spacing)
    for (double s : h.spacing)
      if (!(s > 0.0)) fail(path, "spacing components must be positive");
  return h;
}

std::vector<std::uint8_t> read_payload(const std::string& path, std::istream& in,
                                       const NrrdHeader& h) {
  std::size_t n = static_cast<std::size_t>(h.sizes[0]) * h.sizes[1] * h.sizes[2];
  std::vector<std::uint8_t> raw(n * elem_size(h.type));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    fail(path, "payload truncated");
  return raw;
}

template <typename T, typename Out>
void convert(const std::vector<std::uint8_t>& raw, std::vector<Out>& out) {
  const std::size_t n = raw.size() / sizeof(T);
  out.resize(n);
  const T* src = reinterpret_cast<const T*>(raw.data());
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<Out>(src[i]);
}

void write_header(std::ostream& out, const char* type, const std::array<int, 3>& dims,
                  const std::array<double, 3>& spacing,
                  const std::array<double, 3>& origin) {
  out << "NRRD0004\n";
  out << "type: " << type << "\n";
  out << "dimension: 3\n";
  out << "sizes: " << dims[0] << " " << dims[1] << " " << dims[2] << "\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "spacings: %.17g %.17g %.17g\n", spacing[0],
                spacing[1], spacing[2]);
  out << buf;
  std::snprintf(buf, sizeof(buf), "space origin: (%.17g,%.17g,%.17g)\n", origin[0],
                origin[1], origin[2]);
  out << buf;
  out << "endian: little\n";
  out << "encoding: raw\n";
  out << "\n";
}

template <typename Vol>
Vol crop_impl(const Vol& vol, const std::array<int, 3>& lo, const std::array<int, 3>& hi) {
  for (int d = 0; d < 3; ++d) {
    if (lo[d] < 0 || hi[d] > vol.dims[d] || lo[d] >= hi[d])
      throw input_error("crop: invalid bounds on axis " + std::to_string(d));
  }
  Vol out;
  out.dims = {hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]};
  out.spacing = vol.spacing;
  for (int d = 0; d < 3; ++d) out.origin[d] = vol.origin[d] + lo[d] * vol.spacing[d];
  out.data.resize(out.voxel_count());
  for (int z = 0; z < out.dims[2]; ++z)
    for (int y = 0; y < out.dims[1]; ++y) {
      const std::size_t src = vol.index(lo[0], y + lo[1], z + lo[2]);
      const std::size_t dst = out.index(0, y, z);
      std::memcpy(&out.data[dst], &vol.data[src],
                  static_cast<std::size_t>(out.dims[0]) * sizeof(out.data[0]));
    }
  return out;
}

}  // namespace

ScalarVolume read_scalar_volume(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error(path + ": cannot open");
  NrrdHeader h = read_header(path, in);
  std::vector<std::uint8_t> raw = read_payload(path, in, h);

  ScalarVolume vol;
  vol.dims = h.sizes;
  vol.spacing = h.spacing;
  vol.origin = h.origin;
  switch (h.type) {
    case ElemType::UInt8: convert<std::uint8_t>(raw, vol.data); break;
    case ElemType::UInt16: convert<std::uint16_t>(raw, vol.data); break;
    case ElemType::Int16: convert<std::int16_t>(raw, vol.data); break;
    case ElemType::Float32: convert<float>(raw, vol.data); break;
  }
  return vol;
}

LabelVolume read_label_volume(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error(path + ": cannot open");
  NrrdHeader h = read_header(path, in);
  if (h.type == ElemType::Float32)
    fail(path, "label volumes must have an integer element type");
  std::vector<std::uint8_t> raw = read_payload(path, in, h);

  LabelVolume vol;
  vol.dims = h.sizes;
  vol.spacing = h.spacing;
  vol.origin = h.origin;
  switch (h.type) {
    case ElemType::UInt8: convert<std::uint8_t>(raw, vol.data); break;
    case ElemType::UInt16: convert<std::uint16_t>(raw, vol.data); break;
    case ElemType::Int16: convert<std::int16_t>(raw, vol.data); break;
    case ElemType::Float32: break;
  }
  std::int32_t maxv = 0;
  for (std::int32_t v : vol.data) {
    if (v < 0) fail(path, "label volume contains negative values");
    maxv = std::max(maxv, v);
  }
  vol.num_labels = maxv;
  return vol;
}

void write_volume(const ScalarVolume& vol, const std::string& path) {
  if (vol.data.size() != vol.voxel_count())
    throw input_error(path + ": data length does not match dims");
  std::vector<float> packed(vol.data.size());
  for (std::size_t i = 0; i < vol.data.size(); ++i)
    packed[i] = static_cast<float>(vol.data[i]);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error(path + ": cannot open for writing");
  write_header(out, "float", vol.dims, vol.spacing, vol.origin);
  out.write(reinterpret_cast<const char*>(packed.data()),
            static_cast<std::streamsize>(packed.size() * sizeof(float)));
  if (!out) throw input_error(path + ": write failed");
}

void write_volume(const LabelVolume& vol, const std::string& path) {
  if (vol.data.size() != vol.voxel_count())
    throw input_error(path + ": data length does not match dims");
  std::vector<std::uint16_t> packed(vol.data.size());
  for (std::size_t i = 0; i < vol.data.size(); ++i) {
    const std::int32_t v = vol.data[i];
    if (v < 0 || v > std::numeric_limits<std::uint16_t>::max())
      throw input_error(path + ": label value out of uint16 range");
    packed[i] = static_cast<std::uint16_t>(v);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error(path + ": cannot open for writing");
  write_header(out, "unsigned short", vol.dims, vol.spacing, vol.origin);
  out.write(reinterpret_cast<const char*>(packed.data()),
            static_cast<std::streamsize>(packed.size() * sizeof(std::uint16_t)));
  if (!out) throw input_error(path + ": write failed");
}

ScalarVolume crop(const ScalarVolume& vol, const std::array<int, 3>& lo,
                  const std::array<int, 3>& hi) {
  return crop_impl(vol, lo, hi);
}

LabelVolume crop(const LabelVolume& vol, const std::array<int, 3>& lo,
                 const std::array<int, 3>& hi) {
  LabelVolume out = crop_impl(vol, lo, hi);
  out.num_labels = vol.num_labels;
  return out;
}

}  // namespace kts
