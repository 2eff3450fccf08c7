#include "kts/keypoint_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace kts {

namespace {

const char* kHeader = "x,y,z,sigma,dog_value,label";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, const std::string& path, int line_no) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw input_error(path + ":" + std::to_string(line_no) + ": bad number '" + s +
                      "'");
  return v;
}

}  // namespace

void write_keypoints_csv(const std::string& path,
                         std::span<const DescribedKeypoint> kps) {
  std::ofstream out(path);
  if (!out) throw input_error(path + ": cannot open for writing");
  out << kHeader;
  for (int i = 0; i < 64; ++i) out << ",d" << i;
  out << "\n";
  char buf[128];
  for (const DescribedKeypoint& dk : kps) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%d", dk.kp.x[0],
                  dk.kp.x[1], dk.kp.x[2], dk.kp.sigma, dk.kp.dog_value, dk.label);
    out << buf;
    for (int i = 0; i < 64; ++i) {
      std::snprintf(buf, sizeof(buf), ",%.9g",
                    static_cast<double>(dk.descriptor[i]));
      out << buf;
    }
    out << "\n";
  }
  if (!out) throw input_error(path + ": write failed");
}

std::vector<DescribedKeypoint> read_keypoints_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw input_error(path + ": empty file");
  if (line.rfind(kHeader, 0) != 0)
    throw input_error(path + ": unexpected header '" + line + "'");

  std::vector<DescribedKeypoint> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv(line);
    if (f.size() < 70)
      throw input_error(path + ":" + std::to_string(line_no) +
                        ": expected at least 70 fields");
    DescribedKeypoint dk;
    dk.kp.x = {parse_double(f[0], path, line_no), parse_double(f[1], path, line_no),
               parse_double(f[2], path, line_no)};
    dk.kp.sigma = parse_double(f[3], path, line_no);
    dk.kp.dog_value = parse_double(f[4], path, line_no);
    dk.label = static_cast<int>(parse_double(f[5], path, line_no));
    for (int i = 0; i < 64; ++i)
      dk.descriptor[i] = static_cast<float>(parse_double(f[6 + i], path, line_no));
    out.push_back(dk);
  }
  return out;
}

void write_voted_keypoints_csv(const std::string& path,
                               std::span<const DescribedKeypoint> kps,
                               std::span<const LabelPosterior> votes,
                               int num_labels) {
  std::ofstream out(path);
  if (!out) throw input_error(path + ": cannot open for writing");
  out << kHeader;
  for (int i = 0; i < 64; ++i) out << ",d" << i;
  out << ",voted_label";
  for (int l = 1; l <= num_labels; ++l) out << ",s" << l;
  out << "\n";
  char buf[128];
  for (std::size_t k = 0; k < kps.size(); ++k) {
    const DescribedKeypoint& dk = kps[k];
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%d", dk.kp.x[0],
                  dk.kp.x[1], dk.kp.x[2], dk.kp.sigma, dk.kp.dog_value, dk.label);
    out << buf;
    for (int i = 0; i < 64; ++i) {
      std::snprintf(buf, sizeof(buf), ",%.9g",
                    static_cast<double>(dk.descriptor[i]));
      out << buf;
    }
    const LabelPosterior& v = votes[k];
    out << "," << (v.voted_label ? *v.voted_label : -1);
    for (int l = 0; l < num_labels; ++l) {
      const double s = l < static_cast<int>(v.scores.size()) ? v.scores[l] : 0.0;
      std::snprintf(buf, sizeof(buf), ",%.17g", s);
      out << buf;
    }
    out << "\n";
  }
  if (!out) throw input_error(path + ": write failed");
}

}  // namespace kts
