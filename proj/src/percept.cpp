#include "cdp/percept.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

namespace cdp {

void GraspProbMap::validate() const {
  if (width < 1 || height < 1) throw ConfigError("grasp map: degenerate dimensions");
  if (data.size() != static_cast<size_t>(width) * static_cast<size_t>(height)) {
    throw ConfigError("grasp map: data size disagrees with dimensions");
  }
  for (float p : data) {
    if (!(p >= 0.0f && p <= 1.0f)) throw ConfigError("grasp map: value outside [0, 1]");
  }
}

GraspProbMap GraspProbMap::zeros(int width, int height) {
  if (width < 1 || height < 1) throw ConfigError("grasp map: degenerate dimensions");
  GraspProbMap m;
  m.width = width;
  m.height = height;
  m.data.assign(static_cast<size_t>(width) * static_cast<size_t>(height), 0.0f);
  return m;
}

GraspProbMap threshold_filter(const GraspProbMap& m, float thresh) {
  m.validate();
  GraspProbMap out = m;
  for (float& p : out.data) {
    if (p < thresh) p = 0.0f;
  }
  return out;
}

Centroid centroid(const GraspProbMap& m) {
  m.validate();
  Centroid c;
  double su = 0, sv = 0;
  for (int v = 0; v < m.height; ++v) {
    for (int u = 0; u < m.width; ++u) {
      if (m.at(u, v) > 0.0f) {
        su += u;
        sv += v;
        ++c.count;
      }
    }
  }
  if (c.count == 0) throw EmptySet("grasp map has no positive support");
  c.u = su / c.count;
  c.v = sv / c.count;
  return c;
}

GraspProbMap circular_mask(int width, int height, double cu, double cv, double radius) {
  GraspProbMap m = GraspProbMap::zeros(width, height);
  if (radius < 0) throw ConfigError("circular mask: negative radius");
  const double r2 = radius * radius;
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const double du = u - cu, dv = v - cv;
      if (du * du + dv * dv <= r2) m.at(u, v) = 1.0f;
    }
  }
  return m;
}

StabilizeResult stabilize(const GraspProbMap& m, float thresh, double radius, int min_support) {
  const GraspProbMap kept = threshold_filter(m, thresh);
  StabilizeResult r;
  bool empty = true;
  for (float p : kept.data) {
    if (p > 0.0f) {
      empty = false;
      break;
    }
  }
  if (empty) {
    r.low_confidence = true;
    r.mask = GraspProbMap::zeros(m.width, m.height);
    return r;
  }
  r.center = centroid(kept);
  if (r.center.count < min_support) {
    r.low_confidence = true;
    r.mask = GraspProbMap::zeros(m.width, m.height);
    return r;
  }
  r.mask = circular_mask(m.width, m.height, r.center.u, r.center.v, radius);
  return r;
}

namespace {

/// Reads the next PGM header token, skipping whitespace and # comments.
std::string next_token(std::istream& in) {
  std::string tok;
  for (;;) {
    const int c = in.peek();
    if (c == EOF) break;
    if (std::isspace(c)) {
      in.get();
      continue;
    }
    if (c == '#') {
      std::string line;
      std::getline(in, line);
      continue;
    }
    in >> tok;
    break;
  }
  return tok;
}

int parse_int(const std::string& tok, const char* what) {
  try {
    size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("pgm: bad ") + what + " '" + tok + "'");
  }
}

}  // namespace

GraspProbMap load_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + path.string());
  const std::string magic = next_token(f);
  if (magic != "P2" && magic != "P5") throw ConfigError("pgm: unsupported magic '" + magic + "'");
  const int width = parse_int(next_token(f), "width");
  const int height = parse_int(next_token(f), "height");
  const int maxval = parse_int(next_token(f), "maxval");
  if (width < 1 || height < 1) throw ConfigError("pgm: degenerate dimensions");
  if (maxval < 1 || maxval > 65535) throw ConfigError("pgm: maxval outside [1, 65535]");

  GraspProbMap m = GraspProbMap::zeros(width, height);
  const size_t n = m.data.size();
  if (magic == "P2") {
    for (size_t i = 0; i < n; ++i) {
      const std::string tok = next_token(f);
      if (tok.empty()) throw ConfigError("pgm: truncated pixel data");
      const int v = parse_int(tok, "pixel");
      if (v < 0 || v > maxval) throw ConfigError("pgm: pixel outside [0, maxval]");
      m.data[i] = static_cast<float>(v) / static_cast<float>(maxval);
    }
  } else {
    f.get();  // single whitespace after maxval
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(n * static_cast<size_t>(bytes));
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(f.gcount()) != raw.size()) throw ConfigError("pgm: truncated pixel data");
    for (size_t i = 0; i < n; ++i) {
      const int v = (bytes == 1) ? raw[i] : (raw[2 * i] << 8 | raw[2 * i + 1]);  // big-endian
      if (v > maxval) throw ConfigError("pgm: pixel outside [0, maxval]");
      m.data[i] = static_cast<float>(v) / static_cast<float>(maxval);
    }
  }
  m.validate();
  return m;
}

void save_pgm(const GraspProbMap& m, const std::filesystem::path& path) {
  m.validate();
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open " + path.string() + " for writing");
  f << "P2\n" << m.width << " " << m.height << "\n255\n";
  for (int v = 0; v < m.height; ++v) {
    for (int u = 0; u < m.width; ++u) {
      f << static_cast<int>(std::lround(m.at(u, v) * 255.0f)) << (u + 1 == m.width ? '\n' : ' ');
    }
  }
  if (!f) throw ConfigError("failed writing " + path.string());
}

}  // namespace cdp
