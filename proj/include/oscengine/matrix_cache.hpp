#pragma once

// On-disk cache for InteractionMatrix.
//
// Binary layout (host byte order, packed, no padding):
//   char[4]  magic "PHIM"
//   u32      version
//   u32      n_max
//   u8       geometry (0 parallel, 1 perpendicular)
//   f64      phi0
//   f64      sigma
//   f64      lambda
//   f64[]    upper triangle of Phi, row-major: (0,0),(0,1)..(0,N-1),(1,1),...
// plus "<key>.json" with the same header fields for inspection.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "oscengine/coupling.hpp"

namespace oscengine::cache {

inline constexpr char kMagic[4] = {'P', 'H', 'I', 'M'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 1 + 8 + 8 + 8;

namespace fs = std::filesystem;

struct MatrixKey {
  std::uint32_t n_max = 0;
  Geometry geometry = Geometry::parallel;
  double phi0 = 0;
  double sigma = 0;
  double lambda = 0;

  static MatrixKey from(const EngineConfig& cfg) {
    return {static_cast<std::uint32_t>(cfg.truncation.n_max()), cfg.coupling.geometry, cfg.coupling.phi0,
            cfg.coupling.sigma, cfg.lambda};
  }
};

namespace detail {

template <typename T>
void put(std::string& buf, const T& value) {
  char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  buf.append(raw, sizeof(T));
}

template <typename T>
T get(const char*& p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  p += sizeof(T);
  return value;
}

inline std::string header_bytes(const MatrixKey& key) {
  std::string buf(kMagic, 4);
  put(buf, kVersion);
  put(buf, key.n_max);
  put(buf, static_cast<std::uint8_t>(key.geometry));
  put(buf, key.phi0);
  put(buf, key.sigma);
  put(buf, key.lambda);
  return buf;
}

}  // namespace detail

/// FNV-1a 64 over the packed header, as 16 hex digits.
inline std::string content_hash(const MatrixKey& key) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : detail::header_bytes(key)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

inline fs::path default_cache_dir() {
  if (const char* dir = std::getenv("OSC_ENGINE_CACHE_DIR"); dir && *dir) return dir;
  if (const char* xdg = std::getenv("XDG_CACHE_HOME"); xdg && *xdg) return fs::path(xdg) / "osc_engine";
  if (const char* home = std::getenv("HOME"); home && *home) return fs::path(home) / ".cache" / "osc_engine";
  return ".osc_engine_cache";
}

inline fs::path matrix_path(const fs::path& dir, const MatrixKey& key) {
  return dir / ("phim_" + content_hash(key) + ".bin");
}

inline void write_matrix(const fs::path& path, const InteractionMatrix& phi) {
  const auto key = MatrixKey{static_cast<std::uint32_t>(phi.trunc.n_max()), phi.spec.geometry, phi.spec.phi0,
                             phi.spec.sigma, phi.lambda};
  std::string buf = detail::header_bytes(key);
  const auto n = phi.values.rows();
  buf.reserve(buf.size() + static_cast<std::size_t>(n * (n + 1) / 2) * sizeof(double));
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = r; c < n; ++c) detail::put(buf, phi.values(r, c));

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("cannot write matrix cache " + tmp.string());
  }
  fs::rename(tmp, path);

  nlohmann::json meta = {{"magic", "PHIM"},
                         {"version", kVersion},
                         {"n_max", key.n_max},
                         {"geometry", to_string(key.geometry)},
                         {"phi0", key.phi0},
                         {"sigma", key.sigma},
                         {"lambda", key.lambda},
                         {"hash", content_hash(key)},
                         {"entries", n * (n + 1) / 2}};
  std::ofstream side(fs::path(path).replace_extension(".json"));
  side << meta.dump(2) << '\n';
}

/// Loads a cached matrix; nullopt when missing, truncated, or keyed differently.
inline std::optional<InteractionMatrix> read_matrix(const fs::path& path, const EngineConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();

  const auto key = MatrixKey::from(cfg);
  const std::string expected = detail::header_bytes(key);
  if (buf.size() < kHeaderBytes || buf.compare(0, kHeaderBytes, expected) != 0) return std::nullopt;
  const auto n = static_cast<Eigen::Index>(cfg.truncation.total_dim());
  const std::size_t entries = static_cast<std::size_t>(n * (n + 1) / 2);
  if (buf.size() != kHeaderBytes + entries * sizeof(double)) return std::nullopt;

  InteractionMatrix phi;
  phi.spec = cfg.coupling;
  phi.trunc = cfg.truncation;
  phi.lambda = cfg.lambda;
  phi.omega = cfg.omega;
  phi.values.resize(n, n);
  const char* p = buf.data() + kHeaderBytes;
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = r; c < n; ++c) {
      const double v = detail::get<double>(p);
      if (!std::isfinite(v)) return std::nullopt;
      phi.values(r, c) = v;
      phi.values(c, r) = v;
    }
  }
  return phi;
}

struct CachedMatrix {
  InteractionMatrix matrix;
  std::string hash;
  fs::path path;
  bool hit = false;
  bool recovered_from_corruption = false;
};

/// Cache-aware assembly. A present-but-unreadable file is recomputed and overwritten.
inline CachedMatrix load_or_assemble(const EngineConfig& cfg, const fs::path& dir, bool use_cache = true) {
  const auto key = MatrixKey::from(cfg);
  CachedMatrix out;
  out.hash = content_hash(key);
  out.path = matrix_path(dir, key);
  if (use_cache && fs::exists(out.path)) {
    if (auto m = read_matrix(out.path, cfg)) {
      out.matrix = std::move(*m);
      out.matrix.omega = cfg.omega;
      out.hit = true;
      return out;
    }
    out.recovered_from_corruption = true;
  }
  out.matrix = assemble_matrix(cfg);
  if (use_cache) write_matrix(out.path, out.matrix);
  return out;
}

}  // namespace oscengine::cache
