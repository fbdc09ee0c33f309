#pragma once

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "csns/config.hpp"
#include "csns/coupling.hpp"
#include "csns/diagnostics.hpp"

namespace csns {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Configuration files (JSON)

namespace detail {

using json = nlohmann::ordered_json;

class ConfigReader {
 public:
  std::vector<std::string> issues;

  void keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    for (const auto& [k, v] : obj.items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || k == a;
      if (!ok) issues.push_back(join(path, k) + ": unknown key");
    }
  }

  const json* object(const json& obj, const std::string& path, const char* key, bool required) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
      if (required) issues.push_back(join(path, key) + ": missing required key");
      return nullptr;
    }
    if (!it->is_object()) {
      issues.push_back(join(path, key) + ": expected an object");
      return nullptr;
    }
    return &*it;
  }

  void number(const json& obj, const std::string& path, const char* key, double& out, bool required = false) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
      if (required) issues.push_back(join(path, key) + ": missing required key");
      return;
    }
    if (!it->is_number()) {
      issues.push_back(join(path, key) + ": expected a number");
      return;
    }
    out = it->get<double>();
  }

  template <typename Int>
  void integer(const json& obj, const std::string& path, const char* key, Int& out, bool required = false) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
      if (required) issues.push_back(join(path, key) + ": missing required key");
      return;
    }
    if (!it->is_number_integer()) {
      issues.push_back(join(path, key) + ": expected an integer");
      return;
    }
    if constexpr (std::is_unsigned_v<Int>) {
      if (it->is_number_unsigned()) {
        out = it->get<Int>();
      } else if (it->get<std::int64_t>() < 0) {
        issues.push_back(join(path, key) + ": expected a non-negative integer");
      } else {
        out = Int(it->get<std::int64_t>());
      }
    } else {
      out = Int(it->get<std::int64_t>());
    }
  }

  void boolean(const json& obj, const std::string& path, const char* key, bool& out) {
    const auto it = obj.find(key);
    if (it == obj.end()) return;
    if (!it->is_boolean()) {
      issues.push_back(join(path, key) + ": expected true or false");
      return;
    }
    out = it->get<bool>();
  }

  void string(const json& obj, const std::string& path, const char* key, std::string& out) {
    const auto it = obj.find(key);
    if (it == obj.end()) return;
    if (!it->is_string()) {
      issues.push_back(join(path, key) + ": expected a string");
      return;
    }
    out = it->get<std::string>();
  }

  bool vec(const json& obj, const std::string& path, const char* key, Vec3& out) {
    const auto it = obj.find(key);
    if (it == obj.end()) return false;
    if (!it->is_array() || it->size() < 2 || it->size() > 3) {
      issues.push_back(join(path, key) + ": expected an array of 2 or 3 numbers");
      return false;
    }
    Vec3 v{};
    for (std::size_t i = 0; i < it->size(); ++i) {
      if (!(*it)[i].is_number()) {
        issues.push_back(join(path, key) + ": expected an array of 2 or 3 numbers");
        return false;
      }
      v[i] = (*it)[i].get<double>();
    }
    out = v;
    return true;
  }

  template <typename E>
  void choice(const json& obj, const std::string& path, const char* key, E& out,
              std::initializer_list<std::pair<const char*, E>> names) {
    std::string s;
    const auto it = obj.find(key);
    if (it == obj.end()) return;
    string(obj, path, key, s);
    if (!it->is_string()) return;
    for (const auto& [n, e] : names)
      if (s == n) {
        out = e;
        return;
      }
    std::string msg = join(path, key) + ": unknown value \"" + s + "\" (expected one of";
    for (const auto& [n, e] : names) msg += std::string(" ") + n;
    issues.push_back(msg + ")");
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }
};

inline const std::initializer_list<std::pair<const char*, FluidProfile>> fluid_names = {
    {"zero", FluidProfile::zero},
    {"uniform", FluidProfile::uniform},
    {"shear", FluidProfile::shear},
    {"taylor_green", FluidProfile::taylor_green},
    {"random_smooth", FluidProfile::random_smooth},
    {"flat_spectrum", FluidProfile::flat_spectrum}};

inline const std::initializer_list<std::pair<const char*, ParticleProfile>> particle_names = {
    {"gaussian_bump", ParticleProfile::gaussian_bump},
    {"uniform_ball", ParticleProfile::uniform_ball},
    {"lattice_bump", ParticleProfile::lattice_bump},
    {"flocked", ParticleProfile::flocked}};

template <typename E>
const char* name_of(E e, std::initializer_list<std::pair<const char*, E>> names) {
  for (const auto& [n, v] : names)
    if (v == e) return n;
  return "?";
}

inline json vec_json(const Vec3& v, int dim) {
  json a = json::array();
  for (int i = 0; i < dim; ++i) a.push_back(v[i]);
  return a;
}

}  // namespace detail

/// Parse a JSON run description. Unknown keys, type errors and invariant
/// violations are all collected and reported together, each with its key path.
inline SimConfig config_from_json(const std::string& text) {
  using detail::json;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("config: not valid JSON (") + e.what() + ")"});
  }
  if (!root.is_object()) throw ConfigError({"config: top level must be an object"});

  detail::ConfigReader rd;
  SimConfig c;
  rd.keys(root, "", {"box", "kernel", "viscosity", "particle_count", "r0", "init_profile", "dt", "adaptive_dt", "cfl",
                     "t_end", "seed", "coupling_enabled", "determinism_mode", "output"});
  if (const json* box = rd.object(root, "", "box", true)) {
    rd.keys(*box, "box", {"d", "L", "N"});
    rd.integer(*box, "box", "d", c.box.dim, true);
    rd.number(*box, "box", "L", c.box.length, true);
    rd.integer(*box, "box", "N", c.box.n, true);
  }
  if (const json* k = rd.object(root, "", "kernel", false)) {
    rd.keys(*k, "kernel", {"kind", "beta", "amplitude"});
    rd.choice(*k, "kernel", "kind", c.kernel.kind,
              {{"constant", KernelKind::constant}, {"inverse_power", KernelKind::inverse_power}});
    rd.number(*k, "kernel", "beta", c.kernel.beta);
    rd.number(*k, "kernel", "amplitude", c.kernel.amplitude);
  }
  rd.number(root, "", "viscosity", c.viscosity);
  rd.integer(root, "", "particle_count", c.particle_count);
  rd.number(root, "", "r0", c.r0);
  if (const json* ip = rd.object(root, "", "init_profile", false)) {
    rd.keys(*ip, "init_profile", {"fluid", "particles"});
    if (const json* f = rd.object(*ip, "init_profile", "fluid", false)) {
      const std::string p = "init_profile.fluid";
      rd.keys(*f, p, {"kind", "amplitude", "velocity", "k_max", "xi_max"});
      rd.choice(*f, p, "kind", c.init_profile.fluid.kind, detail::fluid_names);
      rd.number(*f, p, "amplitude", c.init_profile.fluid.amplitude);
      rd.vec(*f, p, "velocity", c.init_profile.fluid.velocity);
      rd.integer(*f, p, "k_max", c.init_profile.fluid.k_max);
      rd.number(*f, p, "xi_max", c.init_profile.fluid.xi_max);
    }
    if (const json* q = rd.object(*ip, "init_profile", "particles", false)) {
      const std::string p = "init_profile.particles";
      auto& pp = c.init_profile.particles;
      rd.keys(*q, p, {"kind", "center", "sigma_x", "sigma_v", "velocity"});
      rd.choice(*q, p, "kind", pp.kind, detail::particle_names);
      Vec3 ctr{};
      if (rd.vec(*q, p, "center", ctr)) pp.center = ctr;
      if (q->contains("sigma_x")) {
        double v = 0.0;
        rd.number(*q, p, "sigma_x", v);
        pp.sigma_x = v;
      }
      if (q->contains("sigma_v")) {
        double v = 0.0;
        rd.number(*q, p, "sigma_v", v);
        pp.sigma_v = v;
      }
      rd.vec(*q, p, "velocity", pp.velocity);
    }
  }
  rd.number(root, "", "dt", c.dt);
  rd.boolean(root, "", "adaptive_dt", c.adaptive_dt);
  rd.number(root, "", "cfl", c.cfl);
  rd.number(root, "", "t_end", c.t_end, true);
  rd.integer(root, "", "seed", c.seed);
  rd.boolean(root, "", "coupling_enabled", c.coupling_enabled);
  rd.boolean(root, "", "determinism_mode", c.determinism_mode);
  if (const json* o = rd.object(root, "", "output", false)) {
    rd.keys(*o, "output", {"dir", "diagnostics_interval", "snapshot_interval", "checkpoint_interval", "jsonl"});
    rd.string(*o, "output", "dir", c.output.dir);
    rd.number(*o, "output", "diagnostics_interval", c.output.diagnostics_interval);
    rd.number(*o, "output", "snapshot_interval", c.output.snapshot_interval);
    rd.number(*o, "output", "checkpoint_interval", c.output.checkpoint_interval);
    rd.boolean(*o, "output", "jsonl", c.output.jsonl);
  }
  if (!rd.issues.empty()) throw ConfigError(rd.issues);
  return validate_config(c);
}

inline std::string config_to_json(const SimConfig& c) {
  using detail::json;
  json j;
  j["box"] = {{"d", c.box.dim}, {"L", c.box.length}, {"N", c.box.n}};
  j["kernel"] = {{"kind", std::string(to_string(c.kernel.kind))}, {"beta", c.kernel.beta}, {"amplitude", c.kernel.amplitude}};
  j["viscosity"] = c.viscosity;
  j["particle_count"] = c.particle_count;
  j["r0"] = c.r0;
  const auto& f = c.init_profile.fluid;
  const auto& p = c.init_profile.particles;
  json fl = {{"kind", detail::name_of(f.kind, detail::fluid_names)},
             {"amplitude", f.amplitude},
             {"velocity", detail::vec_json(f.velocity, c.box.dim)},
             {"k_max", f.k_max},
             {"xi_max", f.xi_max}};
  json pa = {{"kind", detail::name_of(p.kind, detail::particle_names)}};
  if (p.center) pa["center"] = detail::vec_json(*p.center, c.box.dim);
  if (p.sigma_x) pa["sigma_x"] = *p.sigma_x;
  if (p.sigma_v) pa["sigma_v"] = *p.sigma_v;
  pa["velocity"] = detail::vec_json(p.velocity, c.box.dim);
  j["init_profile"] = {{"fluid", fl}, {"particles", pa}};
  j["dt"] = c.dt;
  j["adaptive_dt"] = c.adaptive_dt;
  j["cfl"] = c.cfl;
  j["t_end"] = c.t_end;
  j["seed"] = c.seed;
  j["coupling_enabled"] = c.coupling_enabled;
  j["determinism_mode"] = c.determinism_mode;
  j["output"] = {{"dir", c.output.dir},
                 {"diagnostics_interval", c.output.diagnostics_interval},
                 {"snapshot_interval", c.output.snapshot_interval},
                 {"checkpoint_interval", c.output.checkpoint_interval},
                 {"jsonl", c.output.jsonl}};
  return j.dump(2) + "\n";
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

inline SimConfig parse_config(const std::string& path) { return config_from_json(read_text(path)); }

// ---------------------------------------------------------------------------
// Time series

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_header(int dim) {
  std::string s;
  for (const auto& c : record_columns(dim)) s += (s.empty() ? "" : ",") + c;
  return s + "\n";
}

inline std::string csv_row(const DiagnosticRecord& r, int dim) {
  std::string s;
  for (double v : record_values(r, dim)) s += (s.empty() ? "" : ",") + format_double(v);
  return s + "\n";
}

inline std::string jsonl_row(const DiagnosticRecord& r, int dim) {
  const auto cols = record_columns(dim);
  const auto vals = record_values(r, dim);
  std::string s = "{";
  for (std::size_t i = 0; i < cols.size(); ++i)
    s += (i ? ",\"" : "\"") + cols[i] + "\":" + (std::isfinite(vals[i]) ? format_double(vals[i]) : "null");
  return s + "}\n";
}

inline void write_timeseries(const std::string& path, const std::vector<DiagnosticRecord>& rows, int dim) {
  std::string s = csv_header(dim);
  for (const auto& r : rows) s += csv_row(r, dim);
  write_text(path, s);
}

/// Streams rows as they are finalized, flushing after each one so partial
/// output survives an aborted run.
class SeriesWriter {
 public:
  SeriesWriter(const std::string& csv_path, const std::string& jsonl_path, int dim) : dim_(dim) {
    csv_.open(csv_path, std::ios::binary | std::ios::trunc);
    if (!csv_) throw IoError("cannot write " + csv_path);
    csv_ << csv_header(dim_) << std::flush;
    if (!jsonl_path.empty()) {
      jsonl_.open(jsonl_path, std::ios::binary | std::ios::trunc);
      if (!jsonl_) throw IoError("cannot write " + jsonl_path);
    }
  }
  void write(const DiagnosticRecord& r) {
    csv_ << csv_row(r, dim_) << std::flush;
    if (jsonl_.is_open()) jsonl_ << jsonl_row(r, dim_) << std::flush;
  }

 private:
  int dim_;
  std::ofstream csv_;
  std::ofstream jsonl_;
};

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return int(i);
    return -1;
  }
  std::vector<double> values(const std::string& name) const {
    const int c = column(name);
    if (c < 0) throw IoError("column not found: " + name);
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(r[c]);
    return v;
  }
};

inline CsvTable read_csv(const std::string& path) {
  std::istringstream in(read_text(path));
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  {
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) t.columns.push_back(cell);
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw IoError(path + ":" + std::to_string(lineno) + ": not a number: " + cell);
      row.push_back(v);
    }
    if (row.size() != t.columns.size())
      throw IoError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.columns.size()) + " cells");
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline std::vector<DiagnosticRecord> records_from_table(const CsvTable& t) {
  const int dim = t.column("momentum_z") >= 0 ? 3 : 2;
  if (t.columns != record_columns(dim)) throw IoError("CSV columns do not match the diagnostic schema");
  std::vector<DiagnosticRecord> out;
  for (const auto& r : t.rows) out.push_back(record_from_values(r, dim));
  return out;
}

// ---------------------------------------------------------------------------
// Binary containers: snapshots ("CSNS") and checkpoints ("CSCK")
//
// Layout, all little-endian:
//   char magic[4]; u32 version; u32 d; u32 N; f64 L; f64 t; u64 particle_count;
//   u32 field_count; field_count x { char name[16]; u64 offset; u64 bytes; }
//   payload

inline constexpr std::uint32_t container_version = 1;

struct ContainerHeader {
  std::string magic;
  std::uint32_t version = container_version;
  std::uint32_t dim = 0;
  std::uint32_t n = 0;
  double length = 0.0;
  double t = 0.0;
  std::uint64_t particle_count = 0;
};

struct Container {
  ContainerHeader header;
  std::vector<std::pair<std::string, std::string>> blobs;  // name, raw bytes in order

  const std::string& blob(const std::string& name) const {
    for (const auto& [n, b] : blobs)
      if (n == name) return b;
    throw IoError("missing field: " + name);
  }
  bool has(const std::string& name) const {
    for (const auto& [n, b] : blobs)
      if (n == name) return true;
    return false;
  }
};

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& s, double v) { put_u64(s, std::bit_cast<std::uint64_t>(v)); }

inline std::uint64_t get_uint(const std::string& s, std::size_t& pos, int bytes) {
  if (pos + bytes > s.size()) throw IoError("truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t(std::uint8_t(s[pos + i])) << (8 * i);
  pos += bytes;
  return v;
}
inline double get_f64(const std::string& s, std::size_t& pos) { return std::bit_cast<double>(get_uint(s, pos, 8)); }

}  // namespace detail

inline std::string pack_doubles(std::span<const double> v) {
  std::string s;
  s.reserve(v.size() * 8);
  for (double x : v) detail::put_f64(s, x);
  return s;
}
inline std::string pack_doubles(const std::vector<double>& v) { return pack_doubles(std::span<const double>(v)); }

inline std::vector<double> unpack_doubles(const std::string& b) {
  if (b.size() % 8) throw IoError("field size is not a multiple of 8 bytes");
  std::vector<double> v(b.size() / 8);
  std::size_t pos = 0;
  for (auto& x : v) x = detail::get_f64(b, pos);
  return v;
}

inline std::string pack_u64(const std::vector<std::uint64_t>& v) {
  std::string s;
  for (auto x : v) detail::put_u64(s, x);
  return s;
}

inline std::vector<std::uint64_t> unpack_u64(const std::string& b) {
  if (b.size() % 8) throw IoError("field size is not a multiple of 8 bytes");
  std::vector<std::uint64_t> v(b.size() / 8);
  std::size_t pos = 0;
  for (auto& x : v) x = detail::get_uint(b, pos, 8);
  return v;
}

inline std::string encode_container(const Container& c) {
  using namespace detail;
  std::string s;
  if (c.header.magic.size() != 4) throw IoError("container magic must have 4 characters");
  s += c.header.magic;
  put_u32(s, c.header.version);
  put_u32(s, c.header.dim);
  put_u32(s, c.header.n);
  put_f64(s, c.header.length);
  put_f64(s, c.header.t);
  put_u64(s, c.header.particle_count);
  put_u32(s, std::uint32_t(c.blobs.size()));
  std::uint64_t offset = s.size() + c.blobs.size() * 32;
  for (const auto& [name, bytes] : c.blobs) {
    if (name.size() >= 16) throw IoError("field name too long: " + name);
    std::string nm = name;
    nm.resize(16, '\0');
    s += nm;
    put_u64(s, offset);
    put_u64(s, bytes.size());
    offset += bytes.size();
  }
  for (const auto& [name, bytes] : c.blobs) s += bytes;
  return s;
}

inline Container decode_container(const std::string& s, const std::string& magic) {
  using namespace detail;
  Container c;
  if (s.size() < 4 || s.compare(0, 4, magic) != 0) throw IoError("bad magic (expected " + magic + ")");
  std::size_t pos = 4;
  c.header.magic = magic;
  c.header.version = std::uint32_t(get_uint(s, pos, 4));
  if (c.header.version != container_version)
    throw IoError("unsupported format version " + std::to_string(c.header.version));
  c.header.dim = std::uint32_t(get_uint(s, pos, 4));
  c.header.n = std::uint32_t(get_uint(s, pos, 4));
  c.header.length = get_f64(s, pos);
  c.header.t = get_f64(s, pos);
  c.header.particle_count = get_uint(s, pos, 8);
  const std::uint32_t count = std::uint32_t(get_uint(s, pos, 4));
  for (std::uint32_t i = 0; i < count; ++i) {
    if (pos + 16 > s.size()) throw IoError("truncated field table");
    std::string name = s.substr(pos, 16);
    name.resize(std::strlen(name.c_str()));
    pos += 16;
    const std::uint64_t off = get_uint(s, pos, 8);
    const std::uint64_t bytes = get_uint(s, pos, 8);
    if (off > s.size() || bytes > s.size() - off) throw IoError("field " + name + " lies outside the file");
    c.blobs.emplace_back(name, s.substr(off, bytes));
  }
  return c;
}

inline void write_container(const std::string& path, const Container& c) { write_text(path, encode_container(c)); }

/// Physical velocity components, the deposited density, then particle
/// positions, velocities (d values per particle) and weights.
inline Container make_snapshot(const SimState& s, const RealField& rho) {
  const BoxSpec& box = s.u.physical().box();
  Container c;
  c.header = {"CSNS", container_version, std::uint32_t(box.dim), std::uint32_t(box.n), box.length, s.t,
              std::uint64_t(s.ens.size())};
  const char* names[3] = {"u_x", "u_y", "u_z"};
  for (int a = 0; a < box.dim; ++a) {
    const auto col = s.u.physical()[a];
    c.blobs.emplace_back(names[a], pack_doubles(col));
  }
  c.blobs.emplace_back("rho", pack_doubles(rho.raw()));
  std::vector<double> x;
  std::vector<double> v;
  for (std::size_t i = 0; i < s.ens.size(); ++i)
    for (int a = 0; a < box.dim; ++a) {
      x.push_back(s.ens.position[i][a]);
      v.push_back(s.ens.velocity[i][a]);
    }
  c.blobs.emplace_back("X", pack_doubles(x));
  c.blobs.emplace_back("V", pack_doubles(v));
  c.blobs.emplace_back("w", pack_doubles(s.ens.weight));
  return c;
}

inline void write_snapshot(const std::string& path, const SimState& s, const RealField& rho) {
  write_container(path, make_snapshot(s, rho));
}

inline Container read_snapshot(const std::string& path) { return decode_container(read_text(path), "CSNS"); }

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
  SimConfig config;
  SimState state;
  RunTrack track;
  std::string rng_state;
};

namespace detail {

inline std::vector<double> flatten(const std::vector<DiagnosticRecord>& rows, int dim) {
  std::vector<double> out;
  for (const auto& r : rows) {
    const auto v = record_values(r, dim);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

inline std::vector<DiagnosticRecord> unflatten(const std::vector<double>& v, int dim) {
  const std::size_t w = record_columns(dim).size();
  if (v.size() % w) throw IoError("record block has the wrong size");
  std::vector<DiagnosticRecord> out;
  for (std::size_t i = 0; i < v.size(); i += w) out.push_back(record_from_values({v.begin() + i, v.begin() + i + w}, dim));
  return out;
}

}  // namespace detail

inline Container make_checkpoint(const Simulation& sim) {
  const SimState& s = sim.state();
  const RunTrack& tr = sim.track();
  const BoxSpec& box = sim.config().box;
  Container c;
  c.header = {"CSCK", container_version, std::uint32_t(box.dim), std::uint32_t(box.n), box.length, s.t,
              std::uint64_t(s.ens.size())};
  c.blobs.emplace_back("config", config_to_json(sim.config()));
  c.blobs.emplace_back("rng", sim.rng_state());
  std::vector<double> uh;
  for (const auto& z : s.u.spectral().raw()) {
    uh.push_back(z.real());
    uh.push_back(z.imag());
  }
  c.blobs.emplace_back("uhat", pack_doubles(uh));
  std::vector<double> x;
  std::vector<double> v;
  for (std::size_t i = 0; i < s.ens.size(); ++i)
    for (int a = 0; a < 3; ++a) {
      x.push_back(s.ens.position[i][a]);
      v.push_back(s.ens.velocity[i][a]);
    }
  c.blobs.emplace_back("X", pack_doubles(x));
  c.blobs.emplace_back("V", pack_doubles(v));
  c.blobs.emplace_back("w", pack_doubles(s.ens.weight));
  const auto& l = tr.ledger;
  const auto& sm = tr.summary;
  c.blobs.emplace_back("track", pack_doubles({s.t, l.e0, l.e, l.cum_grad, l.cum_drag, l.cum_align, tr.tw_drag_cum,
                                              tr.r_integral, tr.r0, tr.rho0_inf, sm.max_energy_increase,
                                              sm.min_r_margin, sm.min_cauchy_margin, sm.min_equivalence_margin,
                                              sm.mass0, sm.mass}));
  c.blobs.emplace_back("quadrature", pack_doubles({l.t_prev, l.t_last, l.r_prev.grad, l.r_prev.drag, l.r_prev.align,
                                                   l.r_last.grad, l.r_last.drag, l.r_last.align, l.slope_last.grad,
                                                   l.slope_last.drag, l.slope_last.align}));
  c.blobs.emplace_back("counters", pack_u64({s.step_index, tr.diag_count, tr.snap_count, tr.ckpt_count, sm.steps,
                                             std::uint64_t(l.points)}));
  c.blobs.emplace_back("pending", pack_doubles(detail::flatten(tr.pending, box.dim)));
  c.blobs.emplace_back("history", pack_doubles(detail::flatten(tr.history, box.dim)));
  return c;
}

inline void write_checkpoint(const std::string& path, const Simulation& sim) { write_container(path, make_checkpoint(sim)); }

inline Checkpoint decode_checkpoint(const Container& c) {
  Checkpoint ck;
  ck.config = config_from_json(c.blob("config"));
  ck.rng_state = c.blob("rng");
  const BoxSpec& box = ck.config.box;
  if (c.header.dim != std::uint32_t(box.dim) || c.header.n != std::uint32_t(box.n))
    throw IoError("checkpoint header does not match its configuration");
  const Spectral sp(box);
  const auto uh = unpack_doubles(c.blob("uhat"));
  SpectralField F(box, box.dim);
  if (uh.size() != 2 * F.raw().size()) throw IoError("checkpoint velocity has the wrong size");
  for (std::size_t i = 0; i < F.raw().size(); ++i) F.raw()[i] = Complex(uh[2 * i], uh[2 * i + 1]);
  ck.state.u = VelocityField::from_spectral(sp, std::move(F));
  const auto x = unpack_doubles(c.blob("X"));
  const auto v = unpack_doubles(c.blob("V"));
  ck.state.ens.dim = box.dim;
  ck.state.ens.weight = unpack_doubles(c.blob("w"));
  const std::size_t np = ck.state.ens.weight.size();
  if (np != c.header.particle_count || x.size() != 3 * np || v.size() != 3 * np)
    throw IoError("checkpoint particle arrays are inconsistent");
  ck.state.ens.position.resize(np);
  ck.state.ens.velocity.resize(np);
  for (std::size_t i = 0; i < np; ++i) {
    ck.state.ens.position[i] = {x[3 * i], x[3 * i + 1], x[3 * i + 2]};
    ck.state.ens.velocity[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
  }
  const auto tr = unpack_doubles(c.blob("track"));
  const auto cn = unpack_u64(c.blob("counters"));
  const auto qd = unpack_doubles(c.blob("quadrature"));
  if (tr.size() != 16 || cn.size() != 6 || qd.size() != 11) throw IoError("checkpoint bookkeeping has the wrong size");
  ck.state.t = tr[0];
  ck.state.step_index = cn[0];
  auto& t = ck.track;
  t.ledger = {tr[1], tr[2], tr[3], tr[4], tr[5], qd[0], qd[1], {qd[2], qd[3], qd[4]}, {qd[5], qd[6], qd[7]},
              {qd[8], qd[9], qd[10]}, int(cn[5])};
  t.tw_drag_cum = tr[6];
  t.r_integral = tr[7];
  t.r0 = tr[8];
  t.rho0_inf = tr[9];
  t.summary = {tr[10], tr[11], tr[12], tr[13], tr[14], tr[15], cn[4]};
  t.diag_count = cn[1];
  t.snap_count = cn[2];
  t.ckpt_count = cn[3];
  t.pending = detail::unflatten(unpack_doubles(c.blob("pending")), box.dim);
  t.history = detail::unflatten(unpack_doubles(c.blob("history")), box.dim);
  return ck;
}

inline Checkpoint read_checkpoint(const std::string& path) {
  return decode_checkpoint(decode_container(read_text(path), "CSCK"));
}

// ---------------------------------------------------------------------------
// Run driver

struct RunOptions {
  std::string restart;  // checkpoint to resume from
  bool quiet = true;
};

struct RunResult {
  std::vector<DiagnosticRecord> records;
  RunSummary summary;
  SimState final_state;
  std::string last_checkpoint;
};

inline std::string numbered(const std::string& dir, const char* stem, std::uint64_t k, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%06" PRIu64 "%s", stem, k, ext);
  return (std::filesystem::path(dir) / buf).string();
}

/// Execute a configuration (or resume a checkpoint), streaming the CSV series,
/// snapshots and checkpoints into cfg.output.dir when it is set.
inline RunResult run(const SimConfig& cfg_in, const RunOptions& opt = {}) {
  std::optional<Simulation> sim;
  if (!opt.restart.empty()) {
    Checkpoint ck = read_checkpoint(opt.restart);
    ck.config.output = cfg_in.output;
    sim.emplace(ck.config, std::move(ck.state), std::move(ck.track), ck.rng_state);
    sim->set_last_checkpoint(opt.restart);
  } else {
    sim.emplace(cfg_in);
  }
  const SimConfig& cfg = sim->config();
  const std::string dir = cfg.output.dir;
  std::optional<SeriesWriter> writer;
  std::string last_ckpt = opt.restart;
  if (!dir.empty()) {
    std::filesystem::create_directories(dir);
    write_text((std::filesystem::path(dir) / "config.json").string(), config_to_json(cfg));
    writer.emplace((std::filesystem::path(dir) / "diagnostics.csv").string(),
                   cfg.output.jsonl ? (std::filesystem::path(dir) / "diagnostics.jsonl").string() : std::string(),
                   cfg.box.dim);
    for (const auto& r : sim->records()) writer->write(r);
    sim->on_record([&](const DiagnosticRecord& r) { writer->write(r); });
    sim->on_snapshot([&](const Simulation& s) {
      write_snapshot(numbered(dir, "snapshot", s.track().snap_count, ".csns"), s.state(), s.eval().moments.rho);
    });
    sim->on_checkpoint([&](const Simulation& s) {
      const std::string p = numbered(dir, "checkpoint", s.track().ckpt_count, ".csck");
      write_checkpoint(p, s);
      last_ckpt = p;
      sim->set_last_checkpoint(p);
    });
  }
  sim->run();
  return {sim->records(), sim->summary(), sim->state(), last_ckpt};
}

}  // namespace csns
