#pragma once

#include "quditkit/core.hpp"
#include "quditkit/decomposer.hpp"
#include "quditkit/transmon.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace quditkit::cli {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Strict view of one JSON object: every key must be consumed before finish().
class ConfigReader {
 public:
  ConfigReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  T get(const std::string& key, T fallback) {
    if (!j_.contains(key)) return fallback;
    return convert<T>(key);
  }

  template <class T>
  T require(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError(where() + ": missing required key '" + key + "'");
    return convert<T>(key);
  }

  const Json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  ConfigReader child(const std::string& key) {
    used_.insert(key);
    return ConfigReader(j_.at(key), path_ + "." + key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError(where() + ": unknown key '" + it.key() + "'");
    }
  }

  const std::string& path() const { return path_; }

 private:
  template <class T>
  T convert(const std::string& key) {
    used_.insert(key);
    const Json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) throw ConfigError("");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      return v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError(where() + ": key '" + key + "' has the wrong type");
    }
  }

  std::string where() const { return path_.empty() ? "config" : path_; }

  const Json& j_;
  std::string path_;
  std::set<std::string> used_;
};

template <class T>
std::vector<T> get_list(ConfigReader& r, const std::string& key, std::vector<T> fallback) {
  if (!r.has(key)) return fallback;
  const Json& v = r.raw(key);
  if (!v.is_array()) throw ConfigError(r.path() + ": key '" + key + "' must be an array");
  std::vector<T> out;
  for (const auto& x : v) {
    const bool ok = std::is_integral_v<T> ? x.is_number_integer() : (std::is_same_v<T, std::string> ? x.is_string() : x.is_number());
    if (!ok) throw ConfigError(r.path() + ": key '" + key + "' has an element of the wrong type");
    out.push_back(x.get<T>());
  }
  return out;
}

inline void require_range(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

/// Files are held in memory and written only once the command succeeded.
class Outputs {
 public:
  void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }
  void add_json(const std::string& name, const Json& j) { add(name, j.dump(2) + "\n"); }

  void plot(const std::string& file, const std::string& x, const std::vector<std::string>& y, const std::string& title) {
    Json p;
    p["file"] = file;
    p["kind"] = "csv";
    p["x"] = x;
    p["y"] = y;
    p["title"] = title;
    plots_.push_back(p);
  }

  std::vector<std::string> commit(const fs::path& dir, const std::string& command) {
    if (!plots_.empty()) {
      Json m;
      m["command"] = command;
      m["plots"] = plots_;
      add_json(command + ".plot.json", m);
    }
    fs::create_directories(dir);
    std::vector<std::string> written;
    for (const auto& [name, content] : files_) {
      const fs::path p = dir / name;
      std::ofstream f(p, std::ios::binary);
      if (!f) throw std::runtime_error("cannot write " + p.string());
      f << content;
      written.push_back(p.string());
    }
    return written;
  }

 private:
  std::vector<std::pair<std::string, std::string>> files_;
  Json plots_ = Json::array();
};

class Csv {
 public:
  explicit Csv(std::vector<std::string> header) : width_(header.size()) { line(header); }

  void row(const std::vector<double>& values) {
    std::vector<std::string> s;
    for (double v : values) s.push_back(num(v));
    line(s);
  }
  void row(const std::vector<std::string>& values) { line(values); }

  std::string str() const { return out_.str(); }

 private:
  void line(const std::vector<std::string>& cells) {
    if (cells.size() != width_) throw std::logic_error("csv row width mismatch");
    for (size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
  }
  size_t width_;
  std::ostringstream out_;
};

struct RunContext {
  std::uint64_t seed = 0;
  int threads = 1;
  bool verbose = false;
  fs::path out = "out";
  TransmonSpec device;
  bool device_given = false;

  void log(const std::string& s) const {
    if (verbose) std::cerr << s << "\n";
  }
};

inline Json load_json_file(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw ConfigError("cannot open '" + p.string() + "'");
  try {
    return Json::parse(f);
  } catch (const Json::parse_error& e) {
    throw ConfigError("'" + p.string() + "' is not valid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Device spec: {ej, ec, ng, charge_cutoff, f01 ... f67}

inline TransmonSpec parse_device(ConfigReader r) {
  TransmonSpec s;
  const bool has_energies = r.has("ej") || r.has("ec");
  s.ng = r.get<double>("ng", 0.0);
  s.charge_cutoff = r.get<int>("charge_cutoff", s.charge_cutoff);
  std::vector<double> ladder;
  for (int n = 0; n < 7; ++n) {
    const std::string key = "f" + std::to_string(n) + std::to_string(n + 1);
    if (!r.has(key)) break;
    ladder.push_back(r.require<double>(key));
  }
  if (has_energies) {
    s.ej = r.require<double>("ej");
    s.ec = r.require<double>("ec");
  } else if (ladder.size() >= 2) {
    const TransmonFit fit = fit_transmon(ladder, s.ng, s.charge_cutoff);
    s.ej = fit.ej;
    s.ec = fit.ec;
  } else {
    throw ConfigError(r.path() + ": device spec needs ej and ec, or at least f01 and f12");
  }
  r.finish();
  s.validate();
  return s;
}

/// Inline object or a path to a JSON file.
inline TransmonSpec device_from(const Json& v, const std::string& path) {
  if (v.is_string()) {
    const Json j = load_json_file(v.get<std::string>());
    return parse_device(ConfigReader(j, v.get<std::string>()));
  }
  return parse_device(ConfigReader(v, path));
}

// ---------------------------------------------------------------------------
// Program JSON: {d, mode, layers: [{theta, snap}], trailing_snap}

inline Json program_to_json(const SnapDisplacementProgram& p) {
  Json j;
  j["d"] = p.dim.d();
  j["mode"] = to_string(p.mode);
  Json layers = Json::array();
  for (int k = 0; k < p.depth(); ++k) {
    Json l;
    l["theta"] = p.thetas[static_cast<size_t>(k)];
    l["snap"] = p.snaps[static_cast<size_t>(k)].phases;
    layers.push_back(l);
  }
  j["layers"] = layers;
  j["trailing_snap"] = p.snaps.back().phases;
  return j;
}

inline SnapDisplacementProgram program_from_json(const Json& j) {
  ConfigReader r(j, "program");
  SnapDisplacementProgram p;
  p.dim = SpinDimension(r.require<int>("d"));
  p.mode = synthesis_mode_from_string(r.get<std::string>("mode", "general"));
  const Json& layers = r.raw("layers");
  if (!layers.is_array()) throw ConfigError("program.layers must be an array");
  for (const auto& l : layers) {
    ConfigReader lr(l, "program.layers[]");
    p.thetas.push_back(lr.require<double>("theta"));
    p.snaps.emplace_back(get_list<double>(lr, "snap", {}));
    lr.finish();
  }
  p.snaps.emplace_back(get_list<double>(r, "trailing_snap", {}));
  r.finish();
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("program: ") + e.what());
  }
  return p;
}

// ---------------------------------------------------------------------------

struct Command {
  std::string name;
  std::string help;
  /// Parses and validates the command section, returning the work to run.
  std::function<std::function<void(const RunContext&, Outputs&)>(ConfigReader&)> prepare;
};

std::vector<Command> gate_commands();
std::vector<Command> pulse_commands();
std::vector<Command> rb_commands();
std::vector<Command> readout_commands();

}  // namespace quditkit::cli
