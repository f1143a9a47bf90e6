#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stlmon/formula.hpp"

namespace stlmon {

/// Malformed trace input (file or stream). `index` is the last sample that
/// was read successfully, -1 if none.
class TraceError : public std::runtime_error {
public:
  TraceError(const std::string& msg, std::int64_t last_good = -1)
      : std::runtime_error(msg), last_good_(last_good) {}
  std::int64_t last_good() const noexcept { return last_good_; }

private:
  std::int64_t last_good_;
};

/// Signal missing from a trace or a streamed sample.
class BindingError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Uniformly sampled multi-signal trace. Sample k has absolute index
/// `origin + k`; `times` holds the timestamps as read (empty means
/// t0 + k / fs).
struct Trace {
  double fs = 10.0;
  double t0 = 0.0;
  std::int64_t origin = 0;
  std::map<std::string, std::vector<double>> signals;
  std::vector<double> times;

  std::size_t size() const { return signals.empty() ? times.size() : signals.begin()->second.size(); }

  /// Timestamp of absolute index i.
  double time_at(std::int64_t i) const {
    const std::int64_t k = i - origin;
    if (!times.empty() && k >= 0 && k < static_cast<std::int64_t>(times.size())) return times[static_cast<std::size_t>(k)];
    return t0 + static_cast<double>(k) / fs;
  }

  const std::vector<double>& signal(const std::string& name) const {
    auto it = signals.find(name);
    if (it == signals.end()) throw BindingError("unbound signal '" + name + "'");
    return it->second;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : signals) out.push_back(k);
    return out;
  }

  /// Throws std::invalid_argument when lengths disagree or fs is invalid.
  void check() const {
    if (!(fs > 0.0) || !std::isfinite(fs)) throw std::invalid_argument("trace sample rate must be positive");
    const std::size_t n = size();
    if (n == 0) throw std::invalid_argument("trace is empty");
    for (const auto& [k, v] : signals)
      if (v.size() != n) throw std::invalid_argument("signal '" + k + "' has " + std::to_string(v.size()) + " samples, expected " + std::to_string(n));
    if (!times.empty() && times.size() != n) throw std::invalid_argument("timestamp count mismatch");
  }

  /// Copy of absolute indices [first, last].
  Trace slice(std::int64_t first, std::int64_t last) const {
    Trace out;
    out.fs = fs;
    out.origin = first;
    out.t0 = time_at(first);
    const auto a = static_cast<std::size_t>(first - origin);
    const auto b = static_cast<std::size_t>(last - origin) + 1;
    for (const auto& [k, v] : signals) out.signals[k] = std::vector<double>(v.begin() + a, v.begin() + b);
    if (!times.empty()) out.times = std::vector<double>(times.begin() + a, times.begin() + b);
    return out;
  }
};

namespace detail {

inline double parse_real(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = first + s.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\t' || last[-1] == '\r')) --last;
  if (first < last && *first == '+') ++first;
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last || !std::isfinite(v)) throw TraceError("malformed number '" + s + "' " + where);
  return v;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

/// Sample rate from timestamps; snapped to an integer when within 1e-6.
inline double infer_rate(const std::vector<double>& t) {
  const double period = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  if (!(period > 0.0)) throw TraceError("timestamps are not increasing");
  double fs = 1.0 / period;
  if (std::abs(fs - std::round(fs)) <= 1e-6 * fs) fs = std::round(fs);
  return fs;
}

/// Uniform spacing within 1e-9 relative tolerance (plus rounding of large t).
inline void check_uniform(const std::vector<double>& t, double fs) {
  const double period = 1.0 / fs;
  for (std::size_t k = 1; k < t.size(); ++k) {
    const double tol = 1e-9 * period + 8.0 * 2.220446049250313e-16 * std::abs(t[k]);
    if (std::abs((t[k] - t[k - 1]) - period) > tol)
      throw TraceError("non-uniform timestamp at sample " + std::to_string(k) + " (t=" + format_number(t[k]) + ")",
                       static_cast<std::int64_t>(k) - 1);
  }
}

inline void finish_times(Trace& tr, std::optional<double> rate) {
  if (tr.times.empty()) throw TraceError("trace has no samples");
  if (rate) {
    tr.fs = *rate;
  } else if (tr.times.size() >= 2) {
    tr.fs = infer_rate(tr.times);
  } else {
    throw TraceError("cannot infer sample rate from a single sample; pass a rate");
  }
  check_uniform(tr.times, tr.fs);
  tr.t0 = tr.times.front();
}

}  // namespace detail

/// CSV: header `t,<sig>,...`, one row per sample. `rate` overrides inference.
inline Trace read_csv(std::istream& in, std::optional<double> rate = std::nullopt) {
  std::string line;
  if (!std::getline(in, line)) throw TraceError("empty CSV");
  auto header = detail::split_csv(line);
  for (auto& h : header) h = detail::trim(h);
  if (header.empty() || header[0] != "t") throw TraceError("first CSV column must be 't'");
  Trace tr;
  std::vector<std::vector<double>*> cols;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c].empty() || tr.signals.count(header[c])) throw TraceError("bad or duplicate column '" + header[c] + "'");
    cols.push_back(&tr.signals[header[c]]);
  }
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty() || line == "\r") continue;
    const auto cells = detail::split_csv(line);
    const auto where = "at row " + std::to_string(row + 1);
    if (cells.size() != header.size()) throw TraceError("wrong column count " + where, static_cast<std::int64_t>(row) - 1);
    tr.times.push_back(detail::parse_real(cells[0], where));
    for (std::size_t c = 1; c < cells.size(); ++c) cols[c - 1]->push_back(detail::parse_real(cells[c], where));
    ++row;
  }
  detail::finish_times(tr, rate);
  return tr;
}

/// One streamed sample: `{"t": <s>, "signals": {"name": <real>, ...}}`.
struct Sample {
  double t = 0.0;
  std::map<std::string, double> values;
};

inline Sample parse_sample(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw TraceError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("t") || !j["t"].is_number() || !j.contains("signals") || !j["signals"].is_object())
    throw TraceError("sample record needs numeric 't' and object 'signals'");
  Sample s;
  s.t = j["t"].get<double>();
  for (const auto& [k, v] : j["signals"].items()) {
    if (!v.is_number()) throw TraceError("signal '" + k + "' is not a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw TraceError("signal '" + k + "' is not finite");
    s.values[k] = x;
  }
  return s;
}

/// JSON-lines trace; every record must carry the same signal set.
inline Trace read_jsonl(std::istream& in, std::optional<double> rate = std::nullopt) {
  Trace tr;
  std::string line;
  std::int64_t k = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    Sample s;
    try {
      s = parse_sample(line);
    } catch (const TraceError& e) {
      throw TraceError(std::string(e.what()) + " at record " + std::to_string(k), k - 1);
    }
    if (k == 0) {
      for (const auto& [name, v] : s.values) tr.signals[name];
    } else if (s.values.size() != tr.signals.size()) {
      throw TraceError("record " + std::to_string(k) + " has a different signal set", k - 1);
    }
    for (const auto& [name, v] : s.values) {
      auto it = tr.signals.find(name);
      if (it == tr.signals.end()) throw TraceError("record " + std::to_string(k) + " has unknown signal '" + name + "'", k - 1);
      it->second.push_back(v);
    }
    tr.times.push_back(s.t);
    ++k;
  }
  detail::finish_times(tr, rate);
  return tr;
}

/// Dispatch on extension: `.csv` else JSON-lines.
inline Trace read_trace(std::istream& in, const std::string& path, std::optional<double> rate = std::nullopt) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) return read_csv(in, rate);
  return read_jsonl(in, rate);
}

inline void write_csv(std::ostream& out, const Trace& tr) {
  out << "t";
  for (const auto& [k, v] : tr.signals) out << "," << k;
  out << "\n";
  for (std::size_t i = 0; i < tr.size(); ++i) {
    out << format_number(tr.time_at(tr.origin + static_cast<std::int64_t>(i)));
    for (const auto& [k, v] : tr.signals) out << "," << format_number(v[i]);
    out << "\n";
  }
}

inline void write_jsonl(std::ostream& out, const Trace& tr) {
  for (std::size_t i = 0; i < tr.size(); ++i) {
    nlohmann::json j;
    j["t"] = tr.time_at(tr.origin + static_cast<std::int64_t>(i));
    nlohmann::json sig = nlohmann::json::object();
    for (const auto& [k, v] : tr.signals) sig[k] = v[i];
    j["signals"] = sig;
    out << j.dump() << "\n";
  }
}

}  // namespace stlmon
