#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stlmon/explain.hpp"

// Append-only violation store. Each line is `<byte length>\t<canonical JSON>\n`;
// the length prefix makes torn writes detectable while keeping the file
// greppable.

namespace stlmon {

inline constexpr int kLogVersion = 1;

class StorageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct LogRecord {
  std::string run;
  std::string scenario;
  ViolationPayload payload;
};

inline nlohmann::json to_json(const LogRecord& r) {
  return {{"v", kLogVersion}, {"id", r.payload.id}, {"run", r.run}, {"scenario", r.scenario}, {"payload", to_json(r.payload)}};
}

inline LogRecord record_from_json(const nlohmann::json& j) {
  if (j.value("v", 0) != kLogVersion) throw std::invalid_argument("unsupported log record version");
  LogRecord r{j.at("run").get<std::string>(), j.at("scenario").get<std::string>(), payload_from_json(j.at("payload"))};
  if (r.payload.id != j.at("id").get<std::int64_t>()) throw std::invalid_argument("record id mismatch");
  return r;
}

/// Any combination; unset fields match everything. Time bounds are inclusive.
struct LogFilter {
  std::optional<std::string> rule;
  std::optional<std::string> scenario;
  std::optional<std::string> run;
  std::optional<double> t_min;
  std::optional<double> t_max;

  void check() const {
    if (t_min && t_max && *t_min > *t_max) throw std::invalid_argument("malformed filter: empty time range");
    if ((t_min && !std::isfinite(*t_min)) || (t_max && !std::isfinite(*t_max))) throw std::invalid_argument("malformed filter: non-finite time");
  }

  bool matches(const LogRecord& r) const {
    if (rule && r.payload.rule != *rule) return false;
    if (scenario && r.scenario != *scenario) return false;
    if (run && r.run != *run) return false;
    if (t_min && r.payload.t < *t_min) return false;
    if (t_max && r.payload.t > *t_max) return false;
    return true;
  }
};

struct LogScan {
  std::vector<LogRecord> records;
  // Torn or corrupt lines that were skipped.
  std::size_t skipped = 0;
  // Byte offset just past the last good record.
  std::uintmax_t good_bytes = 0;
};

inline LogScan scan_log(const std::string& bytes) {
  LogScan out;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) {
      ++out.skipped;  // unterminated tail
      break;
    }
    const std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    const std::size_t tab = line.find('\t');
    try {
      if (tab == std::string::npos || tab == 0) throw std::invalid_argument("no length prefix");
      const std::size_t len = std::stoul(line.substr(0, tab));
      if (line.size() - tab - 1 != len) throw std::invalid_argument("length mismatch");
      out.records.push_back(record_from_json(nlohmann::json::parse(line.substr(tab + 1))));
      out.good_bytes = pos;
    } catch (const std::exception&) {
      ++out.skipped;
    }
  }
  return out;
}

inline LogScan scan_log_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::stringstream ss;
  ss << in.rdbuf();
  return scan_log(ss.str());
}

class ViolationLog {
public:
  /// Opens or creates the store. A torn trailing record left by a crash is
  /// cut off so later appends start on a record boundary.
  explicit ViolationLog(std::filesystem::path path) : path_(std::move(path)) {
    if (std::filesystem::exists(path_)) {
      LogScan scan = scan_log_file(path_);
      recovered_ = scan.skipped;
      if (std::filesystem::file_size(path_) != scan.good_bytes) std::filesystem::resize_file(path_, scan.good_bytes);
      for (const auto& r : scan.records) last_id_ = std::max(last_id_, r.payload.id);
    }
    fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw StorageError("cannot open violation log " + path_.string() + ": " + std::strerror(errno));
  }

  ViolationLog(const ViolationLog&) = delete;
  ViolationLog& operator=(const ViolationLog&) = delete;
  ~ViolationLog() {
    if (fd_ >= 0) ::close(fd_);
  }

  const std::filesystem::path& path() const { return path_; }
  /// Torn records discarded when the store was opened.
  std::size_t recovered() const { return recovered_; }
  std::int64_t last_id() const { return last_id_; }

  /// Assigns the next id, writes the record and fsyncs before returning.
  std::int64_t append(LogRecord record) {
    record.payload.id = last_id_ + 1;
    const std::string body = canonical(to_json(record));
    const std::string line = std::to_string(body.size()) + "\t" + body + "\n";
    std::size_t done = 0;
    while (done < line.size()) {
      const ssize_t n = ::write(fd_, line.data() + done, line.size() - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw StorageError("write to " + path_.string() + " failed: " + std::strerror(errno));
      }
      done += static_cast<std::size_t>(n);
    }
    if (::fsync(fd_) != 0) throw StorageError("fsync of " + path_.string() + " failed: " + std::strerror(errno));
    return ++last_id_;
  }

  std::vector<LogRecord> query(const LogFilter& filter) const { return query_file(path_, filter); }

  static std::vector<LogRecord> query_file(const std::filesystem::path& path, const LogFilter& filter) {
    filter.check();
    std::vector<LogRecord> out;
    for (auto& r : scan_log_file(path).records)
      if (filter.matches(r)) out.push_back(std::move(r));
    return out;
  }

private:
  std::filesystem::path path_;
  int fd_ = -1;
  std::int64_t last_id_ = 0;
  std::size_t recovered_ = 0;
};

/// Writes `dir/manifest.json` plus one evidence CSV per matching violation.
/// Output depends only on the store contents and the filter.
inline std::size_t export_retraining(const std::vector<LogRecord>& records, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& r : records) {
    const auto& p = r.payload;
    const std::string file = "violation_" + std::to_string(p.id) + ".csv";
    Trace tr = evidence_trace(p, 1.0);
    std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
    write_csv(out, tr);
    if (!out) throw StorageError("cannot write " + (dir / file).string());
    const std::int64_t last = p.evidence.first + static_cast<std::int64_t>(p.evidence.t.size()) - 1;
    entries.push_back({{"id", p.id},
                       {"rule", p.rule},
                       {"doc", p.doc},
                       {"culprit", p.culprits.empty() ? nlohmann::json(nullptr) : nlohmann::json(p.culprits.front().atom)},
                       {"index", p.index},
                       {"first", p.evidence.first},
                       {"last", last},
                       {"run", r.run},
                       {"scenario", r.scenario},
                       {"file", file}});
  }
  nlohmann::json manifest = {{"v", kLogVersion}, {"count", records.size()}, {"entries", entries}};
  std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  out << canonical(manifest) << "\n";
  if (!out) throw StorageError("cannot write manifest in " + dir.string());
  return records.size();
}

inline std::size_t export_retraining(const ViolationLog& log, const LogFilter& filter, const std::filesystem::path& dir) {
  return export_retraining(log.query(filter), dir);
}

}  // namespace stlmon
