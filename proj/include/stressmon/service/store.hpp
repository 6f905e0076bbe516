#pragma once

// On-disk layout per subject:
//
//   <data_dir>/<subject>/events.jsonl   append-only, one JSON object per line
//   <data_dir>/<subject>/engine.snap    latest query-engine snapshot
//
// Every event carries a strictly increasing "seq". engine.snap wraps the
// engine bytes as: "SMSV" | u32 version | i64 seq | u32 len | bytes | u32 crc32.

#include <fcntl.h>
#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stressmon/error.hpp"
#include "stressmon/util/binary_io.hpp"

namespace stressmon::service {

namespace fs = std::filesystem;

struct LoadedLog {
    std::vector<nlohmann::json> events;
    std::vector<std::string> warnings;
};

namespace detail {

inline void write_all(int fd, const std::string& data, const std::string& path) {
    const char* p = data.data();
    std::size_t left = data.size();
    while (left > 0) {
        const auto n = ::write(fd, p, left);
        if (n < 0) fail(ErrorKind::Io, "write_failed", "write to " + path + " failed");
        p += n;
        left -= static_cast<std::size_t>(n);
    }
}

} // namespace detail

class EventLog {
public:
    EventLog(fs::path path, bool sync) : path_(std::move(path)), sync_(sync) {
        fs::create_directories(path_.parent_path());
        fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
        if (fd_ < 0) fail(ErrorKind::Io, "log_open", "cannot open " + path_.string());
    }
    EventLog(const EventLog&) = delete;
    EventLog& operator=(const EventLog&) = delete;
    ~EventLog() {
        if (fd_ >= 0) ::close(fd_);
    }

    /// Returns once the line is handed to the kernel (and on disk with sync).
    void append(const nlohmann::json& event) {
        detail::write_all(fd_, event.dump() + '\n', path_.string());
        if (sync_ && ::fdatasync(fd_) != 0) fail(ErrorKind::Io, "log_sync", "fdatasync failed on " + path_.string());
    }

    /// Reads every complete, parseable line with increasing seq. The file is
    /// cut back to the last good line if anything follows it.
    static LoadedLog load(const fs::path& path) {
        LoadedLog out;
        if (!fs::exists(path)) return out;
        std::ifstream in(path, std::ios::binary);
        std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::size_t pos = 0, good_end = 0;
        std::int64_t last_seq = -1;
        while (pos < content.size()) {
            const auto nl = content.find('\n', pos);
            if (nl == std::string::npos) {
                out.warnings.push_back("incomplete final record at byte " + std::to_string(pos));
                break;
            }
            nlohmann::json ev;
            try {
                ev = nlohmann::json::parse(content.begin() + static_cast<std::ptrdiff_t>(pos),
                                           content.begin() + static_cast<std::ptrdiff_t>(nl));
            } catch (const nlohmann::json::exception&) {
                out.warnings.push_back("unparseable record at byte " + std::to_string(pos));
                break;
            }
            if (!ev.is_object() || !ev.contains("seq") || !ev["seq"].is_number_integer() ||
                ev["seq"].get<std::int64_t>() <= last_seq) {
                out.warnings.push_back("out-of-sequence record at byte " + std::to_string(pos));
                break;
            }
            last_seq = ev["seq"].get<std::int64_t>();
            out.events.push_back(std::move(ev));
            pos = nl + 1;
            good_end = pos;
        }
        if (good_end < content.size()) {
            out.warnings.push_back("truncated " + path.string() + " from " + std::to_string(content.size()) + " to " +
                                   std::to_string(good_end) + " bytes");
            fs::resize_file(path, good_end);
        }
        return out;
    }

private:
    fs::path path_;
    bool sync_;
    int fd_ = -1;
};

inline constexpr std::uint32_t kSnapFileVersion = 1;

struct EngineSnapshotFile {
    std::int64_t seq = -1; // last event folded into the snapshot
    std::string engine_bytes;
};

/// Write-to-temp then rename, so a crash leaves either the old or the new file.
inline void write_engine_snapshot(const fs::path& path, const EngineSnapshotFile& s, bool sync) {
    util::ByteWriter w;
    w.raw("SMSV");
    w.u32(kSnapFileVersion);
    w.i64(s.seq);
    w.u32(static_cast<std::uint32_t>(s.engine_bytes.size()));
    w.raw(s.engine_bytes);
    w.u32(util::crc32(w.bytes()));
    const auto tmp = fs::path(path.string() + ".tmp");
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) fail(ErrorKind::Io, "snapshot_open", "cannot write " + tmp.string());
    detail::write_all(fd, w.bytes(), tmp.string());
    if (sync) ::fsync(fd);
    ::close(fd);
    fs::rename(tmp, path);
}

inline std::optional<EngineSnapshotFile> read_engine_snapshot(const fs::path& path) {
    if (!fs::exists(path)) return std::nullopt;
    std::ifstream in(path, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 24 || bytes.compare(0, 4, "SMSV") != 0)
        fail(ErrorKind::Corrupt, "snapfile_magic", path.string() + " is not an engine snapshot file");
    util::ByteReader r(std::string_view(bytes).substr(0, bytes.size() - 4));
    r.take(4);
    const auto version = r.u32();
    if (version > kSnapFileVersion)
        fail(ErrorKind::Incompatible, "snapfile_version", "snapshot file version " + std::to_string(version));
    EngineSnapshotFile s;
    s.seq = r.i64();
    const auto len = r.u32();
    s.engine_bytes = std::string(r.take(len));
    if (!r.done()) fail(ErrorKind::Corrupt, "snapfile_length", "trailing bytes in " + path.string());
    util::ByteReader tail(std::string_view(bytes).substr(bytes.size() - 4));
    if (tail.u32() != util::crc32(std::string_view(bytes).substr(0, bytes.size() - 4)))
        fail(ErrorKind::Corrupt, "snapfile_crc", "checksum mismatch in " + path.string());
    return s;
}

} // namespace stressmon::service
