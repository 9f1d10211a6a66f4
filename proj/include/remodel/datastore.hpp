#pragma once

// Ordered, immutable record store.
//
// On-disk layout of <dir>/data.bin:
//   magic "MCDS" | version u32 | n u64 | d u32 | target_kind u8 | class_count u32
//   then n rows of (d + 1) little-endian f64, features first, target last.
// A human-readable <dir>/meta.txt sidecar mirrors the header fields.
//
// Ids are dense row indices, so a row's byte offset is computable and
// count_in_range is an index difference.

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "remodel/common.hpp"

namespace remodel {

struct Record {
    Id id = 0;
    std::vector<double> features;
    double target = 0.0;  // class labels are stored as the integer index
};

struct DatasetMeta {
    std::uint64_t n = 0;
    std::uint32_t d = 1;
    TargetKind target_kind = TargetKind::regression;
    std::uint32_t class_count = 0;  // 0 for regression
    std::string source_path;

    std::uint64_t row_bytes() const noexcept { return (std::uint64_t{d} + 1) * sizeof(double); }
};

inline constexpr char kStoreMagic[4] = {'M', 'C', 'D', 'S'};
inline constexpr std::uint32_t kStoreVersion = 1;
inline constexpr std::uint64_t kStoreHeaderBytes = 4 + 4 + 8 + 4 + 1 + 4;

/// Non-owning view of one row inside a RecordBatch.
struct RecordView {
    Id id;
    std::span<const double> features;
    double target;
};

/// Contiguous block of rows [first, first + size) as returned by a range fetch.
class RecordBatch {
public:
    RecordBatch() = default;
    RecordBatch(Id first, std::uint32_t d, std::vector<double> rows)
        : first_(first), d_(d), rows_(std::move(rows)) {}

    std::size_t size() const noexcept { return d_ == 0 ? 0 : rows_.size() / (d_ + 1); }
    bool empty() const noexcept { return size() == 0; }
    std::uint32_t dim() const noexcept { return d_; }
    Id first_id() const noexcept { return first_; }
    std::span<const double> raw() const noexcept { return rows_; }

    RecordView operator[](std::size_t i) const noexcept {
        const double* row = rows_.data() + i * (d_ + 1);
        return {first_ + i, {row, d_}, row[d_]};
    }

    class iterator {
    public:
        using value_type = RecordView;
        using difference_type = std::ptrdiff_t;
        iterator() = default;
        iterator(const RecordBatch* b, std::size_t i) : b_(b), i_(i) {}
        RecordView operator*() const { return (*b_)[i_]; }
        iterator& operator++() { ++i_; return *this; }
        iterator operator++(int) { auto t = *this; ++i_; return t; }
        bool operator==(const iterator& o) const { return i_ == o.i_; }

    private:
        const RecordBatch* b_ = nullptr;
        std::size_t i_ = 0;
    };

    iterator begin() const { return {this, 0}; }
    iterator end() const { return {this, size()}; }

    /// Copy of rows [offset, offset + count).
    RecordBatch slice(std::size_t offset, std::size_t count) const {
        const auto w = std::size_t{d_} + 1;
        std::vector<double> rows(rows_.begin() + static_cast<std::ptrdiff_t>(offset * w),
                                 rows_.begin() + static_cast<std::ptrdiff_t>((offset + count) * w));
        return {first_ + offset, d_, std::move(rows)};
    }

    std::vector<Record> to_records() const {
        std::vector<Record> out;
        out.reserve(size());
        for (const auto r : *this)
            out.push_back({r.id, {r.features.begin(), r.features.end()}, r.target});
        return out;
    }

private:
    Id first_ = 0;
    std::uint32_t d_ = 0;
    std::vector<double> rows_;
};

namespace detail {

class FileDescriptor {
public:
    FileDescriptor() = default;
    explicit FileDescriptor(int fd) : fd_(fd) {}
    FileDescriptor(const FileDescriptor&) = delete;
    FileDescriptor& operator=(const FileDescriptor&) = delete;
    FileDescriptor(FileDescriptor&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    FileDescriptor& operator=(FileDescriptor&& o) noexcept {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    ~FileDescriptor() { reset(); }

    int get() const noexcept { return fd_; }
    explicit operator bool() const noexcept { return fd_ >= 0; }

    void reset() noexcept {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_ = -1;
};

inline void read_exact(int fd, void* buf, std::size_t len, std::uint64_t offset) {
    auto* p = static_cast<char*>(buf);
    while (len > 0) {
        const auto got = ::pread(fd, p, len, static_cast<off_t>(offset));
        if (got < 0) {
            if (errno == EINTR) continue;
            throw DataError("read failed: " + std::string(std::strerror(errno)));
        }
        if (got == 0) throw DataError("unexpected end of data file");
        p += got;
        len -= static_cast<std::size_t>(got);
        offset += static_cast<std::uint64_t>(got);
    }
}

inline std::string encode_header(const DatasetMeta& m) {
    std::string h(kStoreMagic, 4);
    io::put(h, kStoreVersion);
    io::put(h, m.n);
    io::put(h, m.d);
    io::put(h, static_cast<std::uint8_t>(m.target_kind));
    io::put(h, m.class_count);
    return h;
}

inline void validate_meta(const DatasetMeta& m) {
    if (m.d < 1) throw DataError("feature dimension must be >= 1");
    if (m.target_kind == TargetKind::classification && m.class_count < 2)
        throw DataError("classification data needs at least 2 classes");
}

}  // namespace detail

inline std::filesystem::path data_file(const std::filesystem::path& dir) { return dir / "data.bin"; }
inline std::filesystem::path meta_file(const std::filesystem::path& dir) { return dir / "meta.txt"; }

inline void write_meta_sidecar(const std::filesystem::path& dir, const DatasetMeta& m) {
    std::ofstream out(meta_file(dir), std::ios::trunc);
    out << "n=" << m.n << "\n"
        << "d=" << m.d << "\n"
        << "target_kind=" << to_string(m.target_kind) << "\n"
        << "class_count=" << m.class_count << "\n"
        << "source_path=" << m.source_path << "\n";
    if (!out) throw DataError("cannot write " + meta_file(dir).string());
}

inline DatasetMeta read_meta_sidecar(const std::filesystem::path& dir) {
    std::ifstream in(meta_file(dir));
    if (!in) throw DataError("cannot open " + meta_file(dir).string());
    DatasetMeta m;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const auto key = line.substr(0, eq);
        const auto value = line.substr(eq + 1);
        if (key == "n") m.n = std::stoull(value);
        else if (key == "d") m.d = static_cast<std::uint32_t>(std::stoul(value));
        else if (key == "target_kind") m.target_kind = parse_target_kind(value);
        else if (key == "class_count") m.class_count = static_cast<std::uint32_t>(std::stoul(value));
        else if (key == "source_path") m.source_path = value;
    }
    return m;
}

/// Single-writer row appender. The header's row count is patched on finish().
class DataStoreWriter {
public:
    DataStoreWriter(std::filesystem::path dir, DatasetMeta meta)
        : dir_(std::move(dir)), meta_(std::move(meta)) {
        detail::validate_meta(meta_);
        std::filesystem::create_directories(dir_);
        out_.open(data_file(dir_), std::ios::binary | std::ios::trunc);
        if (!out_) throw DataError("cannot create " + data_file(dir_).string());
        meta_.n = 0;
        const auto header = detail::encode_header(meta_);
        out_.write(header.data(), static_cast<std::streamsize>(header.size()));
        buffer_.reserve(1 << 20);
    }

    void append(std::span<const double> features, double target) {
        if (features.size() != meta_.d)
            throw DataError("row " + std::to_string(meta_.n) + " has " + std::to_string(features.size()) +
                            " features, expected " + std::to_string(meta_.d));
        for (double v : features)
            if (!std::isfinite(v)) throw DataError("non-finite feature at row " + std::to_string(meta_.n));
        if (!std::isfinite(target)) throw DataError("non-finite target at row " + std::to_string(meta_.n));
        if (meta_.target_kind == TargetKind::classification) {
            if (target < 0 || target != std::floor(target) || target >= meta_.class_count)
                throw DataError("class label " + std::to_string(target) + " out of range at row " +
                                std::to_string(meta_.n));
        }
        io::put_doubles(buffer_, features);
        io::put(buffer_, target);
        ++meta_.n;
        if (buffer_.size() >= (1 << 20)) flush();
    }

    DatasetMeta finish() {
        flush();
        out_.seekp(0);
        const auto header = detail::encode_header(meta_);
        out_.write(header.data(), static_cast<std::streamsize>(header.size()));
        out_.close();
        if (!out_) throw DataError("failed writing " + data_file(dir_).string());
        write_meta_sidecar(dir_, meta_);
        return meta_;
    }

private:
    void flush() {
        out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
        buffer_.clear();
    }

    std::filesystem::path dir_;
    DatasetMeta meta_;
    std::ofstream out_;
    std::string buffer_;
};

/// Read-only handle on an ingested dataset. Safe for concurrent readers
/// (positional reads only; no shared cursor).
class DataStore {
public:
    static DataStore open(const std::filesystem::path& dir) {
        DataStore s;
        s.dir_ = dir;
        s.fd_ = std::make_shared<detail::FileDescriptor>(::open(data_file(dir).c_str(), O_RDONLY));
        if (!*s.fd_) throw DataError("cannot open " + data_file(dir).string());

        std::string header(kStoreHeaderBytes, '\0');
        detail::read_exact(s.fd_->get(), header.data(), header.size(), 0);
        if (header.compare(0, 4, kStoreMagic, 4) != 0) throw DataError("bad magic in " + data_file(dir).string());
        io::Reader r(std::string_view(header).substr(4));
        if (r.get<std::uint32_t>() != kStoreVersion) throw DataError("unsupported data file version");
        s.meta_.n = r.get<std::uint64_t>();
        s.meta_.d = r.get<std::uint32_t>();
        s.meta_.target_kind = static_cast<TargetKind>(r.get<std::uint8_t>());
        s.meta_.class_count = r.get<std::uint32_t>();
        if (std::filesystem::exists(meta_file(dir))) s.meta_.source_path = read_meta_sidecar(dir).source_path;
        detail::validate_meta(s.meta_);

        const auto expected = kStoreHeaderBytes + s.meta_.n * s.meta_.row_bytes();
        if (std::filesystem::file_size(data_file(dir)) != expected) throw DataError("data file size mismatch");
        return s;
    }

    const DatasetMeta& meta() const noexcept { return meta_; }
    const std::filesystem::path& dir() const noexcept { return dir_; }
    std::uint64_t file_bytes() const noexcept { return kStoreHeaderBytes + meta_.n * meta_.row_bytes(); }

    std::uint64_t count_in_range(Id lo, Id hi) const {
        if (lo > hi) throw RangeError("inverted range [" + std::to_string(lo) + "," + std::to_string(hi) + "]");
        return hi - lo + 1;
    }
    std::uint64_t count_in_range(const IdRange& r) const { return count_in_range(r.lo, r.hi); }

    RecordBatch fetch_range(Id lo, Id hi) const {
        if (lo > hi || hi >= meta_.n)
            throw RangeError("range [" + std::to_string(lo) + "," + std::to_string(hi) + "] outside [0," +
                             std::to_string(meta_.n) + ")");
        const auto count = hi - lo + 1;
        std::vector<double> rows(count * (meta_.d + 1));
        detail::read_exact(fd_->get(), rows.data(), rows.size() * sizeof(double),
                           kStoreHeaderBytes + lo * meta_.row_bytes());
        if constexpr (std::endian::native == std::endian::big) {
            for (auto& v : rows) {
                auto bytes = std::bit_cast<std::array<unsigned char, sizeof(double)>>(v);
                std::reverse(bytes.begin(), bytes.end());
                v = std::bit_cast<double>(bytes);
            }
        }
        return {lo, meta_.d, std::move(rows)};
    }
    RecordBatch fetch_range(const IdRange& r) const { return fetch_range(r.lo, r.hi); }

private:
    DataStore() = default;

    std::filesystem::path dir_;
    DatasetMeta meta_;
    std::shared_ptr<detail::FileDescriptor> fd_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(trim(line.substr(start, comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

inline double parse_cell(std::string_view cell, std::uint64_t row, std::string_view column) {
    double v = 0;
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || ptr != cell.data() + cell.size())
        throw DataError("non-numeric value '" + std::string(cell) + "' at row " + std::to_string(row) +
                        ", column '" + std::string(column) + "'");
    if (!std::isfinite(v))
        throw DataError("non-finite value at row " + std::to_string(row) + ", column '" + std::string(column) + "'");
    return v;
}

}  // namespace detail

/// Parses a headed CSV into a data store at `dir`. Every non-target column is
/// a feature; rows keep file order and get id = row index.
inline DatasetMeta ingest_csv(const std::filesystem::path& csv_path, std::string_view target_column,
                              TargetKind kind, const std::filesystem::path& dir) {
    std::ifstream in(csv_path);
    if (!in) throw DataError("cannot open " + csv_path.string());

    std::string line;
    if (!std::getline(in, line) || detail::trim(line).empty()) throw DataError("empty file " + csv_path.string());
    const std::string header_line = line;
    const auto header = detail::split_csv(header_line);
    std::size_t target_idx = header.size();
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == target_column) target_idx = i;
    if (target_idx == header.size()) throw DataError("missing target column '" + std::string(target_column) + "'");
    if (header.size() < 2) throw DataError("no feature columns");

    // Parse everything first: class_count is only known after the last row.
    std::vector<double> values;
    std::vector<double> targets;
    const std::size_t d = header.size() - 1;
    std::uint64_t row = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv(line);
        if (cells.size() != header.size())
            throw DataError("row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(header.size()));
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const double v = detail::parse_cell(cells[i], row, header[i]);
            if (i == target_idx) targets.push_back(v);
            else values.push_back(v);
        }
        ++row;
    }

    DatasetMeta meta;
    meta.d = static_cast<std::uint32_t>(d);
    meta.target_kind = kind;
    meta.source_path = csv_path.string();
    if (kind == TargetKind::classification) {
        double max_label = 1;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const double t = targets[i];
            if (t < 0 || t != std::floor(t))
                throw DataError("class label '" + std::to_string(t) + "' at row " + std::to_string(i) +
                                " is not a non-negative integer");
            max_label = std::max(max_label, t);
        }
        meta.class_count = static_cast<std::uint32_t>(max_label) + 1;
    }

    DataStoreWriter writer(dir, meta);
    for (std::size_t r = 0; r < targets.size(); ++r)
        writer.append(std::span<const double>(values).subspan(r * d, d), targets[r]);
    return writer.finish();
}

}  // namespace remodel
