#pragma once

// Registry of materialized models.
//
// Layout under <dir>:
//   index.txt          one line per live model:
//                      model_id kind l u payload_file checksum(hex fnv1a-64)
//   payloads/<id>.bin  one serialized payload per model
//
// Enhanced descriptors (maximal unions of transitively overlapping model
// ranges) are kept per kind, updated incrementally on materialize and
// recomputed in batch when the catalog is opened.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include "remodel/common.hpp"
#include "remodel/payload.hpp"

namespace remodel {

struct ModelDescriptor {
    IdRange range;
    ModelKind kind = ModelKind::linreg;
    std::string model_id;

    friend bool operator==(const ModelDescriptor&, const ModelDescriptor&) = default;
};

/// Deterministic order used everywhere descriptors are listed.
inline bool descriptor_less(const ModelDescriptor& a, const ModelDescriptor& b) {
    if (a.range != b.range) return a.range < b.range;
    return a.model_id < b.model_id;
}

struct EnhancedDescriptor {
    IdRange range;
    std::vector<ModelDescriptor> members;  // sorted by descriptor_less

    friend bool operator==(const EnhancedDescriptor&, const EnhancedDescriptor&) = default;
};

/// Sort by lower bound, then sweep, growing the current union while the next
/// range overlaps it (closed ranges: a shared endpoint overlaps; adjacency
/// does not).
inline std::vector<EnhancedDescriptor> preprocess_descriptors(std::vector<ModelDescriptor> descriptors) {
    std::vector<EnhancedDescriptor> out;
    if (descriptors.empty()) return out;
    std::sort(descriptors.begin(), descriptors.end(), descriptor_less);
    EnhancedDescriptor current{descriptors.front().range, {descriptors.front()}};
    for (std::size_t i = 1; i < descriptors.size(); ++i) {
        const auto& r = descriptors[i];
        if (r.range.lo <= current.range.hi) {
            current.range.hi = std::max(current.range.hi, r.range.hi);
            current.members.push_back(r);
        } else {
            out.push_back(std::move(current));
            current = {r.range, {r}};
        }
    }
    out.push_back(std::move(current));
    return out;
}

class Catalog {
public:
    /// Opens (or creates) the catalog at `dir` for a dataset of `n_records` rows.
    static Catalog open(const std::filesystem::path& dir, std::uint64_t n_records) {
        Catalog c;
        c.dir_ = dir;
        c.n_records_ = n_records;
        std::filesystem::create_directories(dir / "payloads");
        std::ifstream in(c.index_path());
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream ls(line);
            Entry e;
            std::string kind, checksum;
            ls >> e.desc.model_id >> kind >> e.desc.range.lo >> e.desc.range.hi >> e.payload_file >> checksum;
            if (!ls) throw CatalogError("malformed index line: " + line);
            e.desc.kind = parse_model_kind(kind);
            e.checksum = std::stoull(checksum, nullptr, 16);
            c.next_seq_ = std::max(c.next_seq_, parse_seq(e.desc.model_id) + 1);
            c.models_[e.desc.model_id] = std::move(e);
        }
        c.rebuild_enhanced();
        return c;
    }

    Catalog(Catalog&& o) noexcept { *this = std::move(o); }
    Catalog& operator=(Catalog&& o) noexcept {
        if (this != &o) {
            std::scoped_lock lock(mutex_, o.mutex_);
            dir_ = std::move(o.dir_);
            n_records_ = o.n_records_;
            models_ = std::move(o.models_);
            enhanced_ = std::move(o.enhanced_);
            next_seq_ = o.next_seq_;
        }
        return *this;
    }

    const std::filesystem::path& dir() const noexcept { return dir_; }
    std::uint64_t n_records() const noexcept { return n_records_; }

    /// Persists a model. An existing model of the same kind and range is
    /// replaced and its id retired.
    std::string materialize(IdRange range, const Payload& payload) {
        if (range.lo > range.hi || range.hi >= n_records_)
            throw RangeError("descriptor " + to_string(range) + " outside dataset of " + std::to_string(n_records_) +
                             " records");
        const auto kind = payload_kind(payload);
        const auto bytes = encode_payload(payload, range);

        std::unique_lock lock(mutex_);
        Entry e;
        e.desc = {range, kind, make_id(kind, next_seq_++)};
        e.payload_file = e.desc.model_id + ".bin";
        e.checksum = fnv1a(bytes);
        write_file(dir_ / "payloads" / e.payload_file, bytes);

        std::optional<std::string> retired;
        for (const auto& [id, other] : models_)
            if (other.desc.kind == kind && other.desc.range == range) retired = id;

        if (retired) {
            std::filesystem::remove(dir_ / "payloads" / models_.at(*retired).payload_file);
            models_.erase(*retired);
            models_[e.desc.model_id] = e;
            rewrite_index();
            for (auto& ed : enhanced_[kind])
                for (auto& m : ed.members)
                    if (m.model_id == *retired) m = e.desc;
            for (auto& ed : enhanced_[kind]) std::sort(ed.members.begin(), ed.members.end(), descriptor_less);
        } else {
            models_[e.desc.model_id] = e;
            append_index(e);
            insert_enhanced(e.desc);
        }
        return e.desc.model_id;
    }

    Payload load_model(const std::string& model_id) const {
        Entry e;
        {
            std::shared_lock lock(mutex_);
            const auto it = models_.find(model_id);
            if (it == models_.end()) throw CatalogError("unknown model id '" + model_id + "'");
            e = it->second;
        }
        const auto bytes = read_file(dir_ / "payloads" / e.payload_file);
        if (fnv1a(bytes) != e.checksum) throw CatalogError("checksum mismatch for model '" + model_id + "'");
        return decode_payload(e.desc.kind, bytes);
    }

    std::optional<ModelDescriptor> find(const std::string& model_id) const {
        std::shared_lock lock(mutex_);
        const auto it = models_.find(model_id);
        if (it == models_.end()) return std::nullopt;
        return it->second.desc;
    }

    std::optional<ModelDescriptor> find(ModelKind kind, IdRange range) const {
        std::shared_lock lock(mutex_);
        for (const auto& [id, e] : models_)
            if (e.desc.kind == kind && e.desc.range == range) return e.desc;
        return std::nullopt;
    }

    /// Every model in an enhanced descriptor intersecting the query. For
    /// logistic chunks, only models fully inside the query.
    std::vector<ModelDescriptor> relevant_models(IdRange query, ModelKind kind) const {
        std::shared_lock lock(mutex_);
        std::vector<ModelDescriptor> out;
        const auto it = enhanced_.find(kind);
        if (it == enhanced_.end()) return out;
        for (const auto& ed : it->second) {
            if (!ed.range.overlaps(query)) continue;
            for (const auto& m : ed.members)
                if (kind != ModelKind::logreg_chunk || query.contains(m.range)) out.push_back(m);
        }
        std::sort(out.begin(), out.end(), descriptor_less);
        return out;
    }

    std::vector<EnhancedDescriptor> enhanced(ModelKind kind) const {
        std::shared_lock lock(mutex_);
        const auto it = enhanced_.find(kind);
        return it == enhanced_.end() ? std::vector<EnhancedDescriptor>{} : it->second;
    }

    std::vector<ModelDescriptor> list(std::optional<ModelKind> kind = std::nullopt) const {
        std::shared_lock lock(mutex_);
        std::vector<ModelDescriptor> out;
        for (const auto& [id, e] : models_)
            if (!kind || e.desc.kind == *kind) out.push_back(e.desc);
        std::sort(out.begin(), out.end(), descriptor_less);
        return out;
    }

    std::size_t size() const {
        std::shared_lock lock(mutex_);
        return models_.size();
    }

    /// Percentage of dataset ids covered by at least one model of `kind`.
    double coverage(ModelKind kind) const {
        if (n_records_ == 0) return 0.0;
        std::uint64_t covered = 0;
        for (const auto& ed : enhanced(kind)) covered += ed.range.size();
        return 100.0 * static_cast<double>(covered) / static_cast<double>(n_records_);
    }

    std::uint64_t payload_bytes(const std::string& model_id) const {
        std::shared_lock lock(mutex_);
        const auto it = models_.find(model_id);
        if (it == models_.end()) throw CatalogError("unknown model id '" + model_id + "'");
        return std::filesystem::file_size(dir_ / "payloads" / it->second.payload_file);
    }

    /// Bytes on disk for the index plus every payload (optionally of one kind).
    std::uint64_t storage_bytes(std::optional<ModelKind> kind = std::nullopt) const {
        std::shared_lock lock(mutex_);
        std::uint64_t total = 0;
        for (const auto& [id, e] : models_)
            if (!kind || e.desc.kind == *kind) total += std::filesystem::file_size(dir_ / "payloads" / e.payload_file);
        if (std::filesystem::exists(index_path())) total += std::filesystem::file_size(index_path());
        return total;
    }

private:
    struct Entry {
        ModelDescriptor desc;
        std::string payload_file;
        std::uint64_t checksum = 0;
    };

    Catalog() = default;

    std::filesystem::path index_path() const { return dir_ / "index.txt"; }

    static std::string make_id(ModelKind kind, std::uint64_t seq) {
        std::ostringstream os;
        os << to_string(kind) << '-' << std::setw(6) << std::setfill('0') << seq;
        return os.str();
    }

    static std::uint64_t parse_seq(const std::string& id) {
        const auto dash = id.rfind('-');
        return dash == std::string::npos ? 0 : std::stoull(id.substr(dash + 1));
    }

    static std::string index_line(const Entry& e) {
        std::ostringstream os;
        os << e.desc.model_id << ' ' << to_string(e.desc.kind) << ' ' << e.desc.range.lo << ' ' << e.desc.range.hi
           << ' ' << e.payload_file << ' ' << std::hex << std::setw(16) << std::setfill('0') << e.checksum << '\n';
        return os.str();
    }

    static void write_file(const std::filesystem::path& path, std::string_view bytes) {
        auto tmp = path;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
            if (!out) throw CatalogError("cannot write " + tmp.string());
        }
        std::filesystem::rename(tmp, path);
    }

    static std::string read_file(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw CatalogError("missing payload " + path.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    void append_index(const Entry& e) {
        std::ofstream out(index_path(), std::ios::app);
        out << index_line(e);
        if (!out) throw CatalogError("cannot append to " + index_path().string());
    }

    void rewrite_index() {
        std::vector<const Entry*> entries;
        for (const auto& [id, e] : models_) entries.push_back(&e);
        std::string text;
        for (const auto* e : entries) text += index_line(*e);
        write_file(index_path(), text);
    }

    void rebuild_enhanced() {
        std::map<ModelKind, std::vector<ModelDescriptor>> by_kind;
        for (const auto& [id, e] : models_) by_kind[e.desc.kind].push_back(e.desc);
        enhanced_.clear();
        for (auto& [kind, descs] : by_kind) enhanced_[kind] = preprocess_descriptors(std::move(descs));
    }

    // Merges the new range with every enhanced descriptor it overlaps.
    void insert_enhanced(const ModelDescriptor& d) {
        auto& list = enhanced_[d.kind];
        EnhancedDescriptor merged{d.range, {d}};
        std::vector<EnhancedDescriptor> kept;
        kept.reserve(list.size() + 1);
        for (auto& ed : list) {
            if (ed.range.overlaps(merged.range)) {
                merged.range = {std::min(merged.range.lo, ed.range.lo), std::max(merged.range.hi, ed.range.hi)};
                merged.members.insert(merged.members.end(), ed.members.begin(), ed.members.end());
            } else {
                kept.push_back(std::move(ed));
            }
        }
        std::sort(merged.members.begin(), merged.members.end(), descriptor_less);
        const auto pos = std::lower_bound(kept.begin(), kept.end(), merged,
                                          [](const auto& a, const auto& b) { return a.range.lo < b.range.lo; });
        kept.insert(pos, std::move(merged));
        list = std::move(kept);
    }

    mutable std::shared_mutex mutex_;
    std::filesystem::path dir_;
    std::uint64_t n_records_ = 0;
    std::map<std::string, Entry> models_;
    std::map<ModelKind, std::vector<EnhancedDescriptor>> enhanced_;
    std::uint64_t next_seq_ = 1;
};

}  // namespace remodel
