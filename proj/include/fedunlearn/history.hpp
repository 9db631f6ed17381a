#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "fedunlearn/param_vector.hpp"

namespace fedunlearn {

class HistoryError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

/// Global model w~^t and the update each participant sent in round t.
/// The record for the final round T carries the model only.
struct RoundRecord {
    std::size_t round = 0;
    ParamVector global_model;
    std::vector<ParamVector> client_updates;
};

/// Server-side archive of the training phase.
///
/// Records must be appended for contiguous rounds starting at 0. Once sealed the
/// store is read-only. The file backing is a sequence of records, each a header
/// of three little-endian uint64 (round, n, d) followed by (1 + n) * d
/// little-endian float64 values: the global model, then the n client updates.
class HistoryStore {
 public:
    /// `client_ids[k]` is the client whose update sits in slot k of every record.
    explicit HistoryStore(std::vector<std::size_t> client_ids);
    HistoryStore(std::vector<std::size_t> client_ids, std::filesystem::path backing_file);

    HistoryStore(HistoryStore&&) noexcept;
    HistoryStore& operator=(HistoryStore&&) noexcept;
    ~HistoryStore();

    void append(RoundRecord record);
    void seal() { sealed_ = true; }
    bool sealed() const { return sealed_; }

    bool file_backed() const { return !path_.empty(); }
    const std::filesystem::path& backing_file() const { return path_; }

    /// Number of records (T + 1 after a complete T-round run).
    std::size_t size() const { return count_; }
    std::size_t dim() const { return dim_; }
    const std::vector<std::size_t>& client_ids() const { return client_ids_; }
    bool has_client(std::size_t id) const;

    RoundRecord record(std::size_t round) const;
    ParamVector global_model(std::size_t round) const;
    const ParamVector& cached_global_model(std::size_t round) const;
    ParamVector client_update(std::size_t round, std::size_t client_id) const;

    /// Bytes of parameter payload held (models + updates).
    std::uintmax_t payload_bytes() const;

    /// Reads a history file written by a file-backed store.
    static std::vector<RoundRecord> read_file(const std::filesystem::path& path);

 private:
    std::size_t slot_of(std::size_t client_id) const;
    RoundRecord load(std::size_t round) const;

    std::vector<std::size_t> client_ids_;
    std::size_t dim_ = 0;
    std::size_t count_ = 0;
    bool sealed_ = false;

    std::vector<RoundRecord> memory_;
    // global models are also kept in memory for file-backed stores (O(dT))
    std::vector<ParamVector> models_;

    std::filesystem::path path_;
    std::vector<std::uint64_t> offsets_;
    std::unique_ptr<std::ofstream> writer_;
    mutable std::unique_ptr<std::ifstream> reader_;
    mutable std::unique_ptr<std::mutex> reader_mutex_;
};

}  // namespace fedunlearn
