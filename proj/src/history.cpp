#include "fedunlearn/history.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <string>

namespace fedunlearn {

namespace {

constexpr std::size_t kHeaderBytes = 3 * sizeof(std::uint64_t);

void put_u64(std::ostream& out, std::uint64_t v) {
    std::array<char, 8> buf{};
    for (std::size_t i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffU);
    out.write(buf.data(), buf.size());
}

std::uint64_t get_u64(std::istream& in) {
    std::array<unsigned char, 8> buf{};
    in.read(reinterpret_cast<char*>(buf.data()), buf.size());
    if (!in) throw HistoryError("history file truncated");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

void put_vector(std::ostream& out, const ParamVector& v) {
    std::vector<char> buf(v.dim() * 8);
    for (std::size_t k = 0; k < v.dim(); ++k) {
        const auto bits = std::bit_cast<std::uint64_t>(v[k]);
        for (std::size_t i = 0; i < 8; ++i) {
            buf[8 * k + i] = static_cast<char>((bits >> (8 * i)) & 0xffU);
        }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

ParamVector get_vector(std::istream& in, std::size_t d) {
    std::vector<unsigned char> buf(d * 8);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw HistoryError("history file truncated");
    std::vector<double> out(d);
    for (std::size_t k = 0; k < d; ++k) {
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < 8; ++i) {
            bits |= static_cast<std::uint64_t>(buf[8 * k + i]) << (8 * i);
        }
        out[k] = std::bit_cast<double>(bits);
    }
    return ParamVector(std::move(out));
}

RoundRecord read_record(std::istream& in) {
    RoundRecord rec;
    rec.round = get_u64(in);
    const auto n = get_u64(in);
    const auto d = get_u64(in);
    rec.global_model = get_vector(in, d);
    rec.client_updates.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) rec.client_updates.push_back(get_vector(in, d));
    return rec;
}

}  // namespace

HistoryStore::HistoryStore(std::vector<std::size_t> client_ids)
    : client_ids_(std::move(client_ids)) {
    auto sorted = client_ids_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw HistoryError("duplicate client id in history");
    }
}

HistoryStore::HistoryStore(std::vector<std::size_t> client_ids, std::filesystem::path backing_file)
    : HistoryStore(std::move(client_ids)) {
    path_ = std::move(backing_file);
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    writer_ = std::make_unique<std::ofstream>(path_, std::ios::binary | std::ios::trunc);
    if (!*writer_) throw HistoryError("cannot open history file " + path_.string());
    reader_mutex_ = std::make_unique<std::mutex>();
}

HistoryStore::HistoryStore(HistoryStore&&) noexcept = default;
HistoryStore& HistoryStore::operator=(HistoryStore&&) noexcept = default;
HistoryStore::~HistoryStore() = default;

void HistoryStore::append(RoundRecord record) {
    if (sealed_) throw HistoryError("history is sealed");
    if (record.round != count_) {
        throw HistoryError("non-contiguous round " + std::to_string(record.round) + ", expected " +
                           std::to_string(count_));
    }
    if (count_ == 0) dim_ = record.global_model.dim();
    if (record.global_model.dim() != dim_) throw HistoryError("model dimension changed");
    if (!record.client_updates.empty() && record.client_updates.size() != client_ids_.size()) {
        throw HistoryError("record has " + std::to_string(record.client_updates.size()) +
                           " updates for " + std::to_string(client_ids_.size()) + " clients");
    }
    for (const auto& g : record.client_updates) {
        if (g.dim() != dim_) throw HistoryError("update dimension mismatch");
    }
    if (file_backed()) {
        offsets_.push_back(static_cast<std::uint64_t>(writer_->tellp()));
        put_u64(*writer_, record.round);
        put_u64(*writer_, record.client_updates.size());
        put_u64(*writer_, dim_);
        put_vector(*writer_, record.global_model);
        for (const auto& g : record.client_updates) put_vector(*writer_, g);
        writer_->flush();
        if (!*writer_) throw HistoryError("write failed on " + path_.string());
        models_.push_back(std::move(record.global_model));
    } else {
        models_.push_back(record.global_model);
        memory_.push_back(std::move(record));
    }
    ++count_;
}

bool HistoryStore::has_client(std::size_t id) const {
    return std::find(client_ids_.begin(), client_ids_.end(), id) != client_ids_.end();
}

std::size_t HistoryStore::slot_of(std::size_t client_id) const {
    const auto it = std::find(client_ids_.begin(), client_ids_.end(), client_id);
    if (it == client_ids_.end()) {
        throw HistoryError("client " + std::to_string(client_id) + " not in history");
    }
    return static_cast<std::size_t>(it - client_ids_.begin());
}

RoundRecord HistoryStore::load(std::size_t round) const {
    if (round >= count_) throw HistoryError("round " + std::to_string(round) + " not recorded");
    if (!file_backed()) return memory_[round];
    std::lock_guard lock(*reader_mutex_);
    if (!reader_) {
        reader_ = std::make_unique<std::ifstream>(path_, std::ios::binary);
        if (!*reader_) throw HistoryError("cannot read history file " + path_.string());
    }
    reader_->clear();
    reader_->seekg(static_cast<std::streamoff>(offsets_[round]));
    return read_record(*reader_);
}

RoundRecord HistoryStore::record(std::size_t round) const { return load(round); }

ParamVector HistoryStore::global_model(std::size_t round) const {
    return cached_global_model(round);
}

const ParamVector& HistoryStore::cached_global_model(std::size_t round) const {
    if (round >= count_) throw HistoryError("round " + std::to_string(round) + " not recorded");
    return models_[round];
}

ParamVector HistoryStore::client_update(std::size_t round, std::size_t client_id) const {
    const std::size_t slot = slot_of(client_id);
    if (round >= count_) throw HistoryError("round " + std::to_string(round) + " not recorded");
    if (!file_backed()) {
        const auto& rec = memory_[round];
        if (rec.client_updates.empty()) {
            throw HistoryError("round " + std::to_string(round) + " has no client updates");
        }
        return rec.client_updates[slot];
    }
    std::lock_guard lock(*reader_mutex_);
    if (!reader_) {
        reader_ = std::make_unique<std::ifstream>(path_, std::ios::binary);
        if (!*reader_) throw HistoryError("cannot read history file " + path_.string());
    }
    reader_->clear();
    reader_->seekg(static_cast<std::streamoff>(offsets_[round] + 8));
    const auto n = get_u64(*reader_);
    if (n == 0) throw HistoryError("round " + std::to_string(round) + " has no client updates");
    const auto skip = kHeaderBytes + (1 + slot) * dim_ * 8;
    reader_->seekg(static_cast<std::streamoff>(offsets_[round] + skip));
    return get_vector(*reader_, dim_);
}

std::uintmax_t HistoryStore::payload_bytes() const {
    std::uintmax_t total = 0;
    for (std::size_t t = 0; t < count_; ++t) total += dim_ * 8;
    if (file_backed()) {
        total = 0;
        if (writer_) total = static_cast<std::uintmax_t>(writer_->tellp()) - kHeaderBytes * count_;
        return total;
    }
    for (const auto& rec : memory_) total += rec.client_updates.size() * dim_ * 8;
    return total;
}

std::vector<RoundRecord> HistoryStore::read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw HistoryError("cannot open " + path.string());
    std::vector<RoundRecord> out;
    while (in.peek() != std::char_traits<char>::eof()) out.push_back(read_record(in));
    return out;
}

}  // namespace fedunlearn
