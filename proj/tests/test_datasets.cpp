#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "fedunlearn/dataset.hpp"

using namespace fedunlearn;
namespace fs = std::filesystem;

namespace {

void put_be32(std::ofstream& f, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

// Writes an IDX image/label pair; `truncate_by` drops trailing image bytes.
void write_idx(const fs::path& images, const fs::path& labels, std::uint32_t n, std::uint32_t rows,
               std::uint32_t cols, const std::vector<unsigned char>& pixels,
               const std::vector<unsigned char>& lab, std::uint32_t image_magic = 0x00000803,
               std::size_t truncate_by = 0) {
    std::ofstream fi(images, std::ios::binary | std::ios::trunc);
    put_be32(fi, image_magic);
    put_be32(fi, n);
    put_be32(fi, rows);
    put_be32(fi, cols);
    fi.write(reinterpret_cast<const char*>(pixels.data()),
             static_cast<std::streamsize>(pixels.size() - truncate_by));
    std::ofstream fl(labels, std::ios::binary | std::ios::trunc);
    put_be32(fl, 0x00000801);
    put_be32(fl, static_cast<std::uint32_t>(lab.size()));
    fl.write(reinterpret_cast<const char*>(lab.data()), static_cast<std::streamsize>(lab.size()));
}

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("fedunlearn_test_" + name);
    fs::create_directories(p);
    return p;
}

// Upper 0.1% quantile of chi-square via the Wilson-Hilferty approximation.
double chi2_critical(double df) {
    const double z = 3.0902;
    const double a = 2.0 / (9.0 * df);
    const double c = 1.0 - a + z * std::sqrt(a);
    return df * c * c * c;
}

}  // namespace

TEST_CASE("IDX fixtures load with scaled pixels and labels") {
    const auto dir = temp_dir("idx_ok");
    std::vector<unsigned char> px(3 * 2 * 2);
    std::iota(px.begin(), px.end(), static_cast<unsigned char>(0));
    px[11] = 255;
    write_idx(dir / "img", dir / "lab", 3, 2, 2, px, {7, 0, 9});
    const auto ds = load_idx(dir / "img", dir / "lab");
    CHECK(ds.size() == 3);
    CHECK(ds.dim() == 4);
    CHECK(ds.num_classes() == 10);
    CHECK(ds.label(0) == 7);
    CHECK(ds.label(2) == 9);
    CHECK(ds.row(1)[0] == doctest::Approx(4.0 / 255.0));
    CHECK(ds.row(2)[3] == 1.0);
}

TEST_CASE("IDX errors: bad magic, truncation, count mismatch, missing file") {
    const auto dir = temp_dir("idx_bad");
    std::vector<unsigned char> px(2 * 4, 1);
    write_idx(dir / "img", dir / "lab", 2, 2, 2, px, {1, 2}, 0x00000802);
    CHECK_THROWS_AS(load_idx(dir / "img", dir / "lab"), DatasetError);
    write_idx(dir / "img", dir / "lab", 2, 2, 2, px, {1, 2}, 0x00000803, 3);
    CHECK_THROWS_AS(load_idx(dir / "img", dir / "lab"), DatasetError);
    write_idx(dir / "img", dir / "lab", 2, 2, 2, px, {1, 2, 3});
    CHECK_THROWS_AS(load_idx(dir / "img", dir / "lab"), DatasetError);
    CHECK_THROWS_AS(load_idx(dir / "missing", dir / "lab"), DatasetError);
}

TEST_CASE("synthetic data is seeded and split by class") {
    const auto a = make_synthetic_task(10, 8, 30, 5, 1.0, 9);
    const auto b = make_synthetic_task(10, 8, 30, 5, 1.0, 9);
    const auto c = make_synthetic_task(10, 8, 30, 5, 1.0, 10);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    CHECK_FALSE(a.train == c.train);
    CHECK(a.train.size() == 300);
    CHECK(a.test.size() == 50);
    std::vector<int> per(10, 0);
    for (int l : a.train.labels()) ++per[static_cast<std::size_t>(l)];
    for (int cnt : per) CHECK(cnt == 30);
    CHECK_THROWS_AS(generate_synthetic(1, 4, 10, 1.0, 0), DatasetError);
}

TEST_CASE("partition assigns every row exactly once") {
    const auto data = generate_synthetic(10, 4, 50, 1.0, 3);
    const auto shards = partition_noniid(data, 20, 0.5, 4);
    CHECK(shards.num_clients() == 20);
    std::vector<int> seen(data.size(), 0);
    std::size_t total = 0;
    for (std::size_t i = 0; i < 20; ++i) {
        CHECK(shards.shards[i].size() == shards.source_rows[i].size());
        for (std::size_t k = 0; k < shards.source_rows[i].size(); ++k) {
            const auto r = shards.source_rows[i][k];
            ++seen[r];
            CHECK(shards.shards[i].label(k) == data.label(r));
        }
        total += shards.shards[i].size();
    }
    CHECK(total == data.size());
    for (int s : seen) CHECK(s == 1);
    const std::vector<std::size_t> active{0, 1, 2};
    const auto w = shards.weights(active);
    CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(1.0));
}

TEST_CASE("label-to-group frequencies follow the skew degree (chi-square)") {
    const std::size_t C = 10;
    const std::size_t n = 20;
    const auto data = generate_synthetic(C, 2, 2000, 1.0, 5);
    for (double q : {0.1, 0.5, 0.8}) {
        const auto shards = partition_noniid(data, n, q, 6);
        // client i belongs to group i / (n / C)
        std::vector<std::vector<double>> obs(C, std::vector<double>(C, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t g = i / (n / C);
            for (int l : shards.shards[i].labels()) obs[static_cast<std::size_t>(l)][g] += 1.0;
        }
        double chi2 = 0.0;
        for (std::size_t l = 0; l < C; ++l) {
            const double rows = std::accumulate(obs[l].begin(), obs[l].end(), 0.0);
            for (std::size_t g = 0; g < C; ++g) {
                const double p = g == l ? q : (1.0 - q) / static_cast<double>(C - 1);
                const double e = rows * p;
                chi2 += (obs[l][g] - e) * (obs[l][g] - e) / e;
            }
        }
        CHECK_MESSAGE(chi2 < chi2_critical(static_cast<double>(C * (C - 1))), "q=" << q << " chi2=" << chi2);
    }
}

TEST_CASE("partition rejects a degree outside [1/C, 1]") {
    const auto data = generate_synthetic(10, 2, 5, 1.0, 5);
    CHECK_THROWS_AS(partition_noniid(data, 4, 0.05, 1), DatasetError);
    CHECK_THROWS_AS(partition_noniid(data, 4, 1.1, 1), DatasetError);
    CHECK_THROWS_AS(partition_noniid(data, 0, 0.5, 1), DatasetError);
}

TEST_CASE("trigger injection relabels a seeded fraction") {
    const auto data = generate_synthetic(4, 6, 25, 1.0, 8);
    TriggerSpec spec = default_trigger(6);
    spec.poison_fraction = 0.3;
    const auto poisoned = inject_trigger(data, spec, 2);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        bool stamped = true;
        for (auto c : spec.coordinates) stamped = stamped && poisoned.row(i)[c] == spec.value;
        if (stamped && poisoned.label(i) == spec.target_label) {
            ++changed;
        } else {
            CHECK(poisoned.label(i) == data.label(i));
        }
    }
    CHECK(changed == 30);
    CHECK(inject_trigger(data, spec, 2) == poisoned);

    const auto asr = make_asr_set(data, spec);
    for (std::size_t i = 0; i < asr.size(); ++i) {
        CHECK(asr.label(i) == spec.target_label);
        for (auto c : spec.coordinates) CHECK(asr.row(i)[c] == spec.value);
    }
    CHECK(asr.size() == 75);

    spec.target_label = 9;
    CHECK_THROWS_AS(inject_trigger(data, spec, 2), DatasetError);
}
