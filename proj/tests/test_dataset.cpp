#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "mdiag/dataset.hpp"
#include "mdiag/error.hpp"

using namespace mdiag;
using namespace mdiag::dataset;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "mdiag_test_dataset" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

signal::SynthConfig small_synth() {
    signal::SynthConfig c;
    c.sample_rate_hz = 500.0;
    c.duration_s = 1.2;
    return c;
}

Dataset small_dataset(std::size_t per_class, std::uint64_t seed = 10) {
    return build_synthetic_dataset(per_class, small_synth(), {}, {}, {16, 16}, seed);
}

std::string read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("synthetic dataset layout") {
    const auto ds = small_dataset(2);
    REQUIRE(ds.examples.size() == 10);
    CHECK(ds.manifest.counts == std::vector<std::size_t>{2, 2, 2, 2, 2});
    CHECK(ds.manifest.class_names == signal::class_names());
    std::set<std::string> sources;
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
        const auto& ex = ds.examples[i];
        CHECK(ex.label.class_index() == static_cast<int>(i / 2));
        CHECK(ds.manifest.examples[i].id == i);
        CHECK(ex.image.height == 16);
        CHECK(ex.image.width == 16);
        for (float v : ex.image.values) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
        sources.insert(ex.source_id);
    }
    CHECK(sources.size() == 10);
    CHECK(ds.examples[3].source_id == "synth:seed=13");
    CHECK_THROWS_AS(small_dataset(0), DomainError);
}

TEST_CASE("synthetic dataset is deterministic") {
    const auto a = small_dataset(2, 77);
    const auto b = small_dataset(2, 77);
    const auto c = small_dataset(2, 78);
    for (std::size_t i = 0; i < a.examples.size(); ++i) CHECK(a.examples[i].image == b.examples[i].image);
    CHECK_FALSE(a.examples[0].image == c.examples[0].image);
}

TEST_CASE("invalid synth config propagates") {
    auto bad = small_synth();
    bad.sample_rate_hz = 100.0;
    CHECK_THROWS_AS(build_synthetic_dataset(1, bad, {}, {}, {}, 0), ConfigError);
}

TEST_CASE("stratified split") {
    auto ds = small_dataset(2);
    const auto m = split(ds.manifest, 0.8, 3);
    CHECK(m.train_ids.size() == 10 - m.test_ids.size());

    DatasetManifest big = ds.manifest;
    big.examples.clear();
    big.counts.assign(5, 0);
    for (std::size_t i = 0; i < 50; ++i) {
        big.examples.push_back({i, static_cast<int>(i % 5), "", ""});
        ++big.counts[i % 5];
    }
    const auto s = split(big, 0.8, 9);
    CHECK(s.train_ids.size() == 40);
    CHECK(s.test_ids.size() == 10);
    std::vector<int> per_class(5, 0);
    for (auto id : s.test_ids) ++per_class[id % 5];
    CHECK(per_class == std::vector<int>{2, 2, 2, 2, 2});
    std::set<std::size_t> all(s.train_ids.begin(), s.train_ids.end());
    all.insert(s.test_ids.begin(), s.test_ids.end());
    CHECK(all.size() == 50);

    CHECK(split(big, 0.8, 9) == s);
    CHECK_FALSE(split(big, 0.8, 10).train_ids == s.train_ids);
    CHECK_THROWS_AS(split(big, 1.0, 1), DomainError);
    CHECK_THROWS_AS(split(big, 0.0, 1), DomainError);
}

TEST_CASE("split at corpus scale reproduces the 47500/10000 partition") {
    DatasetManifest m;
    m.counts.assign(5, 11500);
    for (std::size_t i = 0; i < 57500; ++i) m.examples.push_back({i, static_cast<int>(i / 11500), "", ""});
    const auto s = split(m, 47500.0 / 57500.0, 1);
    CHECK(s.train_ids.size() == 47500);
    CHECK(s.test_ids.size() == 10000);
    std::vector<int> per_class(5, 0);
    for (auto id : s.test_ids) ++per_class[id / 11500];
    CHECK(per_class == std::vector<int>{2000, 2000, 2000, 2000, 2000});
}

TEST_CASE("split needs two examples per class") {
    auto ds = small_dataset(1);
    CHECK_THROWS_AS(split(ds.manifest, 0.5, 1), DomainError);
}

TEST_CASE("tensor files") {
    const auto dir = fresh_dir("tensor");
    spectral::ImageTensor img{1, 2, 3, {0.0f, 0.1f, 0.2f, 0.3f, 0.4f, 1.0f}};
    write_tensor(img, dir / "a.mdt");
    CHECK(read_tensor(dir / "a.mdt") == img);
    const auto bytes = read_bytes(dir / "a.mdt");
    CHECK(bytes.size() == 4 + 4 * 4 + 6 * 4);
    CHECK(bytes.substr(0, 4) == "MDT1");

    std::ofstream(dir / "b.mdt", std::ios::binary) << bytes.substr(0, bytes.size() - 2);
    CHECK_THROWS_AS(read_tensor(dir / "b.mdt"), FormatError);
    std::ofstream(dir / "c.mdt", std::ios::binary) << "XXXX" << bytes.substr(4);
    CHECK_THROWS_AS(read_tensor(dir / "c.mdt"), FormatError);
}

TEST_CASE("save and load round trip") {
    auto ds = small_dataset(2);
    ds.manifest = split(ds.manifest, 0.5, 4);
    const auto dir = fresh_dir("roundtrip");
    save_dataset(ds, dir);
    const auto back = load_dataset(dir);
    CHECK(back.manifest == ds.manifest);
    REQUIRE(back.examples.size() == ds.examples.size());
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
        CHECK(back.examples[i].image == ds.examples[i].image);
        CHECK(back.examples[i].label == ds.examples[i].label);
        CHECK(back.examples[i].source_id == ds.examples[i].source_id);
    }

    const auto dir2 = fresh_dir("roundtrip2");
    save_dataset(small_dataset(2), dir2);
    auto again = small_dataset(2);
    again.manifest = split(again.manifest, 0.5, 4);
    save_dataset(again, dir2);
    for (const auto& e : ds.manifest.examples) CHECK(read_bytes(dir / e.file) == read_bytes(dir2 / e.file));
    CHECK(read_bytes(dir / kManifestFile) == read_bytes(dir2 / kManifestFile));
}

TEST_CASE("load detects integrity problems") {
    CHECK_THROWS_AS(load_dataset(fresh_dir("empty")), IntegrityError);

    auto ds = small_dataset(2);
    ds.manifest = split(ds.manifest, 0.5, 4);

    const auto extra = fresh_dir("extra");
    save_dataset(ds, extra);
    write_tensor(ds.examples[0].image, extra / "ex_999999.mdt");
    CHECK_THROWS_AS(load_dataset(extra), IntegrityError);

    const auto missing = fresh_dir("missing");
    save_dataset(ds, missing);
    std::filesystem::remove(missing / ds.manifest.examples[4].file);
    CHECK_THROWS_AS(load_dataset(missing), IntegrityError);

    const auto counts = fresh_dir("counts");
    auto bad = ds;
    bad.manifest.counts[0] = 3;
    save_dataset(bad, counts);
    CHECK_THROWS_AS(load_dataset(counts), IntegrityError);

    const auto dims = fresh_dir("dims");
    save_dataset(ds, dims);
    write_tensor({1, 8, 8, std::vector<float>(64, 0.5f)}, dims / ds.manifest.examples[1].file);
    try {
        load_dataset(dims);
        FAIL("expected IntegrityError");
    } catch (const IntegrityError& e) {
        CHECK(std::string(e.what()).find(ds.manifest.examples[1].file) != std::string::npos);
    }

    const auto range = fresh_dir("range");
    save_dataset(ds, range);
    auto img = ds.examples[2].image;
    img.values[0] = 1.5f;
    write_tensor(img, range / ds.manifest.examples[2].file);
    CHECK_THROWS_AS(load_dataset(range), IntegrityError);

    const auto json_bad = fresh_dir("json");
    save_dataset(ds, json_bad);
    std::ofstream(json_bad / kManifestFile) << "{ not json";
    CHECK_THROWS_AS(load_dataset(json_bad), IntegrityError);
}
