#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "pdabench/data.hpp"
#include "pdabench/errors.hpp"

using namespace pdabench;

namespace {

PartialShiftSpec small_spec() {
    PartialShiftSpec spec;
    spec.d = 6;
    spec.k_source = 5;
    spec.k_target = 3;
    spec.n_per_class_source = 12;
    spec.n_per_class_target = 10;
    return spec;
}

} // namespace

TEST_CASE("gen_partial_blobs determinism and partial-shift structure") {
    auto spec = small_spec();
    auto [s1, t1] = gen_partial_blobs(spec, 2020);
    auto [s2, t2] = gen_partial_blobs(spec, 2020);

    SUBCASE("same spec and seed give bitwise-identical sets") {
        REQUIRE(s1.features.size() == s2.features.size());
        for (int i = 0; i < s1.features.size(); ++i)
            CHECK(s1.features.data[static_cast<std::size_t>(i)] ==
                  s2.features.data[static_cast<std::size_t>(i)]);
        for (int i = 0; i < t1.features.size(); ++i)
            CHECK(t1.features.data[static_cast<std::size_t>(i)] ==
                  t2.features.data[static_cast<std::size_t>(i)]);
        CHECK(s1.labels == s2.labels);
    }

    SUBCASE("target classes are exactly 0..k_target-1, a strict subset") {
        auto tl = t1.distinct_labels();
        REQUIRE(tl.size() == 3);
        for (int c = 0; c < 3; ++c) CHECK(tl[static_cast<std::size_t>(c)] == c);
        auto sl = s1.distinct_labels();
        CHECK(sl.size() == 5);
        std::set<int> src(sl.begin(), sl.end());
        for (int y : tl) CHECK(src.count(y) == 1);
    }

    SUBCASE("counts follow the spec") {
        CHECK(s1.n() == 5 * 12);
        CHECK(t1.n() == 3 * 10);
    }

    SUBCASE("k_target >= k_source is rejected") {
        auto bad = spec;
        bad.k_target = 5;
        CHECK_THROWS_AS(gen_partial_blobs(bad, 1), ConfigError);
    }

    SUBCASE("10/6 default sizing example") {
        PartialShiftSpec ps;
        ps.k_source = 10;
        ps.k_target = 6;
        ps.n_per_class_target = 50;
        auto [src, tgt] = gen_partial_blobs(ps, 7);
        (void)src;
        CHECK(tgt.n() == 300);
    }
}

TEST_CASE("split_source") {
    auto spec = small_spec();
    spec.n_per_class_source = 20; // n = 100
    auto [src, tgt] = gen_partial_blobs(spec, 11);
    (void)tgt;

    auto split = split_source(src, 0.8, 33);
    CHECK(split.train.size() == 80);
    CHECK(split.val.size() == 20);

    SUBCASE("train and val partition the ids") {
        std::set<int> all(split.train.begin(), split.train.end());
        for (int i : split.val) CHECK(all.insert(i).second);
        CHECK(all.size() == static_cast<std::size_t>(src.n()));
    }

    SUBCASE("per-class proportions within one sample of the ratio") {
        std::map<int, int> train_counts;
        for (int i : split.train) ++train_counts[src.labels[static_cast<std::size_t>(i)]];
        for (auto& [label, cnt] : train_counts) {
            (void)label;
            CHECK(std::abs(cnt - 16) <= 1); // 0.8 * 20 per class
        }
    }

    SUBCASE("deterministic per seed") {
        auto again = split_source(src, 0.8, 33);
        CHECK(again.train == split.train);
        CHECK(again.val == split.val);
    }
}

TEST_CASE("uniform batches") {
    auto spec = small_spec();
    auto [src, tgt] = gen_partial_blobs(spec, 5);
    (void)tgt;

    Rng rng(99);
    auto batch = sample_uniform_batch(src, 36, rng);
    CHECK(batch.size() == 36);
    std::set<int> uniq(batch.begin(), batch.end());
    CHECK(uniq.size() == 36); // without replacement

    SUBCASE("B = n is a permutation") {
        Rng r2(1);
        auto all = sample_uniform_batch(src, src.n(), r2);
        std::set<int> s(all.begin(), all.end());
        CHECK(s.size() == static_cast<std::size_t>(src.n()));
    }

    SUBCASE("replaying the rng state replays the batch") {
        Rng r2(99);
        auto again = sample_uniform_batch(src, 36, r2);
        CHECK(again == batch);
    }

    SUBCASE("oversized batch rejected") {
        Rng r3(1);
        CHECK_THROWS_AS(sample_uniform_batch(src, src.n() + 1, r3), ConfigError);
    }
}

TEST_CASE("stratified batches") {
    auto spec = small_spec(); // 5 classes
    auto [src, tgt] = gen_partial_blobs(spec, 5);
    (void)tgt;

    SUBCASE("K=5, B=10 gives exactly 2 per class") {
        Rng rng(3);
        auto batch = sample_stratified_batch(src, 10, rng);
        std::map<int, int> counts;
        for (int i : batch) ++counts[src.labels[static_cast<std::size_t>(i)]];
        REQUIRE(counts.size() == 5);
        for (auto& [c, cnt] : counts) {
            (void)c;
            CHECK(cnt == 2);
        }
    }

    SUBCASE("K=3-of-target classes, B=7 gives counts {3,2,2} in class order") {
        Rng rng(3);
        auto [s2, t2] = gen_partial_blobs(small_spec(), 8);
        (void)s2;
        auto batch = sample_stratified_batch(t2, 7, rng);
        std::map<int, int> counts;
        for (int i : batch) ++counts[t2.labels[static_cast<std::size_t>(i)]];
        CHECK(counts[0] == 3);
        CHECK(counts[1] == 2);
        CHECK(counts[2] == 2);
    }

    SUBCASE("per-class counts always within 1 of each other") {
        for (int b : {5, 7, 11, 23, 36}) {
            Rng rng(static_cast<std::uint64_t>(b));
            auto batch = sample_stratified_batch(src, b, rng);
            std::map<int, int> counts;
            for (int i : batch) ++counts[src.labels[static_cast<std::size_t>(i)]];
            int lo = 1 << 30, hi = 0;
            for (auto& [c, cnt] : counts) {
                (void)c;
                lo = std::min(lo, cnt);
                hi = std::max(hi, cnt);
            }
            CHECK(hi - lo <= 1);
        }
    }

    SUBCASE("B below class count rejected") {
        Rng rng(1);
        CHECK_THROWS_AS(sample_stratified_batch(src, 4, rng), ConfigError);
    }
}

TEST_CASE("labeled subsets") {
    auto spec = small_spec();
    auto [src, tgt] = gen_partial_blobs(spec, 5);
    (void)src;

    SUBCASE("one per class") {
        auto idx = pick_labeled_subset(tgt, SubsetMode::OneShot, 0, 77);
        REQUIRE(idx.size() == 3);
        std::set<int> classes;
        for (int i : idx) classes.insert(tgt.labels[static_cast<std::size_t>(i)]);
        CHECK(classes.size() == 3);
    }

    SUBCASE("rnd_k draws k distinct indices") {
        auto idx = pick_labeled_subset(tgt, SubsetMode::RndK, 20, 77);
        std::set<int> uniq(idx.begin(), idx.end());
        CHECK(uniq.size() == 20);
        auto again = pick_labeled_subset(tgt, SubsetMode::RndK, 20, 77);
        CHECK(again == idx);
    }

    SUBCASE("k beyond n rejected") {
        CHECK_THROWS_AS(pick_labeled_subset(tgt, SubsetMode::RndK, tgt.n() + 1, 1), ConfigError);
    }
}

TEST_CASE("embedding files round-trip") {
    auto spec = small_spec();
    auto [src, tgt] = gen_partial_blobs(spec, 123);
    (void)tgt;

    const std::string path = "test_embeddings.pdae";
    EmbeddingManifest manifest;
    manifest.domain = "source";
    manifest.provenance = "unit test";
    save_embeddings(path, src, manifest);

    SUBCASE("features and labels survive (f32 storage)") {
        auto loaded = load_embeddings(path);
        CHECK(loaded.n() == src.n());
        CHECK(loaded.dim() == src.dim());
        CHECK(loaded.k_universe == src.k_universe);
        CHECK(loaded.labels == src.labels);
        for (int i = 0; i < src.features.size(); ++i) {
            const float f32 = static_cast<float>(src.features.data[static_cast<std::size_t>(i)]);
            CHECK(loaded.features.data[static_cast<std::size_t>(i)] == static_cast<double>(f32));
        }
        // save -> load -> save is bitwise stable
        save_embeddings("test_embeddings2.pdae", loaded, manifest);
        std::ifstream f1(path, std::ios::binary), f2("test_embeddings2.pdae", std::ios::binary);
        std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
        std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
        CHECK(b1 == b2);
        std::remove("test_embeddings2.pdae");
        std::remove("test_embeddings2.pdae.json");
    }

    SUBCASE("truncated file names expected and actual byte counts") {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::ofstream out("test_truncated.pdae", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
        out.close();
        std::ofstream("test_truncated.pdae.json") << "{\"domain\":\"source\"}\n";
        try {
            load_embeddings("test_truncated.pdae");
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("expected") != std::string::npos);
            CHECK(msg.find("got") != std::string::npos);
        }
        std::remove("test_truncated.pdae");
        std::remove("test_truncated.pdae.json");
    }

    SUBCASE("zero-row header rejected") {
        // patch n = 0 into a copy of the header
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        bytes[8] = bytes[9] = bytes[10] = bytes[11] = 0;
        std::ofstream out("test_zero.pdae", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        CHECK_THROWS_AS(load_embeddings("test_zero.pdae"), FormatError);
        std::remove("test_zero.pdae");
    }

    SUBCASE("bad magic rejected") {
        std::ofstream out("test_magic.pdae", std::ios::binary);
        out << "NOPE1234567890";
        out.close();
        CHECK_THROWS_AS(load_embeddings("test_magic.pdae"), FormatError);
        std::remove("test_magic.pdae");
    }

    std::remove(path.c_str());
    std::remove((path + ".json").c_str());
}
