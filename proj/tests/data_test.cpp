#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "fedsim/data.hpp"
#include "fedsim/nn.hpp"

using namespace fedsim;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

// Minimal independent IDX writer, byte by byte; kept separate from save_idx
// so the loader is checked against a second implementation of the format.
void write_raw_idx(const std::string& images_path, const std::string& labels_path,
                   std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                   const std::vector<unsigned char>& pixels,
                   const std::vector<unsigned char>& labels,
                   std::uint32_t images_magic = 0x00000803) {
    auto put32 = [](std::ofstream& f, std::uint32_t v) {
        for (int s = 24; s >= 0; s -= 8) f.put(static_cast<char>((v >> s) & 0xff));
    };
    std::ofstream img(images_path, std::ios::binary);
    put32(img, images_magic);
    put32(img, n);
    put32(img, rows);
    put32(img, cols);
    img.write(reinterpret_cast<const char*>(pixels.data()), pixels.size());
    std::ofstream lbl(labels_path, std::ios::binary);
    put32(lbl, 0x00000801);
    put32(lbl, static_cast<std::uint32_t>(labels.size()));
    lbl.write(reinterpret_cast<const char*>(labels.data()), labels.size());
}

}  // namespace

TEST(LoadIdx, ParsesHandWrittenFile) {
    auto ip = temp_path("fedsim_idx_img").string();
    auto lp = temp_path("fedsim_idx_lbl").string();
    std::vector<unsigned char> pixels = {0, 255, 128, 64, 10, 20, 30, 40};
    write_raw_idx(ip, lp, 2, 2, 2, pixels, {3, 7});
    Dataset ds = load_idx(ip, lp);
    ASSERT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.height, 2u);
    EXPECT_EQ(ds.width, 2u);
    EXPECT_EQ(ds.labels[0], 3);
    EXPECT_EQ(ds.labels[1], 7);
    EXPECT_DOUBLE_EQ(ds.images[0][1], 1.0);
    EXPECT_DOUBLE_EQ(ds.images[0][2], 128.0 / 255.0);
    EXPECT_EQ(ds.num_classes, 8u);
}

TEST(LoadIdx, BadMagicNamesImagesFile) {
    auto ip = temp_path("fedsim_idx_badmagic_img").string();
    auto lp = temp_path("fedsim_idx_badmagic_lbl").string();
    write_raw_idx(ip, lp, 1, 1, 1, {42}, {0}, 0x00000801);  // labels magic in images file
    try {
        load_idx(ip, lp);
        FAIL() << "expected bad magic error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
    }
}

TEST(LoadIdx, CountMismatchThrows) {
    auto ip = temp_path("fedsim_idx_mismatch_img").string();
    auto lp = temp_path("fedsim_idx_mismatch_lbl").string();
    write_raw_idx(ip, lp, 2, 1, 1, {1, 2}, {0});  // 2 images, 1 label
    try {
        load_idx(ip, lp);
        FAIL() << "expected count mismatch error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("count mismatch"), std::string::npos);
    }
}

TEST(LoadIdx, TruncatedPayloadThrows) {
    auto ip = temp_path("fedsim_idx_trunc_img").string();
    auto lp = temp_path("fedsim_idx_trunc_lbl").string();
    write_raw_idx(ip, lp, 2, 2, 2, {1, 2, 3, 4, 5}, {0, 1});  // 5 of 8 pixel bytes
    EXPECT_THROW(load_idx(ip, lp), std::runtime_error);
}

TEST(LoadIdx, EmptyPairIsLegal) {
    auto ip = temp_path("fedsim_idx_empty_img").string();
    auto lp = temp_path("fedsim_idx_empty_lbl").string();
    write_raw_idx(ip, lp, 0, 4, 4, {}, {});
    Dataset ds = load_idx(ip, lp);
    EXPECT_TRUE(ds.empty());
}

TEST(SaveIdx, RoundTripsThroughBytes) {
    auto ip = temp_path("fedsim_idx_rt_img").string();
    auto lp = temp_path("fedsim_idx_rt_lbl").string();
    std::vector<unsigned char> pixels(2 * 3 * 3);
    std::iota(pixels.begin(), pixels.end(), 50);
    write_raw_idx(ip, lp, 2, 3, 3, pixels, {1, 4});
    Dataset ds = load_idx(ip, lp);

    auto ip2 = temp_path("fedsim_idx_rt_img2").string();
    auto lp2 = temp_path("fedsim_idx_rt_lbl2").string();
    save_idx(ds, ip2, lp2);
    Dataset back = load_idx(ip2, lp2);
    EXPECT_EQ(ds.images, back.images);
    EXPECT_EQ(ds.labels, back.labels);
    EXPECT_EQ(ds.height, back.height);
    EXPECT_EQ(ds.width, back.width);
}

TEST(SynthDigits, DeterministicPerSeed) {
    Dataset a = synth_digits(50, 8, 4, 9);
    Dataset b = synth_digits(50, 8, 4, 9);
    EXPECT_EQ(a.images, b.images);
    EXPECT_EQ(a.labels, b.labels);
    Dataset c = synth_digits(50, 8, 4, 10);
    EXPECT_NE(a.images, c.images);
}

TEST(SynthDigits, EmptyAndBounds) {
    EXPECT_TRUE(synth_digits(0, 8, 3, 1).empty());
    EXPECT_THROW(synth_digits(10, 7, 3, 1), std::invalid_argument);
    EXPECT_THROW(synth_digits(10, 8, 11, 1), std::invalid_argument);
    Dataset ds = synth_digits(20, 8, 3, 1);
    for (const auto& img : ds.images)
        for (double v : img) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
}

TEST(SynthDigits, TrainableRegression) {
    // 200-sample draw reaches >= 0.9 train accuracy within 200 SGD steps.
    Dataset ds = synth_digits(200, 8, 5, 4);
    ModelSpec spec{{64, 16, 5}};
    ParamVector theta = init_params(spec, 4);
    Batch all = to_batch(ds);
    for (int step = 0; step < 200; ++step) {
        LossResult res = loss_and_grad(theta, spec, all, {});
        theta = sgd_step(theta, res.grad, 0.5);
    }
    EXPECT_GE(evaluate_accuracy(theta, spec, all.inputs, all.labels), 0.9);
}

TEST(DirichletPartition, SingleClientGetsEverything) {
    Dataset ds = synth_digits(60, 8, 3, 2);
    auto shards = dirichlet_partition(ds, {1, 0.5, 3});
    ASSERT_EQ(shards.size(), 1u);
    EXPECT_EQ(shards[0].images, ds.images);
    EXPECT_EQ(shards[0].labels, ds.labels);
}

TEST(DirichletPartition, ExactPartitionProperty) {
    Dataset ds = synth_digits(300, 8, 4, 5);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto shards = dirichlet_partition_indices(ds, {5, 0.3, seed});
        std::set<std::size_t> seen;
        std::size_t total = 0;
        for (const auto& shard : shards) {
            total += shard.size();
            for (std::size_t idx : shard) EXPECT_TRUE(seen.insert(idx).second);
        }
        EXPECT_EQ(total, ds.size());
        EXPECT_EQ(seen.size(), ds.size());
    }
}

TEST(DirichletPartition, Deterministic) {
    Dataset ds = synth_digits(200, 8, 4, 6);
    auto a = dirichlet_partition_indices(ds, {7, 0.9, 123});
    auto b = dirichlet_partition_indices(ds, {7, 0.9, 123});
    EXPECT_EQ(a, b);
}

TEST(DirichletPartition, LargeAlphaApproachesUniform) {
    // Balanced 2-class dataset, alpha so large every client sees the global mix.
    Dataset ds;
    ds.height = ds.width = 8;
    ds.num_classes = 2;
    for (int i = 0; i < 4000; ++i) ds.push_back(std::vector<double>(64, 0.5), i % 2);
    auto shards = dirichlet_partition(ds, {4, 1e6, 11});
    for (const auto& shard : shards) {
        ASSERT_GT(shard.size(), 0u);
        const double frac1 =
            static_cast<double>(std::count(shard.labels.begin(), shard.labels.end(), 1)) /
            static_cast<double>(shard.size());
        EXPECT_NEAR(frac1, 0.5, 0.05);
    }
}

TEST(DirichletPartition, EmptyDatasetThrows) {
    Dataset empty;
    empty.num_classes = 2;
    EXPECT_THROW(dirichlet_partition(empty, {2, 0.5, 0}), std::invalid_argument);
}
