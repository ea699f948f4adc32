#include "scott/augmentation.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

using namespace scott;

namespace {

TimeSeries random_series(std::size_t n, Rng& rng, double mean = 0.0) {
    TimeSeries s;
    for (std::size_t i = 0; i < n; ++i) s.values.push_back(rng.normal(mean, 1.0));
    return s;
}

std::vector<double> sorted(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v;
}

} // namespace

TEST(Jitter, ZeroSigmaIsIdentity) {
    Rng rng(1);
    auto s = random_series(50, rng);
    EXPECT_EQ(jitter(s, NoiseSpec::absolute(0.0), rng).values, s.values);
    EXPECT_EQ(jitter(s, NoiseSpec{0.0, true}, rng).values, s.values);
}

TEST(Jitter, NoiseStdMatchesSigma) {
    Rng rng(2);
    TimeSeries s(std::vector<double>(10000, 3.0));
    auto out = jitter(s, NoiseSpec::absolute(0.1), rng);
    ASSERT_EQ(out.size(), s.size());
    double m = 0, v = 0;
    for (std::size_t i = 0; i < s.size(); ++i) m += out[i] - s[i];
    m /= double(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) v += (out[i] - s[i] - m) * (out[i] - s[i] - m);
    const double sd = std::sqrt(v / double(s.size() - 1));
    EXPECT_GE(sd, 0.095);
    EXPECT_LE(sd, 0.105);
}

TEST(Jitter, RelativeSigmaScalesWithSeries) {
    Rng a(3), b(3);
    TimeSeries s({0.0, 10.0, 0.0, 10.0}); // population std 5
    auto x = jitter(s, NoiseSpec{0.1, true}, a);
    auto y = jitter(s, NoiseSpec::absolute(0.5), b);
    EXPECT_EQ(x.values, y.values);
}

TEST(Scale, ZeroInputStaysZero) {
    Rng rng(4);
    TimeSeries s(std::vector<double>(20, 0.0));
    EXPECT_EQ(scale(s, {}, rng).values, s.values);
}

TEST(Scale, ShrinksEveryNonzeroPoint) {
    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        auto s = random_series(64, rng, 1.0);
        for (bool smoothed : {false, true}) {
            auto out = scale(s, ScaleSpec{smoothed}, rng);
            for (std::size_t i = 0; i < s.size(); ++i) {
                EXPECT_LT(std::abs(out[i]), std::abs(s[i]));
                EXPECT_GT(out[i] * s[i], 0.0); // sign kept: s_i > 0
            }
        }
    }
}

TEST(Scale, DeterministicForSeed) {
    Rng g(6);
    auto s = random_series(30, g);
    Rng a(8), b(8);
    EXPECT_EQ(scale(s, {}, a).values, scale(s, {}, b).values);
}

TEST(Permute, SingleSegmentIsIdentity) {
    Rng rng(7);
    auto s = random_series(17, rng);
    SegmentationSpec spec;
    spec.segments = 1;
    EXPECT_EQ(permute(s, spec, rng).values, s.values);
}

TEST(Permute, PreservesMultiset) {
    Rng rng(8);
    for (std::size_t n : {4u, 9u, 31u, 150u}) {
        auto s = random_series(n, rng);
        for (std::size_t h = 1; h <= std::min<std::size_t>(n, 6); ++h) {
            SegmentationSpec spec;
            spec.segments = h;
            auto out = permute(s, spec, rng);
            ASSERT_EQ(out.size(), n);
            EXPECT_EQ(sorted(out.values), sorted(s.values));
        }
    }
}

TEST(Permute, TwoSegmentsOfFour) {
    const std::vector<double> a{1, 2, 3, 4}, b{3, 4, 1, 2};
    std::set<std::vector<double>> seen;
    SegmentationSpec spec;
    spec.segments = 2;
    for (std::uint64_t seed = 0; seed < 64; ++seed) {
        Rng rng(seed);
        auto out = permute(TimeSeries(a), spec, rng).values;
        EXPECT_TRUE(out == a || out == b);
        seen.insert(out);
    }
    EXPECT_EQ(seen.size(), 2u);
}

TEST(Permute, RemainderGoesToLeadingSegments) {
    auto b = segment_bounds(10, 4);
    EXPECT_EQ(b, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 3}, {3, 6}, {6, 8}, {8, 10}}));
}

TEST(Permute, TooManySegmentsRejected) {
    Rng rng(1);
    SegmentationSpec spec;
    spec.segments = 5;
    EXPECT_THROW(permute(TimeSeries(std::vector<double>{1, 2, 3}), spec, rng), ConfigError);
}

TEST(Permute, InverseRestoresInput) {
    Rng rng(9);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 5 + rng.index(60);
        auto s = random_series(n, rng);
        SegmentationSpec spec;
        spec.segments = 1 + rng.index(std::min<std::size_t>(n, 8));
        auto p = permute_traced(s, spec, rng);
        EXPECT_EQ(inverse_permute(p, n).values, s.values);
    }
}

TEST(Warp, UnitDistortionIsIdentity) {
    Rng rng(10);
    auto s = random_series(150, rng);
    SegmentationSpec spec;
    spec.min_distortion = spec.max_distortion = 1.0;
    auto out = warp(s, spec, rng);
    ASSERT_EQ(out.size(), s.size());
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(out[i], s[i], 1e-9);
}

TEST(Warp, LengthPreserved) {
    Rng rng(11);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n = 4 + rng.index(200);
        auto s = random_series(n, rng);
        EXPECT_EQ(warp(s, SegmentationSpec{}, rng).size(), n);
    }
}

TEST(Warp, ConstantStaysConstant) {
    Rng rng(12);
    TimeSeries s(std::vector<double>(37, 2.5));
    for (int rep = 0; rep < 20; ++rep)
        for (double v : warp(s, SegmentationSpec{}, rng).values) EXPECT_NEAR(v, 2.5, 1e-12);
}

TEST(Warp, ChangesSeries) {
    Rng rng(13);
    auto s = random_series(100, rng);
    EXPECT_NE(warp(s, SegmentationSpec{}, rng).values, s.values);
}

TEST(Augment, AllOperatorsPreserveLengthAndFiniteness) {
    Rng rng(14);
    AugmentParams p;
    for (auto m : {AugmentMethod::none, AugmentMethod::jitter, AugmentMethod::scale, AugmentMethod::permute,
                   AugmentMethod::warp}) {
        for (int rep = 0; rep < 20; ++rep) {
            auto s = random_series(8 + rng.index(100), rng);
            auto out = augment(s, m, p, rng);
            EXPECT_EQ(out.size(), s.size());
            for (double v : out.values) EXPECT_TRUE(std::isfinite(v));
        }
    }
}

TEST(Augment, DeterministicForSeed) {
    Rng g(15);
    auto s = random_series(60, g);
    for (auto m : {AugmentMethod::jitter, AugmentMethod::scale, AugmentMethod::permute, AugmentMethod::warp}) {
        Rng a(99), b(99);
        EXPECT_EQ(augment(s, m, {}, a).values, augment(s, m, {}, b).values);
    }
}

TEST(Augment, DefaultMethodPerType) {
    EXPECT_EQ(default_method_for_type("IMAGE"), AugmentMethod::warp);
    EXPECT_EQ(default_method_for_type("traffic"), AugmentMethod::permute);
    EXPECT_EQ(default_method_for_type("sensor"), AugmentMethod::permute);
    EXPECT_EQ(default_method_for_type("ecg"), AugmentMethod::jitter);
    EXPECT_EQ(default_method_for_type("simulate"), AugmentMethod::jitter);
    EXPECT_EQ(default_method_for_type("audio"), AugmentMethod::jitter);
    EXPECT_EQ(default_method_for_type("spectro"), AugmentMethod::permute);
    EXPECT_EQ(default_method_for_type("device"), AugmentMethod::permute);
    EXPECT_EQ(default_method_for_type("motion"), AugmentMethod::warp);
    EXPECT_THROW(default_method_for_type("weather"), ConfigError);
}

TEST(CpdSlice, TailBitIdentical) {
    Rng rng(16);
    AugmentParams p;
    for (int rep = 0; rep < 1000; ++rep) {
        auto s = random_series(150, rng, 1.0);
        const auto kind = rep % 2 ? AugmentMethod::jitter : AugmentMethod::permute;
        auto out = augment_cpd_slice(s, 50, kind, p, rng);
        ASSERT_EQ(out.size(), 150u);
        double worst = 0.0;
        for (std::size_t i = 100; i < 150; ++i) worst = std::max(worst, std::abs(out[i] - s[i]));
        EXPECT_EQ(worst, 0.0);
    }
}

TEST(CpdSlice, ZeroNoiseJitterIsIdentity) {
    Rng rng(17);
    auto s = random_series(150, rng);
    AugmentParams p;
    p.noise.sigma = 0.0;
    EXPECT_EQ(augment_cpd_slice(s, 50, AugmentMethod::jitter, p, rng).values, s.values);
}

TEST(CpdSlice, PermutePreservesPrefixMultiset) {
    Rng rng(18);
    auto s = random_series(150, rng);
    auto out = augment_cpd_slice(s, 50, AugmentMethod::permute, {}, rng);
    EXPECT_EQ(sorted({out.values.begin(), out.values.begin() + 100}), sorted({s.values.begin(), s.values.begin() + 100}));
}

TEST(CpdSlice, InvalidTailRejected) {
    Rng rng(19);
    auto s = random_series(10, rng);
    EXPECT_THROW(augment_cpd_slice(s, 10, AugmentMethod::jitter, {}, rng), ConfigError);
    EXPECT_THROW(augment_cpd_slice(s, 0, AugmentMethod::jitter, {}, rng), ConfigError);
    EXPECT_THROW(augment_cpd_slice(s, 3, AugmentMethod::warp, {}, rng), ConfigError);
}

namespace {

LabeledDataset skewed(std::size_t majority, std::size_t minority, Rng& rng) {
    LabeledDataset ds;
    ds.class_count = 2;
    for (std::size_t i = 0; i < majority + minority; ++i) {
        ds.series.push_back(random_series(24, rng));
        ds.labels.push_back(i < majority ? 0 : 1);
    }
    return ds;
}

} // namespace

TEST(Oversample, BalancedUnchanged) {
    Rng rng(20);
    auto ds = skewed(10, 10, rng);
    auto out = oversample(ds, rng);
    EXPECT_EQ(out.labels, ds.labels);
    for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(out.series[i].values, ds.series[i].values);
}

TEST(Oversample, NinetyTen) {
    Rng rng(21);
    auto ds = skewed(90, 10, rng);
    auto out = oversample(ds, rng);
    EXPECT_EQ(out.class_counts(), (std::vector<std::size_t>{90, 90}));
    // originals untouched and first
    for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(out.series[i].values, ds.series[i].values);
    std::set<std::vector<double>> seen;
    for (const auto& s : out.series) EXPECT_TRUE(seen.insert(s.values).second) << "duplicate instance";
}

TEST(Oversample, TailPreservingVariant) {
    Rng rng(22);
    LabeledDataset ds;
    ds.class_count = 2;
    for (std::size_t i = 0; i < 12; ++i) {
        ds.series.push_back(random_series(30, rng));
        ds.labels.push_back(i < 9 ? 0 : 1);
    }
    OversampleOptions opt;
    opt.tail = 10;
    auto out = oversample(ds, rng, opt);
    EXPECT_EQ(out.class_counts(), (std::vector<std::size_t>{9, 9}));
    for (std::size_t i = ds.size(); i < out.size(); ++i) {
        // every synthetic slice keeps the tail of some minority source
        bool matched = false;
        for (std::size_t j = 9; j < 12; ++j)
            matched = matched || std::equal(out.series[i].values.end() - 10, out.series[i].values.end(),
                                            ds.series[j].values.end() - 10);
        EXPECT_TRUE(matched);
    }
}

TEST(Oversample, FlatSeriesStillNoDuplicates) {
    Rng rng(23);
    LabeledDataset ds;
    ds.class_count = 2;
    for (int i = 0; i < 6; ++i) {
        ds.series.emplace_back(std::vector<double>(8, i < 5 ? double(i) : 7.0));
        ds.labels.push_back(i < 5 ? 0 : 1);
    }
    auto out = oversample(ds, rng);
    EXPECT_EQ(out.class_counts(), (std::vector<std::size_t>{5, 5}));
    std::set<std::vector<double>> seen;
    for (const auto& s : out.series) EXPECT_TRUE(seen.insert(s.values).second);
}
