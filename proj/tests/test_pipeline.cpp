#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <set>

#include "botkit/pipeline.hpp"

using botkit::ClassProfile;
using botkit::Diagnosis;
using botkit::Image;
using botkit::Manifest;
using botkit::ManifestRow;
using botkit::ScanSlices;
using botkit::SliceSample;
using botkit::SplitPlan;
using botkit::SplitRatios;
using botkit::StreamRole;
using botkit::TaskKind;
using botkit::Volume;
using Catch::Matchers::ContainsSubstring;

namespace {

// Independent index oracle: floor(D/2) - floor(k/2) .. floor(D/2) + ceil(k/2) - 1.
std::vector<long> slice_index_oracle(long d, long k) {
    long lo = static_cast<long>(std::floor(d / 2.0) - std::floor(k / 2.0));
    long hi = static_cast<long>(std::floor(d / 2.0) + std::ceil(k / 2.0)) - 1;
    std::vector<long> out;
    for (long i = lo; i <= hi; ++i) out.push_back(i);
    return out;
}

// Volume whose voxel value encodes its own coronal index, so extraction order
// and position can be read straight off the slices.
Volume coronal_marked_volume(std::size_t s, std::size_t c, std::size_t a) {
    Volume v;
    v.subject_id = "sub";
    v.scan_id = "scan";
    v.extents = {s, c, a};
    v.voxels.assign(s * c * a, 0.0f);
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < c; ++j)
            for (std::size_t k = 0; k < a; ++k) v.at(i, j, k) = static_cast<float>(j);
    return v;
}

Image random_image(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Image img(rows, cols);
    for (auto& p : img.pix) p = u(rng);
    return img;
}

// Best single-threshold accuracy over means, swept over all candidate cuts.
double threshold_accuracy(const std::vector<double>& class0, const std::vector<double>& class1) {
    std::vector<double> cuts = class0;
    cuts.insert(cuts.end(), class1.begin(), class1.end());
    double best = 0.0;
    for (double cut : cuts) {
        std::size_t correct = 0;
        for (double m : class0) correct += (m < cut) ? 1 : 0;
        for (double m : class1) correct += (m >= cut) ? 1 : 0;
        std::size_t flipped = class0.size() + class1.size() - correct;
        best = std::max(best, static_cast<double>(std::max(correct, flipped)) /
                                  static_cast<double>(class0.size() + class1.size()));
    }
    return best;
}

Manifest two_class_manifest(std::size_t n_cn, std::size_t n_ad, int scans_per_subject = 1) {
    Manifest m;
    for (std::size_t i = 0; i < n_cn + n_ad; ++i) {
        Diagnosis d = i < n_cn ? Diagnosis::cn : Diagnosis::ad;
        for (int s = 0; s < scans_per_subject; ++s)
            m.rows.push_back(ManifestRow{"sub" + std::to_string(i), "scan" + std::to_string(s), d,
                                         "vol" + std::to_string(i) + "_" + std::to_string(s) + ".vol"});
    }
    return m;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("central slices of a 180-deep volume are coronal indices 85..94") {
    Volume v = coronal_marked_volume(12, 180, 14);
    auto slices = botkit::extract_central_slices(v, 10);
    auto expected = slice_index_oracle(180, 10);
    REQUIRE(expected.front() == 85);
    REQUIRE(expected.back() == 94);
    REQUIRE(slices.size() == 10);
    for (std::size_t i = 0; i < slices.size(); ++i) {
        REQUIRE(slices[i].rows == 14);  // axial rows
        REQUIRE(slices[i].cols == 12);  // sagittal columns
        for (float p : slices[i].pix) REQUIRE(p == static_cast<float>(expected[i]));
    }
}

TEST_CASE("slice extraction takes the whole coronal range when it fits exactly") {
    Volume v10 = coronal_marked_volume(10, 10, 10);
    auto s10 = botkit::extract_central_slices(v10, 10);
    for (std::size_t i = 0; i < 10; ++i) REQUIRE(s10[i].at(0, 0) == static_cast<float>(i));

    Volume v11 = coronal_marked_volume(10, 11, 10);
    auto s11 = botkit::extract_central_slices(v11, 10);
    for (std::size_t i = 0; i < 10; ++i) REQUIRE(s11[i].at(0, 0) == static_cast<float>(i));
}

TEST_CASE("slice extraction matches the index oracle across random extents") {
    std::mt19937_64 rng(botkit::fnv1a("extents"));
    for (int trial = 0; trial < 25; ++trial) {
        std::size_t d = 10 + rng() % 120;
        Volume v = coronal_marked_volume(11, d, 13);
        auto slices = botkit::extract_central_slices(v, 10);
        auto expected = slice_index_oracle(static_cast<long>(d), 10);
        for (std::size_t i = 0; i < 10; ++i) REQUIRE(slices[i].at(3, 5) == static_cast<float>(expected[i]));
    }
}

TEST_CASE("too-shallow volumes are rejected with the extent in the message") {
    Volume v = coronal_marked_volume(12, 9, 12);
    REQUIRE_THROWS_WITH(botkit::extract_central_slices(v, 10), ContainsSubstring("9"));
}

TEST_CASE("slice pixels preserve the axial-row sagittal-column layout") {
    Volume v;
    v.extents = {12, 16, 14};
    v.voxels.assign(12 * 16 * 14, 0.0f);
    for (std::size_t s = 0; s < 12; ++s)
        for (std::size_t a = 0; a < 14; ++a) v.at(s, 8, a) = static_cast<float>(1000 * s + a);
    auto slices = botkit::extract_central_slices(v, 10);
    // coronal index 8 lands at position 8 - (16/2 - 5) = 5 in the returned list
    const Image& img = slices[5];
    for (std::size_t a = 0; a < 14; ++a)
        for (std::size_t s = 0; s < 12; ++s) REQUIRE(img.at(a, s) == static_cast<float>(1000 * s + a));
}

TEST_CASE("center crop of a 256 image keeps rows and cols 16..239") {
    Image in(256, 256);
    for (std::size_t r = 0; r < 256; ++r)
        for (std::size_t c = 0; c < 256; ++c) in.at(r, c) = static_cast<float>(r * 256 + c);
    Image out = botkit::crop_and_normalize(in, 224);
    REQUIRE(out.rows == 224);
    REQUIRE(out.cols == 224);
    float lo = in.at(16, 16);
    float hi = in.at(239, 239);
    REQUIRE(out.at(0, 0) == 0.0f);
    REQUIRE(out.at(223, 223) == 1.0f);
    for (std::size_t r = 0; r < 224; r += 37)
        for (std::size_t c = 0; c < 224; c += 37)
            REQUIRE(out.at(r, c) == Catch::Approx((in.at(16 + r, 16 + c) - lo) / (hi - lo)).margin(1e-6));
}

TEST_CASE("min-max normalization maps the value range onto 0, 0.5, 1") {
    Image in(2, 2);
    in.pix = {2.0f, 4.0f, 6.0f, 6.0f};
    Image out = botkit::crop_and_normalize(in, 2);
    REQUIRE(out.pix == std::vector<float>{0.0f, 0.5f, 1.0f, 1.0f});
}

TEST_CASE("constant slices normalize to all zeros") {
    Image in(8, 8);
    for (auto& p : in.pix) p = 3.5f;
    Image out = botkit::crop_and_normalize(in, 8);
    for (float p : out.pix) REQUIRE(p == 0.0f);
}

TEST_CASE("undersized slices are centered on a zero canvas") {
    Image in(8, 8);
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 8; ++c) in.at(r, c) = 1.0f + static_cast<float>(r * 8 + c);
    Image out = botkit::crop_and_normalize(in, 12);
    for (std::size_t r = 0; r < 12; ++r)
        for (std::size_t c = 0; c < 12; ++c) {
            bool inside = r >= 2 && r < 10 && c >= 2 && c < 10;
            if (inside)
                REQUIRE(out.at(r, c) == Catch::Approx(static_cast<double>(in.at(r - 2, c - 2) - 1.0f) / 63.0).margin(1e-6));
            else
                REQUIRE(out.at(r, c) == 0.0f);
        }
}

TEST_CASE("mixed crop and pad handles each dimension independently") {
    Image in(16, 8);
    for (std::size_t i = 0; i < in.pix.size(); ++i) in.pix[i] = static_cast<float>(i);
    Image out = botkit::crop_and_normalize(in, 12);
    // rows cropped to 2..13, cols padded into 2..9, so every row has zero side bands
    for (std::size_t r = 0; r < 12; ++r) {
        REQUIRE(out.at(r, 0) == 0.0f);
        REQUIRE(out.at(r, 1) == 0.0f);
        REQUIRE(out.at(r, 10) == 0.0f);
        REQUIRE(out.at(r, 11) == 0.0f);
    }
    REQUIRE(out.at(0, 2) == 0.0f);   // in.at(2, 0) is the kept-region minimum
    REQUIRE(out.at(11, 9) == 1.0f);  // in.at(13, 7) is the kept-region maximum
    REQUIRE(out.at(3, 6) == Catch::Approx((in.at(5, 4) - in.at(2, 0)) / (in.at(13, 7) - in.at(2, 0))).margin(1e-6));
}

TEST_CASE("every normalized pixel lies in the unit interval") {
    std::mt19937_64 rng(botkit::fnv1a("pixels"));
    for (int trial = 0; trial < 10; ++trial) {
        Image in = random_image(20 + rng() % 40, 20 + rng() % 40, rng());
        for (auto& p : in.pix) p = p * 50.0f - 20.0f;
        Image out = botkit::crop_and_normalize(in, 24);
        for (float p : out.pix) {
            REQUIRE(p >= 0.0f);
            REQUIRE(p <= 1.0f);
        }
    }
}

TEST_CASE("mirroring twice recovers the original exactly") {
    Image in = random_image(17, 23, botkit::fnv1a("mirror"));
    Image twice = botkit::mirror_lr(botkit::mirror_lr(in));
    REQUIRE(twice.pix == in.pix);
    Image once = botkit::mirror_lr(in);
    REQUIRE(once.at(4, 0) == in.at(4, 22));
}

TEST_CASE("translation shifts columns and zero-fills the vacated band") {
    Image in = random_image(9, 12, botkit::fnv1a("shift"));
    Image right = botkit::translate_lr(in, 3);
    for (std::size_t r = 0; r < 9; ++r) {
        for (std::size_t c = 0; c < 3; ++c) REQUIRE(right.at(r, c) == 0.0f);
        for (std::size_t c = 3; c < 12; ++c) REQUIRE(right.at(r, c) == in.at(r, c - 3));
    }
    Image left = botkit::translate_lr(in, -2);
    for (std::size_t r = 0; r < 9; ++r) {
        for (std::size_t c = 0; c < 10; ++c) REQUIRE(left.at(r, c) == in.at(r, c + 2));
        for (std::size_t c = 10; c < 12; ++c) REQUIRE(left.at(r, c) == 0.0f);
    }
}

TEST_CASE("augmentation shifts are drawn from plus-minus 1..10 and never zero") {
    std::mt19937_64 rng(botkit::fnv1a("draws"));
    bool saw_neg = false, saw_pos = false;
    for (int i = 0; i < 2000; ++i) {
        int s = botkit::draw_shift(rng);
        REQUIRE(s != 0);
        REQUIRE(std::abs(s) >= 1);
        REQUIRE(std::abs(s) <= 10);
        saw_neg = saw_neg || s < 0;
        saw_pos = saw_pos || s > 0;
    }
    REQUIRE(saw_neg);
    REQUIRE(saw_pos);
}

TEST_CASE("augment emits the original, the mirror and the shifted copies") {
    SliceSample s;
    s.subject_id = "sub1";
    s.scan_id = "scan1";
    s.slice_index = 4;
    s.label = 1;
    s.pixels = random_image(16, 16, botkit::fnv1a("augment"));
    std::mt19937_64 rng(7);
    auto out = botkit::augment(s, rng, 2);
    REQUIRE(out.size() == 4);
    REQUIRE(out[0].pixels.pix == s.pixels.pix);
    REQUIRE(out[1].pixels.pix == botkit::mirror_lr(s.pixels).pix);
    for (const auto& a : out) {
        REQUIRE(a.subject_id == "sub1");
        REQUIRE(a.scan_id == "scan1");
        REQUIRE(a.slice_index == 4);
        REQUIRE(a.label == 1);
    }
    std::mt19937_64 rng0(7);
    REQUIRE(botkit::augment(s, rng0, 0).size() == 2);
}

TEST_CASE("volume container round-trips voxels and header bitwise") {
    Volume v = botkit::generate_synthetic_volume(ClassProfile{}, "subA", "scan0", Diagnosis::ad, 99, 12);
    std::string path = temp_path("botkit_vol_roundtrip.vol");
    botkit::save_volume(v, path);
    Volume r = botkit::load_volume(path);
    REQUIRE(r.subject_id == "subA");
    REQUIRE(r.scan_id == "scan0");
    REQUIRE(r.label == Diagnosis::ad);
    REQUIRE(r.extents == v.extents);
    REQUIRE(r.voxels == v.voxels);
    std::remove(path.c_str());
}

TEST_CASE("volume loader rejects bad magic, truncation and tiny extents") {
    std::string path = temp_path("botkit_vol_bad.vol");

    botkit::write_text_file(path, "botkit-volume v2\nsubject_id=s\n\n");
    REQUIRE_THROWS_WITH(botkit::load_volume(path), ContainsSubstring("magic"));

    Volume v = botkit::generate_synthetic_volume(ClassProfile{}, "subA", "scan0", Diagnosis::cn, 1, 12);
    botkit::save_volume(v, path);
    std::string whole = botkit::read_text_file(path);
    botkit::write_text_file(path, whole.substr(0, whole.size() - 64));
    REQUIRE_THROWS_WITH(botkit::load_volume(path), ContainsSubstring("truncated"));

    Volume tiny = v;
    tiny.extents = {4, 4, 4};
    tiny.voxels.assign(64, 0.0f);
    botkit::save_volume(tiny, path);
    REQUIRE_THROWS_WITH(botkit::load_volume(path), ContainsSubstring("10"));

    std::remove(path.c_str());
}

TEST_CASE("slices container round-trips and rejects truncation") {
    ScanSlices s;
    s.subject_id = "subB";
    s.scan_id = "scan1";
    s.label = Diagnosis::mci_c;
    for (int i = 0; i < 10; ++i) s.slices.push_back(random_image(16, 16, static_cast<std::uint64_t>(i)));
    std::string path = temp_path("botkit_slices_roundtrip.slc");
    botkit::save_slices(s, path);
    ScanSlices r = botkit::load_slices(path);
    REQUIRE(r.subject_id == "subB");
    REQUIRE(r.label == Diagnosis::mci_c);
    REQUIRE(r.slices.size() == 10);
    for (int i = 0; i < 10; ++i) REQUIRE(r.slices[static_cast<std::size_t>(i)].pix == s.slices[static_cast<std::size_t>(i)].pix);

    std::string whole = botkit::read_text_file(path);
    botkit::write_text_file(path, whole.substr(0, whole.size() - 100));
    REQUIRE_THROWS_WITH(botkit::load_slices(path), ContainsSubstring("truncated"));
    std::remove(path.c_str());
}

TEST_CASE("manifest csv round-trips and enforces its exact header") {
    Manifest m = two_class_manifest(3, 2, 2);
    std::string path = temp_path("botkit_manifest.csv");
    botkit::save_manifest(m, path);
    std::string text = botkit::read_text_file(path);
    REQUIRE(text.rfind("subject_id,scan_id,label,path\n", 0) == 0);
    Manifest r = botkit::load_manifest(path);
    REQUIRE(r.rows.size() == m.rows.size());
    REQUIRE(r.rows[0].subject_id == "sub0");
    REQUIRE(r.rows.back().label == Diagnosis::ad);
    REQUIRE(r.rows.back().path == m.rows.back().path);

    botkit::write_text_file(path, "subject,scan,label,path\n");
    REQUIRE_THROWS_WITH(botkit::load_manifest(path), ContainsSubstring("header"));
    botkit::write_text_file(path, "subject_id,scan_id,label,path\na,b,AD\n");
    REQUIRE_THROWS_WITH(botkit::load_manifest(path), ContainsSubstring("fields"));
    botkit::write_text_file(path, "subject_id,scan_id,label,path\na,b,AD,p\na,b,AD,p\n");
    REQUIRE_THROWS_WITH(botkit::load_manifest(path), ContainsSubstring("duplicate"));
    std::remove(path.c_str());
}

TEST_CASE("manifest writer rejects duplicate scans and unsafe identifiers") {
    Manifest dup;
    dup.rows.push_back(ManifestRow{"a", "b", Diagnosis::cn, "p1"});
    dup.rows.push_back(ManifestRow{"a", "b", Diagnosis::cn, "p2"});
    REQUIRE_THROWS_WITH(botkit::save_manifest(dup, temp_path("botkit_dup.csv")), ContainsSubstring("duplicate"));

    Manifest bad;
    bad.rows.push_back(ManifestRow{"a b", "c", Diagnosis::cn, "p"});
    REQUIRE_THROWS_AS(botkit::save_manifest(bad, temp_path("botkit_bad.csv")), std::invalid_argument);
}

TEST_CASE("splits are deterministic in the seed and differ across seeds") {
    Manifest m = two_class_manifest(20, 20);
    SplitPlan a = botkit::make_split(m, TaskKind::ad_vs_cn, SplitRatios{}, 42, 5);
    SplitPlan b = botkit::make_split(m, TaskKind::ad_vs_cn, SplitRatios{}, 42, 5);
    REQUIRE(a.train_subjects == b.train_subjects);
    REQUIRE(a.val_subjects == b.val_subjects);
    REQUIRE(a.test_subjects == b.test_subjects);
    REQUIRE(a.folds == b.folds);

    SplitPlan c = botkit::make_split(m, TaskKind::ad_vs_cn, SplitRatios{}, 43, 5);
    REQUIRE(a.train_subjects != c.train_subjects);
}

TEST_CASE("largest-remainder rounding gives 80/10/10 on balanced hundreds") {
    Manifest m = two_class_manifest(50, 50);
    SplitPlan plan = botkit::make_split(m, TaskKind::ad_vs_cn, SplitRatios{}, 3, 5);
    REQUIRE(plan.train_subjects.size() == 80);
    REQUIRE(plan.val_subjects.size() == 10);
    REQUIRE(plan.test_subjects.size() == 10);
}

TEST_CASE("odd class sizes stay within one subject of the exact quota") {
    Manifest m = two_class_manifest(7, 7);
    SplitPlan plan = botkit::make_split(m, TaskKind::ad_vs_cn, SplitRatios{}, 11, 5);
    // per class the exact quotas are (5.6, 0.7, 0.7); largest remainder gives (5, 1, 1)
    REQUIRE(plan.train_subjects.size() == 10);
    REQUIRE(plan.val_subjects.size() == 2);
    REQUIRE(plan.test_subjects.size() == 2);
}

TEST_CASE("split and fold invariants hold across many seeds") {
    Manifest m = two_class_manifest(30, 25, 2);
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        SplitPlan plan = botkit::make_split(m, TaskKind::ad_vs_cn, SplitRatios{}, seed, 5);
        REQUIRE_NOTHROW(botkit::check_split_invariants(plan));
        REQUIRE(plan.folds.size() == 5);
        REQUIRE(plan.train_subjects.size() + plan.val_subjects.size() + plan.test_subjects.size() == 55);
    }
}

TEST_CASE("fold sizes per class stratum differ by at most one") {
    Manifest m = two_class_manifest(23, 17);
    SplitPlan plan = botkit::make_split(m, TaskKind::ad_vs_cn, SplitRatios{}, 5, 5);
    std::set<std::string> cn_subjects;
    for (const auto& row : m.rows)
        if (row.label == Diagnosis::cn) cn_subjects.insert(row.subject_id);
    std::vector<std::size_t> cn_per_fold, ad_per_fold;
    for (const auto& fold : plan.folds) {
        std::size_t cn = 0;
        for (const auto& s : fold) cn += cn_subjects.count(s);
        cn_per_fold.push_back(cn);
        ad_per_fold.push_back(fold.size() - cn);
    }
    auto spread = [](const std::vector<std::size_t>& v) {
        return *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end());
    };
    REQUIRE(spread(cn_per_fold) <= 1);
    REQUIRE(spread(ad_per_fold) <= 1);
}

TEST_CASE("classes with fewer than five subjects cannot be stratified") {
    Manifest m = two_class_manifest(10, 4);
    REQUIRE_THROWS_WITH(botkit::make_split(m, TaskKind::ad_vs_cn, SplitRatios{}, 0, 5),
                        ContainsSubstring("cannot stratify"));
}

TEST_CASE("a subject appearing under both task classes is rejected") {
    Manifest m = two_class_manifest(6, 6);
    m.rows.push_back(ManifestRow{"sub0", "scanX", Diagnosis::ad, "pX"});  // sub0 is CN elsewhere
    REQUIRE_THROWS_WITH(botkit::make_split(m, TaskKind::ad_vs_cn, SplitRatios{}, 0, 5),
                        ContainsSubstring("both task classes"));
}

TEST_CASE("out-of-task diagnoses are ignored by the split") {
    Manifest m = two_class_manifest(8, 8);
    m.rows.push_back(ManifestRow{"mci1", "s0", Diagnosis::mci_c, "p1"});
    m.rows.push_back(ManifestRow{"mci2", "s0", Diagnosis::mci_nc, "p2"});
    SplitPlan plan = botkit::make_split(m, TaskKind::ad_vs_cn, SplitRatios{}, 1, 5);
    std::set<std::string> all(plan.train_subjects.begin(), plan.train_subjects.end());
    all.insert(plan.val_subjects.begin(), plan.val_subjects.end());
    all.insert(plan.test_subjects.begin(), plan.test_subjects.end());
    REQUIRE(all.count("mci1") == 0);
    REQUIRE(all.count("mci2") == 0);
    REQUIRE(all.size() == 16);
}

TEST_CASE("split plan files round-trip and reject tampering") {
    Manifest m = two_class_manifest(12, 12);
    for (auto& row : m.rows)
        if (row.label == Diagnosis::ad) row.label = Diagnosis::mci_c;
    SplitPlan plan = botkit::make_split(m, TaskKind::mcic_vs_cn, SplitRatios{}, 9, 5);
    std::string path = temp_path("botkit_split.txt");
    botkit::save_split(plan, path);
    SplitPlan r = botkit::load_split(path);
    REQUIRE(r.task == TaskKind::mcic_vs_cn);
    REQUIRE(r.seed == 9);
    REQUIRE(r.train_subjects == plan.train_subjects);
    REQUIRE(r.folds == plan.folds);

    // moving a train subject into test must fail the disjointness check on load
    std::string text = botkit::read_text_file(path);
    auto pos = text.find("test=");
    std::string leaked = text.substr(0, pos + 5) + plan.train_subjects[0] + " " + text.substr(pos + 5);
    botkit::write_text_file(path, leaked);
    REQUIRE_THROWS_WITH(botkit::load_split(path), ContainsSubstring("train and test"));
    std::remove(path.c_str());
}

TEST_CASE("task streams carry binary labels and honor fold membership") {
    Manifest m = two_class_manifest(10, 10, 2);
    SplitPlan plan = botkit::make_split(m, TaskKind::ad_vs_cn, SplitRatios{}, 4, 5);

    std::vector<ScanSlices> scans;
    for (const auto& row : m.rows) {
        ScanSlices s;
        s.subject_id = row.subject_id;
        s.scan_id = row.scan_id;
        s.label = row.label;
        for (int i = 0; i < 10; ++i) s.slices.push_back(Image(8, 8));
        scans.push_back(std::move(s));
    }

    auto train = botkit::slice_stream(scans, plan, 3, 0, StreamRole::fold_train);
    auto val = botkit::slice_stream(scans, plan, 3, 0, StreamRole::fold_val);
    auto hold = botkit::slice_stream(scans, plan, 3, 0, StreamRole::holdout);
    REQUIRE_NOTHROW(botkit::check_stream_disjoint(train, val, hold));

    std::set<std::string> train_subjects, val_subjects, hold_subjects;
    for (const auto& s : train) train_subjects.insert(s.subject_id);
    for (const auto& s : val) val_subjects.insert(s.subject_id);
    for (const auto& s : hold) hold_subjects.insert(s.subject_id);
    REQUIRE(val_subjects == std::set<std::string>(plan.folds[0].begin(), plan.folds[0].end()));
    REQUIRE(hold_subjects == std::set<std::string>(plan.test_subjects.begin(), plan.test_subjects.end()));
    std::size_t pool = plan.train_subjects.size() + plan.val_subjects.size();
    REQUIRE(train_subjects.size() + val_subjects.size() == pool);

    // every subject contributes both of its scans, labels follow the task remap
    REQUIRE(train.size() == train_subjects.size() * 2);
    for (const auto& s : train) {
        bool is_ad = std::stoi(s.subject_id.substr(3)) >= 10;  // sub10..sub19 are the AD rows
        REQUIRE(s.label == (is_ad ? 1 : 0));
        REQUIRE(s.slice_index == 3);
    }
    // validation and holdout pass through unaugmented, one sample per scan
    REQUIRE(val.size() == val_subjects.size() * 2);
    REQUIRE(hold.size() == hold_subjects.size() * 2);
}

TEST_CASE("the stream guard catches an injected leaked subject") {
    std::vector<SliceSample> train(1), val(1), test(1);
    train[0].subject_id = "subX";
    val[0].subject_id = "subY";
    test[0].subject_id = "subX";
    REQUIRE_THROWS_WITH(botkit::check_stream_disjoint(train, val, test), ContainsSubstring("leakage"));
}

TEST_CASE("synthetic volumes are a pure function of subject, scan and seed") {
    ClassProfile p;
    Volume a = botkit::generate_synthetic_volume(p, "sub1", "scan1", Diagnosis::cn, 7, 16);
    Volume b = botkit::generate_synthetic_volume(p, "sub1", "scan1", Diagnosis::cn, 7, 16);
    REQUIRE(a.voxels == b.voxels);

    Volume c = botkit::generate_synthetic_volume(p, "sub1", "scan2", Diagnosis::cn, 7, 16);
    REQUIRE(a.voxels != c.voxels);
    Volume d = botkit::generate_synthetic_volume(p, "sub2", "scan1", Diagnosis::cn, 7, 16);
    REQUIRE(a.voxels != d.voxels);
}

TEST_CASE("scans of one subject share anatomy and differ only by noise") {
    ClassProfile p;
    p.noise_sigma = 0.0;
    Volume a = botkit::generate_synthetic_volume(p, "sub1", "scan1", Diagnosis::cn, 3, 16);
    Volume b = botkit::generate_synthetic_volume(p, "sub1", "scan2", Diagnosis::cn, 3, 16);
    REQUIRE(a.voxels == b.voxels);
}

TEST_CASE("disjoint radius profiles separate classes by slice mean above 95 percent") {
    auto [small, large] = botkit::synthetic_profiles(false);
    std::vector<double> means0, means1;
    for (int i = 0; i < 20; ++i) {
        for (int cls = 0; cls < 2; ++cls) {
            Volume v = botkit::generate_synthetic_volume(cls ? large : small, "sub" + std::to_string(i + 100 * cls),
                                                         "scan0", cls ? Diagnosis::ad : Diagnosis::cn, 2024, 64);
            auto slices = botkit::extract_central_slices(v, 10);
            Image norm = botkit::crop_and_normalize(slices[5], 32);
            double mean = 0.0;
            for (float px : norm.pix) mean += px;
            mean /= static_cast<double>(norm.pix.size());
            (cls ? means1 : means0).push_back(mean);
        }
    }
    REQUIRE(threshold_accuracy(means0, means1) > 0.95);
}

TEST_CASE("identical profiles leave no threshold signal in slice means") {
    auto [a, b] = botkit::synthetic_profiles(true);
    REQUIRE(a.radius_lo == b.radius_lo);
    REQUIRE(a.radius_hi == b.radius_hi);
    std::vector<double> means0, means1;
    for (int i = 0; i < 25; ++i) {
        for (int cls = 0; cls < 2; ++cls) {
            Volume v = botkit::generate_synthetic_volume(cls ? b : a, "n" + std::to_string(i + 100 * cls), "scan0",
                                                         cls ? Diagnosis::ad : Diagnosis::cn, 77, 64);
            auto slices = botkit::extract_central_slices(v, 10);
            Image norm = botkit::crop_and_normalize(slices[5], 32);
            double mean = 0.0;
            for (float px : norm.pix) mean += px;
            mean /= static_cast<double>(norm.pix.size());
            (cls ? means1 : means0).push_back(mean);
        }
    }
    // the best threshold on 50 exchangeable points should stay close to chance
    REQUIRE(threshold_accuracy(means0, means1) < 0.8);
}

TEST_CASE("preprocessing a synthetic volume yields ten unit-range square slices") {
    Volume v = botkit::generate_synthetic_volume(ClassProfile{}, "sub9", "scan0", Diagnosis::ad, 5, 64);
    ScanSlices s = botkit::preprocess_volume(v, 32);
    REQUIRE(s.slices.size() == 10);
    REQUIRE(s.label == Diagnosis::ad);
    for (const auto& img : s.slices) {
        REQUIRE(img.rows == 32);
        REQUIRE(img.cols == 32);
        for (float px : img.pix) {
            REQUIRE(px >= 0.0f);
            REQUIRE(px <= 1.0f);
        }
    }
}

TEST_CASE("task parsing round-trips the three task names") {
    for (TaskKind t : {TaskKind::ad_vs_cn, TaskKind::mcic_vs_cn, TaskKind::mcic_vs_mcinc})
        REQUIRE(botkit::parse_task(botkit::task_name(t)) == t);
    REQUIRE_THROWS_AS(botkit::parse_task("ad_vs_mci"), std::invalid_argument);
    REQUIRE(botkit::task_label(TaskKind::mcic_vs_mcinc, Diagnosis::mci_c) == 1);
    REQUIRE(botkit::task_label(TaskKind::mcic_vs_mcinc, Diagnosis::mci_nc) == 0);
    REQUIRE(!botkit::task_label(TaskKind::mcic_vs_mcinc, Diagnosis::ad).has_value());
}
