#pragma once

// Volume-to-slice data pipeline.
//
// A Volume stores raw voxels in (sagittal, coronal, axial) axis order; slicing
// walks the coronal axis and yields 2D images with axial rows and sagittal
// columns, so a sagittal flip is a left-right mirror and a sagittal translation
// is a horizontal shift. Ten central slices are cut per scan, center-cropped
// (or zero-padded) to a square target, min-max normalized into [0,1], and fed
// to ten slice-specific models.
//
// Splits are made at subject granularity: subjects are shuffled per seed,
// stratified by class with largest-remainder rounding, and partitioned into
// train/val/test; folds partition train + val into k stratified groups. All
// scans of a subject follow their subject, so no subject can appear on both
// sides of any boundary. Augmentation (mirror plus horizontal shifts drawn
// from +-{1..10} px, zero fill) applies to training folds only.
//
// File formats, all little-endian:
//   manifest CSV    header "subject_id,scan_id,label,path", one row per scan
//   volume file     "botkit-volume v1" magic line, key=value header lines
//                   (subject_id, scan_id, label, extents, axis_order, dtype),
//                   one blank line, then S*C*A float32 voxels
//   slices file     "botkit-slices v1" magic line, analogous header with
//                   count/height/width, blank line, count*H*W float32 pixels
//   split file      "botkit-split v1" magic line, task/seed lines, then one
//                   whitespace-joined subject list per partition and fold
// Identifiers written into these files must be token-safe (no spaces, commas,
// newlines or '='); writers reject anything else.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "botkit/util.hpp"

namespace botkit {

static_assert(std::endian::native == std::endian::little, "containers assume a little-endian host");

enum class Diagnosis { cn, ad, mci_c, mci_nc };

inline const char* diagnosis_name(Diagnosis d) {
    switch (d) {
        case Diagnosis::cn: return "CN";
        case Diagnosis::ad: return "AD";
        case Diagnosis::mci_c: return "MCIc";
        case Diagnosis::mci_nc: return "MCInc";
    }
    throw std::logic_error("diagnosis_name: bad enum value");
}

inline Diagnosis parse_diagnosis(const std::string& s) {
    if (s == "CN") return Diagnosis::cn;
    if (s == "AD") return Diagnosis::ad;
    if (s == "MCIc") return Diagnosis::mci_c;
    if (s == "MCInc") return Diagnosis::mci_nc;
    throw std::invalid_argument("unknown diagnosis label: " + s);
}

enum class TaskKind { ad_vs_cn, mcic_vs_cn, mcic_vs_mcinc };

inline const char* task_name(TaskKind t) {
    switch (t) {
        case TaskKind::ad_vs_cn: return "ad_vs_cn";
        case TaskKind::mcic_vs_cn: return "mcic_vs_cn";
        case TaskKind::mcic_vs_mcinc: return "mcic_vs_mcinc";
    }
    throw std::logic_error("task_name: bad enum value");
}

inline TaskKind parse_task(const std::string& s) {
    if (s == "ad_vs_cn") return TaskKind::ad_vs_cn;
    if (s == "mcic_vs_cn") return TaskKind::mcic_vs_cn;
    if (s == "mcic_vs_mcinc") return TaskKind::mcic_vs_mcinc;
    throw std::invalid_argument("unknown task: " + s + " (expected ad_vs_cn, mcic_vs_cn or mcic_vs_mcinc)");
}

// (negative class, positive class); the disease / converter side is class 1.
inline std::pair<Diagnosis, Diagnosis> task_classes(TaskKind t) {
    switch (t) {
        case TaskKind::ad_vs_cn: return {Diagnosis::cn, Diagnosis::ad};
        case TaskKind::mcic_vs_cn: return {Diagnosis::cn, Diagnosis::mci_c};
        case TaskKind::mcic_vs_mcinc: return {Diagnosis::mci_nc, Diagnosis::mci_c};
    }
    throw std::logic_error("task_classes: bad enum value");
}

// nullopt when the diagnosis does not participate in the task.
inline std::optional<int> task_label(TaskKind t, Diagnosis d) {
    auto [neg, pos] = task_classes(t);
    if (d == neg) return 0;
    if (d == pos) return 1;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Core containers

// Voxel layout: index (s * coronal + c) * axial + a.
struct Volume {
    std::string subject_id;
    std::string scan_id;
    Diagnosis label = Diagnosis::cn;
    std::array<std::size_t, 3> extents{0, 0, 0};  // (sagittal, coronal, axial)
    std::vector<float> voxels;
    std::string source_path;

    float& at(std::size_t s, std::size_t c, std::size_t a) {
        return voxels[(s * extents[1] + c) * extents[2] + a];
    }
    float at(std::size_t s, std::size_t c, std::size_t a) const {
        return voxels[(s * extents[1] + c) * extents[2] + a];
    }
};

// Row-major 2D image; rows are axial, columns sagittal for coronal slices.
struct Image {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> pix;

    Image() = default;
    Image(std::size_t r, std::size_t c) : rows(r), cols(c), pix(r * c, 0.0f) {}

    float& at(std::size_t r, std::size_t c) { return pix[r * cols + c]; }
    float at(std::size_t r, std::size_t c) const { return pix[r * cols + c]; }
};

// One model input: a normalized square slice with a task-binary label.
struct SliceSample {
    std::string subject_id;
    std::string scan_id;
    int slice_index = 0;  // 0..k-1, selects the consuming model
    Image pixels;
    int label = 0;  // 0 or 1 under the active task
};

struct ManifestRow {
    std::string subject_id;
    std::string scan_id;
    Diagnosis label = Diagnosis::cn;
    std::string path;
};

// v1 manifests are exactly the CSV header plus rows; (subject_id, scan_id) unique.
struct Manifest {
    std::vector<ManifestRow> rows;
};

struct SplitPlan {
    TaskKind task = TaskKind::ad_vs_cn;
    std::vector<std::string> train_subjects;
    std::vector<std::string> val_subjects;
    std::vector<std::string> test_subjects;
    std::vector<std::vector<std::string>> folds;  // partition of train + val
    std::uint64_t seed = 0;
};

// The ten processed slices of one scan, as written by the preprocess step.
struct ScanSlices {
    std::string subject_id;
    std::string scan_id;
    Diagnosis label = Diagnosis::cn;
    std::vector<Image> slices;
};

namespace detail {

inline void check_token(const std::string& value, const std::string& what) {
    if (value.empty()) throw std::invalid_argument(what + " must not be empty");
    if (value.find_first_of(" \t\r\n,=") != std::string::npos)
        throw std::invalid_argument(what + " contains whitespace, ',' or '=': " + value);
}

inline void write_f32(std::ostream& out, const float* data, std::size_t n) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
}

inline void read_f32(std::istream& in, float* data, std::size_t n, const std::string& what) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != n * sizeof(float))
        throw std::runtime_error("truncated while reading " + what);
}

// Reads magic line + key=value lines up to the first blank line.
inline std::map<std::string, std::string> read_header(std::istream& in, const std::string& magic,
                                                      const std::string& what) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(what + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != magic) throw std::runtime_error(what + ": bad magic line '" + line + "', expected '" + magic + "'");
    std::map<std::string, std::string> kv;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) return kv;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error(what + ": malformed header line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    throw std::runtime_error(what + ": header not terminated by a blank line");
}

inline const std::string& header_get(const std::map<std::string, std::string>& kv, const std::string& key,
                                     const std::string& what) {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error(what + ": missing header key '" + key + "'");
    return it->second;
}

inline std::size_t parse_extent(const std::string& s, const std::string& what) {
    std::size_t pos = 0;
    unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size() || v == 0) throw std::runtime_error(what + ": bad extent '" + s + "'");
    return static_cast<std::size_t>(v);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Manifest CSV

inline void save_manifest(const Manifest& m, const std::string& path) {
    std::set<std::pair<std::string, std::string>> seen;
    std::ostringstream out;
    out << "subject_id,scan_id,label,path\n";
    for (const auto& row : m.rows) {
        detail::check_token(row.subject_id, "subject_id");
        detail::check_token(row.scan_id, "scan_id");
        if (row.path.empty() || row.path.find_first_of(",\r\n") != std::string::npos)
            throw std::invalid_argument("manifest path empty or contains ',': " + row.path);
        if (!seen.insert({row.subject_id, row.scan_id}).second)
            throw std::invalid_argument("duplicate manifest entry: " + row.subject_id + "/" + row.scan_id);
        out << row.subject_id << ',' << row.scan_id << ',' << diagnosis_name(row.label) << ',' << row.path << '\n';
    }
    write_text_file(path, out.str());
}

inline Manifest load_manifest(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("manifest is empty: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "subject_id,scan_id,label,path")
        throw std::runtime_error("manifest has unexpected header '" + line + "': " + path);
    Manifest m;
    std::set<std::pair<std::string, std::string>> seen;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto fields = split(line, ',');
        if (fields.size() != 4)
            throw std::runtime_error("manifest line " + std::to_string(lineno) + " has " +
                                     std::to_string(fields.size()) + " fields, expected 4");
        ManifestRow row{fields[0], fields[1], parse_diagnosis(fields[2]), fields[3]};
        if (!seen.insert({row.subject_id, row.scan_id}).second)
            throw std::runtime_error("duplicate manifest entry: " + row.subject_id + "/" + row.scan_id);
        m.rows.push_back(std::move(row));
    }
    return m;
}

// ---------------------------------------------------------------------------
// Volume and slices containers

inline void save_volume(const Volume& v, const std::string& path) {
    if (v.extents[0] * v.extents[1] * v.extents[2] != v.voxels.size())
        throw std::invalid_argument("volume voxel count does not match extents");
    detail::check_token(v.subject_id, "subject_id");
    detail::check_token(v.scan_id, "scan_id");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "botkit-volume v1\n"
        << "subject_id=" << v.subject_id << '\n'
        << "scan_id=" << v.scan_id << '\n'
        << "label=" << diagnosis_name(v.label) << '\n'
        << "extents=" << v.extents[0] << ' ' << v.extents[1] << ' ' << v.extents[2] << '\n'
        << "axis_order=sagittal coronal axial\n"
        << "dtype=f32\n\n";
    detail::write_f32(out, v.voxels.data(), v.voxels.size());
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline Volume load_volume(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    auto kv = detail::read_header(in, "botkit-volume v1", "volume " + path);
    Volume v;
    v.subject_id = detail::header_get(kv, "subject_id", path);
    v.scan_id = detail::header_get(kv, "scan_id", path);
    v.label = parse_diagnosis(detail::header_get(kv, "label", path));
    if (detail::header_get(kv, "axis_order", path) != "sagittal coronal axial")
        throw std::runtime_error(path + ": unsupported axis_order");
    if (detail::header_get(kv, "dtype", path) != "f32") throw std::runtime_error(path + ": unsupported dtype");
    auto parts = split(detail::header_get(kv, "extents", path), ' ');
    if (parts.size() != 3) throw std::runtime_error(path + ": extents must have 3 values");
    for (int i = 0; i < 3; ++i) {
        v.extents[i] = detail::parse_extent(parts[i], path);
        if (v.extents[i] < 10)
            throw std::runtime_error(path + ": extent " + std::to_string(v.extents[i]) +
                                     " below the 10 needed for central slices");
    }
    v.voxels.resize(v.extents[0] * v.extents[1] * v.extents[2]);
    detail::read_f32(in, v.voxels.data(), v.voxels.size(), "voxels of " + path);
    v.source_path = path;
    return v;
}

inline void save_slices(const ScanSlices& s, const std::string& path) {
    if (s.slices.empty()) throw std::invalid_argument("slices file needs at least one slice");
    detail::check_token(s.subject_id, "subject_id");
    detail::check_token(s.scan_id, "scan_id");
    for (const auto& img : s.slices)
        if (img.rows != s.slices[0].rows || img.cols != s.slices[0].cols)
            throw std::invalid_argument("slices file needs uniform slice shapes");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "botkit-slices v1\n"
        << "subject_id=" << s.subject_id << '\n'
        << "scan_id=" << s.scan_id << '\n'
        << "label=" << diagnosis_name(s.label) << '\n'
        << "count=" << s.slices.size() << '\n'
        << "height=" << s.slices[0].rows << '\n'
        << "width=" << s.slices[0].cols << '\n'
        << "dtype=f32\n\n";
    for (const auto& img : s.slices) detail::write_f32(out, img.pix.data(), img.pix.size());
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline ScanSlices load_slices(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    auto kv = detail::read_header(in, "botkit-slices v1", "slices " + path);
    ScanSlices s;
    s.subject_id = detail::header_get(kv, "subject_id", path);
    s.scan_id = detail::header_get(kv, "scan_id", path);
    s.label = parse_diagnosis(detail::header_get(kv, "label", path));
    if (detail::header_get(kv, "dtype", path) != "f32") throw std::runtime_error(path + ": unsupported dtype");
    std::size_t count = detail::parse_extent(detail::header_get(kv, "count", path), path);
    std::size_t rows = detail::parse_extent(detail::header_get(kv, "height", path), path);
    std::size_t cols = detail::parse_extent(detail::header_get(kv, "width", path), path);
    if (count > 1024 || rows > 65536 || cols > 65536) throw std::runtime_error(path + ": implausible slice shape");
    for (std::size_t i = 0; i < count; ++i) {
        Image img(rows, cols);
        detail::read_f32(in, img.pix.data(), img.pix.size(), "slice " + std::to_string(i) + " of " + path);
        s.slices.push_back(std::move(img));
    }
    return s;
}

// ---------------------------------------------------------------------------
// Slice extraction and normalization

// Returns the k central coronal slices, indices floor(D/2)-floor(k/2)
// .. floor(D/2)+ceil(k/2)-1. Slices have axial rows and sagittal columns.
inline std::vector<Image> extract_central_slices(const Volume& v, int k = 10) {
    if (k <= 0) throw std::invalid_argument("slice count must be positive");
    std::size_t d = v.extents[1];
    if (d < static_cast<std::size_t>(k))
        throw std::invalid_argument("coronal extent " + std::to_string(d) + " is smaller than the " +
                                    std::to_string(k) + " requested central slices");
    std::size_t lo = d / 2 - static_cast<std::size_t>(k / 2);
    std::vector<Image> out;
    out.reserve(static_cast<std::size_t>(k));
    for (std::size_t c = lo; c < lo + static_cast<std::size_t>(k); ++c) {
        Image img(v.extents[2], v.extents[0]);
        for (std::size_t a = 0; a < v.extents[2]; ++a)
            for (std::size_t s = 0; s < v.extents[0]; ++s) img.at(a, s) = v.at(s, c, a);
        out.push_back(std::move(img));
    }
    return out;
}

// Center crop to target x target, min-max normalize into [0,1] (constant
// content maps to zeros). Dimensions smaller than the target are centered on a
// zero canvas after normalization, so padding stays at exactly 0.
inline Image crop_and_normalize(const Image& in, std::size_t target) {
    if (target == 0) throw std::invalid_argument("crop target must be positive");
    std::size_t keep_r = std::min(in.rows, target);
    std::size_t keep_c = std::min(in.cols, target);
    std::size_t src_r0 = (in.rows - keep_r) / 2;
    std::size_t src_c0 = (in.cols - keep_c) / 2;

    float lo = in.at(src_r0, src_c0);
    float hi = lo;
    for (std::size_t r = 0; r < keep_r; ++r)
        for (std::size_t c = 0; c < keep_c; ++c) {
            float x = in.at(src_r0 + r, src_c0 + c);
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    float range = hi - lo;

    Image out(target, target);
    std::size_t dst_r0 = (target - keep_r) / 2;
    std::size_t dst_c0 = (target - keep_c) / 2;
    if (range > 0.0f)
        for (std::size_t r = 0; r < keep_r; ++r)
            for (std::size_t c = 0; c < keep_c; ++c)
                out.at(dst_r0 + r, dst_c0 + c) = (in.at(src_r0 + r, src_c0 + c) - lo) / range;
    return out;
}

// Extract + crop + normalize; the label stays the 4-way diagnosis, the binary
// remap happens when a task stream is built.
inline ScanSlices preprocess_volume(const Volume& v, std::size_t target, int k = 10) {
    ScanSlices s;
    s.subject_id = v.subject_id;
    s.scan_id = v.scan_id;
    s.label = v.label;
    for (auto& img : extract_central_slices(v, k)) s.slices.push_back(crop_and_normalize(img, target));
    return s;
}

// ---------------------------------------------------------------------------
// Augmentation

inline Image mirror_lr(const Image& in) {
    Image out(in.rows, in.cols);
    for (std::size_t r = 0; r < in.rows; ++r)
        for (std::size_t c = 0; c < in.cols; ++c) out.at(r, c) = in.at(r, in.cols - 1 - c);
    return out;
}

// Positive shift moves content toward higher column indices; vacated cells are 0.
inline Image translate_lr(const Image& in, int shift) {
    Image out(in.rows, in.cols);
    for (std::size_t r = 0; r < in.rows; ++r)
        for (std::size_t c = 0; c < in.cols; ++c) {
            long long src = static_cast<long long>(c) - shift;
            if (src >= 0 && src < static_cast<long long>(in.cols)) out.at(r, c) = in.at(r, static_cast<std::size_t>(src));
        }
    return out;
}

// Uniform over +-{1..10}: never zero, both directions equally likely.
inline int draw_shift(std::mt19937_64& rng) {
    int v = static_cast<int>(std::uniform_int_distribution<int>(0, 19)(rng));
    return v < 10 ? v - 10 : v - 9;
}

// Training-fold expansion: the original, its left-right mirror, and
// `translations` shifted copies. Validation and test streams must bypass this.
inline std::vector<SliceSample> augment(const SliceSample& s, std::mt19937_64& rng, int translations = 2) {
    if (translations < 0) throw std::invalid_argument("translation count must be non-negative");
    std::vector<SliceSample> out;
    out.reserve(2 + static_cast<std::size_t>(translations));
    out.push_back(s);
    SliceSample m = s;
    m.pixels = mirror_lr(s.pixels);
    out.push_back(std::move(m));
    for (int i = 0; i < translations; ++i) {
        SliceSample t = s;
        t.pixels = translate_lr(s.pixels, draw_shift(rng));
        out.push_back(std::move(t));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Subject-level splits

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

namespace detail {

// Largest-remainder apportionment of n into 3 quotas; ties resolved in
// (train, val, test) order so results are deterministic.
inline std::array<std::size_t, 3> apportion(std::size_t n, const SplitRatios& ratios) {
    std::array<double, 3> want{ratios.train * static_cast<double>(n), ratios.val * static_cast<double>(n),
                               ratios.test * static_cast<double>(n)};
    std::array<std::size_t, 3> out{};
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        out[i] = static_cast<std::size_t>(std::floor(want[i]));
        assigned += out[i];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return want[a] - std::floor(want[a]) > want[b] - std::floor(want[b]); });
    for (std::size_t left = n - assigned, i = 0; i < left; ++i) out[order[i % 3]] += 1;
    return out;
}

// Unique subjects of each task class, each list sorted before shuffling so the
// outcome depends only on (manifest contents, seed). Subjects with rows under
// both labels are rejected: a subject must contribute to exactly one class.
inline std::array<std::vector<std::string>, 2> subjects_by_class(const Manifest& m, TaskKind task) {
    std::map<std::string, int> cls;
    for (const auto& row : m.rows) {
        auto lbl = task_label(task, row.label);
        if (!lbl) continue;
        auto [it, fresh] = cls.emplace(row.subject_id, *lbl);
        if (!fresh && it->second != *lbl)
            throw std::invalid_argument("subject " + row.subject_id + " has scans under both task classes");
    }
    std::array<std::vector<std::string>, 2> out;
    for (const auto& [subject, lbl] : cls) out[static_cast<std::size_t>(lbl)].push_back(subject);
    return out;
}

}  // namespace detail

// Stratified k-fold partition of train + val. Per class, subjects are shuffled
// by a seed derived from the plan seed and dealt round-robin, so fold sizes per
// stratum differ by at most one and the folds exactly partition train + val.
inline std::vector<std::vector<std::string>> make_folds(const SplitPlan& plan, const Manifest& manifest, int k = 5) {
    if (k < 2) throw std::invalid_argument("fold count must be at least 2");
    auto by_class = detail::subjects_by_class(manifest, plan.task);
    std::set<std::string> pool(plan.train_subjects.begin(), plan.train_subjects.end());
    pool.insert(plan.val_subjects.begin(), plan.val_subjects.end());
    std::vector<std::vector<std::string>> folds(static_cast<std::size_t>(k));
    std::mt19937_64 rng(mix_seed(plan.seed, 0x666f6c64, static_cast<std::uint64_t>(k)));
    for (auto& members : by_class) {
        std::vector<std::string> in_pool;
        for (const auto& s : members)
            if (pool.count(s)) in_pool.push_back(s);
        std::shuffle(in_pool.begin(), in_pool.end(), rng);
        if (in_pool.size() < static_cast<std::size_t>(k))
            throw std::invalid_argument("cannot stratify: a class has " + std::to_string(in_pool.size()) +
                                        " cross-validation subjects, fewer than " + std::to_string(k) + " folds");
        for (std::size_t i = 0; i < in_pool.size(); ++i)
            folds[i % static_cast<std::size_t>(k)].push_back(in_pool[i]);
    }
    return folds;
}

// Subject-level split, stratified by class. Scans never split across
// partitions because membership is decided purely by subject ID.
inline SplitPlan make_split(const Manifest& manifest, TaskKind task, SplitRatios ratios = {}, std::uint64_t seed = 0,
                            int folds = 5) {
    if (ratios.train <= 0 || ratios.val < 0 || ratios.test < 0 ||
        std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
        throw std::invalid_argument("split ratios must be non-negative and sum to 1");
    SplitPlan plan;
    plan.task = task;
    plan.seed = seed;
    auto by_class = detail::subjects_by_class(manifest, task);
    std::mt19937_64 rng(mix_seed(seed, 0x73706c69));
    for (std::size_t cls = 0; cls < 2; ++cls) {
        auto& members = by_class[cls];
        if (members.size() < 5)
            throw std::invalid_argument("cannot stratify: class " +
                                        std::string(diagnosis_name(cls ? task_classes(task).second
                                                                       : task_classes(task).first)) +
                                        " has " + std::to_string(members.size()) + " subjects, need at least 5");
        std::shuffle(members.begin(), members.end(), rng);
        auto quota = detail::apportion(members.size(), ratios);
        std::size_t i = 0;
        for (std::size_t j = 0; j < quota[0]; ++j) plan.train_subjects.push_back(members[i++]);
        for (std::size_t j = 0; j < quota[1]; ++j) plan.val_subjects.push_back(members[i++]);
        for (std::size_t j = 0; j < quota[2]; ++j) plan.test_subjects.push_back(members[i++]);
    }
    plan.folds = make_folds(plan, manifest, folds);
    return plan;
}

// Throws unless train/val/test subject sets are pairwise disjoint and the
// folds exactly partition train + val.
inline void check_split_invariants(const SplitPlan& plan) {
    std::set<std::string> train(plan.train_subjects.begin(), plan.train_subjects.end());
    std::set<std::string> val(plan.val_subjects.begin(), plan.val_subjects.end());
    std::set<std::string> test(plan.test_subjects.begin(), plan.test_subjects.end());
    if (train.size() != plan.train_subjects.size() || val.size() != plan.val_subjects.size() ||
        test.size() != plan.test_subjects.size())
        throw std::logic_error("split has duplicate subjects within a partition");
    for (const auto& s : val)
        if (train.count(s)) throw std::logic_error("subject in both train and val: " + s);
    for (const auto& s : test) {
        if (train.count(s)) throw std::logic_error("subject in both train and test: " + s);
        if (val.count(s)) throw std::logic_error("subject in both val and test: " + s);
    }
    std::set<std::string> pool(train.begin(), train.end());
    pool.insert(val.begin(), val.end());
    std::set<std::string> covered;
    for (const auto& fold : plan.folds)
        for (const auto& s : fold) {
            if (!pool.count(s)) throw std::logic_error("fold subject outside train+val: " + s);
            if (!covered.insert(s).second) throw std::logic_error("subject in two folds: " + s);
        }
    if (covered.size() != pool.size()) throw std::logic_error("folds do not cover all train+val subjects");
}

inline void save_split(const SplitPlan& plan, const std::string& path) {
    check_split_invariants(plan);
    std::ostringstream out;
    out << "botkit-split v1\n"
        << "task=" << task_name(plan.task) << '\n'
        << "seed=" << plan.seed << '\n';
    auto emit = [&out](const std::string& key, const std::vector<std::string>& subjects) {
        out << key << '=';
        for (std::size_t i = 0; i < subjects.size(); ++i) {
            detail::check_token(subjects[i], "subject_id");
            out << (i ? " " : "") << subjects[i];
        }
        out << '\n';
    };
    emit("train", plan.train_subjects);
    emit("val", plan.val_subjects);
    emit("test", plan.test_subjects);
    for (std::size_t f = 0; f < plan.folds.size(); ++f) emit("fold" + std::to_string(f), plan.folds[f]);
    write_text_file(path, out.str());
}

inline SplitPlan load_split(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line) || trim(line) != "botkit-split v1")
        throw std::runtime_error("split file has bad magic line: " + path);
    SplitPlan plan;
    auto tokens = [](const std::string& s) {
        std::vector<std::string> out;
        for (auto& t : split(s, ' '))
            if (!t.empty()) out.push_back(t);
        return out;
    };
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error(path + ": malformed split line '" + line + "'");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        if (key == "task") {
            plan.task = parse_task(value);
        } else if (key == "seed") {
            plan.seed = std::stoull(value);
        } else if (key == "train") {
            plan.train_subjects = tokens(value);
        } else if (key == "val") {
            plan.val_subjects = tokens(value);
        } else if (key == "test") {
            plan.test_subjects = tokens(value);
        } else if (key.rfind("fold", 0) == 0) {
            std::size_t idx = static_cast<std::size_t>(std::stoul(key.substr(4)));
            if (plan.folds.size() <= idx) plan.folds.resize(idx + 1);
            plan.folds[idx] = tokens(value);
        } else {
            throw std::runtime_error(path + ": unknown split key '" + key + "'");
        }
    }
    check_split_invariants(plan);
    return plan;
}

// ---------------------------------------------------------------------------
// Task streams

// Membership role of a subject under a concrete fold of a plan.
enum class StreamRole { fold_train, fold_val, holdout };

// Binary samples for one slice index under one fold: fold_train collects the
// training-side folds (augmented by the caller), fold_val the held-out fold,
// holdout the untouched test subjects.
inline std::vector<SliceSample> slice_stream(const std::vector<ScanSlices>& scans, const SplitPlan& plan,
                                             int slice_index, std::size_t fold, StreamRole role) {
    if (fold >= plan.folds.size() && role != StreamRole::holdout)
        throw std::invalid_argument("fold index out of range");
    std::set<std::string> members;
    if (role == StreamRole::holdout) {
        members.insert(plan.test_subjects.begin(), plan.test_subjects.end());
    } else {
        for (std::size_t f = 0; f < plan.folds.size(); ++f) {
            bool val_fold = (f == fold);
            if ((role == StreamRole::fold_val) == val_fold)
                members.insert(plan.folds[f].begin(), plan.folds[f].end());
        }
    }
    std::vector<SliceSample> out;
    for (const auto& scan : scans) {
        if (!members.count(scan.subject_id)) continue;
        auto lbl = task_label(plan.task, scan.label);
        if (!lbl) continue;
        if (slice_index < 0 || static_cast<std::size_t>(slice_index) >= scan.slices.size())
            throw std::invalid_argument("scan " + scan.scan_id + " has no slice " + std::to_string(slice_index));
        SliceSample s;
        s.subject_id = scan.subject_id;
        s.scan_id = scan.scan_id;
        s.slice_index = slice_index;
        s.pixels = scan.slices[static_cast<std::size_t>(slice_index)];
        s.label = *lbl;
        out.push_back(std::move(s));
    }
    return out;
}

// Stream-level leakage guard: the subject sets behind train/val/test sample
// streams must be pairwise disjoint.
inline void check_stream_disjoint(const std::vector<SliceSample>& train, const std::vector<SliceSample>& val,
                                  const std::vector<SliceSample>& test) {
    auto subjects = [](const std::vector<SliceSample>& v) {
        std::set<std::string> s;
        for (const auto& x : v) s.insert(x.subject_id);
        return s;
    };
    auto tr = subjects(train), va = subjects(val), te = subjects(test);
    for (const auto& s : va)
        if (tr.count(s)) throw std::logic_error("stream leakage: subject " + s + " in train and val");
    for (const auto& s : te)
        if (tr.count(s) || va.count(s)) throw std::logic_error("stream leakage: subject " + s + " in test and train/val");
}

// ---------------------------------------------------------------------------
// Synthetic volumes

// Class signal: an ellipsoid of radius and intensity drawn per subject from
// the given ranges, centered near the volume middle, over background noise.
// Central coronal slices cut through the ellipsoid, so the slice mean carries
// the class when radius ranges are disjoint; identical profiles give the null
// control with no learnable signal.
struct ClassProfile {
    double radius_lo = 5.0;
    double radius_hi = 8.0;
    double intensity_lo = 0.6;
    double intensity_hi = 0.9;
    double noise_sigma = 0.02;
};

inline Volume generate_synthetic_volume(const ClassProfile& profile, const std::string& subject_id,
                                        const std::string& scan_id, Diagnosis label, std::uint64_t seed,
                                        std::size_t extent = 64) {
    if (extent < 10) throw std::invalid_argument("volume extent must be at least 10");
    if (profile.radius_lo <= 0 || profile.radius_hi < profile.radius_lo)
        throw std::invalid_argument("ellipsoid radius range is invalid");
    Volume v;
    v.subject_id = subject_id;
    v.scan_id = scan_id;
    v.label = label;
    v.extents = {extent, extent, extent};
    v.voxels.assign(extent * extent * extent, 0.0f);

    // Anatomy depends only on (subject, seed) so every scan of a subject shares
    // structure; noise additionally mixes in the scan so repeat scans differ.
    std::mt19937_64 anatomy_rng(mix_seed(seed, fnv1a(subject_id)));
    std::mt19937_64 noise_rng(mix_seed(seed, fnv1a(subject_id), fnv1a(scan_id)));

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double radius = profile.radius_lo + (profile.radius_hi - profile.radius_lo) * unit(anatomy_rng);
    double intensity = profile.intensity_lo + (profile.intensity_hi - profile.intensity_lo) * unit(anatomy_rng);
    double half = static_cast<double>(extent) / 2.0;
    std::array<double, 3> center{}, axes{};
    for (int i = 0; i < 3; ++i) center[i] = half + (unit(anatomy_rng) - 0.5) * 2.0;
    for (int i = 0; i < 3; ++i) axes[i] = radius * (0.97 + 0.06 * unit(anatomy_rng));

    std::normal_distribution<double> noise(0.0, profile.noise_sigma);
    for (std::size_t s = 0; s < extent; ++s)
        for (std::size_t c = 0; c < extent; ++c)
            for (std::size_t a = 0; a < extent; ++a) {
                double ds = (static_cast<double>(s) - center[0]) / axes[0];
                double dc = (static_cast<double>(c) - center[1]) / axes[1];
                double da = (static_cast<double>(a) - center[2]) / axes[2];
                double value = 0.1 + noise(noise_rng);
                if (ds * ds + dc * dc + da * da <= 1.0) value += intensity;
                v.at(s, c, a) = static_cast<float>(value);
            }
    return v;
}

// Profile pair used by the synthetic generator CLI: disjoint radius ranges by
// default (separable), identical ranges when null_signal is set. Worst-case
// blob half-extent (1.05 * radius_hi + 1 voxel center jitter) stays under 16,
// so both classes keep a dark surround inside a 32-pixel center crop of a
// 64-voxel volume and min-max normalization preserves the size contrast.
inline std::pair<ClassProfile, ClassProfile> synthetic_profiles(bool null_signal) {
    ClassProfile small;  // class 0
    small.radius_lo = 4.0;
    small.radius_hi = 5.0;
    ClassProfile large = small;  // class 1
    if (!null_signal) {
        large.radius_lo = 12.0;
        large.radius_hi = 13.0;
    }
    return {small, large};
}

}  // namespace botkit
