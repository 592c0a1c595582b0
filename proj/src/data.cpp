#include "pdabench/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "pdabench/errors.hpp"

namespace pdabench {

std::vector<int> LabeledSet::distinct_labels() const {
    std::set<int> s(labels.begin(), labels.end());
    return std::vector<int>(s.begin(), s.end());
}

void LabeledSet::validate() const {
    if (n() < 1) throw ConfigError("labeled set: empty");
    if (static_cast<int>(labels.size()) != n())
        throw ConfigError("labeled set: label count does not match feature rows");
    if (!features.all_finite()) throw ConfigError("labeled set: non-finite features");
    for (int y : labels)
        if (y < 0 || y >= k_universe)
            throw ConfigError("labeled set: label outside [0, k_universe)");
}

LabeledSet subset_of(const LabeledSet& set, const std::vector<int>& indices) {
    LabeledSet out;
    out.domain = set.domain;
    out.k_universe = set.k_universe;
    out.features = Tensor(static_cast<int>(indices.size()), set.dim());
    out.labels.reserve(indices.size());
    int r = 0;
    for (int idx : indices) {
        if (idx < 0 || idx >= set.n()) throw ConfigError("subset_of: index out of range");
        for (int j = 0; j < set.dim(); ++j) out.features(r, j) = set.features(idx, j);
        out.labels.push_back(set.labels[static_cast<std::size_t>(idx)]);
        ++r;
    }
    return out;
}

void PartialShiftSpec::validate() const {
    if (d < 1) throw ConfigError("spec: d must be >= 1");
    if (k_target >= k_source) throw ConfigError("spec: k_target must be < k_source");
    if (k_target < 1) throw ConfigError("spec: k_target must be >= 1");
    if (n_per_class_source < 1 || n_per_class_target < 1)
        throw ConfigError("spec: per-class counts must be >= 1");
    if (noise_sigma <= 0.0) throw ConfigError("spec: noise sigma must be positive");
}

namespace {

// Rotate within coordinate planes (0,1), (2,3), ...
void rotate_pairs(std::vector<double>& x, double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    for (std::size_t k = 0; k + 1 < x.size(); k += 2) {
        const double a = x[k];
        const double b = x[k + 1];
        x[k] = c * a - s * b;
        x[k + 1] = s * a + c * b;
    }
}

} // namespace

std::pair<LabeledSet, LabeledSet> gen_partial_blobs(const PartialShiftSpec& spec,
                                                    std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    const int d = spec.d;

    // Draw order is fixed: means, translation, per-class jitter, source
    // samples, target samples. Same (spec, seed) gives bitwise-equal output.
    std::vector<std::vector<double>> means(static_cast<std::size_t>(spec.k_source),
                                           std::vector<double>(static_cast<std::size_t>(d)));
    for (auto& m : means)
        for (double& v : m) v = spec.mean_scale * rng.normal();

    std::vector<double> shift(static_cast<std::size_t>(d));
    double norm = 0.0;
    for (double& v : shift) {
        v = rng.normal();
        norm += v * v;
    }
    norm = std::sqrt(std::max(norm, 1e-12));
    for (double& v : shift) v *= spec.translation / norm;

    std::vector<std::vector<double>> jitter(static_cast<std::size_t>(spec.k_target),
                                            std::vector<double>(static_cast<std::size_t>(d)));
    for (auto& j : jitter)
        for (double& v : j) v = spec.class_jitter * rng.normal();

    LabeledSet source;
    source.domain = Domain::Source;
    source.k_universe = spec.k_source;
    source.features = Tensor(spec.k_source * spec.n_per_class_source, d);
    int row = 0;
    for (int c = 0; c < spec.k_source; ++c) {
        for (int s = 0; s < spec.n_per_class_source; ++s) {
            for (int j = 0; j < d; ++j)
                source.features(row, j) =
                    means[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] +
                    spec.noise_sigma * rng.normal();
            source.labels.push_back(c);
            ++row;
        }
    }

    LabeledSet target;
    target.domain = Domain::Target;
    target.k_universe = spec.k_source;
    target.features = Tensor(spec.k_target * spec.n_per_class_target, d);
    row = 0;
    std::vector<double> x(static_cast<std::size_t>(d));
    for (int c = 0; c < spec.k_target; ++c) {
        for (int s = 0; s < spec.n_per_class_target; ++s) {
            for (int j = 0; j < d; ++j)
                x[static_cast<std::size_t>(j)] =
                    means[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] +
                    spec.noise_sigma * rng.normal();
            rotate_pairs(x, spec.rotation);
            for (int j = 0; j < d; ++j)
                x[static_cast<std::size_t>(j)] += shift[static_cast<std::size_t>(j)] +
                                                  jitter[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
            if (spec.warp != 0.0 && d >= 2) x[1] += spec.warp * x[0] * x[0];
            for (int j = 0; j < d; ++j) target.features(row, j) = x[static_cast<std::size_t>(j)];
            target.labels.push_back(c);
            ++row;
        }
    }

    // standardize with source statistics (one shared mean/scale, mirroring
    // per-channel input normalization); the relative geometry of the shift is
    // untouched
    double mean = 0.0;
    for (double v : source.features.data) mean += v;
    mean /= source.features.size();
    double var = 0.0;
    for (double v : source.features.data) var += (v - mean) * (v - mean);
    var /= source.features.size();
    const double scale = 1.0 / std::sqrt(std::max(var, 1e-12));
    for (double& v : source.features.data) v = (v - mean) * scale;
    for (double& v : target.features.data) v = (v - mean) * scale;

    source.validate();
    target.validate();
    return {std::move(source), std::move(target)};
}

SplitIndices split_source(const LabeledSet& set, double ratio, std::uint64_t seed) {
    if (set.n() < 5) throw ConfigError("split_source: need at least 5 samples");
    if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split_source: ratio must be in (0,1)");
    Rng rng(seed);

    std::map<int, std::vector<int>> by_class;
    for (int i = 0; i < set.n(); ++i) by_class[set.labels[static_cast<std::size_t>(i)]].push_back(i);

    // Small classes are forced into train before allocating the rest.
    std::vector<int> small_train;
    std::vector<std::pair<int, std::vector<int>>> classes;
    for (auto& [label, idx] : by_class) {
        if (static_cast<int>(idx.size()) < 2) {
            std::cerr << "split_source: class " << label
                      << " has fewer than 2 samples; assigning it to train\n";
            small_train.insert(small_train.end(), idx.begin(), idx.end());
        } else {
            classes.emplace_back(label, idx);
        }
    }

    int total_train = static_cast<int>(std::lround(ratio * set.n()));
    total_train -= static_cast<int>(small_train.size());

    // Largest-remainder allocation of train counts per class.
    std::vector<int> counts(classes.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    int allocated = 0;
    for (std::size_t k = 0; k < classes.size(); ++k) {
        const double want = ratio * static_cast<double>(classes[k].second.size());
        counts[k] = static_cast<int>(std::floor(want));
        // keep at least one sample on each side
        counts[k] = std::max(1, std::min(counts[k], static_cast<int>(classes[k].second.size()) - 1));
        allocated += counts[k];
        remainders.emplace_back(want - std::floor(want), k);
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t r = 0; allocated < total_train && r < remainders.size(); ++r) {
        const std::size_t k = remainders[r].second;
        if (counts[k] < static_cast<int>(classes[k].second.size()) - 1) {
            ++counts[k];
            ++allocated;
        }
    }

    SplitIndices out;
    out.train = small_train;
    for (std::size_t k = 0; k < classes.size(); ++k) {
        auto idx = classes[k].second;
        rng.shuffle(idx);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (static_cast<int>(i) < counts[k])
                out.train.push_back(idx[i]);
            else
                out.val.push_back(idx[i]);
        }
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    return out;
}

std::vector<int> sample_uniform_batch(const LabeledSet& set, int batch, Rng& rng) {
    if (batch > set.n()) throw ConfigError("sample_uniform_batch: batch larger than the set");
    std::vector<int> pool(static_cast<std::size_t>(set.n()));
    std::iota(pool.begin(), pool.end(), 0);
    // partial Fisher-Yates: the first `batch` entries are the draw
    for (int i = 0; i < batch; ++i) {
        const int j = i + rng.uniform_int(set.n() - i);
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    pool.resize(static_cast<std::size_t>(batch));
    return pool;
}

std::vector<int> sample_stratified_batch(const LabeledSet& set, int batch, Rng& rng) {
    std::map<int, std::vector<int>> by_class;
    for (int i = 0; i < set.n(); ++i) by_class[set.labels[static_cast<std::size_t>(i)]].push_back(i);
    const int k = static_cast<int>(by_class.size());
    if (batch < k) throw ConfigError("sample_stratified_batch: batch smaller than class count");

    const int base = batch / k;
    const int extra = batch % k;

    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(batch));
    int ci = 0;
    for (auto& [label, idx] : by_class) {
        (void)label;
        const int want = base + (ci < extra ? 1 : 0);
        ++ci;
        std::vector<int> pool = idx;
        const int pool_n = static_cast<int>(pool.size());
        for (int t = 0; t < want; ++t) {
            if (t < pool_n) { // without replacement while the class lasts
                const int j = t + rng.uniform_int(pool_n - t);
                std::swap(pool[static_cast<std::size_t>(t)], pool[static_cast<std::size_t>(j)]);
                out.push_back(pool[static_cast<std::size_t>(t)]);
            } else { // tiny class: re-draw with replacement
                out.push_back(pool[static_cast<std::size_t>(rng.uniform_int(pool_n))]);
            }
        }
    }
    return out;
}

std::vector<int> pick_labeled_subset(const LabeledSet& target, SubsetMode mode, int k,
                                     std::uint64_t seed) {
    Rng rng(seed);
    if (mode == SubsetMode::OneShot) {
        std::map<int, std::vector<int>> by_class;
        for (int i = 0; i < target.n(); ++i)
            by_class[target.labels[static_cast<std::size_t>(i)]].push_back(i);
        std::vector<int> out;
        for (auto& [label, idx] : by_class) {
            (void)label;
            out.push_back(idx[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(idx.size())))]);
        }
        return out;
    }
    if (k > target.n()) throw ConfigError("pick_labeled_subset: k larger than the target set");
    auto out = sample_uniform_batch(target, k, rng);
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

constexpr char kMagic[4] = {'P', 'D', 'A', 'E'};

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is, std::size_t& offset, const char* what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() != 4)
        throw FormatError(std::string("embeddings: truncated ") + what + " at byte " +
                          std::to_string(offset) + ": expected 4 bytes, got " +
                          std::to_string(is.gcount()));
    offset += 4;
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace

void save_embeddings(const std::string& path, const LabeledSet& set,
                     const EmbeddingManifest& manifest) {
    set.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("embeddings: cannot open " + path + " for writing");
    os.write(kMagic, 4);
    write_u32(os, 1u);
    write_u32(os, static_cast<std::uint32_t>(set.n()));
    write_u32(os, static_cast<std::uint32_t>(set.dim()));
    write_u32(os, static_cast<std::uint32_t>(set.k_universe));
    const unsigned char has_labels = 1;
    os.write(reinterpret_cast<const char*>(&has_labels), 1);
    std::vector<float> rowbuf(static_cast<std::size_t>(set.dim()));
    for (int i = 0; i < set.n(); ++i) {
        for (int j = 0; j < set.dim(); ++j)
            rowbuf[static_cast<std::size_t>(j)] = static_cast<float>(set.features(i, j));
        os.write(reinterpret_cast<const char*>(rowbuf.data()),
                 static_cast<std::streamsize>(rowbuf.size() * sizeof(float)));
    }
    for (int y : set.labels) {
        const std::int32_t v = y;
        os.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    if (!os) throw FormatError("embeddings: write failed for " + path);

    nlohmann::json j;
    j["domain"] = manifest.domain;
    j["class_names"] = manifest.class_names;
    j["provenance"] = manifest.provenance;
    std::ofstream ms(path + ".json");
    ms << j.dump(2) << "\n";
}

LabeledSet load_embeddings(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("embeddings: cannot open " + path);
    std::size_t offset = 0;

    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("embeddings: bad magic at byte 0 in " + path);
    offset += 4;

    const std::uint32_t version = read_u32(is, offset, "version");
    if (version != 1)
        throw FormatError("embeddings: unsupported version " + std::to_string(version));
    const std::uint32_t n = read_u32(is, offset, "row count");
    const std::uint32_t d = read_u32(is, offset, "feature dim");
    const std::uint32_t k = read_u32(is, offset, "class universe");
    if (n == 0) throw FormatError("embeddings: zero-row file rejected");
    if (d == 0) throw FormatError("embeddings: zero feature dimension");

    unsigned char has_labels = 0;
    is.read(reinterpret_cast<char*>(&has_labels), 1);
    if (is.gcount() != 1)
        throw FormatError("embeddings: truncated flags at byte " + std::to_string(offset));
    offset += 1;

    LabeledSet set;
    set.k_universe = static_cast<int>(k);
    set.features = Tensor(static_cast<int>(n), static_cast<int>(d));
    std::vector<float> buf(static_cast<std::size_t>(n) * d);
    const std::streamsize want =
        static_cast<std::streamsize>(buf.size() * sizeof(float));
    is.read(reinterpret_cast<char*>(buf.data()), want);
    if (is.gcount() != want)
        throw FormatError("embeddings: truncated features at byte " + std::to_string(offset) +
                          ": expected " + std::to_string(want) + " bytes, got " +
                          std::to_string(is.gcount()));
    offset += static_cast<std::size_t>(want);
    for (std::size_t i = 0; i < buf.size(); ++i) set.features.data[i] = static_cast<double>(buf[i]);

    if (has_labels) {
        std::vector<std::int32_t> lab(n);
        const std::streamsize lwant = static_cast<std::streamsize>(n * sizeof(std::int32_t));
        is.read(reinterpret_cast<char*>(lab.data()), lwant);
        if (is.gcount() != lwant)
            throw FormatError("embeddings: truncated labels at byte " + std::to_string(offset) +
                              ": expected " + std::to_string(lwant) + " bytes, got " +
                              std::to_string(is.gcount()));
        set.labels.assign(lab.begin(), lab.end());
    } else {
        set.labels.assign(n, 0);
    }

    // domain tag from the manifest when present
    try {
        const auto manifest = load_embedding_manifest(path);
        set.domain = manifest.domain == "target" ? Domain::Target : Domain::Source;
    } catch (const FormatError&) {
        set.domain = Domain::Source;
    }
    set.validate();
    return set;
}

EmbeddingManifest load_embedding_manifest(const std::string& path) {
    std::ifstream ms(path + ".json");
    if (!ms) throw FormatError("embeddings: missing manifest " + path + ".json");
    nlohmann::json j;
    try {
        ms >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("embeddings: bad manifest: ") + e.what());
    }
    EmbeddingManifest m;
    m.domain = j.value("domain", "source");
    m.provenance = j.value("provenance", "");
    if (j.contains("class_names")) m.class_names = j["class_names"].get<std::vector<std::string>>();
    return m;
}

} // namespace pdabench
