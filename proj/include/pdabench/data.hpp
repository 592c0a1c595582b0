#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pdabench/rng.hpp"
#include "pdabench/tensor.hpp"

namespace pdabench {

enum class Domain { Source, Target };

struct LabeledSet {
    Tensor features;         // n x d
    std::vector<int> labels; // class ids in [0, k_universe)
    Domain domain = Domain::Source;
    int k_universe = 0;

    int n() const { return features.rows; }
    int dim() const { return features.cols; }
    std::vector<int> distinct_labels() const;
    void validate() const;
};

LabeledSet subset_of(const LabeledSet& set, const std::vector<int>& indices);

// Synthetic partial-shift task: k_source Gaussian clusters; the target keeps
// only classes 0..k_target-1 and sees every cluster through a shared rotation
// and translation plus per-class jitter and an optional quadratic warp.
struct PartialShiftSpec {
    int d = 16;
    int k_source = 10;
    int k_target = 6;
    int n_per_class_source = 60;
    int n_per_class_target = 50;
    double rotation = 0.5;      // radians, applied pairwise to coordinate planes
    double translation = 1.0;   // length of the shared offset
    double class_jitter = 0.2;  // per-class offset scale
    double noise_sigma = 0.45;  // cluster spread
    double warp = 0.0;          // x1 += warp * x0^2 when d >= 2
    double mean_scale = 2.0;    // cluster-centre spread

    void validate() const;
};

std::pair<LabeledSet, LabeledSet> gen_partial_blobs(const PartialShiftSpec& spec,
                                                    std::uint64_t seed);

struct SplitIndices {
    std::vector<int> train;
    std::vector<int> val;
};

// Stratified shuffle split; per-class train counts are allocated by largest
// remainder so |train| == round(ratio * n) exactly. Classes with fewer than 2
// samples go wholly to train (with a warning on stderr).
SplitIndices split_source(const LabeledSet& set, double ratio, std::uint64_t seed);

// B draws without replacement from [0, set.n()).
std::vector<int> sample_uniform_batch(const LabeledSet& set, int batch, Rng& rng);

// Near-equal per-class counts (difference at most 1); the remainder goes to
// the first classes in ascending label order.
std::vector<int> sample_stratified_batch(const LabeledSet& set, int batch, Rng& rng);

enum class SubsetMode { OneShot, RndK };

// one_shot: one index per distinct class; rnd_k: k distinct uniform indices.
std::vector<int> pick_labeled_subset(const LabeledSet& target, SubsetMode mode, int k,
                                     std::uint64_t seed);

// Binary embedding container, little-endian:
//   magic "PDAE" | u32 version=1 | u32 n | u32 d | u32 k_universe |
//   u8 has_labels | n*d f32 features | [n i32 labels]
// A sibling JSON manifest (path + ".json") records the domain tag, class
// names and a provenance string. Features are stored as f32 and promoted to
// f64 on load.
struct EmbeddingManifest {
    std::string domain = "source";
    std::vector<std::string> class_names;
    std::string provenance;
};

void save_embeddings(const std::string& path, const LabeledSet& set,
                     const EmbeddingManifest& manifest);
LabeledSet load_embeddings(const std::string& path);
EmbeddingManifest load_embedding_manifest(const std::string& path);

} // namespace pdabench
