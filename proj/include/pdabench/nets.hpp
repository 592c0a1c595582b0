#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "pdabench/autodiff.hpp"

namespace pdabench {

struct NetDims {
    int in_dim = 16;
    std::vector<int> backbone_hidden = {128, 128};
    int bottleneck = 256;
    int num_classes = 10;
};

struct Linear {
    Parameter w; // in x out
    Parameter b; // 1 x out
};

// Feature extractor (relu MLP standing in for a pretrained backbone), linear
// bottleneck and linear classifier. Backbone parameters carry lr x1, the
// freshly initialised bottleneck/classifier lr x10.
struct ModelBundle {
    NetDims dims;
    std::deque<Linear> backbone;
    Linear bottleneck;
    Linear classifier;

    std::vector<Parameter*> params();
};

// Generic relu MLP with a single output column, used for the domain
// discriminator and the critic.
struct Mlp {
    std::deque<Linear> layers; // relu between layers, last layer linear
    std::vector<Parameter*> params();
};

struct Critic {
    Mlp net;
    double a_low = -5.0;
    double a_up = 5.0;
};

ModelBundle init_bundle(const NetDims& dims, std::uint64_t seed);
Mlp init_mlp(int in_dim, const std::vector<int>& hidden, std::uint64_t seed);

// Tape forwards.
int forward_features(Tape& t, ModelBundle& m, int x);
int forward_logits(Tape& t, ModelBundle& m, int x);
int forward_logits_from_features(Tape& t, ModelBundle& m, int z);

struct MlpForward {
    int out = -1;                 // n x 1 raw output
    std::vector<int> pre_acts;    // hidden pre-activations
    std::vector<int> weight_ids;  // leaf node of each layer's weight
};
MlpForward forward_mlp(Tape& t, Mlp& m, int x);

// d(out)/d(input) as a tape expression (n x in_dim), treating the relu
// activation pattern as locally constant. Used for the gradient penalty.
int mlp_input_grad(Tape& t, Mlp& m, int x, const MlpForward& fwd);

// Plain inference (no tape).
Tensor infer_features(const ModelBundle& m, const Tensor& x);
Tensor infer_logits(const ModelBundle& m, const Tensor& x);
Tensor infer_logits_from_features(const ModelBundle& m, const Tensor& z);
Tensor infer_mlp(const Mlp& m, const Tensor& x);

// Stabilised probabilities, strictly inside (0, 1).
Tensor infer_domain_prob(const Mlp& disc, const Tensor& feats);

// Checkpoint container: magic "PDAC" | u32 version | u32 param count | per
// parameter: u32 name length + name bytes | u32 rows | u32 cols |
// f64 lr multiplier | rows*cols f64 values. A JSON sidecar (path + ".json")
// records method/hyper-parameters/seed/iteration.
void save_checkpoint(const std::string& path, ModelBundle& bundle,
                     const std::map<std::string, std::string>& sidecar);
ModelBundle load_checkpoint(const std::string& path);

} // namespace pdabench
