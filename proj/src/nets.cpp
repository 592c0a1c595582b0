#include "pdabench/nets.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "pdabench/errors.hpp"
#include "pdabench/numerics.hpp"
#include "pdabench/rng.hpp"

namespace pdabench {

namespace {

Linear init_linear(int in, int out, double lr_mult, const std::string& name, Rng& rng) {
    Linear l;
    Tensor w(in, out);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : w.data) v = bound * (2.0 * rng.uniform() - 1.0);
    l.w = Parameter(std::move(w), name + ".w", lr_mult);
    l.b = Parameter(Tensor(1, out), name + ".b", lr_mult);
    return l;
}

int linear_forward(Tape& t, Linear& l, int x) {
    return t.add_rowvec(t.matmul(x, t.leaf(l.w)), t.leaf(l.b));
}

Tensor linear_infer(const Linear& l, const Tensor& x) {
    Tensor y = matmul(x, l.w.value);
    for (int i = 0; i < y.rows; ++i)
        for (int j = 0; j < y.cols; ++j) y(i, j) += l.b.value(0, j);
    return y;
}

} // namespace

std::vector<Parameter*> ModelBundle::params() {
    std::vector<Parameter*> out;
    for (Linear& l : backbone) {
        out.push_back(&l.w);
        out.push_back(&l.b);
    }
    out.push_back(&bottleneck.w);
    out.push_back(&bottleneck.b);
    out.push_back(&classifier.w);
    out.push_back(&classifier.b);
    return out;
}

std::vector<Parameter*> Mlp::params() {
    std::vector<Parameter*> out;
    for (Linear& l : layers) {
        out.push_back(&l.w);
        out.push_back(&l.b);
    }
    return out;
}

ModelBundle init_bundle(const NetDims& dims, std::uint64_t seed) {
    if (dims.in_dim < 1 || dims.bottleneck < 1 || dims.num_classes < 1)
        throw ConfigError("init_bundle: invalid dimensions");
    Rng rng(seed);
    ModelBundle m;
    m.dims = dims;
    int prev = dims.in_dim;
    int li = 0;
    for (int h : dims.backbone_hidden) {
        m.backbone.push_back(init_linear(prev, h, 1.0, "backbone" + std::to_string(li++), rng));
        prev = h;
    }
    m.bottleneck = init_linear(prev, dims.bottleneck, 10.0, "bottleneck", rng);
    m.classifier = init_linear(dims.bottleneck, dims.num_classes, 10.0, "classifier", rng);
    return m;
}

Mlp init_mlp(int in_dim, const std::vector<int>& hidden, std::uint64_t seed) {
    Rng rng(seed);
    Mlp m;
    int prev = in_dim;
    int li = 0;
    for (int h : hidden) {
        m.layers.push_back(init_linear(prev, h, 1.0, "mlp" + std::to_string(li++), rng));
        prev = h;
    }
    m.layers.push_back(init_linear(prev, 1, 1.0, "mlp_out", rng));
    return m;
}

int forward_features(Tape& t, ModelBundle& m, int x) {
    if (t.value(x).cols != m.dims.in_dim)
        throw ConfigError("forward_features: input dim mismatch");
    int h = x;
    for (Linear& l : m.backbone) h = t.relu(linear_forward(t, l, h));
    return linear_forward(t, m.bottleneck, h);
}

int forward_logits(Tape& t, ModelBundle& m, int x) {
    return forward_logits_from_features(t, m, forward_features(t, m, x));
}

int forward_logits_from_features(Tape& t, ModelBundle& m, int z) {
    return linear_forward(t, m.classifier, z);
}

MlpForward forward_mlp(Tape& t, Mlp& m, int x) {
    MlpForward f;
    int h = x;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const int wid = t.leaf(m.layers[i].w);
        f.weight_ids.push_back(wid);
        int pre = t.add_rowvec(t.matmul(h, wid), t.leaf(m.layers[i].b));
        if (i + 1 < m.layers.size()) {
            f.pre_acts.push_back(pre);
            h = t.relu(pre);
        } else {
            f.out = pre;
        }
    }
    return f;
}

int mlp_input_grad(Tape& t, Mlp& m, int x, const MlpForward& fwd) {
    const int n = t.value(x).rows;
    const std::size_t last = m.layers.size() - 1;
    // Walk the chain rule backwards through the layers, carrying the row
    // vector of sensitivities; relu masks are constants of the current
    // activation pattern.
    int v = t.broadcast_rows(t.transpose(fwd.weight_ids[last]), n); // n x H_last
    for (std::size_t li = last; li-- > 0;) {
        const Tensor& pre = t.value(fwd.pre_acts[li]);
        Tensor mask(pre.rows, pre.cols);
        for (int i = 0; i < pre.size(); ++i)
            mask.data[static_cast<std::size_t>(i)] =
                pre.data[static_cast<std::size_t>(i)] > 0.0 ? 1.0 : 0.0;
        v = t.matmul_nt(t.mul(v, t.constant(mask)), fwd.weight_ids[li]);
    }
    return v;
}

Tensor infer_features(const ModelBundle& m, const Tensor& x) {
    if (x.cols != m.dims.in_dim) throw ConfigError("infer_features: input dim mismatch");
    Tensor h = x;
    for (const Linear& l : m.backbone) {
        h = linear_infer(l, h);
        for (double& v : h.data) v = v > 0.0 ? v : 0.0;
    }
    return linear_infer(m.bottleneck, h);
}

Tensor infer_logits(const ModelBundle& m, const Tensor& x) {
    return linear_infer(m.classifier, infer_features(m, x));
}

Tensor infer_logits_from_features(const ModelBundle& m, const Tensor& z) {
    return linear_infer(m.classifier, z);
}

Tensor infer_mlp(const Mlp& m, const Tensor& x) {
    Tensor h = x;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        h = linear_infer(m.layers[i], h);
        if (i + 1 < m.layers.size())
            for (double& v : h.data) v = v > 0.0 ? v : 0.0;
    }
    return h;
}

Tensor infer_domain_prob(const Mlp& disc, const Tensor& feats) {
    Tensor out = infer_mlp(disc, feats);
    for (double& v : out.data) {
        const double p = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        v = std::min(std::max(p, Numerics::prob_floor), 1.0 - Numerics::prob_floor);
    }
    return out;
}

namespace {

constexpr char kMagic[4] = {'P', 'D', 'A', 'C'};

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is, const char* what) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (is.gcount() != 4) throw FormatError(std::string("checkpoint: truncated ") + what);
    return v;
}

void write_param(std::ostream& os, const Parameter& p) {
    write_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_u32(os, static_cast<std::uint32_t>(p.value.rows));
    write_u32(os, static_cast<std::uint32_t>(p.value.cols));
    os.write(reinterpret_cast<const char*>(&p.lr_multiplier), sizeof(double));
    os.write(reinterpret_cast<const char*>(p.value.data.data()),
             static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
}

void read_param(std::istream& is, Parameter& p) {
    const std::uint32_t name_len = read_u32(is, "name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (is.gcount() != static_cast<std::streamsize>(name_len))
        throw FormatError("checkpoint: truncated name");
    const std::uint32_t rows = read_u32(is, "rows");
    const std::uint32_t cols = read_u32(is, "cols");
    double lr_mult = 1.0;
    is.read(reinterpret_cast<char*>(&lr_mult), sizeof(double));
    if (is.gcount() != sizeof(double)) throw FormatError("checkpoint: truncated multiplier");
    Tensor v(static_cast<int>(rows), static_cast<int>(cols));
    const std::streamsize want = static_cast<std::streamsize>(v.data.size() * sizeof(double));
    is.read(reinterpret_cast<char*>(v.data.data()), want);
    if (is.gcount() != want)
        throw FormatError("checkpoint: truncated values for " + name);
    if (name != p.name || static_cast<int>(rows) != p.value.rows ||
        static_cast<int>(cols) != p.value.cols)
        throw FormatError("checkpoint: parameter mismatch, expected " + p.name + " got " + name);
    p.value = std::move(v);
    p.lr_multiplier = lr_mult;
}

} // namespace

void save_checkpoint(const std::string& path, ModelBundle& bundle,
                     const std::map<std::string, std::string>& sidecar) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, 4);
    write_u32(os, 1u);
    // dims block so the loader can rebuild the shapes
    write_u32(os, static_cast<std::uint32_t>(bundle.dims.in_dim));
    write_u32(os, static_cast<std::uint32_t>(bundle.dims.backbone_hidden.size()));
    for (int h : bundle.dims.backbone_hidden) write_u32(os, static_cast<std::uint32_t>(h));
    write_u32(os, static_cast<std::uint32_t>(bundle.dims.bottleneck));
    write_u32(os, static_cast<std::uint32_t>(bundle.dims.num_classes));
    auto params = bundle.params();
    write_u32(os, static_cast<std::uint32_t>(params.size()));
    for (Parameter* p : params) write_param(os, *p);
    if (!os) throw FormatError("checkpoint: write failed for " + path);

    nlohmann::json j;
    for (const auto& [k, v] : sidecar) j[k] = v;
    std::ofstream ms(path + ".json");
    ms << j.dump(2) << "\n";
}

ModelBundle load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("checkpoint: bad magic in " + path);
    const std::uint32_t version = read_u32(is, "version");
    if (version != 1) throw FormatError("checkpoint: unsupported version");

    NetDims dims;
    dims.in_dim = static_cast<int>(read_u32(is, "in_dim"));
    const std::uint32_t depth = read_u32(is, "backbone depth");
    dims.backbone_hidden.clear();
    for (std::uint32_t i = 0; i < depth; ++i)
        dims.backbone_hidden.push_back(static_cast<int>(read_u32(is, "hidden width")));
    dims.bottleneck = static_cast<int>(read_u32(is, "bottleneck"));
    dims.num_classes = static_cast<int>(read_u32(is, "classes"));

    ModelBundle bundle = init_bundle(dims, 0);
    auto params = bundle.params();
    const std::uint32_t count = read_u32(is, "parameter count");
    if (count != params.size()) throw FormatError("checkpoint: parameter count mismatch");
    for (Parameter* p : params) read_param(is, *p);
    return bundle;
}

} // namespace pdabench
