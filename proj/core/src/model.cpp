#include "icda/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace icda {

namespace {

void init_dense(DenseLayer& layer, Rng& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(layer.w.cols));
    for (double& v : layer.w.data) v = rng.uniform(-bound, bound);
    // Biases start at zero.
}

}  // namespace

Backbone make_backbone(int in_dim, const std::vector<int>& widths, Rng& rng) {
    ICDA_REQUIRE(in_dim >= 1, "make_backbone: bad input dim");
    ICDA_REQUIRE(!widths.empty(), "make_backbone: need at least one layer");
    Backbone bb;
    int prev = in_dim;
    for (int w : widths) {
        ICDA_REQUIRE(w >= 1, "make_backbone: bad layer width");
        DenseLayer layer;
        layer.w = Matrix(static_cast<std::size_t>(w), static_cast<std::size_t>(prev));
        layer.b = Vec(static_cast<std::size_t>(w), 0.0);
        init_dense(layer, rng);
        bb.layers.push_back(std::move(layer));
        prev = w;
    }
    return bb;
}

LinearHead make_head(int classes, int feature_dim, Rng& rng) {
    ICDA_REQUIRE(classes >= 2, "make_head: need C >= 2");
    LinearHead head;
    head.w = Matrix(static_cast<std::size_t>(classes), static_cast<std::size_t>(feature_dim));
    head.b = Vec(static_cast<std::size_t>(classes), 0.0);
    double bound = 1.0 / std::sqrt(static_cast<double>(feature_dim));
    for (double& v : head.w.data) v = rng.uniform(-bound, bound);
    return head;
}

ForwardCache forward(const Backbone& bb, const LinearHead& head, const Matrix& x) {
    ICDA_REQUIRE(x.cols == bb.in_dim(), "forward: input dim mismatch");
    ICDA_REQUIRE(head.w.cols == bb.out_dim(), "forward: head/backbone dim mismatch");
    std::size_t n = x.rows;

    ForwardCache cache;
    cache.x = x;
    const Matrix* a = &cache.x;
    for (const DenseLayer& layer : bb.layers) {
        std::size_t width = layer.w.rows;
        Matrix z(n, width);
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = a->row(i);
            double* zi = z.row(i);
            for (std::size_t j = 0; j < width; ++j)
                zi[j] = dot(layer.w.row(j), row, layer.w.cols) + layer.b[j];
        }
        cache.pre.push_back(std::move(z));
        a = &cache.pre.back();
    }
    // Features are relu of the last pre-activation; intermediate activations
    // are recomputed in backward rather than stored twice.
    const Matrix& last = cache.pre.back();
    cache.features = Matrix(n, last.cols);
    for (std::size_t i = 0; i < last.data.size(); ++i)
        cache.features.data[i] = last.data[i] > 0.0 ? last.data[i] : 0.0;

    cache.logits = Matrix(n, head.w.rows);
    for (std::size_t i = 0; i < n; ++i) {
        const double* h = cache.features.row(i);
        double* u = cache.logits.row(i);
        for (std::size_t c = 0; c < head.w.rows; ++c)
            u[c] = dot(head.w.row(c), h, head.w.cols) + head.b[c];
    }
    return cache;
}

namespace {

// Activation of layer l's input: the raw batch for l=0, relu(pre[l-1]) after.
Matrix layer_input(const ForwardCache& cache, std::size_t l) {
    if (l == 0) return cache.x;
    const Matrix& z = cache.pre[l - 1];
    Matrix a(z.rows, z.cols);
    for (std::size_t i = 0; i < z.data.size(); ++i)
        a.data[i] = z.data[i] > 0.0 ? z.data[i] : 0.0;
    return a;
}

}  // namespace

std::vector<DenseLayer> backward_features(const Backbone& bb, const ForwardCache& cache,
                                          const Matrix& d_features) {
    ICDA_REQUIRE(cache.pre.size() == bb.layers.size(), "backward: cache/backbone mismatch");
    ICDA_REQUIRE(d_features.rows == cache.features.rows &&
                     d_features.cols == cache.features.cols,
                 "backward: d_features shape mismatch");
    std::size_t n = cache.x.rows;

    std::vector<DenseLayer> grads(bb.layers.size());
    Matrix d_act = d_features;
    for (std::size_t l = bb.layers.size(); l-- > 0;) {
        const DenseLayer& layer = bb.layers[l];
        const Matrix& z = cache.pre[l];
        // d_z = d_act masked by relu'(z).
        Matrix d_z(n, z.cols);
        for (std::size_t i = 0; i < z.data.size(); ++i)
            d_z.data[i] = z.data[i] > 0.0 ? d_act.data[i] : 0.0;

        Matrix a_in = layer_input(cache, l);
        DenseLayer g;
        g.w = Matrix(layer.w.rows, layer.w.cols);
        g.b = Vec(layer.b.size(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double* dzi = d_z.row(i);
            const double* ai = a_in.row(i);
            for (std::size_t j = 0; j < layer.w.rows; ++j) {
                if (dzi[j] == 0.0) continue;
                axpy(dzi[j], ai, g.w.row(j), layer.w.cols);
                g.b[j] += dzi[j];
            }
        }
        grads[l] = std::move(g);

        if (l > 0) {
            Matrix d_prev(n, layer.w.cols);
            for (std::size_t i = 0; i < n; ++i) {
                const double* dzi = d_z.row(i);
                double* out = d_prev.row(i);
                for (std::size_t j = 0; j < layer.w.rows; ++j)
                    if (dzi[j] != 0.0) axpy(dzi[j], layer.w.row(j), out, layer.w.cols);
            }
            d_act = std::move(d_prev);
        }
    }
    return grads;
}

ModelGrads backward(const Backbone& bb, const LinearHead& head, const ForwardCache& cache,
                    const Matrix& d_logits) {
    ICDA_REQUIRE(d_logits.rows == cache.logits.rows && d_logits.cols == cache.logits.cols,
                 "backward: d_logits shape mismatch");
    std::size_t n = cache.x.rows;
    std::size_t classes = head.w.rows;
    std::size_t h_dim = head.w.cols;

    ModelGrads grads;
    grads.d_w = Matrix(classes, h_dim);
    grads.d_b = Vec(classes, 0.0);
    Matrix d_features(n, h_dim);
    for (std::size_t i = 0; i < n; ++i) {
        const double* g = d_logits.row(i);
        const double* h = cache.features.row(i);
        double* df = d_features.row(i);
        for (std::size_t c = 0; c < classes; ++c) {
            if (g[c] == 0.0) continue;
            axpy(g[c], h, grads.d_w.row(c), h_dim);
            grads.d_b[c] += g[c];
            axpy(g[c], head.w.row(c), df, h_dim);
        }
    }
    grads.layers = backward_features(bb, cache, d_features);
    return grads;
}

double lr_at(const SgdConfig& cfg, int iteration) {
    double lr = cfg.learning_rate;
    for (const auto& [at, mult] : cfg.schedule)
        if (iteration >= at) lr *= mult;
    return lr;
}

SgdState make_sgd_state(const Backbone& bb, const LinearHead& head) {
    SgdState st;
    for (const DenseLayer& layer : bb.layers) {
        DenseLayer v;
        v.w = Matrix(layer.w.rows, layer.w.cols);
        v.b = Vec(layer.b.size(), 0.0);
        st.layer_velocity.push_back(std::move(v));
    }
    st.head_w_velocity = Matrix(head.w.rows, head.w.cols);
    st.head_b_velocity = Vec(head.b.size(), 0.0);
    return st;
}

namespace {

void sgd_tensor(double* param, const double* grad, double* vel, std::size_t n, double lr,
                double momentum, double wd) {
    for (std::size_t i = 0; i < n; ++i) {
        vel[i] = momentum * vel[i] + grad[i] + wd * param[i];
        param[i] -= lr * vel[i];
    }
}

}  // namespace

void sgd_step(Backbone& bb, LinearHead& head, const ModelGrads& grads, SgdState& state,
              const SgdConfig& cfg, int iteration) {
    ICDA_REQUIRE(grads.layers.size() == bb.layers.size(), "sgd_step: grad/layer mismatch");
    double lr = lr_at(cfg, iteration);
    for (std::size_t l = 0; l < bb.layers.size(); ++l) {
        DenseLayer& layer = bb.layers[l];
        const DenseLayer& g = grads.layers[l];
        DenseLayer& v = state.layer_velocity[l];
        ICDA_REQUIRE(g.w.same_shape(layer.w), "sgd_step: layer grad shape mismatch");
        sgd_tensor(layer.w.data.data(), g.w.data.data(), v.w.data.data(), layer.w.data.size(),
                   lr, cfg.momentum, cfg.weight_decay);
        sgd_tensor(layer.b.data(), g.b.data(), v.b.data(), layer.b.size(), lr, cfg.momentum,
                   0.0);
    }
    sgd_tensor(head.w.data.data(), grads.d_w.data.data(), state.head_w_velocity.data.data(),
               head.w.data.size(), lr, cfg.momentum, cfg.weight_decay);
    sgd_tensor(head.b.data(), grads.d_b.data(), state.head_b_velocity.data(), head.b.size(),
               lr, cfg.momentum, 0.0);
}

namespace {

constexpr char kMagic[8] = {'I', 'C', 'D', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_tensor(std::string& out, const double* data, std::uint32_t rows, std::uint32_t cols) {
    put_u32(out, rows);
    put_u32(out, cols);
    out.append(reinterpret_cast<const char*>(data),
               static_cast<std::size_t>(rows) * cols * sizeof(double));
}

struct Reader {
    const std::string& bytes;
    std::size_t pos = 0;

    std::uint32_t u32() {
        ICDA_REQUIRE(pos + 4 <= bytes.size(), "checkpoint: truncated");
        std::uint32_t v;
        std::memcpy(&v, bytes.data() + pos, 4);
        pos += 4;
        return v;
    }
    Matrix matrix() {
        std::uint32_t rows = u32();
        std::uint32_t cols = u32();
        std::size_t needed = static_cast<std::size_t>(rows) * cols * sizeof(double);
        ICDA_REQUIRE(pos + needed <= bytes.size(), "checkpoint: truncated tensor");
        Matrix m(rows, cols);
        std::memcpy(m.data.data(), bytes.data() + pos, needed);
        pos += needed;
        return m;
    }
};

}  // namespace

std::string checkpoint_to_bytes(const Backbone& bb, const LinearHead& head) {
    std::string out;
    out.append(kMagic, sizeof kMagic);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(bb.layers.size()));
    for (const DenseLayer& layer : bb.layers) {
        put_tensor(out, layer.w.data.data(), static_cast<std::uint32_t>(layer.w.rows),
                   static_cast<std::uint32_t>(layer.w.cols));
        put_tensor(out, layer.b.data(), static_cast<std::uint32_t>(layer.b.size()), 1);
    }
    put_tensor(out, head.w.data.data(), static_cast<std::uint32_t>(head.w.rows),
               static_cast<std::uint32_t>(head.w.cols));
    put_tensor(out, head.b.data(), static_cast<std::uint32_t>(head.b.size()), 1);
    return out;
}

std::pair<Backbone, LinearHead> checkpoint_from_bytes(const std::string& bytes) {
    ICDA_REQUIRE(bytes.size() >= sizeof(kMagic) + 8 &&
                     std::memcmp(bytes.data(), kMagic, sizeof kMagic) == 0,
                 "checkpoint: bad magic");
    Reader r{bytes, sizeof kMagic};
    std::uint32_t version = r.u32();
    ICDA_REQUIRE(version == kVersion, "checkpoint: unsupported version");
    std::uint32_t layer_count = r.u32();

    Backbone bb;
    for (std::uint32_t l = 0; l < layer_count; ++l) {
        DenseLayer layer;
        layer.w = r.matrix();
        Matrix b = r.matrix();
        ICDA_REQUIRE(b.cols == 1, "checkpoint: bias tensor not a column");
        layer.b = b.data;
        bb.layers.push_back(std::move(layer));
    }
    LinearHead head;
    head.w = r.matrix();
    Matrix b = r.matrix();
    ICDA_REQUIRE(b.cols == 1, "checkpoint: bias tensor not a column");
    head.b = b.data;
    ICDA_REQUIRE(r.pos == bytes.size(), "checkpoint: trailing bytes");
    return {std::move(bb), std::move(head)};
}

void save_checkpoint(const Backbone& bb, const LinearHead& head, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    ICDA_REQUIRE(f.good(), "save_checkpoint: cannot open " + path);
    std::string bytes = checkpoint_to_bytes(bb, head);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    ICDA_REQUIRE(f.good(), "save_checkpoint: write failed for " + path);
}

std::pair<Backbone, LinearHead> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    ICDA_REQUIRE(f.good(), "load_checkpoint: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return checkpoint_from_bytes(bytes);
}

}  // namespace icda
