#pragma once

#include <string>
#include <utility>
#include <vector>

#include "icda/linalg.hpp"
#include "icda/rng.hpp"

namespace icda {

// One fully connected layer; W is (out x in), b is (out).
struct DenseLayer {
    Matrix w;
    Vec b;
};

// MLP feature extractor. Every layer is Dense followed by ReLU, so features
// are the last hidden activation; widths.back() is the feature dimension H.
struct Backbone {
    std::vector<DenseLayer> layers;

    std::size_t in_dim() const { return layers.front().w.cols; }
    std::size_t out_dim() const { return layers.back().w.rows; }
};

struct LinearHead {
    Matrix w;  // C x H
    Vec b;     // C
};

Backbone make_backbone(int in_dim, const std::vector<int>& widths, Rng& rng);
LinearHead make_head(int classes, int feature_dim, Rng& rng);

// Everything backward needs from forward: the input batch plus every layer's
// pre-activation. Activations are recomputed as relu(z) where needed.
struct ForwardCache {
    Matrix x;
    std::vector<Matrix> pre;  // one per layer, N x width
    Matrix features;          // N x H (relu of last pre)
    Matrix logits;            // N x C
};

ForwardCache forward(const Backbone& bb, const LinearHead& head, const Matrix& x);

struct ModelGrads {
    std::vector<DenseLayer> layers;  // same shapes as backbone params
    Matrix d_w;                      // C x H
    Vec d_b;                         // C
};

// Full chain rule from dL/dlogits. The head gradient falls out as
// d_logits^T features; the feature gradient d_logits * w then backpropagates
// through the ReLU stack.
ModelGrads backward(const Backbone& bb, const LinearHead& head, const ForwardCache& cache,
                    const Matrix& d_logits);

// Backbone-only backprop for losses that compute their own head gradients
// (the perturbed losses differentiate through the head analytically).
std::vector<DenseLayer> backward_features(const Backbone& bb, const ForwardCache& cache,
                                          const Matrix& d_features);

struct SgdConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    // (iteration, multiplier) milestones; multipliers compound once reached.
    std::vector<std::pair<int, double>> schedule;
};

double lr_at(const SgdConfig& cfg, int iteration);

// Velocity buffers, one per parameter tensor, laid out to match the model.
struct SgdState {
    std::vector<DenseLayer> layer_velocity;
    Matrix head_w_velocity;
    Vec head_b_velocity;
};

SgdState make_sgd_state(const Backbone& bb, const LinearHead& head);

// v <- momentum*v + grad + weight_decay*param (decay on weights only);
// param <- param - lr(t)*v.
void sgd_step(Backbone& bb, LinearHead& head, const ModelGrads& grads, SgdState& state,
              const SgdConfig& cfg, int iteration);

// Versioned binary checkpoint of all parameter tensors with shape headers.
std::string checkpoint_to_bytes(const Backbone& bb, const LinearHead& head);
std::pair<Backbone, LinearHead> checkpoint_from_bytes(const std::string& bytes);
void save_checkpoint(const Backbone& bb, const LinearHead& head, const std::string& path);
std::pair<Backbone, LinearHead> load_checkpoint(const std::string& path);

}  // namespace icda
