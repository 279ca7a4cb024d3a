#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace grawa {

// Shape of one layer unit.
struct LayerShape {
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

using ShapeSignature = std::vector<LayerShape>;

// Ordered list of dense layer tensors. Shared storage for parameters and
// gradients; the strong types below keep the two apart at API boundaries.
class LayerStack {
public:
    LayerStack() = default;
    explicit LayerStack(std::vector<Eigen::MatrixXd> layers) : layers_(std::move(layers)) {}

    static LayerStack zeros(const ShapeSignature& signature);
    static LayerStack from_flat(const Eigen::VectorXd& flat, const ShapeSignature& signature);

    std::size_t layer_count() const { return layers_.size(); }
    Eigen::Index total_dim() const;
    ShapeSignature signature() const;

    const Eigen::MatrixXd& layer(std::size_t k) const { return layers_[k]; }
    Eigen::MatrixXd& layer(std::size_t k) { return layers_[k]; }
    const std::vector<Eigen::MatrixXd>& layers() const { return layers_; }
    std::vector<Eigen::MatrixXd>& layers() { return layers_; }

    Eigen::VectorXd flatten() const;
    double norm() const;
    double squared_norm() const;
    // Frobenius norm of every layer, in order.
    std::vector<double> layer_norms() const;
    bool all_finite() const;

    // this += alpha * other
    void axpy(double alpha, const LayerStack& other);
    void scale(double alpha);
    void set_zero();

    friend bool operator==(const LayerStack& a, const LayerStack& b);

private:
    std::vector<Eigen::MatrixXd> layers_;
};

// Throws SignatureError unless both stacks share layer count and shapes.
void require_same_signature(const LayerStack& a, const LayerStack& b, const char* what);
void require_signature(const LayerStack& a, const ShapeSignature& signature, const char* what);

double dot(const LayerStack& a, const LayerStack& b);
double distance(const LayerStack& a, const LayerStack& b);

// (1 - t) * from + t * to
LayerStack lerp(const LayerStack& from, const LayerStack& to, double t);

// Model parameters x_m / x_C.
struct LayeredParams : LayerStack {
    using LayerStack::LayerStack;
    LayeredParams() = default;
    explicit LayeredParams(LayerStack stack) : LayerStack(std::move(stack)) {}
};

enum class GradientSource { single_sample, batch_accumulated };

struct LayeredGradient : LayerStack {
    using LayerStack::LayerStack;
    LayeredGradient() = default;
    explicit LayeredGradient(LayerStack stack, GradientSource src = GradientSource::batch_accumulated)
        : LayerStack(std::move(stack)), source(src) {}

    GradientSource source = GradientSource::batch_accumulated;
};

// Sum_i weights[i] * stacks[i], every stack sharing one signature.
LayerStack weighted_sum(std::span<const LayeredParams> stacks, std::span<const double> weights);

}  // namespace grawa
