#include "grawa/layered.hpp"

#include "grawa/errors.hpp"

#include <cmath>
#include <string>

namespace grawa {

LayerStack LayerStack::zeros(const ShapeSignature& signature) {
    std::vector<Eigen::MatrixXd> layers;
    layers.reserve(signature.size());
    for (const auto& s : signature) layers.push_back(Eigen::MatrixXd::Zero(s.rows, s.cols));
    return LayerStack(std::move(layers));
}

LayerStack LayerStack::from_flat(const Eigen::VectorXd& flat, const ShapeSignature& signature) {
    LayerStack out = zeros(signature);
    if (flat.size() != out.total_dim())
        throw SignatureError("flat vector of size " + std::to_string(flat.size()) +
                             " does not match signature of total dim " + std::to_string(out.total_dim()));
    Eigen::Index offset = 0;
    for (auto& layer : out.layers_) {
        layer = Eigen::Map<const Eigen::MatrixXd>(flat.data() + offset, layer.rows(), layer.cols());
        offset += layer.size();
    }
    return out;
}

Eigen::Index LayerStack::total_dim() const {
    Eigen::Index n = 0;
    for (const auto& l : layers_) n += l.size();
    return n;
}

ShapeSignature LayerStack::signature() const {
    ShapeSignature sig;
    sig.reserve(layers_.size());
    for (const auto& l : layers_) sig.push_back({l.rows(), l.cols()});
    return sig;
}

Eigen::VectorXd LayerStack::flatten() const {
    Eigen::VectorXd flat(total_dim());
    Eigen::Index offset = 0;
    for (const auto& l : layers_) {
        flat.segment(offset, l.size()) = Eigen::Map<const Eigen::VectorXd>(l.data(), l.size());
        offset += l.size();
    }
    return flat;
}

double LayerStack::squared_norm() const {
    double s = 0.0;
    for (const auto& l : layers_) s += l.squaredNorm();
    return s;
}

double LayerStack::norm() const { return std::sqrt(squared_norm()); }

std::vector<double> LayerStack::layer_norms() const {
    std::vector<double> out;
    out.reserve(layers_.size());
    for (const auto& l : layers_) out.push_back(l.norm());
    return out;
}

bool LayerStack::all_finite() const {
    for (const auto& l : layers_)
        if (!l.allFinite()) return false;
    return true;
}

void LayerStack::axpy(double alpha, const LayerStack& other) {
    require_same_signature(*this, other, "axpy");
    for (std::size_t k = 0; k < layers_.size(); ++k) layers_[k] += alpha * other.layers_[k];
}

void LayerStack::scale(double alpha) {
    for (auto& l : layers_) l *= alpha;
}

void LayerStack::set_zero() {
    for (auto& l : layers_) l.setZero();
}

bool operator==(const LayerStack& a, const LayerStack& b) {
    if (a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t k = 0; k < a.layers_.size(); ++k) {
        const auto& x = a.layers_[k];
        const auto& y = b.layers_[k];
        if (x.rows() != y.rows() || x.cols() != y.cols()) return false;
        if ((x.array() != y.array()).any()) return false;
    }
    return true;
}

void require_signature(const LayerStack& a, const ShapeSignature& signature, const char* what) {
    if (a.signature() != signature)
        throw SignatureError(std::string(what) + ": layer shape signature mismatch");
}

void require_same_signature(const LayerStack& a, const LayerStack& b, const char* what) {
    if (a.layer_count() != b.layer_count())
        throw SignatureError(std::string(what) + ": layer count " + std::to_string(a.layer_count()) +
                             " vs " + std::to_string(b.layer_count()));
    for (std::size_t k = 0; k < a.layer_count(); ++k) {
        if (a.layer(k).rows() != b.layer(k).rows() || a.layer(k).cols() != b.layer(k).cols())
            throw SignatureError(std::string(what) + ": shape mismatch at layer " + std::to_string(k));
    }
}

double dot(const LayerStack& a, const LayerStack& b) {
    require_same_signature(a, b, "dot");
    double s = 0.0;
    for (std::size_t k = 0; k < a.layer_count(); ++k) s += a.layer(k).cwiseProduct(b.layer(k)).sum();
    return s;
}

double distance(const LayerStack& a, const LayerStack& b) {
    require_same_signature(a, b, "distance");
    double s = 0.0;
    for (std::size_t k = 0; k < a.layer_count(); ++k) s += (a.layer(k) - b.layer(k)).squaredNorm();
    return std::sqrt(s);
}

LayerStack lerp(const LayerStack& from, const LayerStack& to, double t) {
    require_same_signature(from, to, "lerp");
    LayerStack out = from;
    for (std::size_t k = 0; k < out.layer_count(); ++k)
        out.layer(k) = (1.0 - t) * from.layer(k) + t * to.layer(k);
    return out;
}

LayerStack weighted_sum(std::span<const LayeredParams> stacks, std::span<const double> weights) {
    if (stacks.empty()) throw ConfigError("weighted_sum: no stacks");
    if (stacks.size() != weights.size()) throw SignatureError("weighted_sum: weight count mismatch");
    LayerStack out = LayerStack::zeros(stacks.front().signature());
    for (std::size_t i = 0; i < stacks.size(); ++i) out.axpy(weights[i], stacks[i]);
    return out;
}

}  // namespace grawa
