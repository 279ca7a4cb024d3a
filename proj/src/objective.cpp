#include "grawa/objective.hpp"

#include "grawa/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace grawa {

namespace {

constexpr double kVincentFrequency = 10.0;

double vincent_coordinate(const LayeredParams& params, std::size_t k) {
    const double v = params.layer(k)(0, 0);
    if (!(v > 0.0))
        throw DomainError("vincent2d: coordinate " + std::to_string(k) + " = " + std::to_string(v) +
                          " is outside (0, inf)");
    return v;
}

}  // namespace

Batch Batch::placeholder() {
    Batch b;
    b.inputs = Eigen::MatrixXd(1, 0);
    b.labels = {0};
    return b;
}

Batch Dataset::gather(std::span<const Eigen::Index> indices) const {
    Batch b;
    b.inputs.resize(static_cast<Eigen::Index>(indices.size()), inputs.cols());
    b.labels.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        b.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(indices[i]);
        b.labels[i] = labels[static_cast<std::size_t>(indices[i])];
    }
    return b;
}

Batch Dataset::all() const { return Batch{inputs, labels}; }

std::string to_string(ObjectiveKind kind) {
    switch (kind) {
        case ObjectiveKind::vincent2d: return "vincent2d";
        case ObjectiveKind::quadratic: return "quadratic";
        case ObjectiveKind::mlp_classifier: return "mlp_classifier";
    }
    return "?";
}

ObjectiveKind objective_kind_from_string(const std::string& s) {
    if (s == "vincent2d") return ObjectiveKind::vincent2d;
    if (s == "quadratic") return ObjectiveKind::quadratic;
    if (s == "mlp_classifier") return ObjectiveKind::mlp_classifier;
    throw ConfigError("kind: unknown objective '" + s + "'");
}

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    throw ConfigError("activation: unknown activation '" + s + "'");
}

std::string to_string(DatasetKind d) { return d == DatasetKind::spirals ? "spirals" : "blobs"; }

DatasetKind dataset_kind_from_string(const std::string& s) {
    if (s == "spirals") return DatasetKind::spirals;
    if (s == "blobs") return DatasetKind::blobs;
    throw ConfigError("dataset: unknown dataset '" + s + "'");
}

Batch Objective::full_batch() const {
    if (const Dataset* d = train_set()) return d->all();
    return Batch::placeholder();
}

Eigen::Index Objective::total_dim() const {
    Eigen::Index n = 0;
    for (const auto& s : signature()) n += s.rows * s.cols;
    return n;
}

void Objective::check_signature(const LayerStack& params) const {
    require_signature(params, signature(), to_string(kind()).c_str());
}

// ---------------------------------------------------------------- vincent2d

double Vincent2d::eval(const LayeredParams& params, const Batch&) const {
    check_signature(params);
    const double x = vincent_coordinate(params, 0);
    const double y = vincent_coordinate(params, 1);
    return -std::sin(kVincentFrequency * std::log(x)) - std::sin(kVincentFrequency * std::log(y));
}

LayeredGradient Vincent2d::grad(const LayeredParams& params, const Batch&, Rng*) const {
    check_signature(params);
    LayeredGradient g(LayerStack::zeros(signature()), GradientSource::batch_accumulated);
    for (std::size_t k = 0; k < 2; ++k) {
        const double t = vincent_coordinate(params, k);
        g.layer(k)(0, 0) = -kVincentFrequency * std::cos(kVincentFrequency * std::log(t)) / t;
    }
    return g;
}

LayeredParams Vincent2d::initial_params(std::uint64_t seed) const {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(lower_bound, upper_bound);
    const double x = u(rng);
    const double y = u(rng);
    return point(x, y);
}

void Vincent2d::project(LayeredParams& params) const {
    for (auto& l : params.layers()) l = l.cwiseMax(lower_bound).cwiseMin(upper_bound);
}

LayeredParams Vincent2d::point(double x, double y) {
    std::vector<Eigen::MatrixXd> layers(2, Eigen::MatrixXd(1, 1));
    layers[0](0, 0) = x;
    layers[1](0, 0) = y;
    return LayeredParams(std::move(layers));
}

double Vincent2d::second_derivative(double t) {
    // d/dt [-10 cos(10 ln t) / t] = (100 sin(10 ln t) + 10 cos(10 ln t)) / t^2
    const double phase = kVincentFrequency * std::log(t);
    return (kVincentFrequency * kVincentFrequency * std::sin(phase) + kVincentFrequency * std::cos(phase)) /
           (t * t);
}

double Vincent2d::curvature_score(double x, double y) {
    return 0.5 * (std::abs(second_derivative(x)) + std::abs(second_derivative(y)));
}

// ---------------------------------------------------------------- quadratic

Quadratic::Quadratic(Eigen::MatrixXd hessian, double noise_sigma)
    : hessian_(std::move(hessian)), noise_sigma_(noise_sigma) {
    if (hessian_.rows() < 1 || hessian_.rows() != hessian_.cols())
        throw ConfigError("quadratic: Hessian must be square and non-empty");
    if (!hessian_.isApprox(hessian_.transpose(), 1e-12))
        throw ConfigError("quadratic: Hessian must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hessian_, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() <= 0.0) throw ConfigError("quadratic: Hessian must be positive definite");
    if (noise_sigma_ < 0.0) throw ConfigError("noise_sigma: must be >= 0");
}

namespace {

Eigen::MatrixXd quadratic_hessian(const QuadraticSpec& spec, std::uint64_t seed) {
    if (spec.dims < 1) throw ConfigError("dims: must be >= 1");
    Eigen::VectorXd eigs(spec.dims);
    if (!spec.eigenvalues.empty()) {
        if (static_cast<int>(spec.eigenvalues.size()) != spec.dims)
            throw ConfigError("eigenvalues: expected " + std::to_string(spec.dims) + " entries");
        for (int i = 0; i < spec.dims; ++i) eigs(i) = spec.eigenvalues[static_cast<std::size_t>(i)];
    } else {
        if (!(spec.min_eig > 0.0) || spec.max_eig < spec.min_eig)
            throw ConfigError("min_eig: need 0 < min_eig <= max_eig");
        eigs = Eigen::VectorXd::LinSpaced(spec.dims, spec.min_eig, spec.max_eig);
    }
    if (eigs.minCoeff() <= 0.0) throw ConfigError("eigenvalues: Hessian must be positive definite");
    if (!spec.rotate) return eigs.asDiagonal();

    Rng rng(derive_seed(seed, 0x51u));
    std::normal_distribution<double> normal;
    Eigen::MatrixXd g(spec.dims, spec.dims);
    for (Eigen::Index j = 0; j < g.cols(); ++j)
        for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    Eigen::MatrixXd h = q * eigs.asDiagonal() * q.transpose();
    return 0.5 * (h + h.transpose());
}

}  // namespace

Quadratic::Quadratic(const QuadraticSpec& spec, std::uint64_t seed)
    : Quadratic(quadratic_hessian(spec, seed), spec.noise_sigma) {}

double Quadratic::eval(const LayeredParams& params, const Batch&) const {
    check_signature(params);
    const auto x = params.layer(0).col(0);
    return 0.5 * x.dot(hessian_ * x);
}

LayeredGradient Quadratic::grad(const LayeredParams& params, const Batch&, Rng* noise) const {
    check_signature(params);
    Eigen::MatrixXd g = hessian_ * params.layer(0);
    if (noise != nullptr && noise_sigma_ > 0.0) {
        std::normal_distribution<double> normal(0.0, noise_sigma_);
        for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, 0) += normal(*noise);
    }
    return LayeredGradient(LayerStack({std::move(g)}), GradientSource::batch_accumulated);
}

LayeredParams Quadratic::initial_params(std::uint64_t seed) const {
    Rng rng(seed);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd x(hessian_.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, 0) = normal(rng);
    return LayeredParams(LayerStack({std::move(x)}));
}

double Quadratic::smoothness() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hessian_, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().maxCoeff();
}

double Quadratic::strong_convexity() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hessian_, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

// ---------------------------------------------------------------- factory

std::unique_ptr<Objective> make_objective(const ObjectiveSpec& spec) {
    switch (spec.kind) {
        case ObjectiveKind::vincent2d: return std::make_unique<Vincent2d>();
        case ObjectiveKind::quadratic: return std::make_unique<Quadratic>(spec.quadratic, spec.seed);
        case ObjectiveKind::mlp_classifier: return std::make_unique<MlpClassifier>(spec.mlp, spec.seed);
    }
    throw ConfigError("kind: unsupported objective");
}

// ---------------------------------------------------------------- data

Dataset make_synthetic_dataset(DatasetKind kind, int size, double noise, std::uint64_t seed) {
    if (size < 1) throw ConfigError("train_size: dataset must hold at least one sample");
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal;
    Dataset d;
    d.num_classes = 2;
    d.inputs.resize(size, 2);
    d.labels.resize(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) {
        const int label = i % 2;
        double x = 0.0;
        double y = 0.0;
        if (kind == DatasetKind::spirals) {
            const double t = 0.25 + 0.75 * std::sqrt(unit(rng));
            const double angle = 3.0 * std::numbers::pi * t + label * std::numbers::pi;
            x = t * std::cos(angle);
            y = t * std::sin(angle);
        } else {
            const double cx = label == 0 ? -0.5 : 0.5;
            x = cx + 0.5 * normal(rng);
            y = 0.5 * normal(rng);
        }
        d.inputs(i, 0) = x + noise * normal(rng);
        d.inputs(i, 1) = y + noise * normal(rng);
        d.labels[static_cast<std::size_t>(i)] = label;
    }
    return d;
}

ShardStream::ShardStream(std::vector<Eigen::Index> indices, std::uint64_t seed)
    : indices_(std::move(indices)), order_(indices_), rng_(seed) {
    reshuffle();
}

void ShardStream::reshuffle() {
    order_ = indices_;
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
}

std::vector<Eigen::Index> ShardStream::next_indices(std::size_t batch_size) {
    const std::size_t n = std::min(batch_size, order_.size());
    std::vector<Eigen::Index> out;
    out.reserve(n);
    while (out.size() < n) {
        if (cursor_ == order_.size()) reshuffle();
        out.push_back(order_[cursor_++]);
    }
    return out;
}

Batch ShardStream::next_batch(const Dataset& data, std::size_t batch_size) {
    const auto idx = next_indices(batch_size);
    return data.gather(idx);
}

std::vector<ShardStream> make_shards(Eigen::Index dataset_size, int workers, std::uint64_t seed) {
    if (workers <= 0) throw ConfigError("workers: must be >= 1");
    if (dataset_size < workers) throw ConfigError("workers: dataset smaller than worker count");
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(dataset_size));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    Rng rng(derive_seed(seed, 0x5eedu));
    std::shuffle(perm.begin(), perm.end(), rng);

    std::vector<ShardStream> shards;
    shards.reserve(static_cast<std::size_t>(workers));
    const auto n = static_cast<std::size_t>(dataset_size);
    const auto m = static_cast<std::size_t>(workers);
    for (std::size_t w = 0; w < m; ++w) {
        const std::size_t begin = w * n / m;
        const std::size_t end = (w + 1) * n / m;
        std::vector<Eigen::Index> idx(perm.begin() + static_cast<std::ptrdiff_t>(begin),
                                      perm.begin() + static_cast<std::ptrdiff_t>(end));
        std::sort(idx.begin(), idx.end());
        shards.emplace_back(std::move(idx), derive_seed(seed, 0x1000u + w));
    }
    return shards;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    // splitmix64 finalizer over the combined key
    std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace grawa
