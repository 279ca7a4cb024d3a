#pragma once

#include "grawa/layered.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace grawa {

using Rng = std::mt19937_64;

// Labelled samples. Data-free objectives (vincent2d, quadratic) use a
// single-row placeholder batch with zero input columns.
struct Batch {
    Eigen::MatrixXd inputs;
    std::vector<int> labels;

    Eigen::Index size() const { return inputs.rows(); }
    static Batch placeholder();
};

struct Dataset {
    Eigen::MatrixXd inputs;
    std::vector<int> labels;
    int num_classes = 0;

    Eigen::Index size() const { return inputs.rows(); }
    Batch gather(std::span<const Eigen::Index> indices) const;
    Batch all() const;
};

enum class ObjectiveKind { vincent2d, quadratic, mlp_classifier };
enum class Activation { tanh, relu };
enum class DatasetKind { spirals, blobs };

std::string to_string(ObjectiveKind kind);
ObjectiveKind objective_kind_from_string(const std::string& s);
std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);
std::string to_string(DatasetKind d);
DatasetKind dataset_kind_from_string(const std::string& s);

struct QuadraticSpec {
    int dims = 2;
    // Explicit Hessian eigenvalues; when empty they are spaced linearly in
    // [min_eig, max_eig].
    std::vector<double> eigenvalues;
    double min_eig = 1.0;
    double max_eig = 1.0;
    // Rotate the diagonal Hessian by a seeded random orthogonal matrix.
    bool rotate = false;
    double noise_sigma = 0.0;

    friend bool operator==(const QuadraticSpec&, const QuadraticSpec&) = default;
};

struct MlpSpec {
    // Layer widths including input and output, e.g. {2, 16, 16, 2}.
    std::vector<int> widths{2, 16, 2};
    Activation activation = Activation::tanh;
    DatasetKind dataset = DatasetKind::spirals;
    int train_size = 512;
    int test_size = 256;
    double input_noise = 0.1;
    double init_scale = 1.0;

    friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

struct ObjectiveSpec {
    ObjectiveKind kind = ObjectiveKind::quadratic;
    QuadraticSpec quadratic;
    MlpSpec mlp;
    std::uint64_t seed = 0;

    friend bool operator==(const ObjectiveSpec&, const ObjectiveSpec&) = default;
};

// A differentiable loss f(x; batch) over layered parameters. Implementations
// are immutable after construction and safe to share across threads; the only
// mutable input is the caller-owned noise stream.
class Objective {
public:
    virtual ~Objective() = default;

    virtual ObjectiveKind kind() const = 0;
    virtual ShapeSignature signature() const = 0;
    virtual double eval(const LayeredParams& params, const Batch& batch) const = 0;
    // Gradient of the mean batch loss. `noise` feeds stochastic-gradient noise
    // where the objective defines it; nullptr yields the exact gradient.
    virtual LayeredGradient grad(const LayeredParams& params, const Batch& batch, Rng* noise = nullptr) const = 0;

    // Shared initial model drawn from `seed`.
    virtual LayeredParams initial_params(std::uint64_t seed) const = 0;

    // Training set; nullptr for data-free objectives.
    virtual const Dataset* train_set() const { return nullptr; }
    virtual const Dataset* test_set() const { return nullptr; }

    virtual bool is_convex() const { return false; }
    // Exact Hessian when available in closed form.
    virtual std::optional<Eigen::MatrixXd> hessian() const { return std::nullopt; }
    virtual std::optional<double> optimal_value() const { return std::nullopt; }
    // Keeps iterates inside the feasible box after an update (no-op by default).
    virtual void project(LayeredParams& /*params*/) const {}

    // Batch covering the whole training distribution.
    Batch full_batch() const;
    Eigen::Index total_dim() const;
    void check_signature(const LayerStack& params) const;
};

// f(x, y) = -sin(10 ln x) - sin(10 ln y); each coordinate is its own layer.
class Vincent2d final : public Objective {
public:
    static constexpr double lower_bound = 0.25;
    static constexpr double upper_bound = 10.0;

    ObjectiveKind kind() const override { return ObjectiveKind::vincent2d; }
    ShapeSignature signature() const override { return {{1, 1}, {1, 1}}; }
    double eval(const LayeredParams& params, const Batch& batch) const override;
    LayeredGradient grad(const LayeredParams& params, const Batch& batch, Rng* noise = nullptr) const override;
    LayeredParams initial_params(std::uint64_t seed) const override;
    void project(LayeredParams& params) const override;

    static LayeredParams point(double x, double y);
    // |f_xx| + |f_yy| averaged over the two coordinates.
    static double curvature_score(double x, double y);
    static double second_derivative(double t);
};

// f(x) = 0.5 (x - x*)^T A (x - x*), one layer of shape dims x 1, x* = 0.
class Quadratic final : public Objective {
public:
    Quadratic(const QuadraticSpec& spec, std::uint64_t seed);
    explicit Quadratic(Eigen::MatrixXd hessian, double noise_sigma = 0.0);

    ObjectiveKind kind() const override { return ObjectiveKind::quadratic; }
    ShapeSignature signature() const override { return {{hessian_.rows(), 1}}; }
    double eval(const LayeredParams& params, const Batch& batch) const override;
    LayeredGradient grad(const LayeredParams& params, const Batch& batch, Rng* noise = nullptr) const override;
    LayeredParams initial_params(std::uint64_t seed) const override;
    bool is_convex() const override { return true; }
    std::optional<Eigen::MatrixXd> hessian() const override { return hessian_; }
    std::optional<double> optimal_value() const override { return 0.0; }

    const Eigen::MatrixXd& matrix() const { return hessian_; }
    double noise_sigma() const { return noise_sigma_; }
    double smoothness() const;
    double strong_convexity() const;

private:
    Eigen::MatrixXd hessian_;
    double noise_sigma_ = 0.0;
};

// Fully connected classifier with softmax cross-entropy. Each dense layer is
// one layer unit stored as an out x (in + 1) matrix whose last column is the
// bias.
class MlpClassifier final : public Objective {
public:
    MlpClassifier(const MlpSpec& spec, std::uint64_t seed);
    MlpClassifier(const MlpSpec& spec, Dataset train, Dataset test);

    ObjectiveKind kind() const override { return ObjectiveKind::mlp_classifier; }
    ShapeSignature signature() const override;
    double eval(const LayeredParams& params, const Batch& batch) const override;
    LayeredGradient grad(const LayeredParams& params, const Batch& batch, Rng* noise = nullptr) const override;
    LayeredParams initial_params(std::uint64_t seed) const override;
    const Dataset* train_set() const override { return &train_; }
    const Dataset* test_set() const override { return &test_; }

    // Fraction of misclassified samples, in percent.
    double error_percent(const LayeredParams& params, const Dataset& data) const;

private:
    Eigen::MatrixXd forward_logits(const LayeredParams& params, const Eigen::MatrixXd& inputs,
                                   std::vector<Eigen::MatrixXd>* activations) const;
    void check_batch(const Batch& batch) const;

    MlpSpec spec_;
    Dataset train_;
    Dataset test_;
};

std::unique_ptr<Objective> make_objective(const ObjectiveSpec& spec);

// Two interleaved spirals or Gaussian blobs, labels in {0, 1}.
Dataset make_synthetic_dataset(DatasetKind kind, int size, double noise, std::uint64_t seed);

// One worker's exclusive slice of the training set. Yields mini-batches
// reshuffled every epoch from the shard's own seeded stream.
class ShardStream {
public:
    ShardStream(std::vector<Eigen::Index> indices, std::uint64_t seed);

    const std::vector<Eigen::Index>& indices() const { return indices_; }
    std::size_t size() const { return indices_.size(); }
    // Next `batch_size` sample indices (clamped to the shard size).
    std::vector<Eigen::Index> next_indices(std::size_t batch_size);
    Batch next_batch(const Dataset& data, std::size_t batch_size);

private:
    void reshuffle();

    std::vector<Eigen::Index> indices_;
    std::vector<Eigen::Index> order_;
    std::size_t cursor_ = 0;
    Rng rng_;
};

// Exhaustive, pairwise-disjoint split of [0, dataset_size) into `workers`
// shards of near-equal size.
std::vector<ShardStream> make_shards(Eigen::Index dataset_size, int workers, std::uint64_t seed);

// Independent, reproducible stream seed for (base, stream id).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace grawa
