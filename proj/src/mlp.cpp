#include "grawa/errors.hpp"
#include "grawa/objective.hpp"

#include <cmath>

namespace grawa {

namespace {

void validate(const MlpSpec& spec) {
    if (spec.widths.size() < 2) throw ConfigError("widths: need at least input and output widths");
    for (int w : spec.widths)
        if (w < 1) throw ConfigError("widths: every width must be >= 1");
    if (spec.widths.back() < 2) throw ConfigError("widths: classifier needs >= 2 outputs");
}

Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation a) {
    if (a == Activation::tanh) return z.array().tanh().matrix();
    return z.cwiseMax(0.0);
}

// Derivative expressed through the pre-activation z.
Eigen::MatrixXd activation_slope(const Eigen::MatrixXd& z, Activation a) {
    if (a == Activation::tanh) return (1.0 - z.array().tanh().square()).matrix();
    return (z.array() > 0.0).cast<double>().matrix();
}

}  // namespace

MlpClassifier::MlpClassifier(const MlpSpec& spec, std::uint64_t seed)
    : MlpClassifier(spec, make_synthetic_dataset(spec.dataset, spec.train_size, spec.input_noise, derive_seed(seed, 1)),
                    make_synthetic_dataset(spec.dataset, spec.test_size, spec.input_noise, derive_seed(seed, 2))) {}

MlpClassifier::MlpClassifier(const MlpSpec& spec, Dataset train, Dataset test)
    : spec_(spec), train_(std::move(train)), test_(std::move(test)) {
    validate(spec_);
    if (train_.inputs.cols() != spec_.widths.front())
        throw ConfigError("widths: input width does not match dataset features");
    if (train_.num_classes > spec_.widths.back())
        throw ConfigError("widths: output width smaller than class count");
}

ShapeSignature MlpClassifier::signature() const {
    ShapeSignature sig;
    for (std::size_t l = 1; l < spec_.widths.size(); ++l) sig.push_back({spec_.widths[l], spec_.widths[l - 1] + 1});
    return sig;
}

void MlpClassifier::check_batch(const Batch& batch) const {
    if (batch.size() < 1) throw ConfigError("batch: empty");
    if (batch.inputs.cols() != spec_.widths.front()) throw SignatureError("batch: feature width mismatch");
    if (static_cast<Eigen::Index>(batch.labels.size()) != batch.size())
        throw SignatureError("batch: label count differs from input rows");
}

Eigen::MatrixXd MlpClassifier::forward_logits(const LayeredParams& params, const Eigen::MatrixXd& inputs,
                                              std::vector<Eigen::MatrixXd>* activations) const {
    // activations (when requested) holds [a_0, z_1, a_1, z_2, ..., z_L]
    Eigen::MatrixXd a = inputs;
    const std::size_t depth = params.layer_count();
    for (std::size_t l = 0; l < depth; ++l) {
        const auto& unit = params.layer(l);
        const Eigen::Index in = unit.cols() - 1;
        Eigen::MatrixXd z = a * unit.leftCols(in).transpose();
        z.rowwise() += unit.col(in).transpose();
        if (activations) activations->push_back(a);
        if (l + 1 == depth) {
            if (activations) activations->push_back(z);
            return z;
        }
        if (activations) activations->push_back(z);
        a = activate(z, spec_.activation);
    }
    return a;
}

namespace {

// Row-wise log-softmax.
Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits) {
    Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
    Eigen::MatrixXd shifted = logits.colwise() - row_max;
    Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log().matrix();
    return shifted.colwise() - lse;
}

}  // namespace

double MlpClassifier::eval(const LayeredParams& params, const Batch& batch) const {
    check_signature(params);
    check_batch(batch);
    const Eigen::MatrixXd logp = log_softmax(forward_logits(params, batch.inputs, nullptr));
    double loss = 0.0;
    for (Eigen::Index i = 0; i < batch.size(); ++i) loss -= logp(i, batch.labels[static_cast<std::size_t>(i)]);
    return loss / static_cast<double>(batch.size());
}

LayeredGradient MlpClassifier::grad(const LayeredParams& params, const Batch& batch, Rng*) const {
    check_signature(params);
    check_batch(batch);
    std::vector<Eigen::MatrixXd> cache;
    const Eigen::MatrixXd logits = forward_logits(params, batch.inputs, &cache);
    const double n = static_cast<double>(batch.size());

    Eigen::MatrixXd dz = log_softmax(logits).array().exp().matrix();
    for (Eigen::Index i = 0; i < batch.size(); ++i) dz(i, batch.labels[static_cast<std::size_t>(i)]) -= 1.0;
    dz /= n;

    LayeredGradient g(LayerStack::zeros(signature()),
                      batch.size() == 1 ? GradientSource::single_sample : GradientSource::batch_accumulated);
    for (std::size_t l = params.layer_count(); l-- > 0;) {
        const Eigen::MatrixXd& a_prev = cache[2 * l];
        const auto& unit = params.layer(l);
        const Eigen::Index in = unit.cols() - 1;
        g.layer(l).leftCols(in) = dz.transpose() * a_prev;
        g.layer(l).col(in) = dz.colwise().sum().transpose();
        if (l == 0) break;
        const Eigen::MatrixXd& z_prev = cache[2 * l - 1];
        Eigen::MatrixXd da = dz * unit.leftCols(in);
        dz = da.cwiseProduct(activation_slope(z_prev, spec_.activation));
    }
    return g;
}

LayeredParams MlpClassifier::initial_params(std::uint64_t seed) const {
    Rng rng(seed);
    std::normal_distribution<double> normal;
    LayerStack p = LayerStack::zeros(signature());
    for (auto& unit : p.layers()) {
        const Eigen::Index in = unit.cols() - 1;
        const double scale = spec_.init_scale / std::sqrt(static_cast<double>(in));
        for (Eigen::Index j = 0; j < in; ++j)
            for (Eigen::Index i = 0; i < unit.rows(); ++i) unit(i, j) = scale * normal(rng);
    }
    return LayeredParams(std::move(p));
}

double MlpClassifier::error_percent(const LayeredParams& params, const Dataset& data) const {
    check_signature(params);
    if (data.size() < 1) throw ConfigError("dataset: empty");
    const Eigen::MatrixXd logits = forward_logits(params, data.inputs, nullptr);
    Eigen::Index wrong = 0;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        Eigen::Index arg = 0;
        logits.row(i).maxCoeff(&arg);
        if (arg != data.labels[static_cast<std::size_t>(i)]) ++wrong;
    }
    return 100.0 * static_cast<double>(wrong) / static_cast<double>(data.size());
}

}  // namespace grawa
