#pragma once

#include "grawa/layered.hpp"
#include "grawa/objective.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <initializer_list>
#include <random>
#include <vector>

namespace grawa::test {

// Single-layer column parameters.
inline LayeredParams column(std::initializer_list<double> values) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double x : values) v(i++) = x;
    return LayeredParams(std::vector<Eigen::MatrixXd>{v});
}

inline LayeredGradient column_grad(std::initializer_list<double> values) {
    return LayeredGradient(LayerStack(column(values)));
}

inline Eigen::MatrixXd diag(std::initializer_list<double> values) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double x : values) v(i++) = x;
    return v.asDiagonal();
}

inline LayeredParams random_like(const ShapeSignature& sig, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    std::vector<Eigen::MatrixXd> layers;
    for (const auto& s : sig) {
        Eigen::MatrixXd m(s.rows, s.cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
        layers.push_back(m);
    }
    return LayeredParams(std::move(layers));
}

inline double rel_err(double a, double b, double floor = 1e-4) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central-difference gradient of the batch loss.
inline Eigen::VectorXd fd_gradient(const Objective& f, const LayeredParams& x, const Batch& batch, double h = 1e-5) {
    const auto sig = x.signature();
    Eigen::VectorXd flat = x.flatten();
    Eigen::VectorXd out(flat.size());
    for (Eigen::Index i = 0; i < flat.size(); ++i) {
        Eigen::VectorXd p = flat, m = flat;
        p(i) += h;
        m(i) -= h;
        out(i) = (f.eval(LayeredParams(LayerStack::from_flat(p, sig)), batch) -
                  f.eval(LayeredParams(LayerStack::from_flat(m, sig)), batch)) /
                 (2 * h);
    }
    return out;
}

}  // namespace grawa::test
