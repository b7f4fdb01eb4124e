#pragma once

#include <Eigen/Dense>

#include "spiked/priors.hpp"
#include "spiked/spectra.hpp"

// Hot loops in two flavours. `serial` is the plain reference used by tests;
// `omp` splits rows across threads. Each output entry is produced by exactly
// one thread with a fixed summation order, so results do not depend on the
// thread count.
namespace spiked::kernels {

namespace serial {

/// out = tau * m + (1 - tau) * eta(JY m + gamma m_prev, gamma), componentwise.
void tap_update(const Eigen::MatrixXd& JY, const Eigen::VectorXd& m, const Eigen::VectorXd& m_prev,
                double gamma, double tau, const Prior& prior, Eigen::VectorXd& out);

/// J evaluated at every entry of x.
Eigen::VectorXd coupling_table(const EffectiveCoupling& jc, const Eigen::VectorXd& x);

}  // namespace serial

namespace omp {

void tap_update(const Eigen::MatrixXd& JY, const Eigen::VectorXd& m, const Eigen::VectorXd& m_prev,
                double gamma, double tau, const Prior& prior, Eigen::VectorXd& out);

Eigen::VectorXd coupling_table(const EffectiveCoupling& jc, const Eigen::VectorXd& x);

}  // namespace omp

}  // namespace spiked::kernels
