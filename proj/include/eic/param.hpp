#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace eic {

/// Named view of a weight tensor and its (same-shaped) gradient accumulator.
struct ParamRef {
  std::string name;
  Eigen::Map<Eigen::MatrixXd> value;
  Eigen::Map<Eigen::MatrixXd> grad;
  bool trainable = true;
};

template <typename Value, typename Grad>
ParamRef make_param(std::string name, Eigen::PlainObjectBase<Value>& value,
                    Eigen::PlainObjectBase<Grad>& grad, bool trainable) {
  if (grad.rows() != value.rows() || grad.cols() != value.cols()) grad.setZero(value.rows(), value.cols());
  return {std::move(name), Eigen::Map<Eigen::MatrixXd>(value.data(), value.rows(), value.cols()),
          Eigen::Map<Eigen::MatrixXd>(grad.data(), grad.rows(), grad.cols()), trainable};
}

inline void zero_grads(std::vector<ParamRef>& params) {
  for (auto& p : params) p.grad.setZero();
}

inline Eigen::Index trainable_count(const std::vector<ParamRef>& params) {
  Eigen::Index n = 0;
  for (const auto& p : params) {
    if (p.trainable) n += p.value.size();
  }
  return n;
}

}  // namespace eic
