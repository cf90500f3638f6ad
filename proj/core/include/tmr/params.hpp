#pragma once

#include <map>
#include <string>
#include <vector>

#include "tmr/errors.hpp"
#include "tmr/tensor.hpp"

namespace tmr {

/// Named collection of model tensors. Iteration follows creation order, which
/// keeps optimizer updates, checkpoints and gradient-check reports in one
/// stable order.
template <class T>
class ParamSet {
 public:
  Tensor<T>& create(const std::string& name, std::size_t rows, std::size_t cols,
                    bool trainable = true) {
    if (by_name_.count(name)) throw ConfigError("parameter already exists: " + name);
    order_.push_back(name);
    Tensor<T>& t = by_name_[name];
    t = Tensor<T>::zeros(rows, cols);
    t.requires_grad = trainable;
    return t;
  }

  bool has(const std::string& name) const { return by_name_.count(name) != 0; }

  Tensor<T>& get(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }

  const Tensor<T>& get(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }

  const std::vector<std::string>& names() const { return order_; }

  std::size_t count() const { return order_.size(); }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& name : order_) n += by_name_.at(name).size();
    return n;
  }

  void zero_grads() {
    for (auto& name : order_) {
      Tensor<T>& t = by_name_[name];
      if (t.requires_grad) {
        t.ensure_grad();
        t.zero_grad();
      }
    }
  }

 private:
  std::vector<std::string> order_;
  std::map<std::string, Tensor<T>> by_name_;
};

}  // namespace tmr
