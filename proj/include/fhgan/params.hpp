#pragma once

#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fhgan/autograd.hpp"
#include "fhgan/tensor.hpp"

namespace fhgan {

// Ordered, named collection of parameter tensors. Plain value type: copying a
// store copies every tensor.
class ParamStore {
 public:
  void add(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);

  std::size_t size() const { return tensors_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  std::span<const Tensor> tensors() const { return tensors_; }
  std::span<Tensor> tensors() { return tensors_; }
  std::int64_t total_size() const;

  // Store with the same names and shapes, all zeros.
  ParamStore zeros_like() const;

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.names_ == b.names_ && a.tensors_ == b.tensors_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Graph leaves wrapping a ParamStore for one forward/backward evaluation.
class Bindings {
 public:
  Bindings(const ParamStore& store, bool requires_grad);

  const ag::Var& operator[](std::string_view name) const;
  std::span<const ag::Var> vars() const { return vars_; }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::vector<ag::Var> vars_;
  std::unordered_map<std::string, std::size_t> index_;
};

// d loss / d parameter for every bound parameter, as a store with matching names.
ParamStore gradients(const ag::Var& loss, const Bindings& bindings);
// Same, from gradient vars already computed for bindings.vars().
ParamStore to_store(const Bindings& bindings, std::span<const ag::Var> grads);

// Fan-in variance scaling for PReLU networks: N(0, 2 / ((1 + a^2) fan_in)).
Tensor init_kernel(const Shape& shape, std::int64_t fan_in, double prelu_slope, std::mt19937_64& rng);

}  // namespace fhgan
