#include "fhgan/params.hpp"

#include <cmath>

#include "fhgan/error.hpp"

namespace fhgan {

void ParamStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  index_.emplace(name, tensors_.size());
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
}

bool ParamStore::contains(std::string_view name) const { return index_.contains(std::string(name)); }

const Tensor& ParamStore::get(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return tensors_[it->second];
}

Tensor& ParamStore::get(std::string_view name) {
  return const_cast<Tensor&>(static_cast<const ParamStore&>(*this).get(name));
}

std::int64_t ParamStore::total_size() const {
  std::int64_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

ParamStore ParamStore::zeros_like() const {
  ParamStore out;
  for (std::size_t i = 0; i < tensors_.size(); ++i) out.add(names_[i], Tensor(tensors_[i].shape()));
  return out;
}

Bindings::Bindings(const ParamStore& store, bool requires_grad) : names_(store.names()) {
  vars_.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    vars_.emplace_back(store.tensors()[i], requires_grad);
    index_.emplace(names_[i], i);
  }
}

const ag::Var& Bindings::operator[](std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("unbound parameter '" + std::string(name) + "'");
  return vars_[it->second];
}

ParamStore gradients(const ag::Var& loss, const Bindings& bindings) {
  return to_store(bindings, ag::grad(loss, bindings.vars()));
}

ParamStore to_store(const Bindings& bindings, std::span<const ag::Var> grads) {
  ParamStore out;
  for (std::size_t i = 0; i < grads.size(); ++i) out.add(bindings.names()[i], grads[i].value());
  return out;
}

Tensor init_kernel(const Shape& shape, std::int64_t fan_in, double prelu_slope, std::mt19937_64& rng) {
  Tensor t(shape);
  if (fan_in <= 0) return t;
  const double stddev = std::sqrt(2.0 / ((1.0 + prelu_slope * prelu_slope) * static_cast<double>(fan_in)));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace fhgan
