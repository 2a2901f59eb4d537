#include "san/param_store.hpp"

#include <utility>

#include "san/errors.hpp"

namespace san {

template <class T>
ParamStore<T>::ParamStore(const ParamStore& other) : entries_(other.entries_), index_(other.index_) {
  for (Entry& e : entries_) e.node = make_leaf(e.node->value, e.node->requires_grad);
}

template <class T>
ParamStore<T>& ParamStore<T>::operator=(const ParamStore& other) {
  if (this != &other) {
    ParamStore copy(other);
    *this = std::move(copy);
  }
  return *this;
}

template <class T>
void ParamStore<T>::add_param(const std::string& name, Tensor<T> value) {
  if (contains(name)) throw ContractError("duplicate parameter name " + name);
  Entry e;
  e.name = name;
  e.exp_avg = Tensor<T>(value.shape());
  e.exp_avg_sq = Tensor<T>(value.shape());
  e.node = make_leaf(std::move(value), true);
  index_.emplace(name, entries_.size());
  entries_.push_back(std::move(e));
}

template <class T>
void ParamStore<T>::add_buffer(const std::string& name, Tensor<T> value) {
  if (contains(name)) throw ContractError("duplicate parameter name " + name);
  Entry e;
  e.name = name;
  e.is_buffer = true;
  e.frozen = true;
  e.node = make_leaf(std::move(value), false);
  index_.emplace(name, entries_.size());
  entries_.push_back(std::move(e));
}

template <class T>
std::size_t ParamStore<T>::lookup(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter " + name);
  return it->second;
}

template <class T>
void ParamStore<T>::record(const std::string& name) const {
  if (tracing_) trace_.insert(name);
}

template <class T>
const Var<T>& ParamStore<T>::param(const std::string& name) const {
  const Entry& e = entries_[lookup(name)];
  if (e.is_buffer) throw ContractError(name + " is a buffer, not a parameter");
  record(name);
  return e.node;
}

template <class T>
Tensor<T>& ParamStore<T>::buffer(const std::string& name) {
  Entry& e = entries_[lookup(name)];
  if (!e.is_buffer) throw ContractError(name + " is a parameter, not a buffer");
  record(name);
  return e.node->value;
}

template <class T>
typename ParamStore<T>::Entry& ParamStore<T>::entry(const std::string& name) {
  return entries_[lookup(name)];
}

template <class T>
const typename ParamStore<T>::Entry& ParamStore<T>::entry(const std::string& name) const {
  return entries_[lookup(name)];
}

template <class T>
void ParamStore<T>::set_frozen(const std::string& name, bool frozen) {
  Entry& e = entries_[lookup(name)];
  if (e.is_buffer) return;
  e.frozen = frozen;
  e.node->requires_grad = !frozen;
}

template <class T>
void ParamStore<T>::set_frozen_prefix(const std::string& prefix, bool frozen) {
  for (Entry& e : entries_) {
    if (e.is_buffer || e.name.rfind(prefix, 0) != 0) continue;
    e.frozen = frozen;
    e.node->requires_grad = !frozen;
  }
}

template <class T>
void ParamStore<T>::zero_grad() {
  for (Entry& e : entries_) e.node->grad = Tensor<T>();
}

template <class T>
void ParamStore<T>::start_trace() const {
  tracing_ = true;
  trace_.clear();
}

template <class T>
std::set<std::string> ParamStore<T>::stop_trace() const {
  tracing_ = false;
  return std::exchange(trace_, {});
}

template <class T>
std::size_t ParamStore<T>::num_values(bool include_buffers) const {
  std::size_t n = 0;
  for (const Entry& e : entries_) {
    if (include_buffers || !e.is_buffer) n += e.node->value.numel();
  }
  return n;
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace san
