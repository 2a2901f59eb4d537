#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "san/autograd.hpp"

namespace san {

/// Named parameters with gradient slots, freeze flags, and AdamW state.
/// Buffers (batch-norm running statistics) live here too so they travel with
/// checkpoints, but they are never optimized.
template <class T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Var<T> node;  // persistent leaf; value is the parameter
    bool frozen = false;
    bool is_buffer = false;
    Tensor<T> exp_avg;     // first moment
    Tensor<T> exp_avg_sq;  // second moment
    std::uint64_t step = 0;
  };

  ParamStore() = default;
  /// Deep copy: the copy owns fresh leaves (values, moments and flags copied,
  /// gradients dropped).
  ParamStore(const ParamStore& other);
  ParamStore& operator=(const ParamStore& other);
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  /// Registers a trainable parameter. Names must be unique.
  void add_param(const std::string& name, Tensor<T> value);
  void add_buffer(const std::string& name, Tensor<T> value);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  /// Leaf node for use in a forward pass. Records the access when tracing.
  const Var<T>& param(const std::string& name) const;
  /// Mutable buffer tensor. Records the access when tracing.
  Tensor<T>& buffer(const std::string& name);

  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;
  std::vector<Entry>& entries() noexcept { return entries_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  void set_frozen(const std::string& name, bool frozen);
  /// Applies `frozen` to every parameter whose name starts with `prefix`.
  void set_frozen_prefix(const std::string& prefix, bool frozen);
  void zero_grad();

  void start_trace() const;
  std::set<std::string> stop_trace() const;

  std::size_t num_values(bool include_buffers = false) const;

 private:
  std::size_t lookup(const std::string& name) const;
  void record(const std::string& name) const;

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  mutable bool tracing_ = false;
  mutable std::set<std::string> trace_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace san
