#pragma once

#include <cmath>
#include <map>
#include <string>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace ropnet::core {

// Named parameter tensors with gradient slots of identical shape, plus the
// Adam moment buffers and step counter.
template <typename S>
class ParamStore {
  public:
    struct Entry {
        Tensor<S> value;
        Tensor<S> grad;
        Tensor<S> adam_m;
        Tensor<S> adam_v;
    };

    void add(const std::string& name, Tensor<S> value) {
        if (entries_.count(name))
            throw Error(Status::Usage, "duplicate parameter name: " + name);
        Entry e;
        e.grad = Tensor<S>::zeros(value.shape);
        e.adam_m = Tensor<S>::zeros(value.shape);
        e.adam_v = Tensor<S>::zeros(value.shape);
        e.value = std::move(value);
        entries_.emplace(name, std::move(e));
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    const Tensor<S>& value(const std::string& name) const { return find(name).value; }
    Tensor<S>& value(const std::string& name) { return find(name).value; }
    Tensor<S>& grad(const std::string& name) { return find(name).grad; }
    const Tensor<S>& grad(const std::string& name) const { return find(name).grad; }

    long step() const { return step_; }
    void set_step(long s) { step_ = s; }

    // Ordered map: deterministic iteration for serialization and reduction.
    const std::map<std::string, Entry>& entries() const { return entries_; }
    std::map<std::string, Entry>& entries() { return entries_; }

    void zero_grads() {
        for (auto& [name, e] : entries_)
            std::fill(e.grad.data.begin(), e.grad.data.end(), S(0));
    }

    void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999,
                   double eps = 1e-8) {
        ++step_;
        double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
        double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
        for (auto& [name, e] : entries_) {
            for (size_t i = 0; i < e.value.data.size(); ++i) {
                double g = e.grad.data[i];
                double m = beta1 * e.adam_m.data[i] + (1.0 - beta1) * g;
                double v = beta2 * e.adam_v.data[i] + (1.0 - beta2) * g * g;
                e.adam_m.data[i] = static_cast<S>(m);
                e.adam_v.data[i] = static_cast<S>(v);
                double mhat = m / bc1;
                double vhat = v / bc2;
                e.value.data[i] -= static_cast<S>(lr * mhat / (std::sqrt(vhat) + eps));
            }
        }
    }

  private:
    std::map<std::string, Entry> entries_;
    long step_ = 0;

    const Entry& find(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end())
            throw Error(Status::Usage, "unknown parameter: " + name);
        return it->second;
    }
    Entry& find(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end())
            throw Error(Status::Usage, "unknown parameter: " + name);
        return it->second;
    }
};

// Kaiming-style uniform fan-in initialization for a (fan_in x fan_out) weight.
template <typename S>
Tensor<S> kaiming_uniform(long fan_in, long fan_out, Rng& rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor<S> w = Tensor<S>::zeros({fan_in, fan_out});
    for (S& v : w.data) v = static_cast<S>(rng.uniform(-bound, bound));
    return w;
}

}  // namespace ropnet::core
