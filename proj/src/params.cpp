#include "mvrecon/params.hpp"

#include <stdexcept>

namespace mvr {

ad::Var ParamStore::add(const std::string& name, Tensor init, bool trainable) {
    if (map_.count(name)) throw std::runtime_error("ParamStore: duplicate parameter " + name);
    Entry e{ad::leaf(std::move(init)), trainable};
    order_.push_back(name);
    auto it = map_.emplace(name, std::move(e)).first;
    return it->second.var;
}

const ad::Var& ParamStore::operator()(const std::string& name) const {
    auto it = map_.find(name);
    if (it == map_.end()) throw std::runtime_error("ParamStore: unknown parameter " + name);
    return it->second.var;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
    auto it = map_.find(name);
    if (it == map_.end()) throw std::runtime_error("ParamStore: unknown parameter " + name);
    return it->second;
}

void ParamStore::zero_grads() {
    for (const auto& name : order_) map_[name].var->grad.fill(0.0);
}

void ParamStore::set_trainable_prefix(const std::string& prefix, bool trainable) {
    for (const auto& name : order_)
        if (name.rfind(prefix, 0) == 0) map_[name].trainable = trainable;
}

std::size_t ParamStore::num_scalars() const {
    std::size_t n = 0;
    for (const auto& name : order_) n += map_.at(name).var->value.size();
    return n;
}

std::map<std::string, Tensor> ParamStore::snapshot() const {
    std::map<std::string, Tensor> out;
    for (const auto& name : order_) out.emplace(name, map_.at(name).var->value);
    return out;
}

void ParamStore::load_snapshot(const std::map<std::string, Tensor>& tensors) {
    for (const auto& name : order_) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw std::runtime_error("load_snapshot: missing " + name);
        Entry& e = map_[name];
        if (it->second.shape != e.var->value.shape)
            throw std::runtime_error("load_snapshot: shape mismatch for " + name);
        e.var->value.v = it->second.v;
    }
}

ParamStore ParamStore::clone() const {
    ParamStore out;
    for (const auto& name : order_) {
        const Entry& e = map_.at(name);
        out.add(name, e.var->value, e.trainable);
    }
    return out;
}

}  // namespace mvr
