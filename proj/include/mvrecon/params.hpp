#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvrecon/autodiff.hpp"
#include "mvrecon/rng.hpp"
#include "mvrecon/tensor.hpp"

namespace mvr {

// Named learnable tensors with one gradient slot each. Insertion order is
// preserved so that every traversal (clipping, optimizer, checkpointing) is
// deterministic.
class ParamStore {
public:
    struct Entry {
        ad::Var var;
        bool trainable = true;
    };

    ad::Var add(const std::string& name, Tensor init, bool trainable = true);
    const ad::Var& operator()(const std::string& name) const;
    bool has(const std::string& name) const { return map_.count(name) != 0; }

    Entry& entry(const std::string& name);
    const std::vector<std::string>& names() const { return order_; }

    void zero_grads();
    void set_trainable_prefix(const std::string& prefix, bool trainable);
    std::size_t num_scalars() const;

    std::map<std::string, Tensor> snapshot() const;
    void load_snapshot(const std::map<std::string, Tensor>& tensors);

    ParamStore clone() const;

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, Entry> map_;
};

}  // namespace mvr
