#include "cdinet/module.hpp"

#include <cmath>

namespace cdinet {

Tensor fan_in_uniform(Shape shape, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = rng.uniform(-bound, bound);
  }
  return t;
}

Var Module::add_parameter(const std::string& name, Tensor init) {
  Var p = make_var(std::move(init), /*requires_grad=*/true);
  params_.emplace_back(name, p);
  return p;
}

void Module::add_child(const std::string& name, Module* child) {
  children_.emplace_back(name, child);
}

void Module::collect(const std::string& prefix,
                     std::vector<std::pair<std::string, Var>>& out) const {
  for (const auto& [name, p] : params_) {
    out.emplace_back(prefix.empty() ? name : prefix + "." + name, p);
  }
  for (const auto& [name, child] : children_) {
    child->collect(prefix.empty() ? name : prefix + "." + name, out);
  }
}

std::vector<std::pair<std::string, Var>> Module::named_parameters() const {
  std::vector<std::pair<std::string, Var>> out;
  collect("", out);
  return out;
}

std::vector<Var> Module::parameters() const {
  std::vector<Var> out;
  for (auto& [name, p] : named_parameters()) out.push_back(p);
  return out;
}

std::size_t Module::parameter_count() const {
  std::size_t count = 0;
  for (auto& [name, p] : named_parameters()) count += p->value.size();
  return count;
}

}  // namespace cdinet
