#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "cdinet/autograd.hpp"
#include "cdinet/rng.hpp"

namespace cdinet {

/// Initialization used for every conv/FC weight and bias that has no
/// pretrained source: U(-1/sqrt(fan_in), +1/sqrt(fan_in)).
Tensor fan_in_uniform(Shape shape, int fan_in, Rng& rng);

/// Base for parameterized blocks. Children are registered by address, so
/// modules are pinned in place (no copies/moves).
class Module {
 public:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  virtual ~Module() = default;

  std::vector<std::pair<std::string, Var>> named_parameters() const;
  std::vector<Var> parameters() const;

  /// Number of trainable scalars.
  std::size_t parameter_count() const;

 protected:
  Var add_parameter(const std::string& name, Tensor init);
  void add_child(const std::string& name, Module* child);

 private:
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Var>>& out) const;

  std::vector<std::pair<std::string, Var>> params_;
  std::vector<std::pair<std::string, Module*>> children_;
};

}  // namespace cdinet
