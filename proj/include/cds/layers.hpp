#ifndef CDS_LAYERS_HPP
#define CDS_LAYERS_HPP

#include "cds/layers/batchnorm.hpp"
#include "cds/layers/econv.hpp"
#include "cds/layers/invariant.hpp"
#include "cds/layers/nonlinear.hpp"
#include "cds/layers/pooling.hpp"
#include "cds/layers/prototype.hpp"
#include "cds/layers/real.hpp"
#include "cds/layers/wfm.hpp"

namespace cds {

/// Every layer kind make_layer understands.
const std::vector<std::string>& layer_kinds();

/// Builds a freshly initialized layer from its spec. Unknown kinds and
/// missing hyperparameters raise ConfigError.
template <typename Scalar>
LayerPtr<Scalar> make_layer(const LayerSpec& spec, Rng& rng);

}  // namespace cds

#endif  // CDS_LAYERS_HPP
