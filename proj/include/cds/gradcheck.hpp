#ifndef CDS_GRADCHECK_HPP
#define CDS_GRADCHECK_HPP

#include <cstdint>
#include <iosfwd>

#include "cds/models.hpp"

namespace cds {

enum class CheckStatus { pass, fail, inconclusive };

std::string_view to_string(CheckStatus s);

struct ParameterGradError {
  std::string name;
  double max_rel_err = 0;
  double max_abs_err = 0;
  /// Flat coordinate of the worst relative error; real coordinates first,
  /// then imaginary ("name.re[3]" style in worst_coordinate below).
  Index worst_index = -1;
};

struct GradReport {
  std::string label;
  std::uint64_t seed = 0;
  std::vector<ParameterGradError> parameters;
  double max_rel_err = 0;
  std::string worst_coordinate;
  CheckStatus status = CheckStatus::inconclusive;
  int attempts = 0;
};

struct GradcheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  /// Relative-error denominator floor.
  double floor = 1e-6;
  int max_attempts = 100;
  /// Required normalized kink margin (1 = the documented distances).
  double kink_scale = 1.0;
  /// Also check the cotangent of the input.
  bool check_input = true;
  /// Relative scale of random perturbations applied to parameters before
  /// checking, so that checks do not only run at initialization values.
  double parameter_jitter = 0.1;
  /// Random coordinates checked per parameter and plane (0 = all).
  Index coordinates = 0;
  /// Fourth-order five-point stencil instead of central differences
  /// (subsampled coordinates only).
  bool five_point = false;
  /// Also estimate at step/2 and discard the attempt when the two
  /// estimates disagree beyond the tolerance (subsampled coordinates only).
  bool convergence_check = false;
};

/// A layer spec together with the input shape to check it on.
struct GradcheckCase {
  std::string label;
  LayerSpec spec;
  Shape input_shape;
};

/// One case per layer kind (two extra prototype variants).
std::vector<GradcheckCase> default_gradcheck_cases();

/// Forward function for a generic check: maps an input to an output under
/// a context. Parameters are read from the pointers given alongside.
using ForwardFn =
    std::function<ComplexTensor<double>(const ComplexTensor<double>&, ForwardContext<double>&)>;

/// Compares the tape gradient of L = sum(R_re*y_re + R_im*y_im), R a fixed
/// random projection, against central differences. Inputs are resampled
/// (complex Gaussian, scaled by `input_scale`) until the forward pass stays
/// clear of kinks; after max_attempts the result is inconclusive.
GradReport check_gradients(const std::string& label, const ForwardFn& forward,
                           const std::vector<Parameter<double>*>& params, const Shape& input_shape,
                           std::uint64_t seed, const GradcheckOptions& opts = {},
                           double input_scale = 1.0);

/// Builds the layer at fp64 from `c.spec` with an rng derived from `seed`
/// and checks it.
GradReport gradcheck(const GradcheckCase& c, std::uint64_t seed, const GradcheckOptions& opts = {});

/// Whole-model check at fp64: the projected logits of a batch of
/// `batch` random inputs of the configured shape.
GradReport gradcheck_model(const ModelConfig& cfg, std::uint64_t seed, Index batch = 2,
                           const GradcheckOptions& opts = {});

/// Options used for whole-model checks: subsampled coordinates and a
/// looser kink margin, since a full network has thousands of kinks.
GradcheckOptions model_gradcheck_options();

void write_gradcheck_csv_header(std::ostream& os);
void write_gradcheck_csv_row(std::ostream& os, const GradReport& r);

}  // namespace cds

#endif  // CDS_GRADCHECK_HPP
