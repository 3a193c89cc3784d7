"""Quasinormal modes of 1-D open wave cavities.

Spectra of piecewise-constant leaky cavities, the generalized bilinear
inner product and bi-orthogonal mode expansions, modal versus direct time
evolution, and complex-eigenvalue perturbation theory, with a CLI front
end (``qnm1d``).
"""

from .biorthogonal import (
    BilinearValue,
    GramReport,
    bilinear_map,
    check_H_symmetry,
    dual,
    expansion_coefficients,
    gram_matrix,
    normalize_mode,
    sum_rule_residuals,
    superpose,
)
from .dynamics import (
    EvolutionTrace,
    compare_evolutions,
    evolve_fdtd,
    evolve_qnm,
    fit_ringdown,
    trace_energy,
)
from .model import (
    DensityProfile,
    Family,
    PointMass,
    Segment,
    Side,
    TwoComponentState,
    evaluate_density,
    load_model,
    model_json,
    model_to_dict,
    parse_model,
    quadrature_grid,
    save_model,
    state_from_callables,
    state_on_uniform_grid,
    uniform_grid,
    validate_model,
)
from .perturb import (
    PerturbationSpec,
    exact_shift_oracle,
    first_order_shift,
    matrix_element,
    second_order_shift,
)
from .spectrum import (
    QnmMode,
    SearchRegion,
    build_eigenfunction,
    characteristic,
    close_conjugate,
    conjugate_partner,
    count_zeros,
    find_modes,
    propagate,
    sample_mode,
)

__version__ = "0.1.0"
