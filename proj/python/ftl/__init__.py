"""SPD manifold network, federated transfer learning and Riemannian baselines."""

from ._core import (
    ConfigError,
    ConvergenceError,
    DivergenceError,
    FormatError,
    MdmModel,
    TsmModel,
    baseline,
    covariance,
    eig_clamp,
    fedavg,
    frechet_mean,
    gaussian_kernel,
    geodesic_distance,
    load_trials,
    log_map,
    mdm_train,
    mmd2,
    save_trials,
    spd_exp,
    spd_log,
    spd_sqrt,
    sym_eig,
    synth,
    train_adaptive,
    train_specific,
    tsm_train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
