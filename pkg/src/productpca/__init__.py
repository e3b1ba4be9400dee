"""Product-PCA: split-product spectrum estimation and its ordering theory.

The package has three layers.  `estimators` fits spectra to data (plain
PCA, the split-product estimator, and its cross-matrix variant for p >> n).
`population` works on exact spectral models and verifies the second-order
perturbation theory behind the estimator's ordering robustness.
`simulation` and `faces` exercise both layers end to end; `cli` wraps
everything behind a reproducible command line.
"""

__version__ = "0.1.0"

from .errors import (
    DegenerateIntegration,
    FormatError,
    IndexMatchFailure,
    InvalidInput,
    NotPositiveSemidefinite,
    ProductPcaError,
    RankDeficient,
    StudyIncomplete,
    TieError,
)
from .linalg import (
    SpectralDecomposition,
    SvdResult,
    orthonormal_basis,
    psd_sqrt,
    subspace_similarity,
    svd_desc,
    sym_eig,
    symmetrize,
)
from .estimators import (
    SpectrumEstimate,
    SplitPair,
    cdm_pca_fit,
    integrate_singular_vectors,
    load_data_matrix,
    pca_fit,
    ppca_fit,
    random_split,
    sample_covariance,
)
from .population import (
    MonteCarloDelta,
    PerturbationScenario,
    SpectralModel,
    TheoryReport,
    asymptotic_cov_gaussian,
    covariance_of,
    d_vector,
    delta,
    delta_prime,
    eigvec_alignment_pca,
    eigvec_alignment_ppca,
    eigvec_perturbation_theory,
    flip_leading_direction,
    flip_thresholds,
    m_pseudoinverse,
    monte_carlo_delta,
    pca_functional,
    perturbed_covariance,
    perturbed_rho_pca,
    perturbed_rho_ppca,
    perturbed_second_moment,
    ppca_functional,
    rho,
    tau_jk_numeric,
    tau_jk_theory,
    tau_numeric,
    tau_perpendicular_theory,
    tau_theory,
)
from .simulation import (
    SimulationConfig,
    StudyResult,
    XiCurve,
    gen_spiked_model,
    monte_carlo_asymptotics,
    run_study,
    run_trial,
    sample_mixture,
    sample_mvt,
)
from .faces import (
    ImageCorpus,
    contaminate_s1,
    contaminate_s2,
    load_corpus,
    reconstruct,
    save_corpus,
)

__all__ = [name for name in dir() if not name.startswith("_")]
