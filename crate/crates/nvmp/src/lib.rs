//! Non-conjugate variational message passing for generalized Bayesian mixed
//! regression under quantile, expectile, Huber, SVM and logistic losses.

pub mod baselines;
pub mod error;
pub mod gauss;
pub mod linalg;
pub mod link;
pub mod loss;
pub mod model;
pub mod quadrature;
pub mod scalar;
pub mod simlab;
pub mod svmp;
pub mod vmp;

pub use baselines::kde::{accuracy_score, kde_density, Marginal};
pub use baselines::mfvb::{fit_mfvb_quantile, gig_half_moments, AugmentedState, MfvbFit};
pub use baselines::rwm::{mean_marginal_accuracy, rwm_sample, McmcDraws, RwmOptions};
pub use error::{Error, Result};
pub use link::{psi_triple_linked, LinkSpec};
pub use loss::{psi_triple, LossFamily, LossSpec, PsiEvaluator, PsiTriple, PsiVectors};
pub use model::{
    assemble_rbar, elbo, kl_gaussian_to_prior, kl_invgamma, predictor_moments, DesignBlocks,
    GaussianState, InvGammaState, PredictorMoments, PriorConfig, VariationalState,
};
pub use quadrature::{agh_expect, gauss_hermite_rule, psi_triple_quadrature, QuadratureRule};
pub use scalar::Real;
pub use simlab::{
    read_dataset, run_experiment, simulate, write_dataset, Dataset, ExperimentPlan, SimConfig,
    SimFamily,
};
pub use svmp::{
    fit_svmp, learning_rate, sample_minibatch, svmp_step, NaturalParams, StochasticOptions,
};
pub use vmp::{fit_vmp, gauss_step, update_sigma_eps, update_sigma_h, FitOptions, FitReport};

pub type LossSpec64 = LossSpec<f64>;
pub type DesignBlocks64 = DesignBlocks<f64>;
pub type PriorConfig64 = PriorConfig<f64>;
pub type VariationalState64 = VariationalState<f64>;
