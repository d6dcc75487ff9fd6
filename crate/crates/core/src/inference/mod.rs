//! Wake-phase inference: a Bayesian linear regression over the sampled
//! functions, trained by minimizing the negated α-energy.

mod adam;
mod energy;
mod posterior;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use energy::{
    alpha_energy, alpha_energy_terms, alpha_local_term, elbo_local_term, kl_to_standard_normal, kl_var, EnergyTerms,
    QVars,
};
pub use posterior::{CoefficientPosterior, VariationalParams};
pub use train::{train, Sigma2Mode, TrainConfig, TrainedModel};
