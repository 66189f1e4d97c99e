//! Explicit regularizers that gradient methods reproduce implicitly.

mod dropout;
mod lsq;
mod margin;
mod prox;
mod schatten;

pub use dropout::{
    dropout_deterministic_objective, dropout_global_equivalence, dropout_mc_objective, DropoutEquivalenceReport,
    DropoutProblem, FactorSearch,
};
pub use lsq::{least_squares_bias_check, LeastSquaresReport};
pub use margin::{
    exp_loss_trainer, max_exp_loss_step, max_margin_oracle, vector_angle, ExpLossOutcome, MarginProblem,
    MarginSolution, EXP_CLIP, MAX_DIM, MAX_POINTS, MAX_POINT_NORM,
};
pub use prox::{
    nuclear_norm, nuclear_objective, nuclear_prox, squared_nuclear_objective, squared_nuclear_prox,
    squared_nuclear_shrink,
};
pub use schatten::{
    balanced_factorization, gauge_descent, half_sq_norms, random_factorization, schatten_power_sum,
    variational_schatten_value, GaugeDescentOutcome, SchattenValues,
};
