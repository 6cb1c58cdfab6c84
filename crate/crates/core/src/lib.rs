//! Design and analysis of time-series A/B experiments with controlled
//! (V)ARMA models.
//!
//! The workflow is: simulate or load a [`PanelData`], fit it with
//! [`estimation::fit_arma_yw`] / [`estimation::fit_varma_yw`], evaluate
//! designs with [`asymptotics`], search for better ones with [`optimal`], and
//! check the result empirically with [`simulation::monte_carlo_mse`].

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod designs;
pub mod error;
pub mod estimation;
pub mod io;
pub mod linalg;
pub mod model;
pub mod optimal;
pub mod panel;
pub mod rng;
pub mod simulation;

pub use asymptotics::{asymptotic_mse, ck_from_fit, efficiency_indicators, CkCoefficients, EfficiencyReport, Recommendation};
pub use designs::{autocov, generate, xi, DesignSpec, PolicyTable, TreatmentSequence, Variant, Xi};
pub use error::{Error, Result};
pub use estimation::{
    estimate_ate, fit_arma_yw, fit_ma_innovations, fit_varma_yw, fit_vma_innovations, select_order, Criterion, FitParams,
    FitResult,
};
pub use model::{ArmaModel, Model, Stability, StateSpaceForm, VarmaModel};
pub use optimal::{exhaustive_search, policy_objective, solve_alpha, value_iteration, MdpSpec};
pub use panel::PanelData;
