//! Synthetic data generators and the Monte Carlo MSE harness.

mod arma;
mod bootstrap;
mod dispatch;
mod monte_carlo;

pub use arma::{default_burn_in, simulate_arma, simulate_varma};
pub use bootstrap::{bootstrap_oracle_ate, bootstrap_simulate, bootstrap_simulate_with, peak_dummy, peak_dummy_column, BootstrapOptions};
pub use dispatch::{
    dispatch_oracle_ate, dispatch_run, dispatch_simulate, Component1d, Component2d, DispatchConfig, DispatchOutput,
    Fare, StepTrace, TruncGauss,
};
pub use monte_carlo::{monte_carlo_mse, FitSpec, Generator, McConfig, McReport, ReplicateFailure, RuntimeMeta};
