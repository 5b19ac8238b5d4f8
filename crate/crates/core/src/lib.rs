pub mod autodiff;
pub mod distributions;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod networks;
pub mod training;
pub mod vae;

#[cfg(test)]
mod test_oracle;

pub use autodiff::{Bound, ParamSet, Tape, Tensor, Var};
pub use error::{Error, Result};
