//! Weak supervision by separating a task path from an LF path.
//!
//! A shared encoder feeds two heads: one scores the `c` classes, the other
//! scores the `m` labeling functions. Their logits are recombined in LF
//! space and trained to match the distribution of LF matches, so LF-specific
//! quirks can be absorbed by the LF head while the class head, used at
//! prediction time, keeps the signal shared across LFs of a class.
//!
//! ```no_run
//! use sepll::{config::RunConfig, pipeline::Prepared, trainer};
//!
//! # fn main() -> sepll::Result<()> {
//! let cfg = RunConfig::from_toml("[data.synth]\n")?;
//! let set = cfg.load_data()?;
//! let prepared = Prepared::new(&set, &cfg.lfs, &cfg.encoder)?;
//! let params = trainer::init_params(prepared.vocab.len(), &prepared.mapping, &cfg.encoder, &cfg.model, cfg.train.seed)?;
//! let (best, history) = trainer::train(&prepared.train_inputs()?, params, &cfg.train)?;
//! println!("best dev {:.3} at epoch {}", history.best_dev_metric, history.best_epoch);
//! # let _ = best;
//! # Ok(())
//! # }
//! ```

pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod lf_engine;
pub mod manifest;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
