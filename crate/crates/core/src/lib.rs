//! Multichannel speech dereverberation.
//!
//! The crate combines delayed multichannel linear prediction (MCLP) in the
//! STFT domain with an MVDR spatial filter constrained by the relative
//! transfer function (RTF) of the desired source. Two estimators are
//! provided:
//!
//! * [`batch_derev`] iterates prediction filters, RTF, spatial filter and
//!   the desired-signal PSD over a whole recording (static sources), along
//!   with the plain MCLP, cascaded and superdirective baselines.
//! * [`online_derev`] tracks time-varying prediction filters with per-bin
//!   Kalman recursions and updates the RTF and spatial filter frame by frame
//!   (moving sources).
//!
//! Supporting modules cover the STFT front end ([`stft`]), an image-method
//! room simulator ([`rir_sim`]), objective metrics ([`metrics`]) and the
//! shared linear algebra ([`numerics`]).

pub mod batch_derev;
pub mod error;
pub mod filters;
pub mod metrics;
pub mod numerics;
pub mod online_derev;
pub mod rir_sim;
pub mod speech;
pub mod stft;

pub use error::{Error, Result};
pub use num_complex::Complex64;
