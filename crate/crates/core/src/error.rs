use alloc::boxed::Box;
use alloc::string::String;

use crate::synthesis::GainSet;

pub type Result<T> = core::result::Result<T, Error>;

/// Algorithm step at which a synthesis run gave up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthesisStep {
    ObserverInit,
    Riccati,
    ObserverGainSearch,
    LyapunovGainSearch,
    Loop,
}

impl core::fmt::Display for SynthesisStep {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let s = match self {
            SynthesisStep::ObserverInit => "step 1 (observer initialization)",
            SynthesisStep::Riccati => "step 2 (Riccati solve)",
            SynthesisStep::ObserverGainSearch => "step 3 (observer gain search)",
            SynthesisStep::LyapunovGainSearch => "step 4 (Lyapunov matrix search)",
            SynthesisStep::Loop => "step 5 (iteration cap)",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("graph structure: {0}")]
    Structure(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("problem too large: {0}")]
    Size(String),
    #[error("infeasible at {step}: {reason}")]
    Infeasible {
        step: SynthesisStep,
        reason: String,
        best: Option<Box<GainSet>>,
    },
    #[error("integration failed at t = {last_time}: {reason}")]
    Integration { last_time: f64, reason: String },
}

impl Error {
    pub(crate) fn infeasible(step: SynthesisStep, reason: impl Into<String>) -> Self {
        Error::Infeasible {
            step,
            reason: reason.into(),
            best: None,
        }
    }
}
