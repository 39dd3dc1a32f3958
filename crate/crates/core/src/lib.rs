//! Exact moments, simulation and limit-process sampling for the nested
//! Karlin occupancy scheme.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod genweights;
pub mod limit;
pub mod moments;
pub mod numeric;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod verify;
pub mod weights;

pub use error::{Error, HypothesisViolated, Result};
pub use genweights::{enumerate_generation, GenerationChain, GenerationWeights};
pub use limit::{GaussGrid, SpectralReport};
pub use moments::{limit_cov, MomentTable};
pub use simulate::{CampaignResult, CampaignSpec, OccupancyPath};
pub use stats::{ClaimEntry, MomentAccumulator};
pub use verify::{VerificationReport, VerifyOptions};
pub use weights::{WeightKind, WeightModel};
