//! Text-dependent speaker verification with pass-phrase dependent background
//! models (PBMs) over GMM-UBM, HMM-UBM and i-vector/PLDA back ends.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod gmm;
pub mod hmm;
pub mod io;
pub mod ivector;
pub mod numerics;
pub mod pbm;
pub mod pipeline;

pub use error::{Error, Result};
