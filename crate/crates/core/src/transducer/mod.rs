//! Predictor, joiner and the transducer loss family.

mod joiner;
mod lattice;
mod loss;
pub mod oracle;
mod predictor;
mod vocab;

pub use joiner::{JoinerConfig, JoinerWeights};
pub use lattice::{LatticeFixture, LossLattice};
pub use loss::{
    cascade_loss, combined_loss, fastemit_loss, lattice_loss, restricted_loss, transducer_loss, CascadeLoss,
    LossConfig, LossOutput, PathRestriction, DEFAULT_LAMBDA,
};
pub use predictor::{PredictorConfig, PredictorState, PredictorWeights};
pub use vocab::{word_end_indices, TokenId, Vocabulary, WORD_BOUNDARY};
