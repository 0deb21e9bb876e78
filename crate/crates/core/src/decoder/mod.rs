//! Transducer beam search and the parallel fast/slow decoder.

mod beam;
mod hypothesis;
mod model;
mod parallel;
mod record;
pub(crate) mod space;
pub mod table;

pub use beam::{beam_search, DEFAULT_MAX_SYMBOLS_PER_FRAME};
pub use hypothesis::{beam_order, best_hypothesis, BeamSet, Hypothesis};
pub use model::{JointModel, NeuralModel};
pub use parallel::{
    merge_beams, parallel_decode, CascadeSource, DecodeConfig, DecodeOutput, NeuralSource, Pass, PartialTimeline,
    SourceStep, SpaceMode, TableSource, TimelineRecord,
};
pub use record::{DecodeRecord, RecordCounters, TimelineEntry, TokenEmission};
pub use space::{NodeHandle, SearchSpace, SpaceCounters};
pub use table::TableModel;
