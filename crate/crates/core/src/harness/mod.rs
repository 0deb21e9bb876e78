//! File formats, configuration, the corpus runner and fixture generators.

mod checkpoint;
mod config;
mod features;
mod fixtures;
mod manifest;
mod runner;

pub use checkpoint::{
    from_checkpoint, load_checkpoint, random_checkpoint, save_checkpoint, to_checkpoint, Checkpoint, FullModel,
    ModelConfig, Tensor, CHECKPOINT_VERSION,
};
pub use config::{ModelSource, RunConfig};
pub use features::{decode_features, encode_features, load_features, write_features};
pub use fixtures::{
    gen_fixtures, load_lattice_fixtures, random_lattice, script_decode_config, scripted_corpus, write_scripted_corpus,
    FixtureSizes, ScriptedUtterance, SCRIPT_FRAMES,
};
pub use manifest::{load_manifest, parse_manifest, write_manifest, ManifestEntry};
pub use runner::{decode_utterance, load_model, load_table, report_json, run_manifest, DecodedUtterance, LoadedModel, RunOutput};
