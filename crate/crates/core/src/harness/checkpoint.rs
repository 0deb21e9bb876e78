//! JSON checkpoints: named tensors plus the config that shapes them.
//!
//! A shared encoder block is stored once, under the first layer that uses
//! it.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::NeuralModel;
use crate::encoder::{build_cascade, CascadeConfig, CascadeWeights, EncoderWeights, Linear};
use crate::error::{Error, Result};
use crate::transducer::{JoinerConfig, JoinerWeights, PredictorConfig, PredictorWeights, Vocabulary};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub cascade: CascadeConfig,
    pub predictor: PredictorConfig,
    pub joiner: JoinerConfig,
    pub vocab: Vocabulary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ModelConfig,
    pub weights: BTreeMap<String, Tensor>,
}

/// Encoders, predictor and joiner of one model.
#[derive(Debug, Clone)]
pub struct FullModel {
    pub cascade: CascadeWeights,
    pub joint: NeuralModel,
}

impl FullModel {
    pub fn random(config: &ModelConfig, seed: u64) -> Result<Self> {
        let cascade = build_cascade(&config.cascade, seed)?;
        let joint = NeuralModel::random(
            config.vocab.clone(),
            config.cascade.fast.model_dim,
            &config.predictor,
            &config.joiner,
            seed,
        )?;
        Ok(Self { cascade, joint })
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            cascade: self.cascade.config.clone(),
            predictor: self.joint.predictor.config.clone(),
            joiner: JoinerConfig {
                hidden_dim: self.joint.joiner.enc_proj.output_dim(),
            },
            vocab: self.joint.vocab.clone(),
        }
    }
}

type Visit<'f> = dyn FnMut(String, Vec<usize>, &mut Vec<f32>) -> Result<()> + 'f;

fn visit_linear(name: &str, l: &mut Linear, f: &mut Visit<'_>) -> Result<()> {
    let shape = vec![l.w.rows(), l.w.cols()];
    let mut w = l.w.data().to_vec();
    f(format!("{name}.w"), shape, &mut w)?;
    l.w.data_mut().copy_from_slice(&w);
    let len = l.b.len();
    f(format!("{name}.b"), vec![len], &mut l.b)
}

fn visit_vec(name: String, v: &mut Vec<f32>, f: &mut Visit<'_>) -> Result<()> {
    let len = v.len();
    f(name, vec![len], v)
}

fn visit_encoder(prefix: &str, e: &mut EncoderWeights, f: &mut Visit<'_>) -> Result<()> {
    visit_linear(&format!("{prefix}.input_proj"), &mut e.input_proj, f)?;
    let owners = e.block_owner_layers();
    for (b, owner) in owners.into_iter().enumerate() {
        let p = format!("{prefix}.layer{owner}");
        let l = e.block_mut(b);
        visit_vec(format!("{p}.norm1.gain"), &mut l.norm1_gain, f)?;
        visit_vec(format!("{p}.norm1.bias"), &mut l.norm1_bias, f)?;
        visit_linear(&format!("{p}.attn.q"), &mut l.q, f)?;
        visit_linear(&format!("{p}.attn.k"), &mut l.k, f)?;
        visit_linear(&format!("{p}.attn.v"), &mut l.v, f)?;
        visit_linear(&format!("{p}.attn.out"), &mut l.out, f)?;
        visit_vec(format!("{p}.norm2.gain"), &mut l.norm2_gain, f)?;
        visit_vec(format!("{p}.norm2.bias"), &mut l.norm2_bias, f)?;
        visit_linear(&format!("{p}.ffn1"), &mut l.ffn1, f)?;
        visit_linear(&format!("{p}.ffn2"), &mut l.ffn2, f)?;
    }
    visit_vec(format!("{prefix}.final_norm.gain"), &mut e.final_norm_gain, f)?;
    visit_vec(format!("{prefix}.final_norm.bias"), &mut e.final_norm_bias, f)
}

fn visit_predictor(p: &mut PredictorWeights, f: &mut Visit<'_>) -> Result<()> {
    let shape = vec![p.embedding.rows(), p.embedding.cols()];
    let mut emb = p.embedding.data().to_vec();
    f("predictor.embedding".into(), shape, &mut emb)?;
    p.embedding.data_mut().copy_from_slice(&emb);
    for (i, layer) in p.layers.iter_mut().enumerate() {
        for (name, l) in layer.linears_mut() {
            visit_linear(&format!("predictor.layer{i}.{name}"), l, f)?;
        }
    }
    visit_linear("predictor.output", &mut p.output, f)
}

fn visit_joiner(j: &mut JoinerWeights, f: &mut Visit<'_>) -> Result<()> {
    visit_linear("joiner.enc_proj", &mut j.enc_proj, f)?;
    visit_linear("joiner.pred_proj", &mut j.pred_proj, f)?;
    visit_linear("joiner.output", &mut j.output, f)
}

fn visit_model(m: &mut FullModel, f: &mut Visit<'_>) -> Result<()> {
    visit_encoder("fast", &mut m.cascade.fast, f)?;
    visit_encoder("slow", &mut m.cascade.slow, f)?;
    visit_predictor(&mut m.joint.predictor, f)?;
    visit_joiner(&mut m.joint.joiner, f)
}

pub fn to_checkpoint(model: &FullModel) -> Result<Checkpoint> {
    let mut weights = BTreeMap::new();
    let mut copy = model.clone();
    visit_model(&mut copy, &mut |name, shape, data| {
        weights.insert(name, Tensor { shape, data: data.clone() });
        Ok(())
    })?;
    Ok(Checkpoint {
        version: CHECKPOINT_VERSION,
        config: model.config(),
        weights,
    })
}

/// Rebuilds a model; every expected tensor must be present with its exact
/// shape and no extra tensors are allowed.
pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<FullModel> {
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", ckpt.version)));
    }
    let cfg = &ckpt.config;
    cfg.cascade.validate()?;
    cfg.predictor.validate()?;
    cfg.vocab.validate()?;
    let mut model = FullModel::random(cfg, 0)?;
    let mut used = 0;
    visit_model(&mut model, &mut |name, shape, data| {
        let t = ckpt
            .weights
            .get(&name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        if t.shape != shape || t.data.len() != data.len() {
            return Err(Error::Checkpoint(format!(
                "tensor {name}: shape {:?} with {} values, expected {shape:?}",
                t.shape,
                t.data.len()
            )));
        }
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint(format!("tensor {name} has non-finite values")));
        }
        data.copy_from_slice(&t.data);
        used += 1;
        Ok(())
    })?;
    if used != ckpt.weights.len() {
        let mut known = std::collections::BTreeSet::new();
        visit_model(&mut model.clone(), &mut |name, _, _| {
            known.insert(name);
            Ok(())
        })?;
        let extra: Vec<&String> = ckpt.weights.keys().filter(|k| !known.contains(*k)).collect();
        return Err(Error::Checkpoint(format!("unexpected tensors {extra:?}")));
    }
    Ok(model)
}

pub fn save_checkpoint(path: &Path, model: &FullModel) -> Result<()> {
    let text = serde_json::to_string(&to_checkpoint(model)?)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<FullModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    from_checkpoint(&ckpt)
}

/// Checkpoint with independently drawn weights, for tests of the loader.
pub fn random_checkpoint(config: &ModelConfig, seed: u64) -> Result<Checkpoint> {
    let mut model = FullModel::random(config, 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    visit_model(&mut model, &mut |_, _, data| {
        for v in data.iter_mut() {
            *v = rand::RngExt::random_range(&mut rng, -0.5..0.5);
        }
        Ok(())
    })?;
    to_checkpoint(&model)
}
