use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::transducer::{
    JoinerConfig, JoinerWeights, PredictorConfig, PredictorState, PredictorWeights, TokenId, Vocabulary,
};

/// Predictor + joiner as seen by the search.
pub trait JointModel {
    type State: Clone;

    fn output_dim(&self) -> usize;
    fn blank_id(&self) -> TokenId;
    fn start_state(&self) -> Self::State;
    /// Consumes `token` (`None` = start of sequence).
    fn predict(&self, token: Option<TokenId>, state: &Self::State) -> Result<(Vec<f32>, Self::State)>;
    /// Normalized log distribution for one encoder frame.
    fn joint(&self, enc_frame: &[f32], prediction: &[f32]) -> Result<Vec<f64>>;
}

/// Recurrent predictor and feed-forward joiner shared by both encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralModel {
    pub vocab: Vocabulary,
    pub predictor: PredictorWeights,
    pub joiner: JoinerWeights,
}

impl NeuralModel {
    pub fn random(
        vocab: Vocabulary,
        enc_dim: usize,
        predictor: &PredictorConfig,
        joiner: &JoinerConfig,
        seed: u64,
    ) -> Result<Self> {
        vocab.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0DEC_0DE5);
        let p = PredictorWeights::random(predictor, vocab.output_dim(), &mut rng)?;
        let j = JoinerWeights::random(enc_dim, predictor.output_dim, joiner, vocab.output_dim(), &mut rng);
        Ok(Self {
            vocab,
            predictor: p,
            joiner: j,
        })
    }
}

impl JointModel for NeuralModel {
    type State = PredictorState;

    fn output_dim(&self) -> usize {
        self.vocab.output_dim()
    }

    fn blank_id(&self) -> TokenId {
        self.vocab.blank_id
    }

    fn start_state(&self) -> PredictorState {
        self.predictor.initial_state()
    }

    fn predict(&self, token: Option<TokenId>, state: &PredictorState) -> Result<(Vec<f32>, PredictorState)> {
        self.predictor.step(token, state)
    }

    fn joint(&self, enc_frame: &[f32], prediction: &[f32]) -> Result<Vec<f64>> {
        self.joiner.log_probs(enc_frame, prediction)
    }
}
