//! Phoneme CTC recognizer: strided convolution frontend, conformer encoder,
//! greedy and lexicon-constrained beam decoding with an n-gram LM.

pub mod ctc;
pub mod decode;
mod error;
pub mod lexicon;
pub mod lm;
mod model;
pub mod specaugment;
mod train;

pub use ctc::{ctc_loss, ctc_loss_and_grad, min_frames};
pub use decode::{beam_decode, beam_search, greedy_decode, BeamConfig, Hypothesis, LexiconTrie, Scoring};
pub use error::AsrError;
pub use lexicon::{transcribe, G2p, LetterG2p, Lexicon, Vocab, EOW};
pub use lm::{LmScorer, NgramLm};
pub use model::{AsrConfig, AsrExample, AsrModel, FeatureNorm};
pub use specaugment::{specaugment, MaskSpec, SpecAugmentConfig};
pub use train::{labels_for_text, train_asr, AsrTrainConfig, AsrTrainReport};
