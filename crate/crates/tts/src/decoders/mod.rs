mod ar;
mod diffusion;
mod direct;
mod flow;

pub use ar::{ArLstmDecoder, ArLstmParams};
pub use diffusion::{
    reverse_diffusion, score_from_prediction, DiffusionDecoder, DiffusionParams, ScoreUNet,
    UNetParams,
};
pub use direct::{NarLstmDecoder, Postnet, TransformerDecoder};
pub use flow::{FlowDecoder, FlowOutput, FlowParams};
