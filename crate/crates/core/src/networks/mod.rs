//! Function approximators over the tape: MLPs, inference models, decoders
//! and discriminators, plus a binary checkpoint format for their parameters.
//!
//! Every network stores its tensors in a caller-owned [`ParamSet`](crate::ParamSet)
//! and refers to them by index, so one set can hold several networks.

mod adversary;
mod checkpoint;
mod decoder;
mod encoder;
mod mlp;

pub use adversary::{aae_z_only_logit, Adversary, AdversaryForm, AdversarySpec};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use decoder::Decoder;
pub use encoder::{
    BasisMoments, BlackBoxEncoder, Encoder, EncoderSample, GaussianEncoder, MomentEncoder, MomentSample,
    LOG_STD_MAX, LOG_STD_MIN,
};
pub use mlp::{init_params, mlp_forward, Activation, Init, Mlp, MlpSpec};
