//! Toy spatial-temporal diffusion transformer: patchified latents through
//! alternating spatial/temporal attention blocks with text cross-attention,
//! conditioned through a zero-initialized control branch, trained and
//! sampled with a linear-beta DDPM chain.

pub mod checkpoint;
pub mod config;
pub mod diffusion;
pub mod model;
pub mod patch;
pub mod text;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{BlockKind, ToyStDiTConfig};
pub use diffusion::{
    draw_noise, generate, generate_autoregressive, loss_for_draw, noised_input, train_loop,
    train_step, NoiseDraw, NoiseSchedule, Sample,
};
pub use model::{CondInputs, ToyStDiT};
pub use patch::{patch_rearrange, patch_restore, patchify, tokens_per_frame, unpatchify};
pub use text::{stable_hash64, text_embedding};
