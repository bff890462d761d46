mod checkpoint;
mod forward;
mod params;
mod spec;

pub use checkpoint::Checkpoint;
pub use forward::{
    extract, forward, forward_bound, hhn_forward, party_a_forward, party_b_forward,
    single_view_forward, ContentForward, ModelForward, TitleForward, TitleStep,
};
pub use params::{
    init_theta, set_embedding, ModelParams, Party, PartyAParams, PartyBParams, Theta, EMBEDDING,
};
pub use spec::{ExtractorKind, Inputs, ModelSpec};
