//! Compiler for the expressivity constructions.

pub mod assemble;
pub mod blocks;
pub mod factorize;
pub mod gadgets;
pub mod pipeline;
pub mod solve;

pub use assemble::{assemble_thm1_model, assemble_thm3_model, Assembled, BuildManifest};
pub use blocks::{
    build_counter_block, build_order_detect_block, count_flags, count_vector, order_flags, Alphabet, ResidualLayout,
    TripleCatalog,
};
pub use factorize::{factorize_perm_equiv, factorize_swap_equiv, three_max_signature, HashedPermTarget, SwapEquivTable};
pub use gadgets::{build_indicator, build_injective_encoder, build_memorizer, LookupTable};
pub use pipeline::{embed_stages_as_ff, DimensionLedger, IoLayout, Layer, Pipeline};
pub use solve::{rescaled_solve, solve_mul_target, uniform_softmax_value, CounterConfig, OrderDetectorConfig};
