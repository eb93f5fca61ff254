// SPDX-License-Identifier: MIT OR Apache-2.0

//! Decoder-only transformer inference with activation capture and patching.

pub mod error;
pub mod format;
pub mod forward;
pub mod generate;
pub mod intervene;
pub mod model;
pub mod rng;
pub mod tokenizer;

pub use error::{EngineError, LoadError, Result, TokenizerError};
pub use forward::{
    forward, softmax, ActivationTrace, ForwardOptions, ForwardResult, HookSite, ResolvedPatch,
    Session,
};
pub use generate::{
    batch_generate, generate, sample_next, BatchItem, ChatTemplate, Completion, GenerationRecord,
    RenderedPrompt, SamplerConfig, StopReason,
};
pub use intervene::{
    capture, distortion_baseline, resolve_intervention, resolve_window, DistortionParams,
    InterventionSpec,
};
pub use model::{MlpKind, ModelConfig, NormKind, TransformerModel};
pub use rng::CounterRng;
pub use tokenizer::{TokenEncoding, Tokenizer, TokenizerFile};

/// Engine version recorded in report provenance.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
