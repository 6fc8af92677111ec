//! Sigma-protocol testbed for the bare public-key model: composable
//! proofs of knowledge, stage-typed protocol variants, a deterministic
//! concurrent-session harness with snapshot/restore, the interleaving
//! attacks those variants admit, and rewinding-based knowledge
//! extraction experiments over them.

pub mod attacks;
pub mod cke;
pub mod commit;
pub mod enumeration;
pub mod group;
pub mod protocol;
pub mod rng;
pub mod runtime;
pub mod sigma;

pub use group::{GroupElement, GroupError, GroupParams, Scalar};
pub use protocol::{
    HatClaim, Payload, ProtocolWitness, SessionStatus, Statement, Variant, VerifierKeyPair,
};
pub use rng::Tape;
pub use runtime::{RunConfig, RunOutput, RunRecord};
pub use sigma::{Challenge, SigmaSpec, SigmaWitness};
