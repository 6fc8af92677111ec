//! Stage-typed session state machines for the four protocol variants.
//!
//! Every variant shares the same skeleton: the verifier opens by proving
//! knowledge of one of its key preimages (Stage-1), the prover commits
//! (Stage-2, shape depends on the variant), then the prover proves a
//! variant-specific OR statement (Stage-3). The coin-tossing variant
//! replaces the Stage-3 challenge by a committed-coin exchange.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::commit::{
    eg_commit_with_basis, tc_commit_bit, tc_open, ElGamalCommitment, TcOpening,
    TrapdoorCommitment,
};
use crate::group::{GroupElement, GroupParams, Scalar};
use crate::rng::Tape;
use crate::sigma::{
    Challenge, FirstMsg, ProverState, Response, SigmaCtx, SigmaSpec, SigmaWitness, Transcript,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("invalid statement: {0}")]
    InvalidStatement(String),
    #[error("invalid witness: {0}")]
    InvalidWitness(String),
    #[error("protocol violation: {0}")]
    Violation(String),
}

/// The protocol variants under study: the double-commitment design, the
/// two weakened single-commitment designs, and the committed-coin
/// structure the oldest attack targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Full,
    NoCw,
    NoCsk,
    Dv05Structure,
}

impl Variant {
    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "full" => Some(Variant::Full),
            "no-cw" => Some(Variant::NoCw),
            "no-csk" => Some(Variant::NoCsk),
            "dv05" => Some(Variant::Dv05Structure),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoCw => "no-cw",
            Variant::NoCsk => "no-csk",
            Variant::Dv05Structure => "dv05",
        }
    }
}

/// Left clause of a key-mixing statement: either a discrete-log claim on
/// a subgroup member, or the empty claim, which is unprovable yet keeps
/// the composite statement true through the key clause.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HatClaim {
    Dlog(GroupElement),
    Empty,
}

/// Per-session common input. `KeyMixing` folds the verifier's public key
/// into the claimed language, the adaptive selection the model allows.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statement {
    Dlog {
        x: GroupElement,
    },
    KeyMixing {
        hat: HatClaim,
        y0: GroupElement,
        y1: GroupElement,
    },
}

/// Verifier key material: pk = (g^{s_0}, g^{s_1}), sk = (s_b, b).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierKeyPair {
    pub y0: GroupElement,
    pub y1: GroupElement,
    pub s: Scalar,
    pub b: u8,
}

impl VerifierKeyPair {
    pub fn from_parts(params: &GroupParams, s0: &Scalar, s1: &Scalar, b: u8) -> Self {
        debug_assert!(b <= 1);
        VerifierKeyPair {
            y0: params.exp_g(s0),
            y1: params.exp_g(s1),
            s: if b == 0 { s0.clone() } else { s1.clone() },
            b,
        }
    }

    pub fn pk(&self) -> (GroupElement, GroupElement) {
        (self.y0.clone(), self.y1.clone())
    }

    /// The key the verifier actually uses, g^s = y_b.
    pub fn used_key(&self) -> &GroupElement {
        if self.b == 0 {
            &self.y0
        } else {
            &self.y1
        }
    }
}

/// Uniform s_0, s_1 and bit b; the unused preimage is discarded.
pub fn keygen(params: &GroupParams, tape: &mut Tape) -> VerifierKeyPair {
    let s0 = params.random_scalar(tape);
    let s1 = params.random_scalar(tape);
    let b = tape.bit();
    VerifierKeyPair::from_parts(params, &s0, &s1, b)
}

/// R_KEY: s is a preimage of either half of the public key.
pub fn r_key(params: &GroupParams, pk: &(GroupElement, GroupElement), s: &Scalar) -> bool {
    let y = params.exp_g(s);
    y == pk.0 || y == pk.1
}

/// What an honest prover knows about its session statement.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProtocolWitness {
    /// w with g^w = x for a plain discrete-log statement.
    Dlog(Scalar),
    /// w with g^w = x̂ for the left clause of a key-mixing statement.
    Hat(Scalar),
    /// A key preimage g^s = y_branch; proves through the key clause the
    /// way the zero-knowledge simulator does.
    KeyPreimage { s: Scalar, branch: u8 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    AwaitStage1First,
    AwaitStage1Challenge,
    AwaitStage1Response,
    AwaitStage2,
    AwaitStage3First,
    AwaitStage3Challenge,
    AwaitStage3Response,
    Accepted,
    Rejected,
    Aborted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionStatus {
    Open,
    Accepted,
    Rejected,
    Aborted,
}

impl Stage {
    pub fn status(&self) -> SessionStatus {
        match self {
            Stage::Accepted => SessionStatus::Accepted,
            Stage::Rejected => SessionStatus::Rejected,
            Stage::Aborted => SessionStatus::Aborted,
            _ => SessionStatus::Open,
        }
    }

    fn order(&self) -> u8 {
        match self {
            Stage::AwaitStage1First => 0,
            Stage::AwaitStage1Challenge => 1,
            Stage::AwaitStage1Response => 2,
            Stage::AwaitStage2 => 3,
            Stage::AwaitStage3First => 4,
            Stage::AwaitStage3Challenge => 5,
            Stage::AwaitStage3Response => 6,
            Stage::Accepted | Stage::Rejected | Stage::Aborted => 7,
        }
    }
}

/// Protocol message payloads. Tags must match the receiving session's
/// stage; anything else is a violation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Payload {
    Stage1First {
        a: FirstMsg,
    },
    Stage1Challenge {
        s: Challenge,
    },
    Stage1Response {
        z: Response,
    },
    Stage2Commitments {
        c_w: Option<ElGamalCommitment>,
        c_sk: Option<ElGamalCommitment>,
    },
    Stage3First {
        a: FirstMsg,
    },
    Stage3Challenge {
        s: Challenge,
    },
    Stage3Response {
        z: Response,
    },
    Dv05Phase2 {
        c_e: Vec<TrapdoorCommitment>,
    },
    Dv05Phase3A {
        a: FirstMsg,
    },
    Dv05Phase3Q {
        q: Challenge,
    },
    Dv05Phase3Z {
        e_hat: Challenge,
        openings: Vec<TcOpening>,
        z: Response,
    },
}

impl Payload {
    pub fn tag(&self) -> &'static str {
        match self {
            Payload::Stage1First { .. } => "stage1-first",
            Payload::Stage1Challenge { .. } => "stage1-challenge",
            Payload::Stage1Response { .. } => "stage1-response",
            Payload::Stage2Commitments { .. } => "stage2-commitments",
            Payload::Stage3First { .. } => "stage3-first",
            Payload::Stage3Challenge { .. } => "stage3-challenge",
            Payload::Stage3Response { .. } => "stage3-response",
            Payload::Dv05Phase2 { .. } => "dv05-phase2",
            Payload::Dv05Phase3A { .. } => "dv05-phase3-a",
            Payload::Dv05Phase3Q { .. } => "dv05-phase3-q",
            Payload::Dv05Phase3Z { .. } => "dv05-phase3-z",
        }
    }
}

/// Session-addressed message as it appears in traces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub session: u64,
    pub payload: Payload,
}

/// Stage-1 statement: knowledge of a preimage of y0 or y1.
pub fn stage1_spec(pk: &(GroupElement, GroupElement)) -> SigmaSpec {
    SigmaSpec::or(
        SigmaSpec::Schnorr { x: pk.0.clone() },
        SigmaSpec::Schnorr { x: pk.1.clone() },
    )
}

/// The bare claim a statement makes, before any commitment clauses.
pub fn claim_spec(params: &GroupParams, statement: &Statement) -> SigmaSpec {
    match statement {
        Statement::Dlog { x } => SigmaSpec::Schnorr { x: x.clone() },
        Statement::KeyMixing { hat, y0, y1 } => {
            let hat_spec = match hat {
                HatClaim::Dlog(x) => SigmaSpec::Schnorr { x: x.clone() },
                HatClaim::Empty => SigmaSpec::empty_claim(params),
            };
            SigmaSpec::or(hat_spec, stage1_spec(&(y0.clone(), y1.clone())))
        }
    }
}

fn commit_open_spec(x: &GroupElement, c: &ElGamalCommitment) -> SigmaSpec {
    SigmaSpec::CommitOpen {
        x: x.clone(),
        h: c.h.clone(),
        g_bar: c.g_bar.clone(),
        h_bar: c.h_bar.clone(),
    }
}

/// Key clause over a c_sk commitment: it opens to a preimage of y0 or y1.
fn csk_clause(pk: &(GroupElement, GroupElement), c_sk: &ElGamalCommitment) -> SigmaSpec {
    SigmaSpec::or(commit_open_spec(&pk.0, c_sk), commit_open_spec(&pk.1, c_sk))
}

/// The Stage-3 statement for a session, assembled from the variant, the
/// common input and the Stage-2 commitments.
pub fn stage3_spec(
    params: &GroupParams,
    variant: Variant,
    pk: &(GroupElement, GroupElement),
    statement: &Statement,
    c_w: Option<&ElGamalCommitment>,
    c_sk: Option<&ElGamalCommitment>,
) -> Result<SigmaSpec, ProtocolError> {
    let need = |c: Option<&ElGamalCommitment>, what: &str| {
        c.cloned()
            .ok_or_else(|| ProtocolError::Violation(format!("missing {what} commitment")))
    };
    match variant {
        Variant::Full => {
            let x = dlog_statement_value(statement)?;
            let cw = need(c_w, "c_w")?;
            let csk = need(c_sk, "c_sk")?;
            Ok(SigmaSpec::or(
                commit_open_spec(&x, &cw),
                csk_clause(pk, &csk),
            ))
        }
        Variant::NoCw => {
            let csk = need(c_sk, "c_sk")?;
            Ok(SigmaSpec::or(
                claim_spec(params, statement),
                csk_clause(pk, &csk),
            ))
        }
        Variant::NoCsk => {
            let x = dlog_statement_value(statement)?;
            let cw = need(c_w, "c_w")?;
            Ok(SigmaSpec::or(commit_open_spec(&x, &cw), stage1_spec(pk)))
        }
        Variant::Dv05Structure => Ok(claim_spec(params, statement)),
    }
}

fn dlog_statement_value(statement: &Statement) -> Result<GroupElement, ProtocolError> {
    match statement {
        Statement::Dlog { x } => Ok(x.clone()),
        _ => Err(ProtocolError::InvalidStatement(
            "this variant takes a plain discrete-log statement".into(),
        )),
    }
}

fn validate_statement(
    params: &GroupParams,
    variant: Variant,
    pk: &(GroupElement, GroupElement),
    statement: &Statement,
) -> Result<(), ProtocolError> {
    match statement {
        Statement::Dlog { x } => {
            if !params.is_member(x) {
                return Err(ProtocolError::InvalidStatement(
                    "x is not in the order-q subgroup".into(),
                ));
            }
        }
        Statement::KeyMixing { hat, y0, y1 } => {
            if matches!(variant, Variant::Full | Variant::NoCsk) {
                return Err(ProtocolError::InvalidStatement(
                    "this variant takes a plain discrete-log statement".into(),
                ));
            }
            if (y0, y1) != (&pk.0, &pk.1) {
                return Err(ProtocolError::InvalidStatement(
                    "key-mixing statement names a different public key".into(),
                ));
            }
            if let HatClaim::Dlog(x) = hat {
                if !params.is_member(x) {
                    return Err(ProtocolError::InvalidStatement(
                        "x̂ is not in the order-q subgroup".into(),
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Everything a run record keeps per session.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub variant: Variant,
    pub statement: Statement,
    pub stage: Stage,
    pub status: SessionStatus,
    pub stage1: Option<Transcript>,
    pub stage1_ok: bool,
    pub c_w: Option<ElGamalCommitment>,
    pub c_sk: Option<ElGamalCommitment>,
    pub c_e: Option<Vec<TrapdoorCommitment>>,
    pub dv05_q: Option<Challenge>,
    pub dv05_e_hat: Option<Challenge>,
    pub dv05_openings: Option<Vec<TcOpening>>,
    /// Stage-3 conversation with the effective challenge (ê ⊕ q for the
    /// coin-tossing variant).
    pub stage3: Option<Transcript>,
}

/// Honest verifier state machine. Emits its Stage-1 first message
/// eagerly at construction.
#[derive(Clone, Debug)]
pub struct VerifierSession {
    pub variant: Variant,
    params: GroupParams,
    keypair: VerifierKeyPair,
    statement: Statement,
    k: u32,
    stage: Stage,
    challenge_override: Option<Challenge>,
    stage1_state: Option<ProverState>,
    stage1_first: Option<FirstMsg>,
    stage1: Option<Transcript>,
    c_w: Option<ElGamalCommitment>,
    c_sk: Option<ElGamalCommitment>,
    c_e: Option<Vec<TrapdoorCommitment>>,
    stage3_first: Option<FirstMsg>,
    stage3_challenge: Option<Challenge>,
    dv05_q: Option<Challenge>,
    dv05_e_hat: Option<Challenge>,
    dv05_openings: Option<Vec<TcOpening>>,
    stage3: Option<Transcript>,
}

impl VerifierSession {
    pub fn new(
        variant: Variant,
        params: &GroupParams,
        keypair: &VerifierKeyPair,
        statement: Statement,
        k: u32,
        tape: &mut Tape,
    ) -> Result<(Self, Vec<Payload>), ProtocolError> {
        let pk = keypair.pk();
        validate_statement(params, variant, &pk, &statement)?;
        let ctx = SigmaCtx::new(params, k)
            .map_err(|e| ProtocolError::InvalidStatement(e.to_string()))?;
        let spec1 = stage1_spec(&pk);
        let witness = SigmaWitness::or(keypair.b, SigmaWitness::Dlog(keypair.s.clone()));
        let (a, state) = spec1
            .first(&ctx, &witness, tape)
            .map_err(|e| ProtocolError::InvalidWitness(e.to_string()))?;
        let session = VerifierSession {
            variant,
            params: params.clone(),
            keypair: keypair.clone(),
            statement,
            k,
            stage: Stage::AwaitStage1Challenge,
            challenge_override: None,
            stage1_state: Some(state),
            stage1_first: Some(a.clone()),
            stage1: None,
            c_w: None,
            c_sk: None,
            c_e: None,
            stage3_first: None,
            stage3_challenge: None,
            dv05_q: None,
            dv05_e_hat: None,
            dv05_openings: None,
            stage3: None,
        };
        Ok((session, vec![Payload::Stage1First { a }]))
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn status(&self) -> SessionStatus {
        self.stage.status()
    }

    pub fn statement(&self) -> &Statement {
        &self.statement
    }

    /// True when stepping this payload will make the session draw its
    /// public coin; the runtime snapshots right before.
    pub fn challenge_draw_imminent(&self, payload: &Payload) -> bool {
        self.stage == Stage::AwaitStage3First
            && matches!(
                payload,
                Payload::Stage3First { .. } | Payload::Dv05Phase3A { .. }
            )
    }

    pub fn set_challenge_override(&mut self, c: Challenge) {
        self.challenge_override = Some(c);
    }

    fn draw_challenge(&mut self, tape: &mut Tape) -> Challenge {
        match self.challenge_override.take() {
            Some(c) => {
                tape.skip_bits(self.k);
                c
            }
            None => Challenge::random(self.k, tape),
        }
    }

    fn violation(&mut self, msg: &str) -> ProtocolError {
        self.stage = Stage::Aborted;
        ProtocolError::Violation(msg.to_string())
    }

    pub fn step(&mut self, payload: &Payload, tape: &mut Tape) -> Result<Vec<Payload>, ProtocolError> {
        let params = self.params.clone();
        let ctx = SigmaCtx::new(&params, self.k).expect("validated width");
        let prev = self.stage.order();
        let out = self.step_inner(&ctx, payload, tape)?;
        debug_assert!(self.stage.order() >= prev, "stage order is monotone");
        Ok(out)
    }

    fn step_inner(
        &mut self,
        ctx: &SigmaCtx,
        payload: &Payload,
        tape: &mut Tape,
    ) -> Result<Vec<Payload>, ProtocolError> {
        match (self.stage, payload) {
            (Stage::AwaitStage1Challenge, Payload::Stage1Challenge { s }) => {
                if s.bits != self.k {
                    return Err(self.violation("stage-1 challenge width"));
                }
                let spec1 = stage1_spec(&self.keypair.pk());
                let state = self.stage1_state.take().expect("stage1 state");
                let z = spec1.respond(ctx, &state, s);
                self.stage1 = Some(Transcript {
                    first: self.stage1_first.clone().expect("stage1 first"),
                    challenge: s.clone(),
                    response: z.clone(),
                });
                self.stage = Stage::AwaitStage2;
                Ok(vec![Payload::Stage1Response { z }])
            }
            (Stage::AwaitStage2, Payload::Stage2Commitments { c_w, c_sk }) => {
                let want = match self.variant {
                    Variant::Full => (true, true),
                    Variant::NoCw => (false, true),
                    Variant::NoCsk => (true, false),
                    Variant::Dv05Structure => {
                        return Err(self.violation("this variant commits coins, not values"))
                    }
                };
                if (c_w.is_some(), c_sk.is_some()) != want {
                    return Err(self.violation("stage-2 commitment arity"));
                }
                for c in [c_w, c_sk].into_iter().flatten() {
                    if !(self.params.is_member(&c.h)
                        && self.params.is_member(&c.g_bar)
                        && self.params.is_member(&c.h_bar))
                    {
                        return Err(self.violation("stage-2 commitment element not of order q"));
                    }
                }
                self.c_w = c_w.clone();
                self.c_sk = c_sk.clone();
                self.stage = Stage::AwaitStage3First;
                Ok(vec![])
            }
            (Stage::AwaitStage2, Payload::Dv05Phase2 { c_e }) => {
                if self.variant != Variant::Dv05Structure {
                    return Err(self.violation("coin commitments outside the coin-tossing variant"));
                }
                if c_e.len() != self.k as usize {
                    return Err(self.violation("coin commitment count"));
                }
                let y0 = &self.keypair.y0;
                if c_e
                    .iter()
                    .any(|tc| &tc.basis != y0 || !self.params.is_member(&tc.c))
                {
                    return Err(self.violation("coin commitment malformed"));
                }
                self.c_e = Some(c_e.clone());
                self.stage = Stage::AwaitStage3First;
                Ok(vec![])
            }
            (Stage::AwaitStage3First, Payload::Stage3First { a }) => {
                if self.variant == Variant::Dv05Structure {
                    return Err(self.violation("expected coin-tossing phase-3 message"));
                }
                let spec3 = self.stage3_spec_checked()?;
                if !spec3.first_shape_ok(a) {
                    return Err(self.violation("stage-3 first message shape"));
                }
                self.stage3_first = Some(a.clone());
                let s = self.draw_challenge(tape);
                self.stage3_challenge = Some(s.clone());
                self.stage = Stage::AwaitStage3Response;
                Ok(vec![Payload::Stage3Challenge { s }])
            }
            (Stage::AwaitStage3First, Payload::Dv05Phase3A { a }) => {
                if self.variant != Variant::Dv05Structure {
                    return Err(self.violation("coin-tossing message outside its variant"));
                }
                let spec = claim_spec(&self.params, &self.statement);
                if !spec.first_shape_ok(a) {
                    return Err(self.violation("phase-3 first message shape"));
                }
                self.stage3_first = Some(a.clone());
                let q = self.draw_challenge(tape);
                self.dv05_q = Some(q.clone());
                self.stage = Stage::AwaitStage3Response;
                Ok(vec![Payload::Dv05Phase3Q { q }])
            }
            (Stage::AwaitStage3Response, Payload::Stage3Response { z }) => {
                if self.variant == Variant::Dv05Structure {
                    return Err(self.violation("expected coin-tossing phase-3 response"));
                }
                let spec3 = self.stage3_spec_checked()?;
                let first = self.stage3_first.clone().expect("stage3 first");
                let s = self.stage3_challenge.clone().expect("stage3 challenge");
                let ok = spec3.verify(ctx, &first, &s, z);
                self.stage3 = Some(Transcript {
                    first,
                    challenge: s,
                    response: z.clone(),
                });
                self.stage = if ok { Stage::Accepted } else { Stage::Rejected };
                Ok(vec![])
            }
            (
                Stage::AwaitStage3Response,
                Payload::Dv05Phase3Z {
                    e_hat,
                    openings,
                    z,
                },
            ) => {
                if self.variant != Variant::Dv05Structure {
                    return Err(self.violation("coin-tossing response outside its variant"));
                }
                let c_e = self.c_e.as_ref().expect("coin commitments");
                let q = self.dv05_q.clone().expect("coin");
                let mut ok = e_hat.bits == self.k && openings.len() == self.k as usize;
                if ok {
                    for (i, (tc, op)) in c_e.iter().zip(openings.iter()).enumerate() {
                        let bit = challenge_bit(e_hat, i);
                        if op.bit != bit || !tc_open(&self.params, tc, op) {
                            ok = false;
                            break;
                        }
                    }
                }
                // e_P = ê ⊕ q is the effective challenge
                let e_p = e_hat.xor(&q);
                let spec = claim_spec(&self.params, &self.statement);
                let first = self.stage3_first.clone().expect("stage3 first");
                ok = ok && spec.verify(ctx, &first, &e_p, z);
                self.dv05_e_hat = Some(e_hat.clone());
                self.dv05_openings = Some(openings.clone());
                self.stage3_challenge = Some(e_p.clone());
                self.stage3 = Some(Transcript {
                    first,
                    challenge: e_p,
                    response: z.clone(),
                });
                self.stage = if ok { Stage::Accepted } else { Stage::Rejected };
                Ok(vec![])
            }
            _ => Err(self.violation(&format!(
                "payload {} not valid in stage {:?}",
                payload.tag(),
                self.stage
            ))),
        }
    }

    fn stage3_spec_checked(&mut self) -> Result<SigmaSpec, ProtocolError> {
        match stage3_spec(
            &self.params,
            self.variant,
            &self.keypair.pk(),
            &self.statement,
            self.c_w.as_ref(),
            self.c_sk.as_ref(),
        ) {
            Ok(s) => Ok(s),
            Err(e) => {
                self.stage = Stage::Aborted;
                Err(e)
            }
        }
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            variant: self.variant,
            statement: self.statement.clone(),
            stage: self.stage,
            status: self.status(),
            stage1: self.stage1.clone(),
            stage1_ok: self.stage1.is_some(),
            c_w: self.c_w.clone(),
            c_sk: self.c_sk.clone(),
            c_e: self.c_e.clone(),
            dv05_q: self.dv05_q.clone(),
            dv05_e_hat: self.dv05_e_hat.clone(),
            dv05_openings: self.dv05_openings.clone(),
            stage3: self.stage3.clone(),
        }
    }
}

pub fn challenge_bit(c: &Challenge, i: usize) -> u8 {
    if c.value().bit(i as u64) {
        1
    } else {
        0
    }
}

/// Honest prover state machine. With `witness = None` it verifies
/// Stage-1 and then idles, which is what the zero-knowledge simulator
/// needs before it has covered the key.
#[derive(Clone, Debug)]
pub struct ProverSession {
    pub variant: Variant,
    params: GroupParams,
    pk: (GroupElement, GroupElement),
    statement: Statement,
    witness: Option<ProtocolWitness>,
    k: u32,
    stage: Stage,
    challenge_override: Option<Challenge>,
    stage1_first: Option<FirstMsg>,
    stage1_challenge: Option<Challenge>,
    stage1: Option<Transcript>,
    stage1_ok: bool,
    c_w: Option<ElGamalCommitment>,
    c_sk: Option<ElGamalCommitment>,
    cw_r: Option<Scalar>,
    csk_r: Option<Scalar>,
    c_e: Option<Vec<TrapdoorCommitment>>,
    tc_openings: Option<Vec<TcOpening>>,
    e_hat: Option<Challenge>,
    stage3_state: Option<ProverState>,
    stage3_first: Option<FirstMsg>,
    stage3: Option<Transcript>,
    dv05_q: Option<Challenge>,
}

impl ProverSession {
    pub fn new(
        variant: Variant,
        params: &GroupParams,
        pk: &(GroupElement, GroupElement),
        statement: Statement,
        witness: Option<ProtocolWitness>,
        k: u32,
    ) -> Result<Self, ProtocolError> {
        validate_statement(params, variant, pk, &statement)?;
        if let Some(w) = &witness {
            validate_witness(params, variant, pk, &statement, w)?;
        }
        SigmaCtx::new(params, k).map_err(|e| ProtocolError::InvalidStatement(e.to_string()))?;
        Ok(ProverSession {
            variant,
            params: params.clone(),
            pk: pk.clone(),
            statement,
            witness,
            k,
            stage: Stage::AwaitStage1First,
            challenge_override: None,
            stage1_first: None,
            stage1_challenge: None,
            stage1: None,
            stage1_ok: false,
            c_w: None,
            c_sk: None,
            cw_r: None,
            csk_r: None,
            c_e: None,
            tc_openings: None,
            e_hat: None,
            stage3_state: None,
            stage3_first: None,
            stage3: None,
            dv05_q: None,
        })
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn status(&self) -> SessionStatus {
        self.stage.status()
    }

    pub fn statement(&self) -> &Statement {
        &self.statement
    }

    pub fn stage1_ok(&self) -> bool {
        self.stage1_ok
    }

    pub fn challenge_draw_imminent(&self, payload: &Payload) -> bool {
        self.stage == Stage::AwaitStage1First && matches!(payload, Payload::Stage1First { .. })
    }

    pub fn set_challenge_override(&mut self, c: Challenge) {
        self.challenge_override = Some(c);
    }

    fn draw_challenge(&mut self, tape: &mut Tape) -> Challenge {
        match self.challenge_override.take() {
            Some(c) => {
                tape.skip_bits(self.k);
                c
            }
            None => Challenge::random(self.k, tape),
        }
    }

    fn violation(&mut self, msg: &str) -> ProtocolError {
        self.stage = Stage::Aborted;
        ProtocolError::Violation(msg.to_string())
    }

    pub fn step(&mut self, payload: &Payload, tape: &mut Tape) -> Result<Vec<Payload>, ProtocolError> {
        let params = self.params.clone();
        let ctx = SigmaCtx::new(&params, self.k).expect("validated width");
        match (self.stage, payload) {
            (Stage::AwaitStage1First, Payload::Stage1First { a }) => {
                let spec1 = stage1_spec(&self.pk);
                if !spec1.first_shape_ok(a) {
                    return Err(self.violation("stage-1 first message shape"));
                }
                self.stage1_first = Some(a.clone());
                let s = self.draw_challenge(tape);
                self.stage1_challenge = Some(s.clone());
                self.stage = Stage::AwaitStage1Response;
                Ok(vec![Payload::Stage1Challenge { s }])
            }
            (Stage::AwaitStage1Response, Payload::Stage1Response { z }) => {
                let spec1 = stage1_spec(&self.pk);
                let first = self.stage1_first.clone().expect("stage1 first");
                let s = self.stage1_challenge.clone().expect("stage1 challenge");
                let ok = spec1.verify(&ctx, &first, &s, z);
                self.stage1 = Some(Transcript {
                    first,
                    challenge: s,
                    response: z.clone(),
                });
                if !ok {
                    // the key-proof gate: no Stage-2 without it
                    self.stage = Stage::Aborted;
                    return Ok(vec![]);
                }
                self.stage1_ok = true;
                self.stage = Stage::AwaitStage2;
                match &self.witness {
                    None => Ok(vec![]),
                    Some(w) => {
                        let w = w.clone();
                        self.advance_to_stage3(&ctx, &w, tape)
                    }
                }
            }
            (Stage::AwaitStage3Challenge, Payload::Stage3Challenge { s }) => {
                if self.variant == Variant::Dv05Structure {
                    return Err(self.violation("expected coin-tossing challenge"));
                }
                if s.bits != self.k {
                    return Err(self.violation("stage-3 challenge width"));
                }
                let spec3 = self.stage3_spec().expect("spec built at stage 2");
                let state = self.stage3_state.take().expect("stage3 state");
                let z = spec3.respond(&ctx, &state, s);
                self.stage3 = Some(Transcript {
                    first: self.stage3_first.clone().expect("stage3 first"),
                    challenge: s.clone(),
                    response: z.clone(),
                });
                self.stage = Stage::Accepted;
                Ok(vec![Payload::Stage3Response { z }])
            }
            (Stage::AwaitStage3Challenge, Payload::Dv05Phase3Q { q }) => {
                if self.variant != Variant::Dv05Structure {
                    return Err(self.violation("coin-tossing challenge outside its variant"));
                }
                if q.bits != self.k {
                    return Err(self.violation("coin width"));
                }
                let e_hat = self.e_hat.clone().expect("committed coin");
                let e_p = e_hat.xor(q);
                let spec = claim_spec(&self.params, &self.statement);
                let state = self.stage3_state.take().expect("stage3 state");
                let z = spec.respond(&ctx, &state, &e_p);
                self.dv05_q = Some(q.clone());
                self.stage3 = Some(Transcript {
                    first: self.stage3_first.clone().expect("stage3 first"),
                    challenge: e_p,
                    response: z.clone(),
                });
                self.stage = Stage::Accepted;
                Ok(vec![Payload::Dv05Phase3Z {
                    e_hat,
                    openings: self.tc_openings.clone().expect("coin openings"),
                    z,
                }])
            }
            _ => Err(self.violation(&format!(
                "payload {} not valid in stage {:?}",
                payload.tag(),
                self.stage
            ))),
        }
    }

    fn advance_to_stage3(
        &mut self,
        ctx: &SigmaCtx,
        witness: &ProtocolWitness,
        tape: &mut Tape,
    ) -> Result<Vec<Payload>, ProtocolError> {
        let mut out = Vec::new();
        if self.variant == Variant::Dv05Structure {
            // committed-coin phase: one trapdoor commitment per coin bit
            let e_hat = Challenge::random(self.k, tape);
            let mut cs = Vec::new();
            let mut openings = Vec::new();
            for i in 0..self.k as usize {
                let (tc, op) = tc_commit_bit(&self.params, &self.pk.0, challenge_bit(&e_hat, i), tape);
                cs.push(tc);
                openings.push(op);
            }
            self.e_hat = Some(e_hat);
            self.c_e = Some(cs.clone());
            self.tc_openings = Some(openings);
            out.push(Payload::Dv05Phase2 { c_e: cs });
        } else {
            // one basis exponent u per session, shared by both commitments
            let u = self.params.random_scalar(tape);
            let zero = self.params.scalar_zero();
            let (cw_val, csk_val): (Option<&Scalar>, Option<&Scalar>) = match (self.variant, witness)
            {
                (Variant::Full, ProtocolWitness::Dlog(w)) => (Some(w), Some(&zero)),
                (Variant::Full, ProtocolWitness::KeyPreimage { s, .. }) => (Some(&zero), Some(s)),
                (Variant::NoCw, ProtocolWitness::KeyPreimage { s, .. }) => (None, Some(s)),
                (Variant::NoCw, _) => (None, Some(&zero)),
                (Variant::NoCsk, ProtocolWitness::Dlog(w)) => (Some(w), None),
                (Variant::NoCsk, _) => (Some(&zero), None),
                _ => unreachable!("witness validated against variant"),
            };
            if let Some(v) = cw_val {
                let (c, o) = eg_commit_with_basis(&self.params, &u, v, tape);
                self.c_w = Some(c);
                self.cw_r = Some(o.r);
            }
            if let Some(v) = csk_val {
                let (c, o) = eg_commit_with_basis(&self.params, &u, v, tape);
                self.c_sk = Some(c);
                self.csk_r = Some(o.r);
            }
            out.push(Payload::Stage2Commitments {
                c_w: self.c_w.clone(),
                c_sk: self.c_sk.clone(),
            });
        }
        let spec3 = self.stage3_spec().expect("statement validated");
        let tree = self
            .stage3_witness(witness)
            .expect("witness validated against variant");
        debug_assert!(spec3.witness_ok(&self.params, &tree));
        let (a, state) = spec3
            .first(ctx, &tree, tape)
            .map_err(|e| ProtocolError::InvalidWitness(e.to_string()))?;
        self.stage3_state = Some(state);
        self.stage3_first = Some(a.clone());
        self.stage = Stage::AwaitStage3Challenge;
        if self.variant == Variant::Dv05Structure {
            out.push(Payload::Dv05Phase3A { a });
        } else {
            out.push(Payload::Stage3First { a });
        }
        Ok(out)
    }

    fn stage3_spec(&self) -> Result<SigmaSpec, ProtocolError> {
        stage3_spec(
            &self.params,
            self.variant,
            &self.pk,
            &self.statement,
            self.c_w.as_ref(),
            self.c_sk.as_ref(),
        )
    }

    fn stage3_witness(&self, witness: &ProtocolWitness) -> Option<SigmaWitness> {
        match (self.variant, witness) {
            (Variant::Full, ProtocolWitness::Dlog(w)) => Some(SigmaWitness::or(
                0,
                SigmaWitness::Open {
                    v: w.clone(),
                    r: self.cw_r.clone()?,
                },
            )),
            (Variant::Full, ProtocolWitness::KeyPreimage { s, branch }) => Some(SigmaWitness::or(
                1,
                SigmaWitness::or(
                    *branch,
                    SigmaWitness::Open {
                        v: s.clone(),
                        r: self.csk_r.clone()?,
                    },
                ),
            )),
            (Variant::NoCw, ProtocolWitness::Dlog(w)) => {
                Some(SigmaWitness::or(0, SigmaWitness::Dlog(w.clone())))
            }
            (Variant::NoCw, ProtocolWitness::Hat(w)) => Some(SigmaWitness::or(
                0,
                SigmaWitness::or(0, SigmaWitness::Dlog(w.clone())),
            )),
            (Variant::NoCw, ProtocolWitness::KeyPreimage { s, branch }) => Some(SigmaWitness::or(
                1,
                SigmaWitness::or(
                    *branch,
                    SigmaWitness::Open {
                        v: s.clone(),
                        r: self.csk_r.clone()?,
                    },
                ),
            )),
            (Variant::NoCsk, ProtocolWitness::Dlog(w)) => Some(SigmaWitness::or(
                0,
                SigmaWitness::Open {
                    v: w.clone(),
                    r: self.cw_r.clone()?,
                },
            )),
            (Variant::NoCsk, ProtocolWitness::KeyPreimage { s, branch }) => Some(SigmaWitness::or(
                1,
                SigmaWitness::or(*branch, SigmaWitness::Dlog(s.clone())),
            )),
            (Variant::Dv05Structure, ProtocolWitness::Dlog(w)) => {
                match &self.statement {
                    Statement::Dlog { .. } => Some(SigmaWitness::Dlog(w.clone())),
                    _ => None,
                }
            }
            (Variant::Dv05Structure, ProtocolWitness::Hat(w)) => {
                Some(SigmaWitness::or(0, SigmaWitness::Dlog(w.clone())))
            }
            (Variant::Dv05Structure, ProtocolWitness::KeyPreimage { s, branch }) => Some(
                SigmaWitness::or(1, SigmaWitness::or(*branch, SigmaWitness::Dlog(s.clone()))),
            ),
            _ => None,
        }
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            variant: self.variant,
            statement: self.statement.clone(),
            stage: self.stage,
            status: self.status(),
            stage1: self.stage1.clone(),
            stage1_ok: self.stage1_ok,
            c_w: self.c_w.clone(),
            c_sk: self.c_sk.clone(),
            c_e: self.c_e.clone(),
            dv05_q: self.dv05_q.clone(),
            dv05_e_hat: self.e_hat.clone(),
            dv05_openings: self.tc_openings.clone(),
            stage3: self.stage3.clone(),
        }
    }
}

fn validate_witness(
    params: &GroupParams,
    variant: Variant,
    pk: &(GroupElement, GroupElement),
    statement: &Statement,
    witness: &ProtocolWitness,
) -> Result<(), ProtocolError> {
    let bad = |m: &str| Err(ProtocolError::InvalidWitness(m.into()));
    match witness {
        ProtocolWitness::Dlog(w) => match statement {
            Statement::Dlog { x } if &params.exp_g(w) == x => Ok(()),
            Statement::Dlog { .. } => bad("g^w does not match the statement"),
            _ => bad("discrete-log witness for a key-mixing statement"),
        },
        ProtocolWitness::Hat(w) => match statement {
            Statement::KeyMixing {
                hat: HatClaim::Dlog(x),
                ..
            } if &params.exp_g(w) == x => Ok(()),
            Statement::KeyMixing {
                hat: HatClaim::Dlog(_),
                ..
            } => bad("g^w does not match the claim"),
            Statement::KeyMixing { .. } => bad("the empty claim has no witness"),
            _ => bad("claim witness for a plain statement"),
        },
        ProtocolWitness::KeyPreimage { s, branch } => {
            if *branch > 1 {
                return bad("branch must be 0 or 1");
            }
            let y = if *branch == 0 { &pk.0 } else { &pk.1 };
            if &params.exp_g(s) != y {
                return bad("not a preimage of the named key half");
            }
            if variant == Variant::Dv05Structure && !matches!(statement, Statement::KeyMixing { .. })
            {
                return bad("key preimage is unusable without a key clause");
            }
            Ok(())
        }
    }
}
