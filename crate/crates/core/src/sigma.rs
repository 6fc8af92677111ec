//! Composable three-round public-coin proofs of knowledge.
//!
//! Two leaves are provided — Schnorr's discrete-log protocol and a
//! commitment-opening protocol tying a discrete log to an ElGamal
//! commitment — plus an OR composition that is itself a spec and nests
//! arbitrarily. Every spec carries the four algorithms the rest of the
//! crate needs: honest prover (first/respond), verifier, simulator, and
//! the two-transcript extractor.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{GroupElement, GroupParams, Scalar};
use crate::rng::Tape;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SigmaError {
    #[error("challenge width {k} does not satisfy 2^k < q")]
    ChallengeWidth { k: u32 },
    #[error("witness does not satisfy the statement relation")]
    BadWitness,
    #[error("message shape does not match the spec")]
    ShapeMismatch,
    #[error("transcripts carry the same challenge")]
    SameChallenge,
    #[error("transcripts have different first messages")]
    FirstMismatch,
    #[error("extracted value violates the relation")]
    RelationViolated,
}

/// k-bit public-coin challenge.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Challenge {
    pub bits: u32,
    #[serde(with = "crate::group::biguint_hex")]
    value: BigUint,
}

impl Challenge {
    pub fn new(bits: u32, value: BigUint) -> Self {
        debug_assert!(value.bits() as u32 <= bits);
        Challenge { bits, value }
    }

    pub fn random(bits: u32, tape: &mut Tape) -> Self {
        Challenge::new(bits, tape.bits(bits))
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn xor(&self, other: &Challenge) -> Challenge {
        debug_assert_eq!(self.bits, other.bits);
        Challenge::new(self.bits, &self.value ^ &other.value)
    }

    /// Challenges embed into Z_q as integers; 2^k < q keeps differences
    /// invertible.
    pub fn as_scalar(&self, params: &GroupParams) -> Scalar {
        params.scalar_mod_q(&self.value)
    }
}

/// Statement tree. `Or` nodes require both children to use the same
/// challenge width.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SigmaSpec {
    /// Knowledge of w with g^w = x. The algebra works for any unit x of
    /// Z_p^*, including the order-2 element used for the empty claim,
    /// where no witness exists but simulation still succeeds.
    Schnorr { x: GroupElement },
    /// Knowledge of (v, r) with x = g^v, ḡ = g^r, h̄ = g^v h^r.
    ///
    /// A two-element variant exists that shares one randomizer t across
    /// the first two checks (a0 = g^t, a1 = h^t; g^z0 = a0 x^e,
    /// g^z1 = a0 ḡ^e, h^z1 = a1 (h̄/x)^e). Its responses are linearly
    /// tied (z0 - z1 = e(v - r)), so no simulator can pick them
    /// independently; the three-element form below proves the same
    /// relation and simulates cleanly, which the OR composition needs.
    CommitOpen {
        x: GroupElement,
        h: GroupElement,
        g_bar: GroupElement,
        h_bar: GroupElement,
    },
    Or(Box<SigmaSpec>, Box<SigmaSpec>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FirstMsg {
    Single(GroupElement),
    Triple(GroupElement, GroupElement, GroupElement),
    Or(Box<FirstMsg>, Box<FirstMsg>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Response {
    Single(Scalar),
    Pair(Scalar, Scalar),
    Or {
        e_left: Challenge,
        z_left: Box<Response>,
        e_right: Challenge,
        z_right: Box<Response>,
    },
}

impl Response {
    /// Challenges at the leaves, left to right. Their XOR equals the
    /// top-level challenge of any accepting OR transcript.
    pub fn leaf_challenges(&self, out: &mut Vec<Challenge>) {
        if let Response::Or {
            e_left,
            z_left,
            e_right,
            z_right,
        } = self
        {
            match z_left.as_ref() {
                Response::Or { .. } => z_left.leaf_challenges(out),
                _ => out.push(e_left.clone()),
            }
            match z_right.as_ref() {
                Response::Or { .. } => z_right.leaf_challenges(out),
                _ => out.push(e_right.clone()),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SigmaWitness {
    Dlog(Scalar),
    Open { v: Scalar, r: Scalar },
    Or { branch: u8, inner: Box<SigmaWitness> },
}

impl SigmaWitness {
    pub fn or(branch: u8, inner: SigmaWitness) -> Self {
        SigmaWitness::Or {
            branch,
            inner: Box::new(inner),
        }
    }

    /// The scalar at the leaf of the witness tree (the extracted "value"
    /// the experiments classify).
    pub fn leaf_scalar(&self) -> &Scalar {
        match self {
            SigmaWitness::Dlog(w) => w,
            SigmaWitness::Open { v, .. } => v,
            SigmaWitness::Or { inner, .. } => inner.leaf_scalar(),
        }
    }

    pub fn leaf_opening(&self) -> Option<&Scalar> {
        match self {
            SigmaWitness::Dlog(_) => None,
            SigmaWitness::Open { r, .. } => Some(r),
            SigmaWitness::Or { inner, .. } => inner.leaf_opening(),
        }
    }

    /// Branch path from the root to the leaf that carries the witness.
    pub fn branch_path(&self) -> Vec<u8> {
        let mut path = Vec::new();
        let mut cur = self;
        while let SigmaWitness::Or { branch, inner } = cur {
            path.push(*branch);
            cur = inner;
        }
        path
    }
}

/// Explicit prover coins for one first-message computation; drawn from a
/// tape in normal runs, enumerated exhaustively by the exactness checks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FirstCoins {
    Schnorr {
        t: Scalar,
    },
    CommitOpen {
        t_w: Scalar,
        t_r: Scalar,
    },
    Or {
        real: Box<FirstCoins>,
        other_e: Challenge,
        sim: Box<SimCoins>,
    },
}

/// Explicit simulator coins.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SimCoins {
    Schnorr {
        z: Scalar,
    },
    CommitOpen {
        z_w: Scalar,
        z_r: Scalar,
    },
    Or {
        e_left: Challenge,
        left: Box<SimCoins>,
        right: Box<SimCoins>,
    },
}

/// Retained prover randomness, single-use and confined to one session.
#[derive(Clone, Debug)]
pub enum ProverState {
    Schnorr {
        t: Scalar,
        w: Scalar,
    },
    CommitOpen {
        t_w: Scalar,
        t_r: Scalar,
        v: Scalar,
        r: Scalar,
    },
    Or {
        branch: u8,
        real: Box<ProverState>,
        other_e: Challenge,
        other_z: Box<Response>,
    },
}

/// One (first message, challenge, response) conversation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub first: FirstMsg,
    pub challenge: Challenge,
    pub response: Response,
}

/// Group parameters plus the shared challenge width.
#[derive(Clone, Copy)]
pub struct SigmaCtx<'a> {
    pub params: &'a GroupParams,
    pub k: u32,
}

impl<'a> SigmaCtx<'a> {
    pub fn new(params: &'a GroupParams, k: u32) -> Result<Self, SigmaError> {
        if k == 0 || (BigUint::from(1u32) << k) >= *params.q() {
            return Err(SigmaError::ChallengeWidth { k });
        }
        Ok(SigmaCtx { params, k })
    }

    pub fn random_challenge(&self, tape: &mut Tape) -> Challenge {
        Challenge::random(self.k, tape)
    }
}

impl SigmaSpec {
    pub fn or(left: SigmaSpec, right: SigmaSpec) -> SigmaSpec {
        SigmaSpec::Or(Box::new(left), Box::new(right))
    }

    /// Schnorr leaf on the canonical no-witness element: the claim is
    /// false by construction, yet the simulator produces accepting
    /// transcripts for any challenge.
    pub fn empty_claim(params: &GroupParams) -> SigmaSpec {
        SigmaSpec::Schnorr {
            x: params.non_member(),
        }
    }

    pub fn witness_ok(&self, params: &GroupParams, w: &SigmaWitness) -> bool {
        match (self, w) {
            (SigmaSpec::Schnorr { x }, SigmaWitness::Dlog(w)) => &params.exp_g(w) == x,
            (
                SigmaSpec::CommitOpen { x, h, g_bar, h_bar },
                SigmaWitness::Open { v, r },
            ) => {
                &params.exp_g(v) == x
                    && &params.exp_g(r) == g_bar
                    && &params.mul(&params.exp_g(v), &params.exp(h, r)) == h_bar
            }
            (SigmaSpec::Or(l, r), SigmaWitness::Or { branch, inner }) => match branch {
                0 => l.witness_ok(params, inner),
                1 => r.witness_ok(params, inner),
                _ => false,
            },
            _ => false,
        }
    }

    /// Draw honest prover coins in canonical order: real-branch coins,
    /// then the simulated branch's challenge, then its simulator coins.
    pub fn draw_first_coins(
        &self,
        ctx: &SigmaCtx,
        witness: &SigmaWitness,
        tape: &mut Tape,
    ) -> Result<FirstCoins, SigmaError> {
        match (self, witness) {
            (SigmaSpec::Schnorr { .. }, SigmaWitness::Dlog(_)) => Ok(FirstCoins::Schnorr {
                t: ctx.params.random_scalar(tape),
            }),
            (SigmaSpec::CommitOpen { .. }, SigmaWitness::Open { .. }) => {
                let t_w = ctx.params.random_scalar(tape);
                let t_r = ctx.params.random_scalar(tape);
                Ok(FirstCoins::CommitOpen { t_w, t_r })
            }
            (SigmaSpec::Or(l, r), SigmaWitness::Or { branch, inner }) => {
                let (real_spec, sim_spec) = match branch {
                    0 => (l, r),
                    1 => (r, l),
                    _ => return Err(SigmaError::BadWitness),
                };
                let real = real_spec.draw_first_coins(ctx, inner, tape)?;
                let other_e = ctx.random_challenge(tape);
                let sim = sim_spec.draw_sim_coins(ctx, tape);
                Ok(FirstCoins::Or {
                    real: Box::new(real),
                    other_e,
                    sim: Box::new(sim),
                })
            }
            _ => Err(SigmaError::BadWitness),
        }
    }

    /// First message and retained state from explicit coins.
    pub fn first_with(
        &self,
        ctx: &SigmaCtx,
        witness: &SigmaWitness,
        coins: &FirstCoins,
    ) -> Result<(FirstMsg, ProverState), SigmaError> {
        match (self, witness, coins) {
            (SigmaSpec::Schnorr { .. }, SigmaWitness::Dlog(w), FirstCoins::Schnorr { t }) => {
                let a = ctx.params.exp_g(t);
                Ok((
                    FirstMsg::Single(a),
                    ProverState::Schnorr {
                        t: t.clone(),
                        w: w.clone(),
                    },
                ))
            }
            (
                SigmaSpec::CommitOpen { h, .. },
                SigmaWitness::Open { v, r },
                FirstCoins::CommitOpen { t_w, t_r },
            ) => {
                let a1 = ctx.params.exp_g(t_w);
                let a2 = ctx.params.exp_g(t_r);
                let a3 = ctx.params.mul(&a1, &ctx.params.exp(h, t_r));
                Ok((
                    FirstMsg::Triple(a1, a2, a3),
                    ProverState::CommitOpen {
                        t_w: t_w.clone(),
                        t_r: t_r.clone(),
                        v: v.clone(),
                        r: r.clone(),
                    },
                ))
            }
            (
                SigmaSpec::Or(l, r),
                SigmaWitness::Or { branch, inner },
                FirstCoins::Or {
                    real,
                    other_e,
                    sim,
                },
            ) => {
                let (real_spec, sim_spec) = match branch {
                    0 => (l, r),
                    1 => (r, l),
                    _ => return Err(SigmaError::BadWitness),
                };
                let (a_real, st_real) = real_spec.first_with(ctx, inner, real)?;
                let (a_sim, z_sim) = sim_spec.simulate_with(ctx, other_e, sim);
                let first = match branch {
                    0 => FirstMsg::Or(Box::new(a_real), Box::new(a_sim)),
                    _ => FirstMsg::Or(Box::new(a_sim), Box::new(a_real)),
                };
                Ok((
                    first,
                    ProverState::Or {
                        branch: *branch,
                        real: Box::new(st_real),
                        other_e: other_e.clone(),
                        other_z: Box::new(z_sim),
                    },
                ))
            }
            _ => Err(SigmaError::BadWitness),
        }
    }

    pub fn first(
        &self,
        ctx: &SigmaCtx,
        witness: &SigmaWitness,
        tape: &mut Tape,
    ) -> Result<(FirstMsg, ProverState), SigmaError> {
        let coins = self.draw_first_coins(ctx, witness, tape)?;
        self.first_with(ctx, witness, &coins)
    }

    pub fn respond(&self, ctx: &SigmaCtx, state: &ProverState, challenge: &Challenge) -> Response {
        match (self, state) {
            (SigmaSpec::Schnorr { .. }, ProverState::Schnorr { t, w }) => {
                let e = challenge.as_scalar(ctx.params);
                Response::Single(ctx.params.scalar_add(t, &ctx.params.scalar_mul(&e, w)))
            }
            (SigmaSpec::CommitOpen { .. }, ProverState::CommitOpen { t_w, t_r, v, r }) => {
                let e = challenge.as_scalar(ctx.params);
                let z_w = ctx.params.scalar_add(t_w, &ctx.params.scalar_mul(&e, v));
                let z_r = ctx.params.scalar_add(t_r, &ctx.params.scalar_mul(&e, r));
                Response::Pair(z_w, z_r)
            }
            (
                SigmaSpec::Or(l, r),
                ProverState::Or {
                    branch,
                    real,
                    other_e,
                    other_z,
                },
            ) => {
                let e_real = challenge.xor(other_e);
                let real_spec = if *branch == 0 { l } else { r };
                let z_real = real_spec.respond(ctx, real, &e_real);
                if *branch == 0 {
                    Response::Or {
                        e_left: e_real,
                        z_left: Box::new(z_real),
                        e_right: other_e.clone(),
                        z_right: other_z.clone(),
                    }
                } else {
                    Response::Or {
                        e_left: other_e.clone(),
                        z_left: other_z.clone(),
                        e_right: e_real,
                        z_right: Box::new(z_real),
                    }
                }
            }
            _ => unreachable!("prover state does not match spec"),
        }
    }

    pub fn verify(
        &self,
        ctx: &SigmaCtx,
        first: &FirstMsg,
        challenge: &Challenge,
        response: &Response,
    ) -> bool {
        if challenge.bits != ctx.k {
            return false;
        }
        match (self, first, response) {
            (SigmaSpec::Schnorr { x }, FirstMsg::Single(a), Response::Single(z)) => {
                let e = challenge.as_scalar(ctx.params);
                ctx.params.exp_g(z) == ctx.params.mul(a, &ctx.params.exp(x, &e))
            }
            (
                SigmaSpec::CommitOpen { x, h, g_bar, h_bar },
                FirstMsg::Triple(a1, a2, a3),
                Response::Pair(z_w, z_r),
            ) => {
                let e = challenge.as_scalar(ctx.params);
                ctx.params.exp_g(z_w) == ctx.params.mul(a1, &ctx.params.exp(x, &e))
                    && ctx.params.exp_g(z_r) == ctx.params.mul(a2, &ctx.params.exp(g_bar, &e))
                    && ctx.params.mul(&ctx.params.exp_g(z_w), &ctx.params.exp(h, z_r))
                        == ctx.params.mul(a3, &ctx.params.exp(h_bar, &e))
            }
            (
                SigmaSpec::Or(l, r),
                FirstMsg::Or(a_l, a_r),
                Response::Or {
                    e_left,
                    z_left,
                    e_right,
                    z_right,
                },
            ) => {
                e_left.bits == ctx.k
                    && e_right.bits == ctx.k
                    && &e_left.xor(e_right) == challenge
                    && l.verify(ctx, a_l, e_left, z_left)
                    && r.verify(ctx, a_r, e_right, z_right)
            }
            _ => false,
        }
    }

    /// Draw simulator coins in canonical order: left split challenge,
    /// then left coins, then right coins.
    pub fn draw_sim_coins(&self, ctx: &SigmaCtx, tape: &mut Tape) -> SimCoins {
        match self {
            SigmaSpec::Schnorr { .. } => SimCoins::Schnorr {
                z: ctx.params.random_scalar(tape),
            },
            SigmaSpec::CommitOpen { .. } => {
                let z_w = ctx.params.random_scalar(tape);
                let z_r = ctx.params.random_scalar(tape);
                SimCoins::CommitOpen { z_w, z_r }
            }
            SigmaSpec::Or(l, r) => {
                let e_left = ctx.random_challenge(tape);
                let left = l.draw_sim_coins(ctx, tape);
                let right = r.draw_sim_coins(ctx, tape);
                SimCoins::Or {
                    e_left,
                    left: Box::new(left),
                    right: Box::new(right),
                }
            }
        }
    }

    /// Accepting transcript for a given challenge from explicit coins,
    /// without any witness.
    pub fn simulate_with(
        &self,
        ctx: &SigmaCtx,
        challenge: &Challenge,
        coins: &SimCoins,
    ) -> (FirstMsg, Response) {
        match (self, coins) {
            (SigmaSpec::Schnorr { x }, SimCoins::Schnorr { z }) => {
                let e = challenge.as_scalar(ctx.params);
                let a = ctx
                    .params
                    .div(&ctx.params.exp_g(z), &ctx.params.exp(x, &e));
                (FirstMsg::Single(a), Response::Single(z.clone()))
            }
            (SigmaSpec::CommitOpen { x, h, g_bar, h_bar }, SimCoins::CommitOpen { z_w, z_r }) => {
                let e = challenge.as_scalar(ctx.params);
                let a1 = ctx
                    .params
                    .div(&ctx.params.exp_g(z_w), &ctx.params.exp(x, &e));
                let a2 = ctx
                    .params
                    .div(&ctx.params.exp_g(z_r), &ctx.params.exp(g_bar, &e));
                let a3 = ctx.params.div(
                    &ctx.params.mul(&ctx.params.exp_g(z_w), &ctx.params.exp(h, z_r)),
                    &ctx.params.exp(h_bar, &e),
                );
                (
                    FirstMsg::Triple(a1, a2, a3),
                    Response::Pair(z_w.clone(), z_r.clone()),
                )
            }
            (SigmaSpec::Or(l, r), SimCoins::Or { e_left, left, right }) => {
                let e_right = challenge.xor(e_left);
                let (a_l, z_l) = l.simulate_with(ctx, e_left, left);
                let (a_r, z_r) = r.simulate_with(ctx, &e_right, right);
                (
                    FirstMsg::Or(Box::new(a_l), Box::new(a_r)),
                    Response::Or {
                        e_left: e_left.clone(),
                        z_left: Box::new(z_l),
                        e_right,
                        z_right: Box::new(z_r),
                    },
                )
            }
            _ => unreachable!("simulator coins do not match spec"),
        }
    }

    pub fn simulate(
        &self,
        ctx: &SigmaCtx,
        challenge: &Challenge,
        tape: &mut Tape,
    ) -> (FirstMsg, Response) {
        let coins = self.draw_sim_coins(ctx, tape);
        self.simulate_with(ctx, challenge, &coins)
    }

    /// Special soundness: two accepting transcripts sharing a first
    /// message with distinct challenges yield a verified witness.
    pub fn extract(
        &self,
        ctx: &SigmaCtx,
        t1: &Transcript,
        t2: &Transcript,
    ) -> Result<SigmaWitness, SigmaError> {
        if t1.first != t2.first {
            return Err(SigmaError::FirstMismatch);
        }
        if t1.challenge == t2.challenge {
            return Err(SigmaError::SameChallenge);
        }
        match self {
            SigmaSpec::Schnorr { x } => {
                let (z1, z2) = match (&t1.response, &t2.response) {
                    (Response::Single(z1), Response::Single(z2)) => (z1, z2),
                    _ => return Err(SigmaError::ShapeMismatch),
                };
                let e1 = t1.challenge.as_scalar(ctx.params);
                let e2 = t2.challenge.as_scalar(ctx.params);
                let de = ctx
                    .params
                    .scalar_inv(&ctx.params.scalar_sub(&e1, &e2))
                    .map_err(|_| SigmaError::SameChallenge)?;
                let w = ctx.params.scalar_mul(&ctx.params.scalar_sub(z1, z2), &de);
                if &ctx.params.exp_g(&w) != x {
                    return Err(SigmaError::RelationViolated);
                }
                Ok(SigmaWitness::Dlog(w))
            }
            SigmaSpec::CommitOpen { .. } => {
                let ((zw1, zr1), (zw2, zr2)) = match (&t1.response, &t2.response) {
                    (Response::Pair(a, b), Response::Pair(c, d)) => ((a, b), (c, d)),
                    _ => return Err(SigmaError::ShapeMismatch),
                };
                let e1 = t1.challenge.as_scalar(ctx.params);
                let e2 = t2.challenge.as_scalar(ctx.params);
                let de = ctx
                    .params
                    .scalar_inv(&ctx.params.scalar_sub(&e1, &e2))
                    .map_err(|_| SigmaError::SameChallenge)?;
                let v = ctx.params.scalar_mul(&ctx.params.scalar_sub(zw1, zw2), &de);
                let r = ctx.params.scalar_mul(&ctx.params.scalar_sub(zr1, zr2), &de);
                let w = SigmaWitness::Open { v, r };
                if !self.witness_ok(ctx.params, &w) {
                    return Err(SigmaError::RelationViolated);
                }
                Ok(w)
            }
            SigmaSpec::Or(l, r) => {
                let (a_l, a_r) = match &t1.first {
                    FirstMsg::Or(a, b) => (a, b),
                    _ => return Err(SigmaError::ShapeMismatch),
                };
                let parts = |t: &Transcript| match &t.response {
                    Response::Or {
                        e_left,
                        z_left,
                        e_right,
                        z_right,
                    } => Ok((
                        (e_left.clone(), z_left.as_ref().clone()),
                        (e_right.clone(), z_right.as_ref().clone()),
                    )),
                    _ => Err(SigmaError::ShapeMismatch),
                };
                let ((el1, zl1), (er1, zr1)) = parts(t1)?;
                let ((el2, zl2), (er2, zr2)) = parts(t2)?;
                // At least one branch has differing inner challenges;
                // prefer the left one, fall back to the right if its
                // extraction cannot produce a valid witness.
                let mut last = SigmaError::SameChallenge;
                if el1 != el2 {
                    let sub1 = Transcript {
                        first: a_l.as_ref().clone(),
                        challenge: el1,
                        response: zl1,
                    };
                    let sub2 = Transcript {
                        first: a_l.as_ref().clone(),
                        challenge: el2,
                        response: zl2,
                    };
                    match l.extract(ctx, &sub1, &sub2) {
                        Ok(w) => return Ok(SigmaWitness::or(0, w)),
                        Err(e) => last = e,
                    }
                }
                if er1 != er2 {
                    let sub1 = Transcript {
                        first: a_r.as_ref().clone(),
                        challenge: er1,
                        response: zr1,
                    };
                    let sub2 = Transcript {
                        first: a_r.as_ref().clone(),
                        challenge: er2,
                        response: zr2,
                    };
                    match r.extract(ctx, &sub1, &sub2) {
                        Ok(w) => return Ok(SigmaWitness::or(1, w)),
                        Err(e) => last = e,
                    }
                }
                Err(last)
            }
        }
    }

    /// Structural check used by the session machines before accepting a
    /// first message off the wire.
    pub fn first_shape_ok(&self, first: &FirstMsg) -> bool {
        match (self, first) {
            (SigmaSpec::Schnorr { .. }, FirstMsg::Single(_)) => true,
            (SigmaSpec::CommitOpen { .. }, FirstMsg::Triple(..)) => true,
            (SigmaSpec::Or(l, r), FirstMsg::Or(a, b)) => {
                l.first_shape_ok(a) && r.first_shape_ok(b)
            }
            _ => false,
        }
    }

    pub fn response_shape_ok(&self, response: &Response) -> bool {
        match (self, response) {
            (SigmaSpec::Schnorr { .. }, Response::Single(_)) => true,
            (SigmaSpec::CommitOpen { .. }, Response::Pair(..)) => true,
            (
                SigmaSpec::Or(l, r),
                Response::Or {
                    z_left, z_right, ..
                },
            ) => l.response_shape_ok(z_left) && r.response_shape_ok(z_right),
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_ctx(params: &GroupParams) -> SigmaCtx<'_> {
        SigmaCtx::new(params, 3).unwrap()
    }

    fn s(v: u64) -> Scalar {
        Scalar::from_u64(v)
    }

    fn ch(v: u64) -> Challenge {
        Challenge::new(3, BigUint::from(v))
    }

    fn schnorr_x8() -> SigmaSpec {
        SigmaSpec::Schnorr {
            x: GroupElement::from_u64(8),
        }
    }

    #[test]
    fn schnorr_worked_example() {
        // x = 8 = g^3, t = 4, e = 5: z = 4 + 5*3 mod 11 = 8
        let p = GroupParams::toy();
        let ctx = toy_ctx(&p);
        let spec = schnorr_x8();
        let state = ProverState::Schnorr { t: s(4), w: s(3) };
        let a = FirstMsg::Single(p.exp_g(&s(4)));
        assert_eq!(a, FirstMsg::Single(GroupElement::from_u64(16)));
        let z = spec.respond(&ctx, &state, &ch(5));
        assert_eq!(z, Response::Single(s(8)));
        assert!(spec.verify(&ctx, &a, &ch(5), &z));
    }

    #[test]
    fn schnorr_extract_worked_example() {
        let p = GroupParams::toy();
        let ctx = toy_ctx(&p);
        let spec = schnorr_x8();
        let a = FirstMsg::Single(GroupElement::from_u64(16));
        let t1 = Transcript {
            first: a.clone(),
            challenge: ch(5),
            response: Response::Single(s(8)),
        };
        let t2 = Transcript {
            first: a,
            challenge: ch(2),
            response: Response::Single(s(10)),
        };
        assert_eq!(spec.extract(&ctx, &t1, &t2), Ok(SigmaWitness::Dlog(s(3))));
        assert_eq!(
            spec.extract(&ctx, &t1, &t1.clone()),
            Err(SigmaError::SameChallenge)
        );
    }

    #[test]
    fn schnorr_simulate_challenge_zero() {
        let p = GroupParams::toy();
        let ctx = toy_ctx(&p);
        let spec = schnorr_x8();
        let mut tape = Tape::derive(5, "sim", 0);
        let (a, z) = spec.simulate(&ctx, &ch(0), &mut tape);
        // e = 0 forces a = g^z
        if let (FirstMsg::Single(a), Response::Single(z)) = (&a, &z) {
            assert_eq!(a, &p.exp_g(z));
        } else {
            panic!("shape");
        }
        assert!(spec.verify(&ctx, &a, &ch(0), &z));
    }

    fn commit_open_example() -> SigmaSpec {
        SigmaSpec::CommitOpen {
            x: GroupElement::from_u64(9),
            h: GroupElement::from_u64(8),
            g_bar: GroupElement::from_u64(4),
            h_bar: GroupElement::from_u64(1),
        }
    }

    #[test]
    fn commit_open_worked_example() {
        // witness (w=5, r=2), t_w=1, t_r=6, e=3: A=(2,18,3), z=(5,1)
        let p = GroupParams::toy();
        let ctx = toy_ctx(&p);
        let spec = commit_open_example();
        let w = SigmaWitness::Open { v: s(5), r: s(2) };
        assert!(spec.witness_ok(&p, &w));
        let state = ProverState::CommitOpen {
            t_w: s(1),
            t_r: s(6),
            v: s(5),
            r: s(2),
        };
        let a = FirstMsg::Triple(
            p.exp_g(&s(1)),
            p.exp_g(&s(6)),
            p.mul(&p.exp_g(&s(1)), &p.exp(&GroupElement::from_u64(8), &s(6))),
        );
        assert_eq!(
            a,
            FirstMsg::Triple(
                GroupElement::from_u64(2),
                GroupElement::from_u64(18),
                GroupElement::from_u64(3)
            )
        );
        let z = spec.respond(&ctx, &state, &ch(3));
        assert_eq!(z, Response::Pair(s(5), s(1)));
        assert!(spec.verify(&ctx, &a, &ch(3), &z));

        // second accepting transcript with e' = 1 extracts (5, 2)
        let z2 = spec.respond(&ctx, &state, &ch(1));
        let t1 = Transcript {
            first: a.clone(),
            challenge: ch(3),
            response: z,
        };
        let t2 = Transcript {
            first: a,
            challenge: ch(1),
            response: z2,
        };
        assert_eq!(
            spec.extract(&ctx, &t1, &t2),
            Ok(SigmaWitness::Open { v: s(5), r: s(2) })
        );
    }

    #[test]
    fn commit_open_bad_statement_fails_third_check() {
        // h̄ = 2 instead of 1: honest responses exist but verification fails
        let p = GroupParams::toy();
        let ctx = toy_ctx(&p);
        let spec = SigmaSpec::CommitOpen {
            x: GroupElement::from_u64(9),
            h: GroupElement::from_u64(8),
            g_bar: GroupElement::from_u64(4),
            h_bar: GroupElement::from_u64(2),
        };
        let state = ProverState::CommitOpen {
            t_w: s(1),
            t_r: s(6),
            v: s(5),
            r: s(2),
        };
        let a = FirstMsg::Triple(
            GroupElement::from_u64(2),
            GroupElement::from_u64(18),
            GroupElement::from_u64(3),
        );
        let z = spec.respond(&ctx, &state, &ch(3));
        assert!(!spec.verify(&ctx, &a, &ch(3), &z));
    }

    #[test]
    fn or_worked_example() {
        // OR(Schnorr(8), Schnorr(9)) with witness (branch 0, w=3);
        // simulated branch e1=6, z1=2 gives a1=9; real t=4 gives a0=16;
        // s=5 gives e0=3, z0=2.
        let p = GroupParams::toy();
        let ctx = toy_ctx(&p);
        let spec = SigmaSpec::or(
            schnorr_x8(),
            SigmaSpec::Schnorr {
                x: GroupElement::from_u64(9),
            },
        );
        let state = ProverState::Or {
            branch: 0,
            real: Box::new(ProverState::Schnorr { t: s(4), w: s(3) }),
            other_e: ch(6),
            other_z: Box::new(Response::Single(s(2))),
        };
        let a1 = p.div(&p.exp_g(&s(2)), &p.exp(&GroupElement::from_u64(9), &s(6)));
        assert_eq!(a1, GroupElement::from_u64(9));
        let first = FirstMsg::Or(
            Box::new(FirstMsg::Single(GroupElement::from_u64(16))),
            Box::new(FirstMsg::Single(a1)),
        );
        let resp = spec.respond(&ctx, &state, &ch(5));
        match &resp {
            Response::Or {
                e_left,
                z_left,
                e_right,
                z_right,
            } => {
                assert_eq!(e_left, &ch(3));
                assert_eq!(z_left.as_ref(), &Response::Single(s(2)));
                assert_eq!(e_right, &ch(6));
                assert_eq!(z_right.as_ref(), &Response::Single(s(2)));
            }
            _ => panic!("shape"),
        }
        assert!(spec.verify(&ctx, &first, &ch(5), &resp));
    }

    #[test]
    fn or_extract_worked_example() {
        let p = GroupParams::toy();
        let ctx = toy_ctx(&p);
        let spec = SigmaSpec::or(
            schnorr_x8(),
            SigmaSpec::Schnorr {
                x: GroupElement::from_u64(9),
            },
        );
        let a1 = GroupElement::from_u64(9);
        let first = FirstMsg::Or(
            Box::new(FirstMsg::Single(GroupElement::from_u64(16))),
            Box::new(FirstMsg::Single(a1)),
        );
        let mk = |e0: u64, z0: u64| Transcript {
            first: first.clone(),
            challenge: ch(e0 ^ 6),
            response: Response::Or {
                e_left: ch(e0),
                z_left: Box::new(Response::Single(s(z0))),
                e_right: ch(6),
                z_right: Box::new(Response::Single(s(2))),
            },
        };
        let t1 = mk(5, 8);
        let t2 = mk(2, 10);
        assert_eq!(
            spec.extract(&ctx, &t1, &t2),
            Ok(SigmaWitness::or(0, SigmaWitness::Dlog(s(3))))
        );
    }

    #[test]
    fn nested_or_is_a_spec() {
        // or(A, or(B0, B1)) completes with any single inner witness
        let p = GroupParams::demo();
        let ctx = SigmaCtx::new(&p, p.max_challenge_bits()).unwrap();
        let mut tape = Tape::derive(21, "nest", 0);
        let wa = p.random_scalar(&mut tape);
        let wb = p.random_scalar(&mut tape);
        let spec = SigmaSpec::or(
            SigmaSpec::Schnorr { x: p.exp_g(&wa) },
            SigmaSpec::or(
                SigmaSpec::Schnorr { x: p.exp_g(&wb) },
                SigmaSpec::empty_claim(&p),
            ),
        );
        for witness in [
            SigmaWitness::or(0, SigmaWitness::Dlog(wa.clone())),
            SigmaWitness::or(1, SigmaWitness::or(0, SigmaWitness::Dlog(wb.clone()))),
        ] {
            assert!(spec.witness_ok(&p, &witness));
            let (a, st) = spec.first(&ctx, &witness, &mut tape).unwrap();
            let e = ctx.random_challenge(&mut tape);
            let z = spec.respond(&ctx, &st, &e);
            assert!(spec.verify(&ctx, &a, &e, &z));
        }
    }

    #[test]
    fn empty_claim_simulates_but_never_extracts() {
        let p = GroupParams::toy();
        let ctx = toy_ctx(&p);
        let spec = SigmaSpec::empty_claim(&p);
        let mut tape = Tape::derive(22, "empty", 0);
        for ev in 0..8u64 {
            let (a, z) = spec.simulate(&ctx, &ch(ev), &mut tape);
            assert!(spec.verify(&ctx, &a, &ch(ev), &z));
        }
        // no scalar satisfies the relation
        for w in 0..11u64 {
            assert!(!spec.witness_ok(&p, &SigmaWitness::Dlog(s(w))));
        }
    }

    #[test]
    fn challenge_width_guard() {
        let p = GroupParams::toy();
        assert!(SigmaCtx::new(&p, 3).is_ok());
        assert!(matches!(
            SigmaCtx::new(&p, 4),
            Err(SigmaError::ChallengeWidth { k: 4 })
        ));
    }

    #[test]
    fn leaf_challenges_xor_to_top() {
        let p = GroupParams::demo();
        let k = p.max_challenge_bits();
        let ctx = SigmaCtx::new(&p, k).unwrap();
        let mut tape = Tape::derive(23, "xor", 0);
        let spec = SigmaSpec::or(
            SigmaSpec::empty_claim(&p),
            SigmaSpec::or(SigmaSpec::empty_claim(&p), SigmaSpec::empty_claim(&p)),
        );
        let e = ctx.random_challenge(&mut tape);
        let (a, z) = spec.simulate(&ctx, &e, &mut tape);
        assert!(spec.verify(&ctx, &a, &e, &z));
        let mut leaves = Vec::new();
        z.leaf_challenges(&mut leaves);
        assert_eq!(leaves.len(), 3);
        let folded = leaves
            .iter()
            .skip(1)
            .fold(leaves[0].clone(), |acc, c| acc.xor(c));
        assert_eq!(folded, e);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn demo_specs(seed: u64) -> (GroupParams, Vec<(SigmaSpec, SigmaWitness)>) {
            let p = GroupParams::demo();
            let mut tape = Tape::derive(seed, "prop-spec", 0);
            let w1 = p.random_scalar(&mut tape);
            let w2 = p.random_scalar(&mut tape);
            let r = p.random_scalar(&mut tape);
            let u = p.random_scalar(&mut tape);
            let h = p.exp_g(&u);
            let x2 = p.exp_g(&w2);
            let g_bar = p.exp_g(&r);
            let h_bar = p.mul(&x2, &p.exp(&h, &r));
            let schnorr = (
                SigmaSpec::Schnorr { x: p.exp_g(&w1) },
                SigmaWitness::Dlog(w1.clone()),
            );
            let open = (
                SigmaSpec::CommitOpen {
                    x: x2,
                    h,
                    g_bar,
                    h_bar,
                },
                SigmaWitness::Open {
                    v: w2.clone(),
                    r: r.clone(),
                },
            );
            let or = (
                SigmaSpec::or(schnorr.0.clone(), open.0.clone()),
                SigmaWitness::or(1, open.1.clone()),
            );
            let nested = (
                SigmaSpec::or(
                    SigmaSpec::empty_claim(&p),
                    SigmaSpec::or(open.0.clone(), schnorr.0.clone()),
                ),
                SigmaWitness::or(1, SigmaWitness::or(1, SigmaWitness::Dlog(w1))),
            );
            (p, vec![schnorr, open, or, nested])
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn completeness(seed in 0u64..5000) {
                let (p, specs) = demo_specs(seed);
                let k = p.max_challenge_bits();
                let ctx = SigmaCtx::new(&p, k).unwrap();
                let mut tape = Tape::derive(seed, "prop-complete", 1);
                for (spec, wit) in specs {
                    let (a, st) = spec.first(&ctx, &wit, &mut tape).unwrap();
                    let e = ctx.random_challenge(&mut tape);
                    let z = spec.respond(&ctx, &st, &e);
                    prop_assert!(spec.verify(&ctx, &a, &e, &z));
                }
            }

            #[test]
            fn special_soundness(seed in 0u64..5000) {
                let (p, specs) = demo_specs(seed);
                let k = p.max_challenge_bits();
                let ctx = SigmaCtx::new(&p, k).unwrap();
                let mut tape = Tape::derive(seed, "prop-extract", 2);
                for (spec, wit) in specs {
                    let (a, st) = spec.first(&ctx, &wit, &mut tape).unwrap();
                    let e1 = ctx.random_challenge(&mut tape);
                    let mut e2 = ctx.random_challenge(&mut tape);
                    while e2 == e1 {
                        e2 = ctx.random_challenge(&mut tape);
                    }
                    let t1 = Transcript { first: a.clone(), challenge: e1.clone(), response: spec.respond(&ctx, &st, &e1) };
                    let t2 = Transcript { first: a, challenge: e2.clone(), response: spec.respond(&ctx, &st, &e2) };
                    let got = spec.extract(&ctx, &t1, &t2).unwrap();
                    prop_assert!(spec.witness_ok(&p, &got));
                }
            }

            #[test]
            fn simulation_accepts(seed in 0u64..5000) {
                let (p, specs) = demo_specs(seed);
                let k = p.max_challenge_bits();
                let ctx = SigmaCtx::new(&p, k).unwrap();
                let mut tape = Tape::derive(seed, "prop-sim", 3);
                for (spec, _) in specs {
                    let e = ctx.random_challenge(&mut tape);
                    let (a, z) = spec.simulate(&ctx, &e, &mut tape);
                    prop_assert!(spec.verify(&ctx, &a, &e, &z));
                }
            }
        }
    }
}
