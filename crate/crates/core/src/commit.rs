//! Commitments: the perfectly binding ElGamal scheme used for c_w and
//! c_sk, and a discrete-log trapdoor bit commitment used by the
//! coin-tossing protocol variant.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{GroupElement, GroupParams, Scalar};
use crate::rng::Tape;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CommitError {
    #[error("trapdoor does not match the commitment basis")]
    BadTrapdoor,
}

/// ElGamal commitment (h, ḡ, h̄) with committer-chosen basis h = g^u,
/// ḡ = g^r and h̄ = g^v · h^r. Perfectly binding: (ḡ, h̄) determine v.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElGamalCommitment {
    pub h: GroupElement,
    pub g_bar: GroupElement,
    pub h_bar: GroupElement,
}

/// Decommitment information, with the basis exponent u retained by the
/// committer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Opening {
    pub v: Scalar,
    pub r: Scalar,
    pub u: Scalar,
}

/// Commit to v with a fresh basis.
pub fn eg_commit(params: &GroupParams, v: &Scalar, tape: &mut Tape) -> (ElGamalCommitment, Opening) {
    let u = params.random_scalar(tape);
    eg_commit_with_basis(params, &u, v, tape)
}

/// Commit to v under the basis h = g^u; one session shares a single u
/// across both of its commitments.
pub fn eg_commit_with_basis(
    params: &GroupParams,
    u: &Scalar,
    v: &Scalar,
    tape: &mut Tape,
) -> (ElGamalCommitment, Opening) {
    let r = params.random_scalar(tape);
    let h = params.exp_g(u);
    let g_bar = params.exp_g(&r);
    let h_bar = params.mul(&params.exp_g(v), &params.exp(&h, &r));
    (
        ElGamalCommitment { h, g_bar, h_bar },
        Opening {
            v: v.clone(),
            r,
            u: u.clone(),
        },
    )
}

/// True iff ḡ = g^r and h̄ = g^v · h^r.
pub fn eg_verify(params: &GroupParams, c: &ElGamalCommitment, v: &Scalar, r: &Scalar) -> bool {
    params.exp_g(r) == c.g_bar
        && params.mul(&params.exp_g(v), &params.exp(&c.h, r)) == c.h_bar
}

/// Brute-force the committed value: recover r from ḡ, then v from
/// h̄ · h^{-r}. Feasible only on demo-scale groups; models the
/// sub-exponential adversary the leveraging argument grants.
pub fn eg_break_hiding(params: &GroupParams, c: &ElGamalCommitment, budget: u64) -> Option<Scalar> {
    let r = params.dlog_bruteforce(&c.g_bar, budget)?;
    let g_pow_v = params.div(&c.h_bar, &params.exp(&c.h, &r));
    params.dlog_bruteforce(&g_pow_v, budget)
}

/// Trapdoor bit commitment c = g^m · y0^s under the verifier-key basis
/// y0; the discrete log of y0 equivocates it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrapdoorCommitment {
    pub c: GroupElement,
    pub basis: GroupElement,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcOpening {
    pub bit: u8,
    pub s: Scalar,
}

pub fn tc_commit_bit(
    params: &GroupParams,
    basis: &GroupElement,
    bit: u8,
    tape: &mut Tape,
) -> (TrapdoorCommitment, TcOpening) {
    debug_assert!(bit <= 1);
    let s = params.random_scalar(tape);
    let c = tc_eval(params, basis, bit, &s);
    (
        TrapdoorCommitment {
            c,
            basis: basis.clone(),
        },
        TcOpening { bit, s },
    )
}

pub fn tc_open(params: &GroupParams, tc: &TrapdoorCommitment, opening: &TcOpening) -> bool {
    opening.bit <= 1 && tc_eval(params, &tc.basis, opening.bit, &opening.s) == tc.c
}

/// With the trapdoor s0 = dlog(basis), reopen an existing commitment to
/// the flipped bit: solve m + s0*s = m' + s0*s' for s'.
pub fn tc_equivocate(
    params: &GroupParams,
    tc: &TrapdoorCommitment,
    opening: &TcOpening,
    trapdoor: &Scalar,
) -> Result<TcOpening, CommitError> {
    if params.exp_g(trapdoor) != tc.basis {
        return Err(CommitError::BadTrapdoor);
    }
    let inv = params.scalar_inv(trapdoor).map_err(|_| CommitError::BadTrapdoor)?;
    let flipped = 1 - opening.bit;
    let m = Scalar::from_u64(u64::from(opening.bit));
    let m2 = Scalar::from_u64(u64::from(flipped));
    // s' = s + (m - m') / s0
    let s2 = params.scalar_add(&opening.s, &params.scalar_mul(&params.scalar_sub(&m, &m2), &inv));
    Ok(TcOpening {
        bit: flipped,
        s: s2,
    })
}

fn tc_eval(params: &GroupParams, basis: &GroupElement, bit: u8, s: &Scalar) -> GroupElement {
    let base = params.exp(basis, s);
    if bit == 0 {
        base
    } else {
        params.mul(&params.generator(), &base)
    }
}
