//! Exact distribution checks by exhaustive enumeration.
//!
//! On the toy group every coin space is small enough to walk completely,
//! so zero-knowledge and witness-indistinguishability statements become
//! finite multiset comparisons: the set of real transcripts over all
//! prover coins must literally equal the set of simulated transcripts
//! over all simulator coins, challenge by challenge.

use num_bigint::BigUint;
use serde::Serialize;

use crate::group::{GroupParams, Scalar};
use crate::sigma::{Challenge, FirstCoins, SigmaCtx, SigmaSpec, SimCoins, SigmaWitness};

/// Guard against accidentally enumerating a demo-sized space.
const MAX_SPACE: usize = 4 << 20;

pub fn all_scalars(params: &GroupParams) -> Vec<Scalar> {
    let q = u64::try_from(params.q()).expect("enumeration needs a tiny group");
    assert!(q as usize <= MAX_SPACE, "scalar space too large to enumerate");
    (0..q).map(Scalar::from_u64).collect()
}

pub fn all_challenges(k: u32) -> Vec<Challenge> {
    assert!(k <= 12, "challenge space too large to enumerate");
    (0u64..(1 << k))
        .map(|v| Challenge::new(k, BigUint::from(v)))
        .collect()
}

/// Every honest-prover coin assignment for a spec/witness pair.
pub fn enum_first_coins(
    spec: &SigmaSpec,
    witness: &SigmaWitness,
    params: &GroupParams,
    k: u32,
) -> Vec<FirstCoins> {
    match (spec, witness) {
        (SigmaSpec::Schnorr { .. }, _) => all_scalars(params)
            .into_iter()
            .map(|t| FirstCoins::Schnorr { t })
            .collect(),
        (SigmaSpec::CommitOpen { .. }, _) => {
            let scalars = all_scalars(params);
            let mut out = Vec::with_capacity(scalars.len() * scalars.len());
            for t_w in &scalars {
                for t_r in &scalars {
                    out.push(FirstCoins::CommitOpen {
                        t_w: t_w.clone(),
                        t_r: t_r.clone(),
                    });
                }
            }
            out
        }
        (SigmaSpec::Or(l, r), SigmaWitness::Or { branch, inner }) => {
            let (real_spec, sim_spec) = if *branch == 0 { (l, r) } else { (r, l) };
            let reals = enum_first_coins(real_spec, inner, params, k);
            let sims = enum_sim_coins(sim_spec, params, k);
            let es = all_challenges(k);
            let total = reals.len() * es.len() * sims.len();
            assert!(total <= MAX_SPACE, "first-coin space too large: {total}");
            let mut out = Vec::with_capacity(total);
            for real in &reals {
                for e in &es {
                    for sim in &sims {
                        out.push(FirstCoins::Or {
                            real: Box::new(real.clone()),
                            other_e: e.clone(),
                            sim: Box::new(sim.clone()),
                        });
                    }
                }
            }
            out
        }
        _ => panic!("witness shape does not match spec"),
    }
}

/// Every simulator coin assignment for a spec.
pub fn enum_sim_coins(spec: &SigmaSpec, params: &GroupParams, k: u32) -> Vec<SimCoins> {
    match spec {
        SigmaSpec::Schnorr { .. } => all_scalars(params)
            .into_iter()
            .map(|z| SimCoins::Schnorr { z })
            .collect(),
        SigmaSpec::CommitOpen { .. } => {
            let scalars = all_scalars(params);
            let mut out = Vec::with_capacity(scalars.len() * scalars.len());
            for z_w in &scalars {
                for z_r in &scalars {
                    out.push(SimCoins::CommitOpen {
                        z_w: z_w.clone(),
                        z_r: z_r.clone(),
                    });
                }
            }
            out
        }
        SigmaSpec::Or(l, r) => {
            let lefts = enum_sim_coins(l, params, k);
            let rights = enum_sim_coins(r, params, k);
            let es = all_challenges(k);
            let total = lefts.len() * rights.len() * es.len();
            assert!(total <= MAX_SPACE, "sim-coin space too large: {total}");
            let mut out = Vec::with_capacity(total);
            for e in &es {
                for left in &lefts {
                    for right in &rights {
                        out.push(SimCoins::Or {
                            e_left: e.clone(),
                            left: Box::new(left.clone()),
                            right: Box::new(right.clone()),
                        });
                    }
                }
            }
            out
        }
    }
}

/// Per-challenge multiset comparison outcome.
#[derive(Clone, Debug, Serialize)]
pub struct ChallengeComparison {
    pub challenge: Challenge,
    pub left_count: usize,
    pub right_count: usize,
    pub equal: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExactCheck {
    pub label: String,
    pub per_challenge: Vec<ChallengeComparison>,
    pub equal: bool,
}

fn compare_multisets(
    label: &str,
    per_challenge: Vec<(Challenge, Vec<String>, Vec<String>)>,
) -> ExactCheck {
    let mut rows = Vec::new();
    let mut all_equal = true;
    for (challenge, mut left, mut right) in per_challenge {
        left.sort();
        right.sort();
        let equal = left == right;
        all_equal &= equal;
        rows.push(ChallengeComparison {
            challenge,
            left_count: left.len(),
            right_count: right.len(),
            equal,
        });
    }
    ExactCheck {
        label: label.to_string(),
        per_challenge: rows,
        equal: all_equal,
    }
}

fn transcript_key(first: &crate::sigma::FirstMsg, response: &crate::sigma::Response) -> String {
    serde_json::to_string(&(first, response)).expect("transcripts serialize")
}

/// Perfect special honest-verifier zero-knowledge, exactly: for every
/// challenge, the multiset of real transcripts over all prover coins
/// equals the multiset of simulated transcripts over all simulator coins.
pub fn shvzk_exact(
    params: &GroupParams,
    k: u32,
    spec: &SigmaSpec,
    witness: &SigmaWitness,
    label: &str,
) -> ExactCheck {
    let ctx = SigmaCtx::new(params, k).expect("width");
    assert!(spec.witness_ok(params, witness));
    let first_coins = enum_first_coins(spec, witness, params, k);
    let sim_coins = enum_sim_coins(spec, params, k);
    let mut rows = Vec::new();
    for e in all_challenges(k) {
        let mut real = Vec::with_capacity(first_coins.len());
        for coins in &first_coins {
            let (a, state) = spec.first_with(&ctx, witness, coins).expect("honest coins");
            let z = spec.respond(&ctx, &state, &e);
            debug_assert!(spec.verify(&ctx, &a, &e, &z));
            real.push(transcript_key(&a, &z));
        }
        let mut simulated = Vec::with_capacity(sim_coins.len());
        for coins in &sim_coins {
            let (a, z) = spec.simulate_with(&ctx, &e, coins);
            debug_assert!(spec.verify(&ctx, &a, &e, &z));
            simulated.push(transcript_key(&a, &z));
        }
        rows.push((e, real, simulated));
    }
    compare_multisets(label, rows)
}

/// Perfect witness indistinguishability, exactly: for every challenge,
/// the multiset of transcripts under one witness equals the multiset
/// under the other.
pub fn wi_exact(
    params: &GroupParams,
    k: u32,
    spec: &SigmaSpec,
    witness_a: &SigmaWitness,
    witness_b: &SigmaWitness,
    label: &str,
) -> ExactCheck {
    let ctx = SigmaCtx::new(params, k).expect("width");
    assert!(spec.witness_ok(params, witness_a));
    assert!(spec.witness_ok(params, witness_b));
    let coins_a = enum_first_coins(spec, witness_a, params, k);
    let coins_b = enum_first_coins(spec, witness_b, params, k);
    let mut rows = Vec::new();
    for e in all_challenges(k) {
        let under = |witness: &SigmaWitness, coin_set: &[FirstCoins]| {
            let mut out = Vec::with_capacity(coin_set.len());
            for coins in coin_set {
                let (a, state) = spec.first_with(&ctx, witness, coins).expect("honest coins");
                let z = spec.respond(&ctx, &state, &e);
                out.push(transcript_key(&a, &z));
            }
            out
        };
        let left = under(witness_a, &coins_a);
        let right = under(witness_b, &coins_b);
        rows.push((e, left, right));
    }
    compare_multisets(label, rows)
}

/// Joint exhaustive completeness: every prover coin assignment verifies
/// at every challenge.
pub fn completeness_exhaustive(
    params: &GroupParams,
    k: u32,
    spec: &SigmaSpec,
    witness: &SigmaWitness,
) -> bool {
    let ctx = SigmaCtx::new(params, k).expect("width");
    let first_coins = enum_first_coins(spec, witness, params, k);
    all_challenges(k).iter().all(|e| {
        first_coins.iter().all(|coins| {
            let (a, state) = spec.first_with(&ctx, witness, coins).expect("honest coins");
            let z = spec.respond(&ctx, &state, e);
            spec.verify(&ctx, &a, e, &z)
        })
    })
}

/// Joint exhaustive simulator acceptance: every simulator coin
/// assignment produces an accepting transcript at every challenge.
pub fn sim_acceptance_exhaustive(params: &GroupParams, k: u32, spec: &SigmaSpec) -> bool {
    let ctx = SigmaCtx::new(params, k).expect("width");
    let sim_coins = enum_sim_coins(spec, params, k);
    all_challenges(k).iter().all(|e| {
        sim_coins.iter().all(|coins| {
            let (a, z) = spec.simulate_with(&ctx, e, coins);
            spec.verify(&ctx, &a, e, &z)
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupElement;

    fn toy() -> GroupParams {
        GroupParams::toy()
    }

    fn schnorr8() -> (SigmaSpec, SigmaWitness) {
        (
            SigmaSpec::Schnorr {
                x: GroupElement::from_u64(8),
            },
            SigmaWitness::Dlog(Scalar::from_u64(3)),
        )
    }

    #[test]
    fn schnorr_shvzk_is_perfect() {
        let p = toy();
        let (spec, w) = schnorr8();
        let check = shvzk_exact(&p, 3, &spec, &w, "schnorr");
        assert!(check.equal);
        for row in &check.per_challenge {
            assert_eq!(row.left_count, 11);
            assert_eq!(row.right_count, 11);
        }
    }

    #[test]
    fn commit_open_shvzk_is_perfect() {
        let p = toy();
        let spec = SigmaSpec::CommitOpen {
            x: GroupElement::from_u64(9),
            h: GroupElement::from_u64(8),
            g_bar: GroupElement::from_u64(4),
            h_bar: GroupElement::from_u64(1),
        };
        let w = SigmaWitness::Open {
            v: Scalar::from_u64(5),
            r: Scalar::from_u64(2),
        };
        let check = shvzk_exact(&p, 3, &spec, &w, "commit-open");
        assert!(check.equal);
        for row in &check.per_challenge {
            assert_eq!(row.left_count, 121);
        }
    }

    #[test]
    fn key_proof_wi_is_perfect() {
        // statement with both witnesses known: y0 = g^3, y1 = g^5
        let p = toy();
        let spec = SigmaSpec::or(
            SigmaSpec::Schnorr {
                x: GroupElement::from_u64(8),
            },
            SigmaSpec::Schnorr {
                x: GroupElement::from_u64(9),
            },
        );
        let w0 = SigmaWitness::or(0, SigmaWitness::Dlog(Scalar::from_u64(3)));
        let w1 = SigmaWitness::or(1, SigmaWitness::Dlog(Scalar::from_u64(5)));
        let check = wi_exact(&p, 3, &spec, &w0, &w1, "key-proof");
        assert!(check.equal);
        for row in &check.per_challenge {
            // 11 real coins x 8 split challenges x 11 simulator coins
            assert_eq!(row.left_count, 968);
            assert_eq!(row.right_count, 968);
        }
    }

    #[test]
    fn or_completeness_joint_exhaustive() {
        let p = toy();
        let spec = SigmaSpec::or(
            SigmaSpec::Schnorr {
                x: GroupElement::from_u64(8),
            },
            SigmaSpec::Schnorr {
                x: GroupElement::from_u64(9),
            },
        );
        let w = SigmaWitness::or(0, SigmaWitness::Dlog(Scalar::from_u64(3)));
        assert!(completeness_exhaustive(&p, 3, &spec, &w));
        assert!(sim_acceptance_exhaustive(&p, 3, &spec));
    }

    #[test]
    fn shvzk_detects_imbalance() {
        // sanity for the harness itself: a wrong witness must be rejected
        let p = toy();
        let (spec, _) = schnorr8();
        let bad = SigmaWitness::Dlog(Scalar::from_u64(4));
        assert!(!spec.witness_ok(&p, &bad));
    }
}
