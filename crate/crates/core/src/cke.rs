//! Knowledge-extraction experiments.
//!
//! The simulator runs the honest verifier with one of two independently
//! sampled secret keys, records the whole concurrent interaction, then a
//! rewinding extractor replays each accepting session from the snapshot
//! taken before its Stage-3 coin, forcing fresh challenges until special
//! soundness yields a witness. Witnesses are classified by what they
//! turn out to be: the statement witness (Case 3), the preimage of the
//! key the verifier used (Case 2), or of the other key half (Case 1).
//! Knowledge-extraction independence is then estimated by evaluating a
//! relation against both the used and the unused secret key.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::commit::eg_break_hiding;
use crate::group::{GroupParams, Scalar};
use crate::protocol::{
    claim_spec, stage1_spec, stage3_spec, HatClaim, ProtocolWitness, SessionStatus, Statement,
    Variant, VerifierKeyPair,
};
use crate::rng::Tape;
use crate::runtime::{
    resume, run, HonestProverStrategy, PrincipalFactory, RunConfig, RunError, RunOutput,
    RunRecord, SessionId, SnapKind, Snapshot, Strategy,
};
use crate::sigma::{Challenge, SigmaCtx, SigmaSpec, SigmaWitness, Transcript};

/// Bounded-retry replacement for expected-time rewinding: after this many
/// counted rewinds per session the extractor reports failure.
pub const DEFAULT_REWIND_CAP: u32 = 128;

#[derive(Debug, Error)]
pub enum CkeError {
    #[error("at least one trial is required")]
    ZeroTrials,
    #[error("stage-1 key extraction exhausted the rewind cap")]
    CoverageFailure,
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Key material for the experiment: the real secret key and an
/// independent second key for the same public key.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CkeKeys {
    pub keypair: VerifierKeyPair,
    pub sk: Scalar,
    pub sk_prime: Scalar,
}

/// Sample (PK, SK, SK'): both halves get fresh preimages, a fair bit
/// picks which one the verifier uses; the other is SK'.
pub fn s_key(params: &GroupParams, tape: &mut Tape) -> CkeKeys {
    let s0 = params.random_scalar(tape);
    let s1 = params.random_scalar(tape);
    let b = tape.bit();
    let keypair = VerifierKeyPair::from_parts(params, &s0, &s1, b);
    let (sk, sk_prime) = if b == 0 { (s0, s1) } else { (s1, s0) };
    CkeKeys {
        keypair,
        sk,
        sk_prime,
    }
}

/// The proof-stage simulator: exactly the honest verifier on SK, so the
/// produced transcript is literally the adversary's real view.
pub fn s_proof(
    params: &GroupParams,
    variant: Variant,
    keys: &CkeKeys,
    strategy: Box<dyn Strategy>,
    seed: u64,
) -> Result<RunOutput, RunError> {
    run(
        RunConfig::new(params, seed),
        PrincipalFactory::HonestVerifier {
            variant,
            keypair: keys.keypair.clone(),
        },
        strategy,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseLabel {
    /// Extracted a preimage of the key half the verifier did not use.
    Case1,
    /// Extracted the preimage of the key the verifier used.
    Case2,
    /// Extracted a witness for the session statement itself.
    Case3,
    /// Rewind cap exhausted without a second accepting transcript.
    Failed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionExtraction {
    pub session: SessionId,
    pub accepting: bool,
    /// Extracted leaf scalar; absent for non-accepting or failed sessions.
    pub witness: Option<Scalar>,
    /// Commitment randomness when the winning clause opens a commitment.
    pub opening: Option<Scalar>,
    /// Branch path from the OR root to the winning leaf.
    pub branch_path: Vec<u8>,
    pub label: Option<CaseLabel>,
    pub rewinds: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub rewind_cap: u32,
    pub extractor_seed: u64,
    pub sessions: Vec<SessionExtraction>,
}

impl ExtractionReport {
    pub fn count(&self, label: CaseLabel) -> usize {
        self.sessions
            .iter()
            .filter(|s| s.label == Some(label))
            .count()
    }

    pub fn accepting(&self) -> usize {
        self.sessions.iter().filter(|s| s.accepting).count()
    }

    /// w̄ of the experiment: one entry per session, ⊥ as None.
    pub fn witnesses(&self) -> Vec<Option<Scalar>> {
        self.sessions.iter().map(|s| s.witness.clone()).collect()
    }
}

/// The Stage-3 statement a session's transcript is judged against.
fn session_spec(record: &RunRecord, session: SessionId) -> Option<SigmaSpec> {
    let view = &record.session(session).view;
    match view.variant {
        Variant::Dv05Structure => Some(claim_spec(&record.params, &view.statement)),
        _ => stage3_spec(
            &record.params,
            view.variant,
            &record.pk(),
            &view.statement,
            view.c_w.as_ref(),
            view.c_sk.as_ref(),
        )
        .ok(),
    }
}

/// Rewind every accepting session until a second accepting transcript
/// with a distinct challenge appears, extract, verify, classify.
pub fn extract_all(
    output: &RunOutput,
    keypair: &VerifierKeyPair,
    rewind_cap: u32,
    extractor_seed: u64,
) -> ExtractionReport {
    let record = &output.record;
    let params = &record.params;
    let ctx = SigmaCtx::new(params, record.k).expect("record width");
    let mut sessions = Vec::new();
    for s in &record.sessions {
        if s.view.status != SessionStatus::Accepted {
            sessions.push(SessionExtraction {
                session: s.id,
                accepting: false,
                witness: None,
                opening: None,
                branch_path: Vec::new(),
                label: None,
                rewinds: 0,
            });
            continue;
        }
        sessions.push(extract_one(
            output,
            keypair,
            &ctx,
            s.id,
            rewind_cap,
            extractor_seed,
        ));
    }
    ExtractionReport {
        rewind_cap,
        extractor_seed,
        sessions,
    }
}

fn extract_one(
    output: &RunOutput,
    keypair: &VerifierKeyPair,
    ctx: &SigmaCtx,
    session: SessionId,
    rewind_cap: u32,
    extractor_seed: u64,
) -> SessionExtraction {
    let record = &output.record;
    let view = &record.session(session).view;
    let spec = session_spec(record, session).expect("accepting session has a statement");
    let t1 = view.stage3.clone().expect("accepting session has stage-3");
    // the coin that was drawn at the snapshot point: the committed-coin
    // variant rewinds q, the others rewind the challenge itself
    let original_coin = match view.variant {
        Variant::Dv05Structure => view.dv05_q.clone().expect("coin"),
        _ => t1.challenge.clone(),
    };
    let snapshot = output
        .snapshots
        .get(session, SnapKind::Stage3Challenge)
        .expect("accepting session passed its challenge point");
    let mut tape = Tape::derive(extractor_seed, "extractor", session);
    let mut rewinds = 0u32;
    let failed = SessionExtraction {
        session,
        accepting: true,
        witness: None,
        opening: None,
        branch_path: Vec::new(),
        label: Some(CaseLabel::Failed),
        rewinds: rewind_cap,
    };
    while rewinds < rewind_cap {
        let coin = Challenge::random(record.k, &mut tape);
        if coin == original_coin {
            // collisions are resampled without spending the budget
            continue;
        }
        rewinds += 1;
        let Ok(replay) = resume(snapshot, Some(coin)) else {
            continue;
        };
        let rview = &replay.record.session(session).view;
        if rview.status != SessionStatus::Accepted {
            continue;
        }
        let Some(t2) = rview.stage3.clone() else {
            continue;
        };
        if t2.first != t1.first || t2.challenge == t1.challenge {
            continue;
        }
        let Ok(witness) = spec.extract(ctx, &t1, &t2) else {
            continue;
        };
        if !spec.witness_ok(ctx.params, &witness) {
            continue;
        }
        return classify(ctx.params, keypair, view, &witness, session, rewinds);
    }
    failed
}

/// Statement match wins over key matches, the used key over the unused
/// one; ties only happen by collision on tiny groups.
fn classify(
    params: &GroupParams,
    keypair: &VerifierKeyPair,
    view: &crate::protocol::SessionView,
    witness: &SigmaWitness,
    session: SessionId,
    rewinds: u32,
) -> SessionExtraction {
    let w = witness.leaf_scalar().clone();
    let gw = params.exp_g(&w);
    let statement_match = match &view.statement {
        Statement::Dlog { x } => &gw == x,
        Statement::KeyMixing {
            hat: HatClaim::Dlog(x),
            ..
        } => &gw == x,
        Statement::KeyMixing {
            hat: HatClaim::Empty,
            ..
        } => false,
    };
    let (used, other) = if keypair.b == 0 {
        (&keypair.y0, &keypair.y1)
    } else {
        (&keypair.y1, &keypair.y0)
    };
    let label = if statement_match {
        CaseLabel::Case3
    } else if &gw == used {
        CaseLabel::Case2
    } else if &gw == other {
        CaseLabel::Case1
    } else {
        CaseLabel::Failed
    };
    SessionExtraction {
        session,
        accepting: true,
        witness: Some(w),
        opening: witness.leaf_opening().cloned(),
        branch_path: witness.branch_path(),
        label: Some(label),
        rewinds,
    }
}

/// Brute-force the value committed in a session's c_sk; the independent
/// cross-check for key-preimage classifications.
pub fn break_csk(
    params: &GroupParams,
    record: &RunRecord,
    session: SessionId,
    budget: u64,
) -> Option<Scalar> {
    let c_sk = record.session(session).view.c_sk.as_ref()?;
    eg_break_hiding(params, c_sk, budget)
}

/// Relations the independence estimate quantifies over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeiRelation {
    /// Some extracted witness is a preimage of g^candidate.
    KeyPreimage,
    /// The first extracted witness equals the candidate scalar.
    FirstWitnessEquals,
}

impl KeiRelation {
    pub fn parse(name: &str) -> Option<KeiRelation> {
        match name {
            "key-preimage" | "preimage" => Some(KeiRelation::KeyPreimage),
            "first-witness-equals" | "first-witness" => Some(KeiRelation::FirstWitnessEquals),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KeiRelation::KeyPreimage => "key-preimage",
            KeiRelation::FirstWitnessEquals => "first-witness-equals",
        }
    }

    pub fn eval(
        &self,
        params: &GroupParams,
        candidate: &Scalar,
        report: &ExtractionReport,
        _record: &RunRecord,
    ) -> bool {
        match self {
            KeiRelation::KeyPreimage => {
                let target = params.exp_g(candidate);
                report
                    .witnesses()
                    .iter()
                    .flatten()
                    .any(|w| params.exp_g(w) == target)
            }
            KeiRelation::FirstWitnessEquals => report
                .witnesses()
                .iter()
                .flatten()
                .next()
                .is_some_and(|w| w == candidate),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KeiStats {
    pub trials: u32,
    pub p_sk: f64,
    pub p_sk_prime: f64,
    pub gap: f64,
    pub rewind_failures: u32,
}

/// Per-trial record kept by the full experiment driver.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KeiTrial {
    pub trial: u32,
    pub run_seed: u64,
    pub accepting_sessions: usize,
    pub labels: Vec<Option<CaseLabel>>,
    pub hit_sk: bool,
    pub hit_sk_prime: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KeiOutcome {
    pub stats: KeiStats,
    pub trials: Vec<KeiTrial>,
}

/// Run the full independence experiment, keeping per-trial case labels.
pub fn kei_run(
    params: &GroupParams,
    variant: Variant,
    strategy_factory: &dyn Fn(&GroupParams, &CkeKeys, &mut Tape) -> Box<dyn Strategy>,
    relation: KeiRelation,
    trials: u32,
    seed: u64,
    rewind_cap: u32,
) -> Result<KeiOutcome, CkeError> {
    if trials == 0 {
        return Err(CkeError::ZeroTrials);
    }
    let mut hits_sk = 0u32;
    let mut hits_sk_prime = 0u32;
    let mut rewind_failures = 0u32;
    let mut trial_rows = Vec::with_capacity(trials as usize);
    for t in 0..trials {
        let mut trial_tape = Tape::derive(seed, "kei-trial", u64::from(t));
        let keys = s_key(params, &mut trial_tape);
        let strategy = strategy_factory(params, &keys, &mut trial_tape);
        let run_seed = trial_tape.u64();
        let output = s_proof(params, variant, &keys, strategy, run_seed)?;
        let report = extract_all(&output, &keys.keypair, rewind_cap, run_seed ^ 0x5eed);
        rewind_failures += report.count(CaseLabel::Failed) as u32;
        let hit_sk = relation.eval(params, &keys.sk, &report, &output.record);
        let hit_sk_prime = relation.eval(params, &keys.sk_prime, &report, &output.record);
        hits_sk += u32::from(hit_sk);
        hits_sk_prime += u32::from(hit_sk_prime);
        trial_rows.push(KeiTrial {
            trial: t,
            run_seed,
            accepting_sessions: report.accepting(),
            labels: report.sessions.iter().map(|s| s.label).collect(),
            hit_sk,
            hit_sk_prime,
        });
    }
    let p_sk = f64::from(hits_sk) / f64::from(trials);
    let p_sk_prime = f64::from(hits_sk_prime) / f64::from(trials);
    Ok(KeiOutcome {
        stats: KeiStats {
            trials,
            p_sk,
            p_sk_prime,
            gap: (p_sk - p_sk_prime).abs(),
            rewind_failures,
        },
        trials: trial_rows,
    })
}

/// Estimate Pr[R(SK, w̄, str)] and Pr[R(SK', w̄, str)] over independent
/// experiments with fresh keys.
pub fn kei_estimate(
    params: &GroupParams,
    variant: Variant,
    strategy_factory: &dyn Fn(&GroupParams, &CkeKeys, &mut Tape) -> Box<dyn Strategy>,
    relation: KeiRelation,
    trials: u32,
    seed: u64,
    rewind_cap: u32,
) -> Result<KeiStats, CkeError> {
    kei_run(
        params,
        variant,
        strategy_factory,
        relation,
        trials,
        seed,
        rewind_cap,
    )
    .map(|o| o.stats)
}

/// Outcome of the zero-knowledge simulation demo.
#[derive(Debug)]
pub struct CzkOutcome {
    /// Key preimage covered by rewinding Stage-1, with its branch.
    pub covered_key: Option<(Scalar, u8)>,
    pub stage1_rewinds: u32,
    /// The final simulated view.
    pub record: RunRecord,
    /// Every completed session re-verifies from the recorded transcripts.
    pub sessions_reverified: bool,
}

/// Simulate concurrent sessions against a malicious verifier without any
/// statement witnesses: run until the verifier completes a Stage-1 key
/// proof, rewind that proof to extract the key preimage, then rerun from
/// scratch committing the key and proving through the key clause.
pub fn czk_simulate(
    params: &GroupParams,
    variant: Variant,
    pk: &(crate::group::GroupElement, crate::group::GroupElement),
    statements: &[Statement],
    verifier_strategy: Box<dyn Strategy>,
    seed: u64,
    rewind_cap: u32,
) -> Result<CzkOutcome, CkeError> {
    let k = params.max_challenge_bits();
    let ctx = SigmaCtx::new(params, k).expect("preset width");
    let mut seeds = Tape::derive(seed, "czk-phase-seeds", 0);
    let phase_a_seed = seeds.u64();
    let phase_b_seed = seeds.u64();

    let entries_blind: Vec<(Statement, Option<ProtocolWitness>)> =
        statements.iter().map(|s| (s.clone(), None)).collect();
    let phase_a = run(
        RunConfig::new(params, phase_a_seed),
        PrincipalFactory::Prover {
            variant,
            pk: pk.clone(),
            entries: entries_blind,
        },
        verifier_strategy.clone(),
    )?;

    // key coverage: the first session whose Stage-1 the verifier finished
    let candidate = phase_a
        .record
        .sessions
        .iter()
        .find(|s| s.view.stage1_ok)
        .map(|s| s.id);
    let Some(sid) = candidate else {
        // the verifier never proved its key: nothing left to simulate
        let reverified = all_completed_reverify(&phase_a.record);
        return Ok(CzkOutcome {
            covered_key: None,
            stage1_rewinds: 0,
            record: phase_a.record,
            sessions_reverified: reverified,
        });
    };
    let t1 = phase_a
        .record
        .session(sid)
        .view
        .stage1
        .clone()
        .expect("stage-1 transcript recorded");
    let snapshot = phase_a
        .snapshots
        .get(sid, SnapKind::Stage1Challenge)
        .expect("prover drew a stage-1 challenge");
    let (covered, rewinds) = cover_key(&ctx, pk, snapshot, &t1, sid, rewind_cap, seed)?;

    let entries_covered: Vec<(Statement, Option<ProtocolWitness>)> = statements
        .iter()
        .map(|s| {
            (
                s.clone(),
                Some(ProtocolWitness::KeyPreimage {
                    s: covered.0.clone(),
                    branch: covered.1,
                }),
            )
        })
        .collect();
    let phase_b = run(
        RunConfig::new(params, phase_b_seed),
        PrincipalFactory::Prover {
            variant,
            pk: pk.clone(),
            entries: entries_covered,
        },
        verifier_strategy,
    )?;
    let reverified = all_completed_reverify(&phase_b.record);
    Ok(CzkOutcome {
        covered_key: Some(covered),
        stage1_rewinds: rewinds,
        record: phase_b.record,
        sessions_reverified: reverified,
    })
}

fn cover_key(
    ctx: &SigmaCtx,
    pk: &(crate::group::GroupElement, crate::group::GroupElement),
    snapshot: &Snapshot,
    t1: &Transcript,
    sid: SessionId,
    rewind_cap: u32,
    seed: u64,
) -> Result<((Scalar, u8), u32), CkeError> {
    let spec1 = stage1_spec(pk);
    let mut tape = Tape::derive(seed, "czk-extractor", sid);
    let mut rewinds = 0u32;
    while rewinds < rewind_cap {
        let coin = Challenge::random(ctx.k, &mut tape);
        if coin == t1.challenge {
            continue;
        }
        rewinds += 1;
        let Ok(replay) = resume(snapshot, Some(coin)) else {
            continue;
        };
        let rview = &replay.record.session(sid).view;
        if !rview.stage1_ok {
            continue;
        }
        let Some(t2) = rview.stage1.clone() else {
            continue;
        };
        if t2.first != t1.first || t2.challenge == t1.challenge {
            continue;
        }
        let Ok(witness) = spec1.extract(ctx, t1, &t2) else {
            continue;
        };
        if let SigmaWitness::Or { branch, inner } = &witness {
            if let SigmaWitness::Dlog(s) = inner.as_ref() {
                return Ok(((s.clone(), *branch), rewinds));
            }
        }
    }
    Err(CkeError::CoverageFailure)
}

fn all_completed_reverify(record: &RunRecord) -> bool {
    record.sessions.iter().all(|s| {
        if s.view.status != SessionStatus::Accepted {
            return true;
        }
        crate::runtime::reverify_view(&record.params, record.k, &record.pk(), &s.view)
            == Some(true)
    })
}

/// Strategies addressable by name from the command line and the
/// experiment drivers.
pub fn named_strategy(
    name: &str,
    variant: Variant,
    params: &GroupParams,
    keys: &CkeKeys,
    sessions: usize,
    tape: &mut Tape,
) -> Option<Box<dyn Strategy>> {
    match name {
        "honest" => {
            let mut entries = Vec::new();
            for _ in 0..sessions.max(1) {
                let w = params.random_scalar(tape);
                entries.push((
                    Statement::Dlog {
                        x: params.exp_g(&w),
                    },
                    ProtocolWitness::Dlog(w),
                ));
            }
            Some(Box::new(HonestProverStrategy::new(variant, entries)))
        }
        "attack" => {
            let kind = match variant {
                Variant::Full => crate::attacks::AttackKind::TransplantFull,
                Variant::NoCw => crate::attacks::AttackKind::NoCw,
                Variant::NoCsk => crate::attacks::AttackKind::NoCsk,
                Variant::Dv05Structure => crate::attacks::AttackKind::Dv05,
            };
            let statement = crate::attacks::attack_statement(
                kind,
                params,
                &keys.keypair,
                crate::attacks::HatOption::Empty,
                tape,
            );
            Some(Box::new(crate::attacks::MimStrategy::new(kind, statement)))
        }
        "key-prover" => {
            let mut entries = Vec::new();
            for _ in 0..sessions.max(1) {
                let w = params.random_scalar(tape);
                entries.push((
                    Statement::Dlog {
                        x: params.exp_g(&w),
                    },
                    ProtocolWitness::KeyPreimage {
                        s: keys.sk.clone(),
                        branch: keys.keypair.b,
                    },
                ));
            }
            Some(Box::new(HonestProverStrategy::new(variant, entries)))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{run_attack, AttackKind, HatOption};
    use crate::group::GroupParams;
    use crate::runtime::HonestVerifierStrategy;

    fn demo_keys(seed: u64) -> (GroupParams, CkeKeys) {
        let params = GroupParams::demo();
        let keys = s_key(&params, &mut Tape::derive(seed, "keys", 0));
        (params, keys)
    }

    #[test]
    fn s_key_relationships() {
        let (params, keys) = demo_keys(1);
        let used = keys.keypair.used_key().clone();
        assert_eq!(params.exp_g(&keys.sk), used);
        let other = if keys.keypair.b == 0 {
            keys.keypair.y1.clone()
        } else {
            keys.keypair.y0.clone()
        };
        assert_eq!(params.exp_g(&keys.sk_prime), other);
        assert_ne!(keys.sk, keys.sk_prime);
        // deterministic for a fixed tape
        let again = s_key(&params, &mut Tape::derive(1, "keys", 0));
        assert_eq!(again.keypair, keys.keypair);
    }

    #[test]
    fn s_proof_is_the_honest_verifier_run() {
        let (params, keys) = demo_keys(2);
        let mut tape = Tape::derive(2, "stmt", 0);
        let strategy = named_strategy("honest", Variant::Full, &params, &keys, 1, &mut tape)
            .unwrap();
        let a = s_proof(&params, Variant::Full, &keys, strategy.clone(), 7).unwrap();
        let b = run(
            RunConfig::new(&params, 7),
            PrincipalFactory::HonestVerifier {
                variant: Variant::Full,
                keypair: keys.keypair.clone(),
            },
            strategy,
        )
        .unwrap();
        assert_eq!(
            serde_json::to_vec(&a.record).unwrap(),
            serde_json::to_vec(&b.record).unwrap()
        );
    }

    #[test]
    fn honest_full_extracts_case3() {
        for params in [GroupParams::toy(), GroupParams::demo()] {
            let keys = s_key(&params, &mut Tape::derive(3, "keys", 0));
            let mut wtape = Tape::derive(3, "w", 0);
            let w = params.random_scalar(&mut wtape);
            let statement = Statement::Dlog {
                x: params.exp_g(&w),
            };
            let strategy = HonestProverStrategy::new(
                Variant::Full,
                vec![(statement, ProtocolWitness::Dlog(w.clone()))],
            );
            let out = s_proof(&params, Variant::Full, &keys, Box::new(strategy), 11).unwrap();
            let report = extract_all(&out, &keys.keypair, DEFAULT_REWIND_CAP, 99);
            assert_eq!(report.sessions.len(), 1);
            let s = &report.sessions[0];
            assert_eq!(s.label, Some(CaseLabel::Case3));
            assert_eq!(s.witness.as_ref(), Some(&w));
            assert_eq!(s.branch_path, vec![0]);
        }
    }

    #[test]
    fn honest_extraction_is_case3_on_every_variant() {
        let params = GroupParams::demo();
        for variant in [
            Variant::Full,
            Variant::NoCw,
            Variant::NoCsk,
            Variant::Dv05Structure,
        ] {
            let keys = s_key(&params, &mut Tape::derive(14, "keys", variant as u64));
            let mut wtape = Tape::derive(14, "w", variant as u64);
            let w = params.random_scalar(&mut wtape);
            let statement = Statement::Dlog {
                x: params.exp_g(&w),
            };
            let strategy = HonestProverStrategy::new(
                variant,
                vec![(statement, ProtocolWitness::Dlog(w.clone()))],
            );
            let out = s_proof(&params, variant, &keys, Box::new(strategy), 15).unwrap();
            assert_eq!(out.record.session(0).view.status, SessionStatus::Accepted);
            let report = extract_all(&out, &keys.keypair, DEFAULT_REWIND_CAP, 16);
            let s = &report.sessions[0];
            assert_eq!(s.label, Some(CaseLabel::Case3), "{variant:?}");
            assert_eq!(s.witness.as_ref(), Some(&w), "{variant:?}");
        }
    }

    #[test]
    fn rejected_session_reverifies_consistently() {
        // strategy that corrupts its final response: the verifier records
        // Rejected, and re-verification reproduces that verdict
        #[derive(Clone, Debug)]
        struct CorruptLast {
            inner: HonestProverStrategy,
        }
        impl Strategy for CorruptLast {
            fn on_start(&mut self, ctx: &mut crate::runtime::StrategyCtx) -> Vec<crate::runtime::Action> {
                self.inner.on_start(ctx)
            }
            fn on_session_opened(
                &mut self,
                session: SessionId,
                ctx: &mut crate::runtime::StrategyCtx,
            ) -> Vec<crate::runtime::Action> {
                self.inner.on_session_opened(session, ctx)
            }
            fn on_message(
                &mut self,
                session: SessionId,
                payload: &crate::protocol::Payload,
                ctx: &mut crate::runtime::StrategyCtx,
            ) -> Vec<crate::runtime::Action> {
                let actions = self.inner.on_message(session, payload, ctx);
                actions
                    .into_iter()
                    .map(|a| match a {
                        crate::runtime::Action::Send {
                            session,
                            payload: crate::protocol::Payload::Stage3Response { z },
                            note,
                        } => {
                            let bad = match z {
                                crate::sigma::Response::Or {
                                    e_left,
                                    z_left,
                                    e_right,
                                    z_right,
                                } => crate::sigma::Response::Or {
                                    e_left: e_left.xor(&Challenge::new(e_left.bits, 1u32.into())),
                                    z_left,
                                    e_right,
                                    z_right,
                                },
                                other => other,
                            };
                            crate::runtime::Action::Send {
                                session,
                                payload: crate::protocol::Payload::Stage3Response { z: bad },
                                note,
                            }
                        }
                        other => other,
                    })
                    .collect()
            }
        }
        let params = GroupParams::toy();
        let keys = s_key(&params, &mut Tape::derive(17, "keys", 0));
        let w = Scalar::from_u64(7);
        let statement = Statement::Dlog {
            x: params.exp_g(&w),
        };
        let strategy = CorruptLast {
            inner: HonestProverStrategy::new(
                Variant::Full,
                vec![(statement, ProtocolWitness::Dlog(w))],
            ),
        };
        let out = s_proof(&params, Variant::Full, &keys, Box::new(strategy), 18).unwrap();
        assert_eq!(out.record.session(0).view.status, SessionStatus::Rejected);
        assert!(out.record.reverify_consistent());
        // nothing to extract from a rejected session
        let report = extract_all(&out, &keys.keypair, 8, 19);
        assert!(!report.sessions[0].accepting);
    }

    #[test]
    fn no_csk_attack_extracts_the_used_key() {
        let params = GroupParams::demo();
        // run_attack derives its own keys; reconstruct them for the check
        let mut setup = Tape::derive(21, "attack-setup", 0);
        let keypair = crate::protocol::keygen(&params, &mut setup);
        let (out, outcome) = run_attack(AttackKind::NoCsk, &params, 21, HatOption::Empty).unwrap();
        assert!(outcome.succeeded);
        let report = extract_all(&out, &keypair, DEFAULT_REWIND_CAP, 5);
        let s2 = &report.sessions[1];
        assert_eq!(s2.label, Some(CaseLabel::Case2));
        let w = s2.witness.clone().unwrap();
        assert_eq!(&params.exp_g(&w), keypair.used_key());
        // the winning branch is the borrowed key clause
        assert_eq!(s2.branch_path[0], 1);
    }

    #[test]
    fn no_cw_and_dv05_attacks_extract_the_used_key() {
        let params = GroupParams::demo();
        for (kind, seed) in [(AttackKind::NoCw, 22u64), (AttackKind::Dv05, 23u64)] {
            let mut setup = Tape::derive(seed, "attack-setup", 0);
            let keypair = crate::protocol::keygen(&params, &mut setup);
            let (out, outcome) = run_attack(kind, &params, seed, HatOption::Empty).unwrap();
            assert!(outcome.succeeded);
            let report = extract_all(&out, &keypair, DEFAULT_REWIND_CAP, 5);
            let s2 = &report.sessions[1];
            assert_eq!(s2.label, Some(CaseLabel::Case2), "{kind:?}");
            let w = s2.witness.clone().unwrap();
            assert_eq!(&params.exp_g(&w), keypair.used_key());
        }
    }

    #[test]
    fn non_accepting_session_is_bottom() {
        let params = GroupParams::toy();
        let (out, _) = run_attack(AttackKind::NoCsk, &params, 4, HatOption::Empty).unwrap();
        let mut setup = Tape::derive(4, "attack-setup", 0);
        let keypair = crate::protocol::keygen(&params, &mut setup);
        let report = extract_all(&out, &keypair, DEFAULT_REWIND_CAP, 6);
        // session 0 was only borrowed from, never finished
        assert!(!report.sessions[0].accepting);
        assert_eq!(report.sessions[0].witness, None);
        assert_eq!(report.sessions[0].label, None);
    }

    #[test]
    fn kei_gap_small_for_honest_large_for_attack() {
        let params = GroupParams::demo();
        let honest = kei_estimate(
            &params,
            Variant::Full,
            &|p, k, t| named_strategy("honest", Variant::Full, p, k, 1, t).unwrap(),
            KeiRelation::KeyPreimage,
            12,
            31,
            DEFAULT_REWIND_CAP,
        )
        .unwrap();
        assert!(honest.gap <= 0.1, "honest gap {}", honest.gap);
        let attacked = kei_estimate(
            &params,
            Variant::NoCsk,
            &|p, k, t| named_strategy("attack", Variant::NoCsk, p, k, 1, t).unwrap(),
            KeiRelation::KeyPreimage,
            12,
            32,
            DEFAULT_REWIND_CAP,
        )
        .unwrap();
        assert!(attacked.p_sk > 0.9 && attacked.p_sk_prime < 0.1);
        assert!(attacked.gap >= 0.9, "attack gap {}", attacked.gap);
    }

    #[test]
    fn zero_trials_rejected() {
        let params = GroupParams::toy();
        let err = kei_estimate(
            &params,
            Variant::Full,
            &|p, k, t| named_strategy("honest", Variant::Full, p, k, 1, t).unwrap(),
            KeiRelation::KeyPreimage,
            0,
            1,
            8,
        );
        assert!(matches!(err, Err(CkeError::ZeroTrials)));
    }

    #[test]
    fn break_csk_agrees_with_classification() {
        let (params, keys) = demo_keys(5);
        let budget = u64::try_from(params.q()).unwrap();
        // honest session commits zero
        let mut tape = Tape::derive(5, "stmt", 0);
        let honest = named_strategy("honest", Variant::Full, &params, &keys, 1, &mut tape).unwrap();
        let out = s_proof(&params, Variant::Full, &keys, honest, 41).unwrap();
        assert_eq!(
            break_csk(&params, &out.record, 0, budget),
            Some(params.scalar_zero())
        );
        // the key-prover fixture commits the secret key itself
        let fixture =
            named_strategy("key-prover", Variant::Full, &params, &keys, 1, &mut tape).unwrap();
        let out = s_proof(&params, Variant::Full, &keys, fixture, 42).unwrap();
        assert_eq!(out.record.session(0).view.status, SessionStatus::Accepted);
        assert_eq!(break_csk(&params, &out.record, 0, budget), Some(keys.sk.clone()));
        let report = extract_all(&out, &keys.keypair, DEFAULT_REWIND_CAP, 43);
        assert_eq!(report.sessions[0].label, Some(CaseLabel::Case2));
        assert_eq!(report.sessions[0].witness, Some(keys.sk.clone()));
        // starved budget
        assert_eq!(break_csk(&params, &out.record, 0, 1), None);
    }

    #[test]
    fn czk_simulation_covers_and_reverifies() {
        for params in [GroupParams::toy(), GroupParams::demo()] {
            let keys = s_key(&params, &mut Tape::derive(6, "keys", 0));
            let mut wtape = Tape::derive(6, "x", 0);
            let statements: Vec<Statement> = (0..3)
                .map(|_| Statement::Dlog {
                    x: params.exp_g(&params.random_scalar(&mut wtape)),
                })
                .collect();
            let strategy = HonestVerifierStrategy::new(
                Variant::Full,
                keys.keypair.clone(),
                statements.clone(),
            );
            let outcome = czk_simulate(
                &params,
                Variant::Full,
                &keys.keypair.pk(),
                &statements,
                Box::new(strategy),
                77,
                DEFAULT_REWIND_CAP,
            )
            .unwrap();
            let (s, branch) = outcome.covered_key.clone().unwrap();
            assert!(crate::protocol::r_key(&params, &keys.keypair.pk(), &s));
            assert_eq!(branch, keys.keypair.b);
            assert!(outcome.sessions_reverified);
            assert_eq!(outcome.record.accepting_sessions().len(), 3);
        }
    }

    #[test]
    fn czk_coverage_failure_when_verifier_answers_one_challenge_only() {
        // responds to its Stage-1 challenge only when it equals a fixed
        // value: the original run can complete Stage-1, but every rewound
        // challenge differs from that value, so extraction starves
        #[derive(Clone, Debug)]
        struct PickyVerifier {
            inner: crate::runtime::HonestVerifierStrategy,
            respond_to: Challenge,
        }
        impl Strategy for PickyVerifier {
            fn on_start(&mut self, ctx: &mut crate::runtime::StrategyCtx) -> Vec<crate::runtime::Action> {
                self.inner.on_start(ctx)
            }
            fn on_session_opened(
                &mut self,
                session: SessionId,
                ctx: &mut crate::runtime::StrategyCtx,
            ) -> Vec<crate::runtime::Action> {
                self.inner.on_session_opened(session, ctx)
            }
            fn on_message(
                &mut self,
                session: SessionId,
                payload: &crate::protocol::Payload,
                ctx: &mut crate::runtime::StrategyCtx,
            ) -> Vec<crate::runtime::Action> {
                if let crate::protocol::Payload::Stage1Challenge { s } = payload {
                    if s != &self.respond_to {
                        return Vec::new();
                    }
                }
                self.inner.on_message(session, payload, ctx)
            }
        }

        let params = GroupParams::toy();
        let keys = s_key(&params, &mut Tape::derive(8, "keys", 0));
        let statements = vec![Statement::Dlog {
            x: crate::group::GroupElement::from_u64(13),
        }];
        let respond_to = Challenge::new(3, 5u32.into());
        let mut starved = 0;
        let mut no_candidate = 0;
        for seed in 0..64u64 {
            let strategy = PickyVerifier {
                inner: crate::runtime::HonestVerifierStrategy::new(
                    Variant::Full,
                    keys.keypair.clone(),
                    statements.clone(),
                ),
                respond_to: respond_to.clone(),
            };
            match czk_simulate(
                &params,
                Variant::Full,
                &keys.keypair.pk(),
                &statements,
                Box::new(strategy),
                seed,
                8,
            ) {
                Err(CkeError::CoverageFailure) => starved += 1,
                Ok(outcome) => {
                    assert!(outcome.covered_key.is_none());
                    no_candidate += 1;
                }
                Err(e) => panic!("unexpected error: {e}"),
            }
        }
        // three-bit challenges: roughly one seed in eight completes
        // Stage-1 and then starves the extractor
        assert!(starved > 0, "no seed exercised the starving path");
        assert!(no_candidate > 0);
    }

    #[test]
    fn czk_without_stage1_has_nothing_to_prove() {
        // a verifier that opens sessions but never sends its key proof
        #[derive(Clone, Debug)]
        struct OpenAndStall(Vec<Statement>);
        impl Strategy for OpenAndStall {
            fn on_start(&mut self, _ctx: &mut crate::runtime::StrategyCtx) -> Vec<crate::runtime::Action> {
                self.0
                    .iter()
                    .cloned()
                    .map(crate::runtime::Action::OpenSession)
                    .collect()
            }
            fn on_message(
                &mut self,
                _s: SessionId,
                _p: &crate::protocol::Payload,
                _c: &mut crate::runtime::StrategyCtx,
            ) -> Vec<crate::runtime::Action> {
                Vec::new()
            }
        }
        let params = GroupParams::toy();
        let keys = s_key(&params, &mut Tape::derive(7, "keys", 0));
        let statements = vec![Statement::Dlog {
            x: crate::group::GroupElement::from_u64(13),
        }];
        let outcome = czk_simulate(
            &params,
            Variant::Full,
            &keys.keypair.pk(),
            &statements,
            Box::new(OpenAndStall(statements.clone())),
            78,
            8,
        )
        .unwrap();
        assert!(outcome.covered_key.is_none());
        assert!(outcome.sessions_reverified);
        assert!(outcome.record.accepting_sessions().is_empty());
    }
}
