//! Concurrent interleaving/malleating adversaries.
//!
//! Each attack opens two sessions with the same honest verifier, borrows
//! the verifier's own Stage-1 key proof from the suspended first session,
//! splits the second session's Stage-3 challenge by XOR across simulated
//! clauses and the borrowed conversation, and routes the remainder back
//! into the first session. The accepted second session then proves a
//! statement for which the adversary holds no witness at all.
//!
//! The transplant strategy mounts the same schedule against the
//! double-commitment variant, where the key clause also demands a
//! commitment opening; the borrowed conversation has the wrong shape and
//! the attempt must fail. That failure is the negative control.

use serde::{Deserialize, Serialize};

use crate::commit::{eg_commit, tc_commit_bit, TcOpening, TrapdoorCommitment};
use crate::group::GroupParams;
use crate::protocol::{
    challenge_bit, keygen, stage1_spec, HatClaim, Payload, Statement,
    Variant, VerifierKeyPair,
};
use crate::rng::Tape;
use crate::runtime::{
    run, Action, Annotation, PrincipalFactory, RunConfig, RunError, RunOutput, SessionId,
    Strategy, StrategyCtx,
};
use crate::sigma::{Challenge, FirstMsg, Response, SigmaCtx, SigmaSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackKind {
    /// Against the variant without c_sk: borrow the key proof as the
    /// whole key clause of Stage-3.
    NoCsk,
    /// Against the variant without c_w: three-way challenge split across
    /// the simulated claim, the borrowed key proof, and the simulated
    /// c_sk clause.
    NoCw,
    /// Against the committed-coin structure: the committed ê and the
    /// coin q fix the effective challenge, split against the borrowed
    /// key proof.
    Dv05,
    /// Negative control against the double-commitment design.
    TransplantFull,
}

impl AttackKind {
    pub fn parse(s: &str) -> Option<AttackKind> {
        match s {
            "no-csk" => Some(AttackKind::NoCsk),
            "no-cw" => Some(AttackKind::NoCw),
            "dv05" => Some(AttackKind::Dv05),
            "full-transplant" => Some(AttackKind::TransplantFull),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::NoCsk => "no-csk",
            AttackKind::NoCw => "no-cw",
            AttackKind::Dv05 => "dv05",
            AttackKind::TransplantFull => "full-transplant",
        }
    }

    pub fn target_variant(&self) -> Variant {
        match self {
            AttackKind::NoCsk => Variant::NoCsk,
            AttackKind::NoCw => Variant::NoCw,
            AttackKind::Dv05 => Variant::Dv05Structure,
            AttackKind::TransplantFull => Variant::Full,
        }
    }

    /// The three attacks must accept; the transplant must not.
    pub fn expected_success(&self) -> bool {
        !matches!(self, AttackKind::TransplantFull)
    }
}

/// Claim used for the attacked session's statement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HatOption {
    /// The empty claim: the clause is unsatisfiable outright.
    Empty,
    /// A discrete-log claim whose witness is discarded at setup.
    Dlog,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub kind: AttackKind,
    pub variant: Variant,
    pub sessions_opened: usize,
    pub accepting: Vec<SessionId>,
    /// False by construction: the strategies never receive a witness.
    pub witness_known: bool,
    pub succeeded: bool,
    pub expected_success: bool,
    pub as_expected: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Setup,
    AwaitChallenge,
    AwaitBorrowedResponse,
    Done,
}

/// The common two-session man-in-the-middle state machine.
#[derive(Clone, Debug)]
pub struct MimStrategy {
    kind: AttackKind,
    statement: Statement,
    phase: Phase,
    s1: Option<SessionId>,
    s2: Option<SessionId>,
    borrowed_first: Option<FirstMsg>,
    s2_stage1_first: Option<FirstMsg>,
    s2_stage1_challenge: Option<Challenge>,
    sim_claim_e: Option<Challenge>,
    sim_claim_z: Option<Response>,
    sim_csk_e: Option<Challenge>,
    sim_csk_z: Option<Response>,
    e_hat: Option<Challenge>,
    tc_openings: Option<Vec<TcOpening>>,
    routed_e_v: Option<Challenge>,
    aborted: bool,
}

impl MimStrategy {
    pub fn new(kind: AttackKind, statement: Statement) -> Self {
        MimStrategy {
            kind,
            statement,
            phase: Phase::Setup,
            s1: None,
            s2: None,
            borrowed_first: None,
            s2_stage1_first: None,
            s2_stage1_challenge: None,
            sim_claim_e: None,
            sim_claim_z: None,
            sim_csk_e: None,
            sim_csk_z: None,
            e_hat: None,
            tc_openings: None,
            routed_e_v: None,
            aborted: false,
        }
    }

    /// Clause the adversary simulates in place of a real witness: the
    /// c_w-opening clause (no-c_sk variant and transplant) or the bare
    /// claim (the others).
    fn simulated_claim_spec(
        &self,
        ctx: &StrategyCtx,
        c_w: Option<&crate::commit::ElGamalCommitment>,
    ) -> SigmaSpec {
        match self.kind {
            AttackKind::NoCsk | AttackKind::TransplantFull => {
                let x = match &self.statement {
                    Statement::Dlog { x } => x.clone(),
                    _ => unreachable!("these attacks run on discrete-log statements"),
                };
                let c = c_w.expect("c_w committed before simulating");
                SigmaSpec::CommitOpen {
                    x,
                    h: c.h.clone(),
                    g_bar: c.g_bar.clone(),
                    h_bar: c.h_bar.clone(),
                }
            }
            AttackKind::NoCw | AttackKind::Dv05 => match &self.statement {
                Statement::KeyMixing { hat, .. } => match hat {
                    HatClaim::Dlog(x) => SigmaSpec::Schnorr { x: x.clone() },
                    HatClaim::Empty => SigmaSpec::empty_claim(ctx.params),
                },
                _ => unreachable!("key-mixing statement expected"),
            },
        }
    }

    fn stage2_and_first(&mut self, ctx: &mut StrategyCtx) -> Vec<Action> {
        let s1 = self.s1.expect("session 1 open");
        let s2 = self.s2.expect("session 2 open");
        let sctx = SigmaCtx::new(ctx.params, ctx.k).expect("width");
        let borrowed = self.borrowed_first.clone().expect("borrowed first message");
        let zero = ctx.params.scalar_zero();
        let mut actions = Vec::new();

        match self.kind {
            AttackKind::NoCsk => {
                let (c_w, _) = eg_commit(ctx.params, &zero, ctx.tape);
                let claim = self.simulated_claim_spec(ctx, Some(&c_w));
                let e_x = sctx.random_challenge(ctx.tape);
                let (a_x, z_x) = claim.simulate(&sctx, &e_x, ctx.tape);
                self.sim_claim_e = Some(e_x);
                self.sim_claim_z = Some(z_x);
                let a_p = FirstMsg::Or(Box::new(a_x), Box::new(borrowed));
                actions.push(Action::send(
                    s2,
                    Payload::Stage2Commitments {
                        c_w: Some(c_w),
                        c_sk: None,
                    },
                ));
                actions.push(Action::send_noted(
                    s2,
                    Payload::Stage3First { a: a_p },
                    Annotation::Borrowed {
                        from_session: s1,
                        what: "stage1-first".into(),
                    },
                ));
            }
            AttackKind::NoCw => {
                let (c_sk, _) = eg_commit(ctx.params, &zero, ctx.tape);
                let claim = self.simulated_claim_spec(ctx, None);
                let e_x = sctx.random_challenge(ctx.tape);
                let (a_x, z_x) = claim.simulate(&sctx, &e_x, ctx.tape);
                let csk_spec = SigmaSpec::or(
                    SigmaSpec::CommitOpen {
                        x: ctx.pk.0.clone(),
                        h: c_sk.h.clone(),
                        g_bar: c_sk.g_bar.clone(),
                        h_bar: c_sk.h_bar.clone(),
                    },
                    SigmaSpec::CommitOpen {
                        x: ctx.pk.1.clone(),
                        h: c_sk.h.clone(),
                        g_bar: c_sk.g_bar.clone(),
                        h_bar: c_sk.h_bar.clone(),
                    },
                );
                let e_sk = sctx.random_challenge(ctx.tape);
                let (a_sk, z_sk) = csk_spec.simulate(&sctx, &e_sk, ctx.tape);
                self.sim_claim_e = Some(e_x);
                self.sim_claim_z = Some(z_x);
                self.sim_csk_e = Some(e_sk);
                self.sim_csk_z = Some(z_sk);
                let a_p = FirstMsg::Or(
                    Box::new(FirstMsg::Or(Box::new(a_x), Box::new(borrowed))),
                    Box::new(a_sk),
                );
                actions.push(Action::send(
                    s2,
                    Payload::Stage2Commitments {
                        c_w: None,
                        c_sk: Some(c_sk),
                    },
                ));
                actions.push(Action::send_noted(
                    s2,
                    Payload::Stage3First { a: a_p },
                    Annotation::Borrowed {
                        from_session: s1,
                        what: "stage1-first".into(),
                    },
                ));
            }
            AttackKind::Dv05 => {
                // honest committed-coin phase
                let e_hat = Challenge::random(ctx.k, ctx.tape);
                let mut cs: Vec<TrapdoorCommitment> = Vec::new();
                let mut openings = Vec::new();
                for i in 0..ctx.k as usize {
                    let (tc, op) =
                        tc_commit_bit(ctx.params, &ctx.pk.0, challenge_bit(&e_hat, i), ctx.tape);
                    cs.push(tc);
                    openings.push(op);
                }
                self.e_hat = Some(e_hat);
                self.tc_openings = Some(openings);
                let claim = self.simulated_claim_spec(ctx, None);
                let e_x = sctx.random_challenge(ctx.tape);
                let (a_x, z_x) = claim.simulate(&sctx, &e_x, ctx.tape);
                self.sim_claim_e = Some(e_x);
                self.sim_claim_z = Some(z_x);
                let a_p = FirstMsg::Or(Box::new(a_x), Box::new(borrowed));
                actions.push(Action::send(s2, Payload::Dv05Phase2 { c_e: cs }));
                actions.push(Action::send_noted(
                    s2,
                    Payload::Dv05Phase3A { a: a_p },
                    Annotation::Borrowed {
                        from_session: s1,
                        what: "stage1-first".into(),
                    },
                ));
            }
            AttackKind::TransplantFull => {
                // both commitments exist, but the key clause of the
                // double-commitment design wants commitment openings: the
                // borrowed Schnorr pair cannot stand in for it.
                let (c_w, _) = eg_commit(ctx.params, &zero, ctx.tape);
                let (c_sk, _) = eg_commit(ctx.params, &zero, ctx.tape);
                let claim = self.simulated_claim_spec(ctx, Some(&c_w));
                let e_x = sctx.random_challenge(ctx.tape);
                let (a_x, z_x) = claim.simulate(&sctx, &e_x, ctx.tape);
                self.sim_claim_e = Some(e_x);
                self.sim_claim_z = Some(z_x);
                let a_p = FirstMsg::Or(Box::new(a_x), Box::new(borrowed));
                actions.push(Action::send(
                    s2,
                    Payload::Stage2Commitments {
                        c_w: Some(c_w),
                        c_sk: Some(c_sk),
                    },
                ));
                actions.push(Action::send_noted(
                    s2,
                    Payload::Stage3First { a: a_p },
                    Annotation::Borrowed {
                        from_session: s1,
                        what: "stage1-first (wrong shape for the key clause)".into(),
                    },
                ));
            }
        }
        self.phase = Phase::AwaitChallenge;
        actions
    }

    /// e'_V routed into the suspended first session.
    fn split_challenge(&self, e_p: &Challenge) -> (Challenge, Vec<Challenge>) {
        let e_x = self.sim_claim_e.clone().expect("simulated claim challenge");
        match self.kind {
            AttackKind::NoCw => {
                let e_sk = self.sim_csk_e.clone().expect("simulated c_sk challenge");
                let e_v = e_p.xor(&e_x).xor(&e_sk);
                (e_v, vec![e_p.clone(), e_x, e_sk])
            }
            _ => {
                let e_v = e_p.xor(&e_x);
                (e_v, vec![e_p.clone(), e_x])
            }
        }
    }

    fn assemble_response(&self, e_v: &Challenge, z_v: &Response) -> Response {
        let e_x = self.sim_claim_e.clone().expect("sim e");
        let z_x = self.sim_claim_z.clone().expect("sim z");
        match self.kind {
            AttackKind::NoCw => {
                let e_sk = self.sim_csk_e.clone().expect("sim e_sk");
                let z_sk = self.sim_csk_z.clone().expect("sim z_sk");
                Response::Or {
                    e_left: e_x.xor(e_v),
                    z_left: Box::new(Response::Or {
                        e_left: e_x,
                        z_left: Box::new(z_x),
                        e_right: e_v.clone(),
                        z_right: Box::new(z_v.clone()),
                    }),
                    e_right: e_sk,
                    z_right: Box::new(z_sk),
                }
            }
            _ => Response::Or {
                e_left: e_x,
                z_left: Box::new(z_x),
                e_right: e_v.clone(),
                z_right: Box::new(z_v.clone()),
            },
        }
    }
}

impl Strategy for MimStrategy {
    fn on_start(&mut self, _ctx: &mut StrategyCtx) -> Vec<Action> {
        vec![
            Action::OpenSession(self.statement.clone()),
            Action::OpenSession(self.statement.clone()),
        ]
    }

    fn on_session_opened(&mut self, session: SessionId, _ctx: &mut StrategyCtx) -> Vec<Action> {
        if self.s1.is_none() {
            self.s1 = Some(session);
        } else if self.s2.is_none() {
            self.s2 = Some(session);
        }
        Vec::new()
    }

    fn on_message(
        &mut self,
        session: SessionId,
        payload: &Payload,
        ctx: &mut StrategyCtx,
    ) -> Vec<Action> {
        if self.aborted {
            return Vec::new();
        }
        let is_s1 = Some(session) == self.s1;
        match payload {
            Payload::Stage1First { a } if is_s1 => {
                // suspend the first session right after the key proof opens
                self.borrowed_first = Some(a.clone());
                Vec::new()
            }
            Payload::Stage1First { a } => {
                self.s2_stage1_first = Some(a.clone());
                let s = Challenge::random(ctx.k, ctx.tape);
                self.s2_stage1_challenge = Some(s.clone());
                vec![Action::send(session, Payload::Stage1Challenge { s })]
            }
            Payload::Stage1Response { z } if !is_s1 => {
                // honest check of the verifier's key proof in session 2
                let sctx = SigmaCtx::new(ctx.params, ctx.k).expect("width");
                let spec1 = stage1_spec(ctx.pk);
                let first = self.s2_stage1_first.clone().expect("stage1 first");
                let s = self.s2_stage1_challenge.clone().expect("stage1 challenge");
                if !spec1.verify(&sctx, &first, &s, z) {
                    self.aborted = true;
                    return Vec::new();
                }
                self.stage2_and_first(ctx)
            }
            Payload::Stage3Challenge { s } | Payload::Dv05Phase3Q { q: s } if !is_s1 => {
                if self.phase != Phase::AwaitChallenge {
                    return Vec::new();
                }
                // effective challenge: for the committed-coin variant it
                // is ê ⊕ q, elsewhere the challenge itself
                let (e_p, mut parts) = match self.kind {
                    AttackKind::Dv05 => {
                        let e_hat = self.e_hat.clone().expect("committed coin");
                        (e_hat.xor(s), vec![e_hat, s.clone()])
                    }
                    _ => (s.clone(), vec![s.clone()]),
                };
                let (e_v, split) = self.split_challenge(&e_p);
                parts.extend(split.into_iter().skip(1));
                self.routed_e_v = Some(e_v.clone());
                self.phase = Phase::AwaitBorrowedResponse;
                vec![Action::send_noted(
                    self.s1.expect("session 1"),
                    Payload::Stage1Challenge { s: e_v },
                    Annotation::ChallengeSplit { parts },
                )]
            }
            Payload::Stage1Response { z } if is_s1 => {
                if self.phase != Phase::AwaitBorrowedResponse {
                    return Vec::new();
                }
                let challenge_sent = self.routed_e_v.clone().expect("routed challenge");
                let z_p = self.assemble_response(&challenge_sent, z);
                self.phase = Phase::Done;
                let s2 = self.s2.expect("session 2");
                match self.kind {
                    AttackKind::Dv05 => vec![Action::send(
                        s2,
                        Payload::Dv05Phase3Z {
                            e_hat: self.e_hat.clone().expect("coin"),
                            openings: self.tc_openings.clone().expect("openings"),
                            z: z_p,
                        },
                    )],
                    _ => vec![Action::send(s2, Payload::Stage3Response { z: z_p })],
                }
            }
            _ => Vec::new(),
        }
    }
}

/// Everything needed to run one attack end to end.
pub fn run_attack(
    kind: AttackKind,
    params: &GroupParams,
    seed: u64,
    hat: HatOption,
) -> Result<(RunOutput, AttackOutcome), RunError> {
    let mut setup = Tape::derive(seed, "attack-setup", 0);
    let keypair = keygen(params, &mut setup);
    let statement = attack_statement(kind, params, &keypair, hat, &mut setup);
    let strategy = MimStrategy::new(kind, statement);
    let config = RunConfig::new(params, seed);
    let variant = kind.target_variant();
    let output = run(
        config,
        PrincipalFactory::HonestVerifier {
            variant,
            keypair,
        },
        Box::new(strategy),
    )?;
    let accepting = output.record.accepting_sessions();
    let succeeded = accepting.contains(&1);
    let outcome = AttackOutcome {
        kind,
        variant,
        sessions_opened: output.record.sessions.len(),
        accepting,
        witness_known: false,
        succeeded,
        expected_success: kind.expected_success(),
        as_expected: succeeded == kind.expected_success(),
    };
    Ok((output, outcome))
}

/// Statement for the attacked sessions. Witness material drawn here is
/// discarded: the strategy never sees it.
pub fn attack_statement(
    kind: AttackKind,
    params: &GroupParams,
    keypair: &VerifierKeyPair,
    hat: HatOption,
    tape: &mut Tape,
) -> Statement {
    match kind {
        AttackKind::NoCsk | AttackKind::TransplantFull => {
            let w = params.random_scalar(tape);
            Statement::Dlog {
                x: params.exp_g(&w),
            }
        }
        AttackKind::NoCw | AttackKind::Dv05 => {
            let hat = match hat {
                HatOption::Empty => HatClaim::Empty,
                HatOption::Dlog => {
                    let v = params.random_scalar(tape);
                    HatClaim::Dlog(params.exp_g(&v))
                }
            };
            Statement::KeyMixing {
                hat,
                y0: keypair.y0.clone(),
                y1: keypair.y1.clone(),
            }
        }
    }
}

/// XOR bookkeeping audit: in an accepted session the response's leaf
/// challenges fold back to the effective top-level challenge.
pub fn leaf_xor_consistent(record: &crate::runtime::RunRecord, session: SessionId) -> bool {
    let view = &record.session(session).view;
    let Some(t) = &view.stage3 else {
        return false;
    };
    let mut leaves = Vec::new();
    t.response.leaf_challenges(&mut leaves);
    if leaves.is_empty() {
        return true;
    }
    let folded = leaves
        .iter()
        .skip(1)
        .fold(leaves[0].clone(), |acc, c| acc.xor(c));
    folded == t.challenge
}
