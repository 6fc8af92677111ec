//! Deterministic concurrent-execution harness.
//!
//! A run drives one honest principal side (verifier sessions, or prover
//! sessions for the zero-knowledge experiments) against a strategy that
//! owns the schedule: the strategy opens sessions, routes messages, and
//! halts when done. Logical concurrency lives in a single-threaded FIFO
//! event loop, so a run is a pure function of (strategy, seed), and the
//! world can be cloned just before any public-coin draw and resumed with
//! that one coin overridden — which is all rewinding needs.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{GroupElement, GroupParams};
use crate::protocol::{
    Payload, ProtocolError, ProtocolWitness, ProverSession, SessionStatus, SessionView, Statement,
    Variant, VerifierKeyPair, VerifierSession,
};
use crate::rng::Tape;
use crate::sigma::Challenge;

pub type SessionId = u64;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("session cap {0} exceeded")]
    CapExceeded(usize),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("strategy opened a statement unknown to the prover factory")]
    UnknownStatement,
}

/// Registered verifier keys, id -> (y0, y1).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicFile {
    records: BTreeMap<String, (GroupElement, GroupElement)>,
}

impl PublicFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, id: &str, pk: (GroupElement, GroupElement)) -> bool {
        if self.records.contains_key(id) {
            return false;
        }
        self.records.insert(id.to_string(), pk);
        true
    }

    pub fn get(&self, id: &str) -> Option<&(GroupElement, GroupElement)> {
        self.records.get(id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Structured trace notes; attack strategies mark borrowed messages and
/// challenge splits so tests can audit the malleation path mechanically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Annotation {
    Borrowed {
        from_session: SessionId,
        what: String,
    },
    ChallengeSplit {
        parts: Vec<Challenge>,
    },
    Note {
        text: String,
    },
}

#[derive(Clone, Debug)]
pub enum Action {
    OpenSession(Statement),
    Send {
        session: SessionId,
        payload: Payload,
        note: Option<Annotation>,
    },
    Halt,
}

impl Action {
    pub fn send(session: SessionId, payload: Payload) -> Action {
        Action::Send {
            session,
            payload,
            note: None,
        }
    }

    pub fn send_noted(session: SessionId, payload: Payload, note: Annotation) -> Action {
        Action::Send {
            session,
            payload,
            note: Some(note),
        }
    }
}

/// What a strategy sees when it is called.
pub struct StrategyCtx<'a> {
    pub params: &'a GroupParams,
    pub pk: &'a (GroupElement, GroupElement),
    pub k: u32,
    pub tape: &'a mut Tape,
}

/// The adversary interface: it is the scheduler. Deterministic given its
/// tape; all state lives in the implementing struct so the world can be
/// cloned for snapshots.
pub trait Strategy: StrategyClone + std::fmt::Debug {
    fn on_start(&mut self, ctx: &mut StrategyCtx) -> Vec<Action>;

    fn on_session_opened(&mut self, _session: SessionId, _ctx: &mut StrategyCtx) -> Vec<Action> {
        Vec::new()
    }

    fn on_message(
        &mut self,
        session: SessionId,
        payload: &Payload,
        ctx: &mut StrategyCtx,
    ) -> Vec<Action>;
}

pub trait StrategyClone {
    fn clone_box(&self) -> Box<dyn Strategy>;
}

impl<T: Strategy + Clone + 'static> StrategyClone for T {
    fn clone_box(&self) -> Box<dyn Strategy> {
        Box::new(self.clone())
    }
}

impl Clone for Box<dyn Strategy> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Which honest side the harness plays.
#[derive(Clone, Debug)]
pub enum PrincipalFactory {
    /// Honest verifier sessions sharing one keypair.
    HonestVerifier {
        variant: Variant,
        keypair: VerifierKeyPair,
    },
    /// Prover sessions looked up by statement; `None` witnesses verify
    /// Stage-1 and then idle.
    Prover {
        variant: Variant,
        pk: (GroupElement, GroupElement),
        entries: Vec<(Statement, Option<ProtocolWitness>)>,
    },
}

impl PrincipalFactory {
    pub fn pk(&self) -> (GroupElement, GroupElement) {
        match self {
            PrincipalFactory::HonestVerifier { keypair, .. } => keypair.pk(),
            PrincipalFactory::Prover { pk, .. } => pk.clone(),
        }
    }

    fn role(&self) -> PrincipalRole {
        match self {
            PrincipalFactory::HonestVerifier { .. } => PrincipalRole::Verifier,
            PrincipalFactory::Prover { .. } => PrincipalRole::Prover,
        }
    }

    fn build(
        &self,
        params: &GroupParams,
        k: u32,
        statement: Statement,
        tape: &mut Tape,
    ) -> Result<(Principal, Vec<Payload>), RunError> {
        match self {
            PrincipalFactory::HonestVerifier { variant, keypair } => {
                let (v, out) = VerifierSession::new(*variant, params, keypair, statement, k, tape)?;
                Ok((Principal::Verifier(v), out))
            }
            PrincipalFactory::Prover {
                variant,
                pk,
                entries,
            } => {
                let witness = entries
                    .iter()
                    .find(|(s, _)| s == &statement)
                    .map(|(_, w)| w.clone())
                    .ok_or(RunError::UnknownStatement)?;
                let p = ProverSession::new(*variant, params, pk, statement, witness, k)?;
                Ok((Principal::Prover(p), Vec::new()))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum Principal {
    Verifier(VerifierSession),
    Prover(ProverSession),
}

impl Principal {
    fn step(&mut self, payload: &Payload, tape: &mut Tape) -> Result<Vec<Payload>, ProtocolError> {
        match self {
            Principal::Verifier(v) => v.step(payload, tape),
            Principal::Prover(p) => p.step(payload, tape),
        }
    }

    pub fn status(&self) -> SessionStatus {
        match self {
            Principal::Verifier(v) => v.status(),
            Principal::Prover(p) => p.status(),
        }
    }

    pub fn view(&self) -> SessionView {
        match self {
            Principal::Verifier(v) => v.view(),
            Principal::Prover(p) => p.view(),
        }
    }

    fn challenge_draw_imminent(&self, payload: &Payload) -> bool {
        match self {
            Principal::Verifier(v) => v.challenge_draw_imminent(payload),
            Principal::Prover(p) => p.challenge_draw_imminent(payload),
        }
    }

    fn set_challenge_override(&mut self, c: Challenge) {
        match self {
            Principal::Verifier(v) => v.set_challenge_override(c),
            Principal::Prover(p) => p.set_challenge_override(c),
        }
    }

    fn snap_kind(&self) -> SnapKind {
        match self {
            Principal::Verifier(_) => SnapKind::Stage3Challenge,
            Principal::Prover(_) => SnapKind::Stage1Challenge,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrincipalRole {
    Verifier,
    Prover,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub index: u64,
    pub session: SessionId,
    pub from_adversary: bool,
    pub payload: Payload,
    pub note: Option<Annotation>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: SessionId,
    pub view: SessionView,
    pub violation: Option<String>,
}

/// Complete, replayable account of one run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub k: u32,
    pub params: GroupParams,
    pub public_file: PublicFile,
    pub role: PrincipalRole,
    pub sessions: Vec<SessionRecord>,
    pub trace: Vec<TraceEntry>,
    /// draw counts: adversary tape, then one per session tape
    pub tape_draws: Vec<u64>,
}

impl RunRecord {
    pub fn session(&self, id: SessionId) -> &SessionRecord {
        &self.sessions[id as usize]
    }

    pub fn accepting_sessions(&self) -> Vec<SessionId> {
        self.sessions
            .iter()
            .filter(|s| s.view.status == SessionStatus::Accepted)
            .map(|s| s.id)
            .collect()
    }

    /// Recompute every session's verdict from its recorded transcripts.
    /// Returns (session, recomputed) pairs; `None` means the session never
    /// reached its Stage-3 verdict.
    pub fn reverify(&self) -> Vec<(SessionId, Option<bool>)> {
        self.sessions
            .iter()
            .map(|s| (s.id, reverify_view(&self.params, self.k, &self.pk(), &s.view)))
            .collect()
    }

    /// True iff recorded statuses match recomputation everywhere.
    pub fn reverify_consistent(&self) -> bool {
        self.reverify().iter().all(|(id, recomputed)| {
            let status = self.session(*id).view.status;
            match recomputed {
                Some(true) => status == SessionStatus::Accepted,
                Some(false) => status == SessionStatus::Rejected,
                None => status != SessionStatus::Accepted || self.role == PrincipalRole::Prover,
            }
        })
    }

    pub fn pk(&self) -> (GroupElement, GroupElement) {
        self.public_file
            .get("v0")
            .cloned()
            .expect("runs register exactly one key")
    }
}

/// Recompute a session verdict from a view: Stage-1 conversation must
/// verify, and the Stage-3 conversation (with coin-tossing checks for
/// that variant) decides accept/reject.
pub fn reverify_view(
    params: &GroupParams,
    k: u32,
    pk: &(GroupElement, GroupElement),
    view: &SessionView,
) -> Option<bool> {
    use crate::protocol::{challenge_bit, claim_spec, stage1_spec, stage3_spec};
    use crate::sigma::SigmaCtx;

    let ctx = SigmaCtx::new(params, k).ok()?;
    let s1 = view.stage1.as_ref()?;
    let s3 = view.stage3.as_ref()?;
    let spec1 = stage1_spec(pk);
    let mut ok = spec1.verify(&ctx, &s1.first, &s1.challenge, &s1.response);
    match view.variant {
        Variant::Dv05Structure => {
            let spec = claim_spec(params, &view.statement);
            let (c_e, e_hat, openings, q) = (
                view.c_e.as_ref()?,
                view.dv05_e_hat.as_ref()?,
                view.dv05_openings.as_ref()?,
                view.dv05_q.as_ref()?,
            );
            ok = ok && openings.len() == c_e.len() && e_hat.bits == k;
            if ok {
                for (i, (tc, op)) in c_e.iter().zip(openings.iter()).enumerate() {
                    if op.bit != challenge_bit(e_hat, i) || !crate::commit::tc_open(params, tc, op)
                    {
                        ok = false;
                        break;
                    }
                }
            }
            ok = ok && e_hat.xor(q) == s3.challenge;
            ok = ok && spec.verify(&ctx, &s3.first, &s3.challenge, &s3.response);
        }
        _ => {
            let spec3 = stage3_spec(
                params,
                view.variant,
                pk,
                &view.statement,
                view.c_w.as_ref(),
                view.c_sk.as_ref(),
            )
            .ok()?;
            ok = ok && spec3.verify(&ctx, &s3.first, &s3.challenge, &s3.response);
        }
    }
    Some(ok)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SnapKind {
    Stage1Challenge,
    Stage3Challenge,
}

/// Frozen world taken just before a session draws a public coin.
#[derive(Clone)]
pub struct Snapshot {
    world: World,
    pending_session: SessionId,
    pending_payload: Payload,
    pending_note: Option<Annotation>,
    pub session: SessionId,
    pub kind: SnapKind,
}

#[derive(Clone, Default)]
pub struct SnapshotStore {
    map: BTreeMap<(SessionId, SnapKind), Snapshot>,
}

impl SnapshotStore {
    pub fn get(&self, session: SessionId, kind: SnapKind) -> Option<&Snapshot> {
        self.map.get(&(session, kind))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

pub struct RunOutput {
    pub record: RunRecord,
    pub snapshots: SnapshotStore,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub params: GroupParams,
    pub k: u32,
    pub seed: u64,
    pub session_cap: usize,
    /// When set, every step re-hashes sibling sessions to assert that
    /// stepping one session never mutates another.
    pub check_isolation: bool,
}

impl RunConfig {
    pub fn new(params: &GroupParams, seed: u64) -> Self {
        RunConfig {
            k: params.max_challenge_bits(),
            params: params.clone(),
            seed,
            session_cap: 64,
            check_isolation: false,
        }
    }
}

#[derive(Clone, Debug)]
struct Slot {
    principal: Principal,
    tape: Tape,
}

#[derive(Clone)]
struct World {
    config: RunConfig,
    factory: PrincipalFactory,
    pk: (GroupElement, GroupElement),
    strategy: Box<dyn Strategy>,
    adv_tape: Tape,
    slots: Vec<Slot>,
    violations: Vec<Option<String>>,
    trace: Vec<TraceEntry>,
    queue: VecDeque<Action>,
    halted: bool,
}

impl World {
    fn new(config: RunConfig, factory: PrincipalFactory, strategy: Box<dyn Strategy>) -> World {
        let pk = factory.pk();
        let adv_tape = Tape::derive(config.seed, "adversary", 0);
        World {
            config,
            factory,
            pk,
            strategy,
            adv_tape,
            slots: Vec::new(),
            violations: Vec::new(),
            trace: Vec::new(),
            queue: VecDeque::new(),
            halted: false,
        }
    }

    fn start(&mut self, snapshots: &mut SnapshotStore) -> Result<(), RunError> {
        let mut ctx = StrategyCtx {
            params: &self.config.params,
            pk: &self.pk,
            k: self.config.k,
            tape: &mut self.adv_tape,
        };
        let actions = self.strategy.on_start(&mut ctx);
        self.queue.extend(actions);
        self.drain(snapshots)
    }

    fn drain(&mut self, snapshots: &mut SnapshotStore) -> Result<(), RunError> {
        while !self.halted {
            let Some(action) = self.queue.pop_front() else {
                break;
            };
            match action {
                Action::Halt => self.halted = true,
                Action::OpenSession(statement) => self.open_session(statement)?,
                Action::Send {
                    session,
                    payload,
                    note,
                } => self.deliver(session, payload, note, snapshots)?,
            }
        }
        Ok(())
    }

    fn open_session(&mut self, statement: Statement) -> Result<(), RunError> {
        if self.slots.len() >= self.config.session_cap {
            return Err(RunError::CapExceeded(self.config.session_cap));
        }
        let sid = self.slots.len() as SessionId;
        let mut tape = Tape::derive(self.config.seed, "session", sid);
        let (principal, eager) =
            self.factory
                .build(&self.config.params, self.config.k, statement, &mut tape)?;
        self.slots.push(Slot { principal, tape });
        self.violations.push(None);
        let mut ctx = StrategyCtx {
            params: &self.config.params,
            pk: &self.pk,
            k: self.config.k,
            tape: &mut self.adv_tape,
        };
        let actions = self.strategy.on_session_opened(sid, &mut ctx);
        self.queue.extend(actions);
        for payload in eager {
            self.emit_from_principal(sid, payload);
        }
        Ok(())
    }

    fn emit_from_principal(&mut self, sid: SessionId, payload: Payload) {
        self.trace.push(TraceEntry {
            index: self.trace.len() as u64,
            session: sid,
            from_adversary: false,
            payload: payload.clone(),
            note: None,
        });
        let mut ctx = StrategyCtx {
            params: &self.config.params,
            pk: &self.pk,
            k: self.config.k,
            tape: &mut self.adv_tape,
        };
        let actions = self.strategy.on_message(sid, &payload, &mut ctx);
        self.queue.extend(actions);
    }

    fn deliver(
        &mut self,
        sid: SessionId,
        payload: Payload,
        note: Option<Annotation>,
        snapshots: &mut SnapshotStore,
    ) -> Result<(), RunError> {
        let idx = sid as usize;
        if idx >= self.slots.len() {
            return Err(ProtocolError::Violation(format!("unknown session {sid}")).into());
        }
        if self.slots[idx].principal.challenge_draw_imminent(&payload) {
            let kind = self.slots[idx].principal.snap_kind();
            snapshots.map.insert(
                (sid, kind),
                Snapshot {
                    world: self.clone(),
                    pending_session: sid,
                    pending_payload: payload.clone(),
                    pending_note: note.clone(),
                    session: sid,
                    kind,
                },
            );
        }
        self.trace.push(TraceEntry {
            index: self.trace.len() as u64,
            session: sid,
            from_adversary: true,
            payload: payload.clone(),
            note,
        });
        let siblings = if self.config.check_isolation {
            self.sibling_fingerprints(idx)
        } else {
            Vec::new()
        };
        let slot = &mut self.slots[idx];
        match slot.principal.step(&payload, &mut slot.tape) {
            Ok(outgoing) => {
                if self.config.check_isolation {
                    assert_eq!(
                        siblings,
                        self.sibling_fingerprints(idx),
                        "stepping session {sid} mutated a sibling"
                    );
                }
                for out in outgoing {
                    self.emit_from_principal(sid, out);
                }
            }
            Err(e) => {
                // the session is aborted; the run continues
                self.violations[idx] = Some(e.to_string());
            }
        }
        Ok(())
    }

    fn sibling_fingerprints(&self, skip: usize) -> Vec<String> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != skip)
            .map(|(_, s)| format!("{:?}", s))
            .collect()
    }

    fn into_output(self, snapshots: SnapshotStore) -> RunOutput {
        let mut public_file = PublicFile::new();
        public_file.register("v0", self.pk.clone());
        let mut tape_draws = vec![self.adv_tape.draws()];
        tape_draws.extend(self.slots.iter().map(|s| s.tape.draws()));
        let record = RunRecord {
            seed: self.config.seed,
            k: self.config.k,
            params: self.config.params.clone(),
            public_file,
            role: self.factory.role(),
            sessions: self
                .slots
                .iter()
                .enumerate()
                .map(|(i, s)| SessionRecord {
                    id: i as SessionId,
                    view: s.principal.view(),
                    violation: self.violations[i].clone(),
                })
                .collect(),
            trace: self.trace,
            tape_draws,
        };
        RunOutput { record, snapshots }
    }
}

/// Drive a strategy against the honest side to completion.
pub fn run(
    config: RunConfig,
    factory: PrincipalFactory,
    strategy: Box<dyn Strategy>,
) -> Result<RunOutput, RunError> {
    let mut world = World::new(config, factory, strategy);
    let mut snapshots = SnapshotStore::default();
    world.start(&mut snapshots)?;
    Ok(world.into_output(snapshots))
}

/// Replay from a snapshot. With `override_challenge = None` the suffix
/// reproduces the original run exactly; with a value, the pending
/// session's next public coin is forced to it and everything else
/// replays deterministically.
pub fn resume(
    snapshot: &Snapshot,
    override_challenge: Option<Challenge>,
) -> Result<RunOutput, RunError> {
    let mut world = snapshot.world.clone();
    let mut snapshots = SnapshotStore::default();
    if let Some(c) = override_challenge {
        world.slots[snapshot.pending_session as usize]
            .principal
            .set_challenge_override(c);
    }
    world.deliver(
        snapshot.pending_session,
        snapshot.pending_payload.clone(),
        snapshot.pending_note.clone(),
        &mut snapshots,
    )?;
    world.drain(&mut snapshots)?;
    Ok(world.into_output(snapshots))
}

/// Honest prover driven from the strategy side: opens one session per
/// entry and answers through embedded prover machines. Entries are
/// consumed in open order.
#[derive(Clone, Debug)]
pub struct HonestProverStrategy {
    variant: Variant,
    entries: Vec<(Statement, ProtocolWitness)>,
    machines: BTreeMap<SessionId, ProverSession>,
    next_entry: usize,
}

impl HonestProverStrategy {
    pub fn new(variant: Variant, entries: Vec<(Statement, ProtocolWitness)>) -> Self {
        HonestProverStrategy {
            variant,
            entries,
            machines: BTreeMap::new(),
            next_entry: 0,
        }
    }
}

impl Strategy for HonestProverStrategy {
    fn on_start(&mut self, _ctx: &mut StrategyCtx) -> Vec<Action> {
        self.entries
            .iter()
            .map(|(s, _)| Action::OpenSession(s.clone()))
            .collect()
    }

    fn on_session_opened(&mut self, session: SessionId, ctx: &mut StrategyCtx) -> Vec<Action> {
        let (statement, witness) = self.entries[self.next_entry].clone();
        self.next_entry += 1;
        match ProverSession::new(
            self.variant,
            ctx.params,
            ctx.pk,
            statement,
            Some(witness),
            ctx.k,
        ) {
            Ok(machine) => {
                self.machines.insert(session, machine);
                Vec::new()
            }
            Err(_) => Vec::new(),
        }
    }

    fn on_message(
        &mut self,
        session: SessionId,
        payload: &Payload,
        ctx: &mut StrategyCtx,
    ) -> Vec<Action> {
        let Some(machine) = self.machines.get_mut(&session) else {
            return Vec::new();
        };
        match machine.step(payload, ctx.tape) {
            Ok(outgoing) => outgoing
                .into_iter()
                .map(|p| Action::send(session, p))
                .collect(),
            Err(_) => Vec::new(),
        }
    }
}

/// Honest verifier driven from the strategy side; the counterpart used
/// when the harness principal is a prover (zero-knowledge experiments).
#[derive(Clone, Debug)]
pub struct HonestVerifierStrategy {
    variant: Variant,
    keypair: VerifierKeyPair,
    statements: Vec<Statement>,
    machines: BTreeMap<SessionId, VerifierSession>,
    next_entry: usize,
}

impl HonestVerifierStrategy {
    pub fn new(variant: Variant, keypair: VerifierKeyPair, statements: Vec<Statement>) -> Self {
        HonestVerifierStrategy {
            variant,
            keypair,
            statements,
            machines: BTreeMap::new(),
            next_entry: 0,
        }
    }

    pub fn session_status(&self, session: SessionId) -> Option<SessionStatus> {
        self.machines.get(&session).map(|m| m.status())
    }
}

impl Strategy for HonestVerifierStrategy {
    fn on_start(&mut self, _ctx: &mut StrategyCtx) -> Vec<Action> {
        self.statements
            .iter()
            .map(|s| Action::OpenSession(s.clone()))
            .collect()
    }

    fn on_session_opened(&mut self, session: SessionId, ctx: &mut StrategyCtx) -> Vec<Action> {
        let statement = self.statements[self.next_entry].clone();
        self.next_entry += 1;
        match VerifierSession::new(
            self.variant,
            ctx.params,
            &self.keypair,
            statement,
            ctx.k,
            ctx.tape,
        ) {
            Ok((machine, eager)) => {
                self.machines.insert(session, machine);
                eager
                    .into_iter()
                    .map(|p| Action::send(session, p))
                    .collect()
            }
            Err(_) => Vec::new(),
        }
    }

    fn on_message(
        &mut self,
        session: SessionId,
        payload: &Payload,
        ctx: &mut StrategyCtx,
    ) -> Vec<Action> {
        let Some(machine) = self.machines.get_mut(&session) else {
            return Vec::new();
        };
        match machine.step(payload, ctx.tape) {
            Ok(outgoing) => outgoing
                .into_iter()
                .map(|p| Action::send(session, p))
                .collect(),
            Err(_) => Vec::new(),
        }
    }
}

/// Halts immediately; the degenerate adversary.
#[derive(Clone, Debug)]
pub struct HaltStrategy;

impl Strategy for HaltStrategy {
    fn on_start(&mut self, _ctx: &mut StrategyCtx) -> Vec<Action> {
        vec![Action::Halt]
    }

    fn on_message(&mut self, _s: SessionId, _p: &Payload, _c: &mut StrategyCtx) -> Vec<Action> {
        Vec::new()
    }
}
