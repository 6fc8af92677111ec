//! Command-line front end: parameter generation, honest demos, attack
//! runs, knowledge-extraction experiments, exact toy-group enumeration
//! checks. Machine-readable JSON goes to stdout (or --json FILE); a
//! terse human summary goes to stderr. Exit codes: 0 expected outcome,
//! 1 unexpected protocol outcome, 2 usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use czk_core::attacks::{run_attack, AttackKind, HatOption};
use czk_core::cke::{
    czk_simulate, extract_all, kei_run, named_strategy, s_key, CaseLabel, KeiRelation,
    DEFAULT_REWIND_CAP,
};
use czk_core::enumeration::{shvzk_exact, wi_exact};
use czk_core::group::GroupParams;
use czk_core::protocol::{keygen, stage1_spec, ProtocolWitness, Statement, Variant};
use czk_core::runtime::{run, HonestProverStrategy, PrincipalFactory, RunConfig};
use czk_core::sigma::{SigmaSpec, SigmaWitness};
use czk_core::Tape;

#[derive(Parser)]
#[command(name = "czk", version, about = "Concurrent sigma-protocol testbed for the bare public-key model")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Group parameter utilities
    Params {
        #[command(subcommand)]
        cmd: ParamsCmd,
    },
    /// Generate a verifier key pair
    Keygen(KeygenArgs),
    /// Honest protocol demonstrations
    Demo {
        #[command(subcommand)]
        cmd: DemoCmd,
    },
    /// Concurrent interleaving attacks
    Attack {
        #[command(subcommand)]
        cmd: AttackCmd,
    },
    /// Knowledge-extraction experiments
    Cke {
        #[command(subcommand)]
        cmd: CkeCmd,
    },
    /// Exact distribution checks
    Wi {
        #[command(subcommand)]
        cmd: WiCmd,
    },
    /// Rewinding extraction demonstrations
    Extract {
        #[command(subcommand)]
        cmd: ExtractCmd,
    },
}

#[derive(Subcommand)]
enum ParamsCmd {
    /// Search for a safe-prime group of the given bit length
    Gen {
        #[arg(long)]
        bits: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the parameter record here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct KeygenArgs {
    /// Preset name (toy | demo) or a parameter file path
    #[arg(long, default_value = "demo")]
    params: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Subcommand)]
enum DemoCmd {
    /// Run honest prover sessions against the honest verifier
    Honest {
        #[arg(long, default_value = "demo")]
        params: String,
        #[arg(long, default_value = "full")]
        variant: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        sessions: usize,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Zero-knowledge simulation: prove sessions with no statement
    /// witnesses by covering the verifier's key through rewinding
    Simulate {
        #[arg(long, default_value = "demo")]
        params: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        sessions: usize,
        #[arg(long, default_value_t = DEFAULT_REWIND_CAP)]
        rewind_cap: u32,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum AttackCmd {
    /// Mount an interleaving attack; exit 0 iff the outcome matches the
    /// expectation (success for the three attacks, failure for the
    /// transplant)
    Run {
        /// dv05 | no-cw | no-csk | full-transplant
        #[arg(long)]
        variant: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "demo")]
        params: String,
        /// Claim shape for key-mixing statements: empty | dlog
        #[arg(long, default_value = "empty")]
        hat: String,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CkeCmd {
    /// Run the knowledge-extraction-independence experiment
    Run {
        #[arg(long, default_value = "demo")]
        params: String,
        #[arg(long, default_value = "full")]
        variant: String,
        /// honest | attack | key-prover
        #[arg(long, default_value = "honest")]
        strategy: String,
        #[arg(long, default_value_t = 50)]
        trials: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// key-preimage | first-witness-equals
        #[arg(long, default_value = "key-preimage")]
        relation: String,
        #[arg(long, default_value_t = DEFAULT_REWIND_CAP)]
        rewind_cap: u32,
        #[arg(long, default_value_t = 1)]
        sessions: usize,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum WiCmd {
    /// Exhaustive multiset equality checks on an enumerable group
    Enumerate {
        #[arg(long, default_value = "toy")]
        params: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum ExtractCmd {
    /// Rewind honest sessions and classify the extracted witnesses
    Demo {
        #[arg(long, default_value = "demo")]
        params: String,
        #[arg(long, default_value = "full")]
        variant: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        sessions: usize,
        #[arg(long, default_value_t = DEFAULT_REWIND_CAP)]
        rewind_cap: u32,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn load_params(spec: &str) -> Result<GroupParams, String> {
    if let Some(p) = GroupParams::by_preset(spec) {
        return Ok(p);
    }
    let text = std::fs::read_to_string(spec)
        .map_err(|e| format!("cannot read parameter file {spec}: {e}"))?;
    serde_json::from_str(&text).map_err(|e| format!("invalid parameter file {spec}: {e}"))
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::parse(s).ok_or_else(|| format!("unknown variant {s} (full | no-cw | no-csk | dv05)"))
}

fn emit(value: &serde_json::Value, json_path: &Option<PathBuf>) -> Result<(), String> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    match json_path {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn usage_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(msg) => usage_error(&msg),
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, String> {
    match cli.cmd {
        Cmd::Params { cmd } => params_cmd(cmd),
        Cmd::Keygen(args) => keygen_cmd(args),
        Cmd::Demo { cmd } => demo_cmd(cmd),
        Cmd::Attack { cmd } => attack_cmd(cmd),
        Cmd::Cke { cmd } => cke_cmd(cmd),
        Cmd::Wi { cmd } => wi_cmd(cmd),
        Cmd::Extract { cmd } => extract_cmd(cmd),
    }
}

fn params_cmd(cmd: ParamsCmd) -> Result<ExitCode, String> {
    let ParamsCmd::Gen { bits, seed, out } = cmd;
    let params = GroupParams::generate(bits, seed).map_err(|e| e.to_string())?;
    let value = serde_json::to_value(&params).expect("params serialize");
    emit(&value, &out)?;
    eprintln!(
        "generated {}-bit safe-prime group (q has {} bits)",
        params.bits(),
        params.q().bits()
    );
    Ok(ExitCode::SUCCESS)
}

fn keygen_cmd(args: KeygenArgs) -> Result<ExitCode, String> {
    let params = load_params(&args.params)?;
    let mut tape = Tape::derive(args.seed, "cli-keygen", 0);
    let kp = keygen(&params, &mut tape);
    let value = json!({
        "y0": kp.y0,
        "y1": kp.y1,
        "b": kp.b,
        "s": kp.s,
    });
    emit(&value, &None)?;
    eprintln!("key pair registered under bit b={}", kp.b);
    Ok(ExitCode::SUCCESS)
}

fn demo_cmd(cmd: DemoCmd) -> Result<ExitCode, String> {
    match cmd {
        DemoCmd::Honest {
            params,
            variant,
            seed,
            sessions,
            json,
        } => demo_honest(params, variant, seed, sessions, json),
        DemoCmd::Simulate {
            params,
            seed,
            sessions,
            rewind_cap,
            json,
        } => demo_simulate(params, seed, sessions, rewind_cap, json),
    }
}

fn demo_honest(
    params: String,
    variant: String,
    seed: u64,
    sessions: usize,
    json_path: Option<PathBuf>,
) -> Result<ExitCode, String> {
    let params = load_params(&params)?;
    let variant = parse_variant(&variant)?;
    let mut tape = Tape::derive(seed, "cli-demo", 0);
    let keypair = keygen(&params, &mut tape);
    let mut entries = Vec::new();
    for _ in 0..sessions.max(1) {
        let w = params.random_scalar(&mut tape);
        entries.push((
            Statement::Dlog {
                x: params.exp_g(&w),
            },
            ProtocolWitness::Dlog(w),
        ));
    }
    let out = run(
        RunConfig::new(&params, seed),
        PrincipalFactory::HonestVerifier { variant, keypair },
        Box::new(HonestProverStrategy::new(variant, entries)),
    )
    .map_err(|e| e.to_string())?;
    let accepted = out.record.accepting_sessions().len();
    let all_ok = accepted == sessions.max(1);
    let value = json!({
        "variant": variant.name(),
        "accepted": accepted,
        "sessions": out.record.sessions.len(),
        "reverified": out.record.reverify_consistent(),
        "record": out.record,
    });
    emit(&value, &json_path)?;
    eprintln!(
        "{} variant: {accepted}/{} sessions accepted",
        variant.name(),
        out.record.sessions.len()
    );
    Ok(if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn demo_simulate(
    params: String,
    seed: u64,
    sessions: usize,
    rewind_cap: u32,
    json_path: Option<PathBuf>,
) -> Result<ExitCode, String> {
    let params = load_params(&params)?;
    let mut tape = Tape::derive(seed, "cli-simulate", 0);
    let keys = s_key(&params, &mut tape);
    let statements: Vec<Statement> = (0..sessions.max(1))
        .map(|_| Statement::Dlog {
            x: params.exp_g(&params.random_scalar(&mut tape)),
        })
        .collect();
    let strategy = czk_core::runtime::HonestVerifierStrategy::new(
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
        seed,
        rewind_cap,
    )
    .map_err(|e| e.to_string())?;
    let ok = outcome.sessions_reverified
        && outcome.record.accepting_sessions().len() == statements.len();
    let value = json!({
        "covered": outcome.covered_key.is_some(),
        "stage1_rewinds": outcome.stage1_rewinds,
        "reverified": outcome.sessions_reverified,
        "accepted": outcome.record.accepting_sessions().len(),
        "record": outcome.record,
    });
    emit(&value, &json_path)?;
    eprintln!(
        "simulated {} sessions without witnesses ({} stage-1 rewinds), re-verified: {}",
        statements.len(),
        outcome.stage1_rewinds,
        outcome.sessions_reverified,
    );
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn attack_cmd(cmd: AttackCmd) -> Result<ExitCode, String> {
    let AttackCmd::Run {
        variant,
        seed,
        params,
        hat,
        json: json_path,
    } = cmd;
    let kind = AttackKind::parse(&variant)
        .ok_or_else(|| format!("unknown attack {variant} (dv05 | no-cw | no-csk | full-transplant)"))?;
    let hat = match hat.as_str() {
        "empty" => HatOption::Empty,
        "dlog" => HatOption::Dlog,
        other => return Err(format!("unknown claim shape {other} (empty | dlog)")),
    };
    let params = load_params(&params)?;
    let (out, outcome) = run_attack(kind, &params, seed, hat).map_err(|e| e.to_string())?;
    let value = json!({
        "outcome": outcome,
        "record": out.record,
    });
    emit(&value, &json_path)?;
    eprintln!(
        "{} against {}: {} (expected {}), witness_known={}",
        kind.name(),
        outcome.variant.name(),
        if outcome.succeeded { "accepted" } else { "not accepted" },
        if outcome.expected_success { "accepted" } else { "not accepted" },
        outcome.witness_known,
    );
    Ok(if outcome.as_expected {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cke_cmd(cmd: CkeCmd) -> Result<ExitCode, String> {
    let CkeCmd::Run {
        params,
        variant,
        strategy,
        trials,
        seed,
        relation,
        rewind_cap,
        sessions,
        json: json_path,
    } = cmd;
    let params = load_params(&params)?;
    let variant = parse_variant(&variant)?;
    let relation = KeiRelation::parse(&relation)
        .ok_or_else(|| format!("unknown relation {relation} (key-preimage | first-witness-equals)"))?;
    {
        // validate the strategy name before paying for the trials
        let mut probe = Tape::derive(seed, "cli-probe", 0);
        let keys = s_key(&params, &mut probe);
        if named_strategy(&strategy, variant, &params, &keys, 1, &mut probe).is_none() {
            return Err(format!(
                "unknown strategy {strategy} (honest | attack | key-prover)"
            ));
        }
    }
    let outcome = kei_run(
        &params,
        variant,
        &|p, k, t| named_strategy(&strategy, variant, p, k, sessions, t).expect("validated"),
        relation,
        trials,
        seed,
        rewind_cap,
    )
    .map_err(|e| e.to_string())?;
    let value = json!({
        "variant": variant.name(),
        "strategy": strategy,
        "relation": relation.name(),
        "stats": outcome.stats,
        "trials": outcome.trials,
    });
    emit(&value, &json_path)?;
    eprintln!(
        "{} trials: Pr[R(SK)]={:.3} Pr[R(SK')]={:.3} gap={:.3} ({} rewind failures)",
        outcome.stats.trials,
        outcome.stats.p_sk,
        outcome.stats.p_sk_prime,
        outcome.stats.gap,
        outcome.stats.rewind_failures,
    );
    Ok(ExitCode::SUCCESS)
}

fn wi_cmd(cmd: WiCmd) -> Result<ExitCode, String> {
    let WiCmd::Enumerate { params, seed } = cmd;
    let params = load_params(&params)?;
    if params.q().bits() > 12 {
        return Err("enumeration needs a tiny group; use --params toy".into());
    }
    let k = params.max_challenge_bits();
    let mut tape = Tape::derive(seed, "cli-wi", 0);
    let w = params.random_scalar(&mut tape);
    let x = params.exp_g(&w);
    let schnorr = shvzk_exact(
        &params,
        k,
        &SigmaSpec::Schnorr { x: x.clone() },
        &SigmaWitness::Dlog(w.clone()),
        "schnorr-shvzk",
    );
    let r = params.random_scalar(&mut tape);
    let u = params.random_scalar(&mut tape);
    let h = params.exp_g(&u);
    let open = shvzk_exact(
        &params,
        k,
        &SigmaSpec::CommitOpen {
            x: x.clone(),
            h: h.clone(),
            g_bar: params.exp_g(&r),
            h_bar: params.mul(&x, &params.exp(&h, &r)),
        },
        &SigmaWitness::Open { v: w, r },
        "commit-open-shvzk",
    );
    let s0 = params.random_scalar(&mut tape);
    let s1 = params.random_scalar(&mut tape);
    let pk = (params.exp_g(&s0), params.exp_g(&s1));
    let wi = wi_exact(
        &params,
        k,
        &stage1_spec(&pk),
        &SigmaWitness::or(0, SigmaWitness::Dlog(s0)),
        &SigmaWitness::or(1, SigmaWitness::Dlog(s1)),
        "stage1-wi",
    );
    let all_equal = schnorr.equal && open.equal && wi.equal;
    let value = json!({
        "multisets_equal": all_equal,
        "checks": [schnorr, open, wi],
    });
    emit(&value, &None)?;
    eprintln!("multisets equal: {all_equal}");
    Ok(if all_equal {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn extract_cmd(cmd: ExtractCmd) -> Result<ExitCode, String> {
    let ExtractCmd::Demo {
        params,
        variant,
        seed,
        sessions,
        rewind_cap,
        json: json_path,
    } = cmd;
    let params = load_params(&params)?;
    let variant = parse_variant(&variant)?;
    let mut tape = Tape::derive(seed, "cli-extract", 0);
    let keys = s_key(&params, &mut tape);
    let strategy = named_strategy("honest", variant, &params, &keys, sessions, &mut tape)
        .expect("honest strategy");
    let out = czk_core::cke::s_proof(&params, variant, &keys, strategy, seed)
        .map_err(|e| e.to_string())?;
    let report = extract_all(&out, &keys.keypair, rewind_cap, seed ^ 0xfeed);
    let failed = report.count(CaseLabel::Failed);
    let value = json!({
        "variant": variant.name(),
        "report": report,
    });
    emit(&value, &json_path)?;
    eprintln!(
        "{} sessions: {} case-3, {} case-2, {} case-1, {} failed",
        report.sessions.len(),
        report.count(CaseLabel::Case3),
        report.count(CaseLabel::Case2),
        report.count(CaseLabel::Case1),
        failed,
    );
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
