use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nsqip::circuits::Instance;
use nsqip::game::{acceptance, build_game, honest_strategy, Game};
use nsqip::inequalities::{
    gentle_measurement_suite, near_no_signaling_suite, pure_overlap_suite, SuiteResult, Verdict,
};
use nsqip::nosig::{ns_value_lp, soundness_threshold, tx_strategy};
use nsqip::proveropt::{ascend_restarts, trace_csv, AscendOptions, Init};
use nsqip::qip::{honest_prover, run_protocol, ProtocolConfig, RunReport, DEFAULT_QUBIT_CAP};
use nsqip::rational::{self, Rational};
use nsqip::strategy::Strategy;
use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;
use crate::spec::{check_out, check_tol, question_bits, ExperimentSpec, InstanceSource};

/// Default seed for every randomized command.
pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_TRIALS: usize = 1000;
pub const DEFAULT_TOL: f64 = 1e-9;

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn one() -> Rational {
    rational::int(1)
}

/// `1 - (1 - omega) / 4`, the honest embedding's acceptance.
fn honest_embedding_value(omega: &Rational) -> Rational {
    one() - (one() - omega) / rational::int(4)
}

/// `1 - (1 - omega)^2 / 144`, the soundness ceiling of the quantum protocol.
fn quantum_upper_bound(omega: &Rational) -> Rational {
    let gap = one() - omega;
    one() - &gap * &gap / rational::int(144)
}

#[derive(Serialize)]
struct LpReport {
    spec: ExperimentSpec,
    questions: usize,
    value: String,
    value_f64: f64,
    strategy_file: Option<String>,
    is_yes: bool,
    paper_bound: &'static str,
    paper_bound_value: String,
    bound_satisfied: bool,
    pivots: usize,
}

pub struct LpArgs {
    pub instance: InstanceSource,
    pub out: Option<PathBuf>,
}

pub fn lp(args: &LpArgs) -> Result<(), CliError> {
    check_out(args.out.as_deref())?;
    let inst = args.instance.load()?;
    let is_yes = inst.is_yes().map_err(|e| CliError::Input(e.to_string()))?;
    let g = build_game(&inst);
    let ns = ns_value_lp(&g)?;
    let n = g.n();
    let bound = one() - soundness_threshold(n);
    // Yes-instances must reach 1; no-instances must stay under the bound.
    let ok = if is_yes { ns.value == one() } else { ns.value <= bound };
    let strategy_file = match &args.out {
        Some(out) => {
            let path = out.with_extension("strategy.json");
            fs::write(&path, ns.strategy.to_json())?;
            Some(path.display().to_string())
        }
        None => None,
    };
    let report = LpReport {
        spec: ExperimentSpec {
            subcommand: "lp".into(),
            instance: Some(args.instance.to_string()),
            out: args.out.as_ref().map(|p| p.display().to_string()),
            ..Default::default()
        },
        questions: n,
        value: rational::to_text(&ns.value),
        value_f64: rational::to_f64(&ns.value),
        strategy_file,
        is_yes,
        paper_bound: "1 - 1/(N^2*3^N)",
        paper_bound_value: rational::to_text(&bound),
        bound_satisfied: ok,
        pivots: ns.pivots.len(),
    };
    emit(args.out.as_deref(), &to_json(&report))?;
    if !ok {
        return Err(CliError::Violation(format!(
            "LP value {} violates the bound for a {} instance",
            report.value,
            if is_yes { "yes" } else { "no" }
        )));
    }
    Ok(())
}

/// Strategy named on the command line for a game.
fn resolve_strategy(name: &str, inst: &Instance, g: &Game, source: &InstanceSource) -> Result<Strategy, CliError> {
    match name {
        "honest" => honest_strategy(inst).map_err(|e| CliError::Input(e.to_string())),
        "lp-optimal" => Ok(ns_value_lp(g)?.strategy),
        "tx" => {
            let h = source
                .tx_height()
                .ok_or_else(|| CliError::Input("--strategy tx needs --instance tx:H".into()))?;
            Ok(tx_strategy(h))
        }
        path => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{path}: {e}")))?;
            Strategy::from_json(&text).map_err(|e| CliError::Input(format!("{path}: {e}")))
        }
    }
}

fn protocol_config(inst: &Instance, k: Option<usize>, cap: usize) -> Result<ProtocolConfig, CliError> {
    let k = question_bits(inst, k)?;
    let cfg = ProtocolConfig::honest(k).with_cap(cap);
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct QsimReport {
    spec: ExperimentSpec,
    run: RunReport,
    base_acceptance: String,
    expected_acceptance: f64,
    within_tol: bool,
}

pub struct QsimArgs {
    pub instance: InstanceSource,
    pub strategy: String,
    pub k: Option<usize>,
    pub qubit_cap: usize,
    pub tol: f64,
    pub out: Option<PathBuf>,
}

pub fn qsim(args: &QsimArgs) -> Result<(), CliError> {
    check_out(args.out.as_deref())?;
    check_tol(args.tol)?;
    let inst = args.instance.load()?;
    let cfg = protocol_config(&inst, args.k, args.qubit_cap)?;
    let g = build_game(&inst);
    let p = resolve_strategy(&args.strategy, &inst, &g, &args.instance)?;
    let base = acceptance(&g, &p).map_err(|e| CliError::Input(e.to_string()))?;
    let prover = honest_prover(&p, &cfg)?;
    let run = run_protocol(&cfg, &prover, &g)?;
    let expected = rational::to_f64(&honest_embedding_value(&base));
    let within_tol = (run.acceptance - expected).abs() <= args.tol;
    let report = QsimReport {
        spec: ExperimentSpec {
            subcommand: "qsim".into(),
            instance: Some(args.instance.to_string()),
            strategy: Some(args.strategy.clone()),
            k: Some(cfg.k),
            qubit_cap: Some(args.qubit_cap),
            tol: Some(args.tol),
            out: args.out.as_ref().map(|p| p.display().to_string()),
            ..Default::default()
        },
        run,
        base_acceptance: rational::to_text(&base),
        expected_acceptance: expected,
        within_tol,
    };
    emit(args.out.as_deref(), &to_json(&report))?;
    if !within_tol {
        return Err(CliError::Violation(format!(
            "acceptance {} differs from 1 - (1 - {})/4 by more than {}",
            report.run.acceptance, report.base_acceptance, args.tol
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct SuiteReport {
    #[serde(flatten)]
    result: SuiteResult,
    passed: bool,
}

#[derive(Serialize)]
struct InequalityReport {
    spec: ExperimentSpec,
    suites: Vec<SuiteReport>,
    all_passed: bool,
}

pub const SUITES: [&str; 3] = ["pure-overlap", "near-no-signaling", "gentle-measurement"];

pub struct VerifyArgs {
    pub seed: u64,
    pub trials: usize,
    pub jobs: usize,
    pub negate: Option<String>,
    pub out: Option<PathBuf>,
}

pub fn verify_lemmas(args: &VerifyArgs) -> Result<(), CliError> {
    check_out(args.out.as_deref())?;
    if let Some(name) = &args.negate {
        if !SUITES.contains(&name.as_str()) {
            return Err(CliError::Input(format!("unknown suite {name:?}")));
        }
    }
    if args.trials == 0 {
        eprintln!("warning: --trials 0 checks nothing; every suite passes vacuously");
    }
    let verdict = |name: &str| {
        if args.negate.as_deref() == Some(name) {
            Verdict::Negated
        } else {
            Verdict::Normal
        }
    };
    let run = |name: &str| -> Result<SuiteResult, CliError> {
        match name {
            "pure-overlap" => Ok(pure_overlap_suite(args.seed, args.trials, verdict(name))),
            "near-no-signaling" => Ok(near_no_signaling_suite(args.seed, args.trials, verdict(name))?),
            _ => Ok(gentle_measurement_suite(args.seed, args.trials, verdict(name))),
        }
    };
    let results: Vec<Result<SuiteResult, CliError>> = if args.jobs > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = SUITES.iter().map(|name| scope.spawn(move || run(name))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("suite thread panicked"))
                .collect()
        })
    } else {
        SUITES.iter().map(|name| run(name)).collect()
    };
    let suites: Vec<SuiteReport> = results
        .into_iter()
        .map(|r| {
            r.map(|result| SuiteReport {
                passed: result.passed(),
                result,
            })
        })
        .collect::<Result<_, _>>()?;
    let all_passed = suites.iter().all(|s| s.passed);
    let report = InequalityReport {
        spec: ExperimentSpec {
            subcommand: "verify-lemmas".into(),
            seed: Some(args.seed),
            trials: Some(args.trials),
            jobs: Some(args.jobs),
            out: args.out.as_ref().map(|p| p.display().to_string()),
            ..Default::default()
        },
        suites,
        all_passed,
    };
    emit(args.out.as_deref(), &to_json(&report))?;
    for s in report.suites.iter().filter(|s| !s.passed) {
        eprintln!(
            "{}: {} of {} trials failed; counterexample: {}",
            s.result.name,
            s.result.failures,
            s.result.trials,
            s.result.counterexample.as_deref().unwrap_or("none recorded")
        );
    }
    if !all_passed {
        return Err(CliError::Violation("an inequality suite failed".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct SeesawReport {
    spec: ExperimentSpec,
    is_yes: bool,
    omega: String,
    value: f64,
    best_restart: usize,
    restart_values: Vec<f64>,
    replay_acceptance: f64,
    lower_bound: f64,
    upper_bound: f64,
    lower_required: bool,
    sandwich_holds: bool,
    trace_file: Option<String>,
}

pub struct SeesawArgs {
    pub instance: InstanceSource,
    pub strategy: Option<String>,
    pub restarts: usize,
    pub seed: u64,
    pub iters: usize,
    pub jobs: usize,
    pub tol: f64,
    pub k: Option<usize>,
    pub qubit_cap: usize,
    pub trace: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Replay tolerance between the optimizer's value and an independent run.
const REPLAY_TOL: f64 = 1e-10;

pub fn seesaw(args: &SeesawArgs) -> Result<(), CliError> {
    check_out(args.out.as_deref())?;
    check_out(args.trace.as_deref())?;
    check_tol(args.tol)?;
    if args.iters == 0 {
        return Err(CliError::Input("--iters must be at least 1".into()));
    }
    if args.strategy.is_none() && args.restarts == 0 {
        return Err(CliError::Input("need --strategy or --restarts >= 1".into()));
    }
    let inst = args.instance.load()?;
    let is_yes = inst.is_yes().map_err(|e| CliError::Input(e.to_string()))?;
    let cfg = protocol_config(&inst, args.k, args.qubit_cap)?;
    let g = build_game(&inst);
    let omega = ns_value_lp(&g)?.value;
    let mut inits = Vec::new();
    if let Some(name) = &args.strategy {
        let p = resolve_strategy(name, &inst, &g, &args.instance)?;
        inits.push(Init::Prover(honest_prover(&p, &cfg)?));
    }
    inits.extend((0..args.restarts as u64).map(|i| Init::Random(args.seed.wrapping_add(i))));
    let opts = AscendOptions {
        iters: args.iters,
        tol: args.tol,
        ..AscendOptions::default()
    };
    let (best, results) = ascend_restarts(&cfg, &g, inits, &opts, args.jobs)?;
    let winner = &results[best];
    let replay = run_protocol(&cfg, winner.prover(), &g)?.acceptance;
    let lower = rational::to_f64(&honest_embedding_value(&omega));
    let upper = rational::to_f64(&quantum_upper_bound(&omega));
    // The lower end is only promised when the ascent starts from an optimal
    // no-signaling strategy's embedding.
    let lower_required = matches!(args.strategy.as_deref(), Some("lp-optimal" | "tx"));
    let sandwich_holds = winner.value <= upper + 1e-9 && (!lower_required || winner.value >= lower - 1e-6);
    let trace_file = match &args.trace {
        Some(path) => {
            let rows: Vec<_> = results.iter().flat_map(|r| r.trace.iter().cloned()).collect();
            fs::write(path, trace_csv(&rows))?;
            Some(path.display().to_string())
        }
        None => None,
    };
    let report = SeesawReport {
        spec: ExperimentSpec {
            subcommand: "seesaw".into(),
            instance: Some(args.instance.to_string()),
            strategy: args.strategy.clone(),
            seed: Some(args.seed),
            k: Some(cfg.k),
            qubit_cap: Some(args.qubit_cap),
            tol: Some(args.tol),
            jobs: Some(args.jobs),
            iters: Some(args.iters),
            restarts: Some(args.restarts),
            out: args.out.as_ref().map(|p| p.display().to_string()),
            ..Default::default()
        },
        is_yes,
        omega: rational::to_text(&omega),
        value: winner.value,
        best_restart: best,
        restart_values: results.iter().map(|r| r.value).collect(),
        replay_acceptance: replay,
        lower_bound: lower,
        upper_bound: upper,
        lower_required,
        sandwich_holds,
        trace_file,
    };
    emit(args.out.as_deref(), &to_json(&report))?;
    if (replay - winner.value).abs() > REPLAY_TOL {
        return Err(CliError::Violation(format!(
            "optimizer value {} does not replay ({replay})",
            winner.value
        )));
    }
    if !sandwich_holds {
        return Err(CliError::Violation(format!(
            "value {} outside [{lower}, {upper}]",
            winner.value
        )));
    }
    Ok(())
}

/// Per-height values gathered from prior reports.
#[derive(Default)]
struct Row {
    lp: Option<Rational>,
    quantum_honest: Option<f64>,
    seesaw: Option<f64>,
}

pub struct ReportArgs {
    pub input: PathBuf,
    pub out: Option<PathBuf>,
}

pub const REPORT_HEIGHTS: std::ops::RangeInclusive<usize> = 1..=4;
pub const REPORT_HEADER: &str =
    "h,ns_lp_value,tx_value,paper_lower_bound,quantum_honest_value,seesaw_value,quantum_upper_bound";

fn cell_exact(r: Option<&Rational>) -> String {
    r.map_or("NA".into(), rational::to_text)
}

fn cell_f64(x: Option<f64>) -> String {
    x.map_or("NA".into(), |x| format!("{x:.12}"))
}

pub fn report(args: &ReportArgs) -> Result<(), CliError> {
    check_out(args.out.as_deref())?;
    let entries = fs::read_dir(&args.input).map_err(|e| CliError::Input(format!("{}: {e}", args.input.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut rows: BTreeMap<usize, Row> = BTreeMap::new();
    let mut used = 0;
    for path in &paths {
        let Ok(text) = fs::read_to_string(path) else { continue };
        let Ok(v) = serde_json::from_str::<Value>(&text) else {
            continue;
        };
        let spec = &v["spec"];
        let Some(h) = spec["instance"]
            .as_str()
            .and_then(|s| s.parse::<InstanceSource>().ok())
            .and_then(|s| s.tx_height())
        else {
            continue;
        };
        let row = rows.entry(h).or_default();
        match spec["subcommand"].as_str() {
            Some("lp") => {
                if let Some(value) = v["value"].as_str().and_then(|s| rational::from_text(s).ok()) {
                    row.lp = Some(value);
                    used += 1;
                }
            }
            Some("qsim") if spec["strategy"] == "lp-optimal" => {
                if let Some(a) = v["run"]["acceptance"].as_f64() {
                    row.quantum_honest = Some(a);
                    used += 1;
                }
            }
            Some("seesaw") => {
                if let Some(a) = v["value"].as_f64() {
                    row.seesaw = Some(row.seesaw.map_or(a, |s: f64| s.max(a)));
                    used += 1;
                }
            }
            _ => {}
        }
    }
    if used == 0 {
        return Err(CliError::Input(format!(
            "no lp, qsim or seesaw reports for tx instances in {}",
            args.input.display()
        )));
    }
    let mut csv = format!("{REPORT_HEADER}\n");
    for h in REPORT_HEIGHTS {
        let row = rows.remove(&h).unwrap_or_default();
        let g = build_game(&nsqip::circuits::tx_instance(h).map_err(|e| CliError::Input(e.to_string()))?);
        let tx = acceptance(&g, &tx_strategy(h)).map_err(|e| CliError::Input(e.to_string()))?;
        let lower = one()
            - Rational::new(
                1.into(),
                (rational::int(h as i64 + 1) * rational::pow(&rational::int(2), h as u32)).to_integer(),
            );
        let upper = row.lp.as_ref().map(quantum_upper_bound);
        csv.push_str(&format!(
            "{h},{},{},{},{},{},{}\n",
            cell_exact(row.lp.as_ref()),
            rational::to_text(&tx),
            rational::to_text(&lower),
            cell_f64(row.quantum_honest),
            cell_f64(row.seesaw),
            cell_exact(upper.as_ref()),
        ));
    }
    emit(args.out.as_deref(), &csv)
}

/// Default qubit cap re-exported for flag defaults.
pub const QUBIT_CAP: usize = DEFAULT_QUBIT_CAP;
