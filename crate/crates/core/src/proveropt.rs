//! Gradient ascent over dishonest provers.
//!
//! The acceptance probability is a quadratic function of the prover's three
//! operations:
//!
//! ```text
//! f = 1/4 + 1/4 (<Psi|M|Psi> + ||Pi_A V Psi||^2 + ||Pi_B W Psi||^2),  Psi = X |init> / 2^k
//! ```
//!
//! where `M` is the diagonal predicate on `S', T', Y, Z` and `Pi_A`, `Pi_B`
//! project `SS'` resp. `TT'` onto `|Phi>`. Its conjugate (Wirtinger)
//! gradients are
//!
//! ```text
//! df/dV* = 1/4 (Pi_A V Psi) Psi^dagger             (reshaped over S, Y, P)
//! df/dW* = 1/4 (Pi_B W Psi) Psi^dagger             (reshaped over T, Z, P)
//! df/dPsi* = 1/4 (M Psi + V^dagger Pi_A V Psi + W^dagger Pi_B W Psi)
//! df/dX* = 2^-k df/dPsi*                           (reshaped over STYZP x S'T')
//! ```
//!
//! and the derivative along the real (imaginary) part of an entry is twice
//! the real (imaginary) part of the matching gradient entry. Each step moves
//! all three operations along their gradients and retracts to the unitary
//! group (isometries for `X`) by polar decomposition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::game::Game;
use crate::linalg::{self, CMat, C64, ONE, ZERO};
use crate::qip::{
    self, phi_projection, LocalOperator, ProtocolConfig, ProverUnitaries, QipError, Register, StateVector,
};

/// Tolerance on the unitarity of a starting point.
pub const INIT_UNITARITY_TOL: f64 = 1e-8;
/// Gradient entries smaller than this are compared absolutely.
pub const GRADIENT_FLOOR: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum OptError {
    #[error("initial prover is not unitary (residual {0:e})")]
    NotUnitary(f64),
    #[error("iteration count must be at least 1")]
    NoIterations,
    #[error("finite-difference step {0} outside [1e-7, 1e-3]")]
    BadStep(f64),
    #[error(transparent)]
    Qip(#[from] QipError),
}

/// `a b^dagger`, kept factored.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRank {
    pub a: CMat,
    pub b: CMat,
}

impl LowRank {
    fn zero(d: usize) -> Self {
        LowRank {
            a: CMat::zeros(d, 0),
            b: CMat::zeros(d, 0),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        (0..self.a.ncols())
            .map(|c| self.a[(i, c)] * self.b[(j, c)].conj())
            .sum()
    }

    pub fn to_dense(&self) -> CMat {
        linalg::matmul_by_adj(&self.a, &self.b)
    }

    /// Squared Frobenius norm without forming the product.
    pub fn norm_sqr(&self) -> f64 {
        if self.a.ncols() == 0 {
            return 0.0;
        }
        let ga = linalg::matmul_adj(&self.a, &self.a);
        let gb = linalg::matmul_adj(&self.b, &self.b);
        ga.iter().zip(gb.iter()).map(|(x, y)| (x * y.conj()).re).sum()
    }
}

/// Conjugate gradients of one term of the acceptance functional.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub x: CMat,
    pub v: LowRank,
    pub w: LowRank,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        (self.x.norm_squared() + self.v.norm_sqr() + self.w.norm_sqr()).sqrt()
    }

    fn sum(parts: &[&Gradient]) -> Gradient {
        let x = parts
            .iter()
            .fold(CMat::zeros(parts[0].x.nrows(), parts[0].x.ncols()), |acc, g| acc + &g.x);
        let cat = |pick: fn(&Gradient) -> &LowRank| {
            let d = pick(parts[0]).a.nrows();
            let cols: usize = parts.iter().map(|g| pick(g).a.ncols()).sum();
            let mut a = CMat::zeros(d, cols);
            let mut b = CMat::zeros(d, cols);
            let mut at = 0;
            for g in parts {
                let lr = pick(g);
                let n = lr.a.ncols();
                a.columns_mut(at, n).copy_from(&lr.a);
                b.columns_mut(at, n).copy_from(&lr.b);
                at += n;
            }
            LowRank { a, b }
        };
        Gradient {
            x,
            v: cat(|g| &g.v),
            w: cat(|g| &g.w),
        }
    }
}

/// Per-branch gradients; the total is their sum.
#[derive(Debug, Clone)]
pub struct BranchGradients {
    pub simulation: Gradient,
    pub undo_alice: Gradient,
    pub undo_bob: Gradient,
    /// The unconditional-accept branch is constant.
    pub unconditional: Gradient,
}

impl BranchGradients {
    pub fn total(&self) -> Gradient {
        Gradient::sum(&[&self.simulation, &self.undo_alice, &self.undo_bob, &self.unconditional])
    }
}

/// Precomputed reshapes and the predicate diagonal for one game and layout.
struct Objective {
    cfg: ProtocolConfig,
    diag: Vec<f64>,
    split_u: qip::Split,
    split_v: qip::Split,
    split_w: qip::Split,
}

struct Evaluation {
    value: f64,
    psi: StateVector,
    p_sim: f64,
    psi_v: CMat,
    psi_w: CMat,
    /// `V psi_v` and `W psi_w`, reused by the retraction.
    moved_v: CMat,
    moved_w: CMat,
    eta_alice: StateVector,
    eta_bob: StateVector,
}

/// `V^dagger a` and `W^dagger a` for the low-rank gradient factors.
struct AdjointCache {
    v: CMat,
    w: CMat,
}

fn dense(op: &LocalOperator) -> &CMat {
    match op {
        LocalOperator::Dense(m) => m,
        _ => unreachable!("optimizer works on dense operators"),
    }
}

impl Objective {
    fn new(cfg: &ProtocolConfig, g: &Game) -> Self {
        let n = cfg.total_qubits();
        let measured: Vec<usize> = [cfg.s_prime(), cfg.t_prime(), cfg.y(), cfg.z()]
            .iter()
            .flat_map(|r| r.qubits())
            .collect();
        let split = qip::Split::new(n, &measured);
        let table = g.table_f64();
        let mut diag = vec![0.0; 1 << n];
        for (r, &ro) in split.row_offsets.iter().enumerate() {
            for &co in &split.col_offsets {
                diag[ro | co] = table[r];
            }
        }
        Objective {
            cfg: *cfg,
            diag,
            split_u: qip::Split::new(n, &cfg.first_round_support()),
            split_v: qip::Split::new(n, &cfg.alice_support()),
            split_w: qip::Split::new(n, &cfg.bob_support()),
        }
    }

    fn evaluate(&self, prover: &ProverUnitaries) -> Evaluation {
        let cfg = &self.cfg;
        let n = cfg.total_qubits();
        let psi = qip::first_round_state(cfg, &prover.first);
        let p_sim = psi
            .amps
            .iter()
            .zip(&self.diag)
            .map(|(a, r)| a.norm_sqr() * r)
            .sum::<f64>();
        let branch = |split: &qip::Split, op: &LocalOperator, a, b| {
            let psi_local = split.gather(&psi.amps);
            let moved = linalg::matmul(dense(op), &psi_local);
            let mut after = StateVector::zero(n);
            split.scatter(&moved, &mut after.amps);
            let (prob, eta) = phi_projection(&after, a, b);
            (prob, psi_local, moved, eta)
        };
        let (p_alice, psi_v, moved_v, eta_alice) = branch(&self.split_v, &prover.undo_alice, cfg.s(), cfg.s_prime());
        let (p_bob, psi_w, moved_w, eta_bob) = branch(&self.split_w, &prover.undo_bob, cfg.t(), cfg.t_prime());
        Evaluation {
            value: 0.25 + (p_sim + p_alice + p_bob) / 4.0,
            psi,
            p_sim,
            psi_v,
            psi_w,
            moved_v,
            moved_w,
            eta_alice,
            eta_bob,
        }
    }

    /// Probability that the branch state `moved` (on the split's rows)
    /// lands on the maximally entangled projector across `a` and `b`.
    fn branch_prob(&self, split: &qip::Split, moved: &CMat, a: Register, b: Register) -> f64 {
        let mut after = StateVector::zero(self.cfg.total_qubits());
        split.scatter(moved, &mut after.amps);
        phi_projection(&after, a, b).0
    }

    fn gradients(&self, prover: &ProverUnitaries, ev: &Evaluation) -> (BranchGradients, AdjointCache) {
        let cfg = &self.cfg;
        let q = cfg.questions() as f64;
        let du = self.split_u.row_offsets.len();
        let dv = self.split_v.row_offsets.len();
        let dw = self.split_w.row_offsets.len();
        let x_from_psi_grad = |amps: &[C64]| self.split_u.gather(amps).unscale(q);

        let sim_psi: Vec<C64> = ev
            .psi
            .amps
            .iter()
            .zip(&self.diag)
            .map(|(a, r)| a * (0.25 * r))
            .collect();
        let simulation = Gradient {
            x: x_from_psi_grad(&sim_psi),
            v: LowRank::zero(dv),
            w: LowRank::zero(dw),
        };

        let undo = |split: &qip::Split, op: &LocalOperator, eta: &StateVector, psi_local: &CMat, d: usize| {
            let eta_local = split.gather(&eta.amps).scale(0.25);
            let back = linalg::matmul_adj(dense(op), &eta_local);
            let mut amps = vec![ZERO; ev.psi.amps.len()];
            split.scatter(&back, &mut amps);
            let low = LowRank {
                a: eta_local,
                b: psi_local.clone(),
            };
            debug_assert_eq!(low.a.nrows(), d);
            (x_from_psi_grad(&amps), low, back)
        };
        let (xa, va, back_v) = undo(&self.split_v, &prover.undo_alice, &ev.eta_alice, &ev.psi_v, dv);
        let (xb, wb, back_w) = undo(&self.split_w, &prover.undo_bob, &ev.eta_bob, &ev.psi_w, dw);
        let grads = BranchGradients {
            simulation,
            undo_alice: Gradient {
                x: xa,
                v: va,
                w: LowRank::zero(dw),
            },
            undo_bob: Gradient {
                x: xb,
                v: LowRank::zero(dv),
                w: wb,
            },
            unconditional: Gradient {
                x: CMat::zeros(du, cfg.questions() * cfg.questions()),
                v: LowRank::zero(dv),
                w: LowRank::zero(dw),
            },
        };
        (grads, AdjointCache { v: back_v, w: back_w })
    }
}

const COEFF_REUSE_LIMIT: f64 = 10.0;

/// `polar(V + eta a b^dagger)` for unitary `V`, using
/// `polar(V (I + E)) = V polar(I + E)` and that `I + E` differs from the
/// identity only on the span of `V^dagger a` and `b`. `va = V^dagger a` and
/// `vb = V b` come from the evaluation.
fn retract_unitary(v: &CMat, step: f64, g: &LowRank, va: &CMat, vb: &CMat) -> CMat {
    let r0 = g.a.ncols();
    if r0 == 0 {
        return v.clone();
    }
    let join = |left: &CMat, right: &CMat| {
        CMat::from_fn(v.nrows(), 2 * r0, |i, j| {
            if j < r0 {
                left[(i, j)]
            } else {
                right[(i, j - r0)]
            }
        })
    };
    let (q, coeff) = linalg::column_span(&join(va, &g.b));
    let r = q.ncols();
    if r == 0 {
        return v.clone();
    }
    let core = linalg::matmul(&linalg::matmul_adj(&q, va), &linalg::matmul_adj(&g.b, &q)).scale(step);
    let svd = (linalg::identity(r) + core).svd(true, true);
    let polar = svd.u.expect("u requested") * svd.v_t.expect("v_t requested");
    // V Q = V [V^dagger a, b] C = [a, V b] C, unless C is large enough to
    // amplify the roundoff in V V^dagger a = a past what unitarity tolerates.
    let vq = if coeff.norm() <= COEFF_REUSE_LIMIT {
        linalg::matmul(&join(&g.a, vb), &coeff)
    } else {
        linalg::matmul(v, &q)
    };
    let delta = linalg::matmul_by_adj(&linalg::matmul(&vq, &(polar - linalg::identity(r))), &q);
    v + delta
}

fn retract(
    prover: &ProverUnitaries,
    step: f64,
    g: &Gradient,
    ev: &Evaluation,
    cache: &AdjointCache,
) -> ProverUnitaries {
    let first = linalg::polar_isometry(&(&prover.first + g.x.scale(step)));
    ProverUnitaries {
        first,
        undo_alice: LocalOperator::Dense(retract_unitary(
            dense(&prover.undo_alice),
            step,
            &g.v,
            &cache.v,
            &ev.moved_v,
        )),
        undo_bob: LocalOperator::Dense(retract_unitary(
            dense(&prover.undo_bob),
            step,
            &g.w,
            &cache.w,
            &ev.moved_w,
        )),
    }
}

/// Starting point of an ascent.
#[derive(Debug, Clone)]
pub enum Init {
    Prover(ProverUnitaries),
    /// Haar-random isometry and unitaries from the seed.
    Random(u64),
}

pub fn random_prover(cfg: &ProtocolConfig, seed: u64) -> ProverUnitaries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let du = 1 << cfg.first_round_support().len();
    let q = cfg.questions();
    ProverUnitaries {
        first: linalg::random_isometry(&mut rng, du, q * q),
        undo_alice: LocalOperator::Dense(linalg::random_unitary(&mut rng, 1 << cfg.alice_support().len())),
        undo_bob: LocalOperator::Dense(linalg::random_unitary(&mut rng, 1 << cfg.bob_support().len())),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AscendOptions {
    pub iters: usize,
    /// Stop once the gradient norm falls below this.
    pub tol: f64,
    pub initial_step: f64,
}

impl Default for AscendOptions {
    fn default() -> Self {
        AscendOptions {
            iters: 200,
            tol: 1e-10,
            initial_step: 0.1,
        }
    }
}

/// Optimizer state after a run.
#[derive(Debug, Clone)]
pub struct SeeSawState {
    pub prover: ProverUnitaries,
    /// Value after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
    pub step: f64,
    pub iteration: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub restart: usize,
    pub iteration: usize,
    pub value: f64,
    pub step_size: f64,
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("restart,iteration,value,step_size\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.17e},{:.17e}\n",
            r.restart, r.iteration, r.value, r.step_size
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct AscendResult {
    pub value: f64,
    pub state: SeeSawState,
    pub trace: Vec<TraceRow>,
}

impl AscendResult {
    pub fn prover(&self) -> &ProverUnitaries {
        &self.state.prover
    }
}

/// Gradient ascent from one starting point. Block operators in the start are
/// materialized as dense matrices.
pub fn ascend(
    cfg: &ProtocolConfig,
    g: &Game,
    init: Init,
    opts: &AscendOptions,
    restart: usize,
) -> Result<AscendResult, OptError> {
    cfg.validate()?;
    if opts.iters == 0 {
        return Err(OptError::NoIterations);
    }
    let (start, seed) = match init {
        Init::Prover(p) => (p, None),
        Init::Random(seed) => (random_prover(cfg, seed), Some(seed)),
    };
    start.check_dimensions(cfg)?;
    let residual = start.unitarity_residuals().into_iter().fold(0.0, f64::max);
    if residual > INIT_UNITARITY_TOL {
        return Err(OptError::NotUnitary(residual));
    }
    // Validates the game against the layout.
    qip::run_protocol(cfg, &start, g)?;
    let objective = Objective::new(cfg, g);
    let mut prover = start.densified(cfg)?;
    let mut ev = objective.evaluate(&prover);
    let mut step = opts.initial_step;
    let mut history = vec![ev.value];
    let mut trace = vec![TraceRow {
        restart,
        iteration: 0,
        value: ev.value,
        step_size: step,
    }];
    let mut iteration = 0;
    while iteration < opts.iters {
        iteration += 1;
        let (grads, cache) = objective.gradients(&prover, &ev);
        let grad = grads.total();
        if grad.norm() < opts.tol || step < 1e-14 {
            break;
        }
        let candidate = retract(&prover, step, &grad, &ev, &cache);
        let cand_ev = objective.evaluate(&candidate);
        if cand_ev.value > ev.value {
            prover = candidate;
            ev = cand_ev;
            history.push(ev.value);
            step *= 1.5;
        } else {
            step *= 0.5;
        }
        trace.push(TraceRow {
            restart,
            iteration,
            value: ev.value,
            step_size: step,
        });
    }
    Ok(AscendResult {
        value: ev.value,
        state: SeeSawState {
            prover,
            history,
            step,
            iteration,
            seed,
        },
        trace,
    })
}

/// Runs every start, `jobs` at a time, and returns all results in input
/// order plus the index of the best one (first on ties).
pub fn ascend_restarts(
    cfg: &ProtocolConfig,
    g: &Game,
    inits: Vec<Init>,
    opts: &AscendOptions,
    jobs: usize,
) -> Result<(usize, Vec<AscendResult>), OptError> {
    let jobs = jobs.max(1);
    let indexed: Vec<(usize, Init)> = inits.into_iter().enumerate().collect();
    let mut results: Vec<Option<Result<AscendResult, OptError>>> = (0..indexed.len()).map(|_| None).collect();
    for chunk in indexed.chunks(jobs) {
        let done: Vec<(usize, Result<AscendResult, OptError>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|(i, init)| {
                    let init = init.clone();
                    let i = *i;
                    scope.spawn(move || (i, ascend(cfg, g, init, opts, i)))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("restart thread panicked"))
                .collect()
        });
        for (i, r) in done {
            results[i] = Some(r);
        }
    }
    let results: Vec<AscendResult> = results
        .into_iter()
        .map(|r| r.expect("every restart ran"))
        .collect::<Result<_, _>>()?;
    let best = results
        .iter()
        .enumerate()
        .fold(0, |best, (i, r)| if r.value > results[best].value { i } else { best });
    Ok((best, results))
}

/// Acceptance and its per-branch conjugate gradients at a prover.
pub fn branch_gradients(
    cfg: &ProtocolConfig,
    g: &Game,
    prover: &ProverUnitaries,
) -> Result<(f64, BranchGradients), OptError> {
    qip::run_protocol(cfg, prover, g)?;
    let objective = Objective::new(cfg, g);
    let prover = prover.densified(cfg)?;
    let ev = objective.evaluate(&prover);
    let (grads, _) = objective.gradients(&prover, &ev);
    Ok((ev.value, grads))
}

/// Which real parameter a finite difference moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Operation {
    First,
    UndoAlice,
    UndoBob,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParameterCheck {
    pub operation: Operation,
    pub row: usize,
    pub col: usize,
    pub imaginary: bool,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub checked: usize,
    pub worst: Option<ParameterCheck>,
}

/// Which parameters [`gradient_check`] compares.
#[derive(Debug, Clone, Copy)]
pub enum Sampling {
    All,
    /// `count` entries per operation: half chosen at random from the seed,
    /// half the entries with the largest analytic gradient.
    Sample {
        count: usize,
        seed: u64,
    },
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRADIENT_FLOOR)
}

/// Row and column of every global basis index under a split.
fn locate(split: &qip::Split, n: usize) -> Vec<(usize, usize)> {
    let mut out = vec![(0, 0); 1 << n];
    for (c, &co) in split.col_offsets.iter().enumerate() {
        for (r, &ro) in split.row_offsets.iter().enumerate() {
            out[ro | co] = (r, c);
        }
    }
    out
}

/// Compares the analytic gradient with central differences of the
/// acceptance along real and imaginary parts of matrix entries. Values with
/// magnitude below [`GRADIENT_FLOOR`] are measured against the floor.
pub fn gradient_check(
    cfg: &ProtocolConfig,
    g: &Game,
    prover: &ProverUnitaries,
    h_step: f64,
    sampling: Sampling,
) -> Result<GradientCheck, OptError> {
    if !(1e-7..=1e-3).contains(&h_step) {
        return Err(OptError::BadStep(h_step));
    }
    let (_, grads) = branch_gradients(cfg, g, prover)?;
    let total = grads.total();
    let objective = Objective::new(cfg, g);
    let base = prover.densified(cfg)?;
    let n = cfg.total_qubits();
    let dims = [
        (Operation::First, base.first.nrows(), base.first.ncols()),
        (
            Operation::UndoAlice,
            dense(&base.undo_alice).nrows(),
            dense(&base.undo_alice).ncols(),
        ),
        (
            Operation::UndoBob,
            dense(&base.undo_bob).nrows(),
            dense(&base.undo_bob).ncols(),
        ),
    ];
    let analytic = |op: Operation, i: usize, j: usize| -> C64 {
        match op {
            Operation::First => total.x[(i, j)],
            Operation::UndoAlice => total.v.entry(i, j),
            Operation::UndoBob => total.w.entry(i, j),
        }
    };
    let mut entries: Vec<(Operation, usize, usize)> = Vec::new();
    for &(op, rows, cols) in &dims {
        match sampling {
            Sampling::All => {
                entries.extend((0..rows).flat_map(|i| (0..cols).map(move |j| (op, i, j))));
            }
            Sampling::Sample { count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (op as u64).wrapping_mul(0x9e37_79b9));
                for _ in 0..count.div_ceil(2) {
                    entries.push((op, rng.random_range(0..rows), rng.random_range(0..cols)));
                }
                let mut ranked: Vec<(f64, usize, usize)> = match op {
                    Operation::First => (0..rows)
                        .flat_map(|i| (0..cols).map(move |j| (i, j)))
                        .map(|(i, j)| (total.x[(i, j)].norm(), i, j))
                        .collect(),
                    // The low-rank factors concentrate on rows and columns
                    // with large factor norms; rank those products.
                    Operation::UndoAlice | Operation::UndoBob => {
                        let lr = if op == Operation::UndoAlice { &total.v } else { &total.w };
                        let top = |m: &CMat| {
                            let mut idx: Vec<(f64, usize)> = (0..m.nrows()).map(|i| (m.row(i).norm(), i)).collect();
                            idx.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                            idx.truncate(count.max(1));
                            idx
                        };
                        let (ra, rb) = (top(&lr.a), top(&lr.b));
                        ra.iter()
                            .flat_map(|&(_, i)| rb.iter().map(move |&(_, j)| (i, j)))
                            .map(|(i, j)| (lr.entry(i, j).norm(), i, j))
                            .collect()
                    }
                };
                ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
                entries.extend(ranked.iter().take(count / 2).map(|&(_, i, j)| (op, i, j)));
            }
        }
    }
    // Each perturbation touches one entry, so the forward pass is updated in
    // place instead of rerun.
    let ev = objective.evaluate(&base);
    let (v, w) = (dense(&base.undo_alice), dense(&base.undo_bob));
    let (loc_v, loc_w) = (locate(&objective.split_v, n), locate(&objective.split_w, n));
    let alice = |moved: &CMat| objective.branch_prob(&objective.split_v, moved, cfg.s(), cfg.s_prime());
    let bob = |moved: &CMat| objective.branch_prob(&objective.split_w, moved, cfg.t(), cfg.t_prime());
    let perturbed = |op: Operation, i: usize, j: usize, delta: C64| -> f64 {
        let (p_sim, p_alice, p_bob) = match op {
            Operation::First => {
                let at = objective.split_u.row_offsets[i] | objective.split_u.col_offsets[j];
                let d = delta.unscale(cfg.questions() as f64);
                let old = ev.psi.amps[at];
                let p_sim = ev.p_sim + objective.diag[at] * ((old + d).norm_sqr() - old.norm_sqr());
                let shift = |moved: &CMat, op: &CMat, (r, c): (usize, usize)| {
                    let mut m = moved.clone();
                    m.column_mut(c).axpy(d, &op.column(r), ONE);
                    m
                };
                (
                    p_sim,
                    alice(&shift(&ev.moved_v, v, loc_v[at])),
                    bob(&shift(&ev.moved_w, w, loc_w[at])),
                )
            }
            Operation::UndoAlice => {
                let mut m = ev.moved_v.clone();
                for c in 0..m.ncols() {
                    m[(i, c)] += delta * ev.psi_v[(j, c)];
                }
                (ev.p_sim, alice(&m), bob(&ev.moved_w))
            }
            Operation::UndoBob => {
                let mut m = ev.moved_w.clone();
                for c in 0..m.ncols() {
                    m[(i, c)] += delta * ev.psi_w[(j, c)];
                }
                (ev.p_sim, alice(&ev.moved_v), bob(&m))
            }
        };
        0.25 + (p_sim + p_alice + p_bob) / 4.0
    };
    let mut worst: Option<ParameterCheck> = None;
    let mut checked = 0;
    for (op, i, j) in entries {
        let gentry = analytic(op, i, j);
        for imaginary in [false, true] {
            let unit = if imaginary {
                C64::new(0.0, h_step)
            } else {
                C64::new(h_step, 0.0)
            };
            let numeric = (perturbed(op, i, j, unit) - perturbed(op, i, j, -unit)) / (2.0 * h_step);
            let analytic = 2.0 * if imaginary { gentry.im } else { gentry.re };
            let check = ParameterCheck {
                operation: op,
                row: i,
                col: j,
                imaginary,
                analytic,
                numeric,
                relative_error: relative_error(analytic, numeric),
            };
            checked += 1;
            if worst.is_none_or(|w| check.relative_error > w.relative_error) {
                worst = Some(check);
            }
        }
    }
    Ok(GradientCheck {
        max_relative_error: worst.map_or(0.0, |w| w.relative_error),
        checked,
        worst,
    })
}
