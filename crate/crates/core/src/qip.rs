//! State-vector simulation of the single-prover quantum protocol built from a
//! two-prover game.
//!
//! Qubit layout, most significant first: `S, T, S', T'` (`k` qubits each),
//! `Y` (`ay`), `Z` (`az`), then the prover's private register `P`. The honest
//! prover keeps copies `S~, T~, Y~, Z~` at the start of `P`.
//!
//! The verifier prepares `|Phi>_{SS'} |Phi>_{TT'} |0>_{YZP}` and after the
//! first round either measures `S', T', Y, Z` and scores the answers with the
//! game predicate, or returns `S, Y` (resp. `T, Z`) to the prover and checks
//! that `SS'` (resp. `TT'`) is back in `|Phi>`. Each branch has weight 1/4,
//! and the remaining 1/4 accepts unconditionally.
//!
//! The first-round unitary only ever acts on inputs of the form
//! `|s>_S |t>_T |0>_{YZP}`, so it is stored as the isometry `X` whose column
//! `s * 2^k + t` is the image of that input.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::Game;
use crate::linalg::{self, CMat, C64, ONE, ZERO};
use crate::nosig::{check_no_signaling, MarginalPair};
use crate::rational::{self, Rational};
use crate::strategy::{Strategy, StrategyError, StrategyShape};

pub const DEFAULT_QUBIT_CAP: usize = 24;

/// Largest operator support materialized as a dense matrix.
pub const MAX_DENSE_QUBITS: usize = 13;

/// Denominator used when converting floating induced strategies to exact
/// rationals.
pub const RATIONALIZE_DENOMINATOR: u64 = 1 << 40;

#[derive(Debug, Error)]
pub enum QipError {
    #[error("{needed} qubits exceed the cap of {cap}")]
    QubitCap { needed: usize, cap: usize },
    #[error("operator on {qubits} qubits is too large to materialize")]
    DenseTooLarge { qubits: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("honest prover needs {needed} private qubits, configuration has {have}")]
    PrivateRegister { needed: usize, have: usize },
    #[error("strategy is signaling")]
    Signaling,
    #[error("row (s={s}, t={t}) of the measured distribution sums to {sum}, expected {expected}")]
    MarginalUniformity {
        s: usize,
        t: usize,
        sum: f64,
        expected: f64,
    },
    #[error("not a density matrix: {0}")]
    NotDensity(String),
    #[error("not an effect (0 <= A <= I): {0}")]
    NotEffect(String),
    #[error("malformed state dump: {0}")]
    DumpFormat(String),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A contiguous run of qubits in the global layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register {
    pub start: usize,
    pub width: usize,
}

impl Register {
    pub fn qubits(&self) -> Vec<usize> {
        (self.start..self.start + self.width).collect()
    }

    pub fn dim(&self) -> usize {
        1 << self.width
    }

    fn slice(&self, offset: usize, width: usize) -> Register {
        assert!(offset + width <= self.width);
        Register {
            start: self.start + offset,
            width,
        }
    }
}

fn concat(regs: &[Register]) -> Vec<usize> {
    regs.iter().flat_map(Register::qubits).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Qubits per question register.
    pub k: usize,
    /// Alice's answer bits.
    pub ay: usize,
    /// Bob's answer bits.
    pub az: usize,
    /// Size of the prover's private register.
    pub p_qubits: usize,
    pub qubit_cap: usize,
}

impl ProtocolConfig {
    pub fn new(k: usize, p_qubits: usize) -> Self {
        ProtocolConfig {
            k,
            ay: 2,
            az: 1,
            p_qubits,
            qubit_cap: DEFAULT_QUBIT_CAP,
        }
    }

    /// Just enough private space for the honest prover.
    pub fn honest(k: usize) -> Self {
        ProtocolConfig::new(k, 2 * k + 3)
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.qubit_cap = cap;
        self
    }

    pub fn honest_private_qubits(&self) -> usize {
        2 * self.k + self.ay + self.az
    }

    pub fn total_qubits(&self) -> usize {
        4 * self.k + self.ay + self.az + self.p_qubits
    }

    pub fn questions(&self) -> usize {
        1 << self.k
    }

    pub fn validate(&self) -> Result<(), QipError> {
        if self.total_qubits() > self.qubit_cap {
            return Err(QipError::QubitCap {
                needed: self.total_qubits(),
                cap: self.qubit_cap,
            });
        }
        Ok(())
    }

    fn reg(&self, start: usize, width: usize) -> Register {
        Register { start, width }
    }

    pub fn s(&self) -> Register {
        self.reg(0, self.k)
    }
    pub fn t(&self) -> Register {
        self.reg(self.k, self.k)
    }
    pub fn s_prime(&self) -> Register {
        self.reg(2 * self.k, self.k)
    }
    pub fn t_prime(&self) -> Register {
        self.reg(3 * self.k, self.k)
    }
    pub fn y(&self) -> Register {
        self.reg(4 * self.k, self.ay)
    }
    pub fn z(&self) -> Register {
        self.reg(4 * self.k + self.ay, self.az)
    }
    pub fn p(&self) -> Register {
        self.reg(4 * self.k + self.ay + self.az, self.p_qubits)
    }
    pub fn s_tilde(&self) -> Register {
        self.p().slice(0, self.k)
    }
    pub fn t_tilde(&self) -> Register {
        self.p().slice(self.k, self.k)
    }
    pub fn y_tilde(&self) -> Register {
        self.p().slice(2 * self.k, self.ay)
    }
    pub fn z_tilde(&self) -> Register {
        self.p().slice(2 * self.k + self.ay, self.az)
    }

    /// Qubits the first-round unitary acts on: `S, T, Y, Z, P`.
    pub fn first_round_support(&self) -> Vec<usize> {
        concat(&[self.s(), self.t(), self.y(), self.z(), self.p()])
    }

    /// Qubits of the undo-Alice unitary: `S, Y, P`.
    pub fn alice_support(&self) -> Vec<usize> {
        concat(&[self.s(), self.y(), self.p()])
    }

    /// Qubits of the undo-Bob unitary: `T, Z, P`.
    pub fn bob_support(&self) -> Vec<usize> {
        concat(&[self.t(), self.z(), self.p()])
    }

    fn named_registers(&self) -> Vec<(&'static str, Register)> {
        vec![
            ("S", self.s()),
            ("T", self.t()),
            ("S'", self.s_prime()),
            ("T'", self.t_prime()),
            ("Y", self.y()),
            ("Z", self.z()),
            ("P", self.p()),
        ]
    }
}

/// Offsets in the global index of every basis state of a qubit list; the
/// first listed qubit is the most significant bit of the local index.
fn deposit(n: usize, qubits: &[usize]) -> Vec<usize> {
    let m = qubits.len();
    (0..1usize << m)
        .map(|idx| {
            qubits
                .iter()
                .enumerate()
                .filter(|(j, _)| (idx >> (m - 1 - j)) & 1 == 1)
                .map(|(_, &q)| 1usize << (n - 1 - q))
                .sum()
        })
        .collect()
}

/// Reads the bits of `qubits` out of a global index.
fn extract(n: usize, qubits: &[usize], global: usize) -> usize {
    qubits
        .iter()
        .fold(0, |acc, &q| (acc << 1) | ((global >> (n - 1 - q)) & 1))
}

/// Reshapes a state vector into a matrix with rows indexed by `rows` and
/// columns by the remaining qubits in increasing order.
#[derive(Debug, Clone)]
pub(crate) struct Split {
    pub row_offsets: Vec<usize>,
    pub col_offsets: Vec<usize>,
}

impl Split {
    pub fn new(n: usize, rows: &[usize]) -> Self {
        let mut seen = vec![false; n];
        for &q in rows {
            assert!(q < n && !seen[q], "row qubits must be distinct and in range");
            seen[q] = true;
        }
        let cols: Vec<usize> = (0..n).filter(|&q| !seen[q]).collect();
        Split {
            row_offsets: deposit(n, rows),
            col_offsets: deposit(n, &cols),
        }
    }

    pub fn gather(&self, amps: &[C64]) -> CMat {
        let r = self.row_offsets.len();
        let mut m = CMat::zeros(r, self.col_offsets.len());
        for (c, &co) in self.col_offsets.iter().enumerate() {
            let col = &mut m.as_mut_slice()[c * r..(c + 1) * r];
            for (dst, &ro) in col.iter_mut().zip(&self.row_offsets) {
                *dst = amps[ro | co];
            }
        }
        m
    }

    pub fn scatter(&self, m: &CMat, out: &mut [C64]) {
        let r = self.row_offsets.len();
        for (c, &co) in self.col_offsets.iter().enumerate() {
            let col = &m.as_slice()[c * r..(c + 1) * r];
            for (src, &ro) in col.iter().zip(&self.row_offsets) {
                out[ro | co] = *src;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub n_qubits: usize,
    pub amps: Vec<C64>,
}

impl StateVector {
    pub fn zero(n_qubits: usize) -> Self {
        StateVector {
            n_qubits,
            amps: vec![ZERO; 1 << n_qubits],
        }
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Reduced density matrix on `qubits` (in the listed order).
    pub fn reduced(&self, qubits: &[usize]) -> CMat {
        let m = Split::new(self.n_qubits, qubits).gather(&self.amps);
        linalg::matmul_by_adj(&m, &m)
    }
}

/// `|Phi>_{SS'} |Phi>_{TT'} |0>`.
pub fn initial_state(cfg: &ProtocolConfig) -> Result<StateVector, QipError> {
    cfg.validate()?;
    let n = cfg.total_qubits();
    let q = cfg.questions();
    let mut psi = StateVector::zero(n);
    let amp = C64::new(1.0 / q as f64, 0.0);
    let split = Split::new(n, &concat(&[cfg.s(), cfg.t(), cfg.s_prime(), cfg.t_prime()]));
    for s in 0..q {
        for t in 0..q {
            let idx = ((s * q + t) * q + s) * q + t;
            psi.amps[split.row_offsets[idx]] = amp;
        }
    }
    Ok(psi)
}

/// A prover operation on a fixed list of support qubits.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalOperator {
    Identity,
    /// Matrix over the support qubits in support order.
    Dense(CMat),
    /// Block-diagonal operator: `blocks[c]` acts on `target` when the
    /// `control` qubits hold `c`. Qubits are global positions.
    Controlled {
        control: Vec<usize>,
        target: Vec<usize>,
        blocks: Vec<CMat>,
    },
}

impl LocalOperator {
    pub fn apply(&self, state: &StateVector, support: &[usize]) -> StateVector {
        let n = state.n_qubits;
        match self {
            LocalOperator::Identity => state.clone(),
            LocalOperator::Dense(m) => {
                let split = Split::new(n, support);
                let out = linalg::matmul(m, &split.gather(&state.amps));
                let mut next = StateVector::zero(n);
                split.scatter(&out, &mut next.amps);
                next
            }
            LocalOperator::Controlled {
                control,
                target,
                blocks,
            } => {
                let split = Split::new(n, target);
                let mut m = split.gather(&state.amps);
                let r = m.nrows();
                for (c, &co) in split.col_offsets.iter().enumerate() {
                    let block = &blocks[extract(n, control, co)];
                    let col = nalgebra::DVector::from_column_slice(&m.as_slice()[c * r..(c + 1) * r]);
                    let out = block * col;
                    m.as_mut_slice()[c * r..(c + 1) * r].copy_from_slice(out.as_slice());
                }
                let mut next = StateVector::zero(n);
                split.scatter(&m, &mut next.amps);
                next
            }
        }
    }

    /// The operator as a matrix over `support` (in support order).
    pub fn to_dense(&self, support: &[usize]) -> Result<CMat, QipError> {
        let m = support.len();
        if m > MAX_DENSE_QUBITS {
            return Err(QipError::DenseTooLarge { qubits: m });
        }
        let d = 1usize << m;
        match self {
            LocalOperator::Identity => Ok(linalg::identity(d)),
            LocalOperator::Dense(x) => Ok(x.clone()),
            LocalOperator::Controlled {
                control,
                target,
                blocks,
            } => {
                let local = |q: &usize| {
                    support
                        .iter()
                        .position(|s| s == q)
                        .expect("controlled qubit outside support")
                };
                let control: Vec<usize> = control.iter().map(local).collect();
                let target: Vec<usize> = target.iter().map(local).collect();
                let split = Split::new(m, &target);
                let mut out = CMat::zeros(d, d);
                for &co in &split.col_offsets {
                    let block = &blocks[extract(m, &control, co)];
                    for (j, &rj) in split.row_offsets.iter().enumerate() {
                        for (i, &ri) in split.row_offsets.iter().enumerate() {
                            out[(ri | co, rj | co)] = block[(i, j)];
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// Unitarity residual; for block operators the worst block.
    pub fn unitarity_residual(&self) -> f64 {
        match self {
            LocalOperator::Identity => 0.0,
            LocalOperator::Dense(m) => linalg::unitarity_residual(m),
            LocalOperator::Controlled { blocks, .. } => {
                blocks.iter().map(linalg::unitarity_residual).fold(0.0, f64::max)
            }
        }
    }
}

/// The prover's three operations: the first-round isometry and the two
/// second-round unitaries.
#[derive(Debug, Clone, PartialEq)]
pub struct ProverUnitaries {
    /// `2^{|STYZP|} x 4^k` isometry; column `s * 2^k + t` is `U |s, t, 0>`.
    pub first: CMat,
    /// Acts on `S, Y, P`.
    pub undo_alice: LocalOperator,
    /// Acts on `T, Z, P`.
    pub undo_bob: LocalOperator,
}

fn first_round_input(cfg: &ProtocolConfig, s: usize, t: usize) -> usize {
    (s * cfg.questions() + t) << (cfg.ay + cfg.az + cfg.p_qubits)
}

impl ProverUnitaries {
    /// A prover that does nothing.
    pub fn identity(cfg: &ProtocolConfig) -> Self {
        let rows = 1 << cfg.first_round_support().len();
        let q = cfg.questions();
        let mut first = CMat::zeros(rows, q * q);
        for s in 0..q {
            for t in 0..q {
                first[(first_round_input(cfg, s, t), s * q + t)] = ONE;
            }
        }
        ProverUnitaries {
            first,
            undo_alice: LocalOperator::Identity,
            undo_bob: LocalOperator::Identity,
        }
    }

    pub fn check_dimensions(&self, cfg: &ProtocolConfig) -> Result<(), QipError> {
        let rows = 1usize << cfg.first_round_support().len();
        let q = cfg.questions();
        if self.first.nrows() != rows || self.first.ncols() != q * q {
            return Err(QipError::Dimension(format!(
                "first-round isometry is {}x{}, expected {rows}x{}",
                self.first.nrows(),
                self.first.ncols(),
                q * q
            )));
        }
        for (name, op, support) in [
            ("undo-Alice", &self.undo_alice, cfg.alice_support()),
            ("undo-Bob", &self.undo_bob, cfg.bob_support()),
        ] {
            let d = 1usize << support.len();
            match op {
                LocalOperator::Dense(m) if m.nrows() != d || m.ncols() != d => {
                    return Err(QipError::Dimension(format!(
                        "{name} unitary is {}x{}, expected {d}x{d}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                LocalOperator::Controlled {
                    control,
                    target,
                    blocks,
                } => {
                    let inside = control.iter().chain(target).all(|q| support.contains(q));
                    let sized = blocks.len() == 1 << control.len()
                        && blocks
                            .iter()
                            .all(|b| b.nrows() == 1 << target.len() && b.ncols() == 1 << target.len());
                    if !inside || !sized {
                        return Err(QipError::Dimension(format!(
                            "{name} controlled operator does not fit its support"
                        )));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// `[first, undo_alice, undo_bob]` unitarity residuals (`X^dagger X - I`
    /// for the isometry).
    pub fn unitarity_residuals(&self) -> [f64; 3] {
        [
            linalg::unitarity_residual(&self.first),
            self.undo_alice.unitarity_residual(),
            self.undo_bob.unitarity_residual(),
        ]
    }

    /// Completes the first-round isometry to a unitary on `S, T, Y, Z, P` by
    /// Gram-Schmidt over the remaining standard basis vectors.
    pub fn first_round_unitary(&self, cfg: &ProtocolConfig) -> Result<CMat, QipError> {
        let m = cfg.first_round_support().len();
        if m > MAX_DENSE_QUBITS {
            return Err(QipError::DenseTooLarge { qubits: m });
        }
        let d = 1usize << m;
        let q = cfg.questions();
        let completed = complete_columns(&self.first);
        let mut u = CMat::zeros(d, d);
        let inputs: Vec<usize> = (0..q * q).map(|c| first_round_input(cfg, c / q, c % q)).collect();
        let mut extra = q * q;
        for col in 0..d {
            let src = match inputs.iter().position(|&i| i == col) {
                Some(c) => c,
                None => {
                    extra += 1;
                    extra - 1
                }
            };
            u.set_column(col, &completed.column(src));
        }
        Ok(u)
    }

    /// Replaces block operators by dense matrices (used by the optimizer).
    pub fn densified(&self, cfg: &ProtocolConfig) -> Result<ProverUnitaries, QipError> {
        Ok(ProverUnitaries {
            first: self.first.clone(),
            undo_alice: LocalOperator::Dense(self.undo_alice.to_dense(&cfg.alice_support())?),
            undo_bob: LocalOperator::Dense(self.undo_bob.to_dense(&cfg.bob_support())?),
        })
    }
}

/// Extends orthonormal columns to a full unitary, keeping them first.
fn complete_columns(x: &CMat) -> CMat {
    let d = x.nrows();
    let mut basis: Vec<Vec<C64>> = x.column_iter().map(|c| c.iter().copied().collect()).collect();
    for e in 0..d {
        if basis.len() == d {
            break;
        }
        let mut v = vec![ZERO; d];
        v[e] = ONE;
        // Two passes of modified Gram-Schmidt keep the result orthogonal to
        // roundoff.
        for _ in 0..2 {
            for b in &basis {
                let overlap: C64 = b.iter().zip(&v).map(|(bi, vi)| bi.conj() * vi).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= overlap * bi;
                }
            }
        }
        let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if n > 1e-6 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    CMat::from_fn(d, d, |i, j| basis[j][i])
}

fn sqrt_f64(r: &Rational) -> f64 {
    rational::to_f64(r).max(0.0).sqrt()
}

/// Honest prover embedding a no-signaling strategy.
///
/// First round, controlled on `|s>_S |t>_T`:
/// `|0> -> |s>_{S~} |t>_{T~} sum_{y,z} sqrt(p(y,z|s,t)) |yy>_{YY~} |zz>_{ZZ~}`.
/// Undo-Alice, controlled on `|s>_S |t>_{T~} |z>_{Z~}`, sends
/// `|s>_{S~} sum_y sqrt(p(y,z|s,t) / pB(z|t)) |yy>_{YY~}` to `|0>`, and
/// undo-Bob does the same with the roles swapped. Blocks with a zero
/// marginal are the identity; every other block is completed to a unitary by
/// Gram-Schmidt.
pub fn honest_prover(p: &Strategy, cfg: &ProtocolConfig) -> Result<ProverUnitaries, QipError> {
    cfg.validate()?;
    let q = cfg.questions();
    let (ya, zb) = (1usize << cfg.ay, 1usize << cfg.az);
    let expected = StrategyShape {
        questions_a: q,
        questions_b: q,
        answers_a: ya,
        answers_b: zb,
    };
    if p.shape() != expected {
        return Err(QipError::Dimension(format!(
            "strategy shape {:?} does not match protocol shape {expected:?}",
            p.shape()
        )));
    }
    if cfg.p_qubits < cfg.honest_private_qubits() {
        return Err(QipError::PrivateRegister {
            needed: cfg.honest_private_qubits(),
            have: cfg.p_qubits,
        });
    }
    check_no_signaling(p).map_err(|_| QipError::Signaling)?;
    let marg = MarginalPair::of(p).map_err(|_| QipError::Signaling)?;
    let spare = cfg.p_qubits - cfg.honest_private_qubits();

    let rows = 1usize << cfg.first_round_support().len();
    let mut first = CMat::zeros(rows, q * q);
    for s in 0..q {
        for t in 0..q {
            for y in 0..ya {
                for z in 0..zb {
                    let amp = sqrt_f64(p.get(s, t, y, z));
                    if amp == 0.0 {
                        continue;
                    }
                    let visible = ((s * q + t) * ya + y) * zb + z;
                    let idx = (visible << cfg.p_qubits) | (visible << spare);
                    first[(idx, s * q + t)] = C64::new(amp, 0.0);
                }
            }
        }
    }

    let alice_dim = q * ya * ya;
    let mut alice_blocks = Vec::with_capacity(q * q * zb);
    for s in 0..q {
        for t in 0..q {
            for z in 0..zb {
                let pb = &marg.bob[t * zb + z];
                if num_traits::Zero::is_zero(pb) {
                    alice_blocks.push(linalg::identity(alice_dim));
                    continue;
                }
                let mut a = vec![ZERO; alice_dim];
                for y in 0..ya {
                    a[(s * ya + y) * ya + y] = C64::new(sqrt_f64(&(p.get(s, t, y, z) / pb)), 0.0);
                }
                alice_blocks.push(linalg::complete_from_column(&a).adjoint());
            }
        }
    }
    let bob_dim = q * zb * zb;
    let mut bob_blocks = Vec::with_capacity(q * q * ya);
    for s in 0..q {
        for t in 0..q {
            for y in 0..ya {
                let pa = &marg.alice[s * ya + y];
                if num_traits::Zero::is_zero(pa) {
                    bob_blocks.push(linalg::identity(bob_dim));
                    continue;
                }
                let mut b = vec![ZERO; bob_dim];
                for z in 0..zb {
                    b[(t * zb + z) * zb + z] = C64::new(sqrt_f64(&(p.get(s, t, y, z) / pa)), 0.0);
                }
                bob_blocks.push(linalg::complete_from_column(&b).adjoint());
            }
        }
    }
    Ok(ProverUnitaries {
        first,
        undo_alice: LocalOperator::Controlled {
            control: concat(&[cfg.s(), cfg.t_tilde(), cfg.z_tilde()]),
            target: concat(&[cfg.s_tilde(), cfg.y(), cfg.y_tilde()]),
            blocks: alice_blocks,
        },
        undo_bob: LocalOperator::Controlled {
            control: concat(&[cfg.s_tilde(), cfg.t(), cfg.y_tilde()]),
            target: concat(&[cfg.t_tilde(), cfg.z(), cfg.z_tilde()]),
            blocks: bob_blocks,
        },
    })
}

/// `|Psi> = (I_{S'T'} (x) U) |init>`.
pub fn first_round_state(cfg: &ProtocolConfig, first: &CMat) -> StateVector {
    let n = cfg.total_qubits();
    let split = Split::new(n, &cfg.first_round_support());
    let mut psi = StateVector::zero(n);
    split.scatter(&first.unscale(cfg.questions() as f64), &mut psi.amps);
    psi
}

/// Probability that registers `a`, `b` are found in `|Phi>`, and the
/// projected (unnormalized) state.
pub fn phi_projection(state: &StateVector, a: Register, b: Register) -> (f64, StateVector) {
    assert_eq!(a.width, b.width);
    let n = state.n_qubits;
    let split = Split::new(n, &concat(&[a, b]));
    let m = split.gather(&state.amps);
    let d = a.dim();
    let scale = 1.0 / (d as f64).sqrt();
    let mut proj = CMat::zeros(m.nrows(), m.ncols());
    let mut prob = 0.0;
    for c in 0..m.ncols() {
        let amp: C64 = (0..d).map(|s| m[(s * d + s, c)]).sum::<C64>() * scale;
        prob += amp.norm_sqr();
        for s in 0..d {
            proj[(s * d + s, c)] = amp * scale;
        }
    }
    let mut out = StateVector::zero(n);
    split.scatter(&proj, &mut out.amps);
    (prob, out)
}

/// Measurement distribution `p~(s, t, y, z)` of `S', T', Y, Z` in strategy
/// table order.
pub fn measured_distribution(cfg: &ProtocolConfig, psi: &StateVector) -> Vec<f64> {
    let split = Split::new(psi.n_qubits, &concat(&[cfg.s_prime(), cfg.t_prime(), cfg.y(), cfg.z()]));
    let m = split.gather(&psi.amps);
    (0..m.nrows())
        .map(|r| m.row(r).iter().map(|a| a.norm_sqr()).sum())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub p_sim: f64,
    pub p_undo_alice: f64,
    pub p_undo_bob: f64,
    /// `1/4 + (p_sim + p_undo_alice + p_undo_bob) / 4`.
    pub acceptance: f64,
    pub config: ProtocolConfig,
}

impl RunReport {
    pub fn new(cfg: ProtocolConfig, p_sim: f64, p_undo_alice: f64, p_undo_bob: f64) -> Self {
        RunReport {
            p_sim,
            p_undo_alice,
            p_undo_bob,
            acceptance: 0.25 + (p_sim + p_undo_alice + p_undo_bob) / 4.0,
            config: cfg,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn check_game(cfg: &ProtocolConfig, g: &Game) -> Result<(), QipError> {
    let sh = g.shape();
    if sh.questions_a != cfg.questions() || sh.answers_a != 1 << cfg.ay || sh.answers_b != 1 << cfg.az {
        return Err(QipError::Dimension(format!(
            "game with {} questions does not fit k={}",
            g.n(),
            cfg.k
        )));
    }
    Ok(())
}

/// Runs all three tests on the prover and reports each branch.
pub fn run_protocol(cfg: &ProtocolConfig, prover: &ProverUnitaries, g: &Game) -> Result<RunReport, QipError> {
    cfg.validate()?;
    check_game(cfg, g)?;
    prover.check_dimensions(cfg)?;
    let psi = first_round_state(cfg, &prover.first);
    let p_sim = measured_distribution(cfg, &psi)
        .iter()
        .zip(g.table_f64())
        .map(|(p, r)| p * r)
        .sum();
    let after_alice = prover.undo_alice.apply(&psi, &cfg.alice_support());
    let (p_undo_alice, _) = phi_projection(&after_alice, cfg.s(), cfg.s_prime());
    let after_bob = prover.undo_bob.apply(&psi, &cfg.bob_support());
    let (p_undo_bob, _) = phi_projection(&after_bob, cfg.t(), cfg.t_prime());
    Ok(RunReport::new(*cfg, p_sim, p_undo_alice, p_undo_bob))
}

/// `p(y, z | s, t) = 4^k p~(s, t, y, z)` read off the first-round state.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedStrategy {
    pub shape: StrategyShape,
    pub table: Vec<f64>,
    /// Largest deviation of a row sum of `p~` from `4^-k`.
    pub uniformity_error: f64,
}

impl InducedStrategy {
    pub const UNIFORMITY_TOL: f64 = 1e-10;

    pub fn from_state(cfg: &ProtocolConfig, psi: &StateVector) -> Result<Self, QipError> {
        let q = cfg.questions();
        let shape = StrategyShape {
            questions_a: q,
            questions_b: q,
            answers_a: 1 << cfg.ay,
            answers_b: 1 << cfg.az,
        };
        let raw = measured_distribution(cfg, psi);
        let row = shape.answers_a * shape.answers_b;
        let expected = 1.0 / (q * q) as f64;
        let mut worst = 0.0f64;
        for (i, chunk) in raw.chunks(row).enumerate() {
            let sum: f64 = chunk.iter().sum();
            let dev = (sum - expected).abs();
            if dev > Self::UNIFORMITY_TOL {
                return Err(QipError::MarginalUniformity {
                    s: i / q,
                    t: i % q,
                    sum,
                    expected,
                });
            }
            worst = worst.max(dev);
        }
        let scale = (q * q) as f64;
        Ok(InducedStrategy {
            shape,
            table: raw.into_iter().map(|x| x * scale).collect(),
            uniformity_error: worst,
        })
    }

    pub fn get(&self, s: usize, t: usize, y: usize, z: usize) -> f64 {
        self.table[self.shape.index(s, t, y, z)]
    }

    /// Exact strategy on the `2^-40` grid, rows renormalized.
    pub fn rationalize(&self) -> Result<Strategy, QipError> {
        Ok(Strategy::rationalize(self.shape, &self.table, RATIONALIZE_DENOMINATOR)?)
    }

    pub fn max_abs_diff(&self, p: &Strategy) -> f64 {
        self.table
            .iter()
            .zip(p.to_f64())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Acceptance of the induced strategy in the game, in floating point.
    pub fn acceptance(&self, g: &Game) -> f64 {
        let n = g.n() as f64;
        self.table.iter().zip(g.table_f64()).map(|(p, r)| p * r).sum::<f64>() / (n * n)
    }
}

/// Trace distances from the undo tests' soundness argument:
///
/// * Bob side: `|| rho_{S'T'Y} - I_{T'}/2^k (x) rho_{S'Y} ||_1`,
/// * Alice side: `|| rho_{S'T'Z} - I_{S'}/2^k (x) rho_{T'Z} ||_1`,
///
/// both computed on the first-round state.
pub fn marginal_drift(cfg: &ProtocolConfig, psi: &StateVector) -> (f64, f64) {
    let q = cfg.questions();
    let bob = {
        let rho = psi.reduced(&concat(&[cfg.s_prime(), cfg.t_prime(), cfg.y()]));
        let ya = 1 << cfg.ay;
        let sigma = linalg::partial_trace(&rho, &[q, q, ya], &[0, 2]);
        let d = rho.nrows();
        let target = CMat::from_fn(d, d, |i, j| {
            let (si, ti, yi) = (i / (q * ya), (i / ya) % q, i % ya);
            let (sj, tj, yj) = (j / (q * ya), (j / ya) % q, j % ya);
            if ti == tj {
                sigma[(si * ya + yi, sj * ya + yj)] / q as f64
            } else {
                ZERO
            }
        });
        linalg::trace_norm_hermitian(&(rho - target))
    };
    let alice = {
        let rho = psi.reduced(&concat(&[cfg.s_prime(), cfg.t_prime(), cfg.z()]));
        let zb = 1 << cfg.az;
        let sigma = linalg::partial_trace(&rho, &[q, q, zb], &[1, 2]);
        let d = rho.nrows();
        let target = CMat::from_fn(d, d, |i, j| {
            let (si, ti, zi) = (i / (q * zb), (i / zb) % q, i % zb);
            let (sj, tj, zj) = (j / (q * zb), (j / zb) % q, j % zb);
            if si == sj {
                sigma[(ti * zb + zi, tj * zb + zj)] / q as f64
            } else {
                ZERO
            }
        });
        linalg::trace_norm_hermitian(&(rho - target))
    };
    (alice, bob)
}

const DUMP_MAGIC: &[u8; 4] = b"NSQS";
const DUMP_VERSION: u32 = 1;

/// Writes a state dump.
///
/// Layout (all integers little-endian `u32`): magic `NSQS`, version `1`,
/// total qubit count, register count, then per register a name length, the
/// UTF-8 name, start qubit and width; then `2^n` amplitudes as interleaved
/// little-endian `f64` real and imaginary parts in basis order (qubit 0 is the
/// most significant bit of the basis index).
pub fn write_state_dump<W: Write>(cfg: &ProtocolConfig, psi: &StateVector, mut out: W) -> Result<(), QipError> {
    if psi.n_qubits != cfg.total_qubits() {
        return Err(QipError::Dimension("state does not match configuration".into()));
    }
    let regs = cfg.named_registers();
    out.write_all(DUMP_MAGIC)?;
    for v in [DUMP_VERSION, psi.n_qubits as u32, regs.len() as u32] {
        out.write_all(&v.to_le_bytes())?;
    }
    for (name, reg) in regs {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(reg.start as u32).to_le_bytes())?;
        out.write_all(&(reg.width as u32).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(psi.amps.len() * 16);
    for a in &psi.amps {
        buf.extend_from_slice(&a.re.to_le_bytes());
        buf.extend_from_slice(&a.im.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Reads a dump written by [`write_state_dump`], returning the register
/// table and the state.
pub fn read_state_dump<R: Read>(mut input: R) -> Result<(Vec<(String, Register)>, StateVector), QipError> {
    let bad = |m: &str| QipError::DumpFormat(m.to_string());
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(bad("wrong magic"));
    }
    fn word<R: Read>(input: &mut R) -> Result<u32, QipError> {
        let mut b = [0u8; 4];
        input.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    if word(&mut input)? != DUMP_VERSION {
        return Err(bad("unsupported version"));
    }
    let n = word(&mut input)? as usize;
    if n > 40 {
        return Err(bad("qubit count out of range"));
    }
    let count = word(&mut input)? as usize;
    let mut regs = Vec::with_capacity(count);
    for _ in 0..count {
        let len = word(&mut input)? as usize;
        let mut name = vec![0u8; len];
        input.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| bad("register name not UTF-8"))?;
        let start = word(&mut input)? as usize;
        let width = word(&mut input)? as usize;
        regs.push((name, Register { start, width }));
    }
    let mut raw = vec![0u8; (1usize << n) * 16];
    input.read_exact(&mut raw)?;
    let amps = raw
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            C64::new(re, im)
        })
        .collect();
    Ok((regs, StateVector { n_qubits: n, amps }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{tx_instance, GateDescriptor, Instance};
    use crate::game::{acceptance, build_game, honest_strategy};
    use crate::nosig::tx_strategy;
    use crate::rational::rat;

    fn yes_instance() -> Instance {
        Instance::from_gates(
            vec![
                GateDescriptor::one(),
                GateDescriptor::zero(),
                GateDescriptor::or(0, 1),
                GateDescriptor::and(2, 0),
            ],
            3,
        )
        .unwrap()
    }

    #[test]
    fn initial_state_k1() {
        let cfg = ProtocolConfig::new(1, 0);
        let psi = initial_state(&cfg).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        // Layout S T S' T' Y Y Z: |s t s t 000>.
        for s in 0..2 {
            for t in 0..2 {
                let idx = ((((s << 1) | t) << 2) | (s << 1) | t) << 3;
                assert_eq!(psi.amps[idx], C64::new(0.5, 0.0));
            }
        }
        let nonzero = psi.amps.iter().filter(|a| a.norm() > 0.0).count();
        assert_eq!(nonzero, 4);
    }

    #[test]
    fn initial_reduced_state_is_mixed() {
        let cfg = ProtocolConfig::new(2, 0);
        let psi = initial_state(&cfg).unwrap();
        let rho = psi.reduced(&concat(&[cfg.s_prime(), cfg.t_prime()]));
        let mixed = linalg::identity(16).scale(1.0 / 16.0);
        assert!((rho - mixed).norm() < 1e-12);
    }

    #[test]
    fn qubit_cap_is_enforced() {
        let cfg = ProtocolConfig::new(3, 20);
        assert!(matches!(
            initial_state(&cfg),
            Err(QipError::QubitCap { needed: 35, cap: 24 })
        ));
    }

    #[test]
    fn identity_prover() {
        let inst = tx_instance(1).unwrap();
        let g = build_game(&inst);
        let cfg = ProtocolConfig::new(2, 0);
        let prover = ProverUnitaries::identity(&cfg);
        let report = run_protocol(&cfg, &prover, &g).unwrap();
        assert!((report.p_undo_alice - 1.0).abs() < 1e-12);
        assert!((report.p_undo_bob - 1.0).abs() < 1e-12);
        let mean_r: f64 = (0..4)
            .flat_map(|s| (0..4).map(move |t| (s, t)))
            .map(|(s, t)| crate::rational::to_f64(g.predicate(s, t, 0, 0)))
            .sum::<f64>()
            / 16.0;
        assert!((report.p_sim - mean_r).abs() < 1e-12);
        let psi = first_round_state(&cfg, &prover.first);
        let ind = InducedStrategy::from_state(&cfg, &psi).unwrap();
        for s in 0..4 {
            for t in 0..4 {
                assert!((ind.get(s, t, 0, 0) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn honest_yes_accepts_with_certainty() {
        let inst = yes_instance();
        let g = build_game(&inst);
        let cfg = ProtocolConfig::honest(2);
        let p = honest_strategy(&inst).unwrap();
        let prover = honest_prover(&p, &cfg).unwrap();
        assert!(prover.unitarity_residuals().iter().all(|r| *r < 1e-10));
        let report = run_protocol(&cfg, &prover, &g).unwrap();
        assert!((report.acceptance - 1.0).abs() < 1e-9, "{report:?}");
    }

    #[test]
    fn honest_tx1_embedding() {
        let g = build_game(&tx_instance(1).unwrap());
        let cfg = ProtocolConfig::honest(2);
        let p = tx_strategy(1);
        let prover = honest_prover(&p, &cfg).unwrap();
        let report = run_protocol(&cfg, &prover, &g).unwrap();
        assert!((report.p_undo_alice - 1.0).abs() < 1e-9);
        assert!((report.p_undo_bob - 1.0).abs() < 1e-9);
        assert!((report.acceptance - 63.0 / 64.0).abs() < 1e-9);
        let psi = first_round_state(&cfg, &prover.first);
        let ind = InducedStrategy::from_state(&cfg, &psi).unwrap();
        assert!(ind.max_abs_diff(&p) < 1e-9);
        let exact = ind.rationalize().unwrap();
        assert_eq!(acceptance(&g, &exact).unwrap(), rat(15, 16));
    }

    #[test]
    fn honest_prover_refuses_signaling_and_small_registers() {
        let cfg = ProtocolConfig::honest(1);
        let echo = Strategy::from_fn(StrategyShape::game(2), |s, _t, y, z| {
            if y == 0 && z == s {
                rat(1, 1)
            } else {
                rat(0, 1)
            }
        })
        .unwrap();
        assert!(matches!(honest_prover(&echo, &cfg), Err(QipError::Signaling)));
        let small = ProtocolConfig::new(1, 2);
        let p = Strategy::uniform(StrategyShape::game(2));
        assert!(matches!(
            honest_prover(&p, &small),
            Err(QipError::PrivateRegister { needed: 5, have: 2 })
        ));
    }

    #[test]
    fn controlled_matches_dense() {
        let cfg = ProtocolConfig::honest(1);
        let p = Strategy::uniform(StrategyShape::game(2));
        let prover = honest_prover(&p, &cfg).unwrap();
        let dense = prover.densified(&cfg).unwrap();
        let psi = first_round_state(&cfg, &prover.first);
        for (a, b, support) in [
            (&prover.undo_alice, &dense.undo_alice, cfg.alice_support()),
            (&prover.undo_bob, &dense.undo_bob, cfg.bob_support()),
        ] {
            let x = a.apply(&psi, &support);
            let y = b.apply(&psi, &support);
            let diff: f64 = x.amps.iter().zip(&y.amps).map(|(u, v)| (u - v).norm()).sum();
            assert!(diff < 1e-12);
            assert!(linalg::unitarity_residual(&b.to_dense(&support).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn completed_first_round_unitary() {
        let cfg = ProtocolConfig::honest(1);
        let p = Strategy::uniform(StrategyShape::game(2));
        let prover = honest_prover(&p, &cfg).unwrap();
        let u = prover.first_round_unitary(&cfg).unwrap();
        assert!(linalg::unitarity_residual(&u) < 1e-10);
        for s in 0..2 {
            for t in 0..2 {
                let col = u.column(first_round_input(&cfg, s, t));
                assert!((col - prover.first.column(s * 2 + t)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn dump_round_trip() {
        let cfg = ProtocolConfig::new(1, 0);
        let psi = initial_state(&cfg).unwrap();
        let mut buf = Vec::new();
        write_state_dump(&cfg, &psi, &mut buf).unwrap();
        let (regs, back) = read_state_dump(buf.as_slice()).unwrap();
        assert_eq!(back, psi);
        assert_eq!(regs[2].0, "S'");
        assert_eq!(&buf[..4], b"NSQS");
        assert!(read_state_dump(&b"XXXX"[..]).is_err());
    }

    #[test]
    fn drift_vanishes_for_honest_prover() {
        let cfg = ProtocolConfig::honest(2);
        let prover = honest_prover(&tx_strategy(1), &cfg).unwrap();
        let psi = first_round_state(&cfg, &prover.first);
        let (a, b) = marginal_drift(&cfg, &psi);
        assert!(a < 1e-9 && b < 1e-9);
    }
}
