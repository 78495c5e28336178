//! Numerical checks of the trace-norm inequalities behind the soundness
//! argument, and randomized suites that exercise them.
//!
//! * pure overlap: `|| rho - |phi><phi| (x) Tr_X rho ||_1 <= 4 sqrt(1 - <phi| Tr_Y rho |phi>)`
//! * gentle measurement: `|| rho - sqrt(A) rho sqrt(A) ||_1 <= 2 sqrt(Tr rho (I - A))`
//! * near no-signaling rounding: a `delta`-no-signaling strategy is within
//!   `2 delta` of the no-signaling polytope (checked exactly via LP).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::linalg::{self, CMat, C64};
use crate::nosig::{self, NosigError};
use crate::qip::QipError;
use crate::rational::{self, Rational};
use crate::strategy::{Strategy, StrategyShape};

/// Input validation tolerance for densities and effects.
pub const INPUT_TOL: f64 = 1e-10;
/// Allowed numerical excess of the left side over the right side.
pub const SLACK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

impl BoundCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        BoundCheck {
            lhs,
            rhs,
            ok: lhs <= rhs + SLACK_TOL,
        }
    }

    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

fn check_density(rho: &CMat) -> Result<(), QipError> {
    if rho.nrows() != rho.ncols() {
        return Err(QipError::NotDensity("not square".into()));
    }
    if (rho - rho.adjoint()).norm() > INPUT_TOL {
        return Err(QipError::NotDensity("not Hermitian".into()));
    }
    let tr = linalg::trace(rho);
    if (tr - C64::new(1.0, 0.0)).norm() > INPUT_TOL {
        return Err(QipError::NotDensity(format!("trace {tr}")));
    }
    let min = linalg::hermitian_eigenvalues(rho)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if min < -INPUT_TOL {
        return Err(QipError::NotDensity(format!("eigenvalue {min}")));
    }
    Ok(())
}

/// Pure-overlap bound for `rho` on `X (x) Y` with `dim X = phi.len()`.
pub fn pure_overlap_bound_check(rho: &CMat, phi: &[C64], dim_y: usize) -> Result<BoundCheck, QipError> {
    check_density(rho)?;
    let dx = phi.len();
    if rho.nrows() != dx * dim_y {
        return Err(QipError::Dimension(format!(
            "density is {}-dimensional, split is {dx} x {dim_y}",
            rho.nrows()
        )));
    }
    let norm: f64 = phi.iter().map(|a| a.norm_sqr()).sum();
    if (norm - 1.0).abs() > INPUT_TOL {
        return Err(QipError::Dimension(format!("phi has squared norm {norm}")));
    }
    let rho_y = linalg::partial_trace(rho, &[dx, dim_y], &[1]);
    let rho_x = linalg::partial_trace(rho, &[dx, dim_y], &[0]);
    let lhs = linalg::trace_norm_hermitian(&(rho - linalg::kron(&linalg::outer(phi), &rho_y)));
    let overlap: C64 = (0..dx)
        .flat_map(|i| (0..dx).map(move |j| (i, j)))
        .map(|(i, j)| phi[i].conj() * rho_x[(i, j)] * phi[j])
        .sum();
    let rhs = 4.0 * (1.0 - overlap.re).max(0.0).sqrt();
    Ok(BoundCheck::new(lhs, rhs))
}

/// Gentle-measurement bound for a density `rho` and an effect `a`.
pub fn gentle_measurement_check(rho: &CMat, a: &CMat) -> Result<BoundCheck, QipError> {
    check_density(rho)?;
    if a.nrows() != rho.nrows() || a.ncols() != rho.ncols() {
        return Err(QipError::Dimension("effect and density differ in size".into()));
    }
    if (a - a.adjoint()).norm() > INPUT_TOL {
        return Err(QipError::NotEffect("not Hermitian".into()));
    }
    let eig = linalg::hermitian_eigenvalues(a);
    if eig.iter().any(|&l| !(-INPUT_TOL..=1.0 + INPUT_TOL).contains(&l)) {
        return Err(QipError::NotEffect("eigenvalue outside [0, 1]".into()));
    }
    let root = linalg::sqrt_psd(a);
    let lhs = linalg::trace_norm_hermitian(&(rho - &root * rho * &root));
    let d = rho.nrows();
    let reject = linalg::trace(&(rho * (linalg::identity(d) - a))).re;
    let rhs = 2.0 * reject.max(0.0).sqrt();
    Ok(BoundCheck::new(lhs, rhs))
}

/// Outcome of a randomized suite.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub trials: usize,
    pub failures: usize,
    /// Smallest `rhs - lhs` seen (`None` for zero trials).
    pub worst_slack: Option<f64>,
    /// Description of the first failing trial.
    pub counterexample: Option<String>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    fn record(&mut self, slack: f64, ok: bool, describe: impl FnOnce() -> String) {
        self.trials += 1;
        self.worst_slack = Some(self.worst_slack.map_or(slack, |w| w.min(slack)));
        if !ok {
            self.failures += 1;
            if self.counterexample.is_none() {
                self.counterexample = Some(describe());
            }
        }
    }

    fn empty(name: &str) -> Self {
        SuiteResult {
            name: name.to_string(),
            trials: 0,
            failures: 0,
            worst_slack: None,
            counterexample: None,
        }
    }
}

/// Turns every verdict into its opposite; used to check that failures are
/// reported.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Verdict {
    #[default]
    Normal,
    Negated,
}

impl Verdict {
    fn apply(self, ok: bool) -> bool {
        match self {
            Verdict::Normal => ok,
            Verdict::Negated => !ok,
        }
    }
}

fn matrix_text(m: &CMat) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|r| {
            let cells: Vec<String> = r.iter().map(|c| format!("{:.17e}{:+.17e}i", c.re, c.im)).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

/// Random pure-overlap instances with `dim X, dim Y` in `2..=4`. Half of the
/// densities are perturbations of `|phi><phi| (x) sigma`, where the bound is
/// nearly tight.
pub fn pure_overlap_suite(seed: u64, trials: usize, verdict: Verdict) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SuiteResult::empty("pure-overlap");
    for trial in 0..trials {
        let dx = rng.random_range(2..=4);
        let dy = rng.random_range(2..=4);
        let phi = linalg::random_pure_state(&mut rng, dx);
        let rank = rng.random_range(1..=dx * dy);
        let noise = linalg::random_density(&mut rng, dx * dy, rank);
        let rho = if rng.random_bool(0.5) {
            let rank = rng.random_range(1..=dy);
            let sigma = linalg::random_density(&mut rng, dy, rank);
            let lambda: f64 = rng.random::<f64>().powi(3);
            linalg::kron(&linalg::outer(&phi), &sigma).scale(1.0 - lambda) + noise.scale(lambda)
        } else {
            noise
        };
        let check = pure_overlap_bound_check(&rho, &phi, dy).expect("generated inputs are valid");
        out.record(check.slack(), verdict.apply(check.ok), || {
            format!(
                "trial {trial}: dims {dx}x{dy}, lhs {}, rhs {}, phi {:?}, rho {}",
                check.lhs,
                check.rhs,
                phi,
                matrix_text(&rho)
            )
        });
    }
    out
}

/// Random gentle-measurement instances with dimension `2..=8`. Some effects
/// are close to the projector onto the support of `rho`.
pub fn gentle_measurement_suite(seed: u64, trials: usize, verdict: Verdict) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SuiteResult::empty("gentle-measurement");
    for trial in 0..trials {
        let d = rng.random_range(2..=8);
        let rank = rng.random_range(1..=d);
        let rho = linalg::random_density(&mut rng, d, rank);
        let a = if rng.random_bool(0.5) {
            let u = linalg::random_unitary(&mut rng, d);
            let diag = CMat::from_fn(d, d, |i, j| {
                if i == j {
                    C64::new(rng.random::<f64>(), 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            &u * diag * u.adjoint()
        } else {
            // Nearly accepts rho with certainty.
            let support = linalg::hermitian_map(&rho, |l| if l > 1e-12 { 1.0 } else { 0.0 });
            let eps: f64 = rng.random::<f64>().powi(4);
            let u = linalg::random_unitary(&mut rng, d);
            let diag = CMat::from_fn(d, d, |i, j| {
                if i == j {
                    C64::new(rng.random::<f64>(), 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            support.scale(1.0 - eps) + (&u * diag * u.adjoint()).scale(eps)
        };
        let a = (&a + a.adjoint()).scale(0.5);
        let check = gentle_measurement_check(&rho, &a).expect("generated inputs are valid");
        out.record(check.slack(), verdict.apply(check.ok), || {
            format!(
                "trial {trial}: dim {d}, lhs {}, rhs {}, rho {}, A {}",
                check.lhs,
                check.rhs,
                matrix_text(&rho),
                matrix_text(&a)
            )
        });
    }
    out
}

/// Random strategy on the two-question game shape: a no-signaling product
/// strategy mixed with an arbitrary table, all entries small rationals.
pub fn random_strategy<R: Rng + ?Sized>(rng: &mut R, shape: StrategyShape) -> Strategy {
    let weights = |rng: &mut R, n: usize| -> Vec<i64> {
        loop {
            let w: Vec<i64> = (0..n).map(|_| rng.random_range(0..=6)).collect();
            if w.iter().any(|&x| x > 0) {
                return w;
            }
        }
    };
    let alice: Vec<Vec<i64>> = (0..shape.questions_a).map(|_| weights(rng, shape.answers_a)).collect();
    let bob: Vec<Vec<i64>> = (0..shape.questions_b).map(|_| weights(rng, shape.answers_b)).collect();
    let row = shape.answers_a * shape.answers_b;
    let noise: Vec<Vec<i64>> = (0..shape.questions_a * shape.questions_b)
        .map(|_| weights(rng, row))
        .collect();
    let mix = rational::rat(rng.random_range(0..=4), 4);
    let frac = |w: &[i64], i: usize| rational::rat(w[i], w.iter().sum());
    Strategy::from_fn(shape, |s, t, y, z| {
        let product = frac(&alice[s], y) * frac(&bob[t], z);
        let other = frac(&noise[s * shape.questions_b + t], y * shape.answers_b + z);
        product * (Rational::from_integer(1.into()) - &mix) + other * &mix
    })
    .expect("mixture of distributions")
}

/// Exact check `nearest_ns(p).dist <= 2 min_delta(p)` on random strategies.
pub fn near_no_signaling_suite(seed: u64, trials: usize, verdict: Verdict) -> Result<SuiteResult, NosigError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SuiteResult::empty("near-no-signaling");
    for trial in 0..trials {
        let shape = StrategyShape::game(2);
        let p = random_strategy(&mut rng, shape);
        let delta = nosig::min_delta(&p)?;
        let (_, dist) = nosig::nearest_ns(&p)?;
        let bound = &delta * Rational::from_integer(2.into());
        let ok = dist <= bound;
        let slack = rational::to_f64(&(&bound - &dist));
        out.record(slack, verdict.apply(ok), || {
            format!(
                "trial {trial}: dist {}, 2*delta {}, strategy {}",
                rational::to_text(&dist),
                rational::to_text(&bound),
                p.to_json()
            )
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_state_is_tight_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let phi = linalg::random_pure_state(&mut rng, 3);
        let sigma = linalg::random_density(&mut rng, 2, 2);
        let rho = linalg::kron(&linalg::outer(&phi), &sigma);
        let c = pure_overlap_bound_check(&rho, &phi, 2).unwrap();
        assert!(c.lhs < 1e-12 && c.rhs < 1e-5 && c.ok);
    }

    #[test]
    fn gentle_identity_and_support_projector() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rho = linalg::random_density(&mut rng, 4, 2);
        let c = gentle_measurement_check(&rho, &linalg::identity(4)).unwrap();
        assert!(c.lhs < 1e-12 && c.rhs < 1e-5);
        let proj = linalg::hermitian_map(&rho, |l| if l > 1e-12 { 1.0 } else { 0.0 });
        let c = gentle_measurement_check(&rho, &proj).unwrap();
        assert!(c.lhs < 1e-10);
    }

    #[test]
    fn invalid_inputs_are_refused() {
        let bad = linalg::identity(2);
        assert!(matches!(
            gentle_measurement_check(&bad, &bad),
            Err(QipError::NotDensity(_))
        ));
        let rho = linalg::identity(2).scale(0.5);
        assert!(matches!(
            gentle_measurement_check(&rho, &linalg::identity(2).scale(2.0)),
            Err(QipError::NotEffect(_))
        ));
    }

    #[test]
    fn suites_pass_and_negation_fails() {
        assert!(pure_overlap_suite(1, 50, Verdict::Normal).passed());
        assert!(gentle_measurement_suite(1, 50, Verdict::Normal).passed());
        let neg = gentle_measurement_suite(1, 5, Verdict::Negated);
        assert_eq!(neg.failures, 5);
        assert!(neg.counterexample.unwrap().starts_with("trial 0"));
        let empty = pure_overlap_suite(1, 0, Verdict::Normal);
        assert!(empty.passed() && empty.worst_slack.is_none());
    }

    #[test]
    fn near_no_signaling_small() {
        let r = near_no_signaling_suite(3, 5, Verdict::Normal).unwrap();
        assert!(r.passed(), "{r:?}");
    }
}
