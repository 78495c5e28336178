//! The no-signaling polytope: membership, optimal game values, distances to
//! the polytope, and the tightness strategy for the doubling-OR circuits.
//!
//! All quantities are exact rationals. Optimization goes through the exact
//! simplex in [`crate::lp`].

use num_traits::{One, Zero};
use thiserror::Error;

use crate::circuits::CircuitValues;
use crate::game::{self, acceptance, Game, GameError};
use crate::lp::{LinearProgram, LpError, PivotRecord, Relation, Sense};
use crate::rational::{self, inv_pow2, Rational};
use crate::strategy::{alice_answer, Strategy, StrategyShape};

/// Largest question count accepted by [`ns_value_lp`].
pub const MAX_LP_QUESTIONS: usize = 32;

#[derive(Debug, Error)]
pub enum NosigError {
    #[error("strategy is signaling ({} violated equalities)", .0.len())]
    Signaling(Vec<Violation>),
    #[error("game with {0} questions exceeds the LP size cap of {MAX_LP_QUESTIONS}")]
    TooLarge(usize),
    #[error("strategy values {values} gates but game has {questions} questions")]
    ValuesMismatch { values: usize, questions: usize },
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// A failed no-signaling equality, reported against question 0 of the other
/// prover.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Bob's marginal on `(t, z)` differs between Alice's questions 0 and `s`.
    AliceToBob { t: usize, z: usize, s: usize },
    /// Alice's marginal on `(s, y)` differs between Bob's questions 0 and `t`.
    BobToAlice { s: usize, y: usize, t: usize },
}

/// Exact check of both families of no-signaling equalities.
pub fn check_no_signaling(p: &Strategy) -> Result<(), Vec<Violation>> {
    let sh = p.shape();
    let mut violations = Vec::new();
    for t in 0..sh.questions_b {
        let reference = p.bob_marginal(0, t);
        for s in 1..sh.questions_a {
            let other = p.bob_marginal(s, t);
            for z in 0..sh.answers_b {
                if reference[z] != other[z] {
                    violations.push(Violation::AliceToBob { t, z, s });
                }
            }
        }
    }
    for s in 0..sh.questions_a {
        let reference = p.alice_marginal(s, 0);
        for t in 1..sh.questions_b {
            let other = p.alice_marginal(s, t);
            for y in 0..sh.answers_a {
                if reference[y] != other[y] {
                    violations.push(Violation::BobToAlice { s, y, t });
                }
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

pub fn is_no_signaling(p: &Strategy) -> bool {
    check_no_signaling(p).is_ok()
}

/// Marginals `p^A(y|s)` and `p^B(z|t)` of a no-signaling strategy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarginalPair {
    /// Indexed `[s * |Y| + y]`.
    pub alice: Vec<Rational>,
    /// Indexed `[t * |Z| + z]`.
    pub bob: Vec<Rational>,
}

impl MarginalPair {
    pub fn of(p: &Strategy) -> Result<Self, NosigError> {
        check_no_signaling(p).map_err(NosigError::Signaling)?;
        let sh = p.shape();
        let alice = (0..sh.questions_a).flat_map(|s| p.alice_marginal(s, 0)).collect();
        let bob = (0..sh.questions_b).flat_map(|t| p.bob_marginal(0, t)).collect();
        Ok(MarginalPair { alice, bob })
    }
}

/// Column layout shared by the polytope LPs: the strategy table first, then
/// Alice's and Bob's marginal variables.
struct PolytopeVars {
    shape: StrategyShape,
    offset: usize,
}

impl PolytopeVars {
    fn table(&self, s: usize, t: usize, y: usize, z: usize) -> usize {
        self.offset + self.shape.index(s, t, y, z)
    }

    fn alice(&self, s: usize, y: usize) -> usize {
        self.offset + self.shape.len() + s * self.shape.answers_a + y
    }

    fn bob(&self, t: usize, z: usize) -> usize {
        self.offset + self.shape.len() + self.shape.questions_a * self.shape.answers_a + t * self.shape.answers_b + z
    }

    fn count(shape: StrategyShape) -> usize {
        shape.len() + shape.questions_a * shape.answers_a + shape.questions_b * shape.answers_b
    }

    /// Normalization of every row plus the marginal equalities.
    fn constrain(&self, lp: &mut LinearProgram) -> Result<(), LpError> {
        let sh = self.shape;
        let one = Rational::one;
        for s in 0..sh.questions_a {
            for t in 0..sh.questions_b {
                let row = (0..sh.answers_a)
                    .flat_map(|y| (0..sh.answers_b).map(move |z| (y, z)))
                    .map(|(y, z)| (self.table(s, t, y, z), one()));
                lp.add_constraint(row, Relation::Eq, one())?;
                for z in 0..sh.answers_b {
                    let terms = (0..sh.answers_a)
                        .map(|y| (self.table(s, t, y, z), one()))
                        .chain([(self.bob(t, z), -one())]);
                    lp.add_constraint(terms, Relation::Eq, Rational::zero())?;
                }
                for y in 0..sh.answers_a {
                    let terms = (0..sh.answers_b)
                        .map(|z| (self.table(s, t, y, z), one()))
                        .chain([(self.alice(s, y), -one())]);
                    lp.add_constraint(terms, Relation::Eq, Rational::zero())?;
                }
            }
        }
        Ok(())
    }

    fn strategy(&self, x: &[Rational]) -> Strategy {
        let p = (0..self.shape.len()).map(|i| x[self.offset + i].clone()).collect();
        Strategy::new(self.shape, p).expect("LP solution lies in the polytope")
    }
}

/// Optimal no-signaling value of a game with its maximizer and pivot log.
#[derive(Debug, Clone)]
pub struct NsValue {
    pub value: Rational,
    pub strategy: Strategy,
    pub pivots: Vec<PivotRecord>,
}

/// Maximum acceptance probability over all no-signaling strategies.
pub fn ns_value_lp(g: &Game) -> Result<NsValue, NosigError> {
    if g.n() > MAX_LP_QUESTIONS {
        return Err(NosigError::TooLarge(g.n()));
    }
    let shape = g.shape();
    let vars = PolytopeVars { shape, offset: 0 };
    let mut lp = LinearProgram::new(PolytopeVars::count(shape), Sense::Maximize);
    // The 1/N^2 factor is applied after solving.
    for (s, t, y, z) in shape.entries() {
        let r = g.predicate(s, t, y, z);
        if !r.is_zero() {
            lp.set_objective(vars.table(s, t, y, z), r.clone());
        }
    }
    vars.constrain(&mut lp)?;
    let sol = lp.solve()?;
    let strategy = vars.strategy(&sol.x);
    let value = acceptance(g, &strategy)?;
    Ok(NsValue {
        value,
        strategy,
        pivots: sol.pivots,
    })
}

/// The no-signaling strategy showing the double-exponential soundness gap is
/// attained on [`tx_instance(h)`](crate::circuits::tx_instance).
///
/// Bob, asked a gate on level `i <= h`, answers 1 with probability
/// `2^-(h-i)`; Alice, asked an OR gate on level `i >= 1`, claims exactly one
/// input is 1 (each side with probability `2^-(h-i+1)`) and otherwise claims
/// `(0,0)`. Pairs where Bob is asked Alice's gate or one of its inputs are
/// correlated so tests (a) and (b) always pass; every other pair answers
/// independently. Padding gates are answered truthfully with 0.
pub fn tx_strategy(h: usize) -> Strategy {
    assert!(h >= 1, "tightness family needs h >= 1");
    let n = (2 * h + 2).next_power_of_two();
    let shape = StrategyShape::game(n);
    let level = |g: usize| g / 2;
    let bob_one = |t: usize| {
        if level(t) <= h {
            inv_pow2((h - level(t)) as u32)
        } else {
            Rational::zero()
        }
    };
    let split = |s: usize| inv_pow2((h - level(s) + 1) as u32);
    let alice = |s: usize, y: usize| {
        let i = level(s);
        if i == 0 || i > h {
            return if y == 0 { Rational::one() } else { Rational::zero() };
        }
        let q = split(s);
        match y {
            0 => Rational::one() - &q - &q,
            1 | 2 => q,
            _ => Rational::zero(),
        }
    };
    let bob = |t: usize, z: usize| {
        let one = bob_one(t);
        if z == 1 {
            one
        } else {
            Rational::one() - one
        }
    };
    let left = alice_answer(true, false);
    let right = alice_answer(false, true);
    let joint = |s: usize, t: usize, y: usize, z: usize| {
        let i = level(s);
        if i >= 1 && i <= h {
            let q = split(s);
            // Which of Alice's answers comes with z = 1.
            let lifted: Option<&[usize]> = if t == s {
                Some(&[left, right])
            } else if t == 2 * (i - 1) {
                Some(&[left])
            } else if t == 2 * (i - 1) + 1 {
                Some(&[right])
            } else {
                None
            };
            if let Some(lifted) = lifted {
                return if y == 0 && z == 0 {
                    Rational::one() - &q - &q
                } else if (y == left || y == right) && (z == 1) == lifted.contains(&y) {
                    q
                } else {
                    Rational::zero()
                };
            }
        }
        alice(s, y) * bob(t, z)
    };
    Strategy::from_fn(shape, joint).expect("tightness strategy is a distribution")
}

/// `min delta` such that `p` is delta-no-signaling under the uniform question
/// distribution: the best single-prover strategies `p^A`, `p^B` keep both
/// averaged total-variation gaps below delta.
pub fn min_delta(p: &Strategy) -> Result<Rational, NosigError> {
    let sh = p.shape();
    let (qa, qb, ya, zb) = (sh.questions_a, sh.questions_b, sh.answers_a, sh.answers_b);
    let pa = |s: usize, y: usize| s * ya + y;
    let pb_base = qa * ya;
    let pb = |t: usize, z: usize| pb_base + t * zb + z;
    let u_base = pb_base + qb * zb;
    let u = |s: usize, t: usize, y: usize| u_base + (s * qb + t) * ya + y;
    let w_base = u_base + qa * qb * ya;
    let w = |s: usize, t: usize, z: usize| w_base + (s * qb + t) * zb + z;
    let delta = w_base + qa * qb * zb;
    let mut lp = LinearProgram::new(delta + 1, Sense::Minimize);
    lp.set_objective(delta, Rational::one());
    let one = Rational::one;
    for s in 0..qa {
        lp.add_constraint((0..ya).map(|y| (pa(s, y), one())), Relation::Eq, one())?;
    }
    for t in 0..qb {
        lp.add_constraint((0..zb).map(|z| (pb(t, z), one())), Relation::Eq, one())?;
    }
    for s in 0..qa {
        for t in 0..qb {
            let ma = p.alice_marginal(s, t);
            for (y, m) in ma.iter().enumerate().take(ya) {
                lp.add_constraint([(u(s, t, y), one()), (pa(s, y), one())], Relation::Ge, m.clone())?;
                lp.add_constraint([(u(s, t, y), one()), (pa(s, y), -one())], Relation::Ge, -m.clone())?;
            }
            let mb = p.bob_marginal(s, t);
            for (z, m) in mb.iter().enumerate().take(zb) {
                lp.add_constraint([(w(s, t, z), one()), (pb(t, z), one())], Relation::Ge, m.clone())?;
                lp.add_constraint([(w(s, t, z), one()), (pb(t, z), -one())], Relation::Ge, -m.clone())?;
            }
        }
    }
    let weight = Rational::new(1.into(), ((2 * qa * qb) as i64).into());
    let gap_a = (0..qa)
        .flat_map(|s| (0..qb).flat_map(move |t| (0..ya).map(move |y| u(s, t, y))))
        .map(|v| (v, -weight.clone()));
    lp.add_constraint(gap_a.chain([(delta, one())]), Relation::Ge, Rational::zero())?;
    let gap_b = (0..qa)
        .flat_map(|s| (0..qb).flat_map(move |t| (0..zb).map(move |z| w(s, t, z))))
        .map(|v| (v, -weight.clone()));
    lp.add_constraint(gap_b.chain([(delta, one())]), Relation::Ge, Rational::zero())?;
    Ok(lp.solve()?.value)
}

/// Closest no-signaling strategy in averaged total variation
/// `sum_{s,t} pi(s,t) (1/2) sum_{y,z} |p - phat|`, with that distance.
pub fn nearest_ns(p: &Strategy) -> Result<(Strategy, Rational), NosigError> {
    let sh = p.shape();
    let vars = PolytopeVars { shape: sh, offset: 0 };
    let d_base = PolytopeVars::count(sh);
    let mut lp = LinearProgram::new(d_base + sh.len(), Sense::Minimize);
    let weight = Rational::new(1.into(), ((2 * sh.questions_a * sh.questions_b) as i64).into());
    for i in 0..sh.len() {
        lp.set_objective(d_base + i, weight.clone());
    }
    vars.constrain(&mut lp)?;
    let one = Rational::one;
    for (s, t, y, z) in sh.entries() {
        let i = sh.index(s, t, y, z);
        let target = p.get(s, t, y, z).clone();
        let phat = vars.table(s, t, y, z);
        lp.add_constraint([(d_base + i, one()), (phat, one())], Relation::Ge, target.clone())?;
        lp.add_constraint([(d_base + i, one()), (phat, -one())], Relation::Ge, -target)?;
    }
    let sol = lp.solve()?;
    Ok((vars.strategy(&sol.x), sol.value))
}

/// Averaged total-variation distance between two strategies of equal shape.
pub fn strategy_distance(p: &Strategy, q: &Strategy) -> Rational {
    assert_eq!(p.shape(), q.shape());
    let sh = p.shape();
    let total: Rational = p
        .table()
        .iter()
        .zip(q.table())
        .map(|(a, b)| rational::abs(&(a - b)))
        .sum();
    total / Rational::from_integer(((2 * sh.questions_a * sh.questions_b) as i64).into())
}

/// Rejection statistics of a no-signaling strategy on a circuit game.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SoundnessDiagnostics {
    /// Overall rejection probability.
    pub eps: Rational,
    /// Rejection probability per question pair, `[s * N + t]`.
    pub eps_st: Vec<Rational>,
    /// Probability that Bob answers `1 - v_i` when asked gate `i`.
    pub delta_i: Vec<Rational>,
}

impl SoundnessDiagnostics {
    /// Whether every `delta(i) < 3^i / 3^N`.
    pub fn induction_bound_holds(&self) -> bool {
        let n = self.delta_i.len() as u32;
        let three = Rational::from_integer(3.into());
        let denom = rational::pow(&three, n);
        self.delta_i
            .iter()
            .enumerate()
            .all(|(i, d)| d < &(rational::pow(&three, i as u32) / &denom))
    }
}

/// `1 / (N^2 * 3^N)`: rejection probabilities below this force `v_k = 1`.
pub fn soundness_threshold(n: usize) -> Rational {
    let three = Rational::from_integer(3.into());
    Rational::one() / (rational::pow(&three, n as u32) * Rational::from_integer(((n * n) as i64).into()))
}

pub fn soundness_diagnostics(g: &Game, p: &Strategy, v: &CircuitValues) -> Result<SoundnessDiagnostics, NosigError> {
    check_no_signaling(p).map_err(NosigError::Signaling)?;
    if v.len() != g.n() {
        return Err(NosigError::ValuesMismatch {
            values: v.len(),
            questions: g.n(),
        });
    }
    let eps_st = game::rejection_by_pair(g, p)?;
    let n = g.n();
    let eps = eps_st.iter().sum::<Rational>() / Rational::from_integer(((n * n) as i64).into());
    let delta_i = (0..n)
        .map(|i| {
            let wrong = usize::from(!v.get(i));
            p.bob_marginal(0, i)[wrong].clone()
        })
        .collect();
    Ok(SoundnessDiagnostics { eps, eps_st, delta_i })
}
