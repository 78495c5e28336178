//! The two-prover one-round game played by the circuit verifier.
//!
//! The referee draws `(s, t)` uniformly from `[0, N)^2`, sends `s` to Alice and
//! `t` to Bob, and accepts `(y, z)` iff all of the following hold:
//!
//! * if `s == t`, Bob's bit equals gate `s` applied to Alice's claimed inputs;
//! * if gate `t` feeds gate `s`, Alice's claim for that input equals Bob's bit;
//! * if `t == k`, Bob's bit is 1.
//!
//! Alice always answers two bits; bits beyond the arity of gate `s` are ignored.

use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::circuits::{evaluate, CircuitError, GateDescriptor, Instance};
use crate::rational::{self, Rational};
use crate::strategy::{alice_answer, alice_bit, Strategy, StrategyShape};

#[derive(Debug, Error)]
pub enum GameError {
    #[error("strategy shape {strategy:?} does not match game shape {game:?}")]
    ShapeMismatch {
        game: StrategyShape,
        strategy: StrategyShape,
    },
    #[error("predicate table has {got} entries, expected {expected}")]
    TableLength { expected: usize, got: usize },
    #[error("predicate value {0} outside [0, 1]")]
    PredicateRange(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

/// `G = (S, T, Y, Z, pi, R)` with `S = T = {0..N}`, `|Y| = 4`, `|Z| = 2` and
/// uniform `pi`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Game {
    n: usize,
    r: Vec<Rational>,
}

/// One play of the game and the referee's verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub s: usize,
    pub t: usize,
    pub y: usize,
    pub z: usize,
    pub accept: bool,
}

/// Whether the circuit verifier accepts `(y, z)` on questions `(s, t)`.
pub fn verifier_accepts(gate_s: &GateDescriptor, s: usize, t: usize, k: usize, y: usize, z: usize) -> bool {
    let bob = z == 1;
    let claims = [alice_bit(y, 0), alice_bit(y, 1)];
    let arity = gate_s.kind.arity();
    if s == t && gate_s.kind.apply(&claims[..arity]) != bob {
        return false;
    }
    for (pos, &input) in gate_s.inputs.iter().enumerate() {
        if input == t && claims[pos] != bob {
            return false;
        }
    }
    !(t == k && !bob)
}

impl Game {
    /// Game from an explicit predicate table in strategy order
    /// (`[s][t][y][z]` flattened). Entries may be any rationals in `[0, 1]`.
    pub fn from_table(n: usize, r: Vec<Rational>) -> Result<Self, GameError> {
        let expected = StrategyShape::game(n).len();
        if r.len() != expected {
            return Err(GameError::TableLength { expected, got: r.len() });
        }
        if let Some(bad) = r.iter().find(|v| v.is_negative() || **v > Rational::one()) {
            return Err(GameError::PredicateRange(rational::to_text(bad)));
        }
        Ok(Game { n, r })
    }

    /// Number of questions per prover.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn shape(&self) -> StrategyShape {
        StrategyShape::game(self.n)
    }

    /// `R(y, z | s, t)`.
    #[inline]
    pub fn predicate(&self, s: usize, t: usize, y: usize, z: usize) -> &Rational {
        &self.r[self.shape().index(s, t, y, z)]
    }

    pub fn table(&self) -> &[Rational] {
        &self.r
    }

    pub fn table_f64(&self) -> Vec<f64> {
        self.r.iter().map(rational::to_f64).collect()
    }

    /// Plays one round with fixed answers. Only meaningful for {0,1}-valued
    /// predicates.
    pub fn play(&self, s: usize, t: usize, y: usize, z: usize) -> Outcome {
        Outcome {
            s,
            t,
            y,
            z,
            accept: self.predicate(s, t, y, z).is_one(),
        }
    }

    /// `{"N": int, "R": [s][t][y][z]}` with 0/1 integers (other rationals as
    /// `"num/den"` strings).
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        #[serde(untagged)]
        enum Cell {
            Int(i64),
            Text(String),
        }
        #[derive(Serialize)]
        struct Export {
            #[serde(rename = "N")]
            n: usize,
            #[serde(rename = "R")]
            r: Vec<Vec<Vec<Vec<Cell>>>>,
        }
        let sh = self.shape();
        let cell = |v: &Rational| {
            if v.is_zero() {
                Cell::Int(0)
            } else if v.is_one() {
                Cell::Int(1)
            } else {
                Cell::Text(rational::to_text(v))
            }
        };
        let r = (0..sh.questions_a)
            .map(|s| {
                (0..sh.questions_b)
                    .map(|t| {
                        (0..sh.answers_a)
                            .map(|y| (0..sh.answers_b).map(|z| cell(self.predicate(s, t, y, z))).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        serde_json::to_string(&Export { n: self.n, r }).expect("game serializes")
    }
}

/// Builds `G_{V,x}` for a circuit instance.
pub fn build_game(inst: &Instance) -> Game {
    let n = inst.gate_count();
    let shape = StrategyShape::game(n);
    let mut r = Vec::with_capacity(shape.len());
    for s in 0..n {
        let gate = inst.describe(s);
        for t in 0..n {
            for y in 0..shape.answers_a {
                for z in 0..shape.answers_b {
                    let ok = verifier_accepts(&gate, s, t, inst.k(), y, z);
                    r.push(if ok { Rational::one() } else { Rational::zero() });
                }
            }
        }
    }
    Game { n, r }
}

/// Provers who answer the true gate values; Alice pads unused bits with 0.
pub fn honest_strategy(inst: &Instance) -> Result<Strategy, GameError> {
    let values = evaluate(inst)?;
    let shape = StrategyShape::game(inst.gate_count());
    let alice = |s: usize| {
        let gate = inst.describe(s);
        let bit = |pos: usize| gate.inputs.get(pos).is_some_and(|&j| values.get(j));
        alice_answer(bit(0), bit(1))
    };
    let bob = |t: usize| usize::from(values.get(t));
    Ok(Strategy::deterministic(shape, alice, bob))
}

/// Exact acceptance probability `(1/N^2) sum R(y,z|s,t) p(y,z|s,t)`.
pub fn acceptance(g: &Game, p: &Strategy) -> Result<Rational, GameError> {
    if p.shape() != g.shape() {
        return Err(GameError::ShapeMismatch {
            game: g.shape(),
            strategy: p.shape(),
        });
    }
    let total: Rational = g
        .table()
        .iter()
        .zip(p.table())
        .filter(|(r, _)| !r.is_zero())
        .map(|(r, q)| r * q)
        .sum();
    Ok(total / Rational::from_integer(((g.n * g.n) as i64).into()))
}

/// Probability that `p` is rejected on each question pair, in `[s][t]` order.
pub fn rejection_by_pair(g: &Game, p: &Strategy) -> Result<Vec<Rational>, GameError> {
    if p.shape() != g.shape() {
        return Err(GameError::ShapeMismatch {
            game: g.shape(),
            strategy: p.shape(),
        });
    }
    let sh = g.shape();
    let mut out = Vec::with_capacity(g.n * g.n);
    for s in 0..g.n {
        for t in 0..g.n {
            let mut eps = Rational::zero();
            for y in 0..sh.answers_a {
                for z in 0..sh.answers_b {
                    let q = p.get(s, t, y, z);
                    if !q.is_zero() {
                        eps += (Rational::one() - g.predicate(s, t, y, z)) * q;
                    }
                }
            }
            out.push(eps);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{tx_instance, GateDescriptor};
    use crate::rational::rat;

    #[test]
    fn tx_examples() {
        let inst = tx_instance(1).unwrap();
        let g = build_game(&inst);
        // s = t = 3: OR(0,0) = 0 matches Bob for test (a), but t = k = 3
        // so test (c) still demands z = 1.
        assert!(!g.play(3, 3, alice_answer(false, false), 0).accept);
        assert!(g.play(3, 3, alice_answer(true, false), 1).accept);
        // s = t = 2 is not the output: OR(0,0) = 0 and Bob says 0.
        assert!(g.play(2, 2, 0, 0).accept);
        // Alice claims g_0 = 1, Bob says 0.
        assert!(!g.play(2, 0, alice_answer(true, false), 0).accept);
        assert!(!g.play(2, 0, alice_answer(true, true), 0).accept);
        // t = k with z = 0 fails test (c) even when (a), (b) do not apply.
        for s in [0, 1] {
            for y in 0..4 {
                assert!(!g.play(s, 3, y, 0).accept);
            }
        }
    }

    #[test]
    fn honest_on_yes_accepts() {
        let inst = Instance::from_gates(
            vec![
                GateDescriptor::one(),
                GateDescriptor::not(0),
                GateDescriptor::or(0, 1),
                GateDescriptor::and(2, 0),
            ],
            3,
        )
        .unwrap();
        let g = build_game(&inst);
        let p = honest_strategy(&inst).unwrap();
        assert_eq!(acceptance(&g, &p).unwrap(), rat(1, 1));
    }

    #[test]
    fn honest_on_tx1_fails_only_output_column() {
        let inst = tx_instance(1).unwrap();
        let g = build_game(&inst);
        let p = honest_strategy(&inst).unwrap();
        assert_eq!(acceptance(&g, &p).unwrap(), rat(3, 4));
        let eps = rejection_by_pair(&g, &p).unwrap();
        for s in 0..4 {
            for t in 0..4 {
                let expect = if t == 3 { rat(1, 1) } else { rat(0, 1) };
                assert_eq!(eps[s * 4 + t], expect);
            }
        }
    }

    #[test]
    fn constant_predicate() {
        let n = 2;
        let g = Game::from_table(n, vec![rat(1, 1); StrategyShape::game(n).len()]).unwrap();
        let p = Strategy::uniform(g.shape());
        assert_eq!(acceptance(&g, &p).unwrap(), rat(1, 1));
        assert!(Game::from_table(n, vec![rat(2, 1); 64]).is_err());
        assert!(Game::from_table(n, vec![rat(1, 1); 3]).is_err());
    }

    #[test]
    fn shape_mismatch() {
        let g = build_game(&tx_instance(1).unwrap());
        let p = Strategy::uniform(StrategyShape::game(2));
        assert!(matches!(acceptance(&g, &p), Err(GameError::ShapeMismatch { .. })));
    }

    #[test]
    fn export_shape() {
        let g = build_game(&tx_instance(1).unwrap());
        let v: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
        assert_eq!(v["N"], 4);
        assert_eq!(v["R"][2][2][0][0], 1);
        assert_eq!(v["R"][2][0][2][0], 0);
    }
}
