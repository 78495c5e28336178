//! Exact two-prover strategy tables `p(y, z | s, t)`.

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::{self, Rational};

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("table has {got} entries, shape {shape:?} needs {expected}")]
    Length {
        shape: StrategyShape,
        expected: usize,
        got: usize,
    },
    #[error("negative probability at (s={s}, t={t}, y={y}, z={z})")]
    Negative { s: usize, t: usize, y: usize, z: usize },
    #[error("row (s={s}, t={t}) sums to {sum}, not 1")]
    RowSum { s: usize, t: usize, sum: String },
    #[error("malformed strategy JSON: {0}")]
    Format(String),
}

/// Sizes of the question sets `S`, `T` and answer sets `Y`, `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StrategyShape {
    pub questions_a: usize,
    pub questions_b: usize,
    pub answers_a: usize,
    pub answers_b: usize,
}

impl StrategyShape {
    /// The shape used by every circuit game: `N` questions per prover, two
    /// answer bits for Alice and one for Bob.
    pub fn game(n: usize) -> Self {
        StrategyShape {
            questions_a: n,
            questions_b: n,
            answers_a: 4,
            answers_b: 2,
        }
    }

    pub fn len(&self) -> usize {
        self.questions_a * self.questions_b * self.answers_a * self.answers_b
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, s: usize, t: usize, y: usize, z: usize) -> usize {
        ((s * self.questions_b + t) * self.answers_a + y) * self.answers_b + z
    }

    /// All `(s, t, y, z)` in table order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        let sh = *self;
        (0..sh.questions_a).flat_map(move |s| {
            (0..sh.questions_b)
                .flat_map(move |t| (0..sh.answers_a).flat_map(move |y| (0..sh.answers_b).map(move |z| (s, t, y, z))))
        })
    }
}

/// Alice's two answer bits packed as `2 * first + second`; bit `position` 0
/// is the value she claims for the first input of her gate.
pub fn alice_bit(y: usize, position: usize) -> bool {
    debug_assert!(position < 2);
    (y >> (1 - position)) & 1 == 1
}

pub fn alice_answer(first: bool, second: bool) -> usize {
    (usize::from(first) << 1) | usize::from(second)
}

/// A conditional distribution `p(y, z | s, t)` with exact rational entries.
///
/// Construction checks nonnegativity and that every `(s, t)` row sums to 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strategy {
    shape: StrategyShape,
    p: Vec<Rational>,
}

impl Strategy {
    pub fn new(shape: StrategyShape, p: Vec<Rational>) -> Result<Self, StrategyError> {
        if p.len() != shape.len() {
            return Err(StrategyError::Length {
                shape,
                expected: shape.len(),
                got: p.len(),
            });
        }
        let st = Strategy { shape, p };
        st.validate()?;
        Ok(st)
    }

    pub fn from_fn(
        shape: StrategyShape,
        f: impl Fn(usize, usize, usize, usize) -> Rational,
    ) -> Result<Self, StrategyError> {
        let p = shape.entries().map(|(s, t, y, z)| f(s, t, y, z)).collect();
        Strategy::new(shape, p)
    }

    /// Deterministic product strategy: Alice answers `alice(s)`, Bob `bob(t)`.
    pub fn deterministic(shape: StrategyShape, alice: impl Fn(usize) -> usize, bob: impl Fn(usize) -> usize) -> Self {
        Strategy::from_fn(shape, |s, t, y, z| {
            if alice(s) == y && bob(t) == z {
                Rational::one()
            } else {
                Rational::zero()
            }
        })
        .expect("deterministic answers form distributions")
    }

    /// Independent answers drawn from the given per-question marginals.
    pub fn product(
        shape: StrategyShape,
        alice: impl Fn(usize, usize) -> Rational,
        bob: impl Fn(usize, usize) -> Rational,
    ) -> Result<Self, StrategyError> {
        Strategy::from_fn(shape, |s, t, y, z| alice(s, y) * bob(t, z))
    }

    pub fn uniform(shape: StrategyShape) -> Self {
        let w = Rational::new(1.into(), ((shape.answers_a * shape.answers_b) as i64).into());
        Strategy {
            shape,
            p: vec![w; shape.len()],
        }
    }

    fn validate(&self) -> Result<(), StrategyError> {
        let sh = self.shape;
        for s in 0..sh.questions_a {
            for t in 0..sh.questions_b {
                let mut sum = Rational::zero();
                for y in 0..sh.answers_a {
                    for z in 0..sh.answers_b {
                        let v = self.get(s, t, y, z);
                        if v.is_negative() {
                            return Err(StrategyError::Negative { s, t, y, z });
                        }
                        sum += v;
                    }
                }
                if !sum.is_one() {
                    return Err(StrategyError::RowSum {
                        s,
                        t,
                        sum: rational::to_text(&sum),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> StrategyShape {
        self.shape
    }

    #[inline]
    pub fn get(&self, s: usize, t: usize, y: usize, z: usize) -> &Rational {
        &self.p[self.shape.index(s, t, y, z)]
    }

    pub fn table(&self) -> &[Rational] {
        &self.p
    }

    /// `sum_z p(y, z | s, t)` for every `y`.
    pub fn alice_marginal(&self, s: usize, t: usize) -> Vec<Rational> {
        (0..self.shape.answers_a)
            .map(|y| (0..self.shape.answers_b).map(|z| self.get(s, t, y, z)).sum())
            .collect()
    }

    /// `sum_y p(y, z | s, t)` for every `z`.
    pub fn bob_marginal(&self, s: usize, t: usize) -> Vec<Rational> {
        (0..self.shape.answers_b)
            .map(|z| (0..self.shape.answers_a).map(|y| self.get(s, t, y, z)).sum())
            .collect()
    }

    /// Convex combination `(1 - lambda) * self + lambda * other`.
    pub fn mix(&self, other: &Strategy, lambda: &Rational) -> Result<Strategy, StrategyError> {
        if self.shape != other.shape {
            return Err(StrategyError::Length {
                shape: self.shape,
                expected: self.shape.len(),
                got: other.shape.len(),
            });
        }
        let keep = Rational::one() - lambda;
        let p = self
            .p
            .iter()
            .zip(&other.p)
            .map(|(a, b)| a * &keep + b * lambda)
            .collect();
        Strategy::new(self.shape, p)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.p.iter().map(rational::to_f64).collect()
    }

    /// Rounds a floating table to multiples of `1/denominator`, then rescales
    /// each `(s, t)` row so it sums to exactly 1. Negative entries are clamped
    /// to zero before rescaling.
    pub fn rationalize(shape: StrategyShape, table: &[f64], denominator: u64) -> Result<Self, StrategyError> {
        if table.len() != shape.len() {
            return Err(StrategyError::Length {
                shape,
                expected: shape.len(),
                got: table.len(),
            });
        }
        let row = shape.answers_a * shape.answers_b;
        let mut p = Vec::with_capacity(table.len());
        for chunk in table.chunks(row) {
            let mut cells: Vec<Rational> = chunk
                .iter()
                .map(|&x| rational::round_to_denominator(x.max(0.0), denominator))
                .collect();
            let sum: Rational = cells.iter().sum();
            if sum.is_zero() {
                cells = vec![Rational::new(1.into(), (row as i64).into()); row];
            } else {
                for c in &mut cells {
                    *c = &*c / &sum;
                }
            }
            p.extend(cells);
        }
        Strategy::new(shape, p)
    }

    /// Nested `[s][t][y][z]` arrays of `"num/den"` strings.
    pub fn to_json(&self) -> String {
        let sh = self.shape;
        let nested: Vec<Vec<Vec<Vec<String>>>> = (0..sh.questions_a)
            .map(|s| {
                (0..sh.questions_b)
                    .map(|t| {
                        (0..sh.answers_a)
                            .map(|y| {
                                (0..sh.answers_b)
                                    .map(|z| rational::to_text(self.get(s, t, y, z)))
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        serde_json::to_string(&nested).expect("strategy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, StrategyError> {
        let nested: Vec<Vec<Vec<Vec<String>>>> =
            serde_json::from_str(text).map_err(|e| StrategyError::Format(e.to_string()))?;
        let bad = |what: &str| StrategyError::Format(format!("ragged table: {what}"));
        let qa = nested.len();
        let qb = nested.first().map_or(0, Vec::len);
        let aa = nested.first().and_then(|r| r.first()).map_or(0, Vec::len);
        let ab = nested
            .first()
            .and_then(|r| r.first())
            .and_then(|r| r.first())
            .map_or(0, Vec::len);
        let shape = StrategyShape {
            questions_a: qa,
            questions_b: qb,
            answers_a: aa,
            answers_b: ab,
        };
        let mut p = Vec::with_capacity(shape.len());
        for row_s in &nested {
            if row_s.len() != qb {
                return Err(bad("t"));
            }
            for row_t in row_s {
                if row_t.len() != aa {
                    return Err(bad("y"));
                }
                for row_y in row_t {
                    if row_y.len() != ab {
                        return Err(bad("z"));
                    }
                    for cell in row_y {
                        p.push(rational::from_text(cell).map_err(|e| StrategyError::Format(e.to_string()))?);
                    }
                }
            }
        }
        Strategy::new(shape, p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    #[test]
    fn answer_packing() {
        assert_eq!(alice_answer(true, false), 2);
        assert!(alice_bit(2, 0));
        assert!(!alice_bit(2, 1));
        assert!(alice_bit(1, 1));
    }

    #[test]
    fn rejects_bad_rows() {
        let shape = StrategyShape {
            questions_a: 1,
            questions_b: 1,
            answers_a: 1,
            answers_b: 2,
        };
        assert!(matches!(
            Strategy::new(shape, vec![rat(1, 2), rat(1, 3)]),
            Err(StrategyError::RowSum { .. })
        ));
        assert!(matches!(
            Strategy::new(shape, vec![rat(3, 2), rat(-1, 2)]),
            Err(StrategyError::Negative { z: 1, .. })
        ));
        assert!(matches!(
            Strategy::new(shape, vec![rat(1, 1)]),
            Err(StrategyError::Length { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let s = Strategy::uniform(StrategyShape::game(2));
        let back = Strategy::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        assert!(s.to_json().starts_with("[[[[\"1/8\""));
    }

    #[test]
    fn rationalize_renormalizes() {
        let shape = StrategyShape {
            questions_a: 1,
            questions_b: 1,
            answers_a: 1,
            answers_b: 3,
        };
        let s = Strategy::rationalize(shape, &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 1 << 40).unwrap();
        assert_eq!(s.get(0, 0, 0, 0), &rat(1, 3));
    }
}
