//! Independent oracles shared by the integration tests. Nothing here calls
//! the solvers it is used to check.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use nsqip::algnum::{NfElement, NfMatrix};
use nsqip::game::Game;
use nsqip::lp::{LinearProgram, Relation, Sense};
use nsqip::rational::{self, Rational};

/// Row-reduces `[a | b]` in place; returns pivot columns, or `None` when the
/// system is inconsistent.
fn rref(a: &mut [Vec<Rational>], b: &mut [Rational]) -> Option<Vec<usize>> {
    let (rows, cols) = (a.len(), a.first().map_or(0, Vec::len));
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        a.swap(r, p);
        b.swap(r, p);
        let inv = Rational::one() / &a[r][c];
        for x in a[r].iter_mut() {
            *x *= &inv;
        }
        b[r] *= &inv;
        for i in 0..rows {
            if i != r && !a[i][c].is_zero() {
                let f = a[i][c].clone();
                let pivot_row = a[r].clone();
                for (x, p) in a[i].iter_mut().zip(&pivot_row).take(cols) {
                    *x -= &f * p;
                }
                let d = &f * &b[r];
                b[i] -= d;
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows {
            break;
        }
    }
    if (r..rows).any(|i| !b[i].is_zero()) {
        return None;
    }
    Some(pivots)
}

fn to_integer_row(row: &[Rational]) -> Vec<BigInt> {
    let lcm = row.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
    row.iter()
        .map(|x| (x * Rational::from_integer(lcm.clone())).to_integer())
        .collect()
}

fn primitive(mut v: Vec<BigInt>) -> Vec<BigInt> {
    let g = v.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x));
    if !g.is_zero() && !g.is_one() {
        for x in v.iter_mut() {
            *x /= &g;
        }
    }
    v
}

fn dot(a: &[BigInt], b: &[BigInt]) -> BigInt {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Vertices of `{x >= 0 : E x = f}` by the double description method on the
/// homogenized cone over the affine hull. The polytope must be bounded.
pub fn polytope_vertices(e: &[Vec<Rational>], f: &[Rational], n: usize) -> Vec<Vec<Rational>> {
    let mut a = e.to_vec();
    let mut b = f.to_vec();
    let Some(pivots) = rref(&mut a, &mut b) else {
        return Vec::new();
    };
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    let m = free.len();
    let dim = m + 1;
    assert!(n < 128, "zero sets are u128 masks");
    // Cone coordinates z = (t, y); x_free = y / t, x_pivot = b - A_free y / t.
    let mut cons: Vec<Vec<BigInt>> = Vec::new();
    for i in 0..dim {
        let mut row = vec![BigInt::zero(); dim];
        row[i] = BigInt::one();
        cons.push(row);
    }
    for (r, _) in pivots.iter().enumerate() {
        let mut row = vec![b[r].clone()];
        row.extend(free.iter().map(|&c| -a[r][c].clone()));
        cons.push(to_integer_row(&row));
    }
    let mut rays: Vec<(Vec<BigInt>, u128)> = (0..dim)
        .map(|i| {
            let mut r = vec![BigInt::zero(); dim];
            r[i] = BigInt::one();
            let zeros = ((1u128 << dim) - 1) & !(1u128 << i);
            (r, zeros)
        })
        .collect();
    for (ci, c) in cons.iter().enumerate().skip(dim) {
        let vals: Vec<BigInt> = rays.iter().map(|(r, _)| dot(c, r)).collect();
        let pos: Vec<usize> = (0..rays.len()).filter(|&i| vals[i].is_positive()).collect();
        let neg: Vec<usize> = (0..rays.len()).filter(|&i| vals[i].is_negative()).collect();
        let mut next: Vec<(Vec<BigInt>, u128)> = Vec::new();
        for &p in &pos {
            for &q in &neg {
                let common = rays[p].1 & rays[q].1;
                if (common.count_ones() as usize) + 2 < dim {
                    continue;
                }
                let adjacent = rays
                    .iter()
                    .enumerate()
                    .all(|(k, (_, z))| k == p || k == q || z & common != common);
                if !adjacent {
                    continue;
                }
                let r: Vec<BigInt> = rays[q]
                    .0
                    .iter()
                    .zip(&rays[p].0)
                    .map(|(rq, rp)| &vals[p] * rq - &vals[q] * rp)
                    .collect();
                next.push((primitive(r), common | (1u128 << ci)));
            }
        }
        for (i, (r, z)) in rays.into_iter().enumerate() {
            if vals[i].is_zero() {
                next.push((r, z | (1u128 << ci)));
            } else if vals[i].is_positive() {
                next.push((r, z));
            }
        }
        rays = next;
    }
    rays.into_iter()
        .filter(|(r, _)| r[0].is_positive())
        .map(|(r, _)| {
            let t = Rational::from_integer(r[0].clone());
            let y: Vec<Rational> = r[1..].iter().map(|v| Rational::from_integer(v.clone()) / &t).collect();
            let mut x = vec![Rational::zero(); n];
            for (k, &c) in free.iter().enumerate() {
                x[c] = y[k].clone();
            }
            for (row, &pc) in pivots.iter().enumerate() {
                let s: Rational = free.iter().enumerate().map(|(k, &c)| &a[row][c] * &y[k]).sum();
                x[pc] = &b[row] - s;
            }
            x
        })
        .collect()
}

/// No-signaling value of a game as the best vertex of the polytope of
/// conditional distributions `p(y, z | s, t)`.
pub fn ns_value_by_vertices(g: &Game) -> (Rational, usize) {
    let sh = g.shape();
    let n = sh.len();
    let mut e = Vec::new();
    let mut f = Vec::new();
    let row = |terms: Vec<(usize, i64)>| {
        let mut r = vec![Rational::zero(); n];
        for (i, c) in terms {
            r[i] += rational::int(c);
        }
        r
    };
    for s in 0..sh.questions_a {
        for t in 0..sh.questions_b {
            let terms = (0..sh.answers_a)
                .flat_map(|y| (0..sh.answers_b).map(move |z| (y, z)))
                .map(|(y, z)| (sh.index(s, t, y, z), 1))
                .collect();
            e.push(row(terms));
            f.push(Rational::one());
        }
    }
    for s in 0..sh.questions_a {
        for y in 0..sh.answers_a {
            for t in 1..sh.questions_b {
                let mut terms: Vec<(usize, i64)> = (0..sh.answers_b).map(|z| (sh.index(s, t, y, z), 1)).collect();
                terms.extend((0..sh.answers_b).map(|z| (sh.index(s, 0, y, z), -1)));
                e.push(row(terms));
                f.push(Rational::zero());
            }
        }
    }
    for t in 0..sh.questions_b {
        for z in 0..sh.answers_b {
            for s in 1..sh.questions_a {
                let mut terms: Vec<(usize, i64)> = (0..sh.answers_a).map(|y| (sh.index(s, t, y, z), 1)).collect();
                terms.extend((0..sh.answers_a).map(|y| (sh.index(0, t, y, z), -1)));
                e.push(row(terms));
                f.push(Rational::zero());
            }
        }
    }
    let vertices = polytope_vertices(&e, &f, n);
    let weight = Rational::new(BigInt::one(), BigInt::from(sh.questions_a * sh.questions_b));
    let best = vertices
        .iter()
        .map(|x| {
            let v: Rational = sh
                .entries()
                .map(|(s, t, y, z)| g.predicate(s, t, y, z) * &x[sh.index(s, t, y, z)])
                .sum();
            v * &weight
        })
        .max()
        .expect("polytope is nonempty");
    (best, vertices.len())
}

/// Optimum of a small bounded LP by trying every basis: each choice of `n`
/// tight constraints among the rows and the bounds `x_j >= 0`.
pub fn lp_by_enumeration(lp: &LinearProgram) -> Option<Rational> {
    let n = lp.num_vars();
    let mut rows: Vec<(Vec<Rational>, Rational, Relation)> = lp
        .constraints()
        .iter()
        .map(|c| {
            let mut r = vec![Rational::zero(); n];
            for (i, v) in &c.terms {
                r[*i] += v;
            }
            (r, c.rhs.clone(), c.relation)
        })
        .collect();
    for j in 0..n {
        let mut r = vec![Rational::zero(); n];
        r[j] = Rational::one();
        rows.push((r, Rational::zero(), Relation::Ge));
    }
    let total = rows.len();
    let mut best: Option<Rational> = None;
    let mut choice: Vec<usize> = (0..n).collect();
    loop {
        let mut a: Vec<Vec<Rational>> = choice.iter().map(|&i| rows[i].0.clone()).collect();
        let mut b: Vec<Rational> = choice.iter().map(|&i| rows[i].1.clone()).collect();
        if let Some(p) = rref(&mut a, &mut b) {
            if p.len() == n {
                let mut x = vec![Rational::zero(); n];
                for (r, &c) in p.iter().enumerate() {
                    x[c] = b[r].clone();
                }
                if lp.is_feasible(&x) {
                    let v = lp.evaluate(&x);
                    let better = match (&best, lp.sense()) {
                        (None, _) => true,
                        (Some(b), Sense::Maximize) => v > *b,
                        (Some(b), Sense::Minimize) => v < *b,
                    };
                    if better {
                        best = Some(v);
                    }
                }
            }
        }
        // Next n-subset in lexicographic order.
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if choice[i] < total - n + i {
                break;
            }
        }
        choice[i] += 1;
        for j in i + 1..n {
            choice[j] = choice[j - 1] + 1;
        }
        if n == 0 {
            return best;
        }
    }
}

/// Fraction-free (Bareiss) determinant over a number field.
pub fn bareiss_det(m: &NfMatrix) -> NfElement {
    let n = m.dim();
    let f = m.field().clone();
    if n == 0 {
        return NfElement::one(&f);
    }
    let mut a: Vec<Vec<NfElement>> = (0..n).map(|i| (0..n).map(|j| m.get(i, j).clone()).collect()).collect();
    let mut prev = NfElement::one(&f);
    let mut negate = false;
    for k in 0..n - 1 {
        if a[k][k].is_zero() {
            let Some(p) = (k + 1..n).find(|&i| !a[i][k].is_zero()) else {
                return NfElement::zero(&f);
            };
            a.swap(k, p);
            negate = !negate;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let num = &(&a[i][j] * &a[k][k]) - &(&a[i][k] * &a[k][j]);
                a[i][j] = num.try_div(&prev).expect("pivot is nonzero");
            }
        }
        prev = a[k][k].clone();
    }
    let d = a[n - 1][n - 1].clone();
    if negate {
        -&d
    } else {
        d
    }
}

/// `det(x I - M)` coefficients (lowest first) by interpolating Bareiss
/// determinants at `x = 0, 1, .., n`.
pub fn char_poly_by_interpolation(m: &NfMatrix) -> Vec<NfElement> {
    let n = m.dim();
    let f = m.field().clone();
    let xs: Vec<Rational> = (0..=n as i64).map(rational::int).collect();
    let ys: Vec<NfElement> = xs
        .iter()
        .map(|x| {
            let shifted = NfMatrix::scalar(&f, n, &NfElement::from_rational(&f, x.clone()))
                .sub(m)
                .unwrap();
            bareiss_det(&shifted)
        })
        .collect();
    // Newton divided differences.
    let mut coef = ys.clone();
    for level in 1..=n {
        for i in (level..=n).rev() {
            let diff = &coef[i] - &coef[i - 1];
            coef[i] = diff.scale(&(Rational::one() / (&xs[i] - &xs[i - level])));
        }
    }
    // Expand c_0 + c_1 (x - x_0) + c_2 (x - x_0)(x - x_1) + ...
    let mut out = vec![NfElement::zero(&f); n + 1];
    let mut basis = vec![NfElement::one(&f)];
    for (k, c) in coef.iter().enumerate() {
        for (i, b) in basis.iter().enumerate() {
            out[i] = &out[i] + &(c * b);
        }
        let mut next = vec![NfElement::zero(&f); basis.len() + 1];
        for (i, b) in basis.iter().enumerate() {
            next[i + 1] = &next[i + 1] + b;
            next[i] = &next[i] - &b.scale(&xs[k]);
        }
        basis = next;
    }
    out
}
