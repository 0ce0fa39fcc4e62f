//! Exact rank and nullspace over the rationals via fraction-free (Bareiss)
//! elimination on integer-scaled rows.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::expr::Rational;

/// Integer row-echelon form with pivot columns.
struct Echelon {
    rows: Vec<Vec<BigInt>>,
    pivots: Vec<usize>,
    ncols: usize,
}

fn to_integer_rows(rows: &[Vec<Rational>]) -> Vec<Vec<BigInt>> {
    rows.iter()
        .map(|row| {
            let l = row
                .iter()
                .fold(BigInt::one(), |acc, r| acc.lcm(r.denom()));
            row.iter().map(|r| r.numer() * (&l / r.denom())).collect()
        })
        .collect()
}

fn echelon(rows: &[Vec<Rational>], ncols: usize) -> Echelon {
    let mut m = to_integer_rows(rows);
    let nrows = m.len();
    let mut prev = BigInt::one();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        if r == nrows {
            break;
        }
        let Some(p) = (r..nrows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(p, r);
        let (head, tail) = m.split_at_mut(r + 1);
        let pivot_row = &head[r];
        for row in tail.iter_mut() {
            let lead = row[c].clone();
            for j in c + 1..ncols {
                let num = &pivot_row[c] * &row[j] - &lead * &pivot_row[j];
                let (q, rem) = num.div_rem(&prev);
                debug_assert!(rem.is_zero(), "Bareiss division must be exact");
                row[j] = q;
            }
            row[c] = BigInt::zero();
        }
        prev = m[r][c].clone();
        pivots.push(c);
        r += 1;
    }
    m.truncate(r);
    Echelon {
        rows: m,
        pivots,
        ncols,
    }
}

/// Rank of a rational matrix given by rows of length `ncols`.
pub fn rank(rows: &[Vec<Rational>], ncols: usize) -> usize {
    echelon(rows, ncols).pivots.len()
}

/// Basis of `{v : A v = 0}`, one vector per free column (free entry set to 1).
pub fn nullspace(rows: &[Vec<Rational>], ncols: usize) -> Vec<Vec<Rational>> {
    let ech = echelon(rows, ncols);
    let mut is_pivot = vec![false; ech.ncols];
    for &p in &ech.pivots {
        is_pivot[p] = true;
    }
    let mut basis = Vec::new();
    for free in (0..ech.ncols).filter(|&c| !is_pivot[c]) {
        let mut x = vec![Rational::zero(); ech.ncols];
        x[free] = Rational::one();
        for (k, &pc) in ech.pivots.iter().enumerate().rev() {
            let row = &ech.rows[k];
            let mut s = Rational::zero();
            for j in pc + 1..ech.ncols {
                if !row[j].is_zero() && !x[j].is_zero() {
                    s += Rational::from_integer(row[j].clone()) * &x[j];
                }
            }
            x[pc] = -s / Rational::from_integer(row[pc].clone());
        }
        basis.push(x);
    }
    basis
}
