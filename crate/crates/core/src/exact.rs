//! Exact rational helpers: conversion, Gaussian elimination, and a small
//! feasibility LP used for open-simplex disjointness.

#![allow(clippy::needless_range_loop)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Q = BigRational;

pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn qr(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// Exact binary value of a finite double.
pub fn qf(x: f64) -> Q {
    Q::from_float(x).expect("finite double")
}

pub fn to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or_else(|| {
        // Huge numerators/denominators: divide in floating point after scaling.
        let n = x.numer().to_f64().unwrap_or(f64::NAN);
        let d = x.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

pub fn vec_f64(v: &[Q]) -> Vec<f64> {
    v.iter().map(to_f64).collect()
}

/// Parse "p", "p/q", or a decimal literal into an exact rational.
pub fn parse_q(s: &str) -> Option<Q> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let n: BigInt = a.trim().parse().ok()?;
        let d: BigInt = b.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Q::new(n, d));
    }
    if let Ok(n) = s.parse::<BigInt>() {
        return Some(Q::from_integer(n));
    }
    // decimal: 1.25, -0.5, 3e-2
    let x: f64 = s.parse().ok()?;
    if !x.is_finite() {
        return None;
    }
    let (mant, exp) = match s.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, mant) = match mant.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mant.strip_prefix('+').unwrap_or(mant)),
    };
    let (ip, fp) = mant.split_once('.').unwrap_or((mant, ""));
    let digits: BigInt = format!("{ip}{fp}").parse().ok()?;
    let scale = exp - fp.len() as i32;
    let ten = BigInt::from(10);
    let mut q = Q::from_integer(digits);
    if scale >= 0 {
        q *= Q::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        q /= Q::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if neg { -q } else { q })
}

pub fn fmt_q(x: &Q) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Rank of a dense rational matrix (rows of equal length).
pub fn rank(rows: &[Vec<Q>]) -> usize {
    let mut m: Vec<Vec<Q>> = rows.to_vec();
    let ncols = m.first().map_or(0, |r| r.len());
    let mut r = 0;
    for c in 0..ncols {
        let Some(p) = (r..m.len()).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let piv = m[r][c].clone();
        for i in (r + 1)..m.len() {
            if m[i][c].is_zero() {
                continue;
            }
            let f = &m[i][c] / &piv;
            for j in c..ncols {
                let t = &f * &m[r][j];
                m[i][j] -= t;
            }
        }
        r += 1;
        if r == m.len() {
            break;
        }
    }
    r
}

/// Solve `A x = b` for a possibly non-square system. Returns the unique
/// solution when the system is consistent with full column rank, `None`
/// otherwise.
pub fn solve_unique(a: &[Vec<Q>], b: &[Q]) -> Option<Vec<Q>> {
    let nrows = a.len();
    let ncols = a.first().map_or(0, |r| r.len());
    let mut m: Vec<Vec<Q>> = a
        .iter()
        .zip(b)
        .map(|(row, bi)| {
            let mut r = row.clone();
            r.push(bi.clone());
            r
        })
        .collect();
    let mut piv_cols = Vec::with_capacity(ncols);
    let mut r = 0;
    for c in 0..ncols {
        let p = (r..nrows).find(|&i| !m[i][c].is_zero())?;
        m.swap(r, p);
        let inv = m[r][c].recip();
        for j in c..=ncols {
            m[r][j] *= &inv;
        }
        for i in 0..nrows {
            if i == r || m[i][c].is_zero() {
                continue;
            }
            let f = m[i][c].clone();
            for j in c..=ncols {
                let t = &f * &m[r][j];
                m[i][j] -= t;
            }
        }
        piv_cols.push(c);
        r += 1;
    }
    if (r..nrows).any(|i| !m[i][ncols].is_zero()) {
        return None;
    }
    Some((0..ncols).map(|i| m[i][ncols].clone()).collect())
}

/// Maximise `c·x` subject to `A x = b`, `x >= 0` with exact arithmetic.
/// Returns `None` when infeasible, `Some(None)` when unbounded.
pub fn lp_max(a: &[Vec<Q>], b: &[Q], c: &[Q]) -> Option<Option<Q>> {
    let m = a.len();
    let n = c.len();
    // Phase 1 tableau with artificials; rows normalised to b >= 0.
    let mut t: Vec<Vec<Q>> = Vec::with_capacity(m + 1);
    for i in 0..m {
        let sgn = if b[i].is_negative() { -qi(1) } else { qi(1) };
        let mut row: Vec<Q> = a[i].iter().map(|x| x * &sgn).collect();
        for k in 0..m {
            row.push(if k == i { qi(1) } else { qi(0) });
        }
        row.push(&b[i] * &sgn);
        t.push(row);
    }
    let width = n + m + 1;
    let mut basis: Vec<usize> = (n..n + m).collect();
    // phase-1 objective: maximise -sum(artificials)
    let mut obj = vec![Q::zero(); width];
    for row in &t {
        for j in 0..n {
            obj[j] += &row[j];
        }
        obj[width - 1] += &row[width - 1];
    }
    simplex_iterate(&mut t, &mut obj, &mut basis, n + m)?;
    if !obj[width - 1].is_zero() {
        return None;
    }
    // drive remaining artificials out of the basis where possible
    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| !t[i][j].is_zero()) {
                pivot(&mut t, &mut obj, i, j);
                basis[i] = j;
            }
        }
    }
    // phase 2 objective in reduced form
    let mut obj2 = vec![Q::zero(); width];
    obj2[..n].clone_from_slice(&c[..n]);
    for i in 0..m {
        let bj = basis[i];
        if bj < n && !c[bj].is_zero() {
            let f = c[bj].clone();
            for j in 0..width {
                let v = &f * &t[i][j];
                obj2[j] -= v;
            }
        }
    }
    // forbid artificial columns from re-entering
    for row in t.iter_mut() {
        for j in n..n + m {
            row[j] = Q::zero();
        }
    }
    for j in n..n + m {
        obj2[j] = Q::zero();
    }
    match simplex_iterate(&mut t, &mut obj2, &mut basis, n) {
        None => Some(None),
        Some(()) => Some(Some(-obj2[width - 1].clone())),
    }
}

fn pivot(t: &mut [Vec<Q>], obj: &mut [Q], r: usize, c: usize) {
    let inv = t[r][c].recip();
    for x in t[r].iter_mut() {
        *x *= &inv;
    }
    let prow = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i == r || row[c].is_zero() {
            continue;
        }
        let f = row[c].clone();
        for (x, p) in row.iter_mut().zip(&prow) {
            *x -= &f * p;
        }
    }
    if !obj[c].is_zero() {
        let f = obj[c].clone();
        for (x, p) in obj.iter_mut().zip(&prow) {
            *x -= &f * p;
        }
    }
}

/// Bland's rule; `obj[j] > 0` means column j improves. Returns `None` on
/// unboundedness.
fn simplex_iterate(
    t: &mut [Vec<Q>],
    obj: &mut [Q],
    basis: &mut [usize],
    ncols: usize,
) -> Option<()> {
    let w = obj.len() - 1;
    loop {
        let Some(c) = (0..ncols).find(|&j| obj[j].is_positive()) else {
            return Some(());
        };
        let mut best: Option<(usize, Q)> = None;
        for (i, row) in t.iter().enumerate() {
            if row[c].is_positive() {
                let ratio = &row[w] / &row[c];
                let better = match &best {
                    None => true,
                    Some((bi, br)) => ratio < *br || (ratio == *br && basis[i] < basis[*bi]),
                };
                if better {
                    best = Some((i, ratio));
                }
            }
        }
        let (r, _) = best?;
        pivot(t, obj, r, c);
        basis[r] = c;
    }
}

/// Nearest multiple of 2^-bits below `x`.
pub fn round_bits(x: &Q, bits: u32) -> Q {
    let scale = BigInt::one() << bits;
    let n = (x * Q::from_integer(scale.clone())).floor().to_integer();
    Q::new(n, scale)
}

/// Square root of a nonnegative rational to within about 2^-bits
/// (relative), by Newton iteration from the double estimate.
pub fn sqrt_q(a: &Q, bits: u32) -> Q {
    if a.is_zero() {
        return Q::zero();
    }
    let mut x = qf(to_f64(a).sqrt());
    let two = qi(2);
    let mut prec = 50;
    while prec < 2 * bits + 8 {
        x = round_bits(&((&x + a / &x) / &two), 2 * bits + 8);
        prec *= 2;
    }
    x
}

pub fn is_one(x: &Q) -> bool {
    x.is_one()
}

pub fn abs(x: &Q) -> Q {
    x.abs()
}
