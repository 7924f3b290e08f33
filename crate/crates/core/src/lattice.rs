//! Exact linear algebra over Q and Z.
//!
//! Rational matrices carry fiber algebras and projections; integer matrices
//! carry K₀ lattices and the maps between them. Everything is exact.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub type Rational = BigRational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("vector is not in the lattice")]
    NotInLattice,
    #[error("cannot parse matrix entry `{0}`")]
    BadEntry(String),
    #[error("entry `{0}` is not an integer")]
    NotIntegral(String),
}

pub fn rational(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

fn parse_rational(s: &str) -> Result<Rational, LatticeError> {
    let bad = || LatticeError::BadEntry(s.to_string());
    let t = s.trim();
    match t.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().map_err(|_| bad())?;
            let q: BigInt = q.trim().parse().map_err(|_| bad())?;
            if q.is_zero() {
                return Err(bad());
            }
            Ok(Rational::new(p, q))
        }
        None => Ok(Rational::from_integer(t.parse().map_err(|_| bad())?)),
    }
}

/// The on-disk matrix shape: row-major entries written as `"p/q"` strings.
#[derive(Serialize, Deserialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    entries: Vec<String>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RationalMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Rational>,
}

impl RationalMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<Rational>) -> Result<Self, LatticeError> {
        if entries.len() != rows * cols {
            return Err(LatticeError::ShapeMismatch(format!("{} entries for a {rows}x{cols} matrix", entries.len())));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: vec![Rational::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { Rational::one() } else { Rational::zero() })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Rational) -> Self {
        let entries = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        Self { rows, cols, entries }
    }

    /// Diagonal 0/1 matrix with `rank` leading ones.
    pub fn leading_diagonal(n: usize, rank: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j && i < rank { Rational::one() } else { Rational::zero() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[Rational] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn entries(&self) -> &[Rational] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Zero::is_zero)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].clone())
    }

    pub fn is_symmetric(&self) -> bool {
        self.is_square() && (0..self.rows).all(|i| (i + 1..self.cols).all(|j| self[(i, j)] == self[(j, i)]))
    }

    pub fn is_idempotent(&self) -> bool {
        self.is_square() && &self.mul(self) == self
    }

    /// Self-adjoint idempotent.
    pub fn is_projection(&self) -> bool {
        self.is_symmetric() && self.is_idempotent()
    }

    fn nonzero_rows(&self) -> Vec<Vec<(usize, &Rational)>> {
        (0..self.rows).map(|i| self.row(i).iter().enumerate().filter(|(_, x)| !x.is_zero()).collect()).collect()
    }

    /// Product that skips zero entries of both factors.
    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matrix product shape mismatch");
        let right = rhs.nonzero_rows();
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for (l, a) in self.row(i).iter().enumerate() {
                if a.is_zero() {
                    continue;
                }
                for &(j, b) in &right[l] {
                    out.entries[i * rhs.cols + j] += a * b;
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "matrix sum shape mismatch");
        let entries = self.entries.iter().zip(&rhs.entries).map(|(a, b)| a + b).collect();
        Self { rows: self.rows, cols: self.cols, entries }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "matrix difference shape mismatch");
        let entries = self.entries.iter().zip(&rhs.entries).map(|(a, b)| a - b).collect();
        Self { rows: self.rows, cols: self.cols, entries }
    }

    pub fn scale(&self, c: &Rational) -> Self {
        Self { rows: self.rows, cols: self.cols, entries: self.entries.iter().map(|a| a * c).collect() }
    }

    pub fn kron(&self, rhs: &Self) -> Self {
        let (r, c) = (rhs.rows, rhs.cols);
        let mut out = Self::zeros(self.rows * r, self.cols * c);
        let cols = out.cols;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = &self[(i, j)];
                if a.is_zero() {
                    continue;
                }
                for k in 0..r {
                    for l in 0..c {
                        let b = &rhs[(k, l)];
                        if !b.is_zero() {
                            out.entries[(i * r + k) * cols + j * c + l] = a * b;
                        }
                    }
                }
            }
        }
        out
    }

    pub fn block_diagonal(blocks: &[&Self]) -> Self {
        let rows = blocks.iter().map(|b| b.rows).sum();
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = Self::zeros(rows, cols);
        let (mut r0, mut c0) = (0, 0);
        for b in blocks {
            for i in 0..b.rows {
                for j in 0..b.cols {
                    out[(r0 + i, c0 + j)] = b[(i, j)].clone();
                }
            }
            r0 += b.rows;
            c0 += b.cols;
        }
        out
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])].clone())
    }

    pub fn trace(&self) -> Rational {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)].clone()).sum()
    }

    /// Rows scaled by the lcm of their denominators.
    fn cleared_rows(&self) -> Vec<Vec<BigInt>> {
        (0..self.rows)
            .map(|i| {
                let row = self.row(i);
                let l = row.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
                row.iter().map(|x| x.numer() * (&l / x.denom())).collect()
            })
            .collect()
    }

    pub fn rank(&self) -> usize {
        bareiss_rank(self.cleared_rows(), self.cols)
    }

    pub fn to_integer(&self) -> Result<IntegerMatrix, LatticeError> {
        let entries = self
            .entries
            .iter()
            .map(|x| if x.is_integer() { Ok(x.to_integer()) } else { Err(LatticeError::NotIntegral(x.to_string())) })
            .collect::<Result<_, _>>()?;
        Ok(IntegerMatrix { rows: self.rows, cols: self.cols, entries })
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.entries.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect()
    }
}

impl Index<(usize, usize)> for RationalMatrix {
    type Output = Rational;
    fn index(&self, (i, j): (usize, usize)) -> &Rational {
        &self.entries[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for RationalMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Rational {
        &mut self.entries[i * self.cols + j]
    }
}

impl fmt::Display for RationalMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_grid(f, self.rows, self.cols, |i, j| self[(i, j)].to_string())
    }
}

impl Serialize for RationalMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        MatrixJson { rows: self.rows, cols: self.cols, entries: self.entries.iter().map(|x| x.to_string()).collect() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for RationalMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = MatrixJson::deserialize(d)?;
        let entries = raw.entries.iter().map(|e| parse_rational(e)).collect::<Result<Vec<_>, _>>();
        entries.and_then(|e| Self::new(raw.rows, raw.cols, e)).map_err(serde::de::Error::custom)
    }
}

fn write_grid(f: &mut fmt::Formatter<'_>, rows: usize, cols: usize, cell: impl Fn(usize, usize) -> String) -> fmt::Result {
    let cells: Vec<Vec<String>> = (0..rows).map(|i| (0..cols).map(|j| cell(i, j)).collect()).collect();
    let width = cells.iter().flatten().map(String::len).max().unwrap_or(1);
    for row in &cells {
        let line: Vec<String> = row.iter().map(|c| format!("{c:>width$}")).collect();
        writeln!(f, "[{}]", line.join(" "))?;
    }
    Ok(())
}

/// Fraction-free elimination; every intermediate entry is a minor of the input.
fn bareiss_rank(mut a: Vec<Vec<BigInt>>, cols: usize) -> usize {
    let rows = a.len();
    let mut rank = 0;
    let mut prev = BigInt::one();
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let Some(p) = (rank..rows).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        a.swap(rank, p);
        let pivot = a[rank][c].clone();
        let (top, rest) = a.split_at_mut(rank + 1);
        let prow = &top[rank];
        for row in rest.iter_mut() {
            let lead = row[c].clone();
            for j in c + 1..cols {
                let v = &row[j] * &pivot - &lead * &prow[j];
                row[j] = if prev.is_one() { v } else { v / &prev };
            }
            row[c] = BigInt::zero();
        }
        prev = pivot;
        rank += 1;
    }
    rank
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct IntegerMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<BigInt>,
}

/// `h = u * m` with `u` unimodular and `h` in row Hermite normal form.
#[derive(Clone, Debug)]
pub struct HermiteForm {
    pub h: IntegerMatrix,
    pub u: IntegerMatrix,
    pub rank: usize,
}

/// `s = u * m * v` with `u`, `v` unimodular and `s` diagonal, each diagonal
/// entry dividing the next.
#[derive(Clone, Debug)]
pub struct SmithForm {
    pub s: IntegerMatrix,
    pub u: IntegerMatrix,
    pub v: IntegerMatrix,
}

impl SmithForm {
    pub fn invariant_factors(&self) -> Vec<BigInt> {
        (0..self.s.rows.min(self.s.cols)).map(|i| self.s[(i, i)].clone()).filter(|d| !d.is_zero()).collect()
    }
}

impl IntegerMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<BigInt>) -> Result<Self, LatticeError> {
        if entries.len() != rows * cols {
            return Err(LatticeError::ShapeMismatch(format!("{} entries for a {rows}x{cols} matrix", entries.len())));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: vec![BigInt::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = BigInt::one();
        }
        m
    }

    /// Builds from equal-length rows; `cols` is used when `rows` is empty.
    pub fn from_rows<T: Into<BigInt> + Clone>(rows: &[Vec<T>], cols: usize) -> Result<Self, LatticeError> {
        let mut entries = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(LatticeError::ShapeMismatch(format!("row of length {} in a {cols}-column matrix", r.len())));
            }
            entries.extend(r.iter().cloned().map(Into::into));
        }
        Ok(Self { rows: rows.len(), cols, entries })
    }

    pub fn from_columns(columns: &[Vec<BigInt>], rows: usize) -> Result<Self, LatticeError> {
        Ok(Self::from_rows(columns, rows)?.transpose())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[BigInt] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<BigInt> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<BigInt>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matrix product shape mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = &self[(i, l)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    let b = &rhs[(l, j)];
                    if !b.is_zero() {
                        out[(i, j)] += a * b;
                    }
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[BigInt]) -> Vec<BigInt> {
        assert_eq!(self.cols, v.len(), "matrix-vector shape mismatch");
        (0..self.rows).map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn to_rational(&self) -> RationalMatrix {
        RationalMatrix { rows: self.rows, cols: self.cols, entries: self.entries.iter().cloned().map(Rational::from_integer).collect() }
    }

    pub fn rank(&self) -> usize {
        bareiss_rank(self.to_rows(), self.cols)
    }

    pub fn has_full_column_rank(&self) -> bool {
        self.rank() == self.cols
    }

    pub fn determinant(&self) -> Result<BigInt, LatticeError> {
        if self.rows != self.cols {
            return Err(LatticeError::ShapeMismatch("determinant of a non-square matrix".into()));
        }
        let n = self.rows;
        let mut a = self.to_rows();
        let mut sign = BigInt::one();
        let mut prev = BigInt::one();
        for c in 0..n {
            let Some(p) = (c..n).find(|&i| !a[i][c].is_zero()) else {
                return Ok(BigInt::zero());
            };
            if p != c {
                a.swap(p, c);
                sign = -sign;
            }
            for i in c + 1..n {
                for j in c + 1..n {
                    a[i][j] = (&a[i][j] * &a[c][c] - &a[i][c] * &a[c][j]) / &prev;
                }
                a[i][c] = BigInt::zero();
            }
            prev = a[c][c].clone();
        }
        Ok(sign * if n == 0 { BigInt::one() } else { a[n - 1][n - 1].clone() })
    }

    pub fn is_unimodular(&self) -> bool {
        self.determinant().map(|d| d.abs().is_one()).unwrap_or(false)
    }

    pub fn hnf(&self) -> HermiteForm {
        let (m, n) = (self.rows, self.cols);
        let mut h = self.to_rows();
        let mut u = Self::identity(m).to_rows();
        let mut r = 0;
        for c in 0..n {
            if r == m {
                break;
            }
            loop {
                let pick = (r..m).filter(|&i| !h[i][c].is_zero()).min_by(|&a, &b| h[a][c].abs().cmp(&h[b][c].abs()));
                let Some(p) = pick else { break };
                h.swap(r, p);
                u.swap(r, p);
                let mut clean = true;
                for i in r + 1..m {
                    if h[i][c].is_zero() {
                        continue;
                    }
                    let q = h[i][c].div_floor(&h[r][c]);
                    sub_row(&mut h, i, r, &q);
                    sub_row(&mut u, i, r, &q);
                    clean &= h[i][c].is_zero();
                }
                if clean {
                    break;
                }
            }
            if h[r][c].is_zero() {
                continue;
            }
            if h[r][c].is_negative() {
                negate_row(&mut h, r);
                negate_row(&mut u, r);
            }
            for i in 0..r {
                let q = h[i][c].div_floor(&h[r][c]);
                if !q.is_zero() {
                    sub_row(&mut h, i, r, &q);
                    sub_row(&mut u, i, r, &q);
                }
            }
            r += 1;
        }
        HermiteForm {
            h: Self::from_rows(&h, n).expect("rows keep their width"),
            u: Self::from_rows(&u, m).expect("rows keep their width"),
            rank: r,
        }
    }

    pub fn snf(&self) -> SmithForm {
        let (m, n) = (self.rows, self.cols);
        let mut s = self.to_rows();
        let mut u = Self::identity(m).to_rows();
        let mut v = Self::identity(n).to_rows();
        for t in 0..m.min(n) {
            loop {
                let pick = (t..m)
                    .flat_map(|i| (t..n).map(move |j| (i, j)))
                    .filter(|&(i, j)| !s[i][j].is_zero())
                    .min_by(|&(a, b), &(c, d)| s[a][b].abs().cmp(&s[c][d].abs()));
                let Some((pi, pj)) = pick else { break };
                s.swap(t, pi);
                u.swap(t, pi);
                swap_cols(&mut s, t, pj);
                swap_cols(&mut v, t, pj);
                let mut clean = true;
                for i in t + 1..m {
                    if !s[i][t].is_zero() {
                        let q = s[i][t].div_floor(&s[t][t]);
                        sub_row(&mut s, i, t, &q);
                        sub_row(&mut u, i, t, &q);
                        clean &= s[i][t].is_zero();
                    }
                }
                for j in t + 1..n {
                    if !s[t][j].is_zero() {
                        let q = s[t][j].div_floor(&s[t][t]);
                        sub_col(&mut s, j, t, &q);
                        sub_col(&mut v, j, t, &q);
                        clean &= s[t][j].is_zero();
                    }
                }
                if !clean {
                    continue;
                }
                let stray = (t + 1..m).find(|&i| (t + 1..n).any(|j| !s[i][j].is_multiple_of(&s[t][t])));
                match stray {
                    Some(i) => {
                        add_row(&mut s, t, i);
                        add_row(&mut u, t, i);
                    }
                    None => break,
                }
            }
            if s[t][t].is_negative() {
                negate_row(&mut s, t);
                negate_row(&mut u, t);
            }
        }
        SmithForm {
            s: Self::from_rows(&s, n).expect("rows keep their width"),
            u: Self::from_rows(&u, m).expect("rows keep their width"),
            v: Self::from_rows(&v, n).expect("rows keep their width"),
        }
    }

    /// The lattice of integer vectors `x` with `self * x = 0`.
    pub fn kernel_basis(&self) -> Lattice {
        let hf = self.transpose().hnf();
        let gens: Vec<Vec<BigInt>> = (hf.rank..self.cols).map(|i| hf.u.row(i).to_vec()).collect();
        Lattice::from_generators(&Self::from_rows(&gens, self.cols).expect("rows keep their width"))
    }
}

fn sub_row(a: &mut [Vec<BigInt>], target: usize, source: usize, q: &BigInt) {
    let src = a[source].clone();
    for (x, y) in a[target].iter_mut().zip(&src) {
        *x -= q * y;
    }
}

fn add_row(a: &mut [Vec<BigInt>], target: usize, source: usize) {
    let src = a[source].clone();
    for (x, y) in a[target].iter_mut().zip(&src) {
        *x += y;
    }
}

fn negate_row(a: &mut [Vec<BigInt>], r: usize) {
    for x in a[r].iter_mut() {
        *x = -std::mem::take(x);
    }
}

fn sub_col(a: &mut [Vec<BigInt>], target: usize, source: usize, q: &BigInt) {
    for row in a.iter_mut() {
        let d = q * &row[source];
        row[target] -= d;
    }
}

fn swap_cols(a: &mut [Vec<BigInt>], i: usize, j: usize) {
    if i != j {
        for row in a.iter_mut() {
            row.swap(i, j);
        }
    }
}

impl Index<(usize, usize)> for IntegerMatrix {
    type Output = BigInt;
    fn index(&self, (i, j): (usize, usize)) -> &BigInt {
        &self.entries[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for IntegerMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut BigInt {
        &mut self.entries[i * self.cols + j]
    }
}

impl fmt::Display for IntegerMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_grid(f, self.rows, self.cols, |i, j| self[(i, j)].to_string())
    }
}

impl Serialize for IntegerMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        MatrixJson { rows: self.rows, cols: self.cols, entries: self.entries.iter().map(|x| x.to_string()).collect() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for IntegerMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        RationalMatrix::deserialize(d)?.to_integer().map_err(serde::de::Error::custom)
    }
}

/// A sublattice of Zᵈ kept as the nonzero rows of its Hermite normal form.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct Lattice {
    ambient_dim: usize,
    basis: IntegerMatrix,
}

impl Lattice {
    pub fn full(d: usize) -> Self {
        Self { ambient_dim: d, basis: IntegerMatrix::identity(d) }
    }

    pub fn from_generators(gens: &IntegerMatrix) -> Self {
        let hf = gens.hnf();
        let rows: Vec<Vec<BigInt>> = (0..hf.rank).map(|i| hf.h.row(i).to_vec()).collect();
        Self { ambient_dim: gens.cols, basis: IntegerMatrix::from_rows(&rows, gens.cols).expect("rows keep their width") }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn rank(&self) -> usize {
        self.basis.rows
    }

    /// Basis vectors as rows.
    pub fn basis(&self) -> &IntegerMatrix {
        &self.basis
    }

    pub fn basis_vector(&self, i: usize) -> &[BigInt] {
        self.basis.row(i)
    }

    /// Coordinates of `v` in the Hermite basis.
    pub fn solve(&self, v: &[BigInt]) -> Result<Vec<BigInt>, LatticeError> {
        if v.len() != self.ambient_dim {
            return Err(LatticeError::ShapeMismatch(format!("vector of length {} in a rank-{} ambient", v.len(), self.ambient_dim)));
        }
        let mut residual = v.to_vec();
        let mut coords = Vec::with_capacity(self.rank());
        for i in 0..self.rank() {
            let row = self.basis.row(i);
            let c = row.iter().position(|x| !x.is_zero()).expect("Hermite rows are nonzero");
            let (q, r) = residual[c].div_rem(&row[c]);
            if !r.is_zero() {
                return Err(LatticeError::NotInLattice);
            }
            for (x, b) in residual.iter_mut().zip(row) {
                *x -= &q * b;
            }
            coords.push(q);
        }
        if residual.iter().all(Zero::is_zero) {
            Ok(coords)
        } else {
            Err(LatticeError::NotInLattice)
        }
    }

    pub fn contains(&self, v: &[BigInt]) -> bool {
        self.solve(v).is_ok()
    }

    /// Ambient vector with the given Hermite coordinates.
    pub fn combine(&self, coords: &[BigInt]) -> Vec<BigInt> {
        self.basis.transpose().mul_vec(coords)
    }
}

/// Coordinates of `v` in the basis given by the rows of `basis`, which need not
/// be in Hermite form.
pub fn solve_in_basis(basis: &IntegerMatrix, v: &[BigInt]) -> Result<Vec<BigInt>, LatticeError> {
    let hf = basis.hnf();
    let lattice = Lattice::from_generators(basis);
    let y = lattice.solve(v)?;
    let mut x = vec![BigInt::zero(); basis.rows];
    for (i, yi) in y.iter().enumerate() {
        for (xj, uij) in x.iter_mut().zip(hf.u.row(i)) {
            *xj += yi * uij;
        }
    }
    Ok(x)
}

pub fn solve_in_lattice(lattice: &Lattice, v: &[BigInt]) -> Result<Vec<BigInt>, LatticeError> {
    lattice.solve(v)
}

/// Solves `a x = b` over Q when `a` has full column rank and a solution exists.
pub fn solve_rational(a: &RationalMatrix, b: &[Rational]) -> Option<Vec<Rational>> {
    let (m, n) = (a.rows, a.cols);
    let mut aug: Vec<Vec<Rational>> = (0..m).map(|i| a.row(i).iter().cloned().chain(std::iter::once(b[i].clone())).collect()).collect();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..n {
        let Some(p) = (r..m).find(|&i| !aug[i][c].is_zero()) else { continue };
        aug.swap(r, p);
        let inv = aug[r][c].recip();
        for x in aug[r].iter_mut() {
            *x *= &inv;
        }
        for i in 0..m {
            if i != r && !aug[i][c].is_zero() {
                let f = aug[i][c].clone();
                let src = aug[r].clone();
                for (x, y) in aug[i].iter_mut().zip(&src) {
                    *x -= &f * y;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    if pivots.len() < n || (r..m).any(|i| !aug[i][n].is_zero()) {
        return None;
    }
    Some((0..n).map(|i| aug[i][n].clone()).collect())
}

pub fn to_bigints(v: &[i64]) -> Vec<BigInt> {
    v.iter().map(|&x| BigInt::from(x)).collect()
}

/// Serializers writing exact numbers as decimal or `p/q` strings.
#[allow(clippy::ptr_arg)]
pub mod as_strings {
    use std::fmt::Display;

    use serde::Serializer;

    fn strings<T: Display>(v: &[T]) -> Vec<String> {
        v.iter().map(ToString::to_string).collect()
    }

    pub fn vec<T: Display, S: Serializer>(v: &Vec<T>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(strings(v))
    }

    pub fn nested<T: Display, S: Serializer>(v: &Vec<Vec<T>>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|r| strings(r)))
    }

    pub fn opt_vec<T: Display, S: Serializer>(v: &Option<Vec<T>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => s.collect_seq(strings(v)),
            None => s.serialize_none(),
        }
    }

    pub fn opt_nested<T: Display, S: Serializer>(v: &Vec<Option<Vec<T>>>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|r| r.as_ref().map(|r| strings(r))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn im(rows: &[Vec<i64>]) -> IntegerMatrix {
        let cols = rows.first().map_or(0, Vec::len);
        IntegerMatrix::from_rows(rows, cols).unwrap()
    }

    fn gauss_rank(m: &IntegerMatrix) -> usize {
        let a = m.to_rational();
        let mut rows: Vec<Vec<Rational>> = (0..a.rows()).map(|i| a.row(i).to_vec()).collect();
        let mut r = 0;
        for c in 0..a.cols() {
            let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else { continue };
            rows.swap(r, p);
            for i in r + 1..rows.len() {
                let f = &rows[i][c] / &rows[r][c];
                let src = rows[r].clone();
                for (x, y) in rows[i].iter_mut().zip(&src) {
                    *x -= &f * y;
                }
            }
            r += 1;
        }
        r
    }

    #[test]
    fn rank_of_small_matrices() {
        assert_eq!(im(&[vec![1, 2], vec![2, 4]]).rank(), 1);
        assert_eq!(im(&[vec![0, 0], vec![0, 0]]).rank(), 0);
        assert_eq!(IntegerMatrix::identity(4).rank(), 4);
    }

    #[test]
    fn hnf_is_echelon_with_reduced_entries() {
        let m = im(&[vec![2, 4, 4], vec![-6, 6, 12], vec![10, -4, -16]]);
        let hf = m.hnf();
        assert_eq!(hf.u.mul(&m), hf.h);
        assert!(hf.u.is_unimodular());
        let h = &hf.h;
        assert_eq!(hf.rank, 3);
        assert_eq!((h[(0, 0)].clone(), h[(1, 1)].clone(), h[(2, 2)].clone()), (2.into(), 6.into(), 12.into()));
    }

    #[test]
    fn snf_of_known_matrix() {
        let m = im(&[vec![2, 4, 4], vec![-6, 6, 12], vec![10, -4, -16]]);
        let sf = m.snf();
        assert_eq!(sf.u.mul(&m).mul(&sf.v), sf.s);
        assert_eq!(sf.invariant_factors(), to_bigints(&[2, 6, 12]));
    }

    #[test]
    fn kernel_of_difference_functional() {
        let lat = im(&[vec![1, 1, -2]]).kernel_basis();
        assert_eq!(lat.rank(), 2);
        assert!(lat.contains(&to_bigints(&[2, 0, 1])));
        assert!(lat.contains(&to_bigints(&[1, 1, 1])));
        assert_eq!(lat.solve(&to_bigints(&[1, 0, 0])), Err(LatticeError::NotInLattice));
    }

    #[test]
    fn kernel_of_empty_matrix_is_everything() {
        let lat = IntegerMatrix::zeros(0, 3).kernel_basis();
        assert_eq!(lat, Lattice::full(3));
    }

    #[test]
    fn solve_in_non_hermite_basis() {
        let basis = im(&[vec![1, 1, 0], vec![0, 1, 1]]);
        assert_eq!(solve_in_basis(&basis, &to_bigints(&[2, 5, 3])).unwrap(), to_bigints(&[2, 3]));
        assert!(solve_in_basis(&basis, &to_bigints(&[1, 0, 1])).is_err());
    }

    #[test]
    fn matrix_json_round_trip() {
        let m = RationalMatrix::from_fn(2, 2, |i, j| rational(i as i64 + 1, j as i64 + 2));
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"1/2\""));
        let back: RationalMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        let bad = serde_json::from_str::<IntegerMatrix>(&text);
        assert!(bad.is_err());
    }

    #[test]
    fn kron_and_projection_checks() {
        let half = RationalMatrix::from_fn(2, 2, |_, _| rational(1, 2));
        assert!(half.is_projection());
        let k = half.kron(&RationalMatrix::identity(2));
        assert!(k.is_projection());
        assert_eq!(k.rank(), 2);
        assert_eq!(k[(0, 2)], rational(1, 2));
        assert_eq!(k[(0, 1)], int(0));
    }

    #[test]
    fn rational_solve() {
        let a = RationalMatrix::from_fn(3, 2, |i, j| int((i + j) as i64 + if i == j { 1 } else { 0 }));
        let x = vec![rational(1, 3), int(2)];
        let b: Vec<Rational> = (0..3).map(|i| a.row(i).iter().zip(&x).map(|(p, q)| p * q).sum()).collect();
        assert_eq!(solve_rational(&a, &b), Some(x));
    }

    fn small_matrix() -> impl Strategy<Value = IntegerMatrix> {
        (1usize..5, 1usize..5).prop_flat_map(|(r, c)| {
            prop::collection::vec(-6i64..7, r * c).prop_map(move |e| IntegerMatrix::new(r, c, to_bigints(&e)).unwrap())
        })
    }

    proptest! {
        #[test]
        fn bareiss_agrees_with_gauss(m in small_matrix()) {
            prop_assert_eq!(m.rank(), gauss_rank(&m));
        }

        #[test]
        fn hnf_transform_is_unimodular(m in small_matrix()) {
            let hf = m.hnf();
            prop_assert!(hf.u.is_unimodular());
            prop_assert_eq!(hf.u.mul(&m), hf.h.clone());
            prop_assert_eq!(hf.rank, m.rank());
            prop_assert_eq!(hf.h.hnf().h, hf.h);
        }

        #[test]
        fn snf_transforms_are_unimodular(m in small_matrix()) {
            let sf = m.snf();
            prop_assert!(sf.u.is_unimodular());
            prop_assert!(sf.v.is_unimodular());
            prop_assert_eq!(sf.u.mul(&m).mul(&sf.v), sf.s.clone());
            let d = sf.invariant_factors();
            prop_assert_eq!(d.len(), m.rank());
            for w in d.windows(2) {
                prop_assert!(w[1].is_multiple_of(&w[0]));
            }
        }

        #[test]
        fn kernel_vectors_are_annihilated(m in small_matrix()) {
            let lat = m.kernel_basis();
            prop_assert_eq!(lat.rank() + m.rank(), m.cols());
            for i in 0..lat.rank() {
                prop_assert!(m.mul_vec(lat.basis_vector(i)).iter().all(Zero::is_zero));
            }
        }
    }
}
