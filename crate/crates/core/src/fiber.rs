//! Fibers of the level-n core as explicit subalgebras of M_{Nⁿ}(Q).
//!
//! Matrix indices are base-N words, most significant digit first, where the
//! first digit is the first contraction applied to the fiber point. When a
//! matrix is amplified by k copies, index `w * k + a` is word `w`, copy `a`.

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::lattice::{int, Rational, RationalMatrix};
use crate::spec::{index_word, word_index, MapSpec, PointId, Site, SpecError};

pub const DEFAULT_SIZE_GUARD: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FiberError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("fiber matrices of size {size} exceed the size guard {guard}")]
    SizeGuardExceeded { size: u128, guard: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("position {0:?} listed twice")]
    DuplicatePosition(Vec<usize>),
    #[error("matrix is not a self-adjoint idempotent")]
    NotAProjection,
    #[error("projection is not in the fiber algebra: {0}")]
    NotInFiberAlgebra(String),
    #[error("block {block} has only {capacity} orthogonal minimal projections")]
    CapacityExceeded { block: usize, capacity: u128 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind")]
pub enum BlockKind {
    Compact,
    Singular { branch: PointId, depth: usize, prefix: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Block {
    #[serde(flatten)]
    pub kind: BlockKind,
    /// The block is M_size.
    pub size: u128,
    /// Matrix rank of a minimal projection of the block.
    pub weight: usize,
}

impl Block {
    pub fn is_compact(&self) -> bool {
        matches!(self.kind, BlockKind::Compact)
    }

    pub fn depth(&self) -> Option<usize> {
        match self.kind {
            BlockKind::Compact => None,
            BlockKind::Singular { depth, .. } => Some(depth),
        }
    }

    pub fn branch(&self) -> Option<PointId> {
        match self.kind {
            BlockKind::Compact => None,
            BlockKind::Singular { branch, .. } => Some(branch),
        }
    }

    pub fn tag(&self, spec: &MapSpec, site: Site) -> String {
        match &self.kind {
            BlockKind::Compact => "compact".to_string(),
            BlockKind::Singular { branch, depth, .. } => {
                format!("C({},{},{})", spec.site_label(site), spec.label(*branch), depth)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiberDecomposition {
    pub site: Site,
    pub level: usize,
    pub blocks: Vec<Block>,
    pub dimension: u128,
}

impl FiberDecomposition {
    /// Σ weight · size over blocks; equals `dimension` for a valid fiber.
    pub fn weighted_size(&self) -> u128 {
        self.blocks.iter().map(|b| b.weight as u128 * b.size).sum()
    }

    pub fn is_full_matrix_algebra(&self) -> bool {
        self.blocks.len() == 1 && self.blocks[0].size == self.dimension
    }

    /// Weighted rank Σ m_β ρ_β of a multiplicity vector.
    pub fn weighted_rank(&self, mult: &[BigInt]) -> BigInt {
        self.blocks.iter().zip(mult).map(|(b, m)| m * BigInt::from(b.weight)).sum()
    }

    /// Multiplicities of the identity.
    pub fn identity_class(&self) -> Vec<BigInt> {
        self.blocks.iter().map(|b| BigInt::from(b.size)).collect()
    }
}

pub fn fiber_decomposition(spec: &MapSpec, site: Site, n: usize) -> Result<FiberDecomposition, FiberError> {
    let dimension = spec.power(n).ok_or(SpecError::LevelTooLarge(n))?;
    let compact = Block { kind: BlockKind::Compact, size: spec.backward_count(site, n)?, weight: 1 };
    let mut blocks = vec![compact];
    if let Site::Special(x) = site {
        for p in 1..=n {
            for orbit in spec.pq_orbits(x, p, n - p) {
                blocks.push(Block {
                    kind: BlockKind::Singular { branch: orbit.base, depth: p, prefix: orbit.prefix },
                    size: orbit.suffix_count,
                    weight: orbit.entry.len() - 1,
                });
            }
        }
    }
    Ok(FiberDecomposition { site, level: n, blocks, dimension })
}

/// Index layout of a singular block: `groups[s][l]` is the word
/// prefix·j_l·s for suffix `s` and entry index j_l.
#[derive(Debug, Clone)]
struct Support {
    groups: Vec<Vec<usize>>,
}

impl Support {
    fn multiplicity(&self) -> usize {
        self.groups[0].len()
    }

    /// Support words ordered by (l, s).
    fn words(&self) -> Vec<usize> {
        (0..self.multiplicity()).flat_map(|l| self.groups.iter().map(move |g| g[l])).collect()
    }
}

#[derive(Debug, Clone)]
pub struct FiberMatrices {
    pub classes: Vec<Vec<usize>>,
    pub projection: RationalMatrix,
    /// One central projection per singular block, in block order.
    pub central: Vec<RationalMatrix>,
    supports: Vec<Support>,
}

#[derive(Debug, Clone)]
pub struct Fiber {
    pub decomposition: FiberDecomposition,
    pub matrices: FiberMatrices,
    branch_count: usize,
}

pub fn build_fiber(spec: &MapSpec, site: Site, n: usize, guard: usize) -> Result<Fiber, FiberError> {
    let decomposition = fiber_decomposition(spec, site, n)?;
    if decomposition.dimension > guard as u128 {
        return Err(FiberError::SizeGuardExceeded { size: decomposition.dimension, guard });
    }
    let dim = decomposition.dimension as usize;
    let big_n = spec.branch_count();
    let classes = spec.endpoint_classes(site, n);
    let mut projection = RationalMatrix::zeros(dim, dim);
    for class in &classes {
        let w = Rational::new(BigInt::one(), BigInt::from(class.len()));
        for &a in class {
            for &b in class {
                projection[(a, b)] = w.clone();
            }
        }
    }
    let mut central = Vec::new();
    let mut supports = Vec::new();
    for block in &decomposition.blocks[1..] {
        let BlockKind::Singular { branch, depth, prefix } = &block.kind else { unreachable!() };
        let q = n - depth;
        let suffixes = big_n.pow(q as u32);
        let entry = spec.entry_indices(*branch);
        let groups: Vec<Vec<usize>> = (0..suffixes)
            .map(|s| {
                entry
                    .iter()
                    .map(|&j| {
                        let mut word = prefix.clone();
                        word.push(j);
                        word_index(&word, big_n) * suffixes + s
                    })
                    .collect()
            })
            .collect();
        let e = entry.len() as i64;
        let mut z = RationalMatrix::zeros(dim, dim);
        for g in &groups {
            for (l, &a) in g.iter().enumerate() {
                for (m, &b) in g.iter().enumerate() {
                    z[(a, b)] = Rational::new(BigInt::from(if l == m { e - 1 } else { -1 }), BigInt::from(e));
                }
            }
        }
        central.push(z);
        supports.push(Support { groups });
    }
    Ok(Fiber { decomposition, matrices: FiberMatrices { classes, projection, central, supports }, branch_count: big_n })
}

impl Fiber {
    pub fn dimension(&self) -> usize {
        self.decomposition.dimension as usize
    }

    pub fn branch_count(&self) -> usize {
        self.branch_count
    }

    pub fn block_count(&self) -> usize {
        self.decomposition.blocks.len()
    }

    /// Number of mutually orthogonal minimal projections of `block` in the
    /// k-fold amplification.
    pub fn capacity(&self, block: usize, k: usize) -> u128 {
        self.decomposition.blocks[block].size * k as u128
    }

    /// The `t`-th of a fixed family of orthogonal minimal projections of
    /// `block`, amplified `k` times.
    pub fn block_projection(&self, block: usize, t: usize, k: usize) -> Result<RationalMatrix, FiberError> {
        let capacity = self.capacity(block, k);
        if t as u128 >= capacity {
            return Err(FiberError::CapacityExceeded { block, capacity });
        }
        let size = self.dimension() * k;
        let mut out = RationalMatrix::zeros(size, size);
        if block == 0 {
            let classes = &self.matrices.classes;
            let (c, a) = (t % classes.len(), t / classes.len());
            let class = &classes[c];
            let w = Rational::new(BigInt::one(), BigInt::from(class.len()));
            for &x in class {
                for &y in class {
                    out[(x * k + a, y * k + a)] = w.clone();
                }
            }
        } else {
            let support = &self.matrices.supports[block - 1];
            let (s, a) = (t % support.groups.len(), t / support.groups.len());
            let group = &support.groups[s];
            let e = group.len() as i64;
            for (l, &x) in group.iter().enumerate() {
                for (m, &y) in group.iter().enumerate() {
                    out[(x * k + a, y * k + a)] = Rational::new(BigInt::from(if l == m { e - 1 } else { -1 }), BigInt::from(e));
                }
            }
        }
        Ok(out)
    }

    pub fn minimal_projection(&self, block: usize) -> RationalMatrix {
        self.block_projection(block, 0, 1).expect("every block has a minimal projection")
    }

    /// Sum of the first `mult[β]` orthogonal minimal projections of each block.
    pub fn realize(&self, mult: &[usize], k: usize) -> Result<RationalMatrix, FiberError> {
        let size = self.dimension() * k;
        let mut out = RationalMatrix::zeros(size, size);
        for (block, &m) in mult.iter().enumerate() {
            for t in 0..m {
                out = out.add(&self.block_projection(block, t, k)?);
            }
        }
        Ok(out)
    }

    /// Block multiplicities of a projection in the fiber algebra, or in its
    /// k-fold amplification when the size is k·Nⁿ.
    pub fn decompose_projection(&self, t: &RationalMatrix) -> Result<Vec<usize>, FiberError> {
        let dim = self.dimension();
        if !t.is_square() || !t.rows().is_multiple_of(dim) || t.rows() == 0 {
            return Err(FiberError::ShapeMismatch(format!("{}x{} against fiber size {dim}", t.rows(), t.cols())));
        }
        let k = t.rows() / dim;
        if !t.is_projection() {
            return Err(FiberError::NotAProjection);
        }
        let amplify = |m: &RationalMatrix| if k == 1 { m.clone() } else { m.kron(&RationalMatrix::identity(k)) };
        let q = amplify(&self.matrices.projection);
        if t.mul(&q) != q.mul(t) {
            return Err(FiberError::NotInFiberAlgebra("does not commute with the identification projection".into()));
        }
        let classes = &self.matrices.classes;
        let d = classes.len();
        let compressed = RationalMatrix::from_fn(d * k, d * k, |i, j| {
            let (c, a) = (i / k, i % k);
            let (c2, a2) = (j / k, j % k);
            classes[c].iter().flat_map(|&x| classes[c2].iter().map(move |&y| (x, y))).map(|(x, y)| t[(x * k + a, y * k + a2)].clone()).sum()
        });
        let mut mult = vec![compressed.rank()];
        for (b, (z, support)) in self.matrices.central.iter().zip(&self.matrices.supports).enumerate() {
            let zk = amplify(z);
            let tz = t.mul(&zk);
            if tz != zk.mul(t) {
                return Err(FiberError::NotInFiberAlgebra(format!("does not commute with central projection {}", b + 1)));
            }
            let idx: Vec<usize> = support.words().into_iter().flat_map(|w| (0..k).map(move |a| w * k + a)).collect();
            let block = zk.mul(&tz).submatrix(&idx, &idx);
            let e = support.multiplicity();
            let span = support.groups.len() * k;
            let factor = Rational::new(BigInt::from(e), BigInt::from(e - 1));
            let base = RationalMatrix::from_fn(span, span, |i, j| &block[(i, j)] * &factor);
            for l in 0..e {
                for m in 0..e {
                    let coeff = if l == m { int(1) } else { int(0) } - Rational::new(BigInt::one(), BigInt::from(e));
                    for i in 0..span {
                        for j in 0..span {
                            if block[(l * span + i, m * span + j)] != &base[(i, j)] * &coeff {
                                return Err(FiberError::NotInFiberAlgebra(format!(
                                    "singular block {} does not have the branch pattern",
                                    b + 1
                                )));
                            }
                        }
                    }
                }
            }
            let r = block.rank();
            if r % (e - 1) != 0 {
                return Err(FiberError::NotInFiberAlgebra(format!("rank {r} in singular block {}", b + 1)));
            }
            mult.push(r / (e - 1));
        }
        Ok(mult)
    }
}

/// The block-diagonal embedding π: `t` placed at each listed position of
/// length p, inside M_{N^{p+q}}.
pub fn pi_embed(branch_count: usize, q: usize, positions: &[Vec<usize>], t: &RationalMatrix) -> Result<RationalMatrix, FiberError> {
    let block = check_block(branch_count, q, t)?;
    let p = positions.first().map_or(0, Vec::len);
    for (i, w) in positions.iter().enumerate() {
        check_word(branch_count, p, w)?;
        if positions[..i].contains(w) {
            return Err(FiberError::DuplicatePosition(w.clone()));
        }
    }
    let size = branch_count.pow(p as u32) * block;
    let mut out = RationalMatrix::zeros(size, size);
    for w in positions {
        place(&mut out, word_index(w, branch_count) * block, word_index(w, branch_count) * block, t);
    }
    Ok(out)
}

/// σ: `t` at the four blocks (i,i), (i,j), (j,i), (j,j).
pub fn sigma_embed(branch_count: usize, q: usize, i: &[usize], j: &[usize], t: &RationalMatrix) -> Result<RationalMatrix, FiberError> {
    let block = check_block(branch_count, q, t)?;
    check_word(branch_count, i.len(), i)?;
    check_word(branch_count, i.len(), j)?;
    if i == j {
        return Err(FiberError::DuplicatePosition(i.to_vec()));
    }
    let size = branch_count.pow(i.len() as u32) * block;
    let mut out = RationalMatrix::zeros(size, size);
    let (a, b) = (word_index(i, branch_count) * block, word_index(j, branch_count) * block);
    for (r, c) in [(a, a), (a, b), (b, a), (b, b)] {
        place(&mut out, r, c, t);
    }
    Ok(out)
}

fn check_block(branch_count: usize, q: usize, t: &RationalMatrix) -> Result<usize, FiberError> {
    let block = branch_count.pow(q as u32);
    if t.rows() != block || t.cols() != block {
        return Err(FiberError::ShapeMismatch(format!("block is {}x{}, expected {block}x{block}", t.rows(), t.cols())));
    }
    Ok(block)
}

fn check_word(branch_count: usize, len: usize, w: &[usize]) -> Result<(), FiberError> {
    if w.len() != len || w.iter().any(|&d| d >= branch_count) {
        return Err(FiberError::ShapeMismatch(format!("position {w:?} is not a word of length {len}")));
    }
    Ok(())
}

fn place(out: &mut RationalMatrix, r0: usize, c0: usize, t: &RationalMatrix) {
    for i in 0..t.rows() {
        for j in 0..t.cols() {
            out[(r0 + i, c0 + j)] = t[(i, j)].clone();
        }
    }
}

/// The central projection of a singular block written through π and σ:
/// π(I) over the branch positions minus 1/e of the all-blocks matrix.
pub fn central_from_embeddings(spec: &MapSpec, block: &Block, level: usize) -> Result<RationalMatrix, FiberError> {
    let BlockKind::Singular { branch, depth, prefix } = &block.kind else {
        return Err(FiberError::ShapeMismatch("compact blocks have no branch pattern".into()));
    };
    let big_n = spec.branch_count();
    let q = level - depth;
    let ident = RationalMatrix::identity(big_n.pow(q as u32));
    let words: Vec<Vec<usize>> = spec.entry_indices(*branch).iter().map(|&j| prefix.iter().copied().chain([j]).collect()).collect();
    let e = words.len();
    let diag = pi_embed(big_n, q, &words, &ident)?;
    let mut all = diag.scale(&int(2 - e as i64));
    for l in 0..e {
        for m in l + 1..e {
            all = all.add(&sigma_embed(big_n, q, &words[l], &words[m], &ident)?);
        }
    }
    Ok(diag.sub(&all.scale(&Rational::new(BigInt::one(), BigInt::from(e)))))
}

/// Inserts the N×N matrix `d` at the least significant word digit of a
/// k-fold amplified matrix: index (w, a) becomes (w, digit, a).
pub fn insert_digit(t: &RationalMatrix, d: &RationalMatrix, k: usize) -> RationalMatrix {
    let big_n = d.rows();
    let words = t.rows() / k;
    let size = t.rows() * big_n;
    let mut out = RationalMatrix::zeros(size, size);
    for i in 0..t.rows() {
        for j in 0..t.cols() {
            let v = &t[(i, j)];
            if v.is_zero() {
                continue;
            }
            let (w1, a1) = (i / k, i % k);
            let (w2, a2) = (j / k, j % k);
            for x in 0..big_n {
                for y in 0..big_n {
                    let dv = &d[(x, y)];
                    if !dv.is_zero() {
                        out[((w1 * big_n + x) * k + a1, (w2 * big_n + y) * k + a2)] = v * dv;
                    }
                }
            }
        }
    }
    debug_assert_eq!(words * big_n * k, size);
    out
}

/// Jₙ: every entry 1/Nⁿ.
pub fn constant_projection(branch_count: usize, n: usize) -> RationalMatrix {
    let size = branch_count.pow(n as u32);
    RationalMatrix::from_fn(size, size, |_, _| Rational::new(BigInt::one(), BigInt::from(size)))
}

pub fn word_label(index: usize, branch_count: usize, len: usize) -> String {
    index_word(index, branch_count, len).iter().map(|d| d.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::rational;
    use crate::spec::Builtin;

    fn site(spec: &MapSpec, label: &str) -> Site {
        spec.site(label).unwrap()
    }

    #[test]
    fn tent_fiber_blocks() {
        let t = Builtin::Tent.spec();
        let one = fiber_decomposition(&t, site(&t, "1"), 3).unwrap();
        let sizes: Vec<u128> = one.blocks.iter().map(|b| b.size).collect();
        assert_eq!(sizes, [4, 4]);
        let zero = fiber_decomposition(&t, site(&t, "0"), 3).unwrap();
        let sizes: Vec<u128> = zero.blocks.iter().map(|b| b.size).collect();
        assert_eq!(sizes, [5, 2, 1]);
        assert_eq!(zero.weighted_size(), 8);
        let generic = fiber_decomposition(&t, Site::Generic, 3).unwrap();
        assert!(generic.is_full_matrix_algebra());
    }

    #[test]
    fn pi_and_sigma_small_cases() {
        let i2 = RationalMatrix::identity(2);
        let d = pi_embed(2, 1, &[vec![0]], &i2).unwrap();
        assert_eq!(d, RationalMatrix::leading_diagonal(4, 2));
        let one = RationalMatrix::identity(1);
        let s = sigma_embed(2, 0, &[0], &[1], &one).unwrap();
        assert_eq!(s, RationalMatrix::from_fn(2, 2, |_, _| int(1)));
        assert!(matches!(pi_embed(2, 1, &[vec![0], vec![0]], &i2), Err(FiberError::DuplicatePosition(_))));
        assert!(matches!(pi_embed(2, 2, &[vec![0]], &i2), Err(FiberError::ShapeMismatch(_))));
    }

    #[test]
    fn tent_minimal_singular_projection() {
        let t = Builtin::Tent.spec();
        let f = build_fiber(&t, site(&t, "1"), 1, DEFAULT_SIZE_GUARD).unwrap();
        let m = f.minimal_projection(1);
        let expect = RationalMatrix::from_fn(2, 2, |i, j| if i == j { rational(1, 2) } else { rational(-1, 2) });
        assert_eq!(m, expect);
        assert_eq!(f.decompose_projection(&m).unwrap(), [0, 1]);
    }

    #[test]
    fn identity_and_q_decompose() {
        let t = Builtin::Tent.spec();
        let f = build_fiber(&t, site(&t, "1"), 3, DEFAULT_SIZE_GUARD).unwrap();
        assert_eq!(f.decompose_projection(&RationalMatrix::identity(8)).unwrap(), [4, 4]);
        assert_eq!(f.decompose_projection(&f.matrices.projection).unwrap(), [4, 0]);
        assert_eq!(f.decompose_projection(&constant_projection(2, 3)).unwrap(), [1, 0]);
    }

    #[test]
    fn non_members_are_rejected() {
        let t = Builtin::Tent.spec();
        let f = build_fiber(&t, site(&t, "1"), 1, DEFAULT_SIZE_GUARD).unwrap();
        let e00 = RationalMatrix::leading_diagonal(2, 1);
        assert!(matches!(f.decompose_projection(&e00), Err(FiberError::NotInFiberAlgebra(_))));
        let not_proj = RationalMatrix::identity(2).scale(&int(2));
        assert_eq!(f.decompose_projection(&not_proj), Err(FiberError::NotAProjection));
    }

    #[test]
    fn central_projection_matches_embedding_formula() {
        let text = "branch_count = 4\npoints = [\"a\", \"b\"]\n[gamma.a]\n0 = \"a\"\n1 = \"b\"\n2 = \"b\"\n3 = \"b\"\n";
        let wide = MapSpec::parse(text).unwrap();
        for spec in [Builtin::Tent.spec(), Builtin::Gasket.spec(), wide] {
            for x in spec.singular_points(2) {
                let f = build_fiber(&spec, Site::Special(x), 2, DEFAULT_SIZE_GUARD).unwrap();
                for (b, block) in f.decomposition.blocks.iter().enumerate().skip(1) {
                    let z = central_from_embeddings(&spec, block, 2).unwrap();
                    assert_eq!(z, f.matrices.central[b - 1]);
                }
            }
        }
    }

    #[test]
    fn branch_of_three_decomposes() {
        let text = "branch_count = 4\npoints = [\"a\", \"b\"]\n[gamma.a]\n0 = \"a\"\n1 = \"b\"\n2 = \"b\"\n3 = \"b\"\n";
        let spec = MapSpec::parse(text).unwrap();
        let f = build_fiber(&spec, site(&spec, "a"), 2, DEFAULT_SIZE_GUARD).unwrap();
        assert_eq!(f.decomposition.weighted_size(), 16);
        for b in 0..f.block_count() {
            let m = f.minimal_projection(b);
            assert_eq!(m.rank(), f.decomposition.blocks[b].weight);
            let mut unit = vec![0; f.block_count()];
            unit[b] = 1;
            assert_eq!(f.decompose_projection(&m).unwrap(), unit);
        }
        let all: Vec<usize> = f.decomposition.blocks.iter().map(|b| b.size as usize).collect();
        assert_eq!(f.realize(&all, 1).unwrap(), RationalMatrix::identity(16));
    }

    #[test]
    fn amplified_decomposition() {
        let g = Builtin::Gasket.spec();
        let f = build_fiber(&g, site(&g, "P"), 2, DEFAULT_SIZE_GUARD).unwrap();
        let mult = vec![6, 2, 1];
        let t = f.realize(&mult, 2).unwrap();
        assert_eq!(t.rows(), 18);
        assert_eq!(f.decompose_projection(&t).unwrap(), mult);
    }

    #[test]
    fn size_guard_applies() {
        let t = Builtin::Tent.spec();
        assert!(matches!(build_fiber(&t, Site::Generic, 6, 32), Err(FiberError::SizeGuardExceeded { .. })));
    }

    #[test]
    fn digit_insertion_order() {
        let t = RationalMatrix::leading_diagonal(2, 1);
        let d = RationalMatrix::from_fn(2, 2, |_, _| rational(1, 2));
        let out = insert_digit(&t, &d, 1);
        assert_eq!(out, t.kron(&d));
        let amp = insert_digit(&t.kron(&RationalMatrix::identity(2)), &d, 2);
        assert_eq!(amp, t.kron(&d).kron(&RationalMatrix::identity(2)));
    }
}
