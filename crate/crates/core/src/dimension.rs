//! K₀ of the finite cores and the maps between them.
//!
//! At level n, K₀ is the lattice of block-multiplicity vectors over the
//! singular points whose weighted ranks agree at every singular point (the
//! base is assumed connected). Maps between levels are computed by realizing
//! a class as explicit projections, transporting them, and decomposing again.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::fiber::{
    build_fiber, constant_projection, fiber_decomposition, insert_digit, Block, BlockKind, Fiber, FiberDecomposition, FiberError,
};
use crate::lattice::{as_strings, solve_in_basis, solve_rational, IntegerMatrix, Lattice, LatticeError, Rational, RationalMatrix};
use crate::spec::{Builtin, MapSpec, PointId, Site};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DimensionError {
    #[error(transparent)]
    Fiber(#[from] FiberError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("class has a negative entry at coordinate {0}")]
    NegativeEntry(usize),
    #[error("weighted ranks differ across singular points: {0:?}")]
    RankMismatch(Vec<BigInt>),
    #[error("class is too large to realize as matrices")]
    ClassTooLarge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind")]
pub enum Coordinate {
    Block { point: PointId, block: usize },
    CommonRank,
}

/// A named basis of K₀ given in ambient coordinates, one vector per row.
#[derive(Debug, Clone, Serialize)]
pub struct LabelledBasis {
    pub labels: Vec<String>,
    pub vectors: IntegerMatrix,
}

#[derive(Debug, Clone)]
pub struct K0Presentation {
    pub level: usize,
    pub points: Vec<PointId>,
    pub fibers: Vec<FiberDecomposition>,
    pub coordinates: Vec<Coordinate>,
    pub rank_functionals: IntegerMatrix,
    pub lattice: Lattice,
    pub identity: Vec<BigInt>,
    pub labelled: Option<LabelledBasis>,
    offsets: Vec<usize>,
    branch_count: usize,
}

impl K0Presentation {
    pub fn rank(&self) -> usize {
        self.lattice.rank()
    }

    pub fn ambient_dim(&self) -> usize {
        self.coordinates.len()
    }

    pub fn point_slice<'v>(&self, v: &'v [BigInt], i: usize) -> &'v [BigInt] {
        &v[self.offsets[i]..self.offsets[i] + self.fibers[i].blocks.len()]
    }

    pub fn point_index(&self, x: PointId) -> Option<usize> {
        self.points.iter().position(|&p| p == x)
    }

    pub fn weighted_ranks(&self, v: &[BigInt]) -> Vec<BigInt> {
        self.rank_functionals.mul_vec(v)
    }

    /// Matrix rank of any realization of the class.
    pub fn common_rank(&self, v: &[BigInt]) -> BigInt {
        self.weighted_ranks(v).swap_remove(0)
    }

    pub fn coordinates_of(&self, v: &[BigInt]) -> Result<Vec<BigInt>, LatticeError> {
        self.lattice.solve(v)
    }

    pub fn basis_vector(&self, i: usize) -> Vec<BigInt> {
        self.lattice.basis_vector(i).to_vec()
    }

    pub fn ambient_labels(&self, spec: &MapSpec) -> Vec<String> {
        self.coordinates
            .iter()
            .map(|c| match c {
                Coordinate::CommonRank => "rank".to_string(),
                Coordinate::Block { point, block } => {
                    let i = self.point_index(*point).expect("coordinate points are singular");
                    let b = &self.fibers[i].blocks[*block];
                    format!("{}:{}", spec.label(*point), b.tag(spec, Site::Special(*point)))
                }
            })
            .collect()
    }

    /// The ambient coordinate of block (branch, depth) at `point`.
    pub fn block_coordinate(&self, point: PointId, branch: PointId, depth: usize) -> Option<usize> {
        let i = self.point_index(point)?;
        let b = self.fibers[i].blocks.iter().position(|b| b.branch() == Some(branch) && b.depth() == Some(depth))?;
        Some(self.offsets[i] + b)
    }

    pub fn compact_coordinate(&self, point: PointId) -> Option<usize> {
        self.point_index(point).map(|i| self.offsets[i])
    }
}

pub fn k0_finite(spec: &MapSpec, n: usize) -> Result<K0Presentation, DimensionError> {
    let points = spec.singular_points(n);
    let branch_count = spec.branch_count();
    if points.is_empty() {
        let size = spec.power(n).ok_or(DimensionError::ClassTooLarge)?;
        return Ok(K0Presentation {
            level: n,
            points,
            fibers: Vec::new(),
            coordinates: vec![Coordinate::CommonRank],
            rank_functionals: IntegerMatrix::identity(1),
            lattice: Lattice::full(1),
            identity: vec![BigInt::from(size)],
            labelled: None,
            offsets: Vec::new(),
            branch_count,
        });
    }
    let fibers = points.iter().map(|&x| fiber_decomposition(spec, Site::Special(x), n)).collect::<Result<Vec<_>, _>>()?;
    let mut coordinates = Vec::new();
    let mut offsets = Vec::new();
    for (&x, f) in points.iter().zip(&fibers) {
        offsets.push(coordinates.len());
        coordinates.extend((0..f.blocks.len()).map(|block| Coordinate::Block { point: x, block }));
    }
    let dim = coordinates.len();
    let mut functionals = IntegerMatrix::zeros(points.len(), dim);
    for (i, f) in fibers.iter().enumerate() {
        for (b, block) in f.blocks.iter().enumerate() {
            functionals[(i, offsets[i] + b)] = BigInt::from(block.weight);
        }
    }
    let differences: Vec<Vec<BigInt>> =
        (1..points.len()).map(|i| (0..dim).map(|c| &functionals[(i, c)] - &functionals[(0, c)]).collect()).collect();
    let lattice = IntegerMatrix::from_rows(&differences, dim)?.kernel_basis();
    let identity = fibers.iter().flat_map(FiberDecomposition::identity_class).collect();
    let mut pres = K0Presentation {
        level: n,
        points,
        fibers,
        coordinates,
        rank_functionals: functionals,
        lattice,
        identity,
        labelled: None,
        offsets,
        branch_count,
    };
    pres.labelled = labelled_basis(spec, &pres);
    Ok(pres)
}

fn labelled_basis(spec: &MapSpec, pres: &K0Presentation) -> Option<LabelledBasis> {
    let n = pres.level;
    if n == 0 {
        return None;
    }
    match spec.builtin()? {
        Builtin::Tent => Some(tent_basis(spec, pres)),
        Builtin::Gasket => Some(gasket_basis(spec, pres)),
        Builtin::FullShift2 => None,
    }
}

/// eⁿᵢ for i ≤ n puts 1 on the singular block at 1 and on the i-th rank
/// coordinate at 0; eⁿₙ₊₁ puts 1 on the compact block at 1 and on the first
/// rank coordinate at 0. The rank coordinates at 0 are the singular blocks
/// of depth 2..n followed by the compact block.
fn tent_basis(spec: &MapSpec, pres: &K0Presentation) -> LabelledBasis {
    let n = pres.level;
    let one = spec.point("1").expect("tent has the point 1");
    let zero = spec.point("0").expect("tent has the point 0");
    let half = spec.point("half").expect("tent has the point half");
    let at_one_singular = pres.block_coordinate(one, half, 1).expect("level ≥ 1");
    let at_one_compact = pres.compact_coordinate(one).expect("level ≥ 1");
    let r = |i: usize| -> Option<usize> {
        if n == 1 {
            None
        } else if i < n {
            pres.block_coordinate(zero, half, i + 1)
        } else {
            pres.compact_coordinate(zero)
        }
    };
    let dim = pres.ambient_dim();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 1..=n + 1 {
        let mut v = vec![BigInt::zero(); dim];
        let (m, ri) = if i <= n { (at_one_singular, i) } else { (at_one_compact, 1) };
        v[m] = BigInt::one();
        if let Some(c) = r(ri) {
            v[c] = BigInt::one();
        }
        rows.push(v);
        labels.push(format!("e{n}_{i}"));
    }
    LabelledBasis { labels, vectors: IntegerMatrix::from_rows(&rows, dim).expect("rows have ambient width") }
}

/// Coordinates 1..=n at a point are its singular blocks by depth, n+1 the
/// compact block. aᵢ varies P; bᵢ and cᵢ vary one of Q, R, alternating with
/// the parity of n.
fn gasket_basis(spec: &MapSpec, pres: &K0Presentation) -> LabelledBasis {
    let n = pres.level;
    let pt = |l: &str| spec.point(l).expect("gasket point");
    let (p, q, r) = (pt("P"), pt("Q"), pt("R"));
    let coord = |x: PointId, i: usize| -> usize {
        if i == n + 1 {
            return pres.compact_coordinate(x).expect("singular point");
        }
        let k = pres.point_index(x).expect("singular point");
        let b = pres.fibers[k].blocks.iter().position(|b| b.depth() == Some(i)).expect("one block per depth");
        pres.offsets[k] + b
    };
    let (v, w) = if n % 2 == 1 { (q, r) } else { (r, q) };
    let dim = pres.ambient_dim();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut push = |label: String, ones: [(PointId, usize); 3]| {
        let mut vec = vec![BigInt::zero(); dim];
        for (x, i) in ones {
            vec[coord(x, i)] = BigInt::one();
        }
        rows.push(vec);
        labels.push(label);
    };
    for i in 1..=n + 1 {
        push(format!("a{n}_{i}"), [(p, i), (q, n + 1), (r, n + 1)]);
    }
    for i in 1..=n {
        push(format!("b{n}_{i}"), [(p, 1), (v, i), (w, n + 1)]);
    }
    for i in 1..=n {
        push(format!("c{n}_{i}"), [(p, 1), (v, n + 1), (w, i)]);
    }
    LabelledBasis { labels, vectors: IntegerMatrix::from_rows(&rows, dim).expect("rows have ambient width") }
}

/// A level together with the fiber matrices at its singular points.
#[derive(Debug, Clone)]
pub struct Level {
    pub presentation: K0Presentation,
    pub fibers: Vec<Fiber>,
}

impl Level {
    pub fn build(spec: &MapSpec, n: usize, guard: usize) -> Result<Self, DimensionError> {
        let presentation = k0_finite(spec, n)?;
        let fibers = presentation.points.iter().map(|&x| build_fiber(spec, Site::Special(x), n, guard)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self { presentation, fibers })
    }

    pub fn level(&self) -> usize {
        self.presentation.level
    }

    fn words(&self) -> usize {
        self.presentation.branch_count.pow(self.level() as u32)
    }
}

/// Explicit projections representing a class: one per singular point plus a
/// rank-r diagonal for regular points, all amplified `amplification` times.
#[derive(Debug, Clone)]
pub struct RealizedClass {
    pub level: usize,
    pub amplification: usize,
    pub rank: usize,
    pub fibers: Vec<RationalMatrix>,
    pub generic: RationalMatrix,
}

impl RealizedClass {
    /// The realized fiber at `x`, or the regular-point projection.
    pub fn at(&self, pres: &K0Presentation, x: PointId) -> &RationalMatrix {
        pres.point_index(x).map_or(&self.generic, |i| &self.fibers[i])
    }
}

fn to_usize(x: &BigInt) -> Result<usize, DimensionError> {
    x.to_usize().ok_or(DimensionError::ClassTooLarge)
}

pub fn realize_class(level: &Level, v: &[BigInt]) -> Result<RealizedClass, DimensionError> {
    realize_class_with(level, v, |_, _, m, _| (0..m).collect())
}

/// Like [`realize_class`], with `choose(point, block, m, capacity)` picking
/// which `m` of the block's orthogonal minimal projections to use.
pub fn realize_class_with(
    level: &Level,
    v: &[BigInt],
    mut choose: impl FnMut(usize, usize, usize, usize) -> Vec<usize>,
) -> Result<RealizedClass, DimensionError> {
    let pres = &level.presentation;
    if v.len() != pres.ambient_dim() {
        return Err(LatticeError::ShapeMismatch(format!("class of length {} in ambient {}", v.len(), pres.ambient_dim())).into());
    }
    if let Some(i) = v.iter().position(Signed::is_negative) {
        return Err(DimensionError::NegativeEntry(i));
    }
    let ranks = pres.weighted_ranks(v);
    if ranks.iter().any(|r| r != &ranks[0]) {
        return Err(DimensionError::RankMismatch(ranks));
    }
    let rank = to_usize(&ranks[0])?;
    let words = level.words();
    let mut amplification = rank.div_ceil(words).max(1);
    for (i, f) in pres.fibers.iter().enumerate() {
        for (m, b) in pres.point_slice(v, i).iter().zip(&f.blocks) {
            let need = to_usize(m)?.div_ceil(b.size as usize);
            amplification = amplification.max(need);
        }
    }
    let k = amplification;
    let mut fibers = Vec::new();
    for (i, fiber) in level.fibers.iter().enumerate() {
        let size = words * k;
        let mut t = RationalMatrix::zeros(size, size);
        for (b, m) in pres.point_slice(v, i).iter().enumerate() {
            let m = to_usize(m)?;
            let capacity = fiber.capacity(b, k) as usize;
            for index in choose(i, b, m, capacity) {
                t = t.add(&fiber.block_projection(b, index, k)?);
            }
        }
        fibers.push(t);
    }
    Ok(RealizedClass { level: pres.level, amplification: k, rank, fibers, generic: RationalMatrix::leading_diagonal(words * k, rank) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MapKind {
    Inclusion,
    Beta,
}

/// The level-(n+1) projection at `x` induced by a level-n realization.
pub fn transport(spec: &MapSpec, lower: &Level, rc: &RealizedClass, x: PointId, kind: MapKind) -> RationalMatrix {
    let pres = &lower.presentation;
    match kind {
        MapKind::Inclusion => {
            let parts: Vec<&RationalMatrix> =
                (0..spec.branch_count()).map(|j| spec.image(x, j).map_or(&rc.generic, |y| rc.at(pres, y))).collect();
            RationalMatrix::block_diagonal(&parts)
        }
        MapKind::Beta => {
            let big_n = spec.branch_count();
            let q = constant_projection(big_n, 1);
            insert_digit(rc.at(pres, x), &q, rc.amplification)
        }
    }
}

/// Ambient level-(n+1) coordinates of the transported realization.
pub fn transport_class(
    spec: &MapSpec,
    lower: &Level,
    upper: &Level,
    rc: &RealizedClass,
    kind: MapKind,
) -> Result<Vec<BigInt>, DimensionError> {
    let pres = &upper.presentation;
    if pres.points.is_empty() {
        let factor = match kind {
            MapKind::Inclusion => spec.branch_count(),
            MapKind::Beta => 1,
        };
        return Ok(vec![BigInt::from(rc.rank * factor)]);
    }
    let mut out = Vec::with_capacity(pres.ambient_dim());
    for (&x, fiber) in pres.points.iter().zip(&upper.fibers) {
        let t = transport(spec, lower, rc, x, kind);
        out.extend(fiber.decompose_projection(&t)?.into_iter().map(BigInt::from));
    }
    Ok(out)
}

/// Image of an arbitrary lattice vector, made non-negative by adding
/// `offset + M` copies of the identity class (M minimal).
pub fn map_class_with_offset(
    spec: &MapSpec,
    lower: &Level,
    upper: &Level,
    v: &[BigInt],
    kind: MapKind,
    offset: usize,
) -> Result<Vec<BigInt>, DimensionError> {
    let pres = &lower.presentation;
    let min = v.iter().min().cloned().unwrap_or_default();
    let shift = (-min).max(BigInt::zero()) + BigInt::from(offset);
    let shifted: Vec<BigInt> = v.iter().zip(&pres.identity).map(|(a, i)| a + &shift * i).collect();
    let image = transport_class(spec, lower, upper, &realize_class(lower, &shifted)?, kind)?;
    if shift.is_zero() {
        return Ok(image);
    }
    let id_image = transport_class(spec, lower, upper, &realize_class(lower, &pres.identity)?, kind)?;
    Ok(image.iter().zip(&id_image).map(|(a, b)| a - &shift * b).collect())
}

pub fn map_class(spec: &MapSpec, lower: &Level, upper: &Level, v: &[BigInt], kind: MapKind) -> Result<Vec<BigInt>, DimensionError> {
    map_class_with_offset(spec, lower, upper, v, kind, 0)
}

/// The matrix of a map K₀(level n) → K₀(level n+1) in Hermite bases, with
/// columns indexed by the domain basis.
#[derive(Debug, Clone, Serialize)]
pub struct LevelMap {
    pub kind: MapKind,
    pub from_level: usize,
    pub matrix: IntegerMatrix,
    /// Ambient image of each domain basis vector.
    #[serde(serialize_with = "as_strings::nested")]
    pub raw_images: Vec<Vec<BigInt>>,
    pub labelled: Option<IntegerMatrix>,
}

impl LevelMap {
    pub fn is_injective(&self) -> bool {
        self.matrix.has_full_column_rank()
    }

    pub fn apply(&self, coords: &[BigInt]) -> Vec<BigInt> {
        self.matrix.mul_vec(coords)
    }
}

pub fn level_map(spec: &MapSpec, lower: &Level, upper: &Level, kind: MapKind) -> Result<LevelMap, DimensionError> {
    let dom = &lower.presentation;
    let cod = &upper.presentation;
    let mut raw_images = Vec::new();
    let mut columns = Vec::new();
    for i in 0..dom.rank() {
        let image = map_class(spec, lower, upper, &dom.basis_vector(i), kind)?;
        columns.push(cod.coordinates_of(&image)?);
        raw_images.push(image);
    }
    let matrix = IntegerMatrix::from_columns(&columns, cod.rank())?;
    let labelled = match (&dom.labelled, &cod.labelled) {
        (Some(a), Some(b)) => {
            let mut cols = Vec::new();
            for i in 0..a.vectors.rows() {
                let coords = dom.coordinates_of(a.vectors.row(i))?;
                let ambient = cod.lattice.combine(&matrix.mul_vec(&coords));
                cols.push(solve_in_basis(&b.vectors, &ambient)?);
            }
            Some(IntegerMatrix::from_columns(&cols, b.vectors.rows())?)
        }
        _ => None,
    };
    Ok(LevelMap { kind, from_level: dom.level, matrix, raw_images, labelled })
}

/// Levels and the maps between consecutive ones, built on demand.
pub struct Tower<'a> {
    spec: &'a MapSpec,
    guard: usize,
    levels: Vec<Level>,
    inclusions: Vec<LevelMap>,
    betas: Vec<LevelMap>,
}

impl<'a> Tower<'a> {
    pub fn new(spec: &'a MapSpec, guard: usize) -> Self {
        Self { spec, guard, levels: Vec::new(), inclusions: Vec::new(), betas: Vec::new() }
    }

    pub fn spec(&self) -> &MapSpec {
        self.spec
    }

    pub fn level(&mut self, n: usize) -> Result<&Level, DimensionError> {
        while self.levels.len() <= n {
            self.levels.push(Level::build(self.spec, self.levels.len(), self.guard)?);
        }
        Ok(&self.levels[n])
    }

    pub fn inclusion(&mut self, n: usize) -> Result<&LevelMap, DimensionError> {
        self.level(n + 1)?;
        while self.inclusions.len() <= n {
            let m = self.inclusions.len();
            let map = level_map(self.spec, &self.levels[m], &self.levels[m + 1], MapKind::Inclusion)?;
            self.inclusions.push(map);
        }
        Ok(&self.inclusions[n])
    }

    pub fn beta(&mut self, n: usize) -> Result<&LevelMap, DimensionError> {
        self.level(n + 1)?;
        while self.betas.len() <= n {
            let m = self.betas.len();
            let map = level_map(self.spec, &self.levels[m], &self.levels[m + 1], MapKind::Beta)?;
            self.betas.push(map);
        }
        Ok(&self.betas[n])
    }

    /// Hermite coordinates at level `to` of a class given at level `from`.
    pub fn push_forward(&mut self, from: usize, coords: &[BigInt], to: usize) -> Result<Vec<BigInt>, DimensionError> {
        let mut c = coords.to_vec();
        for m in from..to {
            c = self.inclusion(m)?.apply(&c);
        }
        Ok(c)
    }

    /// Hermite coordinates of [pⁿ], the class of the constant rank-one projection.
    pub fn constant_class(&mut self, n: usize) -> Result<Vec<BigInt>, DimensionError> {
        let big_n = self.spec.branch_count();
        let level = self.level(n)?;
        let pres = &level.presentation;
        if pres.points.is_empty() {
            return Ok(pres.coordinates_of(&[BigInt::one()])?);
        }
        let j = constant_projection(big_n, n);
        let mut raw = Vec::new();
        for f in &level.fibers {
            raw.extend(f.decompose_projection(&j)?.into_iter().map(BigInt::from));
        }
        Ok(pres.coordinates_of(&raw)?)
    }

    /// The ambient value vector of τ^{(b,r)} at level n ≥ r+1.
    pub fn trace_functional(&mut self, n: usize, b: PointId, r: usize) -> Result<Option<Vec<Rational>>, DimensionError> {
        if n < r + 1 {
            return Ok(None);
        }
        let spec = self.spec;
        let big_n = spec.branch_count();
        let pres = &self.level(n)?.presentation;
        let p = n - r;
        let x = spec.h_iterate(b, p);
        let mut row = vec![Rational::zero(); pres.ambient_dim()];
        if let Some(c) = pres.block_coordinate(x, b, p) {
            row[c] = Rational::new(BigInt::one(), BigInt::from(big_n).pow(r as u32));
        }
        Ok(Some(row))
    }

    /// τ^∞: weighted rank at the first singular point over Nⁿ.
    pub fn limit_trace_functional(&mut self, n: usize) -> Result<Vec<Rational>, DimensionError> {
        let big_n = BigInt::from(self.spec.branch_count()).pow(n as u32);
        let pres = &self.level(n)?.presentation;
        Ok((0..pres.ambient_dim()).map(|c| Rational::new(pres.rank_functionals[(0, c)].clone(), big_n.clone())).collect())
    }

    /// φ of a class with Hermite coordinates `coords` at level n: the values
    /// τ^{(b,r)} for b in B, r in 0..=r_max, then τ^∞.
    pub fn phi(&mut self, n: usize, coords: &[BigInt], r_max: usize) -> Result<Vec<Rational>, DimensionError> {
        let branched = self.spec.branched().to_vec();
        let mut out = Vec::new();
        for &b in &branched {
            for r in 0..=r_max {
                let at = n.max(r + 1);
                let c = self.push_forward(n, coords, at)?;
                let functional = self.trace_functional(at, b, r)?.expect("level is past r");
                let ambient = self.level(at)?.presentation.lattice.combine(&c);
                out.push(pair(&functional, &ambient));
            }
        }
        let functional = self.limit_trace_functional(n)?;
        let ambient = self.level(n)?.presentation.lattice.combine(coords);
        out.push(pair(&functional, &ambient));
        Ok(out)
    }
}

pub fn pair(functional: &[Rational], v: &[BigInt]) -> Rational {
    functional.iter().zip(v).map(|(f, x)| f * Rational::from_integer(x.clone())).sum()
}

pub fn trace_labels(spec: &MapSpec, r_max: usize) -> Vec<String> {
    let mut labels: Vec<String> =
        spec.branched().iter().flat_map(|&b| (0..=r_max).map(move |r| format!("tau({},{r})", spec.label(b)))).collect();
    labels.push("tau(inf)".to_string());
    labels
}

#[derive(Debug, Clone, Serialize)]
pub struct TracePairing {
    pub level: usize,
    pub labels: Vec<String>,
    /// Ambient value rows where defined at this level.
    #[serde(serialize_with = "as_strings::opt_nested")]
    pub functionals: Vec<Option<Vec<Rational>>>,
    /// Rows are functionals, columns the K₀ basis.
    pub values: RationalMatrix,
}

pub fn trace_pairing(tower: &mut Tower<'_>, n: usize, r_max: usize) -> Result<TracePairing, DimensionError> {
    let spec = tower.spec;
    let labels = trace_labels(spec, r_max);
    let mut functionals = Vec::new();
    for &b in spec.branched() {
        for r in 0..=r_max {
            functionals.push(tower.trace_functional(n, b, r)?);
        }
    }
    functionals.push(Some(tower.limit_trace_functional(n)?));
    let rank = tower.level(n)?.presentation.rank();
    let mut columns = Vec::new();
    for i in 0..rank {
        let mut unit = vec![BigInt::zero(); rank];
        unit[i] = BigInt::one();
        columns.push(tower.phi(n, &unit, r_max)?);
    }
    let values = RationalMatrix::from_fn(labels.len(), rank, |f, i| columns[i][f].clone());
    Ok(TracePairing { level: n, labels, functionals, values })
}

/// Is the image of [p¹] divisible by the divisor inside K₀ at `stage`?
#[derive(Debug, Clone, Serialize)]
pub struct DivisibilityProbe {
    pub stage: usize,
    pub divisor: usize,
    #[serde(serialize_with = "as_strings::vec")]
    pub class: Vec<BigInt>,
    pub solvable: bool,
    #[serde(serialize_with = "as_strings::opt_vec")]
    pub witness: Option<Vec<BigInt>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FreeGeneration {
    pub level: usize,
    /// φ-images of the basis are independent.
    pub independent: bool,
    /// Integer coefficients of each basis φ-image in c₀..cₙ, if they exist.
    pub coefficients: Option<IntegerMatrix>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelSummary {
    pub level: usize,
    pub rank: usize,
    pub ambient_blocks: Vec<String>,
    pub basis: IntegerMatrix,
    #[serde(serialize_with = "as_strings::vec")]
    pub identity: Vec<BigInt>,
    pub labelled_basis: Option<LabelledBasis>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitReport {
    pub n_max: usize,
    pub r_max: usize,
    pub levels: Vec<LevelSummary>,
    pub inclusions: Vec<LevelMap>,
    pub injective: Vec<bool>,
    pub betas: Vec<LevelMap>,
    pub traces: Vec<TracePairing>,
    pub trace_invariant: bool,
    /// Hermite coordinates of [pᵐ] at level m.
    #[serde(serialize_with = "as_strings::nested")]
    pub generators: Vec<Vec<BigInt>>,
    #[serde(serialize_with = "as_strings::nested")]
    pub c_vectors: Vec<Vec<Rational>>,
    pub beta_shifts_generators: Vec<bool>,
    pub free_generation: Vec<FreeGeneration>,
    pub divisibility: Vec<DivisibilityProbe>,
}

pub fn limit_report(spec: &MapSpec, n_max: usize, r_max: usize, guard: usize) -> Result<LimitReport, DimensionError> {
    let mut tower = Tower::new(spec, guard);
    let mut levels = Vec::new();
    for n in 0..=n_max {
        let pres = &tower.level(n)?.presentation;
        levels.push(LevelSummary {
            level: n,
            rank: pres.rank(),
            ambient_blocks: pres.ambient_labels(spec),
            basis: pres.lattice.basis().clone(),
            identity: pres.identity.clone(),
            labelled_basis: pres.labelled.clone(),
        });
    }
    let mut inclusions = Vec::new();
    let mut betas = Vec::new();
    for n in 0..n_max {
        inclusions.push(tower.inclusion(n)?.clone());
        betas.push(tower.beta(n)?.clone());
    }
    let injective = inclusions.iter().map(LevelMap::is_injective).collect();

    let mut traces = Vec::new();
    let mut trace_invariant = true;
    for n in 1..=n_max {
        let tp = trace_pairing(&mut tower, n, r_max)?;
        if n < n_max {
            let next = trace_pairing(&mut tower, n + 1, r_max)?;
            let psi = tower.inclusion(n)?.matrix.to_rational();
            trace_invariant &= next.values.mul(&psi) == tp.values;
        }
        traces.push(tp);
    }

    let mut generators = Vec::new();
    let mut c_vectors = Vec::new();
    for m in 0..=n_max {
        let g = tower.constant_class(m)?;
        c_vectors.push(tower.phi(m, &g, r_max)?);
        generators.push(g);
    }
    let mut beta_shifts_generators = Vec::new();
    for m in 0..n_max {
        beta_shifts_generators.push(tower.beta(m)?.apply(&generators[m]) == generators[m + 1]);
    }

    let mut free_generation = Vec::new();
    for n in 1..=n_max {
        let tp = &traces[n - 1];
        let independent = tp.values.rank() == tp.values.cols();
        let c = RationalMatrix::from_fn(c_vectors[0].len(), n + 1, |i, m| c_vectors[m][i].clone());
        let coefficients = (0..tp.values.cols())
            .map(|col| {
                let target: Vec<Rational> = (0..tp.values.rows()).map(|i| tp.values[(i, col)].clone()).collect();
                solve_rational(&c, &target)
                    .filter(|x| x.iter().all(BigRational::is_integer))
                    .map(|x| x.iter().map(BigRational::to_integer).collect::<Vec<_>>())
            })
            .collect::<Option<Vec<_>>>()
            .map(|cols| IntegerMatrix::from_columns(&cols, n + 1).expect("columns have n+1 entries"));
        free_generation.push(FreeGeneration { level: n, independent, coefficients });
    }

    let divisor = spec.branch_count();
    let mut divisibility = Vec::new();
    if n_max >= 1 {
        for stage in 1..=n_max {
            let class = tower.push_forward(1, &generators[1], stage)?;
            let d = BigInt::from(divisor);
            let solvable = class.iter().all(|x| x.is_multiple_of(&d));
            let witness = solvable.then(|| class.iter().map(|x| x / &d).collect());
            divisibility.push(DivisibilityProbe { stage, divisor, class, solvable, witness });
        }
    }

    Ok(LimitReport {
        n_max,
        r_max,
        levels,
        inclusions,
        injective,
        betas,
        traces,
        trace_invariant,
        generators,
        c_vectors,
        beta_shifts_generators,
        free_generation,
        divisibility,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status")]
pub enum K1Fact {
    Known { statements: Vec<String>, reason: String },
    Unknown,
}

pub fn k1_metadata(spec: &MapSpec) -> K1Fact {
    match spec.builtin() {
        Some(Builtin::Tent) => K1Fact::Known {
            statements: vec!["K1(F(n)) = 0 for every n".into(), "K1(F(inf)) = 0".into()],
            reason: "six-term sequence of the fiber extension over the interval; K1 commutes with the inductive limit".into(),
        },
        Some(Builtin::Gasket) => K1Fact::Known {
            statements: vec!["K1(F(inf)) = Z^inf".into()],
            reason: "the exponential map of each finite stage has cokernel of growing rank, and the limit is free of countable rank".into(),
        },
        Some(Builtin::FullShift2) => {
            K1Fact::Known { statements: vec!["K1(F(inf)) = 0".into()], reason: "F(inf) is the UHF algebra of type 2^inf".into() }
        }
        None => K1Fact::Unknown,
    }
}

/// Tag of a singular block relative to its point, for reports.
pub fn block_orbit(block: &Block) -> Option<(PointId, usize, &[usize])> {
    match &block.kind {
        BlockKind::Compact => None,
        BlockKind::Singular { branch, depth, prefix } => Some((*branch, *depth, prefix)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::DEFAULT_SIZE_GUARD;
    use crate::lattice::{rational, to_bigints};

    #[test]
    fn ranks_of_small_levels() {
        let t = Builtin::Tent.spec();
        for n in 0..4 {
            assert_eq!(k0_finite(&t, n).unwrap().rank(), n + 1);
        }
        let g = Builtin::Gasket.spec();
        for n in 0..3 {
            assert_eq!(k0_finite(&g, n).unwrap().rank(), 3 * n + 1);
        }
        assert_eq!(k0_finite(&Builtin::FullShift2.spec(), 3).unwrap().rank(), 1);
    }

    #[test]
    fn labelled_bases_lie_in_lattice() {
        for spec in [Builtin::Tent.spec(), Builtin::Gasket.spec()] {
            for n in 1..4 {
                let pres = k0_finite(&spec, n).unwrap();
                let lb = pres.labelled.as_ref().unwrap();
                assert_eq!(lb.vectors.rows(), pres.rank());
                let gens = Lattice::from_generators(&lb.vectors);
                assert_eq!(&gens, &pres.lattice);
            }
        }
    }

    #[test]
    fn identity_realizes_to_identity() {
        let t = Builtin::Tent.spec();
        let level = Level::build(&t, 2, DEFAULT_SIZE_GUARD).unwrap();
        let rc = realize_class(&level, &level.presentation.identity).unwrap();
        assert_eq!(rc.amplification, 1);
        for f in &rc.fibers {
            assert_eq!(f, &RationalMatrix::identity(4));
        }
    }

    #[test]
    fn realize_rejects_bad_classes() {
        let t = Builtin::Tent.spec();
        let level = Level::build(&t, 2, DEFAULT_SIZE_GUARD).unwrap();
        let neg = to_bigints(&[-1, 1, 0, 0]);
        assert_eq!(realize_class(&level, &neg).unwrap_err(), DimensionError::NegativeEntry(0));
        let uneven = to_bigints(&[1, 1, 0, 1]);
        assert!(matches!(realize_class(&level, &uneven), Err(DimensionError::RankMismatch(_))));
    }

    #[test]
    fn fullshift_doubles() {
        let f = Builtin::FullShift2.spec();
        let mut tower = Tower::new(&f, DEFAULT_SIZE_GUARD);
        assert_eq!(tower.inclusion(2).unwrap().matrix, IntegerMatrix::from_rows(&[vec![2]], 1).unwrap());
        assert_eq!(tower.beta(2).unwrap().matrix, IntegerMatrix::identity(1));
    }

    #[test]
    fn tent_first_inclusion() {
        let t = Builtin::Tent.spec();
        let mut tower = Tower::new(&t, DEFAULT_SIZE_GUARD);
        let map = tower.inclusion(1).unwrap();
        let expect = IntegerMatrix::from_rows(&[vec![0, -1], vec![1, 2], vec![1, 1]], 2).unwrap();
        assert_eq!(map.labelled.as_ref().unwrap(), &expect);
    }

    #[test]
    fn limit_trace_of_identity_is_one() {
        let g = Builtin::Gasket.spec();
        let mut tower = Tower::new(&g, DEFAULT_SIZE_GUARD);
        for n in 0..3 {
            let f = tower.limit_trace_functional(n).unwrap();
            let id = tower.level(n).unwrap().presentation.identity.clone();
            assert_eq!(pair(&f, &id), rational(1, 1));
        }
    }

    #[test]
    fn k1_for_custom_maps_is_unknown() {
        let mut s = Builtin::Tent.spec();
        assert!(matches!(k1_metadata(&s), K1Fact::Known { .. }));
        s = MapSpec::parse(&s.to_string()).unwrap();
        assert_eq!(k1_metadata(&s), K1Fact::Unknown);
    }
}
