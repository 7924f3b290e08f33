//! Exact K-theory for the cores of Cuntz–Pimsner algebras attached to
//! branched self-similar maps.
//!
//! The pipeline runs bottom-up: [`spec`] validates the combinatorial data,
//! [`fiber`] builds the fiber algebras as rational matrices, and
//! [`dimension`] turns them into K₀ lattices, inclusion matrices, traces and
//! the shift endomorphism. [`lattice`] is the exact arithmetic underneath.

pub mod cli;
pub mod dimension;
pub mod fiber;
pub mod lattice;
pub mod spec;

use thiserror::Error;

pub use dimension::{k0_finite, limit_report, DimensionError, Tower};
pub use fiber::{build_fiber, FiberError, DEFAULT_SIZE_GUARD};
pub use lattice::{IntegerMatrix, Lattice, LatticeError, Rational, RationalMatrix};
pub use spec::{Builtin, MapSpec, PointId, Site, SpecError};

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid map description:{}", .0.iter().map(|e| format!("\n  {e}")).collect::<String>())]
    Invalid(Vec<SpecError>),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Fiber(#[from] FiberError),
    #[error(transparent)]
    Dimension(#[from] DimensionError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl Error {
    /// Name of the originating error variant.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Invalid(_) => "ValidationFailed",
            Error::Spec(e) => spec_error_name(e),
            Error::Fiber(e) => fiber_error_name(e),
            Error::Dimension(DimensionError::Fiber(e)) => fiber_error_name(e),
            Error::Dimension(DimensionError::Lattice(e)) | Error::Lattice(e) => lattice_error_name(e),
            Error::Dimension(DimensionError::NegativeEntry(_)) => "NegativeEntry",
            Error::Dimension(DimensionError::RankMismatch(_)) => "RankMismatch",
            Error::Dimension(DimensionError::ClassTooLarge) => "ClassTooLarge",
            Error::Io { .. } => "Io",
        }
    }
}

fn spec_error_name(e: &SpecError) -> &'static str {
    match e {
        SpecError::Parse(_) => "Parse",
        SpecError::BranchCountTooSmall(_) => "BranchCountTooSmall",
        SpecError::DuplicatePoint(_) => "DuplicatePoint",
        SpecError::UnknownPoint(_) => "UnknownPoint",
        SpecError::IndexOutOfRange { .. } => "IndexOutOfRange",
        SpecError::DuplicateIndex { .. } => "DuplicateIndex",
        SpecError::DuplicateTarget(_) => "DuplicateTarget",
        SpecError::OrphanPoint(_) => "OrphanPoint",
        SpecError::BranchOnPostcritical(_) => "BranchOnPostcritical",
        SpecError::LevelZero => "LevelZero",
        SpecError::LevelTooLarge(_) => "LevelTooLarge",
    }
}

fn fiber_error_name(e: &FiberError) -> &'static str {
    match e {
        FiberError::Spec(e) => spec_error_name(e),
        FiberError::SizeGuardExceeded { .. } => "SizeGuardExceeded",
        FiberError::ShapeMismatch(_) => "ShapeMismatch",
        FiberError::DuplicatePosition(_) => "DuplicatePosition",
        FiberError::NotAProjection => "NotAProjection",
        FiberError::NotInFiberAlgebra(_) => "NotInFiberAlgebra",
        FiberError::CapacityExceeded { .. } => "CapacityExceeded",
    }
}

fn lattice_error_name(e: &LatticeError) -> &'static str {
    match e {
        LatticeError::ShapeMismatch(_) => "ShapeMismatch",
        LatticeError::NotInLattice => "NotInLattice",
        LatticeError::BadEntry(_) => "BadEntry",
        LatticeError::NotIntegral(_) => "NotIntegral",
    }
}

/// Resolves a built-in name or reads a map description from a file.
pub fn load_spec(source: &str) -> Result<MapSpec, Error> {
    if let Some(b) = Builtin::from_name(source) {
        return Ok(b.spec());
    }
    let text = std::fs::read_to_string(source).map_err(|e| Error::Io { path: source.to_string(), source: e })?;
    let mut spec = MapSpec::parse(&text).map_err(Error::Invalid)?;
    if spec.name() == "custom" {
        let stem = std::path::Path::new(source).file_stem().and_then(|s| s.to_str()).unwrap_or(source);
        spec.set_name(stem);
    }
    Ok(spec)
}
