//! Command-line front end. `run` takes the raw argument list and returns the
//! exit code together with everything destined for stdout and stderr, so the
//! binary is a thin wrapper and tests can drive the CLI in-process.

use std::ffi::OsString;
use std::fmt::Write as _;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_traits::ToPrimitive;
use serde::Serialize;
use serde_json::{json, Value};

use crate::dimension::{self, k1_metadata, trace_pairing, LevelMap, Tower};
use crate::fiber::{build_fiber, fiber_decomposition, FiberDecomposition, DEFAULT_SIZE_GUARD};
use crate::lattice::{IntegerMatrix, Rational, RationalMatrix};
use crate::spec::{MapSpec, PqOrbit, Site};
use crate::{load_spec, Error};

pub const SIZE_GUARD_ENV: &str = "SSMK_SIZE_GUARD";

#[derive(Debug, Parser)]
#[command(name = "ssmk", version, about = "Exact K-theory of cores of branched self-similar maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output format; dot is only available for `orbits`.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Add decimal renderings next to exact values in text output.
    #[arg(long, global = true)]
    pub approx: bool,
    /// Largest matrix dimension a fiber may be realized at.
    #[arg(long, global = true, env = SIZE_GUARD_ENV, default_value_t = DEFAULT_SIZE_GUARD)]
    pub size_guard: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Dot,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a map description and print its derived sets.
    Validate { spec: String },
    /// Enumerate p-q orbit families ending at a branched point.
    Orbits {
        spec: String,
        #[arg(long)]
        point: Option<String>,
        /// Total length p + q of the orbit pictures.
        #[arg(long, default_value_t = 3)]
        depth: usize,
    },
    /// Branched points and branch values of the n-th iterate.
    BranchSets {
        spec: String,
        #[arg(short = 'n', default_value_t = 1)]
        n: usize,
    },
    /// Block decomposition of the level-n fibers.
    Fibers {
        spec: String,
        #[arg(short = 'n', default_value_t = 1)]
        n: usize,
        #[arg(long)]
        point: Option<String>,
    },
    /// K₀ lattice of the level-n core.
    K0 {
        spec: String,
        #[arg(short = 'n', default_value_t = 1)]
        n: usize,
    },
    /// Inclusion matrix from level n to level n+1.
    Embed {
        spec: String,
        #[arg(short = 'n', default_value_t = 1)]
        n: usize,
    },
    /// Trace pairing on the level-n K₀ basis.
    Traces {
        spec: String,
        #[arg(short = 'n', default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        rmax: usize,
    },
    /// Shift endomorphism from level n to level n+1.
    Beta {
        spec: String,
        #[arg(short = 'n', default_value_t = 1)]
        n: usize,
    },
    /// Everything about the inductive limit up to level `max`.
    Limit {
        spec: String,
        #[arg(long, default_value_t = 3)]
        max: usize,
        #[arg(long, default_value_t = 2)]
        rmax: usize,
    },
}

impl Command {
    fn spec_source(&self) -> &str {
        match self {
            Command::Validate { spec }
            | Command::Orbits { spec, .. }
            | Command::BranchSets { spec, .. }
            | Command::Fibers { spec, .. }
            | Command::K0 { spec, .. }
            | Command::Embed { spec, .. }
            | Command::Traces { spec, .. }
            | Command::Beta { spec, .. }
            | Command::Limit { spec, .. } => spec,
        }
    }

    fn level(&self) -> Option<usize> {
        match self {
            Command::Validate { .. } | Command::Orbits { .. } => None,
            Command::BranchSets { n, .. }
            | Command::Fibers { n, .. }
            | Command::K0 { n, .. }
            | Command::Embed { n, .. }
            | Command::Traces { n, .. }
            | Command::Beta { n, .. } => Some(*n),
            Command::Limit { max, .. } => Some(*max),
        }
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: u8,
    pub stdout: String,
    pub stderr: String,
}

/// A rendered result: the JSON payload plus its human-readable form.
struct Report {
    json: Value,
    text: String,
}

pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                Outcome { code, stdout: String::new(), stderr: rendered }
            } else {
                Outcome { code, stdout: rendered, stderr: String::new() }
            };
        }
    };
    if cli.common.format == Format::Dot && !matches!(cli.command, Command::Orbits { .. }) {
        return Outcome { code: 2, stdout: String::new(), stderr: "error: --format dot is only valid for `orbits`\n".into() };
    }
    execute(&cli)
}

fn execute(cli: &Cli) -> Outcome {
    let spec = match load_spec(cli.command.spec_source()) {
        Ok(spec) => spec,
        Err(e) => return failure(&e),
    };
    if let (Command::Orbits { point, depth, .. }, Format::Dot) = (&cli.command, cli.common.format) {
        return match orbit_families(&spec, point.as_deref(), *depth) {
            Ok(orbits) => Outcome { code: 0, stdout: emit_orbit_dot(&spec, &orbits), stderr: String::new() },
            Err(e) => failure(&e),
        };
    }
    let report = match dispatch(&spec, &cli.command, &cli.common) {
        Ok(report) => report,
        Err(e) => return failure(&e),
    };
    let stdout = match cli.common.format {
        Format::Json => {
            let doc = json!({
                "meta": {
                    "spec": spec.name(),
                    "level": cli.command.level(),
                    "assumptions": { "connected_base": "assumed" },
                },
                "result": report.json,
            });
            let mut s = serde_json::to_string_pretty(&doc).expect("json values always serialize");
            s.push('\n');
            s
        }
        _ => report.text,
    };
    Outcome { code: 0, stdout, stderr: String::new() }
}

fn failure(e: &Error) -> Outcome {
    Outcome { code: 1, stdout: String::new(), stderr: format!("{}: {e}\n", e.name()) }
}

fn dispatch(spec: &MapSpec, command: &Command, common: &Common) -> Result<Report, Error> {
    let approx = common.approx;
    let guard = common.size_guard;
    match command {
        Command::Validate { .. } => Ok(validate_report(spec)),
        Command::Orbits { point, depth, .. } => Ok(orbits_report(spec, &orbit_families(spec, point.as_deref(), *depth)?)),
        Command::BranchSets { n, .. } => branch_sets_report(spec, *n),
        Command::Fibers { n, point, .. } => fibers_report(spec, *n, point.as_deref(), guard),
        Command::K0 { n, .. } => k0_report(spec, *n, guard),
        Command::Embed { n, .. } => map_report(spec, *n, guard, dimension::MapKind::Inclusion),
        Command::Beta { n, .. } => map_report(spec, *n, guard, dimension::MapKind::Beta),
        Command::Traces { n, rmax, .. } => traces_report(spec, *n, *rmax, guard, approx),
        Command::Limit { max, rmax, .. } => limit_report(spec, *max, *rmax, guard, approx),
    }
}

fn labels(spec: &MapSpec, ids: &[crate::spec::PointId]) -> Vec<String> {
    ids.iter().map(|&x| spec.label(x).to_string()).collect()
}

fn set(items: &[String]) -> String {
    format!("{{{}}}", items.join(", "))
}

fn validate_report(spec: &MapSpec) -> Report {
    let points: Vec<String> = spec.points().map(|x| spec.label(x).to_string()).collect();
    let branched = labels(spec, spec.branched());
    let values = labels(spec, spec.branch_values());
    let post = labels(spec, spec.postcritical());
    let multiplicities: Vec<Value> = spec
        .branched()
        .iter()
        .map(|&b| json!({ "point": spec.label(b), "source": spec.label(spec.h(b)), "entry_indices": spec.entry_indices(b) }))
        .collect();
    let mut text = String::new();
    writeln!(text, "{} is valid", spec.name()).ok();
    writeln!(text, "branch count N = {}", spec.branch_count()).ok();
    writeln!(text, "points   {}", set(&points)).ok();
    writeln!(text, "B        {}", set(&branched)).ok();
    writeln!(text, "C        {}", set(&values)).ok();
    writeln!(text, "P        {}", set(&post)).ok();
    for &b in spec.branched() {
        writeln!(
            text,
            "e({}) = {}  via gamma_j({}) for j in {:?}",
            spec.label(b),
            spec.multiplicity(b),
            spec.label(spec.h(b)),
            spec.entry_indices(b)
        )
        .ok();
    }
    Report {
        json: json!({
            "valid": true,
            "branch_count": spec.branch_count(),
            "points": points,
            "branched": branched,
            "branch_values": values,
            "postcritical": post,
            "multiplicities": multiplicities,
            "definition": spec.to_string(),
        }),
        text,
    }
}

fn orbit_families(spec: &MapSpec, point: Option<&str>, depth: usize) -> Result<Vec<PqOrbit>, Error> {
    let starts = match point {
        Some(label) => vec![spec.point(label)?],
        None => spec.points().collect(),
    };
    Ok(starts.into_iter().flat_map(|x| (1..=depth).flat_map(move |p| spec.pq_orbits(x, p, depth - p))).collect())
}

fn orbits_report(spec: &MapSpec, orbits: &[PqOrbit]) -> Report {
    let mut text = String::new();
    if orbits.is_empty() {
        writeln!(text, "no orbit families").ok();
    }
    let mut rows = Vec::new();
    for o in orbits {
        let path: Vec<&str> = o.path.iter().map(|&x| spec.label(x)).collect();
        writeln!(
            text,
            "{} p={} q={}: {} via j in {:?}, {} continuations, {} orbits",
            spec.label(o.start),
            o.p,
            o.q,
            path.join(" -> "),
            o.entry,
            o.suffix_count,
            o.count()
        )
        .ok();
        rows.push(json!({
            "start": spec.label(o.start),
            "branched_point": spec.label(o.base),
            "p": o.p,
            "q": o.q,
            "path": path,
            "prefix": o.prefix,
            "entry_indices": o.entry,
            "suffix_count": o.suffix_count.to_string(),
            "count": o.count().to_string(),
        }));
    }
    Report { json: Value::Array(rows), text }
}

/// Graphviz rendering of orbit pictures, one cluster per family.
pub fn emit_orbit_dot(spec: &MapSpec, orbits: &[PqOrbit]) -> String {
    let mut out = String::from("digraph orbits {\n");
    if !orbits.is_empty() {
        out.push_str("  rankdir=LR;\n  node [shape=circle];\n");
    }
    for (f, o) in orbits.iter().enumerate() {
        let node = |k: usize| format!("f{f}_{k}");
        writeln!(out, "  subgraph cluster_{f} {{").ok();
        writeln!(out, "    label=\"Orbit_{}-{}({}) from {}\";", o.p, o.q, dot_escape(spec.label(o.base)), dot_escape(spec.label(o.start)))
            .ok();
        for (k, &x) in o.path.iter().enumerate() {
            if k == o.p && o.q > 0 {
                writeln!(
                    out,
                    "    {} [label=\"{}\", xlabel=\"x {}^{} = {}\"];",
                    node(k),
                    dot_escape(spec.label(x)),
                    spec.branch_count(),
                    o.q,
                    o.suffix_count
                )
                .ok();
            } else {
                writeln!(out, "    {} [label=\"{}\"];", node(k), dot_escape(spec.label(x))).ok();
            }
        }
        for (k, j) in o.prefix.iter().enumerate() {
            writeln!(out, "    {} -> {} [label=\"gamma_{j}\"];", node(k), node(k + 1)).ok();
        }
        let entry: Vec<String> = o.entry.iter().map(|j| format!("gamma_{j}")).collect();
        writeln!(
            out,
            "    {} -> {} [label=\"{}\", penwidth={}, color=\"black:invis:black\"];",
            node(o.p - 1),
            node(o.p),
            entry.join(","),
            o.entry.len()
        )
        .ok();
        out.push_str("  }\n");
    }
    out.push_str("}\n");
    out
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn branch_sets_report(spec: &MapSpec, n: usize) -> Result<Report, Error> {
    let sets = spec.level_branch_sets(n)?;
    let values = labels(spec, &sets.values);
    let mut text = String::new();
    writeln!(text, "level {n}: |B| = {} (distinct words counted separately)", sets.branched_count).ok();
    writeln!(text, "C = {}", set(&values)).ok();
    writeln!(text, "nested in C of level {}: {}", n + 1, sets.nested).ok();
    let mut words = Vec::new();
    for (word, y) in spec.branch_words(n).take(256) {
        let w: Vec<String> = word.iter().map(usize::to_string).collect();
        writeln!(text, "  {} -> {}", w.join(""), spec.label(y)).ok();
        words.push(json!({ "word": word, "point": spec.label(y) }));
    }
    if sets.branched_count > 256 {
        writeln!(text, "  ... ({} more)", sets.branched_count - 256).ok();
    }
    Ok(Report {
        json: json!({
            "level": n,
            "branched_count": sets.branched_count.to_string(),
            "branch_values": values,
            "nested": sets.nested,
            "words": words,
        }),
        text,
    })
}

fn algebra_string(d: &FiberDecomposition) -> String {
    d.blocks.iter().map(|b| if b.size == 1 { "C".to_string() } else { format!("M_{}", b.size) }).collect::<Vec<_>>().join(" ⊕ ")
}

fn fibers_report(spec: &MapSpec, n: usize, point: Option<&str>, guard: usize) -> Result<Report, Error> {
    let sites: Vec<Site> = match point {
        Some(label) => vec![spec.site(label)?],
        None => spec.points().map(Site::Special).chain([Site::Generic]).collect(),
    };
    let mut text = String::new();
    let mut rows = Vec::new();
    for site in sites {
        let d = fiber_decomposition(spec, site, n)?;
        if (spec.branch_count() as u128).pow(n as u32) <= guard as u128 {
            build_fiber(spec, site, n, guard)?;
        }
        writeln!(text, "{} at level {n}: {}", spec.site_label(site), algebra_string(&d)).ok();
        let mut blocks = Vec::new();
        for b in &d.blocks {
            let tag = b.tag(spec, site);
            writeln!(text, "  {tag:<16} M_{:<6} weight {}", b.size, b.weight).ok();
            blocks.push(json!({ "tag": tag, "size": b.size.to_string(), "weight": b.weight, "kind": b.kind }));
        }
        let parts: Vec<String> = d.blocks.iter().map(|b| format!("{}*{}", b.weight, b.size)).collect();
        writeln!(text, "  dimension {} = {}", d.dimension, parts.join(" + ")).ok();
        rows.push(json!({
            "point": spec.site_label(site),
            "algebra": algebra_string(&d),
            "blocks": blocks,
            "dimension": d.dimension.to_string(),
            "weighted_size": d.weighted_size().to_string(),
        }));
    }
    Ok(Report { json: Value::Array(rows), text })
}

fn strings<T: ToString>(v: &[T]) -> Vec<String> {
    v.iter().map(T::to_string).collect()
}

fn k0_report(spec: &MapSpec, n: usize, guard: usize) -> Result<Report, Error> {
    let mut tower = Tower::new(spec, guard);
    let pres = &tower.level(n)?.presentation;
    let ambient = pres.ambient_labels(spec);
    let basis = pres.lattice.basis().clone();
    let identity_coords = pres.coordinates_of(&pres.identity)?;
    let mut text = String::new();
    writeln!(text, "K0 at level {n}: Z^{}", pres.rank()).ok();
    writeln!(text, "ambient coordinates: {}", ambient.join(", ")).ok();
    writeln!(text, "lattice basis (rows):").ok();
    write!(text, "{basis}").ok();
    writeln!(text, "class of the unit: ({}) = {:?} in the basis", strings(&pres.identity).join(", "), strings(&identity_coords)).ok();
    if let Some(lb) = &pres.labelled {
        writeln!(text, "labelled basis:").ok();
        for (i, label) in lb.labels.iter().enumerate() {
            writeln!(text, "  {label:<6} = ({})", strings(lb.vectors.row(i)).join(", ")).ok();
        }
    }
    Ok(Report {
        json: json!({
            "level": n,
            "rank": pres.rank(),
            "ambient": ambient,
            "coordinates": pres.coordinates,
            "rank_functionals": pres.rank_functionals,
            "basis": basis,
            "identity": strings(&pres.identity),
            "identity_coordinates": strings(&identity_coords),
            "labelled_basis": pres.labelled,
            "k1": k1_metadata(spec),
        }),
        text,
    })
}

fn map_text(map: &LevelMap, name: &str) -> String {
    let mut text = String::new();
    writeln!(text, "{name} from level {} to level {} ({}x{}):", map.from_level, map.from_level + 1, map.matrix.rows(), map.matrix.cols())
        .ok();
    write!(text, "{}", map.matrix).ok();
    if let Some(l) = &map.labelled {
        writeln!(text, "in the labelled bases:").ok();
        write!(text, "{l}").ok();
    }
    writeln!(text, "injective: {}", map.is_injective()).ok();
    text
}

fn map_report(spec: &MapSpec, n: usize, guard: usize, kind: dimension::MapKind) -> Result<Report, Error> {
    let mut tower = Tower::new(spec, guard);
    let map = match kind {
        dimension::MapKind::Inclusion => tower.inclusion(n)?.clone(),
        dimension::MapKind::Beta => tower.beta(n)?.clone(),
    };
    let name = match kind {
        dimension::MapKind::Inclusion => "inclusion",
        dimension::MapKind::Beta => "beta",
    };
    let mut json = serde_json::to_value(&map).expect("level maps serialize");
    json["injective"] = Value::Bool(map.is_injective());
    Ok(Report { json, text: map_text(&map, name) })
}

fn rational_cell(x: &Rational, approx: bool) -> String {
    if approx && !x.is_integer() {
        format!("{x} (~{:.6})", x.to_f64().unwrap_or(f64::NAN))
    } else {
        x.to_string()
    }
}

fn rational_table(m: &RationalMatrix, row_labels: &[String], approx: bool) -> String {
    let cells: Vec<Vec<String>> = (0..m.rows()).map(|i| (0..m.cols()).map(|j| rational_cell(&m[(i, j)], approx)).collect()).collect();
    let width = cells.iter().flatten().map(|c| c.chars().count()).max().unwrap_or(1);
    let lw = row_labels.iter().map(|l| l.chars().count()).max().unwrap_or(0);
    let mut text = String::new();
    for (label, row) in row_labels.iter().zip(&cells) {
        let line: Vec<String> = row.iter().map(|c| format!("{c:>width$}")).collect();
        writeln!(text, "  {label:<lw$}  {}", line.join("  ")).ok();
    }
    text
}

fn approx_matrix(m: &RationalMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| m[(i, j)].to_f64().unwrap_or(f64::NAN)).collect()).collect()
}

fn traces_report(spec: &MapSpec, n: usize, r_max: usize, guard: usize, approx: bool) -> Result<Report, Error> {
    let mut tower = Tower::new(spec, guard);
    let pairing = trace_pairing(&mut tower, n, r_max)?;
    let mut text = String::new();
    writeln!(text, "trace pairing at level {n}: rows are traces, columns the K0 basis").ok();
    text.push_str(&rational_table(&pairing.values, &pairing.labels, approx));
    let mut json = serde_json::to_value(&pairing).expect("trace pairings serialize");
    if approx {
        json["approx"] = json!(approx_matrix(&pairing.values));
    }
    Ok(Report { json, text })
}

fn int_rows(m: &IntegerMatrix) -> String {
    (0..m.rows()).map(|i| format!("({})", strings(m.row(i)).join(", "))).collect::<Vec<_>>().join(" ")
}

fn limit_report(spec: &MapSpec, n_max: usize, r_max: usize, guard: usize, approx: bool) -> Result<Report, Error> {
    let report = dimension::limit_report(spec, n_max, r_max, guard)?;
    let k1 = k1_metadata(spec);
    let mut text = String::new();
    writeln!(text, "inductive limit of {} up to level {n_max}", spec.name()).ok();
    for l in &report.levels {
        writeln!(text, "level {}: K0 = Z^{}, unit = ({})", l.level, l.rank, strings(&l.identity).join(", ")).ok();
    }
    for m in &report.inclusions {
        text.push_str(&map_text(m, "inclusion"));
    }
    for m in &report.betas {
        text.push_str(&map_text(m, "beta"));
    }
    writeln!(text, "inclusions injective: {:?}", report.injective).ok();
    writeln!(text, "trace pairing invariant under inclusions: {}", report.trace_invariant).ok();
    for (p, c) in report.generators.iter().zip(&report.c_vectors) {
        let c: Vec<String> = c.iter().map(|x| rational_cell(x, approx)).collect();
        writeln!(text, "generator ({}) has trace vector ({})", strings(p).join(", "), c.join(", ")).ok();
    }
    writeln!(text, "beta shifts generators: {:?}", report.beta_shifts_generators).ok();
    for g in &report.free_generation {
        let coeff = g.coefficients.as_ref().map(int_rows).unwrap_or_else(|| "-".into());
        writeln!(text, "level {}: generators independent {} coefficients {coeff}", g.level, g.independent).ok();
    }
    for d in &report.divisibility {
        writeln!(text, "stage {}: [p1] divisible by {}: {}", d.stage, d.divisor, d.solvable).ok();
    }
    match &k1 {
        dimension::K1Fact::Known { statements, reason } => {
            writeln!(text, "K1: {} ({reason})", statements.join("; ")).ok();
        }
        dimension::K1Fact::Unknown => {
            writeln!(text, "K1: unknown for this map").ok();
        }
    }
    #[derive(Serialize)]
    struct Limit<'a> {
        #[serde(flatten)]
        report: &'a dimension::LimitReport,
        k1: &'a dimension::K1Fact,
    }
    let json = serde_json::to_value(Limit { report: &report, k1: &k1 }).expect("limit reports serialize");
    Ok(Report { json, text })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> Outcome {
        run(std::iter::once("ssmk").chain(args.iter().copied()))
    }

    #[test]
    fn dot_rejected_outside_orbits() {
        let out = run_args(&["k0", "tent", "-n", "1", "--format", "dot"]);
        assert_eq!(out.code, 2);
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(run_args(&["frobnicate", "tent"]).code, 2);
    }

    #[test]
    fn empty_orbit_set_gives_empty_digraph() {
        let spec = crate::Builtin::FullShift2.spec();
        assert_eq!(emit_orbit_dot(&spec, &[]), "digraph orbits {\n}\n");
    }

    #[test]
    fn tent_orbit_from_one() {
        let spec = crate::Builtin::Tent.spec();
        let orbits = orbit_families(&spec, Some("1"), 1).unwrap();
        let dot = emit_orbit_dot(&spec, &orbits);
        assert!(dot.contains("f0_0 [label=\"1\"]"));
        assert!(dot.contains("f0_1 [label=\"half\"]"));
        assert!(dot.contains("label=\"gamma_0,gamma_1\", penwidth=2"));
    }

    #[test]
    fn missing_file_exits_one() {
        let out = run_args(&["validate", "/nonexistent/broken.toml"]);
        assert_eq!(out.code, 1);
        assert!(out.stderr.starts_with("Io:"));
    }
}
