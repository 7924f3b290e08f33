//! Finite combinatorial data of a branched self-similar map.
//!
//! A map is given by its contractions γ_j restricted to a finite set S of
//! special points. Everything else (the expanding map h, branched points B,
//! branch values C, the postcritical set) is derived on validation.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpecError {
    #[error("cannot parse map description: {0}")]
    Parse(String),
    #[error("branch_count must be at least 2, got {0}")]
    BranchCountTooSmall(i64),
    #[error("point `{0}` is declared twice")]
    DuplicatePoint(String),
    #[error("unknown point `{0}`")]
    UnknownPoint(String),
    #[error("index `{index}` in gamma.{point} is outside 0..{branch_count}")]
    IndexOutOfRange { point: String, index: String, branch_count: usize },
    #[error("index {index} appears twice in gamma.{point}")]
    DuplicateIndex { point: String, index: usize },
    #[error("point `{0}` is the image of two different source points")]
    DuplicateTarget(String),
    #[error("point `{0}` is not the image of any source point")]
    OrphanPoint(String),
    #[error("branched point `{0}` lies on the forward orbit of a branched point")]
    BranchOnPostcritical(String),
    #[error("level must be at least 1")]
    LevelZero,
    #[error("level {0} is too large for exact counting")]
    LevelTooLarge(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct PointId(pub usize);

/// Either a special point or a point outside S, where nothing is identified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Site {
    Special(PointId),
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Tent,
    Gasket,
    FullShift2,
}

impl Builtin {
    pub const ALL: [Builtin; 3] = [Builtin::Tent, Builtin::Gasket, Builtin::FullShift2];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Tent => "tent",
            Builtin::Gasket => "gasket",
            Builtin::FullShift2 => "fullshift2",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == name)
    }

    pub fn source(self) -> &'static str {
        match self {
            Builtin::Tent => TENT,
            Builtin::Gasket => GASKET,
            Builtin::FullShift2 => FULLSHIFT2,
        }
    }

    pub fn spec(self) -> MapSpec {
        let mut spec = MapSpec::parse(self.source()).expect("built-in maps are valid");
        spec.name = self.name().to_string();
        spec.builtin = Some(self);
        spec
    }
}

const TENT: &str = r#"
branch_count = 2
points = ["0", "1", "half"]

[gamma.0]
0 = "0"
1 = "1"

[gamma.1]
0 = "half"
1 = "half"
"#;

const GASKET: &str = r#"
branch_count = 3
points = ["P", "Q", "R", "S", "T", "U"]

[gamma.P]
0 = "P"
1 = "T"
2 = "T"

[gamma.Q]
0 = "S"
1 = "S"
2 = "R"

[gamma.R]
0 = "U"
1 = "Q"
2 = "U"
"#;

const FULLSHIFT2: &str = r#"
branch_count = 2
points = ["0", "1"]

[gamma.0]
0 = "0"

[gamma.1]
1 = "1"
"#;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    name: Option<String>,
    branch_count: i64,
    points: Vec<String>,
    #[serde(default)]
    gamma: BTreeMap<String, BTreeMap<String, String>>,
}

#[derive(Debug, Clone)]
pub struct MapSpec {
    name: String,
    builtin: Option<Builtin>,
    branch_count: usize,
    labels: Vec<String>,
    index: HashMap<String, PointId>,
    images: Vec<Vec<Option<PointId>>>,
    parent: Vec<PointId>,
    entry: Vec<Vec<usize>>,
    branched: Vec<PointId>,
    values: Vec<PointId>,
    postcritical: Vec<PointId>,
}

/// A family of backward orbits from `start` reaching the branched point
/// `base` after `p` steps and continuing freely for `q` more.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PqOrbit {
    pub start: PointId,
    pub base: PointId,
    pub p: usize,
    pub q: usize,
    /// start = path[0], …, path[p-1] = h(base), path[p] = base.
    pub path: Vec<PointId>,
    pub prefix: Vec<usize>,
    pub entry: Vec<usize>,
    pub suffix_count: u128,
}

impl PqOrbit {
    pub fn count(&self) -> u128 {
        self.entry.len() as u128 * self.suffix_count
    }
}

#[derive(Debug, Clone)]
pub struct LevelBranchSets {
    pub level: usize,
    /// |B_{γⁿ}| with distinct words counted as distinct points.
    pub branched_count: u128,
    pub values: Vec<PointId>,
    pub nested: bool,
}

/// Where a backward word from a special point ends up.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Special(PointId),
    /// Left S from `anchor` through index `exit` after `steps` steps; `tail`
    /// encodes the remaining digits.
    Generic {
        anchor: PointId,
        exit: usize,
        steps: usize,
        tail: usize,
    },
}

impl MapSpec {
    pub fn parse(text: &str) -> Result<Self, Vec<SpecError>> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| vec![SpecError::Parse(e.message().to_string())])?;
        Self::validate(raw)
    }

    fn validate(raw: RawSpec) -> Result<Self, Vec<SpecError>> {
        let mut errors = Vec::new();
        if raw.branch_count < 2 {
            return Err(vec![SpecError::BranchCountTooSmall(raw.branch_count)]);
        }
        let n = raw.branch_count as usize;
        let mut index = HashMap::new();
        for (i, label) in raw.points.iter().enumerate() {
            if index.insert(label.clone(), PointId(i)).is_some() {
                errors.push(SpecError::DuplicatePoint(label.clone()));
            }
        }
        let count = raw.points.len();
        let mut images = vec![vec![None; n]; count];
        let mut sources: Vec<Vec<PointId>> = vec![Vec::new(); count];
        for source in raw.gamma.keys() {
            if !index.contains_key(source) {
                errors.push(SpecError::UnknownPoint(source.clone()));
            }
        }
        for (x, label) in raw.points.iter().enumerate() {
            let Some(table) = raw.gamma.get(label) else { continue };
            let mut seen = Vec::new();
            for (key, target) in table {
                let j = match key.trim().parse::<usize>() {
                    Ok(j) if j < n => j,
                    _ => {
                        errors.push(SpecError::IndexOutOfRange { point: label.clone(), index: key.clone(), branch_count: n });
                        continue;
                    }
                };
                if seen.contains(&j) {
                    errors.push(SpecError::DuplicateIndex { point: label.clone(), index: j });
                    continue;
                }
                seen.push(j);
                let Some(&y) = index.get(target) else {
                    errors.push(SpecError::UnknownPoint(target.clone()));
                    continue;
                };
                images[x][j] = Some(y);
                if !sources[y.0].contains(&PointId(x)) {
                    sources[y.0].push(PointId(x));
                }
            }
        }
        for (y, src) in sources.iter().enumerate() {
            match src.len() {
                0 => errors.push(SpecError::OrphanPoint(raw.points[y].clone())),
                1 => {}
                _ => errors.push(SpecError::DuplicateTarget(raw.points[y].clone())),
            }
        }
        if !errors.is_empty() {
            return Err(errors);
        }

        let parent: Vec<PointId> = sources.iter().map(|s| s[0]).collect();
        let mut entry = vec![Vec::new(); count];
        let mut branched = Vec::new();
        for row in &images {
            for (j, y) in row.iter().enumerate() {
                if let Some(y) = y {
                    entry[y.0].push(j);
                }
            }
        }
        for row in &images {
            for y in row.iter().flatten() {
                if entry[y.0].len() >= 2 && !branched.contains(y) {
                    branched.push(*y);
                }
            }
        }
        let mut spec = MapSpec {
            name: raw.name.unwrap_or_else(|| "custom".to_string()),
            builtin: None,
            branch_count: n,
            labels: raw.points,
            index,
            images,
            parent,
            entry,
            branched,
            values: Vec::new(),
            postcritical: Vec::new(),
        };
        for &b in &spec.branched {
            push_new(&mut spec.values, spec.parent[b.0]);
            let mut x = spec.parent[b.0];
            while !spec.postcritical.contains(&x) {
                spec.postcritical.push(x);
                x = spec.parent[x.0];
            }
        }
        let clashes: Vec<SpecError> = spec
            .branched
            .iter()
            .filter(|b| spec.postcritical.contains(b))
            .map(|&b| SpecError::BranchOnPostcritical(spec.label(b).to_string()))
            .collect();
        if clashes.is_empty() {
            Ok(spec)
        } else {
            Err(clashes)
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn builtin(&self) -> Option<Builtin> {
        self.builtin
    }

    pub fn branch_count(&self) -> usize {
        self.branch_count
    }

    pub fn point_count(&self) -> usize {
        self.labels.len()
    }

    pub fn points(&self) -> impl Iterator<Item = PointId> + '_ {
        (0..self.labels.len()).map(PointId)
    }

    pub fn label(&self, x: PointId) -> &str {
        &self.labels[x.0]
    }

    pub fn site_label(&self, site: Site) -> &str {
        match site {
            Site::Special(x) => self.label(x),
            Site::Generic => "generic",
        }
    }

    pub fn point(&self, label: &str) -> Result<PointId, SpecError> {
        self.index.get(label).copied().ok_or_else(|| SpecError::UnknownPoint(label.to_string()))
    }

    /// `generic` names the generic site unless a special point carries that label.
    pub fn site(&self, label: &str) -> Result<Site, SpecError> {
        match self.point(label) {
            Ok(x) => Ok(Site::Special(x)),
            Err(_) if label == "generic" => Ok(Site::Generic),
            Err(e) => Err(e),
        }
    }

    /// γ_j(x) when it is special.
    pub fn image(&self, x: PointId, j: usize) -> Option<PointId> {
        self.images[x.0][j]
    }

    pub fn h(&self, y: PointId) -> PointId {
        self.parent[y.0]
    }

    pub fn h_iterate(&self, x: PointId, k: usize) -> PointId {
        (0..k).fold(x, |y, _| self.h(y))
    }

    pub fn h_iterate_label(&self, x: &str, k: usize) -> Result<&str, SpecError> {
        Ok(self.label(self.h_iterate(self.point(x)?, k)))
    }

    /// J(y): the indices j with γ_j(h(y)) = y, ascending.
    pub fn entry_indices(&self, y: PointId) -> &[usize] {
        &self.entry[y.0]
    }

    pub fn multiplicity(&self, y: PointId) -> usize {
        self.entry[y.0].len()
    }

    pub fn branched(&self) -> &[PointId] {
        &self.branched
    }

    pub fn branch_values(&self) -> &[PointId] {
        &self.values
    }

    pub fn postcritical(&self) -> &[PointId] {
        &self.postcritical
    }

    pub fn is_branched(&self, y: PointId) -> bool {
        self.branched.contains(&y)
    }

    /// ∪_{p=1..n} hᵖ(B), in order of first appearance over p then B.
    pub fn singular_points(&self, n: usize) -> Vec<PointId> {
        let mut out = Vec::new();
        for p in 1..=n {
            for &b in &self.branched {
                push_new(&mut out, self.h_iterate(b, p));
            }
        }
        out
    }

    pub fn level_branch_sets(&self, n: usize) -> Result<LevelBranchSets, SpecError> {
        if n == 0 {
            return Err(SpecError::LevelZero);
        }
        let mut total: u128 = 0;
        for k in 0..n {
            total = self
                .power(k)
                .and_then(|p| p.checked_mul(self.branched.len() as u128))
                .and_then(|t| t.checked_add(total))
                .ok_or(SpecError::LevelTooLarge(n))?;
        }
        let values = self.singular_points(n);
        let next = self.singular_points(n + 1);
        Ok(LevelBranchSets { level: n, branched_count: total, nested: values.iter().all(|v| next.contains(v)), values })
    }

    /// The points of B_{γⁿ} as (word, base) pairs, words of length below n.
    pub fn branch_words(&self, n: usize) -> impl Iterator<Item = (Vec<usize>, PointId)> + '_ {
        let big_n = self.branch_count;
        (0..n).flat_map(move |k| {
            let words = big_n.pow(k as u32);
            (0..words).flat_map(move |w| {
                let word = index_word(w, big_n, k);
                self.branched.iter().map(move |&b| (word.clone(), b))
            })
        })
    }

    pub fn power(&self, k: usize) -> Option<u128> {
        (self.branch_count as u128).checked_pow(u32::try_from(k).ok()?)
    }

    pub fn pq_orbits(&self, start: PointId, p: usize, q: usize) -> Vec<PqOrbit> {
        if p == 0 {
            return Vec::new();
        }
        let suffix_count = self.power(q).unwrap_or(u128::MAX);
        self.branched
            .iter()
            .filter(|&&b| self.h_iterate(b, p) == start)
            .map(|&b| {
                let path: Vec<PointId> = (0..=p).rev().map(|k| self.h_iterate(b, k)).collect();
                let prefix = path.windows(2).take(p - 1).map(|w| self.entry_indices(w[1])[0]).collect();
                PqOrbit { start, base: b, p, q, path, prefix, entry: self.entry_indices(b).to_vec(), suffix_count }
            })
            .collect()
    }

    /// d_n(x): the number of distinct endpoints of length-n backward words.
    pub fn backward_count(&self, site: Site, n: usize) -> Result<u128, SpecError> {
        let x = match site {
            Site::Generic => return self.power(n).ok_or(SpecError::LevelTooLarge(n)),
            Site::Special(x) => x,
        };
        let mut memo = vec![1u128; self.point_count()];
        for level in 1..=n {
            let free = self.power(level - 1).ok_or(SpecError::LevelTooLarge(n))?;
            let next = self
                .points()
                .map(|y| {
                    let mut targets: Vec<PointId> = Vec::new();
                    for t in self.images[y.0].iter().flatten() {
                        push_new(&mut targets, *t);
                    }
                    let absent = self.images[y.0].iter().filter(|t| t.is_none()).count() as u128;
                    let special: u128 = targets.iter().map(|t| memo[t.0]).sum();
                    absent.checked_mul(free).and_then(|g| g.checked_add(special))
                })
                .collect::<Option<Vec<_>>>()
                .ok_or(SpecError::LevelTooLarge(n))?;
            memo = next;
        }
        Ok(memo[x.0])
    }

    /// Where the backward word with digits `word` (first applied first) ends.
    pub fn endpoint(&self, x: PointId, word: &[usize]) -> Endpoint {
        let mut y = x;
        for (k, &j) in word.iter().enumerate() {
            match self.image(y, j) {
                Some(z) => y = z,
                None => {
                    let tail = word[k + 1..].iter().fold(0, |acc, &d| acc * self.branch_count + d);
                    return Endpoint::Generic { anchor: y, exit: j, steps: k, tail };
                }
            }
        }
        Endpoint::Special(y)
    }

    /// Words of length n (as base-N indices, most significant digit first)
    /// grouped by endpoint; classes are ordered by their smallest member.
    pub fn endpoint_classes(&self, site: Site, n: usize) -> Vec<Vec<usize>> {
        let total = self.branch_count.pow(n as u32);
        let Site::Special(x) = site else {
            return (0..total).map(|w| vec![w]).collect();
        };
        let mut classes: Vec<Vec<usize>> = Vec::new();
        let mut seen: HashMap<Endpoint, usize> = HashMap::new();
        for w in 0..total {
            let key = self.endpoint(x, &index_word(w, self.branch_count, n));
            match seen.get(&key) {
                Some(&c) => classes[c].push(w),
                None => {
                    seen.insert(key, classes.len());
                    classes.push(vec![w]);
                }
            }
        }
        classes
    }
}

impl fmt::Display for MapSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "branch_count = {}", self.branch_count)?;
        let quoted: Vec<String> = self.labels.iter().map(|l| format!("{l:?}")).collect();
        writeln!(f, "points = [{}]", quoted.join(", "))?;
        for x in self.points() {
            let row: Vec<(usize, PointId)> = self.images[x.0].iter().enumerate().filter_map(|(j, y)| y.map(|y| (j, y))).collect();
            if row.is_empty() {
                continue;
            }
            writeln!(f, "\n[gamma.{:?}]", self.label(x))?;
            for (j, y) in row {
                writeln!(f, "{j} = {:?}", self.label(y))?;
            }
        }
        Ok(())
    }
}

fn push_new<T: PartialEq>(v: &mut Vec<T>, x: T) {
    if !v.contains(&x) {
        v.push(x);
    }
}

/// Base-N index of a word, first digit most significant.
pub fn word_index(word: &[usize], n: usize) -> usize {
    word.iter().fold(0, |acc, &d| acc * n + d)
}

pub fn index_word(mut index: usize, n: usize, len: usize) -> Vec<usize> {
    let mut word = vec![0; len];
    for slot in word.iter_mut().rev() {
        *slot = index % n;
        index /= n;
    }
    word
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(spec: &MapSpec, ids: &[PointId]) -> Vec<String> {
        ids.iter().map(|&x| spec.label(x).to_string()).collect()
    }

    #[test]
    fn tent_derived_sets() {
        let t = Builtin::Tent.spec();
        assert_eq!(labels(&t, t.branched()), ["half"]);
        assert_eq!(t.entry_indices(t.point("half").unwrap()), [0, 1]);
        assert_eq!(labels(&t, t.branch_values()), ["1"]);
        let mut pc = labels(&t, t.postcritical());
        pc.sort();
        assert_eq!(pc, ["0", "1"]);
        assert_eq!(t.h_iterate_label("half", 2).unwrap(), "0");
        assert_eq!(t.h_iterate_label("half", 0).unwrap(), "half");
    }

    #[test]
    fn gasket_derived_sets() {
        let g = Builtin::Gasket.spec();
        assert_eq!(labels(&g, g.branched()), ["T", "S", "U"]);
        let mut c = labels(&g, g.branch_values());
        c.sort();
        assert_eq!(c, ["P", "Q", "R"]);
        assert_eq!(g.h_iterate_label("S", 3).unwrap(), "Q");
        assert_eq!(labels(&g, &g.singular_points(2)), ["P", "Q", "R"]);
    }

    #[test]
    fn fullshift_has_no_branching() {
        let f = Builtin::FullShift2.spec();
        assert!(f.branched().is_empty());
        assert!(f.singular_points(4).is_empty());
    }

    #[test]
    fn diagnostics_are_collected() {
        let text = "branch_count = 2\npoints = [\"a\", \"b\", \"c\"]\n[gamma.a]\n0 = \"b\"\n[gamma.c]\n1 = \"b\"\n";
        let errs = MapSpec::parse(text).unwrap_err();
        assert!(errs.contains(&SpecError::DuplicateTarget("b".into())));
        assert!(errs.contains(&SpecError::OrphanPoint("a".into())));
        assert!(errs.contains(&SpecError::OrphanPoint("c".into())));
    }

    #[test]
    fn out_of_range_index() {
        let text = "branch_count = 2\npoints = [\"a\"]\n[gamma.a]\n2 = \"a\"\n";
        let errs = MapSpec::parse(text).unwrap_err();
        assert!(matches!(errs[0], SpecError::IndexOutOfRange { .. }));
    }

    #[test]
    fn branch_on_postcritical_rejected() {
        let text = "branch_count = 2\npoints = [\"a\"]\n[gamma.a]\n0 = \"a\"\n1 = \"a\"\n";
        let errs = MapSpec::parse(text).unwrap_err();
        assert_eq!(errs, [SpecError::BranchOnPostcritical("a".into())]);
    }

    #[test]
    fn display_round_trips() {
        for b in Builtin::ALL {
            let s = b.spec();
            let again = MapSpec::parse(&s.to_string()).unwrap();
            assert_eq!(again.to_string(), s.to_string());
        }
    }

    #[test]
    fn word_digits() {
        assert_eq!(index_word(5, 2, 3), [1, 0, 1]);
        assert_eq!(word_index(&[1, 0, 1], 2), 5);
        assert_eq!(index_word(0, 3, 0), Vec::<usize>::new());
    }

    #[test]
    fn endpoint_keys() {
        let t = Builtin::Tent.spec();
        let zero = t.point("0").unwrap();
        assert_eq!(t.endpoint(zero, &[0, 1, 0]), Endpoint::Special(t.point("half").unwrap()));
        assert_eq!(t.endpoint(zero, &[0, 1, 1]), t.endpoint(zero, &[0, 1, 0]));
        assert!(matches!(t.endpoint(zero, &[1, 1, 0]), Endpoint::Generic { steps: 2, .. }));
    }
}
