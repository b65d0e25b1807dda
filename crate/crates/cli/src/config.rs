//! Flat `section.key = value` configuration files.
//!
//! Keys may be written fully qualified (`model.h_x = 0.3`) or inside an INI
//! section (`[model]` followed by `h_x = 0.3`). Blank lines and lines starting
//! with `#` or `;` are ignored. Lists are comma separated; seed lists also
//! accept a half-open range `a..b`.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `lattice.W`, `lattice.H` | 6, 6 | torus size, multiples of 3 |
//! | `model.J` | 1 | antiferromagnetic coupling |
//! | `model.h_z` | 2 | longitudinal field |
//! | `model.h_x` | required for relax/rates | transverse field(s) |
//! | `dynamics.M` | 32 | requested Trotter slices |
//! | `dynamics.steps` | 5000 | sweeps per chain |
//! | `dynamics.T` | required for relax/rates | temperatures, ascending |
//! | `dynamics.seeds` | required for relax/rates | chain seeds |
//! | `init.state` | `domain_wall` (relax), `ground` (rates) | `domain_wall` or `ground` |
//! | `init.left`, `init.right` | A, B | orderings either side of the wall / of the ground state |
//! | `init.wall` | W/2 | first column of the right domain |
//! | `collapse.inputs` | required for collapse | RateCurve CSV files |
//! | `collapse.n_min`, `collapse.n_max` | 0, 3 | exponent search interval |
//! | `pair.Z_h`, `pair.Z_p` | 1, 3 | frozen coordinations of the two-spin pair |
//! | `pair.h_x` | 0.005, 0.01, 0.02, 0.04 | fields for sw-check / ed-check |
//! | `output.dir` | | output directory |

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;
use tfim_core::lattice::{LatticeError, LatticeGeom, Sublattice};
use tfim_core::model::ModelParams;
use tfim_core::qmc::DEFAULT_SLICES;
use tfim_core::swtheory::{SwError, SwSubspace};

pub const DEFAULT_STEPS: usize = 5000;
pub const DEFAULT_PAIR_FIELDS: [f64; 4] = [0.005, 0.01, 0.02, 0.04];

const KNOWN_KEYS: &[&str] = &[
    "lattice.W",
    "lattice.H",
    "model.J",
    "model.h_z",
    "model.h_x",
    "dynamics.M",
    "dynamics.steps",
    "dynamics.T",
    "dynamics.seeds",
    "init.state",
    "init.left",
    "init.right",
    "init.wall",
    "collapse.inputs",
    "collapse.n_min",
    "collapse.n_max",
    "pair.Z_h",
    "pair.Z_p",
    "pair.h_x",
    "output.dir",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentKind {
    Relax,
    Rates,
    Collapse,
    SwCheck,
    EdCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [Self::Relax, Self::Rates, Self::Collapse, Self::SwCheck, Self::EdCheck];

    pub fn name(self) -> &'static str {
        match self {
            Self::Relax => "relax",
            Self::Rates => "rates",
            Self::Collapse => "collapse",
            Self::SwCheck => "sw-check",
            Self::EdCheck => "ed-check",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Self::Relax | Self::Rates)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment kind `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConfigErrorKind {
    Syntax,
    UnknownKey,
    Duplicate { first_line: usize },
    Missing,
    Type,
    Constraint,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub struct ConfigError {
    pub kind: ConfigErrorKind,
    /// Fully qualified key, empty for pure syntax errors.
    pub key: String,
    /// 1-based line of the offending entry; 0 when the key is absent.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.kind, self.key.is_empty()) {
            (ConfigErrorKind::Duplicate { first_line }, _) => write!(
                f,
                "duplicate key `{}` on lines {} and {}",
                self.key, first_line, self.line
            ),
            (ConfigErrorKind::Missing, _) => write!(f, "missing required key `{}`: {}", self.key, self.message),
            (_, true) => write!(f, "line {}: {}", self.line, self.message),
            (_, false) => write!(f, "`{}` (line {}): {}", self.key, self.line, self.message),
        }
    }
}

impl ConfigError {
    fn at(kind: ConfigErrorKind, key: &str, line: usize, message: impl Into<String>) -> Self {
        Self {
            kind,
            key: key.to_string(),
            line,
            message: message.into(),
        }
    }
}

/// Initial state for stochastic runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitState {
    DomainWall { left: Sublattice, right: Sublattice, wall: usize },
    Ground(Sublattice),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub kind: ExperimentKind,
    pub width: usize,
    pub height: usize,
    pub coupling: f64,
    pub longitudinal: f64,
    pub transverse: Vec<f64>,
    pub slices: usize,
    pub steps: usize,
    pub temperatures: Vec<f64>,
    pub seeds: Vec<u64>,
    pub init: InitState,
    pub collapse_inputs: Vec<PathBuf>,
    pub exponent_interval: (f64, f64),
    pub hole_coordination: u32,
    pub particle_coordination: u32,
    pub pair_fields: Vec<f64>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn geometry(&self) -> LatticeGeom {
        LatticeGeom::new(self.width, self.height).expect("validated at parse time")
    }

    pub fn params(&self, transverse: f64) -> ModelParams<f64> {
        ModelParams::new(self.coupling, transverse, self.longitudinal).expect("validated at parse time")
    }
}

struct Entry {
    value: String,
    line: usize,
}

/// Raw key/value table with line numbers; rejects unknown and duplicate keys.
fn tokenize(text: &str) -> Result<BTreeMap<String, Entry>, ConfigError> {
    let mut section = String::new();
    let mut out: BTreeMap<String, Entry> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(ConfigErrorKind::Syntax, "", line, "unterminated section header"))?
                .trim();
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(ConfigError::at(ConfigErrorKind::Syntax, "", line, "bad section name"));
            }
            section = name.to_string();
            continue;
        }
        let (k, v) = trimmed
            .split_once('=')
            .ok_or_else(|| ConfigError::at(ConfigErrorKind::Syntax, "", line, "expected `key = value`"))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::at(ConfigErrorKind::Syntax, "", line, "empty key"));
        }
        let key = if k.contains('.') || section.is_empty() {
            k.to_string()
        } else {
            format!("{section}.{k}")
        };
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::at(ConfigErrorKind::UnknownKey, &key, line, "unknown key"));
        }
        if let Some(prev) = out.get(&key) {
            return Err(ConfigError::at(
                ConfigErrorKind::Duplicate { first_line: prev.line },
                &key,
                line,
                "duplicate key",
            ));
        }
        out.insert(
            key,
            Entry {
                value: v.trim().to_string(),
                line,
            },
        );
    }
    Ok(out)
}

struct Table(BTreeMap<String, Entry>);

impl Table {
    fn line(&self, key: &str) -> usize {
        self.0.get(key).map_or(0, |e| e.line)
    }

    fn type_error(&self, key: &str, want: &str) -> ConfigError {
        ConfigError::at(ConfigErrorKind::Type, key, self.line(key), format!("expected {want}"))
    }

    fn constraint(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::at(ConfigErrorKind::Constraint, key, self.line(key), message)
    }

    fn scalar<T: FromStr>(&self, key: &str, want: &str) -> Result<Option<T>, ConfigError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|_| self.type_error(key, want)),
        }
    }

    fn list<T: FromStr>(&self, key: &str, want: &str) -> Result<Option<Vec<T>>, ConfigError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| self.type_error(key, want)))
                .collect::<Result<Vec<T>, _>>()
                .map(Some),
        }
    }

    fn seeds(&self, key: &str) -> Result<Option<Vec<u64>>, ConfigError> {
        let Some(e) = self.0.get(key) else {
            return Ok(None);
        };
        let want = "a list of unsigned integers or a range `a..b`";
        let mut seeds = Vec::new();
        for item in e.value.split(',') {
            let item = item.trim();
            if let Some((a, b)) = item.split_once("..") {
                let a: u64 = a.trim().parse().map_err(|_| self.type_error(key, want))?;
                let b: u64 = b.trim().parse().map_err(|_| self.type_error(key, want))?;
                seeds.extend(a..b);
            } else {
                seeds.push(item.parse().map_err(|_| self.type_error(key, want))?);
            }
        }
        Ok(Some(seeds))
    }

    fn required<T>(&self, key: &str, value: Option<T>, kind: ExperimentKind) -> Result<T, ConfigError> {
        value.ok_or_else(|| ConfigError::at(ConfigErrorKind::Missing, key, 0, format!("needed by `{kind}` runs")))
    }
}

/// Parses and validates a configuration for one experiment kind.
pub fn parse_config(text: &str, kind: ExperimentKind) -> Result<RunConfig, ConfigError> {
    let t = Table(tokenize(text)?);
    let stochastic = kind.is_stochastic();

    let width: usize = t.scalar("lattice.W", "a positive integer")?.unwrap_or(6);
    let height: usize = t.scalar("lattice.H", "a positive integer")?.unwrap_or(6);
    if let Err(e) = LatticeGeom::new(width, height) {
        let key = match e {
            LatticeError::TooSmall { name: "W", .. } | LatticeError::Incommensurate { name: "W", .. } => "lattice.W",
            _ => "lattice.H",
        };
        return Err(t.constraint(key, e.to_string()));
    }

    let coupling: f64 = t.scalar("model.J", "a number")?.unwrap_or(1.0);
    let longitudinal: f64 = t.scalar("model.h_z", "a number")?.unwrap_or(2.0);
    let transverse: Vec<f64> = match t.list("model.h_x", "a number or list of numbers")? {
        Some(v) => v,
        None if stochastic => t.required("model.h_x", None, kind)?,
        None => Vec::new(),
    };
    if let Err(e) = ModelParams::new(coupling, 0.0, longitudinal) {
        let key = if coupling.is_finite() && coupling > 0.0 { "model.h_z" } else { "model.J" };
        return Err(t.constraint(key, e.to_string()));
    }
    for &hx in &transverse {
        if let Err(e) = ModelParams::new(coupling, hx, longitudinal) {
            return Err(t.constraint("model.h_x", e.to_string()));
        }
    }
    if has_duplicates(&transverse) {
        return Err(t.constraint("model.h_x", "values must be distinct"));
    }

    let slices: usize = t.scalar("dynamics.M", "a positive integer")?.unwrap_or(DEFAULT_SLICES);
    if slices == 0 {
        return Err(t.constraint("dynamics.M", "must be at least 1"));
    }
    let steps: usize = t.scalar("dynamics.steps", "a positive integer")?.unwrap_or(DEFAULT_STEPS);
    if steps == 0 {
        return Err(t.constraint("dynamics.steps", "must be at least 1"));
    }
    let temperatures: Vec<f64> = match t.list("dynamics.T", "a number or list of numbers")? {
        Some(v) => v,
        None if stochastic => t.required("dynamics.T", None, kind)?,
        None => Vec::new(),
    };
    if temperatures.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(t.constraint("dynamics.T", "temperatures must be positive and finite"));
    }
    if temperatures.windows(2).any(|w| w[1] <= w[0]) {
        return Err(t.constraint("dynamics.T", "temperatures must be strictly increasing"));
    }
    let seeds = match t.seeds("dynamics.seeds")? {
        Some(v) => v,
        None if stochastic => t.required("dynamics.seeds", None, kind)?,
        None => Vec::new(),
    };
    if stochastic && seeds.is_empty() {
        return Err(t.constraint("dynamics.seeds", "seed list is empty"));
    }
    if has_duplicates(&seeds) {
        return Err(t.constraint("dynamics.seeds", "seeds must be distinct"));
    }

    let state: String = t
        .scalar("init.state", "`domain_wall` or `ground`")?
        .unwrap_or_else(|| if kind == ExperimentKind::Rates { "ground".into() } else { "domain_wall".into() });
    let left: Sublattice = t.scalar("init.left", "a sublattice A, B or C")?.unwrap_or(Sublattice::A);
    let right: Sublattice = t.scalar("init.right", "a sublattice A, B or C")?.unwrap_or(Sublattice::B);
    let wall: usize = t.scalar("init.wall", "a column index")?.unwrap_or(width / 2);
    let init = match state.as_str() {
        "domain_wall" => {
            if left == right {
                return Err(t.constraint("init.right", "must differ from init.left"));
            }
            if wall == 0 || wall >= width {
                return Err(t.constraint("init.wall", format!("must lie in 1..{width}")));
            }
            InitState::DomainWall { left, right, wall }
        }
        "ground" => InitState::Ground(left),
        _ => return Err(t.type_error("init.state", "`domain_wall` or `ground`")),
    };

    let collapse_inputs: Vec<PathBuf> = match t.0.get("collapse.inputs") {
        Some(e) => e.value.split(',').map(|s| PathBuf::from(s.trim())).collect(),
        None if kind == ExperimentKind::Collapse => t.required("collapse.inputs", None, kind)?,
        None => Vec::new(),
    };
    if collapse_inputs.iter().any(|p| p.as_os_str().is_empty()) {
        return Err(t.constraint("collapse.inputs", "empty path"));
    }
    let n_min: f64 = t.scalar("collapse.n_min", "a number")?.unwrap_or(0.0);
    let n_max: f64 = t.scalar("collapse.n_max", "a number")?.unwrap_or(3.0);
    if !(n_min.is_finite() && n_max.is_finite() && n_max > n_min) {
        return Err(t.constraint(
            if t.0.contains_key("collapse.n_max") { "collapse.n_max" } else { "collapse.n_min" },
            "need finite n_min < n_max",
        ));
    }

    let hole_coordination: u32 = t.scalar("pair.Z_h", "an integer 0..=6")?.unwrap_or(1);
    let particle_coordination: u32 = t.scalar("pair.Z_p", "an integer 0..=6")?.unwrap_or(3);
    let pair_fields: Vec<f64> = t
        .list("pair.h_x", "a list of numbers")?
        .unwrap_or_else(|| DEFAULT_PAIR_FIELDS.to_vec());
    if matches!(kind, ExperimentKind::SwCheck | ExperimentKind::EdCheck) {
        if pair_fields.len() < 3 {
            return Err(t.constraint("pair.h_x", "need at least three fields for the exponent fit"));
        }
        if pair_fields.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(t.constraint("pair.h_x", "fields must be positive"));
        }
        for &hx in &pair_fields {
            if let Err(e) = SwSubspace::new(coupling, longitudinal, hx, hole_coordination, particle_coordination) {
                let key = match e {
                    SwError::CoordinationOutOfRange { name: "Z_h", .. } | SwError::Resonant { name: "Z_h" } => "pair.Z_h",
                    SwError::CoordinationOutOfRange { .. } | SwError::Resonant { .. } => "pair.Z_p",
                    _ => "pair.h_x",
                };
                return Err(t.constraint(key, e.to_string()));
            }
        }
        if hole_coordination == particle_coordination {
            return Err(t.constraint("pair.Z_p", "must differ from pair.Z_h"));
        }
    }

    let output_dir = t.0.get("output.dir").map(|e| PathBuf::from(&e.value));

    Ok(RunConfig {
        kind,
        width,
        height,
        coupling,
        longitudinal,
        transverse,
        slices,
        steps,
        temperatures,
        seeds,
        init,
        collapse_inputs,
        exponent_interval: (n_min, n_max),
        hole_coordination,
        particle_coordination,
        pair_fields,
        output_dir,
    })
}

fn has_duplicates<T: PartialEq>(xs: &[T]) -> bool {
    xs.iter().enumerate().any(|(i, a)| xs[..i].contains(a))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL_RELAX: &str = "model.h_x = 0.3\ndynamics.T = 0.4\ndynamics.seeds = 1\n";

    #[test]
    fn minimal_relax_gets_defaults() {
        let c = parse_config(MINIMAL_RELAX, ExperimentKind::Relax).unwrap();
        assert_eq!((c.width, c.height), (6, 6));
        assert_eq!(c.slices, 32);
        assert_eq!(c.steps, DEFAULT_STEPS);
        assert_eq!((c.coupling, c.longitudinal), (1.0, 2.0));
        assert_eq!(c.transverse, vec![0.3]);
        assert_eq!(c.seeds, vec![1]);
        assert_eq!(
            c.init,
            InitState::DomainWall {
                left: Sublattice::A,
                right: Sublattice::B,
                wall: 3
            }
        );
        assert_eq!(c.exponent_interval, (0.0, 3.0));
        assert_eq!(c.output_dir, None);
    }

    #[test]
    fn sections_and_qualified_keys_mix() {
        let text = "# comment\n[lattice]\nW = 9\nmodel.h_x = 0.1, 0.2\n[dynamics]\nT = 0.5, 1\nseeds = 3..6, 10\n";
        let c = parse_config(text, ExperimentKind::Rates).unwrap();
        assert_eq!(c.width, 9);
        assert_eq!(c.transverse, vec![0.1, 0.2]);
        assert_eq!(c.temperatures, vec![0.5, 1.0]);
        assert_eq!(c.seeds, vec![3, 4, 5, 10]);
        assert_eq!(c.init, InitState::Ground(Sublattice::A));
    }

    #[test]
    fn incommensurate_width_names_the_key() {
        let err = parse_config(&format!("lattice.W = 4\n{MINIMAL_RELAX}"), ExperimentKind::Relax).unwrap_err();
        assert_eq!(err.kind, ConfigErrorKind::Constraint);
        assert_eq!(err.key, "lattice.W");
        assert_eq!(err.line, 1);
        assert!(err.to_string().contains("lattice.W"));
        let err = parse_config(&format!("{MINIMAL_RELAX}lattice.H = 5\n"), ExperimentKind::Relax).unwrap_err();
        assert_eq!((err.key.as_str(), err.line), ("lattice.H", 4));
    }

    #[test]
    fn duplicate_key_reports_both_lines() {
        let text = "model.h_x = 0.3\ndynamics.T = 0.4\n[model]\nh_x = 0.2\n";
        let err = parse_config(text, ExperimentKind::Relax).unwrap_err();
        assert_eq!(err.kind, ConfigErrorKind::Duplicate { first_line: 1 });
        assert_eq!(err.line, 4);
        let msg = err.to_string();
        assert!(msg.contains("model.h_x") && msg.contains('1') && msg.contains('4'), "{msg}");
    }

    #[test]
    fn unknown_and_malformed_entries() {
        let err = parse_config("model.hx = 0.3\n", ExperimentKind::Relax).unwrap_err();
        assert_eq!((err.kind, err.key.as_str(), err.line), (ConfigErrorKind::UnknownKey, "model.hx", 1));
        let err = parse_config("\n\njust text\n", ExperimentKind::Relax).unwrap_err();
        assert_eq!((err.kind, err.line), (ConfigErrorKind::Syntax, 3));
        let err = parse_config("[model\n", ExperimentKind::Relax).unwrap_err();
        assert_eq!(err.kind, ConfigErrorKind::Syntax);
    }

    #[test]
    fn type_mismatch_names_key_and_line() {
        let err = parse_config("model.h_x = 0.3\ndynamics.M = many\n", ExperimentKind::Relax).unwrap_err();
        assert_eq!((err.kind, err.key.as_str(), err.line), (ConfigErrorKind::Type, "dynamics.M", 2));
        let err = parse_config("dynamics.seeds = 1, x\n", ExperimentKind::SwCheck).unwrap_err();
        assert_eq!((err.kind, err.key.as_str()), (ConfigErrorKind::Type, "dynamics.seeds"));
    }

    #[test]
    fn missing_required_keys_per_kind() {
        let err = parse_config("model.h_x = 0.3\ndynamics.T = 0.4\n", ExperimentKind::Relax).unwrap_err();
        assert_eq!((err.kind, err.key.as_str()), (ConfigErrorKind::Missing, "dynamics.seeds"));
        let err = parse_config("", ExperimentKind::Collapse).unwrap_err();
        assert_eq!(err.key, "collapse.inputs");
        assert!(parse_config("", ExperimentKind::SwCheck).is_ok());
        assert!(parse_config("", ExperimentKind::EdCheck).is_ok());
    }

    #[test]
    fn constraint_violations() {
        let cases = [
            ("model.J = -1\nmodel.h_x = 0.3\ndynamics.T = 1\ndynamics.seeds = 1\n", "model.J"),
            ("model.h_x = -0.3\ndynamics.T = 1\ndynamics.seeds = 1\n", "model.h_x"),
            ("model.h_x = 0.3\ndynamics.T = 1, 0.5\ndynamics.seeds = 1\n", "dynamics.T"),
            ("model.h_x = 0.3\ndynamics.T = 0\ndynamics.seeds = 1\n", "dynamics.T"),
            ("model.h_x = 0.3\ndynamics.T = 1\ndynamics.seeds = 1, 1\n", "dynamics.seeds"),
            ("model.h_x = 0.3\ndynamics.T = 1\ndynamics.seeds = 5..5\n", "dynamics.seeds"),
            ("model.h_x = 0.3\ndynamics.T = 1\ndynamics.seeds = 1\ninit.wall = 6\n", "init.wall"),
            ("model.h_x = 0.3\ndynamics.T = 1\ndynamics.seeds = 1\ninit.right = A\n", "init.right"),
            ("model.h_x = 0.3\ndynamics.T = 1\ndynamics.seeds = 1\ndynamics.steps = 0\n", "dynamics.steps"),
        ];
        for (text, key) in cases {
            let err = parse_config(text, ExperimentKind::Relax).unwrap_err();
            assert_eq!(err.key, key, "{text}");
            assert_ne!(err.line, 0, "{text}");
        }
        let err = parse_config("pair.Z_h = 2\npair.Z_p = 3\n", ExperimentKind::SwCheck).unwrap_err();
        assert_eq!(err.key, "pair.Z_h");
        let err = parse_config("pair.Z_p = 1\n", ExperimentKind::EdCheck).unwrap_err();
        assert_eq!(err.key, "pair.Z_p");
        let err = parse_config("pair.h_x = 0.1, 0.2\n", ExperimentKind::EdCheck).unwrap_err();
        assert_eq!(err.key, "pair.h_x");
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
        assert!("relaxation".parse::<ExperimentKind>().is_err());
    }
}
