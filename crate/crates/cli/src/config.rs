//! Run configuration: a strict key=value tree with analytic expressions.
//!
//! The schema is a TOML-compatible subset. Unknown keys are hard errors,
//! every omitted optional key is filled with its documented default at
//! parse time, and a parsed config serializes back to text that parses to
//! an equal value. Expressions stay as source strings in `RunConfig` so
//! the round trip is exact; `compile` turns the whole thing into solver
//! inputs.
//!
//! Expression variables: `x1..xm` are spatial coordinates for initial data
//! and currents (with `t` allowed in currents only), while inside
//! `[model.anisotropy]` they denote the three magnetization components.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use micromag::demag::{build_kernel_jobs, DemagKernel};
use micromag::grid::{build_basis, Boundary, BoxDomain, SpectralBasis, VectorField};
use micromag::physics::{
    AnisotropyPotential, CurrentFn, FlowKind, ModelConfig, PhiFn, SpinCurrent,
};
use micromag::solver::StepperConfig;

use crate::error::{CliError, Result};
use crate::expr::Expr;

use toml::Value;

#[derive(Clone, Debug, PartialEq)]
pub struct DomainSection {
    pub lengths: Vec<f64>,
    pub resolution: Vec<usize>,
    /// "neumann" or "periodic"; defaults to what the flow requires.
    pub boundary: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AnisotropySpec {
    None,
    Uniaxial,
    /// A density Φ with an optional explicit gradient. When `grad` is
    /// omitted the gradient is derived symbolically; when present it is
    /// cross-checked against the symbolic derivative at sample points.
    Custom { phi: String, grad: Option<[String; 3]>, delta0: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurrentSection {
    /// One expression per domain axis.
    pub j: Vec<String>,
    /// Times at which the sup norm is sampled over [0, horizon].
    pub sample_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSection {
    /// "llg", "heat", or "heat-torus".
    pub flow: String,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub demag: bool,
    pub demag_cache: Option<String>,
    pub anisotropy: AnisotropySpec,
    pub current: Option<CurrentSection>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepperSection {
    /// "rk4" or "midpoint".
    pub scheme: String,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSection {
    pub horizon: f64,
    pub snapshot_every: usize,
    pub seed: u64,
    pub vtk: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub domain: DomainSection,
    pub modes: usize,
    pub model: ModelSection,
    /// Initial magnetization components u1, u2, u3.
    pub initial: [String; 3],
    pub stepper: StepperSection,
    pub run: RunSection,
    pub output_dir: Option<String>,
}

/// Everything the solver needs, built from a validated `RunConfig`.
pub struct CompiledRun {
    pub domain: BoxDomain,
    pub basis: Arc<SpectralBasis>,
    pub model: ModelConfig,
    pub initial: VectorField,
    pub stepper: StepperConfig,
    pub horizon: f64,
    pub snapshot_every: usize,
    pub seed: u64,
    pub vtk: bool,
    pub output_dir: Option<PathBuf>,
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let src = fs::read_to_string(path)?;
    parse_config_str(&src, path)
}

fn offset_to_line_col(src: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(src.len());
    let before = &src[..offset];
    let line = before.bytes().filter(|&b| b == b'\n').count() + 1;
    let col = before.rfind('\n').map_or(offset, |nl| offset - nl - 1) + 1;
    (line, col)
}

/// Best-effort source position of a key, for diagnostics on keys the
/// schema does not know. Matches the bare identifier on word boundaries.
fn locate_key(src: &str, leaf: &str) -> (usize, usize) {
    let is_ident = |b: u8| b.is_ascii_alphanumeric() || b == b'_' || b == b'-';
    for (ln, line) in src.lines().enumerate() {
        let bytes = line.as_bytes();
        let mut from = 0;
        while let Some(rel) = line[from..].find(leaf) {
            let at = from + rel;
            let end = at + leaf.len();
            let clean_left = at == 0 || !is_ident(bytes[at - 1]);
            let clean_right = end >= bytes.len() || !is_ident(bytes[end]);
            if clean_left && clean_right {
                return (ln + 1, at + 1);
            }
            from = at + 1;
        }
    }
    (1, 1)
}

/// Strict walker over a parsed value tree: every `take_*` consumes a key,
/// and `finish` turns any leftover key into an error pointing at it.
struct Section<'a> {
    table: toml::Table,
    path: &'a str,
    src: &'a str,
    file: &'a Path,
}

impl Section<'_> {
    fn full_key(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{}", self.path, key)
        }
    }

    fn unknown(&self, key: &str) -> CliError {
        let (line, col) = locate_key(self.src, key);
        CliError::Parse {
            path: self.file.to_path_buf(),
            line,
            col,
            message: format!("unknown key '{}'", self.full_key(key)),
        }
    }

    fn missing(&self, key: &str) -> CliError {
        CliError::Validation {
            key: self.full_key(key),
            message: "required key is missing".into(),
        }
    }

    fn bad(&self, key: &str, message: impl Into<String>) -> CliError {
        CliError::Validation { key: self.full_key(key), message: message.into() }
    }

    fn take(&mut self, key: &str) -> Option<Value> {
        self.table.remove(key)
    }

    fn finish(self) -> Result<()> {
        match self.table.keys().next() {
            Some(key) => Err(self.unknown(key)),
            None => Ok(()),
        }
    }

    fn take_f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            None => Ok(default),
            Some(Value::Float(v)) => Ok(v),
            Some(Value::Integer(v)) => Ok(v as f64),
            Some(other) => Err(self.bad(key, format!("expected a number, got {}", kind(&other)))),
        }
    }

    fn need_f64(&mut self, key: &str) -> Result<f64> {
        match self.take(key) {
            None => Err(self.missing(key)),
            Some(Value::Float(v)) => Ok(v),
            Some(Value::Integer(v)) => Ok(v as f64),
            Some(other) => Err(self.bad(key, format!("expected a number, got {}", kind(&other)))),
        }
    }

    fn take_usize(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.take(key) {
            None => Ok(default),
            Some(Value::Integer(v)) if v >= 0 => Ok(v as usize),
            Some(Value::Integer(_)) => Err(self.bad(key, "must not be negative")),
            Some(other) => {
                Err(self.bad(key, format!("expected an integer, got {}", kind(&other))))
            }
        }
    }

    fn take_u64(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.take(key) {
            None => Ok(default),
            Some(Value::Integer(v)) if v >= 0 => Ok(v as u64),
            Some(Value::Integer(_)) => Err(self.bad(key, "must not be negative")),
            Some(other) => {
                Err(self.bad(key, format!("expected an integer, got {}", kind(&other))))
            }
        }
    }

    fn take_bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(default),
            Some(Value::Boolean(v)) => Ok(v),
            Some(other) => Err(self.bad(key, format!("expected a bool, got {}", kind(&other)))),
        }
    }

    fn take_string(&mut self, key: &str, default: &str) -> Result<String> {
        match self.take(key) {
            None => Ok(default.to_string()),
            Some(Value::String(v)) => Ok(v),
            Some(other) => Err(self.bad(key, format!("expected a string, got {}", kind(&other)))),
        }
    }

    fn take_opt_string(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(v)) => Ok(Some(v)),
            Some(other) => Err(self.bad(key, format!("expected a string, got {}", kind(&other)))),
        }
    }

    fn need_string(&mut self, key: &str) -> Result<String> {
        match self.take(key) {
            None => Err(self.missing(key)),
            Some(Value::String(v)) => Ok(v),
            Some(other) => Err(self.bad(key, format!("expected a string, got {}", kind(&other)))),
        }
    }

    fn need_f64_array(&mut self, key: &str) -> Result<Vec<f64>> {
        let items = match self.take(key) {
            None => return Err(self.missing(key)),
            Some(Value::Array(items)) => items,
            Some(other) => {
                return Err(self.bad(key, format!("expected an array, got {}", kind(&other))))
            }
        };
        items
            .into_iter()
            .map(|v| match v {
                Value::Float(f) => Ok(f),
                Value::Integer(i) => Ok(i as f64),
                other => Err(self.bad(key, format!("expected numbers, got {}", kind(&other)))),
            })
            .collect()
    }

    fn need_usize_array(&mut self, key: &str) -> Result<Vec<usize>> {
        let items = match self.take(key) {
            None => return Err(self.missing(key)),
            Some(Value::Array(items)) => items,
            Some(other) => {
                return Err(self.bad(key, format!("expected an array, got {}", kind(&other))))
            }
        };
        items
            .into_iter()
            .map(|v| match v {
                Value::Integer(i) if i >= 0 => Ok(i as usize),
                Value::Integer(_) => Err(self.bad(key, "entries must not be negative")),
                other => Err(self.bad(key, format!("expected integers, got {}", kind(&other)))),
            })
            .collect()
    }

    fn need_string_array(&mut self, key: &str) -> Result<Vec<String>> {
        let items = match self.take(key) {
            None => return Err(self.missing(key)),
            Some(Value::Array(items)) => items,
            Some(other) => {
                return Err(self.bad(key, format!("expected an array, got {}", kind(&other))))
            }
        };
        items
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                other => Err(self.bad(key, format!("expected strings, got {}", kind(&other)))),
            })
            .collect()
    }

    fn sub(&mut self, key: &str, path: String) -> Result<Option<(toml::Table, String)>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some((t, path))),
            Some(other) => Err(self.bad(key, format!("expected a table, got {}", kind(&other)))),
        }
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "a string",
        Value::Integer(_) => "an integer",
        Value::Float(_) => "a float",
        Value::Boolean(_) => "a bool",
        Value::Datetime(_) => "a datetime",
        Value::Array(_) => "an array",
        Value::Table(_) => "a table",
    }
}

pub fn parse_config_str(src: &str, file: &Path) -> Result<RunConfig> {
    let root: toml::Table = toml::from_str(src).map_err(|e| {
        let (line, col) = offset_to_line_col(src, e.span().map_or(0, |s| s.start));
        CliError::Parse { path: file.to_path_buf(), line, col, message: e.message().to_string() }
    })?;
    let mut top = Section { table: root, path: "", src, file };

    let domain = {
        let (table, path) = top
            .sub("domain", "domain".into())?
            .ok_or_else(|| top.missing("domain"))?;
        let mut s = Section { table, path: &path, src, file };
        let lengths = s.need_f64_array("lengths")?;
        let resolution = s.need_usize_array("resolution")?;
        let boundary = s.take_opt_string("boundary")?;
        s.finish()?;
        (lengths, resolution, boundary)
    };

    let modes = match top.sub("galerkin", "galerkin".into())? {
        None => 8,
        Some((table, path)) => {
            let mut s = Section { table, path: &path, src, file };
            let modes = s.take_usize("modes", 8)?;
            s.finish()?;
            modes
        }
    };

    let model = {
        let (table, path) =
            top.sub("model", "model".into())?.ok_or_else(|| top.missing("model"))?;
        let mut s = Section { table, path: &path, src, file };
        let flow = s.need_string("flow")?;
        let alpha = s.take_f64("alpha", 1.0)?;
        let beta = s.take_f64("beta", 0.0)?;
        let epsilon = s.take_f64("epsilon", 0.05)?;
        let demag = s.take_bool("demag", false)?;
        let demag_cache = s.take_opt_string("demag_cache")?;
        let anisotropy = match s.take("anisotropy") {
            None => AnisotropySpec::None,
            Some(Value::String(name)) => match name.as_str() {
                "none" => AnisotropySpec::None,
                "uniaxial" => AnisotropySpec::Uniaxial,
                other => {
                    return Err(s.bad(
                        "anisotropy",
                        format!("expected \"none\", \"uniaxial\", or a table, got \"{other}\""),
                    ))
                }
            },
            Some(Value::Table(t)) => {
                let mut a = Section { table: t, path: "model.anisotropy", src, file };
                let phi = a.need_string("phi")?;
                let grad = match a.take("grad") {
                    None => None,
                    Some(Value::Array(items)) => {
                        let components: Vec<String> = items
                            .into_iter()
                            .map(|v| match v {
                                Value::String(s) => Ok(s),
                                other => Err(a.bad(
                                    "grad",
                                    format!("expected strings, got {}", kind(&other)),
                                )),
                            })
                            .collect::<Result<_>>()?;
                        let arr: [String; 3] = components.try_into().map_err(|v: Vec<String>| {
                            a.bad("grad", format!("needs exactly 3 components, got {}", v.len()))
                        })?;
                        Some(arr)
                    }
                    Some(other) => {
                        return Err(a.bad("grad", format!("expected an array, got {}", kind(&other))))
                    }
                };
                let delta0 = a.take_f64("delta0", 0.25)?;
                a.finish()?;
                AnisotropySpec::Custom { phi, grad, delta0 }
            }
            Some(other) => {
                return Err(s.bad(
                    "anisotropy",
                    format!("expected \"none\", \"uniaxial\", or a table, got {}", kind(&other)),
                ))
            }
        };
        let current = match s.sub("current", "model.current".into())? {
            None => None,
            Some((table, path)) => {
                let mut c = Section { table, path: &path, src, file };
                let j = c.need_string_array("j")?;
                let sample_count = c.take_usize("sample_count", 64)?;
                c.finish()?;
                Some(CurrentSection { j, sample_count })
            }
        };
        s.finish()?;
        ModelSection { flow, alpha, beta, epsilon, demag, demag_cache, anisotropy, current }
    };

    let initial = match top.sub("initial", "initial".into())? {
        None => ["0".to_string(), "0".to_string(), "1".to_string()],
        Some((table, path)) => {
            let mut s = Section { table, path: &path, src, file };
            let u1 = s.take_string("u1", "0")?;
            let u2 = s.take_string("u2", "0")?;
            let u3 = s.take_string("u3", "1")?;
            s.finish()?;
            [u1, u2, u3]
        }
    };

    let stepper = match top.sub("stepper", "stepper".into())? {
        None => StepperSection { scheme: "rk4".into(), dt: 0.005 },
        Some((table, path)) => {
            let mut s = Section { table, path: &path, src, file };
            let scheme = s.take_string("scheme", "rk4")?;
            let dt = s.take_f64("dt", 0.005)?;
            s.finish()?;
            StepperSection { scheme, dt }
        }
    };

    let run = {
        let (table, path) = top.sub("run", "run".into())?.ok_or_else(|| top.missing("run"))?;
        let mut s = Section { table, path: &path, src, file };
        let horizon = s.need_f64("horizon")?;
        let snapshot_every = s.take_usize("snapshot_every", 10)?;
        let seed = s.take_u64("seed", 0)?;
        let vtk = s.take_bool("vtk", false)?;
        s.finish()?;
        RunSection { horizon, snapshot_every, seed, vtk }
    };

    let output_dir = match top.sub("output", "output".into())? {
        None => None,
        Some((table, path)) => {
            let mut s = Section { table, path: &path, src, file };
            let dir = s.take_opt_string("dir")?;
            s.finish()?;
            dir
        }
    };

    top.finish()?;

    let mut cfg = RunConfig {
        domain: DomainSection {
            lengths: domain.0,
            resolution: domain.1,
            boundary: domain.2.unwrap_or_default(),
        },
        modes,
        model,
        initial,
        stepper,
        run,
        output_dir,
    };
    validate(&mut cfg)?;
    Ok(cfg)
}

fn invalid(key: &str, message: impl Into<String>) -> CliError {
    CliError::Validation { key: key.into(), message: message.into() }
}

fn flow_kind(name: &str) -> Result<FlowKind> {
    match name {
        "llg" => Ok(FlowKind::LlgSpinCurrent),
        "heat" => Ok(FlowKind::HeatFlowBounded),
        "heat-torus" => Ok(FlowKind::HeatFlowTorus),
        other => Err(invalid(
            "model.flow",
            format!("expected \"llg\", \"heat\", or \"heat-torus\", got \"{other}\""),
        )),
    }
}

fn parse_expr(key: &str, src: &str) -> Result<Expr> {
    Expr::parse(src).map_err(|e| invalid(key, e.to_string()))
}

/// Spatial sample points where every expression must evaluate finite: the
/// domain center and all corners.
fn sample_points(lengths: &[f64]) -> Vec<Vec<f64>> {
    let m = lengths.len();
    let mut pts = vec![lengths.iter().map(|l| 0.5 * l).collect::<Vec<_>>()];
    for corner in 0..1usize << m {
        pts.push(
            (0..m).map(|a| if corner >> a & 1 == 1 { lengths[a] } else { 0.0 }).collect(),
        );
    }
    pts
}

fn check_field_expr(
    key: &str,
    src: &str,
    lengths: &[f64],
    horizon: f64,
    allow_time: bool,
) -> Result<Expr> {
    let e = parse_expr(key, src)?;
    if !allow_time && e.uses_time() {
        return Err(invalid(key, "must not depend on t"));
    }
    let dim = lengths.len();
    if let Some(c) = e.max_coord() {
        if c >= dim {
            return Err(invalid(
                key,
                format!("references x{} but the domain has {} axis(es)", c + 1, dim),
            ));
        }
    }
    for x in sample_points(lengths) {
        for t in [0.0, 0.5 * horizon, horizon] {
            let v = e.eval(&x, t);
            if !v.is_finite() {
                return Err(invalid(
                    key,
                    format!("evaluates to a non-finite value at x = {x:?}, t = {t}"),
                ));
            }
        }
    }
    Ok(e)
}

/// Points on the closed unit ball where anisotropy expressions are probed.
fn ball_points() -> [[f64; 3]; 9] {
    [
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
        [0.3, 0.4, 0.5],
        [-0.6, 0.2, -0.3],
    ]
}

fn check_anisotropy(spec: &AnisotropySpec) -> Result<()> {
    let AnisotropySpec::Custom { phi, grad, delta0 } = spec else {
        return Ok(());
    };
    if !(*delta0 > 0.0 && *delta0 < 0.5) {
        return Err(invalid("model.anisotropy.delta0", "must lie strictly between 0 and 0.5"));
    }
    let key = "model.anisotropy.phi";
    let value = parse_expr(key, phi)?;
    if value.uses_time() {
        return Err(invalid(key, "must not depend on t"));
    }
    if value.max_coord().is_some_and(|c| c >= 3) {
        return Err(invalid(key, "may only reference the components x1, x2, x3"));
    }
    let symbolic = [value.derivative(0), value.derivative(1), value.derivative(2)];
    let explicit = match grad {
        None => None,
        Some(parts) => {
            let mut out = Vec::with_capacity(3);
            for part in parts {
                let gkey = "model.anisotropy.grad";
                let g = parse_expr(gkey, part)?;
                if g.uses_time() {
                    return Err(invalid(gkey, "must not depend on t"));
                }
                if g.max_coord().is_some_and(|c| c >= 3) {
                    return Err(invalid(gkey, "may only reference the components x1, x2, x3"));
                }
                out.push(g);
            }
            Some(out)
        }
    };
    for z in ball_points() {
        let v = value.eval(&z, 0.0);
        if !v.is_finite() {
            return Err(invalid(key, format!("evaluates to a non-finite value at z = {z:?}")));
        }
        for a in 0..3 {
            let s = symbolic[a].eval(&z, 0.0);
            if !s.is_finite() {
                return Err(invalid(
                    key,
                    format!("derivative in x{} is non-finite at z = {z:?}", a + 1),
                ));
            }
            if let Some(g) = &explicit {
                let e = g[a].eval(&z, 0.0);
                if (e - s).abs() > 1e-6 * (1.0 + s.abs()) {
                    return Err(invalid(
                        "model.anisotropy.grad",
                        format!(
                            "component {} disagrees with the derivative of phi at z = {z:?} \
                             ({e} vs {s})",
                            a + 1
                        ),
                    ));
                }
            }
        }
    }
    Ok(())
}

fn validate(cfg: &mut RunConfig) -> Result<()> {
    let flow = flow_kind(&cfg.model.flow)?;
    let dim = cfg.domain.lengths.len();

    if cfg.domain.boundary.is_empty() {
        cfg.domain.boundary = match flow.required_boundary() {
            Boundary::Neumann => "neumann".into(),
            Boundary::Periodic => "periodic".into(),
        };
    }
    let boundary = match cfg.domain.boundary.as_str() {
        "neumann" => Boundary::Neumann,
        "periodic" => Boundary::Periodic,
        other => {
            return Err(invalid(
                "domain.boundary",
                format!("expected \"neumann\" or \"periodic\", got \"{other}\""),
            ))
        }
    };
    if boundary != flow.required_boundary() {
        return Err(invalid(
            "domain.boundary",
            format!("the {} flow needs {:?} boundaries", cfg.model.flow, flow.required_boundary()),
        ));
    }

    // Let the domain constructor rule on lengths and resolution so the
    // rules live in one place.
    BoxDomain::new(cfg.domain.lengths.clone(), cfg.domain.resolution.clone(), boundary)
        .map_err(|e| invalid("domain", e.to_string()))?;

    if cfg.modes == 0 {
        return Err(invalid("galerkin.modes", "must be at least 1"));
    }
    if !(cfg.model.alpha.is_finite() && cfg.model.alpha >= 0.0) {
        return Err(invalid("model.alpha", "must be finite and not negative"));
    }
    if !cfg.model.beta.is_finite() {
        return Err(invalid("model.beta", "must be finite"));
    }
    if !(cfg.model.epsilon > 0.0 && cfg.model.epsilon <= 1.0) {
        return Err(invalid("model.epsilon", "must lie in (0, 1]"));
    }
    if cfg.model.demag {
        if dim != 3 {
            return Err(invalid("model.demag", "demag requires dim=3"));
        }
        if flow != FlowKind::LlgSpinCurrent {
            return Err(invalid("model.demag", "the stray field applies to the llg flow only"));
        }
    } else if cfg.model.demag_cache.is_some() {
        return Err(invalid("model.demag_cache", "set while model.demag is false"));
    }
    match cfg.stepper.scheme.as_str() {
        "rk4" | "midpoint" => {}
        other => {
            return Err(invalid(
                "stepper.scheme",
                format!("expected \"rk4\" or \"midpoint\", got \"{other}\""),
            ))
        }
    }
    if !(cfg.stepper.dt > 0.0 && cfg.stepper.dt.is_finite()) {
        return Err(invalid("stepper.dt", "must be positive"));
    }
    if !(cfg.run.horizon > 0.0 && cfg.run.horizon.is_finite()) {
        return Err(invalid("run.horizon", "must be positive"));
    }
    if cfg.run.snapshot_every == 0 {
        return Err(invalid("run.snapshot_every", "must be at least 1"));
    }

    for (i, src) in cfg.initial.iter().enumerate() {
        let key = format!("initial.u{}", i + 1);
        check_field_expr(&key, src, &cfg.domain.lengths, cfg.run.horizon, false)?;
    }
    if let Some(current) = &cfg.model.current {
        if current.j.len() != dim {
            return Err(invalid(
                "model.current.j",
                format!("needs one component per axis ({dim}), got {}", current.j.len()),
            ));
        }
        if current.sample_count < 2 {
            return Err(invalid("model.current.sample_count", "must be at least 2"));
        }
        for src in &current.j {
            check_field_expr("model.current.j", src, &cfg.domain.lengths, cfg.run.horizon, true)?;
        }
    }
    check_anisotropy(&cfg.model.anisotropy)?;
    Ok(())
}

impl RunConfig {
    /// Canonical text form; parsing it yields an equal config.
    pub fn serialize(&self) -> String {
        let mut root = toml::Table::new();

        let mut domain = toml::Table::new();
        domain.insert(
            "lengths".into(),
            Value::Array(self.domain.lengths.iter().map(|&v| Value::Float(v)).collect()),
        );
        domain.insert(
            "resolution".into(),
            Value::Array(self.domain.resolution.iter().map(|&v| Value::Integer(v as i64)).collect()),
        );
        domain.insert("boundary".into(), Value::String(self.domain.boundary.clone()));
        root.insert("domain".into(), Value::Table(domain));

        let mut galerkin = toml::Table::new();
        galerkin.insert("modes".into(), Value::Integer(self.modes as i64));
        root.insert("galerkin".into(), Value::Table(galerkin));

        let mut model = toml::Table::new();
        model.insert("flow".into(), Value::String(self.model.flow.clone()));
        model.insert("alpha".into(), Value::Float(self.model.alpha));
        model.insert("beta".into(), Value::Float(self.model.beta));
        model.insert("epsilon".into(), Value::Float(self.model.epsilon));
        model.insert("demag".into(), Value::Boolean(self.model.demag));
        if let Some(cache) = &self.model.demag_cache {
            model.insert("demag_cache".into(), Value::String(cache.clone()));
        }
        match &self.model.anisotropy {
            AnisotropySpec::None => {
                model.insert("anisotropy".into(), Value::String("none".into()));
            }
            AnisotropySpec::Uniaxial => {
                model.insert("anisotropy".into(), Value::String("uniaxial".into()));
            }
            AnisotropySpec::Custom { phi, grad, delta0 } => {
                let mut a = toml::Table::new();
                a.insert("phi".into(), Value::String(phi.clone()));
                if let Some(parts) = grad {
                    a.insert(
                        "grad".into(),
                        Value::Array(parts.iter().map(|g| Value::String(g.clone())).collect()),
                    );
                }
                a.insert("delta0".into(), Value::Float(*delta0));
                model.insert("anisotropy".into(), Value::Table(a));
            }
        }
        if let Some(current) = &self.model.current {
            let mut c = toml::Table::new();
            c.insert(
                "j".into(),
                Value::Array(current.j.iter().map(|s| Value::String(s.clone())).collect()),
            );
            c.insert("sample_count".into(), Value::Integer(current.sample_count as i64));
            model.insert("current".into(), Value::Table(c));
        }
        root.insert("model".into(), Value::Table(model));

        let mut initial = toml::Table::new();
        for (i, u) in self.initial.iter().enumerate() {
            initial.insert(format!("u{}", i + 1), Value::String(u.clone()));
        }
        root.insert("initial".into(), Value::Table(initial));

        let mut stepper = toml::Table::new();
        stepper.insert("scheme".into(), Value::String(self.stepper.scheme.clone()));
        stepper.insert("dt".into(), Value::Float(self.stepper.dt));
        root.insert("stepper".into(), Value::Table(stepper));

        let mut run = toml::Table::new();
        run.insert("horizon".into(), Value::Float(self.run.horizon));
        run.insert("snapshot_every".into(), Value::Integer(self.run.snapshot_every as i64));
        run.insert("seed".into(), Value::Integer(self.run.seed as i64));
        run.insert("vtk".into(), Value::Boolean(self.run.vtk));
        root.insert("run".into(), Value::Table(run));

        if let Some(dir) = &self.output_dir {
            let mut output = toml::Table::new();
            output.insert("dir".into(), Value::String(dir.clone()));
            root.insert("output".into(), Value::Table(output));
        }

        toml::to_string_pretty(&root).expect("config values are always serializable")
    }

    /// Builds the domain, basis, model, initial field, and stepper. `jobs`
    /// bounds the worker threads of a stray-field kernel build.
    pub fn compile(&self, jobs: usize) -> Result<CompiledRun> {
        let flow = flow_kind(&self.model.flow)?;
        let boundary = match self.domain.boundary.as_str() {
            "periodic" => Boundary::Periodic,
            _ => Boundary::Neumann,
        };
        let domain =
            BoxDomain::new(self.domain.lengths.clone(), self.domain.resolution.clone(), boundary)
                .map_err(|e| invalid("domain", e.to_string()))?;
        let basis = Arc::new(
            build_basis(&domain, self.modes).map_err(|e| invalid("galerkin.modes", e.to_string()))?,
        );

        let exprs: Vec<Expr> = self
            .initial
            .iter()
            .enumerate()
            .map(|(i, s)| parse_expr(&format!("initial.u{}", i + 1), s))
            .collect::<Result<_>>()?;
        let initial = VectorField::from_fn(&domain, 3, |x, out| {
            for (o, e) in out.iter_mut().zip(&exprs) {
                *o = e.eval(x, 0.0);
            }
        });
        initial.assert_finite().map_err(|e| invalid("initial", e.to_string()))?;
        let mut unit_defect: f64 = 0.0;
        for p in 0..initial.num_points() {
            let u = initial.at(p);
            let r = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
            unit_defect = unit_defect.max((r - 1.0).abs());
        }
        if unit_defect > 1e-6 {
            return Err(invalid(
                "initial",
                format!("data must be pointwise unit length; max defect {unit_defect:.3e}"),
            ));
        }

        let anisotropy = match &self.model.anisotropy {
            AnisotropySpec::None => AnisotropyPotential::zero(),
            AnisotropySpec::Uniaxial => AnisotropyPotential::uniaxial(),
            AnisotropySpec::Custom { phi, grad, delta0 } => {
                let value = parse_expr("model.anisotropy.phi", phi)?;
                let gradient = match grad {
                    Some(parts) => {
                        let mut out = Vec::with_capacity(3);
                        for part in parts {
                            out.push(parse_expr("model.anisotropy.grad", part)?);
                        }
                        out.try_into().expect("length checked above")
                    }
                    None => [value.derivative(0), value.derivative(1), value.derivative(2)],
                };
                AnisotropyPotential::new(Arc::new(ExprPhi { value, gradient }), *delta0)
            }
        };

        let current = match &self.model.current {
            None => SpinCurrent::zero(domain.dim()),
            Some(section) => {
                let exprs: Vec<Expr> = section
                    .j
                    .iter()
                    .map(|s| parse_expr("model.current.j", s))
                    .collect::<Result<_>>()?;
                let n = section.sample_count;
                let times: Vec<f64> = (0..n)
                    .map(|i| self.run.horizon * i as f64 / (n - 1) as f64)
                    .collect();
                SpinCurrent::analytic(Arc::new(ExprCurrent { exprs }), &domain, &times)
            }
        };

        let demag_kernel = if self.model.demag {
            let kernel = match &self.model.demag_cache {
                Some(path) => {
                    let mut f = fs::File::open(path)?;
                    let k = DemagKernel::load_cache(&mut f)?;
                    if !k.domain().same_grid(&domain) {
                        return Err(invalid(
                            "model.demag_cache",
                            "cached kernel was built for a different grid",
                        ));
                    }
                    k
                }
                None => build_kernel_jobs(&domain, jobs)?,
            };
            Some(Arc::new(kernel))
        } else {
            None
        };

        let model = ModelConfig {
            alpha: self.model.alpha,
            beta: self.model.beta,
            epsilon: self.model.epsilon,
            flow,
            demag: self.model.demag,
            demag_kernel,
            anisotropy,
            current,
        };
        model.validate_for(&domain)?;

        let stepper = match self.stepper.scheme.as_str() {
            "midpoint" => StepperConfig::implicit_midpoint(self.stepper.dt),
            _ => StepperConfig::rk4(self.stepper.dt),
        };

        Ok(CompiledRun {
            domain,
            basis,
            model,
            initial,
            stepper,
            horizon: self.run.horizon,
            snapshot_every: self.run.snapshot_every,
            seed: self.run.seed,
            vtk: self.run.vtk,
            output_dir: self.output_dir.as_ref().map(PathBuf::from),
        })
    }
}

struct ExprPhi {
    value: Expr,
    gradient: [Expr; 3],
}

impl PhiFn for ExprPhi {
    fn value(&self, z: &[f64; 3]) -> f64 {
        self.value.eval(z, 0.0)
    }

    fn gradient(&self, z: &[f64; 3]) -> [f64; 3] {
        [
            self.gradient[0].eval(z, 0.0),
            self.gradient[1].eval(z, 0.0),
            self.gradient[2].eval(z, 0.0),
        ]
    }
}

struct ExprCurrent {
    exprs: Vec<Expr>,
}

impl CurrentFn for ExprCurrent {
    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.exprs) {
            *o = e.eval(x, t);
        }
    }
}
