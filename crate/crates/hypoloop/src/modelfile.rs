//! Model files.
//!
//! ```text
//! # comment (also allowed after a value)
//! name = example          optional, defaults to the file stem
//! dim = 2                 required, before any expression
//! variables = x, y        optional custom names (default x1..xd)
//! base_point = [0, 1/2]   optional, defaults to the origin
//! drift = [0, x1]         optional Stratonovich drift X0
//! eps = 0.1, 0.01         optional simulation defaults
//! paths = 10000
//! steps = 2048
//! seed = 1
//! radius = 0.1
//!
//! [generators]            one `label = [p1, ..., pd]` line per field
//! X1 = [1, x1]
//!
//! [chart]                 optional; theta uses the state variables,
//! theta = [x1, x2 - x1^2/2]      inverse uses y1..yd
//! inverse = [y1, y2 + y1^2/2]
//! ```
//!
//! Keys are case-sensitive, each key may appear once, and every
//! expression fits on one line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hypoloop_core::field::PolyVectorField;
use hypoloop_core::map::PolyMap;
use hypoloop_core::syntax::{format_list, format_rational, parse_list_with, VarNames};
use hypoloop_core::Rational;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Default)]
pub struct SimDefaults {
    pub eps: Vec<f64>,
    pub paths: Option<usize>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub name: String,
    pub dim: usize,
    pub variables: VarNames,
    pub labels: Vec<String>,
    pub generators: Vec<PolyVectorField>,
    pub drift: Option<PolyVectorField>,
    pub base_point: Vec<Rational>,
    pub chart: Option<PolyMap>,
    pub defaults: SimDefaults,
}

#[derive(PartialEq)]
enum Section {
    Top,
    Generators,
    Chart,
}

struct Ctx<'a> {
    path: &'a Path,
}

impl Ctx<'_> {
    fn err(&self, line: usize, column: usize, message: impl Into<String>) -> Error {
        Error::ModelFile {
            path: self.path.to_path_buf(),
            line,
            column,
            message: message.into(),
        }
    }

    /// Re-anchors a parse error from a value string to the file position.
    fn lift(&self, e: hypoloop_core::Error, line: usize, offset: usize) -> Error {
        match e {
            hypoloop_core::Error::Parse { column, message, .. } => self.err(line, offset + column, message),
            other => self.err(line, offset + 1, other.to_string()),
        }
    }
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("")
}

fn scalar<T: std::str::FromStr>(ctx: &Ctx, v: &str, line: usize, col: usize, key: &str) -> Result<T> {
    v.parse().map_err(|_| ctx.err(line, col, format!("invalid value for '{key}': '{v}'")))
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let mut m = ModelFile::parse_at(&src, path)?;
        if m.name.is_empty() {
            m.name = stem;
        }
        Ok(m)
    }

    pub fn parse(src: &str) -> Result<Self> {
        ModelFile::parse_at(src, &PathBuf::from("<input>"))
    }

    fn parse_at(src: &str, path: &Path) -> Result<Self> {
        let ctx = Ctx { path };
        let mut section = Section::Top;
        let mut name = String::new();
        let mut dim: Option<usize> = None;
        let mut variables: Option<VarNames> = None;
        let mut base_point = None;
        let mut drift = None;
        let mut labels = Vec::new();
        let mut generators = Vec::new();
        let mut theta: Option<(Vec<_>, usize)> = None;
        let mut inverse: Option<(Vec<_>, usize)> = None;
        let mut defaults = SimDefaults::default();
        let mut seen: Vec<String> = Vec::new();

        for (i, raw) in src.lines().enumerate() {
            let ln = i + 1;
            let line = strip_comment(raw);
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let indent = line.len() - line.trim_start().len();
            if trimmed.starts_with('[') && !trimmed.contains('=') {
                section = match trimmed {
                    "[generators]" => Section::Generators,
                    "[chart]" => Section::Chart,
                    _ => return Err(ctx.err(ln, indent + 1, format!("unknown section {trimmed}"))),
                };
                continue;
            }
            let eq = line
                .find('=')
                .ok_or_else(|| ctx.err(ln, indent + 1, "expected 'key = value'"))?;
            let key = line[..eq].trim();
            let rest = &line[eq + 1..];
            let value = rest.trim();
            let vcol = eq + 1 + (rest.len() - rest.trim_start().len());
            if key.is_empty() {
                return Err(ctx.err(ln, indent + 1, "missing key"));
            }
            if value.is_empty() {
                return Err(ctx.err(ln, eq + 2, format!("missing value for '{key}'")));
            }
            let names = || -> Result<VarNames> {
                let d = dim.ok_or_else(|| ctx.err(ln, 1, "'dim' must be set before any expression"))?;
                Ok(variables.clone().unwrap_or_else(|| VarNames::x(d)))
            };
            let list = |names: &VarNames| parse_list_with(value, names).map_err(|e| ctx.lift(e, ln, vcol));
            let field = |names: &VarNames| -> Result<PolyVectorField> {
                let comps = list(names)?;
                if comps.len() != names.dim() {
                    return Err(ctx.err(ln, vcol + 1, format!("expected {} components, found {}", names.dim(), comps.len())));
                }
                PolyVectorField::new(comps).map_err(|e| ctx.lift(e, ln, vcol))
            };

            if section == Section::Generators {
                if labels.iter().any(|l| l == key) {
                    return Err(ctx.err(ln, indent + 1, format!("duplicate generator '{key}'")));
                }
                generators.push(field(&names()?)?);
                labels.push(key.to_string());
                continue;
            }
            let tag = if section == Section::Chart { format!("chart.{key}") } else { key.to_string() };
            if seen.contains(&tag) {
                return Err(ctx.err(ln, indent + 1, format!("duplicate key '{key}'")));
            }
            seen.push(tag);

            if section == Section::Chart {
                match key {
                    "theta" => theta = Some((list(&names()?)?, ln)),
                    "inverse" => {
                        let d = names()?.dim();
                        inverse = Some((list(&VarNames::y(d))?, ln));
                    }
                    _ => return Err(ctx.err(ln, indent + 1, format!("unknown chart key '{key}'"))),
                }
                continue;
            }
            match key {
                "name" => name = value.to_string(),
                "dim" => {
                    let d: usize = scalar(&ctx, value, ln, vcol + 1, key)?;
                    if d == 0 {
                        return Err(ctx.err(ln, vcol + 1, "dimension must be positive"));
                    }
                    dim = Some(d);
                }
                "variables" => {
                    let d = dim.ok_or_else(|| ctx.err(ln, 1, "'dim' must be set before 'variables'"))?;
                    let vars: Vec<String> = value.split(',').map(|s| s.trim().to_string()).collect();
                    if vars.len() != d {
                        return Err(ctx.err(ln, vcol + 1, format!("expected {d} variable names, found {}", vars.len())));
                    }
                    for v in &vars {
                        let ok = v.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                            && v.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
                        if !ok || vars.iter().filter(|w| *w == v).count() > 1 {
                            return Err(ctx.err(ln, vcol + 1, format!("invalid variable name '{v}'")));
                        }
                    }
                    variables = Some(VarNames::Custom(vars));
                }
                "base_point" => {
                    let d = names()?.dim();
                    let comps = parse_list_with(value, &VarNames::Custom(Vec::new())).map_err(|e| ctx.lift(e, ln, vcol))?;
                    if comps.len() != d {
                        return Err(ctx.err(ln, vcol + 1, format!("expected {d} coordinates, found {}", comps.len())));
                    }
                    base_point = Some(
                        comps
                            .iter()
                            .map(|p| p.as_constant().ok_or_else(|| ctx.err(ln, vcol + 1, "base point must be rational")))
                            .collect::<Result<Vec<_>>>()?,
                    );
                }
                "drift" => drift = Some(field(&names()?)?),
                "eps" => {
                    defaults.eps = value
                        .split(',')
                        .map(|s| {
                            let e: f64 = scalar(&ctx, s.trim(), ln, vcol + 1, key)?;
                            if e > 0.0 && e.is_finite() {
                                Ok(e)
                            } else {
                                Err(ctx.err(ln, vcol + 1, "eps must be positive"))
                            }
                        })
                        .collect::<Result<_>>()?
                }
                "paths" => defaults.paths = Some(scalar(&ctx, value, ln, vcol + 1, key)?),
                "steps" => defaults.steps = Some(scalar(&ctx, value, ln, vcol + 1, key)?),
                "seed" => defaults.seed = Some(scalar(&ctx, value, ln, vcol + 1, key)?),
                "radius" => defaults.radius = Some(scalar(&ctx, value, ln, vcol + 1, key)?),
                _ => return Err(ctx.err(ln, indent + 1, format!("unknown key '{key}'"))),
            }
        }

        let last = src.lines().count().max(1);
        let dim = dim.ok_or_else(|| ctx.err(last, 1, "missing 'dim'"))?;
        if generators.is_empty() {
            return Err(ctx.err(last, 1, "no generators given"));
        }
        let chart = match (theta, inverse) {
            (None, None) => None,
            (Some((t, ln)), Some((inv, _))) => {
                if t.len() != dim || inv.len() != dim {
                    return Err(ctx.err(ln, 1, format!("chart must have {dim} components in each direction")));
                }
                Some(PolyMap::with_inverse(t, inv).map_err(|e| ctx.err(ln, 1, e.to_string()))?)
            }
            (Some((_, ln)), None) => return Err(ctx.err(ln, 1, "chart 'theta' needs an 'inverse'")),
            (None, Some((_, ln))) => return Err(ctx.err(ln, 1, "chart 'inverse' needs a 'theta'")),
        };
        Ok(ModelFile {
            name,
            dim,
            variables: variables.unwrap_or_else(|| VarNames::x(dim)),
            labels,
            generators,
            drift,
            base_point: base_point.unwrap_or_else(|| vec![Rational::from_integer(0.into()); dim]),
            chart,
            defaults,
        })
    }

    pub fn base_point_f64(&self) -> Vec<f64> {
        self.base_point.iter().map(hypoloop_core::poly::rational_to_f64).collect()
    }

    /// Canonical text form; parses back to an equal model.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if !self.name.is_empty() {
            let _ = writeln!(s, "name = {}", self.name);
        }
        let _ = writeln!(s, "dim = {}", self.dim);
        if let VarNames::Custom(v) = &self.variables {
            let _ = writeln!(s, "variables = {}", v.join(", "));
        }
        let bp: Vec<String> = self.base_point.iter().map(format_rational).collect();
        let _ = writeln!(s, "base_point = [{}]", bp.join(", "));
        if let Some(d) = &self.drift {
            let _ = writeln!(s, "drift = {}", format_list(d.components(), &self.variables));
        }
        let def = &self.defaults;
        if !def.eps.is_empty() {
            let e: Vec<String> = def.eps.iter().map(|e| e.to_string()).collect();
            let _ = writeln!(s, "eps = {}", e.join(", "));
        }
        for (k, v) in [("paths", def.paths.map(|v| v as u64)), ("steps", def.steps.map(|v| v as u64)), ("seed", def.seed)] {
            if let Some(v) = v {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        if let Some(r) = def.radius {
            let _ = writeln!(s, "radius = {r}");
        }
        s.push_str("\n[generators]\n");
        for (l, g) in self.labels.iter().zip(&self.generators) {
            let _ = writeln!(s, "{l} = {}", format_list(g.components(), &self.variables));
        }
        if let Some(c) = &self.chart {
            s.push_str("\n[chart]\n");
            let _ = writeln!(s, "theta = {}", format_list(c.components(), &self.variables));
            let inv = c.inverse().expect("model charts carry an inverse");
            let _ = writeln!(s, "inverse = {}", format_list(inv, &VarNames::y(self.dim)));
        }
        s
    }
}

/// Directory holding the bundled model files.
pub fn bundled_models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("models")
}

/// Loads `<name>.model` from the bundled directory.
pub fn bundled(name: &str) -> Result<ModelFile> {
    ModelFile::load(&bundled_models_dir().join(format!("{name}.model")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use hypoloop_core::syntax::parse_field;

    #[test]
    fn bundled_models_parse() {
        let ex = bundled("example_grushin_like").unwrap();
        assert_eq!(ex.dim, 2);
        assert_eq!(ex.labels, ["X1", "X2"]);
        assert_eq!(ex.generators[0], parse_field("[1, x1]", 2).unwrap());
        assert_eq!(ex.generators[1], parse_field("[x1, 0]", 2).unwrap());
        assert!(ex.chart.is_some());
        assert_eq!(ex.defaults.eps, [0.2, 0.05, 0.01]);
        let h = bundled("heisenberg").unwrap();
        assert_eq!(h.generators[0], parse_field("[1, 0, -1/2*x2]", 3).unwrap());
        let e = bundled("elliptic2d").unwrap();
        assert!(e.chart.is_none());
        assert_eq!(e.name, "elliptic2d");
    }

    #[test]
    fn text_round_trip() {
        for n in ["example_grushin_like", "heisenberg", "elliptic2d"] {
            let m = bundled(n).unwrap();
            assert_eq!(ModelFile::parse(&m.to_text()).unwrap(), m, "{n}");
        }
        let src = "dim = 2\nvariables = u, v\nbase_point = [1/2, -3]\ndrift = [v, u^2]\n[generators]\nA = [1, u*v]\n";
        let m = ModelFile::parse(src).unwrap();
        assert_eq!(m.base_point_f64(), [0.5, -3.0]);
        assert_eq!(ModelFile::parse(&m.to_text()).unwrap(), m);
    }

    fn err_pos(src: &str) -> (usize, usize, String) {
        match ModelFile::parse(src) {
            Err(Error::ModelFile { line, column, message, .. }) => (line, column, message),
            other => panic!("expected a model file error, got {other:?}"),
        }
    }

    #[test]
    fn diagnostics_carry_positions() {
        let (l, c, _) = err_pos("dim = 2\n[generators]\nX1 = [1, x1 +* 2]\n");
        assert_eq!(l, 3);
        assert_eq!(c, 14);
        let (l, _, m) = err_pos("dim = 2\n[generators]\nX1 = [1]\n");
        assert_eq!(l, 3);
        assert!(m.contains("expected 2 components"));
        let (l, _, m) = err_pos("[generators]\nX1 = [1, x1]\n");
        assert_eq!(l, 2);
        assert!(m.contains("dim"));
        let (l, c, _) = err_pos("dim = 2\nfoo = 3\n");
        assert_eq!((l, c), (2, 1));
        let (l, _, _) = err_pos("dim = 2\ndim = 3\n");
        assert_eq!(l, 2);
        let (_, _, m) = err_pos("dim = 2\n");
        assert!(m.contains("no generators"));
        let (l, _, m) = err_pos("dim = 2\n[generators]\nX1 = [1, 0]\n[chart]\ntheta = [x1, x2]\n");
        assert_eq!(l, 5);
        assert!(m.contains("inverse"));
        let (l, _, _) = err_pos("dim = 2\n[generators]\nX1 = [1, 0]\n[chart]\ntheta = [x1, x2]\ninverse = [y1, y2 + y1]\n");
        assert_eq!(l, 5);
        let (l, _, _) = err_pos("dim = 1\nbase_point = [x1]\n[generators]\nX = [1]\n");
        assert_eq!(l, 2);
    }
}
