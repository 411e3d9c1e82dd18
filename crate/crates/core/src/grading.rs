//! Bracket filtration at a base point: flag dimensions, step, weights,
//! homogeneous dimension, and the drift-in-span hypothesis.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;

use crate::error::{check_dim, Error, Result};
use crate::field::{lie_bracket, PolyVectorField};
use crate::linalg::{self, NUMERIC_RANK_TOL};
use crate::weights::Weights;
use crate::Rational;

/// Default bracket depth searched before giving up on the Hörmander condition.
pub const DEFAULT_MAX_DEPTH: usize = 8;

/// Right-nested bracket word `[X_{i1}, [X_{i2}, ... X_{ik}]]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum BracketExpr {
    Generator(usize),
    Bracket(usize, Box<BracketExpr>),
}

impl BracketExpr {
    pub fn depth(&self) -> usize {
        match self {
            BracketExpr::Generator(_) => 1,
            BracketExpr::Bracket(_, inner) => 1 + inner.depth(),
        }
    }

    /// Generator indices from the outside in.
    pub fn word(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self;
        loop {
            match cur {
                BracketExpr::Generator(i) => {
                    out.push(*i);
                    return out;
                }
                BracketExpr::Bracket(i, inner) => {
                    out.push(*i);
                    cur = inner;
                }
            }
        }
    }
}

impl fmt::Display for BracketExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BracketExpr::Generator(i) => write!(f, "X{}", i + 1),
            BracketExpr::Bracket(i, inner) => write!(f, "[X{},{}]", i + 1, inner),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BracketEntry {
    pub expr: BracketExpr,
    pub depth: usize,
    pub field: PolyVectorField,
}

/// Right-nested brackets of the generators, grouped by depth. Identically
/// zero brackets are dropped, together with everything nested over them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BracketTable {
    generators: Vec<PolyVectorField>,
    entries: Vec<BracketEntry>,
    max_depth: usize,
}

impl BracketTable {
    pub fn new(generators: &[PolyVectorField]) -> Result<Self> {
        let first = generators
            .first()
            .ok_or_else(|| Error::InvalidArgument("at least one generator is required".into()))?;
        for g in generators {
            check_dim(first.dim(), g.dim())?;
        }
        let entries = generators
            .iter()
            .enumerate()
            .filter(|(_, g)| !g.is_zero())
            .map(|(i, g)| BracketEntry {
                expr: BracketExpr::Generator(i),
                depth: 1,
                field: g.clone(),
            })
            .collect();
        Ok(BracketTable {
            generators: generators.to_vec(),
            entries,
            max_depth: 1,
        })
    }

    /// Builds all depths up to `depth`.
    pub fn up_to(generators: &[PolyVectorField], depth: usize) -> Result<Self> {
        let mut t = Self::new(generators)?;
        while t.max_depth < depth {
            t.extend()?;
        }
        Ok(t)
    }

    /// Adds the next depth: `[X_i, E]` for every generator and every entry of
    /// the current deepest level.
    pub fn extend(&mut self) -> Result<()> {
        let prev: Vec<BracketEntry> = self.at_depth(self.max_depth).cloned().collect();
        let mut next = Vec::new();
        for (i, g) in self.generators.iter().enumerate() {
            for e in &prev {
                let b = lie_bracket(g, &e.field)?;
                if !b.is_zero() {
                    next.push(BracketEntry {
                        expr: BracketExpr::Bracket(i, Box::new(e.expr.clone())),
                        depth: self.max_depth + 1,
                        field: b,
                    });
                }
            }
        }
        self.entries.extend(next);
        self.max_depth += 1;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.generators[0].dim()
    }

    pub fn generators(&self) -> &[PolyVectorField] {
        &self.generators
    }

    pub fn entries(&self) -> &[BracketEntry] {
        &self.entries
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn at_depth(&self, depth: usize) -> impl Iterator<Item = &BracketEntry> {
        self.entries.iter().filter(move |e| e.depth == depth)
    }

    pub fn up_to_depth(&self, depth: usize) -> impl Iterator<Item = &BracketEntry> {
        self.entries.iter().filter(move |e| e.depth <= depth)
    }

    /// Values of all entries of depth `<= depth` at `point`.
    pub fn values_at(&self, depth: usize, point: &[Rational]) -> Result<Vec<Vec<Rational>>> {
        self.up_to_depth(depth).map(|e| e.field.eval(point)).collect()
    }

    pub fn values_at_f64(&self, depth: usize, point: &[f64]) -> Vec<Vec<f64>> {
        self.up_to_depth(depth).map(|e| e.field.eval_f64(point)).collect()
    }

    /// Exact flag dimensions `d_1..d_depth` at `point`.
    pub fn flag_at(&self, point: &[Rational]) -> Result<Vec<usize>> {
        (1..=self.max_depth)
            .map(|n| Ok(linalg::rank(&self.values_at(n, point)?)))
            .collect()
    }
}

/// Flag dimensions `d_1 <= ... <= d_N = d` at a base point and the data
/// derived from them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GradedStructure {
    dims: Vec<usize>,
    weights: Weights,
    base_point: Vec<Rational>,
}

impl GradedStructure {
    /// Builds the structure from a flag; the flag must be non-decreasing and
    /// end at its first occurrence of the full dimension.
    pub fn from_flag(dims: Vec<usize>, base_point: Vec<Rational>) -> Result<Self> {
        let d = base_point.len();
        let ok = !dims.is_empty()
            && dims.windows(2).all(|w| w[0] <= w[1])
            && dims.last() == Some(&d)
            && dims[..dims.len() - 1].iter().all(|&x| x < d)
            && dims[0] > 0;
        if !ok {
            return Err(Error::InvalidArgument(format!("not a complete flag for dimension {d}: {dims:?}")));
        }
        let weights = (1..=d)
            .map(|k| dims.iter().position(|&dn| dn >= k).map(|n| n as u32 + 1).unwrap_or(0))
            .collect();
        Ok(GradedStructure {
            dims,
            weights: Weights::new(weights)?,
            base_point,
        })
    }

    pub fn dim(&self) -> usize {
        self.base_point.len()
    }

    /// `d_1..d_N`.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// `d_n` with `d_0 = 0` and `d_n = d` beyond the step.
    pub fn d(&self, n: usize) -> usize {
        match n {
            0 => 0,
            n if n > self.dims.len() => self.dim(),
            n => self.dims[n - 1],
        }
    }

    pub fn step(&self) -> usize {
        self.dims.len()
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    /// `Q = sum_k w_k`.
    pub fn homogeneous_dimension(&self) -> u32 {
        self.weights.homogeneous_dimension()
    }

    /// `sum_n n (d_n - d_{n-1})`, which must agree with
    /// [`homogeneous_dimension`](Self::homogeneous_dimension).
    pub fn homogeneous_dimension_from_flag(&self) -> u32 {
        (1..=self.step())
            .map(|n| (n * (self.d(n) - self.d(n - 1))) as u32)
            .sum()
    }

    pub fn base_point(&self) -> &[Rational] {
        &self.base_point
    }

    /// `n,d_n` rows, then weights, step and homogeneous dimension.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,d_n\n");
        for (i, d) in self.dims.iter().enumerate() {
            let _ = writeln!(s, "{},{}", i + 1, d);
        }
        let w: Vec<String> = self.weights.as_slice().iter().map(|w| format!("{w}")).collect();
        let _ = writeln!(s, "weights,{}", w.join(","));
        let _ = writeln!(s, "N,{}", self.step());
        let _ = writeln!(s, "Q,{}", self.homogeneous_dimension());
        s
    }
}

/// Computes the flag at `x` by exact rank over the rationals, stopping at the
/// first depth where it is full.
pub fn build_graded_structure(
    generators: &[PolyVectorField],
    x: &[Rational],
    max_depth: usize,
) -> Result<(GradedStructure, BracketTable)> {
    if max_depth == 0 {
        return Err(Error::InvalidArgument("max depth must be at least 1".into()));
    }
    let mut table = BracketTable::new(generators)?;
    let d = table.dim();
    check_dim(d, x.len())?;
    let mut flag = Vec::new();
    let mut values: Vec<Vec<Rational>> = Vec::new();
    loop {
        for e in table.at_depth(table.max_depth()) {
            values.push(e.field.eval(x)?);
        }
        let dn = linalg::rank(&values);
        flag.push(dn);
        if dn == d {
            let s = GradedStructure::from_flag(flag, x.to_vec())?;
            return Ok((s, table));
        }
        if table.max_depth() == max_depth {
            return Err(Error::HormanderFailure { flag });
        }
        table.extend()?;
        // keep the working set small: only independent rows matter for rank
        linalg::rref(&mut values);
        values.retain(|r| r.iter().any(|v| !num_traits::Zero::is_zero(v)));
    }
}

/// Outcome of the drift-in-span test.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftSpanReport {
    pub base_point_ok: bool,
    /// Indices into the sample set where the numeric test failed.
    pub failing_points: Vec<usize>,
    pub points_checked: usize,
}

impl DriftSpanReport {
    pub fn passed(&self) -> bool {
        self.base_point_ok && self.failing_points.is_empty()
    }
}

/// `rank[X_1..X_m] == rank[X_1..X_m X_0]`, exactly at `base` and numerically
/// (relative singular value threshold 1e-9) at each sample point.
pub fn check_drift_in_span(
    x0: &PolyVectorField,
    generators: &[PolyVectorField],
    base: &[Rational],
    points: &[Vec<f64>],
) -> Result<DriftSpanReport> {
    for g in generators {
        check_dim(x0.dim(), g.dim())?;
    }
    check_dim(x0.dim(), base.len())?;
    let mut cols: Vec<Vec<Rational>> = generators.iter().map(|g| g.eval(base)).collect::<Result<_>>()?;
    let r0 = linalg::rank(&cols);
    cols.push(x0.eval(base)?);
    let base_point_ok = linalg::rank(&cols) == r0;

    let mut failing_points = Vec::new();
    for (idx, p) in points.iter().enumerate() {
        check_dim(x0.dim(), p.len())?;
        let mut v: Vec<Vec<f64>> = generators.iter().map(|g| g.eval_f64(p)).collect();
        let r = linalg::numeric_rank(&v, NUMERIC_RANK_TOL);
        v.push(x0.eval_f64(p));
        let x0_norm: f64 = v.last().map_or(0.0, |c| c.iter().map(|a| a * a).sum());
        // the zero drift never leaves the span
        if x0_norm == 0.0 {
            continue;
        }
        if linalg::numeric_rank(&v, NUMERIC_RANK_TOL) != r {
            failing_points.push(idx);
        }
    }
    Ok(DriftSpanReport {
        base_point_ok,
        failing_points,
        points_checked: points.len(),
    })
}
