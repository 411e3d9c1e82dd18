//! Adapted charts: validation of the two adaptedness conditions and an
//! exact polynomial construction.
//!
//! A chart `theta` centred at `x` is adapted when
//!
//! 1. `J theta(x)` maps `C_n(x)` onto `span{e_1..e_{d_n}}` for every `n`, and
//! 2. `(D theta^k)(x) = 0` for every generator word `D = X_{i1}...X_{ij}` with
//!    `j <= n` and every coordinate `k > d_n`.
//!
//! The construction translates `x` to the origin, applies the inverse of a
//! flag-compatible basis of bracket values, and then corrects each
//! coordinate of weight `w` by a polynomial in already-built coordinates of
//! smaller weight. The corrections are found by solving the exact linear
//! system given by condition 2 for words of length `< w`. Because each
//! correction only involves earlier coordinates, the inverse is polynomial
//! and explicit.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;

use num_traits::Zero;

use crate::error::{check_dim, Error, Result};
use crate::field::PolyVectorField;
use crate::grading::{BracketExpr, BracketTable, GradedStructure};
use crate::linalg;
use crate::map::PolyMap;
use crate::poly::Polynomial;
use crate::syntax::format_rational;
use crate::Rational;

/// `X1*X2*...` formatting of a generator word.
pub fn format_word(word: &[usize]) -> String {
    let parts: Vec<String> = word.iter().map(|i| format!("X{}", i + 1)).collect();
    parts.join("*")
}

/// Condition (i) witness for one level of the flag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignmentWitness {
    pub n: usize,
    pub rank: usize,
    /// `J theta(x) . v` for every bracket value of depth exactly `n`.
    pub images: Vec<(BracketExpr, Vec<Rational>)>,
}

/// One verified instance of condition (ii).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CertificateEntry {
    pub n: usize,
    /// 1-based coordinate index.
    pub k: usize,
    pub word: Vec<usize>,
    pub value: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Certificate {
    pub alignment: Vec<AlignmentWitness>,
    pub entries: Vec<CertificateEntry>,
}

impl Certificate {
    /// `n,k,word,value` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,k,word,value\n");
        for e in &self.entries {
            let _ = writeln!(s, "{},{},{},{}", e.n, e.k, format_word(&e.word), format_rational(&e.value));
        }
        s
    }
}

/// First failed adaptedness check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// Condition (i): a bracket value of depth `<= n` has a nonzero image in
    /// coordinate `k > d_n`.
    Alignment {
        n: usize,
        k: usize,
        bracket: BracketExpr,
        value: Rational,
    },
    /// Condition (i): the image of `C_n(x)` has the wrong dimension.
    AlignmentRank { n: usize, expected: usize, found: usize },
    /// Condition (ii).
    Operator {
        n: usize,
        k: usize,
        word: Vec<usize>,
        value: Rational,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Alignment { n, k, bracket, value } => write!(
                f,
                "condition (i) violated at n={n}, k={k}: bracket {bracket} has image component {}",
                format_rational(value)
            ),
            Violation::AlignmentRank { n, expected, found } => {
                write!(f, "condition (i) violated at n={n}: image rank {found}, expected {expected}")
            }
            Violation::Operator { n, k, word, value } => write!(
                f,
                "condition (ii) violated at n={n}, k={k}, D={}: value {}",
                format_word(word),
                format_rational(value)
            ),
        }
    }
}

/// A chart that has passed [`validate_adapted`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdaptedChart {
    theta: PolyMap,
    structure: GradedStructure,
    certificate: Certificate,
}

impl AdaptedChart {
    pub fn theta(&self) -> &PolyMap {
        &self.theta
    }

    pub fn structure(&self) -> &GradedStructure {
        &self.structure
    }

    pub fn certificate(&self) -> &Certificate {
        &self.certificate
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Validation {
    Adapted(AdaptedChart),
    Violated(Violation),
}

impl Validation {
    pub fn is_adapted(&self) -> bool {
        matches!(self, Validation::Adapted(_))
    }

    pub fn into_chart(self) -> Option<AdaptedChart> {
        match self {
            Validation::Adapted(c) => Some(c),
            Validation::Violated(_) => None,
        }
    }

    pub fn violation(&self) -> Option<&Violation> {
        match self {
            Validation::Adapted(_) => None,
            Validation::Violated(v) => Some(v),
        }
    }
}

/// All generator words of length `1..=max_len` with the values
/// `(D g)(x)`, keyed by word. Words are built from the inside out so each
/// intermediate derivative is computed once.
fn operator_values(
    generators: &[PolyVectorField],
    g: &Polynomial,
    x: &[Rational],
    max_len: usize,
) -> Result<BTreeMap<(usize, Vec<usize>), Rational>> {
    let mut out = BTreeMap::new();
    let mut level: Vec<(Vec<usize>, Polynomial)> = vec![(Vec::new(), g.clone())];
    for len in 1..=max_len {
        let mut next = Vec::with_capacity(level.len() * generators.len());
        for (suffix, poly) in &level {
            for (i, gen) in generators.iter().enumerate() {
                let p = gen.derivative_of(poly)?;
                let mut word = Vec::with_capacity(len);
                word.push(i);
                word.extend_from_slice(suffix);
                out.insert((len, word.clone()), p.eval(x)?);
                next.push((word, p));
            }
        }
        level = next;
    }
    Ok(out)
}

/// Checks both adaptedness conditions exactly and returns either the
/// certified chart or the first violation, ordered by `n`, then `k`, then
/// word length and word.
pub fn validate_adapted(
    theta: &PolyMap,
    generators: &[PolyVectorField],
    structure: &GradedStructure,
) -> Result<Validation> {
    let d = structure.dim();
    check_dim(d, theta.dim())?;
    if theta.inverse().is_none() {
        return Err(Error::MissingInverse);
    }
    let x = structure.base_point();
    if theta.eval(x)?.iter().any(|v| !v.is_zero()) {
        return Err(Error::ChartNotCentered);
    }
    let big_n = structure.step();
    let table = BracketTable::up_to(generators, big_n)?;
    let jac = theta.jacobian_at(x)?;

    let mut certificate = Certificate::default();

    // condition (i)
    let mut images_so_far: Vec<Vec<Rational>> = Vec::new();
    for n in 1..=big_n {
        let dn = structure.d(n);
        let mut images = Vec::new();
        for e in table.at_depth(n) {
            let img = linalg::mat_vec(&jac, &e.field.eval(x)?);
            if let Some(k) = (dn..d).find(|&k| !img[k].is_zero()) {
                return Ok(Validation::Violated(Violation::Alignment {
                    n,
                    k: k + 1,
                    bracket: e.expr.clone(),
                    value: img[k].clone(),
                }));
            }
            images_so_far.push(img.clone());
            images.push((e.expr.clone(), img));
        }
        let r = linalg::rank(&images_so_far);
        if r != dn {
            return Ok(Validation::Violated(Violation::AlignmentRank {
                n,
                expected: dn,
                found: r,
            }));
        }
        certificate.alignment.push(AlignmentWitness { n, rank: r, images });
    }

    // condition (ii): coordinate k (0-based) is constrained for n < w_k
    let weights = structure.weights().as_slice();
    let mut values: Vec<BTreeMap<(usize, Vec<usize>), Rational>> = Vec::with_capacity(d);
    for k in 0..d {
        let max_len = weights[k] as usize - 1;
        values.push(operator_values(generators, &theta.components()[k], x, max_len)?);
    }
    for n in 1..=big_n {
        for k in structure.d(n)..d {
            for ((_, word), value) in values[k].range((1, Vec::new())..(n + 1, Vec::new())) {
                if !value.is_zero() {
                    return Ok(Validation::Violated(Violation::Operator {
                        n,
                        k: k + 1,
                        word: word.clone(),
                        value: value.clone(),
                    }));
                }
                certificate.entries.push(CertificateEntry {
                    n,
                    k: k + 1,
                    word: word.clone(),
                    value: value.clone(),
                });
            }
        }
    }

    Ok(Validation::Adapted(AdaptedChart {
        theta: theta.clone(),
        structure: structure.clone(),
        certificate,
    }))
}

/// Exponent vectors over `vars` (indices into a `d`-vector) with total
/// degree in `[2, max_degree]` and weighted degree `<= max_weight`.
fn correction_monomials(vars: &[usize], weights: &[u32], d: usize, max_degree: u32, max_weight: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; d];
    fn rec(
        pos: usize,
        vars: &[usize],
        weights: &[u32],
        cur: &mut Vec<u32>,
        deg: u32,
        wdeg: u32,
        max_degree: u32,
        max_weight: u32,
        out: &mut Vec<Vec<u32>>,
    ) {
        if pos == vars.len() {
            if deg >= 2 {
                out.push(cur.clone());
            }
            return;
        }
        let v = vars[pos];
        let mut e = 0;
        loop {
            let nd = deg + e;
            let nw = wdeg + e * weights[v];
            if nd > max_degree || nw > max_weight {
                break;
            }
            cur[v] = e;
            rec(pos + 1, vars, weights, cur, nd, nw, max_degree, max_weight, out);
            e += 1;
        }
        cur[v] = 0;
    }
    rec(0, vars, weights, &mut cur, 0, 0, max_degree, max_weight, &mut out);
    out.sort_by(|a, b| {
        let da: u32 = a.iter().sum();
        let db: u32 = b.iter().sum();
        da.cmp(&db).then_with(|| b.cmp(a))
    });
    out
}

/// Constructs a polynomial adapted chart at the structure's base point.
pub fn construct_adapted(
    generators: &[PolyVectorField],
    structure: &GradedStructure,
    max_correction_degree: u32,
) -> Result<AdaptedChart> {
    let d = structure.dim();
    let x0 = structure.base_point();
    let big_n = structure.step();
    let table = BracketTable::up_to(generators, big_n)?;
    check_dim(d, table.dim())?;

    // linear stage: greedy flag-compatible basis in (depth, table index) order
    let mut basis: Vec<Vec<Rational>> = Vec::with_capacity(d);
    for e in table.up_to_depth(big_n) {
        if basis.len() == d {
            break;
        }
        let v = e.field.eval(x0)?;
        basis.push(v);
        if linalg::rank(&basis) < basis.len() {
            basis.pop();
        }
    }
    if basis.len() < d {
        return Err(Error::HormanderFailure {
            flag: structure.dims().to_vec(),
        });
    }
    // columns of B are the basis vectors; chart's linear part is B^{-1}
    let b: Vec<Vec<Rational>> = (0..d).map(|i| (0..d).map(|j| basis[j][i].clone()).collect()).collect();
    let a = linalg::inverse(&b).ok_or_else(|| Error::InvalidArgument("degenerate bracket basis".into()))?;
    let linear = PolyMap::affine(&a, x0)?;
    let b_inv_map = linear.inverse().expect("affine maps carry an inverse").to_vec();

    // correction stage
    let weights = structure.weights().as_slice();
    let mut theta: Vec<Polynomial> = Vec::with_capacity(d);
    let mut corrections: Vec<Polynomial> = Vec::with_capacity(d);
    for k in 0..d {
        let lin_k = linear.components()[k].clone();
        let wk = weights[k];
        if wk <= 1 {
            theta.push(lin_k);
            corrections.push(Polynomial::zero(d));
            continue;
        }
        let lower: Vec<usize> = (0..k).filter(|&j| weights[j] < wk).collect();
        let monos = correction_monomials(&lower, weights, d, max_correction_degree, wk - 1);
        let max_len = wk as usize - 1;
        let base_vals = operator_values(generators, &lin_k, x0, max_len)?;
        // candidate functions expressed in x: products of lower theta's
        let mut cand_vals = Vec::with_capacity(monos.len());
        let mut cand_polys = Vec::with_capacity(monos.len());
        for m in &monos {
            let mut p = Polynomial::one(d);
            for (j, &e) in m.iter().enumerate() {
                if e > 0 {
                    p = &p * &theta[j].pow(e);
                }
            }
            cand_vals.push(operator_values(generators, &p, x0, max_len)?);
            cand_polys.push(p);
        }
        // rows ordered by word length so the first inconsistent length is reported
        let keys: Vec<(usize, Vec<usize>)> = base_vals.keys().cloned().collect();
        let mut rows: Vec<Vec<Rational>> = Vec::new();
        let mut rhs: Vec<Rational> = Vec::new();
        let mut solution = vec![Rational::zero(); monos.len()];
        for len in 1..=max_len {
            for key in keys.iter().filter(|(l, _)| *l == len) {
                rows.push(cand_vals.iter().map(|cv| cv[key].clone()).collect());
                rhs.push(-base_vals[key].clone());
            }
            match linalg::solve(&rows, &rhs) {
                Some(s) => solution = s,
                None => {
                    return Err(Error::ChartConstructionFailure {
                        coordinate: k + 1,
                        word_length: len,
                        max_degree: max_correction_degree,
                    })
                }
            }
        }
        let mut theta_k = lin_k;
        let mut corr_k = Polynomial::zero(d);
        for ((c, p), m) in solution.iter().zip(&cand_polys).zip(&monos) {
            if !c.is_zero() {
                theta_k += &p.scale(c);
                corr_k.add_term(crate::poly::Monomial::from_exponents(m.clone()), c.clone());
            }
        }
        theta.push(theta_k);
        corrections.push(corr_k);
    }

    // inverse: x = x0 + B (y - P(y))
    let z_of_y: Vec<Polynomial> = (0..d).map(|k| &Polynomial::var(d, k) - &corrections[k]).collect();
    let inverse: Vec<Polynomial> = b_inv_map
        .iter()
        .map(|p| p.compose(&z_of_y))
        .collect::<Result<_>>()?;
    let map = PolyMap::with_inverse(theta, inverse)?;
    match validate_adapted(&map, generators, structure)? {
        Validation::Adapted(c) => Ok(c),
        Validation::Violated(v) => {
            let (coordinate, word_length) = match v {
                Violation::Operator { k, word, .. } => (k, word.len()),
                Violation::Alignment { k, n, .. } => (k, n),
                Violation::AlignmentRank { n, .. } => (0, n),
            };
            Err(Error::ChartConstructionFailure {
                coordinate,
                word_length,
                max_degree: max_correction_degree,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grading::build_graded_structure;
    use crate::syntax::{parse_field, parse_polynomial};

    fn zero(d: usize) -> Vec<Rational> {
        vec![Rational::zero(); d]
    }

    fn example() -> Vec<PolyVectorField> {
        vec![parse_field("[1, x1]", 2).unwrap(), parse_field("[x1, 0]", 2).unwrap()]
    }

    fn heisenberg() -> Vec<PolyVectorField> {
        vec![
            parse_field("[1, 0, -1/2*x2]", 3).unwrap(),
            parse_field("[0, 1, 1/2*x1]", 3).unwrap(),
        ]
    }

    fn reference_theta() -> PolyMap {
        PolyMap::with_inverse(
            vec![parse_polynomial("x1", 2).unwrap(), parse_polynomial("x2 - 1/2*x1^2", 2).unwrap()],
            vec![parse_polynomial("y1", 2).unwrap(), parse_polynomial("y2 + 1/2*y1^2", 2).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn identity_chart_violation_on_example() {
        let (s, _) = build_graded_structure(&example(), &zero(2), 8).unwrap();
        let v = validate_adapted(&PolyMap::identity(2), &example(), &s).unwrap();
        assert_eq!(
            v.violation(),
            Some(&Violation::Operator {
                n: 2,
                k: 2,
                word: vec![0, 0],
                value: Rational::from_integer(1.into()),
            })
        );
    }

    #[test]
    fn reference_chart_validates() {
        let (s, _) = build_graded_structure(&example(), &zero(2), 8).unwrap();
        let chart = validate_adapted(&reference_theta(), &example(), &s).unwrap().into_chart().unwrap();
        assert!(chart.certificate().entries.iter().all(|e| e.value.is_zero()));
        // words of length 1 and 2 on coordinate 2, recorded for n = 1 and n = 2
        assert_eq!(chart.certificate().entries.len(), 2 + (2 + 4));
    }

    #[test]
    fn heisenberg_identity_validates() {
        let (s, _) = build_graded_structure(&heisenberg(), &zero(3), 8).unwrap();
        assert!(validate_adapted(&PolyMap::identity(3), &heisenberg(), &s).unwrap().is_adapted());
    }

    #[test]
    fn off_centre_rejected() {
        let (s, _) = build_graded_structure(&example(), &zero(2), 8).unwrap();
        let shifted = PolyMap::affine(
            &[vec![Rational::from_integer(1.into()), Rational::zero()], vec![Rational::zero(), Rational::from_integer(1.into())]],
            &[Rational::from_integer(1.into()), Rational::zero()],
        )
        .unwrap();
        assert_eq!(validate_adapted(&shifted, &example(), &s), Err(Error::ChartNotCentered));
    }

    #[test]
    fn constructed_example_chart() {
        let (s, _) = build_graded_structure(&example(), &zero(2), 8).unwrap();
        let chart = construct_adapted(&example(), &s, s.step() as u32).unwrap();
        // first coordinate agrees with x1; second is a flag-preserving rescale of the reference chart
        let th = chart.theta().components();
        assert_eq!(th[0], parse_polynomial("x1", 2).unwrap());
        let reference_map = reference_theta();
        let reference = &reference_map.components()[1];
        let ratio = th[1].coefficient(&crate::poly::Monomial::var(2, 1));
        assert_eq!(th[1], reference.scale(&ratio));
    }

    #[test]
    fn constructed_charts_for_simple_models() {
        for d in 1..=3 {
            let gens: Vec<_> = (0..d).map(|i| PolyVectorField::coordinate(d, i)).collect();
            let (s, _) = build_graded_structure(&gens, &zero(d), 8).unwrap();
            let chart = construct_adapted(&gens, &s, 1).unwrap();
            assert_eq!(chart.theta(), &PolyMap::identity(d));
        }
        let (s, _) = build_graded_structure(&heisenberg(), &zero(3), 8).unwrap();
        let chart = construct_adapted(&heisenberg(), &s, 2).unwrap();
        assert_eq!(chart.theta(), &PolyMap::identity(3));
    }

    #[test]
    fn construction_at_shifted_base_point() {
        let one = Rational::from_integer(1.into());
        let base = vec![one.clone(), Rational::from_integer(2.into())];
        // at x1 = 1 the Example fields span R^2 already
        let (s, _) = build_graded_structure(&example(), &base, 8).unwrap();
        assert_eq!(s.dims(), &[2]);
        let chart = construct_adapted(&example(), &s, 1).unwrap();
        assert!(chart.theta().eval(&base).unwrap().iter().all(|v| v.is_zero()));
    }

    #[test]
    fn certificate_csv() {
        let (s, _) = build_graded_structure(&example(), &zero(2), 8).unwrap();
        let chart = validate_adapted(&reference_theta(), &example(), &s).unwrap().into_chart().unwrap();
        let csv = chart.certificate().to_csv();
        assert!(csv.starts_with("n,k,word,value\n1,2,X1,0\n"));
        assert!(csv.contains("2,2,X1*X1,0\n"));
    }
}
