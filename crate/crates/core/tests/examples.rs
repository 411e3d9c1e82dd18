use hypoloop_core::chart::{construct_adapted, validate_adapted, Violation};
use hypoloop_core::field::{apply_operator, ito_drift_correction, lie_bracket, PolyVectorField};
use hypoloop_core::grading::{build_graded_structure, check_drift_in_span};
use hypoloop_core::map::{pushforward, PolyMap};
use hypoloop_core::nilpotent::{check_bracket_flag, check_strong_hormander_everywhere, nilpotentize, NilpotentSystem};
use hypoloop_core::syntax::{parse_field, parse_polynomial};
use hypoloop_core::weights::{graded_truncate, graded_weight, Dilation, GradedWeight, Weights};
use hypoloop_core::{Error, Rational};

fn f(s: &str, d: usize) -> PolyVectorField {
    parse_field(s, d).unwrap()
}

fn r(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

fn origin(d: usize) -> Vec<Rational> {
    vec![r(0, 1); d]
}

fn example() -> Vec<PolyVectorField> {
    vec![f("[1, x1]", 2), f("[x1, 0]", 2)]
}

fn heisenberg() -> Vec<PolyVectorField> {
    vec![f("[1, 0, -x2/2]", 3), f("[0, 1, x1/2]", 3)]
}

fn reference_theta() -> PolyMap {
    let t = vec![parse_polynomial("x1", 2).unwrap(), parse_polynomial("x2 - x1^2/2", 2).unwrap()];
    let inv = vec![parse_polynomial("x1", 2).unwrap(), parse_polynomial("x2 + x1^2/2", 2).unwrap()];
    PolyMap::with_inverse(t, inv).unwrap()
}

#[test]
fn example_brackets() {
    let g = example();
    let b = lie_bracket(&g[0], &g[1]).unwrap();
    assert_eq!(b, f("[1, -x1]", 2));
    assert_eq!(lie_bracket(&g[0], &b).unwrap(), f("[0, -2]", 2));
}

#[test]
fn heisenberg_bracket_against_directional_derivatives() {
    let h = heisenberg();
    let b = lie_bracket(&h[0], &h[1]).unwrap();
    assert_eq!(b, f("[0, 0, 1]", 3));
    // [X, Y] = DY.X - DX.Y by central differences at scattered points
    let pts = [
        [0.3, -1.2, 2.0],
        [1.5, 0.7, -0.4],
        [-2.2, 3.1, 0.0],
        [0.0, 0.0, 0.0],
        [4.0, -4.0, 1.0],
        [-0.9, -0.1, 7.5],
        [2.5, 2.5, 2.5],
        [-3.3, 0.2, -1.1],
        [0.05, 9.0, 3.0],
        [6.0, -0.6, -2.0],
    ];
    let h_step = 1e-5;
    for p in pts {
        let dir = |field: &PolyVectorField, along: &[f64]| -> Vec<f64> {
            let plus: Vec<f64> = p.iter().zip(along).map(|(a, b)| a + h_step * b).collect();
            let minus: Vec<f64> = p.iter().zip(along).map(|(a, b)| a - h_step * b).collect();
            field
                .eval_f64(&plus)
                .iter()
                .zip(field.eval_f64(&minus))
                .map(|(a, b)| (a - b) / (2.0 * h_step))
                .collect()
        };
        let (x, y) = (h[0].eval_f64(&p), h[1].eval_f64(&p));
        let fd: Vec<f64> = dir(&h[1], &x).iter().zip(dir(&h[0], &y)).map(|(a, b)| a - b).collect();
        let exact = b.eval_f64(&p);
        for k in 0..3 {
            assert!((fd[k] - exact[k]).abs() < 1e-6);
        }
    }
}

#[test]
fn example_pushforwards_and_truncation() {
    let g = example();
    let theta = reference_theta();
    assert_eq!(pushforward(&theta, &g[0], 16).unwrap(), f("[1, 0]", 2));
    let p2 = pushforward(&theta, &g[1], 16).unwrap();
    assert_eq!(p2, f("[y1, -y1^2]", 2));
    let w = Weights::new(vec![1, 3]).unwrap();
    assert_eq!(graded_weight(&f("[y1, 0]", 2), &w).unwrap(), GradedWeight::Finite(0));
    assert_eq!(graded_weight(&f("[0, -y1^2]", 2), &w).unwrap(), GradedWeight::Finite(1));
    assert_eq!(graded_truncate(&p2, 1, &w).unwrap(), f("[0, -y1^2]", 2));
    let d1 = f("[1, 0]", 2);
    assert_eq!(graded_weight(&d1, &w).unwrap(), GradedWeight::Finite(1));
    assert_eq!(graded_truncate(&d1, 1, &w).unwrap(), d1);
    assert_eq!(graded_weight(&PolyVectorField::zero(2), &w).unwrap(), GradedWeight::NegInfinity);
    let hw = Weights::new(vec![1, 1, 2]).unwrap();
    for x in heisenberg() {
        assert_eq!(graded_truncate(&x, 1, &hw).unwrap(), x);
    }
    assert_eq!(pushforward(&PolyMap::identity(2), &g[1], 16).unwrap(), g[1]);
}

#[test]
fn ito_corrections_and_operators() {
    let zero2 = PolyVectorField::zero(2);
    assert_eq!(ito_drift_correction(&zero2, &example()).unwrap(), f("[x1/2, 1/2]", 2));
    let e: Vec<_> = (0..3).map(|i| PolyVectorField::coordinate(3, i)).collect();
    assert!(ito_drift_correction(&PolyVectorField::zero(3), &e).unwrap().is_zero());
    assert!(ito_drift_correction(&PolyVectorField::zero(3), &heisenberg()).unwrap().is_zero());

    let g = example();
    let x2 = parse_polynomial("x2", 2).unwrap();
    let v = apply_operator(&[g[0].clone(), g[0].clone()], &x2).unwrap();
    assert_eq!(v.eval(&origin(2)).unwrap(), r(1, 1));
    assert_eq!(apply_operator(&[], &x2).unwrap(), x2);
    let x1x2 = parse_polynomial("x1*x2", 2).unwrap();
    assert_eq!(apply_operator(&[f("[1, 0]", 2)], &x1x2).unwrap(), x2);
}

#[test]
fn ito_correction_matches_finite_differences() {
    // 1/2 (J X2) X2 = x1/2 d1 for the Example's second field
    let x2 = &example()[1];
    let corr = ito_drift_correction(&PolyVectorField::zero(2), std::slice::from_ref(x2)).unwrap();
    let h = 1e-6;
    for p in [[0.4, -1.0], [-2.0, 3.0], [1.7, 0.2]] {
        let v = x2.eval_f64(&p);
        let plus = x2.eval_f64(&[p[0] + h * v[0], p[1] + h * v[1]]);
        let minus = x2.eval_f64(&[p[0] - h * v[0], p[1] - h * v[1]]);
        let exact = corr.eval_f64(&p);
        for k in 0..2 {
            assert!((0.5 * (plus[k] - minus[k]) / (2.0 * h) - exact[k]).abs() < 1e-7);
        }
    }
}

#[test]
fn graded_structures() {
    let (s, _) = build_graded_structure(&example(), &origin(2), 8).unwrap();
    assert_eq!(s.dims(), [1, 1, 2]);
    assert_eq!((s.step(), s.weights().as_slice(), s.homogeneous_dimension()), (3, &[1, 3][..], 4));
    let e: Vec<_> = (0..4).map(|i| PolyVectorField::coordinate(4, i)).collect();
    let (s, _) = build_graded_structure(&e, &origin(4), 8).unwrap();
    assert_eq!((s.dims(), s.step(), s.homogeneous_dimension()), (&[4][..], 1, 4));
    let (s, _) = build_graded_structure(&heisenberg(), &origin(3), 8).unwrap();
    assert_eq!(s.dims(), [2, 3]);
    assert_eq!(s.weights().as_slice(), [1, 1, 2]);
    assert_eq!(s.homogeneous_dimension(), 4);
    assert!(matches!(
        build_graded_structure(&[f("[1, 0]", 2)], &origin(2), 3),
        Err(Error::HormanderFailure { .. })
    ));
}

#[test]
fn dilation_examples() {
    let d = Dilation::new(Weights::new(vec![1, 3]).unwrap(), 0.04).unwrap();
    let p = d.apply(&[1.0, 1.0]);
    assert!((p[0] - 0.2).abs() < 1e-15 && (p[1] - 0.008).abs() < 1e-15);
    let id = Dilation::new(Weights::new(vec![1, 3]).unwrap(), 1.0).unwrap();
    assert_eq!(id.apply(&[0.3, -7.0]), [0.3, -7.0]);
    let d = Dilation::new(Weights::new(vec![1, 1, 2]).unwrap(), 4.0).unwrap();
    assert_eq!(d.apply(&[1.0, 1.0, 1.0]), [2.0, 2.0, 4.0]);
    assert!(Dilation::new(Weights::new(vec![1]).unwrap(), 0.0).is_err());
}

#[test]
fn drift_span_examples() {
    let g = example();
    let pts = vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![-3.0, 0.5]];
    let comb = g[0].add(&g[1].scale(&r(2, 1))).unwrap();
    assert!(check_drift_in_span(&comb, &g, &origin(2), &pts).unwrap().passed());
    let d2 = f("[0, 1]", 2);
    assert!(!check_drift_in_span(&d2, &g, &origin(2), &pts).unwrap().base_point_ok);
    assert!(check_drift_in_span(&PolyVectorField::zero(2), &g, &origin(2), &pts).unwrap().passed());
}

#[test]
fn chart_examples() {
    let g = example();
    let (s, _) = build_graded_structure(&g, &origin(2), 8).unwrap();
    let v = validate_adapted(&PolyMap::identity(2), &g, &s).unwrap();
    assert_eq!(
        v.violation(),
        Some(&Violation::Operator {
            n: 2,
            k: 2,
            word: vec![0, 0],
            value: r(1, 1)
        })
    );
    assert!(validate_adapted(&reference_theta(), &g, &s).unwrap().is_adapted());
    let c = construct_adapted(&g, &s, 3).unwrap();
    assert!(validate_adapted(c.theta(), &g, &s).unwrap().is_adapted());
    // first-order agreement with the reference chart up to a flag-preserving
    // linear map: lower triangular Jacobian at 0
    let j = c.theta().jacobian_at(&origin(2)).unwrap();
    assert_eq!(j[0][1], r(0, 1));
    assert!(j[0][0] != r(0, 1) && j[1][1] != r(0, 1));

    let h = heisenberg();
    let (s, _) = build_graded_structure(&h, &origin(3), 8).unwrap();
    assert!(validate_adapted(&PolyMap::identity(3), &h, &s).unwrap().is_adapted());
    assert_eq!(construct_adapted(&h, &s, 2).unwrap().theta(), &PolyMap::identity(3));
    let e: Vec<_> = (0..2).map(|i| PolyVectorField::coordinate(2, i)).collect();
    let (s, _) = build_graded_structure(&e, &origin(2), 8).unwrap();
    assert_eq!(construct_adapted(&e, &s, 1).unwrap().theta(), &PolyMap::identity(2));
}

fn example_system() -> NilpotentSystem {
    let g = example();
    let (s, _) = build_graded_structure(&g, &origin(2), 8).unwrap();
    let c = validate_adapted(&reference_theta(), &g, &s).unwrap().into_chart().unwrap();
    nilpotentize(&g, &c, 16).unwrap()
}

#[test]
fn example_limit_system() {
    let sys = example_system();
    assert_eq!(sys.fields()[0], f("[1, 0]", 2));
    assert_eq!(sys.fields()[1], f("[0, -y1^2]", 2));
    assert!(sys.drift_tilde().is_zero());
    assert!(check_bracket_flag(&sys).unwrap().iter().all(|l| l.passed()));
    let h = check_strong_hormander_everywhere(&sys, &[vec![0.0, 0.0], vec![1.0, 5.0], vec![-2.0, 3.0]]).unwrap();
    assert_eq!(h.ranks, [2, 2, 2]);
    // corrupted X~2 = 0 fails the flag at n = 3
    let broken = NilpotentSystem::new(
        vec![sys.fields()[0].clone(), PolyVectorField::zero(2)],
        sys.structure().clone(),
        sys.chart().clone(),
    )
    .unwrap();
    let flag = check_bracket_flag(&broken).unwrap();
    assert!(!flag[2].passed());
}
