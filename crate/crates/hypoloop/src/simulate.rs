//! Euler–Maruyama for `dx = sqrt(eps) sum X_i dB^i + eps X0_ito dt` on
//! `[0, 1]`, optionally with the inverse Jacobian flow `v` and the rescaled
//! Malliavin covariance
//! `c~ = sum_i int (sqrt(eps) delta_eps^{-1}(v X_i(x))) (x) (...) ds`.
//!
//! Paths are split into chunks of `chunk_size`; chunk `c` draws from stream
//! `c` of the master seed and results are gathered in chunk order, so the
//! output is the same for any number of worker threads.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use hypoloop_core::nilpotent::NilpotentSystem;

use crate::error::{Error, Result};
use crate::model::SdeModel;
use crate::rng::NormalStream;

pub const DEFAULT_STEPS: usize = 2048;
pub const DEFAULT_CHUNK_SIZE: usize = 1024;
/// States beyond this magnitude flag the path.
pub const OVERFLOW_LIMIT: f64 = 1e8;
/// Eigenvalues within this fraction of the trace are treated as round-off.
pub const EIGEN_CLIP_REL: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub eps: f64,
    pub steps: usize,
    pub paths: usize,
    pub master_seed: u64,
    pub chunk_size: usize,
    /// Worker threads; `None` uses the rayon default. Does not affect output.
    pub threads: Option<usize>,
}

impl SimConfig {
    pub fn new(eps: f64, steps: usize, paths: usize, master_seed: u64) -> Self {
        SimConfig {
            eps,
            steps,
            paths,
            master_seed,
            chunk_size: DEFAULT_CHUNK_SIZE,
            threads: None,
        }
    }

    pub fn with_chunk_size(mut self, chunk_size: usize) -> Self {
        self.chunk_size = chunk_size;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_paths(mut self, paths: usize) -> Self {
        self.paths = paths;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.paths == 0 {
            return Err(Error::Config("paths must be at least 1".into()));
        }
        if self.chunk_size == 0 {
            return Err(Error::Config("chunk size must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }

    pub fn num_chunks(&self) -> usize {
        self.paths.div_ceil(self.chunk_size)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathRecord {
    pub id: usize,
    /// States at the ensemble's record times.
    pub trajectory: Vec<Vec<f64>>,
    pub terminal: Vec<f64>,
    /// Row-major `v_1`.
    pub v: Option<Vec<f64>>,
    /// Row-major `c~_1`, symmetrized and clipped.
    pub malliavin: Option<Vec<f64>>,
    pub lambda_min: Option<f64>,
    /// Largest eigenvalue correction applied when clipping.
    pub clip: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkInfo {
    pub index: usize,
    pub stream: u64,
    pub first_path: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    pub config: SimConfig,
    pub dim: usize,
    /// Requested times snapped to the step grid.
    pub record_times: Vec<f64>,
    pub paths: Vec<PathRecord>,
    /// Ids of paths excluded for leaving the finite range.
    pub flagged: Vec<usize>,
    pub chunks: Vec<ChunkInfo>,
}

impl PathEnsemble {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn terminals(&self) -> Vec<Vec<f64>> {
        self.paths.iter().map(|p| p.terminal.clone()).collect()
    }

    /// Coordinate `k` at record time index `t` across paths.
    pub fn coordinate_at(&self, t: usize, k: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p.trajectory[t][k]).collect()
    }

    pub fn terminal_coordinate(&self, k: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p.terminal[k]).collect()
    }

    pub fn lambda_mins(&self) -> Vec<f64> {
        self.paths.iter().filter_map(|p| p.lambda_min).collect()
    }

    pub fn max_clip(&self) -> f64 {
        self.paths.iter().map(|p| p.clip).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Extras {
    None,
    Jacobian,
    Malliavin,
}

/// Snaps times in `[0, 1]` to step indices.
fn record_indices(times: &[f64], steps: usize) -> Result<Vec<usize>> {
    times
        .iter()
        .map(|&t| {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("record time {t} outside [0, 1]")));
            }
            Ok((t * steps as f64).round() as usize)
        })
        .collect()
}

struct Workspace {
    d: usize,
    m: usize,
    x: Vec<f64>,
    xv: Vec<f64>,
    jx: Vec<f64>,
    b: Vec<f64>,
    jb: Vec<f64>,
    v: Vec<f64>,
    vnew: Vec<f64>,
    a: Vec<f64>,
    c: Vec<f64>,
    dw: Vec<f64>,
    u: Vec<f64>,
}

impl Workspace {
    fn new(d: usize, m: usize) -> Self {
        Workspace {
            d,
            m,
            x: vec![0.0; d],
            xv: vec![0.0; m * d],
            jx: vec![0.0; m * d * d],
            b: vec![0.0; d],
            jb: vec![0.0; d * d],
            v: vec![0.0; d * d],
            vnew: vec![0.0; d * d],
            a: vec![0.0; d * d],
            c: vec![0.0; d * d],
            dw: vec![0.0; m],
            u: vec![0.0; d],
        }
    }

    /// `c += weight * sum_i (s . v X_i)(s . v X_i)^T` at the current state.
    fn accumulate_malliavin(&mut self, scale: &[f64], weight: f64) {
        let d = self.d;
        for i in 0..self.m {
            let xi = &self.xv[i * d..(i + 1) * d];
            for k in 0..d {
                self.u[k] = scale[k] * (0..d).map(|j| self.v[k * d + j] * xi[j]).sum::<f64>();
            }
            for k in 0..d {
                for l in 0..d {
                    self.c[k * d + l] += weight * self.u[k] * self.u[l];
                }
            }
        }
    }
}

struct PathOutcome {
    record: Option<PathRecord>,
}

fn simulate_one(
    model: &SdeModel,
    cfg: &SimConfig,
    rec: &[usize],
    extras: Extras,
    scale: &[f64],
    id: usize,
    rng: &mut NormalStream,
    ws: &mut Workspace,
) -> PathOutcome {
    let d = ws.d;
    let m = ws.m;
    let dt = 1.0 / cfg.steps as f64;
    let sqdt = dt.sqrt();
    let se = cfg.eps.sqrt();
    let need_jac = extras != Extras::None;
    let need_c = extras == Extras::Malliavin;

    ws.x.copy_from_slice(model.base_point());
    if need_jac {
        ws.v.fill(0.0);
        for k in 0..d {
            ws.v[k * d + k] = 1.0;
        }
    }
    ws.c.fill(0.0);
    let mut trajectory = vec![Vec::new(); rec.len()];
    for (slot, &r) in rec.iter().enumerate() {
        if r == 0 {
            trajectory[slot] = ws.x.clone();
        }
    }
    let mut flagged = false;

    for step in 0..cfg.steps {
        for (i, f) in model.diffusion().iter().enumerate() {
            f.eval_into(&ws.x, &mut ws.xv[i * d..(i + 1) * d]);
        }
        model.drift().eval_into(&ws.x, &mut ws.b);
        if need_c {
            let w = if step == 0 { 0.5 * dt } else { dt };
            ws.accumulate_malliavin(scale, w);
        }
        if need_jac {
            for (i, f) in model.diffusion().iter().enumerate() {
                f.jacobian_into(&ws.x, &mut ws.jx[i * d * d..(i + 1) * d * d]);
            }
            model.drift().jacobian_into(&ws.x, &mut ws.jb);
        }
        for w in ws.dw.iter_mut() {
            *w = sqdt * rng.next();
        }

        if need_jac {
            // A = eps (Jb - sum J_i^2) dt + sqrt(eps) sum J_i dW_i ; v <- v - v A
            for k in 0..d {
                for l in 0..d {
                    let mut acc = ws.jb[k * d + l];
                    for i in 0..m {
                        let ji = &ws.jx[i * d * d..(i + 1) * d * d];
                        acc -= (0..d).map(|j| ji[k * d + j] * ji[j * d + l]).sum::<f64>();
                    }
                    let mut noise = 0.0;
                    for i in 0..m {
                        noise += ws.jx[i * d * d + k * d + l] * ws.dw[i];
                    }
                    ws.a[k * d + l] = cfg.eps * acc * dt + se * noise;
                }
            }
            for k in 0..d {
                for l in 0..d {
                    let va: f64 = (0..d).map(|j| ws.v[k * d + j] * ws.a[j * d + l]).sum();
                    ws.vnew[k * d + l] = ws.v[k * d + l] - va;
                }
            }
            std::mem::swap(&mut ws.v, &mut ws.vnew);
        }

        let mut bad = false;
        for k in 0..d {
            let mut inc = cfg.eps * ws.b[k] * dt;
            for i in 0..m {
                inc += se * ws.xv[i * d + k] * ws.dw[i];
            }
            ws.x[k] += inc;
            if !(ws.x[k].abs() <= OVERFLOW_LIMIT) {
                bad = true;
            }
        }
        if need_jac && ws.v.iter().any(|v| !(v.abs() <= OVERFLOW_LIMIT)) {
            bad = true;
        }
        if bad {
            flagged = true;
            // keep the stream aligned with an unflagged path of the same length
            for _ in (step + 1) * m..cfg.steps * m {
                rng.next();
            }
            break;
        }
        for (slot, &r) in rec.iter().enumerate() {
            if r == step + 1 {
                trajectory[slot] = ws.x.clone();
            }
        }
    }
    if flagged {
        return PathOutcome { record: None };
    }

    let (malliavin, lambda_min, clip) = if need_c {
        for (i, f) in model.diffusion().iter().enumerate() {
            f.eval_into(&ws.x, &mut ws.xv[i * d..(i + 1) * d]);
        }
        ws.accumulate_malliavin(scale, 0.5 * dt);
        let (c, lmin, clip) = symmetrize_and_clip(&ws.c, d);
        if !lmin.is_finite() {
            return PathOutcome { record: None };
        }
        (Some(c), Some(lmin), clip)
    } else {
        (None, None, 0.0)
    };

    PathOutcome {
        record: Some(PathRecord {
            id,
            trajectory,
            terminal: ws.x.clone(),
            v: need_jac.then(|| ws.v.clone()),
            malliavin,
            lambda_min,
            clip,
        }),
    }
}

/// Symmetrizes `c`, sets negative eigenvalues to zero (rebuilding the
/// matrix unless the correction is within round-off of the trace) and returns the rebuilt matrix, its smallest eigenvalue and
/// the largest correction applied.
pub fn symmetrize_and_clip(c: &[f64], d: usize) -> (Vec<f64>, f64, f64) {
    let m = DMatrix::from_fn(d, d, |i, j| 0.5 * (c[i * d + j] + c[j * d + i]));
    let trace = m.trace();
    let eig = SymmetricEigen::new(m);
    let tol = EIGEN_CLIP_REL * trace.abs();
    let mut clip: f64 = 0.0;
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < 0.0 {
            clip = clip.max(-*v);
            *v = 0.0;
        }
    }
    let rebuilt = if clip > tol {
        &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
    } else {
        DMatrix::from_fn(d, d, |i, j| 0.5 * (c[i * d + j] + c[j * d + i]))
    };
    let lmin = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let out = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| rebuilt[(i, j)]).collect();
    (out, lmin, clip)
}

fn run(model: &SdeModel, cfg: &SimConfig, record_times: &[f64], extras: Extras) -> Result<PathEnsemble> {
    run_filtered(model, cfg, record_times, extras, &|_: &mut PathRecord| true)
}

type Keep<'a> = &'a (dyn Fn(&mut PathRecord) -> bool + Sync);

fn run_filtered(model: &SdeModel, cfg: &SimConfig, record_times: &[f64], extras: Extras, keep: Keep) -> Result<PathEnsemble> {
    cfg.validate()?;
    let rec = record_indices(record_times, cfg.steps)?;
    let d = model.dim();
    let scale: Vec<f64> = if extras == Extras::Malliavin {
        if !model.is_adapted() {
            return Err(Error::Config(format!(
                "Malliavin covariance needs a model in adapted coordinates; '{}' is not",
                model.label()
            )));
        }
        let w = model.weights().expect("adapted models carry weights");
        w.as_slice()
            .iter()
            .map(|&wk| cfg.eps.sqrt() * cfg.eps.powf(-f64::from(wk) / 2.0))
            .collect()
    } else {
        vec![1.0; d]
    };
    let chunks: Vec<ChunkInfo> = (0..cfg.num_chunks())
        .map(|c| {
            let first = c * cfg.chunk_size;
            ChunkInfo {
                index: c,
                stream: c as u64,
                first_path: first,
                len: cfg.chunk_size.min(cfg.paths - first),
            }
        })
        .collect();

    let work = |info: &ChunkInfo| {
        let mut rng = NormalStream::new(cfg.master_seed, info.stream);
        let mut ws = Workspace::new(d, model.num_noises());
        let mut kept = Vec::with_capacity(info.len);
        let mut flagged = Vec::new();
        for id in info.first_path..info.first_path + info.len {
            match simulate_one(model, cfg, &rec, extras, &scale, id, &mut rng, &mut ws).record {
                Some(mut r) => {
                    if keep(&mut r) {
                        kept.push(r)
                    }
                }
                None => flagged.push(id),
            }
        }
        (kept, flagged)
    };
    let results: Vec<(Vec<PathRecord>, Vec<usize>)> = match cfg.threads {
        Some(1) => chunks.iter().map(work).collect(),
        threads => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.unwrap_or(0))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| chunks.par_iter().map(work).collect())
        }
    };

    let mut paths = Vec::with_capacity(cfg.paths);
    let mut flagged = Vec::new();
    for (k, f) in results {
        paths.extend(k);
        flagged.extend(f);
    }
    if flagged.len() * 100 > cfg.paths {
        return Err(Error::Overflow {
            flagged: flagged.len(),
            total: cfg.paths,
        });
    }
    Ok(PathEnsemble {
        config: cfg.clone(),
        dim: d,
        record_times: rec.iter().map(|&r| r as f64 / cfg.steps as f64).collect(),
        paths,
        flagged,
        chunks,
    })
}

pub fn simulate_paths(model: &SdeModel, config: &SimConfig, record_times: &[f64]) -> Result<PathEnsemble> {
    run(model, config, record_times, Extras::None)
}

/// As [`simulate_paths`], but each finished path passes through `keep`
/// inside its worker; it may rewrite the record and returns whether to
/// retain it. Keeps memory proportional to the retained paths.
pub fn simulate_filtered<F>(model: &SdeModel, config: &SimConfig, record_times: &[f64], keep: F) -> Result<PathEnsemble>
where
    F: Fn(&mut PathRecord) -> bool + Sync,
{
    run_filtered(model, config, record_times, Extras::None, &keep)
}

/// Also integrates the inverse Jacobian flow `v`, started at the identity.
pub fn simulate_with_jacobian(model: &SdeModel, config: &SimConfig, record_times: &[f64]) -> Result<PathEnsemble> {
    run(model, config, record_times, Extras::Jacobian)
}

/// Adds `v` and the rescaled Malliavin matrix `c~_1` with its smallest
/// eigenvalue. The model must be in adapted coordinates.
pub fn malliavin_covariance(model: &SdeModel, config: &SimConfig, record_times: &[f64]) -> Result<PathEnsemble> {
    run(model, config, record_times, Extras::Malliavin)
}

/// The limiting nilpotent diffusion; `config.eps` is ignored (the limit is
/// run at unit scale).
pub fn simulate_limit(sys: &NilpotentSystem, config: &SimConfig, record_times: &[f64]) -> Result<PathEnsemble> {
    let model = SdeModel::nilpotent(sys)?;
    run(&model, &config.clone().with_eps(1.0), record_times, Extras::None)
}

/// As [`simulate_limit`] with the Malliavin matrix of the limit.
pub fn malliavin_covariance_limit(
    sys: &NilpotentSystem,
    config: &SimConfig,
    record_times: &[f64],
) -> Result<PathEnsemble> {
    let model = SdeModel::nilpotent(sys)?;
    run(&model, &config.clone().with_eps(1.0), record_times, Extras::Malliavin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use hypoloop_core::field::PolyVectorField;
    use hypoloop_core::syntax::parse_field;
    use hypoloop_core::weights::Weights;

    fn brownian(d: usize) -> SdeModel {
        let gens: Vec<_> = (0..d).map(|i| PolyVectorField::coordinate(d, i)).collect();
        SdeModel::polynomial("bm", &gens, None, vec![0.0; d]).unwrap()
    }

    #[test]
    fn config_validation() {
        let m = brownian(1);
        assert!(simulate_paths(&m, &SimConfig::new(1.0, 10, 0, 1), &[]).is_err());
        assert!(simulate_paths(&m, &SimConfig::new(1.0, 0, 10, 1), &[]).is_err());
        assert!(simulate_paths(&m, &SimConfig::new(-1.0, 10, 10, 1), &[]).is_err());
        assert!(simulate_paths(&m, &SimConfig::new(1.0, 10, 10, 1), &[1.5]).is_err());
    }

    #[test]
    fn brownian_moments() {
        let d = 2;
        let n = 20_000;
        let e = simulate_paths(&brownian(d), &SimConfig::new(1.0, 8, n, 11), &[0.5]).unwrap();
        assert_eq!(e.len(), n);
        let nf = n as f64;
        for k in 0..d {
            let xs = e.terminal_coordinate(k);
            let mean = xs.iter().sum::<f64>() / nf;
            assert!(mean.abs() < 3.0 * (d as f64).sqrt() / nf.sqrt());
        }
        for k in 0..d {
            for l in 0..d {
                let c = e.paths.iter().map(|p| p.terminal[k] * p.terminal[l]).sum::<f64>() / nf;
                let target = if k == l { 1.0 } else { 0.0 };
                assert!((c - target).abs() < 5.0 / nf.sqrt() * 2.0_f64.sqrt(), "cov[{k}][{l}] = {c}");
            }
        }
        // half-time variance
        let mid = e.coordinate_at(0, 0);
        let v = mid.iter().map(|x| x * x).sum::<f64>() / nf;
        assert!((v - 0.5).abs() < 0.03);
    }

    #[test]
    fn chunking_and_threads_do_not_change_output() {
        let gens = vec![parse_field("[1, x1]", 2).unwrap(), parse_field("[x1, 0]", 2).unwrap()];
        let m = SdeModel::polynomial("example", &gens, None, vec![0.0, 0.0]).unwrap();
        let base = SimConfig::new(0.1, 32, 300, 5).with_chunk_size(64);
        let a = simulate_with_jacobian(&m, &base.clone().with_threads(1), &[0.25, 1.0]).unwrap();
        let b = simulate_with_jacobian(&m, &base.clone().with_threads(4), &[0.25, 1.0]).unwrap();
        assert_eq!(a.paths, b.paths);
        assert_eq!(a.chunks, b.chunks);
        let c = simulate_with_jacobian(&m, &base.with_seed(6).with_threads(1), &[0.25, 1.0]).unwrap();
        assert_ne!(a.paths, c.paths);
    }

    #[test]
    fn constant_fields_keep_v_identity() {
        let gens = vec![parse_field("[1, 2]", 2).unwrap(), parse_field("[0, 1]", 2).unwrap()];
        let m = SdeModel::polynomial("const", &gens, None, vec![0.0, 0.0]).unwrap();
        let e = simulate_with_jacobian(&m, &SimConfig::new(0.5, 16, 50, 2), &[]).unwrap();
        for p in &e.paths {
            assert_eq!(p.v.as_deref().unwrap(), &[1.0, 0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn elliptic_malliavin_is_identity() {
        let d = 3;
        let m = brownian(d).with_weights(Weights::new(vec![1; d]).unwrap()).unwrap();
        let e = malliavin_covariance(&m, &SimConfig::new(0.37, 64, 20, 3), &[]).unwrap();
        for p in &e.paths {
            let c = p.malliavin.as_ref().unwrap();
            for k in 0..d {
                for l in 0..d {
                    let target = if k == l { 1.0 } else { 0.0 };
                    assert!((c[k * d + l] - target).abs() <= 1e-12);
                }
            }
            assert!(p.clip <= 1e-10);
            assert!((p.lambda_min.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn malliavin_needs_adapted_model() {
        let m = brownian(2);
        assert!(malliavin_covariance(&m, &SimConfig::new(1.0, 4, 4, 0), &[]).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        // dx = x^2 dB blows up quickly from x = 5
        let gens = vec![parse_field("[x1^3]", 1).unwrap()];
        let m = SdeModel::polynomial("blowup", &gens, None, vec![5.0]).unwrap();
        match simulate_paths(&m, &SimConfig::new(1.0, 64, 100, 0), &[]) {
            Err(Error::Overflow { flagged, total }) => assert!(flagged > 1 && total == 100),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn clipping() {
        let (c, l, clip) = symmetrize_and_clip(&[1.0, 0.0, 0.0, -1e-3], 2);
        assert_eq!(l, 0.0);
        assert!((clip - 1e-3).abs() < 1e-15);
        assert!((c[0] - 1.0).abs() < 1e-15 && c[3].abs() < 1e-15);
        let (_, l, clip) = symmetrize_and_clip(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!((l - 1.0).abs() < 1e-12);
        assert_eq!(clip, 0.0);
    }
}
