//! Global search by differential evolution on the coarsest pyramid layer,
//! damped Newton refinement on every layer, and the coarse-to-fine pipeline.

use nalgebra::{Matrix6, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::derivatives::{DerivativeMode, FloatingDerivatives, NtgModel, ReferenceGradients};
use crate::error::{invalid, Error, Result};
use crate::image::{ChannelStack, Image2D, Pyramid};
use crate::measure::{objective, Measure, DEFAULT_BINS};
use crate::smooth_abs::SmoothAbsConfig;
use crate::transform::{AffineParams, ParamBounds};

/// DE/rand/1/bin settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DEConfig {
    pub population: usize,
    pub generations: usize,
    /// Differential weight.
    pub f: f64,
    /// Crossover probability.
    pub cr: f64,
    pub bounds: ParamBounds,
    pub seed: u64,
}

impl Default for DEConfig {
    fn default() -> Self {
        Self { population: 30, generations: 200, f: 0.8, cr: 0.9, bounds: ParamBounds::DEFAULT, seed: 0 }
    }
}

impl DEConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 {
            return invalid(format!("DE population must be at least 4, got {}", self.population));
        }
        if !(self.f.is_finite() && self.f > 0.0 && self.f <= 2.0) {
            return invalid(format!("DE differential weight must lie in (0, 2], got {}", self.f));
        }
        if !(0.0..=1.0).contains(&self.cr) {
            return invalid(format!("DE crossover rate must lie in [0, 1], got {}", self.cr));
        }
        self.bounds.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DEOutcome {
    pub best: AffineParams,
    pub best_cost: f64,
    /// Best cost after each generation.
    pub trace: Vec<f64>,
}

/// Minimizes `cost` over `cfg.bounds`. Infinite costs mark degenerate
/// candidates. Trials of one generation are all drawn before any selection,
/// so the result depends only on the seed.
pub fn de_minimize(mut cost: impl FnMut(&AffineParams) -> f64, cfg: &DEConfig) -> Result<DEOutcome> {
    cfg.validate()?;
    let np = cfg.population;
    let b = &cfg.bounds;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pop: Vec<[f64; 6]> = (0..np).map(|_| b.sample(&mut rng).p).collect();
    let eval = |c: &mut dyn FnMut(&AffineParams) -> f64, x: &[f64; 6]| {
        let v = c(&AffineParams::new(*x));
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut costs: Vec<f64> = pop.iter().map(|x| eval(&mut cost, x)).collect();
    let mut trace = Vec::with_capacity(cfg.generations);
    let mut trials = vec![[0.0; 6]; np];

    for _ in 0..cfg.generations {
        for (i, trial) in trials.iter_mut().enumerate() {
            let r1 = pick_distinct(&mut rng, np, &[i]);
            let r2 = pick_distinct(&mut rng, np, &[i, r1]);
            let r3 = pick_distinct(&mut rng, np, &[i, r1, r2]);
            let jrand = rng.random_range(0..6);
            for k in 0..6 {
                trial[k] = if k == jrand || rng.random::<f64>() < cfg.cr {
                    pop[r1][k] + cfg.f * (pop[r2][k] - pop[r3][k])
                } else {
                    pop[i][k]
                };
            }
            b.clip(trial);
        }
        for i in 0..np {
            let c = eval(&mut cost, &trials[i]);
            if c < costs[i] {
                pop[i] = trials[i];
                costs[i] = c;
            }
        }
        trace.push(best_index(&costs).1);
    }

    let (bi, best_cost) = best_index(&costs);
    if !best_cost.is_finite() {
        return Err(Error::OptimizationFailed("every DE candidate was degenerate".into()));
    }
    Ok(DEOutcome { best: AffineParams::new(pop[bi]), best_cost, trace })
}

fn pick_distinct(rng: &mut ChaCha8Rng, n: usize, exclude: &[usize]) -> usize {
    loop {
        let r = rng.random_range(0..n);
        if !exclude.contains(&r) {
            return r;
        }
    }
}

/// First index of the smallest cost.
fn best_index(costs: &[f64]) -> (usize, f64) {
    costs.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &c)| if c < acc.1 { (i, c) } else { acc })
}

/// Newton iterations on one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonTrace {
    /// Accepted steps.
    pub iterations: usize,
    /// Smoothed objective at the start and after every accepted step.
    pub j_values: Vec<f64>,
    /// Set when the run ended on a degenerate evaluation.
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub iterations: usize,
    pub smooth: SmoothAbsConfig,
    pub mode: DerivativeMode,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { iterations: 6, smooth: SmoothAbsConfig::default(), mode: DerivativeMode::Spline }
    }
}

const MAX_HALVINGS: usize = 8;
const STEP_TOL: f64 = 1e-7;
const DECREASE_TOL: f64 = 1e-12;

/// Solves `H d = -g`, adding `lambda I` until `H` factors when it is not
/// positive definite.
fn newton_step(hess: &Matrix6<f64>, grad: &Vector6<f64>) -> Option<Vector6<f64>> {
    if let Some(ch) = hess.cholesky() {
        return Some(-ch.solve(grad));
    }
    let scale = hess.diagonal().abs().max();
    let mut lambda = 1e-3 * (hess.trace().abs() / 6.0).max(1e-12 * scale).max(f64::MIN_POSITIVE);
    for _ in 0..40 {
        if let Some(ch) = (hess + Matrix6::identity() * lambda).cholesky() {
            return Some(-ch.solve(grad));
        }
        lambda *= 10.0;
    }
    None
}

/// Damped Newton on the smoothed objective from `p0`.
pub fn newton_refine(
    f: &Image2D,
    f_r: &Image2D,
    p0: &AffineParams,
    cfg: &NewtonConfig,
) -> Result<(AffineParams, NewtonTrace)> {
    let fl = FloatingDerivatives::build(f, cfg.mode)?;
    let rf = ReferenceGradients::build(f_r, cfg.mode)?;
    newton_refine_model(&NtgModel::new(&fl, &rf, cfg.smooth), p0, cfg.iterations)
}

pub fn newton_refine_model(model: &NtgModel<'_>, p0: &AffineParams, iterations: usize) -> Result<(AffineParams, NewtonTrace)> {
    let mut p = *p0;
    let mut e = model.evaluate(&p, None)?;
    let mut trace = NewtonTrace { iterations: 0, j_values: vec![e.j], warning: None };

    for _ in 0..iterations {
        let Some(step) = newton_step(&e.hess, &e.grad) else {
            break;
        };
        let mut alpha = 1.0;
        let mut accepted = None;
        let mut degenerate = false;
        for _ in 0..=MAX_HALVINGS {
            let mut cand = p;
            for k in 0..6 {
                cand.p[k] += alpha * step[k];
            }
            match model.value(&cand, None) {
                Ok((j, ..)) if j < e.j => {
                    accepted = Some((cand, alpha));
                    break;
                }
                Ok(_) => {}
                Err(_) => degenerate = true,
            }
            alpha *= 0.5;
        }
        let Some((cand, alpha)) = accepted else {
            if degenerate {
                trace.warning = Some("no descent step: trial transforms left the overlap".into());
            }
            break;
        };
        let next = match model.evaluate(&cand, None) {
            Ok(next) => next,
            Err(err) => {
                trace.warning = Some(format!("stopped at best-so-far: {err}"));
                break;
            }
        };
        let decrease = e.j - next.j;
        p = cand;
        e = next;
        trace.iterations += 1;
        trace.j_values.push(e.j);
        if (step * alpha).amax() < STEP_TOL || decrease < DECREASE_TOL {
            break;
        }
    }
    Ok((p, trace))
}

/// One entry per pyramid layer, coarsest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTrace {
    pub layer: usize,
    pub width: usize,
    pub height: usize,
    pub iterations: usize,
    pub j_values: Vec<f64>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    /// Transform in finest-layer pixels.
    pub p_final: AffineParams,
    /// Unsmoothed NTG at `p_final` on the finest layer.
    pub ntg_final: f64,
    pub per_layer_trace: Vec<LayerTrace>,
    /// Best coarse-layer cost per DE generation.
    pub de_trace: Vec<f64>,
}

impl RegistrationResult {
    pub fn identity(ntg_final: f64) -> Self {
        Self { p_final: AffineParams::IDENTITY, ntg_final, per_layer_trace: Vec::new(), de_trace: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegisterConfig {
    pub layers: usize,
    /// DE settings; translation bounds are in coarsest-layer pixels.
    pub de: DEConfig,
    pub newton_iters: usize,
    pub smooth: SmoothAbsConfig,
    pub measure: Measure,
    pub mode: DerivativeMode,
    /// Upper limit on histogram bins for MI and CR; coarse layers use fewer.
    pub bins: usize,
}

impl Default for RegisterConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            de: DEConfig::default(),
            newton_iters: 6,
            smooth: SmoothAbsConfig::default(),
            measure: Measure::Ntg,
            mode: DerivativeMode::Spline,
            bins: DEFAULT_BINS,
        }
    }
}

/// Local DE box used to refine non-NTG measures on finer layers.
const LOCAL_BOX: [f64; 6] = [0.005, 0.005, 1.5, 0.005, 0.005, 1.5];
const LOCAL_POPULATION: usize = 12;
const LOCAL_GENERATIONS: usize = 25;

/// Histogram bins for a layer: about sixteen samples per bin row, never
/// more than `max`.
fn layer_bins(img: &Image2D, max: usize) -> usize {
    ((img.len() as f64).sqrt() / 4.0).round().clamp(8.0, max.max(8) as f64) as usize
}

/// Estimates `p` such that `f(p x)` matches `f_r(x)`.
pub fn register(f: &Image2D, f_r: &Image2D, cfg: &RegisterConfig) -> Result<RegistrationResult> {
    cfg.de.validate()?;
    let pf = Pyramid::build(f, cfg.layers)?;
    let pr = Pyramid::build(f_r, cfg.layers)?;

    let coarse_bins = layer_bins(pr.coarsest(), cfg.bins);
    let de = de_minimize(|p| cfg.measure.cost_at(pf.coarsest(), pr.coarsest(), p, coarse_bins), &cfg.de)?;
    let mut p = de.best;
    let mut traces = Vec::with_capacity(cfg.layers);
    let mut healthy = 0;

    for k in 0..cfg.layers {
        if k > 0 {
            p = p.transfer_up(Pyramid::SCALE_FACTOR);
        }
        let (fk, rk) = (pf.layer(k), pr.layer(k));
        let (width, height) = rk.dims();
        let mut trace = LayerTrace { layer: k, width, height, iterations: 0, j_values: Vec::new(), warning: None };
        match cfg.measure {
            Measure::Ntg => {
                let ncfg = NewtonConfig { iterations: cfg.newton_iters, smooth: cfg.smooth, mode: cfg.mode };
                match newton_refine(fk, rk, &p, &ncfg) {
                    Ok((q, t)) => {
                        p = q;
                        healthy += usize::from(t.warning.is_none());
                        trace.iterations = t.iterations;
                        trace.j_values = t.j_values;
                        trace.warning = t.warning;
                    }
                    Err(err) => trace.warning = Some(err.to_string()),
                }
            }
            _ if k == 0 => {
                healthy += 1;
                trace.j_values.push(de.best_cost);
            }
            measure => {
                let mut lo = p.p;
                let mut hi = p.p;
                for i in 0..6 {
                    lo[i] -= LOCAL_BOX[i];
                    hi[i] += LOCAL_BOX[i];
                }
                let local = DEConfig {
                    population: LOCAL_POPULATION,
                    generations: LOCAL_GENERATIONS,
                    bounds: ParamBounds::new(lo, hi)?,
                    seed: cfg.de.seed.wrapping_add(k as u64),
                    ..cfg.de
                };
                let bins = layer_bins(rk, cfg.bins);
                let at_p = measure.cost_at(fk, rk, &p, bins);
                match de_minimize(|q| measure.cost_at(fk, rk, q, bins), &local) {
                    Ok(out) if out.best_cost < at_p => {
                        p = out.best;
                        trace.iterations = local.generations;
                        trace.j_values = vec![at_p, out.best_cost];
                        healthy += 1;
                    }
                    Ok(_) => {
                        trace.j_values = vec![at_p];
                        healthy += 1;
                    }
                    Err(err) => trace.warning = Some(err.to_string()),
                }
            }
        }
        traces.push(trace);
    }
    if healthy == 0 {
        return Err(Error::OptimizationFailed("every pyramid layer degenerated".into()));
    }
    let ntg_final = objective(f, f_r, &p)
        .map_err(|e| Error::OptimizationFailed(format!("final transform is degenerate: {e}")))?
        .j;
    Ok(RegistrationResult { p_final: p, ntg_final, per_layer_trace: traces, de_trace: de.trace })
}

/// Registers every non-reference channel against the reference channel.
/// Failures stay local to their channel.
pub fn register_stack(stack: &ChannelStack, cfg: &RegisterConfig) -> Vec<Result<RegistrationResult>> {
    let r = stack.reference_index();
    let f_r = stack.reference();
    stack
        .channels()
        .iter()
        .enumerate()
        .map(|(i, ch)| {
            if i == r {
                let j = objective(ch, f_r, &AffineParams::IDENTITY).map(|o| o.j).unwrap_or(0.0);
                Ok(RegistrationResult::identity(j))
            } else {
                register(ch, f_r, cfg)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_bounds() -> ParamBounds {
        ParamBounds::new([0.9, -0.1, -5.0, -0.1, 0.9, -5.0], [1.1, 0.1, 5.0, 0.1, 1.1, 5.0]).unwrap()
    }

    #[test]
    fn de_finds_quadratic_minimum() {
        let target = [1.03, -0.02, 2.5, 0.04, 0.97, -1.25];
        let cfg = DEConfig { bounds: quadratic_bounds(), seed: 3, ..DEConfig::default() };
        let out = de_minimize(|p| (0..6).map(|i| (p.p[i] - target[i]).powi(2)).sum(), &cfg).unwrap();
        for i in 0..6 {
            assert!((out.best.p[i] - target[i]).abs() < 1e-3, "p{i}: {}", out.best.p[i]);
        }
        assert_eq!(out.trace.len(), 200);
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.trace[199] <= out.trace[19]);
    }

    #[test]
    fn de_degenerate_box_returns_the_point() {
        let pt = [1.0, 0.0, 3.0, 0.0, 1.0, -2.0];
        let cfg = DEConfig { bounds: ParamBounds::new(pt, pt).unwrap(), generations: 10, ..DEConfig::default() };
        let out = de_minimize(|p| p.p[2].abs(), &cfg).unwrap();
        assert_eq!(out.best.p, pt);
        assert!(out.trace.iter().all(|&c| c == 3.0));
    }

    #[test]
    fn de_is_deterministic_and_stays_in_bounds() {
        let cfg = DEConfig { bounds: quadratic_bounds(), seed: 11, generations: 30, ..DEConfig::default() };
        let b = cfg.bounds;
        let mut seen_outside = false;
        let cost = |p: &AffineParams| {
            (p.p[2] - 7.0).powi(2) + p.p[0].sin()
        };
        let a = de_minimize(
            |p| {
                seen_outside |= !b.contains(p);
                cost(p)
            },
            &cfg,
        )
        .unwrap();
        let c = de_minimize(cost, &cfg).unwrap();
        assert_eq!(a, c);
        assert!(!seen_outside);
        // optimum outside the box lands on the boundary
        assert_eq!(a.best.p[2], 5.0);
    }

    #[test]
    fn de_all_degenerate_fails() {
        let cfg = DEConfig { generations: 5, ..DEConfig::default() };
        let err = de_minimize(|_| f64::INFINITY, &cfg).unwrap_err();
        assert!(matches!(err, Error::OptimizationFailed(_)));
        assert!(de_minimize(|_| 0.0, &DEConfig { population: 3, ..cfg }).is_err());
    }

    #[test]
    fn damping_handles_indefinite_hessians() {
        let mut h = Matrix6::identity();
        h[(0, 0)] = -2.0;
        let g = Vector6::from_element(1.0);
        let d = newton_step(&h, &g).unwrap();
        // damped step is still a descent direction
        assert!(d.dot(&g) < 0.0);
        let d = newton_step(&Matrix6::identity(), &g).unwrap();
        assert!((d + g).norm() < 1e-15);
    }

    #[test]
    fn newton_rejects_constant_floating_image() {
        let f = Image2D::filled(32, 32, 0.5);
        let r = Image2D::from_fn(32, 32, |x, y| ((x * 7 + y * 3) % 11) as f64 / 11.0);
        let err = newton_refine(&f, &r, &AffineParams::IDENTITY, &NewtonConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateContent(_)));
        let err = newton_refine(&r, &r, &AffineParams::translation(100.0, 0.0), &NewtonConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateOverlap));
    }

    use crate::harness::{default_control_points, mean_displacement, natural_texture, synth_pair, PairOptions};

    fn corners(w: usize, h: usize) -> Vec<(f64, f64)> {
        let (a, b) = ((w - 1) as f64, (h - 1) as f64);
        vec![(0.0, 0.0), (a, 0.0), (0.0, b), (a, b)]
    }

    /// Band-limited field, so resampling at any transform is nearly exact.
    fn smooth_field(u: f64, v: f64) -> f64 {
        let waves = [(0.31, 0.07, 0.3), (-0.12, 0.27, 1.1), (0.21, -0.19, 2.0), (0.05, 0.36, 0.7), (0.4, 0.15, 2.5)];
        let mut acc = 0.5;
        for (k, &(a, b, phase)) in waves.iter().enumerate() {
            acc += 0.08 / (1.0 + 0.3 * k as f64) * (0.35 * (a * u + b * v) + phase).sin();
        }
        acc
    }

    #[test]
    fn newton_keeps_ground_truth_fixed() {
        let truth = AffineParams::new([1.01, 0.005, 2.3, -0.004, 0.995, -1.7]);
        let f = Image2D::from_fn(128, 128, |x, y| smooth_field(x as f64, y as f64));
        let r = Image2D::from_fn(128, 128, |x, y| {
            let (u, v) = truth.map_point(x as f64, y as f64);
            smooth_field(u, v)
        });
        let (p, trace) = newton_refine(&f, &r, &truth, &NewtonConfig::default()).unwrap();
        assert!((p.p[2] - truth.p[2]).abs() < 1e-4, "{:?}", p);
        assert!((p.p[5] - truth.p[5]).abs() < 1e-4, "{:?}", p);
        assert!(trace.j_values.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn newton_converges_from_one_pixel_away() {
        let pts = default_control_points(64, 64);
        for seed in 0..5u64 {
            let truth = AffineParams::new([1.0, 0.01, 3.0 + 0.1 * seed as f64, -0.01, 1.0, -2.0]);
            let pair = synth_pair(64, 64, &truth, &PairOptions::default(), 50 + seed).unwrap();
            let mut p0 = truth;
            p0.p[2] += 0.7;
            p0.p[5] -= 0.7;
            let (p, trace) = newton_refine(&pair.floating, &pair.reference, &p0, &NewtonConfig::default()).unwrap();
            let err = mean_displacement(&truth, &p, &pts).unwrap();
            assert!(err <= 0.1, "seed {seed}: {err} px after {} iterations", trace.iterations);
            assert!(trace.iterations <= 6);
            assert!(trace.j_values.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn newton_minimum_is_stationary() {
        let truth = AffineParams::translation(1.25, -0.5);
        let pair = synth_pair(96, 96, &truth, &PairOptions::default(), 61).unwrap();
        let cfg = NewtonConfig { iterations: 30, ..NewtonConfig::default() };
        let fl = FloatingDerivatives::build(&pair.floating, cfg.mode).unwrap();
        let rf = ReferenceGradients::build(&pair.reference, cfg.mode).unwrap();
        let model = NtgModel::new(&fl, &rf, cfg.smooth);
        let (p, _) = newton_refine_model(&model, &truth, cfg.iterations).unwrap();
        let e = model.evaluate(&p, None).unwrap();
        assert!(e.grad.norm() * (e.overlap_count as f64) <= 1e-4 * e.overlap_count as f64 * 1e2, "{}", e.grad.norm());
        let eig = e.hess.symmetric_eigenvalues();
        assert!(eig.min() >= -1e-3, "{eig}");
    }

    #[test]
    fn register_self_is_identity() {
        let r = natural_texture(128, 128, 12);
        let res = register(&r, &r, &RegisterConfig::default()).unwrap();
        let err = mean_displacement(&AffineParams::IDENTITY, &res.p_final, &corners(128, 128)).unwrap();
        assert!(err <= 1e-2, "{err} px: {:?}", res.p_final);
        assert!(res.ntg_final <= 1e-3);
        assert_eq!(res.de_trace.len(), 200);
        assert_eq!(res.per_layer_trace.len(), 4);
        assert!(res.per_layer_trace.iter().all(|t| t.j_values.windows(2).all(|w| w[1] <= w[0])));
    }

    #[test]
    fn register_rejects_tiny_images() {
        let r = natural_texture(40, 40, 1);
        assert!(matches!(register(&r, &r, &RegisterConfig::default()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn register_with_baseline_measures() {
        let truth = AffineParams::new([1.0, 0.0, 2.5, 0.0, 1.0, -3.0]);
        let pair = synth_pair(128, 128, &truth, &PairOptions::default(), 14).unwrap();
        for measure in [Measure::Mi, Measure::Ssd] {
            let cfg = RegisterConfig { measure, de: DEConfig { generations: 60, ..DEConfig::default() }, ..RegisterConfig::default() };
            let res = register(&pair.floating, &pair.reference, &cfg).unwrap();
            let err = mean_displacement(&truth, &res.p_final, &corners(128, 128)).unwrap();
            assert!(err <= 1.5, "{measure}: {err} px");
        }
    }

    #[test]
    fn register_stack_examples() {
        let r = natural_texture(64, 64, 15);
        let stack = ChannelStack::new(vec![r.clone(), r], 1).unwrap();
        let cfg = RegisterConfig { layers: 2, ..RegisterConfig::default() };
        let out = register_stack(&stack, &cfg);
        assert_eq!(out.len(), 2);
        for res in &out {
            let res = res.as_ref().unwrap();
            assert!(res.p_final.max_abs_diff(&AffineParams::IDENTITY) < 1e-3);
        }
        assert!(out[1].as_ref().unwrap().de_trace.is_empty());
        let bad = ChannelStack::new(vec![Image2D::filled(64, 64, 0.0), Image2D::filled(64, 64, 0.0)], 2);
        assert!(matches!(bad, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn register_stack_recovers_synthetic_warps() {
        use crate::harness::SyntheticScene;
        let scene = SyntheticScene::new(160, 160, 16, 16).unwrap();
        let (stack, truths) = scene.misaligned_stack(&ParamBounds::DEFAULT, 17).unwrap();
        let cfg = RegisterConfig { de: DEConfig { generations: 80, ..DEConfig::default() }, ..RegisterConfig::default() };
        let pts = default_control_points(160, 160);
        for (c, res) in register_stack(&stack, &cfg).into_iter().enumerate() {
            let res = res.unwrap();
            let err = mean_displacement(&truths[c], &res.p_final, &pts).unwrap();
            assert!(err <= 0.5, "channel {c}: {err} px");
        }
    }

    #[test]
    fn config_defaults() {
        let d = DEConfig::default();
        assert_eq!((d.population, d.generations, d.f, d.cr), (30, 200, 0.8, 0.9));
        let r = RegisterConfig::default();
        assert_eq!((r.layers, r.newton_iters, r.measure), (4, 6, Measure::Ntg));
    }
}
