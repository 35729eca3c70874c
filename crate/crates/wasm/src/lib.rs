//! Browser bindings. Every export returns a JSON string: either the result
//! object or `{"error": "..."}`.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;
use wasm_bindgen::prelude::*;

use icrb_core::fisher::Reference;
use icrb_core::harness::{dlog_fd_residual, run_static, simulate_filter_run, EpochSpec, Mode, Scenario};
use icrb_core::iekf::OmegaSegment;
use icrb_core::montecarlo::{map_trials, TrialError};
use icrb_core::Result;

/// Error samples returned to the page for scatter plots.
const MAX_SAMPLES: usize = 600;
const MAX_TRIALS: usize = 20_000;

fn respond<T: Serialize>(r: Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e.to_string()),
    }
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

fn rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

#[derive(Serialize)]
struct WahbaResult {
    crb: [[f64; 3]; 3],
    curvature_bound: [[f64; 3]; 3],
    empirical_p: [[f64; 3]; 3],
    trace_crb: f64,
    trace_curvature: f64,
    trace_empirical: f64,
    trace_ratio: f64,
    loewner_ok: bool,
    rejected_trials: usize,
    samples: Vec<[f64; 3]>,
}

/// Static experiment with references `e₁` and `(cos a, sin a, 0)`, plus
/// `e₃` when `third` is set, all with noise `sigma`.
#[wasm_bindgen]
pub fn wahba_explore(sigma: f64, angle_deg: f64, third: bool, n_trials: u32, seed: u32) -> String {
    respond(wahba_inner(sigma, angle_deg, third, n_trials as usize, seed as u64))
}

fn wahba_inner(sigma: f64, angle_deg: f64, third: bool, n_trials: usize, seed: u64) -> Result<WahbaResult> {
    let a = angle_deg.to_radians();
    let mut dirs = vec![Vector3::x(), Vector3::new(a.cos(), a.sin(), 0.0)];
    if third {
        dirs.push(Vector3::z());
    }
    let scenario = Scenario {
        seed,
        mode: Mode::StaticWahba,
        refs: dirs
            .into_iter()
            .map(|d| Reference::new(d, sigma))
            .collect::<Result<_>>()?,
        epochs: vec![],
        omega_profile: vec![],
        true_initial_attitude: Vector3::new(0.3, -0.6, 0.9),
        n_trials: n_trials.min(MAX_TRIALS),
    };
    let out = run_static(&scenario)?;
    let r = &out.report;
    let tr = |m: &[[f64; 3]; 3]| m[0][0] + m[1][1] + m[2][2];
    Ok(WahbaResult {
        crb: r.bound_first_order,
        curvature_bound: r.bound_curvature,
        empirical_p: rows(r.empirical_p.matrix()),
        trace_crb: tr(&r.bound_first_order),
        trace_curvature: tr(&r.bound_curvature),
        trace_empirical: r.empirical_p.trace(),
        trace_ratio: r.trace_ratio,
        loewner_ok: r.loewner_ok,
        rejected_trials: r.rejected_trials,
        samples: out
            .trials
            .iter()
            .filter_map(|t| t.xi)
            .take(MAX_SAMPLES)
            .map(Into::into)
            .collect(),
    })
}

#[derive(Serialize)]
struct FilterResult {
    t: Vec<f64>,
    trace_filter: Vec<f64>,
    trace_empirical: Vec<f64>,
    rejected_trials: usize,
}

/// Filter run over `n_epochs` epochs `dt` apart. Reference pairs alternate
/// between `(e₃, e₁)` and `(e₃, (0.6, 0.8, 0))`; the body turns at the
/// constant rate `(wx, wy, wz)`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn iekf_explore(
    sigma: f64,
    n_epochs: u32,
    dt: f64,
    wx: f64,
    wy: f64,
    wz: f64,
    n_trials: u32,
    seed: u32,
) -> String {
    respond(iekf_inner(
        sigma,
        n_epochs as usize,
        dt,
        Vector3::new(wx, wy, wz),
        (n_trials as usize).min(MAX_TRIALS),
        seed as u64,
    ))
}

fn iekf_inner(
    sigma: f64,
    n_epochs: usize,
    dt: f64,
    omega: Vector3<f64>,
    n_trials: usize,
    seed: u64,
) -> Result<FilterResult> {
    let n_epochs = n_epochs.clamp(1, 500);
    let pairs = [
        (Vector3::z(), Vector3::x()),
        (Vector3::z(), Vector3::new(0.6, 0.8, 0.0)),
    ];
    let epochs: Vec<EpochSpec> = (0..n_epochs)
        .map(|k| {
            let (d0, d1) = pairs[k % 2];
            EpochSpec { t_n: dt * k as f64, d0, d1, sigma0: sigma, sigma1: sigma }
        })
        .collect();
    let t_end = epochs.last().map_or(0.0, |e| e.t_n);
    let scenario = Scenario {
        seed,
        mode: Mode::DynamicIekf,
        refs: vec![],
        epochs,
        omega_profile: vec![OmegaSegment { t_start: 0.0, t_end: t_end.max(dt), omega }],
        true_initial_attitude: Vector3::new(0.2, -0.5, 1.1),
        n_trials: n_trials.max(1),
    };
    scenario.validate()?;

    let runs = map_trials(scenario.n_trials, seed, |_, rng| simulate_filter_run(&scenario, rng));
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let mut sums = vec![0.0; n_epochs];
    let mut counts = vec![0usize; n_epochs];
    let mut rejected = 0;
    for run in &runs {
        for k in 0..n_epochs {
            match TrialError::new(0, &run.truth[k], &run.estimates[k]).xi {
                Some(xi) => {
                    sums[k] += xi.norm_squared();
                    counts[k] += 1;
                }
                None => rejected += 1,
            }
        }
    }
    Ok(FilterResult {
        t: scenario.epochs.iter().map(|e| e.t_n).collect(),
        trace_filter: runs[0].covariances.iter().map(|p| p.trace()).collect(),
        trace_empirical: sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
            .collect(),
        rejected_trials: rejected,
    })
}

#[derive(Serialize)]
struct DlogCurve {
    q: Vec<f64>,
    residual: Vec<f64>,
}

/// Finite-difference residual of the truncated `dlog` series for
/// `‖q‖` log-spaced over `[q_min, q_max]`, `q` along `e₁` and `ξ = e₂`.
#[wasm_bindgen]
pub fn dlog_curve(q_min: f64, q_max: f64, n_points: u32) -> String {
    respond(dlog_inner(q_min, q_max, n_points as usize))
}

fn dlog_inner(q_min: f64, q_max: f64, n_points: usize) -> Result<DlogCurve> {
    if !(q_min > 0.0 && q_max > q_min && q_max < std::f64::consts::PI) {
        return Err(icrb_core::Error::InvalidInput(format!(
            "need 0 < q_min < q_max < π, got [{q_min}, {q_max}]"
        )));
    }
    let n = n_points.clamp(2, 1000);
    let ratio = (q_max / q_min).ln();
    let q: Vec<f64> = (0..n)
        .map(|i| q_min * (ratio * i as f64 / (n - 1) as f64).exp())
        .collect();
    let residual = q
        .iter()
        .map(|&s| dlog_fd_residual(&Vector3::new(s, 0.0, 0.0), &Vector3::y()))
        .collect::<Result<_>>()?;
    Ok(DlogCurve { q, residual })
}
