//! Monodromy probes, radial limits in the Riemann sphere, and the terminal
//! singularity classifier built from them.

use super::path::PathSpec;
use super::{continue_state, OdeSystem, SingularityClass, Stepper};
use crate::C64;

/// A point of the Riemann sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum P1 {
    Finite(C64),
    Infinity,
}

/// Chordal distance on the Riemann sphere:
/// `d(x,y) = 2|x-y| / sqrt((1+|x|^2)(1+|y|^2))`.
pub fn chordal(x: C64, y: C64) -> f64 {
    2.0 * (x - y).norm() / ((1.0 + x.norm_sqr()) * (1.0 + y.norm_sqr())).sqrt()
}

fn chordal_to_inf(x: C64) -> f64 {
    2.0 / (1.0 + x.norm_sqr()).sqrt()
}

pub fn chordal_p1(a: P1, b: P1) -> f64 {
    match (a, b) {
        (P1::Finite(x), P1::Finite(y)) => chordal(x, y),
        (P1::Finite(x), P1::Infinity) | (P1::Infinity, P1::Finite(x)) => chordal_to_inf(x),
        (P1::Infinity, P1::Infinity) => 0.0,
    }
}

/// Outcome of repeated continuation around a closed loop.
#[derive(Debug, Clone, PartialEq)]
pub enum MonodromyResult {
    /// The state first returned to its initial value after this many
    /// circuits.
    ReturnsAfter(u32),
    /// No return within the loop budget; one state displacement per circuit.
    NoReturn { displacements: Vec<Vec<C64>> },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MonodromyError {
    #[error("loop path is not closed")]
    NotClosed,
    #[error("max_loops must be at least 1")]
    BadLoopCount,
    #[error("integration stalled at {z} during circuit {circuit}")]
    SingularStop { z: C64, circuit: u32 },
}

/// Continues `y0` around the closed `loop_path` up to `max_loops` times.
///
/// The return test is `|y_k - y0| <= tol·(1+|y0|)` component-wise, plus
/// agreement of the right-hand side at the loop base point whenever it is
/// finite, which guards against false returns at near-symmetric values.
/// Internal stepping runs two orders tighter than the match tolerance.
pub fn monodromy_probe(
    sys: &OdeSystem,
    y0: &[C64],
    loop_path: &PathSpec,
    max_loops: u32,
    tol: f64,
) -> Result<MonodromyResult, MonodromyError> {
    if !loop_path.is_closed() {
        return Err(MonodromyError::NotClosed);
    }
    if max_loops == 0 {
        return Err(MonodromyError::BadLoopCount);
    }
    let step_tol = (tol * 1e-2).clamp(1e-14, 1e-6);
    let z_base = loop_path.start();
    let f0 = sys.rhs(y0, z_base).ok();

    let mut y = y0.to_vec();
    let mut prev = y0.to_vec();
    let mut displacements = Vec::new();
    for circuit in 1..=max_loops {
        continue_state(sys, &mut y, loop_path, step_tol)
            .map_err(|z| MonodromyError::SingularStop { z, circuit })?;
        displacements.push(
            y.iter()
                .zip(&prev)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        let scale = 1.0 + max_norm(y0);
        let returned = y
            .iter()
            .zip(y0)
            .all(|(a, b)| (a - b).norm() <= tol * scale);
        if returned {
            let derivative_ok = match (&f0, sys.rhs(&y, z_base).ok()) {
                (Some(f0), Some(fk)) => {
                    let fscale = 1.0 + max_norm(f0);
                    f0.iter()
                        .zip(&fk)
                        .all(|(a, b)| (a - b).norm() <= 10.0 * tol * fscale)
                }
                // rhs not finite at the base value: the state match decides
                _ => true,
            };
            if derivative_ok {
                return Ok(MonodromyResult::ReturnsAfter(circuit));
            }
        }
        prev = y.clone();
    }
    Ok(MonodromyResult::NoReturn { displacements })
}

fn max_norm(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Sampling schedule for [`radial_limit`]: distances to the ray end shrink
/// geometrically.
#[derive(Debug, Clone, Copy)]
pub struct RadialSchedule {
    pub shrink: f64,
    pub max_samples: usize,
    /// Cauchy threshold in the chordal metric.
    pub chordal_tol: f64,
}

impl Default for RadialSchedule {
    fn default() -> Self {
        RadialSchedule {
            shrink: 0.5,
            max_samples: 40,
            chordal_tol: 1e-6,
        }
    }
}

/// One sample of the approach, at the given arclength distance from the
/// ray end.
#[derive(Debug, Clone)]
pub struct RadialSample {
    pub distance: f64,
    pub z: C64,
    pub state: Vec<C64>,
}

/// Limit detection outcome.
#[derive(Debug, Clone, PartialEq)]
pub enum LimitResult {
    /// Component-wise limit in the Riemann sphere; values of large
    /// magnitude converge to the point at infinity.
    Converged(Vec<P1>),
    /// Chordal gaps between consecutive samples, as observed.
    NoLimit { gaps: Vec<f64> },
}

/// Radial probe output: the verdict plus the samples it was based on.
#[derive(Debug, Clone)]
pub struct RadialProbe {
    pub result: LimitResult,
    pub samples: Vec<RadialSample>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RadialError {
    #[error("invalid schedule: shrink must lie in (0,1) and max_samples be >= 4")]
    BadSchedule,
    #[error("integration stalled at {z} after {collected} samples")]
    SingularStop { z: C64, collected: usize },
}

/// Samples the solution along `ray` at points approaching its end with
/// geometrically shrinking distances and tests the samples for a Cauchy
/// tail in the chordal metric.
pub fn radial_limit(
    sys: &OdeSystem,
    y0: &[C64],
    ray: &PathSpec,
    schedule: RadialSchedule,
    tol: f64,
) -> Result<RadialProbe, RadialError> {
    if !(schedule.shrink > 0.0 && schedule.shrink < 1.0) || schedule.max_samples < 4 {
        return Err(RadialError::BadSchedule);
    }
    let total = ray.arclength();
    let step_tol = (tol * 1e-2).clamp(1e-14, 1e-6);
    let mut stepper = Stepper::new(sys, ray, step_tol);
    // classification runs into genuinely stiff approaches; cap the effort
    stepper.max_steps = 250_000;

    let mut samples = vec![RadialSample {
        distance: total,
        z: ray.start(),
        state: y0.to_vec(),
    }];
    let mut gaps: Vec<f64> = Vec::new();
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut stalled = None;

    for j in 0..schedule.max_samples {
        let d = total * schedule.shrink.powi(j as i32 + 1);
        let t_next = ray.param_at_remaining(d);
        match stepper.advance(&mut y, t, t_next, |_, _, _| true) {
            super::Advance::Reached => {
                t = t_next;
                let prev = samples.last().expect("seeded").state.clone();
                samples.push(RadialSample {
                    distance: d,
                    z: ray.point(t),
                    state: y.clone(),
                });
                let gap = prev
                    .iter()
                    .zip(&y)
                    .map(|(a, b)| chordal(*a, *b))
                    .fold(0.0, f64::max);
                gaps.push(gap);

                // Cauchy tail: the last three gaps all below threshold
                if gaps.len() >= 3 && gaps[gaps.len() - 3..].iter().all(|g| *g < schedule.chordal_tol)
                {
                    let limit = y
                        .iter()
                        .map(|&v| {
                            if chordal_to_inf(v) < schedule.chordal_tol {
                                P1::Infinity
                            } else {
                                P1::Finite(v)
                            }
                        })
                        .collect();
                    return Ok(RadialProbe {
                        result: LimitResult::Converged(limit),
                        samples,
                    });
                }
                // oscillation: gaps above threshold with no geometric decay
                let m = gaps.len();
                if m >= 6
                    && gaps[m - 4..].iter().all(|g| *g >= schedule.chordal_tol)
                    && gaps[m - 1] > 0.25 * gaps[m - 4]
                {
                    return Ok(RadialProbe {
                        result: LimitResult::NoLimit { gaps },
                        samples,
                    });
                }
            }
            _ => {
                stalled = Some(ray.point(t));
                break;
            }
        }
    }
    if let Some(z) = stalled {
        if samples.len() < 4 {
            return Err(RadialError::SingularStop {
                z,
                collected: samples.len(),
            });
        }
    }
    Ok(RadialProbe {
        result: LimitResult::NoLimit { gaps },
        samples,
    })
}

/// Options for [`classify_singularity`].
#[derive(Debug, Clone, Copy)]
pub struct ClassifyOpts {
    pub tol: f64,
    pub schedule: RadialSchedule,
    pub max_loops: u32,
    /// Number of trailing samples entering the pole-order fit.
    pub fit_window: usize,
    /// Largest admissible RMS residual of the log-log fit.
    pub fit_residual: f64,
    /// Fraction of the approach length at which monodromy loops run.
    pub loop_standoff: f64,
}

impl Default for ClassifyOpts {
    fn default() -> Self {
        ClassifyOpts {
            tol: 1e-9,
            schedule: RadialSchedule::default(),
            max_loops: 8,
            fit_window: 8,
            fit_residual: 0.05,
            loop_standoff: 0.125,
        }
    }
}

/// Classifies the obstruction at `center`, approached along `approach`
/// (which must end at `center`), for the germ `y0` at the approach start.
///
/// Decision procedure: a finite radial limit at which the right-hand side
/// stays finite is removable; divergence with an integer power-law fit is
/// pole-like; a germ closing up after `n >= 2` shrinking loops is
/// branch-like; never closing with stationary per-loop displacement is
/// logarithmic; everything else stays undetermined. An essential
/// singularity cannot be certified numerically and lands in
/// [`SingularityClass::Undetermined`].
pub fn classify_singularity(
    sys: &OdeSystem,
    y0: &[C64],
    center: C64,
    approach: &PathSpec,
    opts: ClassifyOpts,
) -> SingularityClass {
    let probe = radial_limit(sys, y0, approach, opts.schedule, opts.tol);

    if let Ok(probe) = &probe {
        if let LimitResult::Converged(limit) = &probe.result {
            let all_finite = limit.iter().all(|p| matches!(p, P1::Finite(_)));
            if all_finite {
                let last = &probe.samples.last().expect("converged has samples").state;
                if sys.rhs(last, center).is_ok() {
                    return SingularityClass::Removable;
                }
                // finite limit but singular right-hand side: monodromy decides
            } else if let Some(order) = pole_order_fit(probe, opts) {
                return SingularityClass::PoleLike { order };
            }
        }
    }

    let finite_limit = matches!(
        &probe,
        Ok(RadialProbe { result: LimitResult::Converged(l), .. })
            if l.iter().all(|p| matches!(p, P1::Finite(_)))
    );

    // monodromy on shrinking loops around the center
    let total = approach.arclength();
    let r0 = total * opts.loop_standoff;
    let first = monodromy_at_radius(sys, y0, center, approach, r0, opts);
    let second = monodromy_at_radius(sys, y0, center, approach, r0 * 0.5, opts);
    match (first, second) {
        (Some(MonodromyResult::ReturnsAfter(n)), Some(MonodromyResult::ReturnsAfter(m)))
            if n == m =>
        {
            if n >= 2 {
                SingularityClass::BranchLike { sheets: n }
            } else if finite_limit {
                // single-valued and bounded near the puncture
                SingularityClass::Removable
            } else {
                SingularityClass::Undetermined
            }
        }
        (
            Some(MonodromyResult::NoReturn { displacements: d1 }),
            Some(MonodromyResult::NoReturn { displacements: d2 }),
        ) => {
            if stationary_displacements(&d1) && stationary_displacements(&d2) {
                SingularityClass::Logarithmic
            } else {
                SingularityClass::Undetermined
            }
        }
        _ => SingularityClass::Undetermined,
    }
}

/// Least-squares slope of `log|y|` against `log d` over the trailing fit
/// window; accepted only for a near-integer slope `-m`, `m >= 1`, with
/// small fit residual.
fn pole_order_fit(probe: &RadialProbe, opts: ClassifyOpts) -> Option<u32> {
    let dim = probe.samples.first()?.state.len();
    let mut orders = Vec::new();
    for i in 0..dim {
        let last = probe.samples.last()?.state[i].norm();
        if last < 10.0 {
            continue; // this component does not diverge
        }
        let pts: Vec<(f64, f64)> = probe
            .samples
            .iter()
            .rev()
            .take(opts.fit_window)
            .filter(|s| s.state[i].norm().is_finite() && s.state[i].norm() > 0.0)
            .map(|s| (s.distance.ln(), s.state[i].norm().ln()))
            .collect();
        if pts.len() < 4 {
            return None;
        }
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let denom = n * sxx - sx * sx;
        if denom.abs() < 1e-12 {
            return None;
        }
        let slope = (n * sxy - sx * sy) / denom;
        let intercept = (sy - slope * sx) / n;
        let residual = (pts
            .iter()
            .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        let m = (-slope).round();
        if slope > -0.5 || (slope - (-m)).abs() > 0.15 || residual > opts.fit_residual || m < 1.0 {
            return None;
        }
        orders.push(m as u32);
    }
    orders.into_iter().max()
}

/// Runs the monodromy probe on the circle of radius `r` around `center`,
/// entering at the point where the approach crosses that radius.
fn monodromy_at_radius(
    sys: &OdeSystem,
    y0: &[C64],
    center: C64,
    approach: &PathSpec,
    r: f64,
    opts: ClassifyOpts,
) -> Option<MonodromyResult> {
    if r <= 0.0 {
        return None;
    }
    let t_stop = approach.param_at_remaining(r);
    let step_tol = (opts.tol * 1e-2).clamp(1e-14, 1e-6);
    let mut y = y0.to_vec();
    let mut stepper = Stepper::new(sys, approach, step_tol);
    match stepper.advance(&mut y, 0.0, t_stop, |_, _, _| true) {
        super::Advance::Reached => {}
        _ => return None,
    }
    let z_at = approach.point(t_stop);
    let radius = (z_at - center).norm();
    if radius <= 0.0 {
        return None;
    }
    let angle = (z_at - center).arg();
    let loop_path = PathSpec::circle(center, radius, angle);
    monodromy_probe(sys, &y, &loop_path, opts.max_loops, opts.tol).ok()
}

/// Per-loop displacement stationarity: at least three loops whose
/// displacement vectors deviate from their mean by under five percent.
fn stationary_displacements(displacements: &[Vec<C64>]) -> bool {
    if displacements.len() < 3 {
        return false;
    }
    let dim = displacements[0].len();
    let n = displacements.len() as f64;
    let mean: Vec<C64> = (0..dim)
        .map(|i| displacements.iter().map(|d| d[i]).sum::<C64>() / n)
        .collect();
    let mean_norm = max_norm(&mean);
    if mean_norm == 0.0 {
        return false;
    }
    displacements.iter().all(|d| {
        let dev = d
            .iter()
            .zip(&mean)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        dev < 0.05 * mean_norm
    })
}
