//! The geodesic system of a warped product, its first integrals, traced
//! geodesics with drift monitoring, the coordinate-reparametrized system,
//! and induced covariant derivatives along traces.
//!
//! The second-order system, written on the state `(u, u̇)`:
//!
//! ```text
//! ü0 = -(b1'/2b1)(u̇0)^2 + Σ_k (a_k' f_k / 2b1)(u̇k)^2
//! ük = -(f_k'/2f_k)(u̇k)^2 - (a_k'/a_k) u̇0 u̇k        (fibers k)
//! ```
//!
//! Along every solution either `u̇0` vanishes identically (the base
//! coordinate is constant; decided at the seed against the degeneracy
//! threshold) or the conserved quantities are
//! `A_k = (u̇k)^2 f_k(u_k) a_k(u0)^2` per fiber and
//! `A_0 = (u̇0)^2 b1(u0) + Σ A_k / a_k(u0)`. In the constant-base case
//! `A_0` stores the constant coordinate and `A_k = (u̇k)^2 f_k(u_k)`.
//! The integrals are computed once at the seed and monitored, never
//! enforced by projection: their drift is the correctness signal for the
//! integrator.

use crate::continuation::{
    classify_singularity, integrate_with_events, ClassifyOpts, IntegrateOpts, OdeSystem, PathSpec,
    SingularityClass, Terminal,
};
use crate::expr::{self, Pole};
use crate::metric::{
    ordinariness, speed, ChristoffelTable, FactorDomain, MetricError,
    MetricSpec, Ordinariness,
};
use crate::{C64, DEGEN_EPS};

/// ODE state of a geodesic element: base point of the germ, coordinates
/// and velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicState {
    pub z: C64,
    pub u: Vec<C64>,
    pub udot: Vec<C64>,
}

impl GeodesicState {
    pub fn new(z: C64, u: Vec<C64>, udot: Vec<C64>) -> Self {
        GeodesicState { z, u, udot }
    }

    fn flat_state(&self) -> Vec<C64> {
        let mut y = self.u.clone();
        y.extend_from_slice(&self.udot);
        y
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeodesicError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Pole(#[from] Pole),
    #[error("state dimension {got} does not match the metric dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("path starts at {path_start} but the seed sits at {seed}")]
    PathMismatch { path_start: C64, seed: C64 },
    #[error("the last velocity component vanishes; reparametrization needs u̇N ≠ 0")]
    VanishingLastVelocity,
    #[error("trace too short: need at least {needed} samples, have {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("field sampling does not match the trace grid")]
    FieldShapeMismatch,
}

/// Which dichotomy branch the first integrals follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegralsCase {
    General,
    /// The base coordinate is constant along the geodesic; `a[0]` stores
    /// its value.
    ConstantU1,
}

/// Conserved quantities of a geodesic, fixed at the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstIntegrals {
    pub case: IntegralsCase,
    pub a: Vec<C64>,
}

/// First-order system of dimension `2N` on the state `(u, u̇)`.
pub fn geodesic_rhs(m: &MetricSpec) -> OdeSystem<'_> {
    let n = m.dim();
    let eps = m.pole_eps();
    OdeSystem::new(2 * n, move |y, z| {
        let (u, v) = y.split_at(n);
        let b1 = expr::eval_jet_with(m.b1(), u[0], eps).map_err(|_| Pole { at: z })?;
        let mut out = Vec::with_capacity(2 * n);
        out.extend_from_slice(v);

        let two_b1 = 2.0 * b1.value;
        let mut acc0 = -div(b1.d1, two_b1, z, eps)? * v[0] * v[0];
        let mut fiber_acc = Vec::with_capacity(n - 1);
        for k in 1..n {
            let a = expr::eval_jet_with(m.warp(k), u[0], eps).map_err(|_| Pole { at: z })?;
            let f = expr::eval_jet_with(m.fiber(k), u[k], eps).map_err(|_| Pole { at: z })?;
            acc0 += div(a.d1 * f.value, two_b1, z, eps)? * v[k] * v[k];
            let acc_k = -div(f.d1, 2.0 * f.value, z, eps)? * v[k] * v[k]
                - div(a.d1, a.value, z, eps)? * v[0] * v[k];
            fiber_acc.push(acc_k);
        }
        out.push(acc0);
        out.extend(fiber_acc);
        Ok(out)
    })
}

fn div(num: C64, den: impl Into<C64>, at: C64, eps: f64) -> Result<C64, Pole> {
    let den = den.into();
    let d = den.norm();
    if d == 0.0 || d < eps * num.norm() {
        Err(Pole { at })
    } else {
        Ok(num / den)
    }
}

/// Computes the conserved quantities from the seed state. The dichotomy is
/// decided by `|u̇0|` at the seed against the degeneracy threshold. A zero
/// initial base velocity selects the constant-base family, which is an
/// invariant set of the system exactly when the warp contributions to the
/// base acceleration vanish along the motion (constant warps being the
/// plain case); outside that regime the residual monitor reports the
/// mismatch rather than this function guessing a branch.
pub fn first_integrals(m: &MetricSpec, s0: &GeodesicState) -> Result<FirstIntegrals, GeodesicError> {
    check_dims(m, s0)?;
    let reason = ordinariness(m, &s0.u);
    if reason != Ordinariness::Ordinary {
        return Err(MetricError::NotOrdinary { reason }.into());
    }
    let n = m.dim();
    let eps = m.pole_eps();
    let mut a = vec![C64::new(0.0, 0.0); n];
    if s0.udot[0].norm() < DEGEN_EPS {
        a[0] = s0.u[0];
        for k in 1..n {
            let f = expr::eval_with(m.fiber(k), s0.u[k], eps)?;
            a[k] = s0.udot[k] * s0.udot[k] * f;
        }
        return Ok(FirstIntegrals {
            case: IntegralsCase::ConstantU1,
            a,
        });
    }
    let b1 = expr::eval_with(m.b1(), s0.u[0], eps)?;
    let mut a0 = s0.udot[0] * s0.udot[0] * b1;
    for k in 1..n {
        let warp = expr::eval_with(m.warp(k), s0.u[0], eps)?;
        let f = expr::eval_with(m.fiber(k), s0.u[k], eps)?;
        a[k] = s0.udot[k] * s0.udot[k] * f * warp * warp;
        a0 += div(a[k], warp, s0.u[0], eps)?;
    }
    a[0] = a0;
    Ok(FirstIntegrals {
        case: IntegralsCase::General,
        a,
    })
}

/// Component-wise residuals of the conservation equations at a state.
pub fn first_integral_residual(
    m: &MetricSpec,
    s: &GeodesicState,
    integrals: &FirstIntegrals,
) -> Result<Vec<f64>, GeodesicError> {
    check_dims(m, s)?;
    let n = m.dim();
    let eps = m.pole_eps();
    let mut r = vec![0.0f64; n];
    match integrals.case {
        IntegralsCase::ConstantU1 => {
            r[0] = (s.u[0] - integrals.a[0]).norm();
            for k in 1..n {
                let f = expr::eval_with(m.fiber(k), s.u[k], eps)?;
                r[k] = (s.udot[k] * s.udot[k] * f - integrals.a[k]).norm();
            }
        }
        IntegralsCase::General => {
            let b1 = expr::eval_with(m.b1(), s.u[0], eps)?;
            let mut rhs0 = integrals.a[0];
            for k in 1..n {
                let warp = expr::eval_with(m.warp(k), s.u[0], eps)?;
                let f = expr::eval_with(m.fiber(k), s.u[k], eps)?;
                r[k] = (s.udot[k] * s.udot[k] * f * warp * warp - integrals.a[k]).norm();
                rhs0 -= div(integrals.a[k], warp, s.u[0], eps)?;
            }
            r[0] = (s.udot[0] * s.udot[0] * b1 - rhs0).norm();
        }
    }
    Ok(r)
}

/// One recorded point of a geodesic trace, with drift diagnostics.
#[derive(Debug, Clone)]
pub struct GeodesicSample {
    pub t: f64,
    pub z: C64,
    pub u: Vec<C64>,
    pub udot: Vec<C64>,
    /// Residuals of the conservation equations at this sample.
    pub residual: Vec<f64>,
    pub speed: C64,
}

/// A traced geodesic: samples, conserved quantities, step statistics and
/// terminal status.
#[derive(Debug, Clone)]
pub struct GeodesicTrace {
    pub samples: Vec<GeodesicSample>,
    pub integrals: FirstIntegrals,
    pub terminal: Terminal,
    pub accepted: usize,
    pub rejected: usize,
    pub min_step: f64,
    pub max_step: f64,
    pub budget_exhausted: bool,
}

impl GeodesicTrace {
    pub fn last(&self) -> &GeodesicSample {
        self.samples.last().expect("trace has at least the seed sample")
    }

    pub fn state_at(&self, idx: usize) -> GeodesicState {
        let s = &self.samples[idx];
        GeodesicState::new(s.z, s.u.clone(), s.udot.clone())
    }
}

/// Traces the geodesic from `s0` along `path`, recording per-sample
/// first-integral residuals and speeds. Leaving a unit-disc factor ends
/// the trace with a domain exit at the refined crossing; a singular stop
/// is classified by the terminal classifier.
pub fn trace_geodesic(
    m: &MetricSpec,
    s0: &GeodesicState,
    path: &PathSpec,
    tol: f64,
) -> Result<GeodesicTrace, GeodesicError> {
    check_dims(m, s0)?;
    let reason = ordinariness(m, &s0.u);
    if reason != Ordinariness::Ordinary {
        return Err(MetricError::NotOrdinary { reason }.into());
    }
    if (path.start() - s0.z).norm() > 1e-9 * (1.0 + s0.z.norm()) {
        return Err(GeodesicError::PathMismatch {
            path_start: path.start(),
            seed: s0.z,
        });
    }
    let integrals = first_integrals(m, s0)?;
    let sys = geodesic_rhs(m);
    let n = m.dim();

    let disc_factors: Vec<usize> = m
        .domains()
        .iter()
        .enumerate()
        .filter(|(_, d)| **d == FactorDomain::UnitDisc)
        .map(|(i, _)| i)
        .collect();
    let event_fn = |y: &[C64]| -> (usize, f64) {
        let mut worst = (0usize, f64::NEG_INFINITY);
        for &k in &disc_factors {
            let g = y[k].norm() - 1.0;
            if g > worst.1 {
                worst = (k, g);
            }
        }
        worst
    };
    let event: Option<&crate::continuation::EventFn> = if disc_factors.is_empty() {
        None
    } else {
        Some(&event_fn)
    };

    let record = integrate_with_events(
        &sys,
        &s0.flat_state(),
        path,
        tol,
        IntegrateOpts::default(),
        event,
    );

    let mut terminal = record.terminal.clone();
    if let Terminal::SingularStop { z, .. } = terminal {
        // classify the obstruction along the portion of the path actually
        // walked, approaching the stall point
        let t_stop = record.samples.last().map(|s| s.t).unwrap_or(0.0).max(1e-12);
        let class = match path.truncated(t_stop) {
            Some(approach) if approach.arclength() > 1e-9 => {
                let opts = ClassifyOpts {
                    tol: (tol * 10.0).clamp(1e-12, 1e-6),
                    ..ClassifyOpts::default()
                };
                classify_singularity(&sys, &s0.flat_state(), z, &approach, opts)
            }
            _ => SingularityClass::Undetermined,
        };
        terminal = Terminal::SingularStop { z, class };
    }

    let samples = record
        .samples
        .iter()
        .map(|s| {
            let u = s.state[..n].to_vec();
            let udot = s.state[n..].to_vec();
            let state = GeodesicState::new(s.z, u.clone(), udot.clone());
            let residual = first_integral_residual(m, &state, &integrals)
                .unwrap_or_else(|_| vec![f64::NAN; n]);
            let spd = speed(m, &u, &udot).unwrap_or(C64::new(f64::NAN, f64::NAN));
            GeodesicSample {
                t: s.t,
                z: s.z,
                u,
                udot,
                residual,
                speed: spd,
            }
        })
        .collect();

    Ok(GeodesicTrace {
        samples,
        integrals,
        terminal,
        accepted: record.accepted,
        rejected: record.rejected,
        min_step: record.min_step,
        max_step: record.max_step,
        budget_exhausted: record.budget_exhausted,
    })
}

/// The `(N-1)`-dimensional second-order system satisfied by the first
/// `N-1` coordinates once the last coordinate is promoted to the
/// independent variable (primes denote derivatives in `v = u_N`):
///
/// ```text
/// γk'' = γk'·(Σ Γ^N_ij γi'γj' + 2Σ Γ^N_iN γi' + Γ^N_NN)
///        - (Σ Γ^k_ij γi'γj' + 2Σ Γ^k_iN γi' + Γ^k_NN)
/// ```
///
/// with all symbols evaluated at `(γ, v)`. The caller must order
/// coordinates so the promoted one comes last; see
/// [`reparametrized_initial`] for the seed conversion and its guard.
pub fn reparametrized_rhs(m: &MetricSpec) -> OdeSystem<'_> {
    let n = m.dim();
    let last = n - 1;
    OdeSystem::new(2 * (n - 1), move |y, v| {
        let (gamma, gprime) = y.split_at(n - 1);
        let mut point = gamma.to_vec();
        point.push(v);
        let table = christoffel_at(m, &point).map_err(|_| Pole { at: v })?;

        let contracted = |k: usize| -> C64 {
            let mut s = C64::new(0.0, 0.0);
            for i in 0..last {
                for j in 0..last {
                    s += table.get(i, j, k) * gprime[i] * gprime[j];
                }
            }
            for i in 0..last {
                s += 2.0 * table.get(i, last, k) * gprime[i];
            }
            s + table.get(last, last, k)
        };

        let drag = contracted(last);
        let mut out = Vec::with_capacity(2 * (n - 1));
        out.extend_from_slice(gprime);
        for k in 0..last {
            out.push(gprime[k] * drag - contracted(k));
        }
        Ok(out)
    })
}

fn christoffel_at(m: &MetricSpec, u: &[C64]) -> Result<ChristoffelTable, MetricError> {
    crate::metric::christoffel_warped(m, u)
}

/// Seed conversion for the reparametrized system: the independent variable
/// starts at the last coordinate of the seed, and
/// `γk'(v0) = u̇k / u̇N`. Errors when `|u̇N|` is below the degeneracy
/// threshold.
pub fn reparametrized_initial(
    m: &MetricSpec,
    s0: &GeodesicState,
) -> Result<(C64, Vec<C64>), GeodesicError> {
    check_dims(m, s0)?;
    let n = m.dim();
    let vn = s0.udot[n - 1];
    if vn.norm() < m.degen_eps() {
        return Err(GeodesicError::VanishingLastVelocity);
    }
    let mut y0: Vec<C64> = s0.u[..n - 1].to_vec();
    for k in 0..n - 1 {
        y0.push(s0.udot[k] / vn);
    }
    Ok((s0.u[n - 1], y0))
}

/// Finite-difference weights for the first derivative at `at` from
/// arbitrary distinct nodes (Fornberg recursion, valid for complex nodes).
pub fn derivative_weights(nodes: &[C64], at: C64) -> Vec<C64> {
    let n = nodes.len();
    assert!(n >= 2, "need at least two nodes");
    let zero = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    // weights[j][k]: weight of node j for the k-th derivative, k <= 1
    let mut w = vec![[zero; 2]; n];
    w[0][0] = one;
    let mut c1 = one;
    let mut c4 = nodes[0] - at;
    for i in 1..n {
        let mut c2 = one;
        let c5 = c4;
        c4 = nodes[i] - at;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                w[i][1] = c1 * (w[i - 1][0] - c5 * w[i - 1][1]) / c2;
                w[i][0] = -c1 * c5 * w[i - 1][0] / c2;
            }
            let wj0 = w[j][0];
            let wj1 = w[j][1];
            w[j][1] = (c4 * wj1 - wj0) / c3;
            w[j][0] = c4 * wj0 / c3;
        }
        c1 = c2;
    }
    w.iter().map(|row| row[1]).collect()
}

/// Derivative of a sampled function of `z` along the trace nodes, by
/// five-point stencils on the complex nodes (one-sided near the ends).
pub fn sampled_derivative(nodes: &[C64], values: &[C64]) -> Vec<C64> {
    let n = nodes.len();
    assert_eq!(values.len(), n);
    let width = 5.min(n);
    (0..n)
        .map(|s| {
            let lo = s.saturating_sub(width / 2).min(n - width);
            let w = derivative_weights(&nodes[lo..lo + width], nodes[s]);
            w.iter()
                .zip(&values[lo..lo + width])
                .map(|(wi, vi)| wi * vi)
                .sum()
        })
        .collect()
}

/// Induced covariant derivative of a sampled field `x` along a geodesic
/// trace: `(∇X)^k = dX^k/dz + Σ Γ^k_ij u̇^i X^j` per sample.
pub fn covariant_derivative_along(
    m: &MetricSpec,
    trace: &GeodesicTrace,
    x: &[Vec<C64>],
) -> Result<Vec<Vec<C64>>, GeodesicError> {
    let n = m.dim();
    let count = trace.samples.len();
    if count < 5 {
        return Err(GeodesicError::TooFewSamples { needed: 5, got: count });
    }
    if x.len() != count || x.iter().any(|row| row.len() != n) {
        return Err(GeodesicError::FieldShapeMismatch);
    }
    let nodes: Vec<C64> = trace.samples.iter().map(|s| s.z).collect();
    let mut dx = vec![vec![C64::new(0.0, 0.0); n]; count];
    for k in 0..n {
        let comp: Vec<C64> = x.iter().map(|row| row[k]).collect();
        let d = sampled_derivative(&nodes, &comp);
        for (s, v) in d.into_iter().enumerate() {
            dx[s][k] = v;
        }
    }
    let mut out = Vec::with_capacity(count);
    for (s, sample) in trace.samples.iter().enumerate() {
        let table = christoffel_at(m, &sample.u)?;
        let mut row = Vec::with_capacity(n);
        for k in 0..n {
            let mut v = dx[s][k];
            for (&(i, j, kk), &gamma) in table.iter() {
                if kk == k {
                    v += gamma * sample.udot[i] * x[s][j];
                }
            }
            row.push(v);
        }
        out.push(row);
    }
    Ok(out)
}

fn check_dims(m: &MetricSpec, s: &GeodesicState) -> Result<(), GeodesicError> {
    let n = m.dim();
    if s.u.len() != n || s.udot.len() != n {
        return Err(GeodesicError::DimensionMismatch {
            expected: n,
            got: s.u.len().max(s.udot.len()),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::metric::FactorDomain;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn spec(b1: &str, a2: &str, f2: &str) -> MetricSpec {
        MetricSpec::new(
            vec![FactorDomain::Plane, FactorDomain::Plane],
            parse(b1).unwrap(),
            vec![parse(a2).unwrap()],
            vec![parse(f2).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn flat_acceleration_vanishes() {
        let m = MetricSpec::flat(2);
        let sys = geodesic_rhs(&m);
        let y = vec![c(0.3, 0.2), c(-1.0, 0.4), c(0.5, -0.1), c(0.2, 0.9)];
        let f = sys.rhs(&y, c(0.0, 0.0)).unwrap();
        assert_eq!(&f[..2], &y[2..]);
        assert_eq!(f[2], c(0.0, 0.0));
        assert_eq!(f[3], c(0.0, 0.0));
    }

    #[test]
    fn base_acceleration_examples() {
        // b1 = u: ü0 = -(1/(2·1))·1 = -1/2 at u0 = 1, u̇0 = 1
        let m = spec("u", "1", "1");
        let sys = geodesic_rhs(&m);
        let f = sys
            .rhs(&[c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)], c(0.0, 0.0))
            .unwrap();
        assert!((f[2] - c(-0.5, 0.0)).norm() < 1e-15);
        assert_eq!(f[3], c(0.0, 0.0));

        // a2 = u: ü0 = +(a2'·f2/(2·b1))·u̇2² = 1/2; fiber cross term vanishes
        let m = spec("1", "u", "1");
        let sys = geodesic_rhs(&m);
        let f = sys
            .rhs(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], c(0.0, 0.0))
            .unwrap();
        assert!((f[2] - c(0.5, 0.0)).norm() < 1e-15);
        assert!(f[3].norm() < 1e-15);
    }

    #[test]
    fn first_integral_examples() {
        // flat: A_2 = q², A_1 = p² + q²
        let m = MetricSpec::flat(2);
        let s0 = GeodesicState::new(
            c(0.0, 0.0),
            vec![c(0.0, 0.0), c(0.0, 0.0)],
            vec![c(2.0, 0.0), c(3.0, 0.0)],
        );
        let fi = first_integrals(&m, &s0).unwrap();
        assert_eq!(fi.case, IntegralsCase::General);
        assert!((fi.a[1] - c(9.0, 0.0)).norm() < 1e-14);
        assert!((fi.a[0] - c(13.0, 0.0)).norm() < 1e-14);

        // a fiber at rest contributes a vanishing constant
        let s0 = GeodesicState::new(
            c(0.0, 0.0),
            vec![c(0.0, 0.0), c(0.4, 0.0)],
            vec![c(1.0, 0.0), c(0.0, 0.0)],
        );
        let fi = first_integrals(&m, &s0).unwrap();
        assert_eq!(fi.a[1], c(0.0, 0.0));

        // constant-base case stores the base coordinate and drops the warp
        let s0 = GeodesicState::new(
            c(0.0, 0.0),
            vec![c(0.7, 0.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(3.0, 0.0)],
        );
        let fi = first_integrals(&m, &s0).unwrap();
        assert_eq!(fi.case, IntegralsCase::ConstantU1);
        assert_eq!(fi.a[0], c(0.7, 0.0));
        assert!((fi.a[1] - c(9.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn residual_vanishes_at_the_seed_and_grows_linearly() {
        let m = spec("u+2", "u^2+1", "exp(u)");
        let s0 = GeodesicState::new(
            c(0.0, 0.0),
            vec![c(0.3, 0.1), c(-0.2, 0.4)],
            vec![c(0.8, -0.1), c(0.5, 0.3)],
        );
        let fi = first_integrals(&m, &s0).unwrap();
        let r = first_integral_residual(&m, &s0, &fi).unwrap();
        assert!(r.iter().all(|v| *v < 1e-14), "{r:?}");

        // perturbing u̇0 by ε moves the base residual by |∂/∂u̇0|·ε to
        // first order, with ∂/∂u̇0 = 2 u̇0 b1(u0)
        let eps = 1e-3;
        let mut s1 = s0.clone();
        s1.udot[0] += c(eps, 0.0);
        let r1 = first_integral_residual(&m, &s1, &fi).unwrap();
        let b1 = expr::eval(m.b1(), s0.u[0]).unwrap();
        let expected = (2.0 * s0.udot[0] * b1).norm() * eps;
        assert!(
            (r1[0] - expected).abs() < 30.0 * eps * eps,
            "residual {} vs first-order {}",
            r1[0],
            expected
        );
    }

    #[test]
    fn flat_traces_are_straight_lines() {
        let m = MetricSpec::flat(2);
        let s0 = GeodesicState::new(
            c(0.0, 0.0),
            vec![c(0.1, -0.2), c(0.3, 0.0)],
            vec![c(0.5, 0.25), c(-0.3, 0.1)],
        );
        let path = PathSpec::segment(c(0.0, 0.0), c(10.0, 0.0));
        let trace = trace_geodesic(&m, &s0, &path, 1e-10).unwrap();
        assert_eq!(trace.terminal, Terminal::Completed);
        let end = trace.last();
        for k in 0..2 {
            let expect = s0.u[k] + s0.udot[k] * end.z;
            assert!((end.u[k] - expect).norm() < 1e-10, "component {k}");
        }
        let max_res: f64 = trace
            .samples
            .iter()
            .flat_map(|s| s.residual.iter().copied())
            .fold(0.0, f64::max);
        assert!(max_res < 1e-12, "drift {max_res}");
    }

    #[test]
    fn disc_factor_exit_is_refined() {
        let m = MetricSpec::flat(2)
            .with_domains(vec![FactorDomain::UnitDisc, FactorDomain::Plane])
            .unwrap();
        let s0 = GeodesicState::new(
            c(0.0, 0.0),
            vec![c(0.0, 0.0), c(0.0, 0.0)],
            vec![c(1.0, 0.0), c(0.0, 0.0)],
        );
        let path = PathSpec::segment(c(0.0, 0.0), c(2.0, 0.0));
        let trace = trace_geodesic(&m, &s0, &path, 1e-10).unwrap();
        match trace.terminal {
            Terminal::DomainExit { z, factor } => {
                assert_eq!(factor, 0);
                assert!((z - c(1.0, 0.0)).norm() < 1e-8, "exit at {z}");
            }
            other => panic!("expected domain exit, got {other:?}"),
        }
    }

    #[test]
    fn engineered_branch_is_classified() {
        // f2(x) = x^2 with a constant base: u2 satisfies u2·u̇2 = const,
        // so u2(z) = sqrt(1 + 2 u̇2(0) z) branches where the radicand
        // vanishes; with u̇2(0) = -1/2 that is z* = 1
        let m = spec("1", "1", "u^2");
        let s0 = GeodesicState::new(
            c(0.0, 0.0),
            vec![c(0.0, 0.0), c(1.0, 0.0)],
            vec![c(0.0, 0.0), c(-0.5, 0.0)],
        );
        let path = PathSpec::segment(c(0.0, 0.0), c(1.0, 0.0));
        let trace = trace_geodesic(&m, &s0, &path, 1e-10).unwrap();
        match trace.terminal {
            Terminal::SingularStop { z, class } => {
                assert!((z - c(1.0, 0.0)).norm() < 1e-3, "stop at {z}");
                assert_eq!(class, SingularityClass::BranchLike { sheets: 2 });
            }
            other => panic!("expected singular stop, got {other:?}"),
        }
    }

    #[test]
    fn reparametrized_flat_is_affine() {
        let m = MetricSpec::flat(3);
        let sys = reparametrized_rhs(&m);
        let y = vec![c(0.1, 0.0), c(0.2, 0.0), c(0.7, 0.1), c(-0.3, 0.2)];
        let f = sys.rhs(&y, c(0.05, 0.0)).unwrap();
        assert_eq!(&f[..2], &y[2..]);
        assert_eq!(f[2], c(0.0, 0.0));
        assert_eq!(f[3], c(0.0, 0.0));
    }

    #[test]
    fn vanishing_last_velocity_is_rejected() {
        let m = MetricSpec::flat(2);
        let s0 = GeodesicState::new(
            c(0.0, 0.0),
            vec![c(0.0, 0.0), c(0.0, 0.0)],
            vec![c(1.0, 0.0), c(0.0, 0.0)],
        );
        assert_eq!(
            reparametrized_initial(&m, &s0),
            Err(GeodesicError::VanishingLastVelocity)
        );
    }

    #[test]
    fn reparametrized_matches_reexpressed_trace() {
        let m = spec("1", "u^2+2", "1");
        let s0 = GeodesicState::new(
            c(0.0, 0.0),
            vec![c(0.2, 0.0), c(0.1, 0.0)],
            vec![c(0.15, 0.05), c(1.0, 0.2)],
        );
        let path = PathSpec::segment(c(0.0, 0.0), c(1.5, 0.3));
        let trace = trace_geodesic(&m, &s0, &path, 1e-11).unwrap();
        assert_eq!(trace.terminal, Terminal::Completed);

        let (v0, y0) = reparametrized_initial(&m, &s0).unwrap();
        let sys = reparametrized_rhs(&m);
        let vn_nodes: Vec<C64> = trace.samples.iter().map(|s| s.u[1]).collect();
        assert!((vn_nodes[0] - v0).norm() < 1e-12);
        let vpath = PathSpec::polyline(&vn_nodes).unwrap();
        let rec = crate::continuation::integrate_along(&sys, &y0, &vpath, 1e-11);
        assert_eq!(rec.terminal, Terminal::Completed);
        let gamma_end = rec.last_state().state[0];
        let expected = trace.last().u[0];
        assert!(
            (gamma_end - expected).norm() < 1e-7,
            "reparametrized {gamma_end} vs traced {expected}"
        );
    }

    #[test]
    fn velocity_field_has_zero_covariant_derivative() {
        let m = spec("u+3", "u^2+2", "exp(u/4)");
        let s0 = GeodesicState::new(
            c(0.0, 0.0),
            vec![c(0.2, 0.1), c(-0.1, 0.2)],
            vec![c(0.4, -0.05), c(0.3, 0.1)],
        );
        let path = PathSpec::segment(c(0.0, 0.0), c(2.0, 0.5));
        let trace = trace_geodesic(&m, &s0, &path, 1e-10).unwrap();
        assert_eq!(trace.terminal, Terminal::Completed);
        let x: Vec<Vec<C64>> = trace.samples.iter().map(|s| s.udot.clone()).collect();
        let nabla = covariant_derivative_along(&m, &trace, &x).unwrap();
        let worst = nabla
            .iter()
            .flat_map(|row| row.iter().map(|v| v.norm()))
            .fold(0.0, f64::max);
        assert!(worst <= 1e-6, "acceleration residual {worst}");
    }

    #[test]
    fn constant_field_on_flat_spec_is_parallel() {
        let m = MetricSpec::flat(2);
        let s0 = GeodesicState::new(
            c(0.0, 0.0),
            vec![c(0.0, 0.0), c(0.0, 0.0)],
            vec![c(0.3, 0.1), c(0.2, -0.4)],
        );
        let path = PathSpec::segment(c(0.0, 0.0), c(3.0, 1.0));
        let trace = trace_geodesic(&m, &s0, &path, 1e-10).unwrap();
        let x = vec![vec![c(1.0, 2.0), c(-0.5, 0.3)]; trace.samples.len()];
        let nabla = covariant_derivative_along(&m, &trace, &x).unwrap();
        let worst = nabla
            .iter()
            .flat_map(|row| row.iter().map(|v| v.norm()))
            .fold(0.0, f64::max);
        assert!(worst <= 1e-9, "constant field derivative {worst}");
    }

    #[test]
    fn null_geodesics_stay_null() {
        let m = MetricSpec::flat(2);
        let s0 = GeodesicState::new(
            c(0.0, 0.0),
            vec![c(0.0, 0.0), c(0.0, 0.0)],
            vec![c(1.0, 0.0), c(0.0, 1.0)],
        );
        let path = PathSpec::segment(c(0.0, 0.0), c(5.0, 2.0));
        let trace = trace_geodesic(&m, &s0, &path, 1e-10).unwrap();
        let worst = trace
            .samples
            .iter()
            .map(|s| s.speed.norm())
            .fold(0.0, f64::max);
        assert!(worst <= 100.0 * 1e-10, "null drift {worst}");
    }

    #[test]
    fn dichotomy_is_stable_near_zero_base_velocity() {
        // as u̇0 → 0 the general-case integrals converge to the
        // constant-base ones on the fiber components
        let m = spec("1", "u+2", "u^2+1");
        for eps in [1e-6, 1e-9] {
            let s_general = GeodesicState::new(
                c(0.0, 0.0),
                vec![c(0.3, 0.0), c(0.5, 0.0)],
                vec![c(eps, 0.0), c(1.0, 0.0)],
            );
            let fi_g = first_integrals(&m, &s_general).unwrap();
            assert_eq!(fi_g.case, IntegralsCase::General);

            let s_const = GeodesicState::new(
                c(0.0, 0.0),
                vec![c(0.3, 0.0), c(0.5, 0.0)],
                vec![c(0.0, 0.0), c(1.0, 0.0)],
            );
            let fi_c = first_integrals(&m, &s_const).unwrap();
            assert_eq!(fi_c.case, IntegralsCase::ConstantU1);

            // fiber constants agree up to the warp factor at the base point
            let warp = expr::eval(m.warp(1), s_const.u[0]).unwrap();
            let rescaled = fi_g.a[1] / (warp * warp);
            assert!(
                (rescaled - fi_c.a[1]).norm() < 1e-5,
                "eps {eps}: {rescaled} vs {}",
                fi_c.a[1]
            );
        }
    }
}
