//! Analytic continuation of complex ODE systems along paths: adaptive
//! integration, monodromy probes around suspected branch points, radial
//! limits on the Riemann sphere, and the terminal singularity classifier.

mod classify;
mod path;
mod stepper;

pub use classify::{
    chordal, chordal_p1, classify_singularity, monodromy_probe, radial_limit, ClassifyOpts,
    LimitResult, MonodromyError, MonodromyResult, RadialError, RadialProbe, RadialSample,
    RadialSchedule, P1,
};
pub use path::{Leg, PathError, PathSpec};
pub use stepper::{Advance, StepStats, Stepper};

use crate::expr::Pole;
use crate::C64;

/// A first-order system `y' = rhs(y, z)` in the complex domain. The
/// right-hand side must be deterministic and side-effect free; it signals
/// [`Pole`] instead of returning non-finite values.
pub struct OdeSystem<'a> {
    dim: usize,
    rhs: Box<RhsFn<'a>>,
}

type RhsFn<'a> = dyn Fn(&[C64], C64) -> Result<Vec<C64>, Pole> + Send + Sync + 'a;

impl<'a> OdeSystem<'a> {
    pub fn new(
        dim: usize,
        rhs: impl Fn(&[C64], C64) -> Result<Vec<C64>, Pole> + Send + Sync + 'a,
    ) -> Self {
        OdeSystem {
            dim,
            rhs: Box::new(rhs),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rhs(&self, y: &[C64], z: C64) -> Result<Vec<C64>, Pole> {
        debug_assert_eq!(y.len(), self.dim);
        (self.rhs)(y, z)
    }
}

/// Orders of branch points and pole estimates live in small integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularityClass {
    Removable,
    /// Power-law divergence of the solution with the given order estimate
    /// (`order >= 1`).
    PoleLike { order: u32 },
    /// The germ closes up after `sheets >= 2` circuits.
    BranchLike { sheets: u32 },
    /// No circuit count closes the germ; per-loop displacement stationary.
    Logarithmic,
    Undetermined,
}

impl std::fmt::Display for SingularityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SingularityClass::Removable => write!(f, "removable"),
            SingularityClass::PoleLike { order } => write!(f, "pole-like(order {order})"),
            SingularityClass::BranchLike { sheets } => write!(f, "branch-like({sheets} sheets)"),
            SingularityClass::Logarithmic => write!(f, "logarithmic"),
            SingularityClass::Undetermined => write!(f, "undetermined"),
        }
    }
}

/// Why a trace ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Terminal {
    Completed,
    SingularStop { z: C64, class: SingularityClass },
    DomainExit { z: C64, factor: usize },
}

/// One recorded point of a continuation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub z: C64,
    pub state: Vec<C64>,
}

/// Sampled continuation output with step diagnostics and terminal status.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    /// Ordered by `t`; the first sample sits at the path start.
    pub samples: Vec<Sample>,
    pub accepted: usize,
    pub rejected: usize,
    pub min_step: f64,
    pub max_step: f64,
    pub budget_exhausted: bool,
    pub terminal: Terminal,
}

impl TraceRecord {
    pub fn last_state(&self) -> &Sample {
        self.samples.last().expect("trace has at least the initial sample")
    }
}

/// Integration options beyond the error tolerance.
#[derive(Debug, Clone, Copy)]
pub struct IntegrateOpts {
    /// Smallest admissible step in the global path parameter; underflow
    /// converts to a singular stop rather than silent inaccuracy.
    pub min_step: f64,
    /// Largest admissible step in the global path parameter, so traces
    /// stay densely sampled for the stencil-based consumers.
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for IntegrateOpts {
    fn default() -> Self {
        IntegrateOpts {
            min_step: 1e-13,
            max_step: 0.01,
            max_steps: 400_000,
        }
    }
}

/// Event monitor evaluated after every accepted step: returns a factor
/// index and a signed indicator, positive once the event has occurred.
pub type EventFn<'e> = dyn Fn(&[C64]) -> (usize, f64) + 'e;

/// Integrates `sys` from `y0` along `path` with local error per step below
/// `tol`, recording every accepted step.
pub fn integrate_along(sys: &OdeSystem, y0: &[C64], path: &PathSpec, tol: f64) -> TraceRecord {
    integrate_with_events(sys, y0, path, tol, IntegrateOpts::default(), None)
}

/// [`integrate_along`] with explicit options and an optional domain-exit
/// event. On an event crossing, the crossing parameter is refined by
/// bisection and the trace ends with [`Terminal::DomainExit`].
pub fn integrate_with_events(
    sys: &OdeSystem,
    y0: &[C64],
    path: &PathSpec,
    tol: f64,
    opts: IntegrateOpts,
    event: Option<&EventFn>,
) -> TraceRecord {
    let mut stepper = Stepper::new(sys, path, tol);
    stepper.min_step = opts.min_step;
    stepper.max_step = opts.max_step;
    stepper.max_steps = opts.max_steps;

    let mut samples = vec![Sample {
        t: 0.0,
        z: path.start(),
        state: y0.to_vec(),
    }];
    let mut y = y0.to_vec();

    // initial event state: an exit at the very start is reported at t = 0
    if let Some(ev) = event {
        let (factor, g) = ev(&y);
        if g >= 0.0 {
            return TraceRecord {
                samples,
                accepted: 0,
                rejected: 0,
                min_step: 0.0,
                max_step: 0.0,
                budget_exhausted: false,
                terminal: Terminal::DomainExit { z: path.start(), factor },
            };
        }
    }

    let mut crossing: Option<(f64, f64)> = None; // (t_before, t_after)
    let outcome = {
        let mut last_t = 0.0f64;
        stepper.advance(&mut y, 0.0, 1.0, |t, z, state| {
            samples.push(Sample { t, z, state: state.to_vec() });
            let mut keep_going = true;
            if let Some(ev) = event {
                let (_, g) = ev(state);
                if g >= 0.0 {
                    crossing = Some((last_t, t));
                    keep_going = false;
                }
            }
            last_t = t;
            keep_going
        })
    };
    if let Some((t_before, t_after)) = crossing {
        let ev = event.expect("crossing implies an event monitor");
        let base = samples
            .iter()
            .rfind(|s| s.t <= t_before + 1e-15)
            .expect("pre-crossing sample exists")
            .clone();
        let (t_star, y_star) = refine_crossing(sys, path, tol, &base, t_after, ev);
        let (factor, _) = ev(&y_star);
        let z_star = path.point(t_star);
        samples.retain(|s| s.t < t_star);
        samples.push(Sample { t: t_star, z: z_star, state: y_star });
        return TraceRecord {
            samples,
            accepted: stepper.stats.accepted,
            rejected: stepper.stats.rejected,
            min_step: stepper.stats.min_step,
            max_step: stepper.stats.max_step,
            budget_exhausted: stepper.stats.budget_exhausted,
            terminal: Terminal::DomainExit { z: z_star, factor },
        };
    }

    let terminal = match outcome {
        Advance::Reached | Advance::Interrupted { .. } => Terminal::Completed,
        Advance::Stalled { z, .. } => Terminal::SingularStop {
            z,
            class: SingularityClass::Undetermined,
        },
    };
    TraceRecord {
        samples,
        accepted: stepper.stats.accepted,
        rejected: stepper.stats.rejected,
        min_step: stepper.stats.min_step,
        max_step: stepper.stats.max_step,
        budget_exhausted: stepper.stats.budget_exhausted,
        terminal,
    }
}

/// Bisection refinement of an event crossing between a clean sample and a
/// parameter where the indicator is nonnegative.
fn refine_crossing(
    sys: &OdeSystem,
    path: &PathSpec,
    tol: f64,
    base: &Sample,
    t_after: f64,
    event: &EventFn,
) -> (f64, Vec<C64>) {
    let fine_tol = (tol * 1e-2).max(1e-14);
    let mut lo = base.t;
    let mut hi = t_after;
    let mut y_hi: Option<Vec<C64>> = None;
    for _ in 0..80 {
        if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let mut y = base.state.clone();
        let mut stepper = Stepper::new(sys, path, fine_tol);
        match stepper.advance(&mut y, base.t, mid, |_, _, _| true) {
            Advance::Reached => {
                let (_, g) = event(&y);
                if g >= 0.0 {
                    hi = mid;
                    y_hi = Some(y);
                } else {
                    lo = mid;
                }
            }
            _ => {
                // cannot reach mid: tighten from above
                hi = mid;
            }
        }
    }
    match y_hi {
        Some(y) => (hi, y),
        None => {
            // fall back to integrating up to the located parameter
            let mut y = base.state.clone();
            let mut stepper = Stepper::new(sys, path, fine_tol);
            let _ = stepper.advance(&mut y, base.t, hi, |_, _, _| true);
            (hi, y)
        }
    }
}

/// Continues the state to the end of the path without recording samples;
/// used by the monodromy and radial probes.
pub(crate) fn continue_state(
    sys: &OdeSystem,
    y: &mut Vec<C64>,
    path: &PathSpec,
    tol: f64,
) -> Result<(), C64> {
    let mut stepper = Stepper::new(sys, path, tol);
    match stepper.advance(y, 0.0, 1.0, |_, _, _| true) {
        Advance::Reached => Ok(()),
        Advance::Stalled { z, .. } => Err(z),
        Advance::Interrupted { t } => Err(path.point(t)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn exp_system() -> OdeSystem<'static> {
        OdeSystem::new(1, |y, _z| Ok(vec![y[0]]))
    }

    /// y' = 1/(2y): continuation of the square-root germ.
    fn sqrt_system() -> OdeSystem<'static> {
        OdeSystem::new(1, |y, z| {
            let den = 2.0 * y[0];
            if den.norm() < 1e-12 {
                Err(crate::expr::Pole { at: z })
            } else {
                Ok(vec![C64::new(1.0, 0.0) / den])
            }
        })
    }

    #[test]
    fn exponential_growth_reaches_e() {
        let sys = exp_system();
        let path = PathSpec::segment(c(0.0, 0.0), c(1.0, 0.0));
        let rec = integrate_along(&sys, &[c(1.0, 0.0)], &path, 1e-12);
        assert_eq!(rec.terminal, Terminal::Completed);
        let got = rec.last_state().state[0];
        assert!((got - c(1.0f64.exp(), 0.0)).norm() < 1e-10, "got {got}");
        assert_eq!(rec.samples[0].z, path.start());
    }

    #[test]
    fn sqrt_germ_flips_sign_after_one_circuit() {
        let sys = sqrt_system();
        let loop_path = PathSpec::circle(c(0.0, 0.0), 1.0, 0.0);
        let rec = integrate_along(&sys, &[c(1.0, 0.0)], &loop_path, 1e-12);
        assert_eq!(rec.terminal, Terminal::Completed);
        let got = rec.last_state().state[0];
        assert!((got - c(-1.0, 0.0)).norm() < 1e-9, "got {got}");
    }

    #[test]
    fn linear_state_is_reproduced_exactly_on_segments() {
        // y' = const: exact for the embedded pair on straight legs
        let sys = OdeSystem::new(1, |_y, _z| Ok(vec![C64::new(2.0, -1.0)]));
        let path = PathSpec::segment(c(0.0, 0.0), c(3.0, 4.0));
        let rec = integrate_along(&sys, &[c(0.5, 0.5)], &path, 1e-10);
        let expect = c(0.5, 0.5) + c(2.0, -1.0) * c(3.0, 4.0);
        assert!((rec.last_state().state[0] - expect).norm() < 1e-12);
    }

    #[test]
    fn pole_on_path_stops_early() {
        // y' = 1/z integrated through the origin
        let sys = OdeSystem::new(1, |_y, z| {
            if z.norm() < 1e-12 {
                Err(crate::expr::Pole { at: z })
            } else {
                Ok(vec![C64::new(1.0, 0.0) / z])
            }
        });
        let path = PathSpec::segment(c(-1.0, 0.0), c(1.0, 0.0));
        let rec = integrate_along(&sys, &[c(0.0, 0.0)], &path, 1e-10);
        match rec.terminal {
            Terminal::SingularStop { z, .. } => assert!(z.norm() < 1e-3, "stopped at {z}"),
            other => panic!("expected singular stop, got {other:?}"),
        }
    }

    #[test]
    fn reversing_a_path_returns_to_start() {
        let sys = sqrt_system();
        let path = PathSpec::polyline(&[c(1.0, 0.0), c(1.0, 1.5), c(-0.5, 1.5)]).unwrap();
        let tol = 1e-11;
        let fwd = integrate_along(&sys, &[c(1.0, 0.0)], &path, tol);
        assert_eq!(fwd.terminal, Terminal::Completed);
        let back = integrate_along(&sys, &fwd.last_state().state, &path.reversed(), tol);
        assert_eq!(back.terminal, Terminal::Completed);
        assert!((back.last_state().state[0] - c(1.0, 0.0)).norm() < 10.0 * tol);
    }

    #[test]
    fn homotopic_paths_agree() {
        let sys = sqrt_system();
        let a = PathSpec::polyline(&[c(1.0, 0.0), c(2.0, 1.0), c(3.0, 2.0)]).unwrap();
        let b = PathSpec::polyline(&[c(1.0, 0.0), c(1.0, 2.0), c(3.0, 2.0)]).unwrap();
        let tol = 1e-11;
        let ra = integrate_along(&sys, &[c(1.0, 0.0)], &a, tol);
        let rb = integrate_along(&sys, &[c(1.0, 0.0)], &b, tol);
        assert!(
            (ra.last_state().state[0] - rb.last_state().state[0]).norm() < 10.0 * tol
        );
    }

    #[test]
    fn halving_tol_does_not_worsen_endpoint_error() {
        let sys = exp_system();
        let path = PathSpec::segment(c(0.0, 0.0), c(1.0, 0.0));
        let exact = c(1.0f64.exp(), 0.0);
        let mut tol = 1e-4;
        let mut prev_err = f64::INFINITY;
        for _ in 0..20 {
            let rec = integrate_along(&sys, &[c(1.0, 0.0)], &path, tol);
            let err = (rec.last_state().state[0] - exact).norm();
            assert!(
                err <= prev_err + 5e-13,
                "tol {tol}: error grew from {prev_err} to {err}"
            );
            prev_err = err;
            tol /= 2.0;
        }
    }
}
