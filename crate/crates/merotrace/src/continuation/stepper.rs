//! Embedded Dormand–Prince 5(4) stepper for complex-analytic systems driven
//! along a path, advancing in the real path parameter with the `dz/dt`
//! chain factor. Standard PI step-size control; a pole signalled by the
//! right-hand side is handled like a rejected step so the controller backs
//! off until it either clears the obstruction or underflows the minimum
//! step, which converts to a singular stop.

use super::path::PathSpec;
use super::OdeSystem;
use crate::C64;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFE: f64 = 0.9;
const BETA: f64 = 0.04;
// error measured per unit of the path parameter, so the controller sees an
// effective order of four
const EXPO1: f64 = 0.25 - BETA * 0.75;
const FAC_SHRINK_MAX: f64 = 5.0; // at most h/5 per controller decision
const FAC_GROW_MAX: f64 = 0.1; // at most 10·h per controller decision
const POLE_BACKOFF: f64 = 0.25;

#[derive(Debug, Clone, Copy, Default)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub min_step: f64,
    pub max_step: f64,
    pub budget_exhausted: bool,
}

impl StepStats {
    fn observe(&mut self, h: f64) {
        if self.accepted == 0 {
            self.min_step = h;
            self.max_step = h;
        } else {
            self.min_step = self.min_step.min(h);
            self.max_step = self.max_step.max(h);
        }
        self.accepted += 1;
    }
}

/// Outcome of advancing over a span of the path parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum Advance {
    Reached,
    /// The controller underflowed the minimum step, a pole blocked even the
    /// smallest step, or the step budget ran out (flagged in the stats).
    Stalled { t: f64, z: C64 },
    /// The sample callback asked to stop.
    Interrupted { t: f64 },
}

pub struct Stepper<'s> {
    sys: &'s OdeSystem<'s>,
    path: &'s PathSpec,
    tol: f64,
    pub min_step: f64,
    /// Largest admissible step in the path parameter; keeps samples dense
    /// enough for the stencil-based consumers of trace grids.
    pub max_step: f64,
    pub max_steps: usize,
    h: f64,
    facold: f64,
    pub stats: StepStats,
}

impl<'s> Stepper<'s> {
    pub fn new(sys: &'s OdeSystem<'s>, path: &'s PathSpec, tol: f64) -> Self {
        Stepper {
            sys,
            path,
            tol: tol.max(1e-15),
            min_step: 1e-13,
            max_step: 0.01,
            max_steps: 400_000,
            h: 0.0,
            facold: 1e-4,
            stats: StepStats::default(),
        }
    }

    fn rhs_t(&self, y: &[C64], leg: usize, t: f64) -> Result<Vec<C64>, ()> {
        let z = self.path.leg_point(leg, t);
        let zdot = self.path.leg_velocity(leg, t);
        match self.sys.rhs(y, z) {
            Ok(mut f) => {
                for v in &mut f {
                    *v *= zdot;
                }
                Ok(f)
            }
            Err(_) => Err(()),
        }
    }

    /// Advances `y` from `t0` to `t1`, stopping at leg boundaries so the
    /// chain factor stays smooth within every step. Calls `on_sample` after
    /// each accepted step; a `false` return interrupts the advance.
    pub fn advance(
        &mut self,
        y: &mut Vec<C64>,
        t0: f64,
        t1: f64,
        mut on_sample: impl FnMut(f64, C64, &[C64]) -> bool,
    ) -> Advance {
        debug_assert!(t1 >= t0);
        let mut stops: Vec<f64> = self
            .path
            .breakpoints()
            .into_iter()
            .filter(|&b| b > t0 + 1e-15 && b < t1 - 1e-15)
            .collect();
        stops.push(t1);
        let mut t = t0;
        for stop in stops {
            match self.advance_within_leg(y, t, stop, &mut on_sample) {
                Advance::Reached => t = stop,
                stalled => return stalled,
            }
        }
        Advance::Reached
    }

    fn advance_within_leg(
        &mut self,
        y: &mut Vec<C64>,
        t0: f64,
        t1: f64,
        on_sample: &mut impl FnMut(f64, C64, &[C64]) -> bool,
    ) -> Advance {
        let dim = y.len();
        let span = t1 - t0;
        if span <= 0.0 {
            return Advance::Reached;
        }
        // pin the leg for the whole sub-interval so the chain factor stays
        // smooth even when a stage lands exactly on a boundary
        let leg = self.path.leg_index_at(0.5 * (t0 + t1));
        let mut t = t0;
        // first stage at the leg start; a pole here cannot be stepped over
        let mut k1 = match self.rhs_t(y, leg, t) {
            Ok(f) => f,
            Err(()) => {
                return Advance::Stalled { t, z: self.path.point(t) };
            }
        };
        if self.h <= 0.0 {
            self.h = self.initial_step(y, &k1, span);
        }
        self.h = self.h.min(span);

        let mut rejected_last = false;
        let mut ytmp = vec![C64::new(0.0, 0.0); dim];
        while t < t1 - 1e-15 {
            if self.stats.accepted + self.stats.rejected >= self.max_steps {
                self.stats.budget_exhausted = true;
                return Advance::Stalled { t, z: self.path.point(t) };
            }
            // stretch the final step onto the endpoint instead of leaving a
            // roundoff-sized remainder
            let natural = self.h.min(self.max_step);
            let capped = 1.01 * natural >= t1 - t;
            let h = if capped { t1 - t } else { natural };
            if h < self.min_step {
                return Advance::Stalled { t, z: self.path.point(t) };
            }

            let stage = |ytmp: &mut Vec<C64>, y: &[C64], coeffs: &[(f64, &Vec<C64>)]| {
                for i in 0..dim {
                    let mut acc = y[i];
                    for (a, k) in coeffs {
                        acc += *a * h * k[i];
                    }
                    ytmp[i] = acc;
                }
            };

            let result = (|| -> Result<(Vec<C64>, f64, Vec<C64>), ()> {
                stage(&mut ytmp, y, &[(A21, &k1)]);
                let k2 = self.rhs_t(&ytmp, leg, t + C2 * h)?;
                stage(&mut ytmp, y, &[(A31, &k1), (A32, &k2)]);
                let k3 = self.rhs_t(&ytmp, leg, t + C3 * h)?;
                stage(&mut ytmp, y, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
                let k4 = self.rhs_t(&ytmp, leg, t + C4 * h)?;
                stage(&mut ytmp, y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
                let k5 = self.rhs_t(&ytmp, leg, t + C5 * h)?;
                stage(
                    &mut ytmp,
                    y,
                    &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                );
                let k6 = self.rhs_t(&ytmp, leg, t + h)?;
                let mut y5 = vec![C64::new(0.0, 0.0); dim];
                for i in 0..dim {
                    y5[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
                }
                let k7 = self.rhs_t(&y5, leg, t + h)?;
                let mut err = 0.0;
                for i in 0..dim {
                    let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                        + E7 * k7[i]);
                    let magnitude = y[i].norm().max(y5[i].norm());
                    // differences below roundoff carry no information and
                    // must not drive rejections of small steps
                    let noise = 4.0 * f64::EPSILON * magnitude;
                    let sc = self.tol * (1.0 + magnitude);
                    let r = (e.norm() - noise).max(0.0) / sc;
                    err += r * r;
                }
                // per-unit-of-parameter error: keeps the accumulated drift
                // proportional to the tolerance over the whole path
                err = (err / dim as f64).sqrt() / h;
                Ok((y5, err, k7))
            })();

            match result {
                Err(()) => {
                    // a stage hit a pole: back off hard
                    self.stats.rejected += 1;
                    self.h = h * POLE_BACKOFF;
                    rejected_last = true;
                    if self.h < self.min_step {
                        return Advance::Stalled { t, z: self.path.point(t) };
                    }
                }
                Ok((y5, err, k7)) => {
                    let fac11 = err.powf(EXPO1);
                    if err <= 1.0 {
                        self.facold = err.max(1e-4);
                        self.stats.observe(h);
                        t += h;
                        *y = y5;
                        k1 = k7; // FSAL
                        let keep_going = on_sample(t, self.path.point(t), y);
                        let fac = (fac11 / self.facold.powf(BETA) / SAFE)
                            .clamp(FAC_GROW_MAX, FAC_SHRINK_MAX);
                        let mut hnew = h / fac;
                        if rejected_last {
                            hnew = hnew.min(h);
                        }
                        rejected_last = false;
                        // a span-capped step must not lower the natural step
                        self.h = if capped { hnew.max(self.h) } else { hnew };
                        if !keep_going {
                            return Advance::Interrupted { t };
                        }
                    } else {
                        self.stats.rejected += 1;
                        #[cfg(feature = "step-debug")]
                        eprintln!("reject t={t:.15} h={h:e} err={err:e}");
                        self.h = h / (fac11 / SAFE).min(FAC_SHRINK_MAX);
                        rejected_last = true;
                        if self.h < self.min_step {
                            return Advance::Stalled { t, z: self.path.point(t) };
                        }
                    }
                }
            }
        }
        Advance::Reached
    }

    fn initial_step(&self, y: &[C64], f0: &[C64], span: f64) -> f64 {
        let sc = |v: f64| self.tol * (1.0 + v);
        let mut d0 = 0.0f64;
        let mut d1 = 0.0f64;
        for i in 0..y.len() {
            let s = sc(y[i].norm());
            d0 += (y[i].norm() / s).powi(2);
            d1 += (f0[i].norm() / s).powi(2);
        }
        let n = y.len() as f64;
        d0 = (d0 / n).sqrt();
        d1 = (d1 / n).sqrt();
        let h0 = if d1 > 1e-10 { 0.01 * (d0.max(1e-5) / d1) } else { span * 1e-3 };
        h0.clamp(self.min_step * 10.0, span * 0.1).min(span)
    }
}
