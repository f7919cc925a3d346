//! Closed-form antiderivatives of `1/sqrt(a·η² + b·η + c)` and the
//! closed-form base-coordinate geodesics they induce on the rational
//! example class, used as oracles against the numeric tracer.
//!
//! With `Δ = b² - 4ac` the antiderivative falls into four cases:
//!
//! ```text
//! a ≠ 0, Δ ≠ 0:  (1/√a)·log(η + b/2a + sqrt(η² + (b/a)η + c/a))
//! a ≠ 0, Δ = 0:  (1/√a)·log(η + b/2a)
//! a = 0, b ≠ 0:  (2/b)·sqrt(bη + c)
//! a = b = 0:     η/√c
//! ```
//!
//! all up to a constant, fixed here so the base point maps to zero. Branch
//! bookkeeping is local: values use principal branches and require the
//! straight segment from the base point to stay clear of the ingredient
//! cuts; global multivaluedness is the continuation module's business.
//! The `Δ = 0` display is verified against its defining derivative by
//! [`QuadBranch::check_derivative`] rather than trusted.

use crate::expr::{self, ExprNode, Jet2};
use crate::C64;

/// Degree-capped polynomial with complex coefficients, ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<C64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<C64>) -> Self {
        Polynomial { coeffs }
    }

    pub fn constant(c: C64) -> Self {
        Polynomial { coeffs: vec![c] }
    }

    pub fn coeff(&self, i: usize) -> C64 {
        self.coeffs.get(i).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    /// Degree after trimming trailing zeros; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs
            .iter()
            .rposition(|c| c.norm() > 0.0)
    }

    pub fn eval(&self, x: C64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }
}

/// Which row of the antiderivative table applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadCase {
    Log,
    DegenerateLog,
    Sqrt,
    Linear,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuadError {
    #[error("all three coefficients vanish; the integrand is undefined")]
    DegenerateCoefficients,
    #[error("straight reach from the base point to {at} crosses a branch cut")]
    BranchCutCrossing { at: C64 },
    #[error("the quadratic vanishes at the seed; no branch can be fixed there")]
    SeedDegenerate,
    #[error("seed velocity does not discriminate between the two root germs")]
    SeedAmbiguous,
    #[error("fiber polynomial degree exceeds two")]
    DegreeTooHigh,
    #[error("Newton iteration failed to converge near z = {at}")]
    NewtonDivergence { at: C64 },
    #[error("two preimages collide near u = {at}")]
    BranchAmbiguity { at: C64 },
    #[error("expression evaluation hit a pole at {at}")]
    Pole { at: C64 },
}

/// One branch of the antiderivative, anchored at a base point.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadBranch {
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub delta: C64,
    case: QuadCase,
    base: C64,
    /// Antiderivative value at the base point before normalization.
    offset: C64,
}

impl QuadBranch {
    /// Classifies the coefficients and fixes the integration constant so
    /// `base` maps to zero.
    pub fn new(a: C64, b: C64, c: C64, base: C64) -> Result<Self, QuadError> {
        let zero = C64::new(0.0, 0.0);
        let delta = b * b - 4.0 * a * c;
        let case = if a != zero {
            if delta != zero {
                QuadCase::Log
            } else {
                QuadCase::DegenerateLog
            }
        } else if b != zero {
            QuadCase::Sqrt
        } else if c != zero {
            QuadCase::Linear
        } else {
            return Err(QuadError::DegenerateCoefficients);
        };
        let mut qb = QuadBranch {
            a,
            b,
            c,
            delta,
            case,
            base,
            offset: zero,
        };
        qb.offset = qb.raw_value(base)?;
        Ok(qb)
    }

    pub fn case(&self) -> QuadCase {
        self.case
    }

    pub fn base(&self) -> C64 {
        self.base
    }

    /// Antiderivative at `η`, branch-consistent with the base point.
    pub fn antiderivative(&self, eta: C64) -> Result<C64, QuadError> {
        self.check_reach(eta)?;
        Ok(self.raw_value(eta)? - self.offset)
    }

    /// Principal-branch value before normalization, no reach check.
    fn raw_value(&self, eta: C64) -> Result<C64, QuadError> {
        Ok(match self.case {
            QuadCase::Log => {
                let half_shift = self.b / (2.0 * self.a);
                let r = eta * eta + (self.b / self.a) * eta + self.c / self.a;
                (eta + half_shift + r.sqrt()).ln() / self.a.sqrt()
            }
            QuadCase::DegenerateLog => {
                let half_shift = self.b / (2.0 * self.a);
                (eta + half_shift).ln() / self.a.sqrt()
            }
            QuadCase::Sqrt => 2.0 * (self.b * eta + self.c).sqrt() / self.b,
            QuadCase::Linear => eta / self.c.sqrt(),
        })
    }

    /// Antiderivative jet at `η` by forward differentiation of the same
    /// closed form.
    pub fn antiderivative_jet(&self, eta: C64) -> Result<Jet2, QuadError> {
        self.check_reach(eta)?;
        let x = Jet2::variable(eta);
        Ok(match self.case {
            QuadCase::Log => {
                let half_shift = Jet2::constant(self.b / (2.0 * self.a));
                let r = x * x
                    + Jet2::constant(self.b / self.a) * x
                    + Jet2::constant(self.c / self.a);
                let inner = x + half_shift + r.sqrt();
                let scaled = inner.ln();
                Jet2::new(
                    scaled.value / self.a.sqrt() - self.offset,
                    scaled.d1 / self.a.sqrt(),
                    scaled.d2 / self.a.sqrt(),
                )
            }
            QuadCase::DegenerateLog => {
                let shifted = x + Jet2::constant(self.b / (2.0 * self.a));
                let l = shifted.ln();
                Jet2::new(
                    l.value / self.a.sqrt() - self.offset,
                    l.d1 / self.a.sqrt(),
                    l.d2 / self.a.sqrt(),
                )
            }
            QuadCase::Sqrt => {
                let s = (Jet2::constant(self.b) * x + Jet2::constant(self.c)).sqrt();
                Jet2::new(
                    2.0 * s.value / self.b - self.offset,
                    2.0 * s.d1 / self.b,
                    2.0 * s.d2 / self.b,
                )
            }
            QuadCase::Linear => Jet2::new(
                eta / self.c.sqrt() - self.offset,
                1.0 / self.c.sqrt() * C64::new(1.0, 0.0),
                C64::new(0.0, 0.0),
            ),
        })
    }

    /// `|d/dη antiderivative - 1/sqrt(aη²+bη+c)|` with the square root
    /// taken on the branch the table itself uses; the module's self-test.
    pub fn check_derivative(&self, eta: C64) -> Result<f64, QuadError> {
        let jet = self.antiderivative_jet(eta)?;
        let target = match self.case {
            QuadCase::Log => {
                let r = eta * eta + (self.b / self.a) * eta + self.c / self.a;
                1.0 / (self.a.sqrt() * r.sqrt())
            }
            QuadCase::DegenerateLog => {
                1.0 / (self.a.sqrt() * (eta + self.b / (2.0 * self.a)))
            }
            QuadCase::Sqrt => 1.0 / (self.b * eta + self.c).sqrt(),
            QuadCase::Linear => 1.0 / self.c.sqrt(),
        };
        Ok((jet.d1 - target).norm())
    }

    /// Straight-line reachability from the base point: the relevant
    /// ingredient values must stay clear of the principal cuts.
    fn check_reach(&self, eta: C64) -> Result<(), QuadError> {
        const STEPS: usize = 128;
        let mut prev: Option<(C64, C64)> = None;
        for i in 0..=STEPS {
            let s = i as f64 / STEPS as f64;
            let x = self.base + (eta - self.base) * s;
            let (sqrt_arg, log_arg) = match self.case {
                QuadCase::Log => {
                    let r = x * x + (self.b / self.a) * x + self.c / self.a;
                    (r, x + self.b / (2.0 * self.a) + r.sqrt())
                }
                QuadCase::DegenerateLog => {
                    let w = x + self.b / (2.0 * self.a);
                    (C64::new(1.0, 0.0), w)
                }
                QuadCase::Sqrt => (self.b * x + self.c, C64::new(1.0, 0.0)),
                QuadCase::Linear => (C64::new(1.0, 0.0), C64::new(1.0, 0.0)),
            };
            for (which, v) in [(0, sqrt_arg), (1, log_arg)] {
                // the square-root branch may be anchored exactly at its
                // branch point; anywhere else the cut set is off limits
                if which == 0 && i == 0 && v.norm() < 1e-12 {
                    continue;
                }
                if v.norm() < 1e-12 || (v.re <= 0.0 && v.im.abs() < 1e-12 * (1.0 + v.norm())) {
                    return Err(QuadError::BranchCutCrossing { at: x });
                }
            }
            if let Some((ps, pl)) = prev {
                if crosses_negative_axis(ps, sqrt_arg) || crosses_negative_axis(pl, log_arg) {
                    return Err(QuadError::BranchCutCrossing { at: x });
                }
            }
            prev = Some((sqrt_arg, log_arg));
        }
        Ok(())
    }
}

fn crosses_negative_axis(v1: C64, v2: C64) -> bool {
    if v1.im.signum() == v2.im.signum() {
        return false;
    }
    let total = (v2.im - v1.im).abs();
    if total == 0.0 {
        return false;
    }
    // real part at the interpolated axis crossing
    let w = v1.im.abs() / total;
    let re = v1.re + (v2.re - v1.re) * w;
    re <= 0.0
}

/// Inversion of `Φ(h(u)) = z` for the base coordinate of a geodesic of the
/// class `b1 = (h')²`, `a_k = 1/P_k(h)`: the quadratic under the square
/// root is `q(η) = A_1 - Σ A_k P_k(η)` built from the first integrals.
/// Solved by damped Newton under a homotopy in `z`, with the square-root
/// and logarithm branches tracked along the way.
pub struct GeodesicInversion<'a> {
    h: &'a ExprNode,
    qa: C64,
    qb: C64,
    qc: C64,
    case: QuadCase,
    /// Continued square-root anchor (Log: of the reduced radicand; Sqrt:
    /// of the affine radicand).
    sqrt_anchor: C64,
    /// Continued logarithm anchor.
    log_anchor: C64,
    /// Root-germ sign for the cases without an internal square root.
    sign: C64,
    /// Normalization so the seed maps to z = 0.
    phi_base: C64,
    u_cur: C64,
    z_cur: C64,
}

impl<'a> GeodesicInversion<'a> {
    pub fn new(
        h: &'a ExprNode,
        p: &[Polynomial],
        a: &[C64],
        seed_u1: C64,
        seed_udot1: C64,
    ) -> Result<Self, QuadError> {
        assert_eq!(p.len() + 1, a.len(), "one constant per factor");
        for poly in p {
            if poly.degree().is_some_and(|d| d > 2) {
                return Err(QuadError::DegreeTooHigh);
            }
        }
        let mut q = [C64::new(0.0, 0.0); 3];
        q[0] = a[0];
        for (poly, &ak) in p.iter().zip(&a[1..]) {
            for (d, slot) in q.iter_mut().enumerate() {
                *slot -= ak * poly.coeff(d);
            }
        }
        let (qc, qb, qa) = (q[0], q[1], q[2]);
        let zero = C64::new(0.0, 0.0);
        let case = if qa != zero {
            if (qb * qb - 4.0 * qa * qc) != zero {
                QuadCase::Log
            } else {
                QuadCase::DegenerateLog
            }
        } else if qb != zero {
            QuadCase::Sqrt
        } else if qc != zero {
            QuadCase::Linear
        } else {
            return Err(QuadError::DegenerateCoefficients);
        };

        let w0 = expr::eval(h, seed_u1).map_err(|p| QuadError::Pole { at: p.at })?;
        let h0 = expr::eval_jet(h, seed_u1).map_err(|p| QuadError::Pole { at: p.at })?;
        if h0.d1.norm() < 1e-12 {
            return Err(QuadError::SeedDegenerate);
        }
        let qval = qa * w0 * w0 + qb * w0 + qc;
        if qval.norm() < 1e-12 {
            return Err(QuadError::SeedDegenerate);
        }

        let mut inv = GeodesicInversion {
            h,
            qa,
            qb,
            qc,
            case,
            sqrt_anchor: zero,
            log_anchor: zero,
            sign: C64::new(1.0, 0.0),
            phi_base: zero,
            u_cur: seed_u1,
            z_cur: zero,
        };

        // fix the root germ so du/dz at the seed matches the given velocity
        let principal = match case {
            QuadCase::Log => (w0 * w0 + (qb / qa) * w0 + qc / qa).sqrt(),
            QuadCase::Sqrt => (qb * w0 + qc).sqrt(),
            _ => zero,
        };
        let velocity_for = |sign: f64| -> C64 {
            match case {
                QuadCase::Log => qa.sqrt() * principal * sign / h0.d1,
                QuadCase::Sqrt => principal * sign / h0.d1,
                QuadCase::DegenerateLog => {
                    qa.sqrt() * (w0 + qb / (2.0 * qa)) * sign / h0.d1
                }
                QuadCase::Linear => qc.sqrt() * sign / h0.d1,
            }
        };
        let d_plus = (velocity_for(1.0) - seed_udot1).norm();
        let d_minus = (velocity_for(-1.0) - seed_udot1).norm();
        if (d_plus - d_minus).abs() < 1e-8 * (1.0 + seed_udot1.norm()) {
            return Err(QuadError::SeedAmbiguous);
        }
        let sgn = if d_plus <= d_minus { 1.0 } else { -1.0 };
        match case {
            QuadCase::Log | QuadCase::Sqrt => inv.sqrt_anchor = principal * sgn,
            _ => inv.sign = C64::new(sgn, 0.0),
        }
        if case == QuadCase::Log {
            inv.log_anchor = (w0 + qb / (2.0 * qa) + inv.sqrt_anchor).ln();
        }
        if case == QuadCase::DegenerateLog {
            inv.log_anchor = (w0 + qb / (2.0 * qa)).ln();
        }
        inv.phi_base = inv.phi_at(w0).0;
        Ok(inv)
    }

    /// Tracked antiderivative and its `dΦ/dw` at `w`, continued from the
    /// current anchors.
    fn phi_at(&self, w: C64) -> (C64, C64) {
        match self.case {
            QuadCase::Log => {
                let r = w * w + (self.qb / self.qa) * w + self.qc / self.qa;
                let s = continued_sqrt(r, self.sqrt_anchor);
                let t = w + self.qb / (2.0 * self.qa) + s;
                let l = continued_log(t, self.log_anchor);
                (l / self.qa.sqrt(), 1.0 / (self.qa.sqrt() * s))
            }
            QuadCase::DegenerateLog => {
                let t = w + self.qb / (2.0 * self.qa);
                let l = continued_log(t, self.log_anchor);
                (
                    self.sign * l / self.qa.sqrt(),
                    self.sign / (self.qa.sqrt() * t),
                )
            }
            QuadCase::Sqrt => {
                let s = continued_sqrt(self.qb * w + self.qc, self.sqrt_anchor);
                (2.0 * s / self.qb, 1.0 / s)
            }
            QuadCase::Linear => (self.sign * w / self.qc.sqrt(), self.sign / self.qc.sqrt()),
        }
    }

    fn commit_anchors(&mut self, w: C64) {
        match self.case {
            QuadCase::Log => {
                let r = w * w + (self.qb / self.qa) * w + self.qc / self.qa;
                self.sqrt_anchor = continued_sqrt(r, self.sqrt_anchor);
                let t = w + self.qb / (2.0 * self.qa) + self.sqrt_anchor;
                self.log_anchor = continued_log(t, self.log_anchor);
            }
            QuadCase::DegenerateLog => {
                let t = w + self.qb / (2.0 * self.qa);
                self.log_anchor = continued_log(t, self.log_anchor);
            }
            QuadCase::Sqrt => {
                self.sqrt_anchor = continued_sqrt(self.qb * w + self.qc, self.sqrt_anchor);
            }
            QuadCase::Linear => {}
        }
    }

    /// Normalized antiderivative `Φ(h(u))` on the tracked branch.
    pub fn phi_of(&self, u: C64) -> Result<C64, QuadError> {
        let w = expr::eval(self.h, u).map_err(|p| QuadError::Pole { at: p.at })?;
        Ok(self.phi_at(w).0 - self.phi_base)
    }

    /// Solves `Φ(h(u)) = z`, walking the homotopy from the last solved
    /// target. Intended to be driven with monotonically progressing
    /// targets along a branch-safe path.
    pub fn solve(&mut self, z: C64) -> Result<C64, QuadError> {
        let span = (z - self.z_cur).norm();
        if span == 0.0 {
            return Ok(self.u_cur);
        }
        let mut substeps = ((span / 0.05).ceil() as usize).max(1);
        let from_z = self.z_cur;
        let from_u = self.u_cur;
        let mut splits = 0;
        loop {
            let mut ok = true;
            let mut zj = from_z;
            let mut uj = from_u;
            let step = (z - from_z) / substeps as f64;
            for _ in 0..substeps {
                zj += step;
                match self.newton(uj, zj) {
                    Ok(u_new) => {
                        uj = u_new;
                        let w = expr::eval(self.h, uj).map_err(|p| QuadError::Pole { at: p.at })?;
                        self.commit_anchors(w);
                    }
                    Err(e) => {
                        if matches!(e, QuadError::BranchAmbiguity { .. }) {
                            return Err(e);
                        }
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                self.z_cur = z;
                self.u_cur = uj;
                return Ok(uj);
            }
            splits += 1;
            if splits > 8 {
                return Err(QuadError::NewtonDivergence { at: z });
            }
            substeps *= 2;
        }
    }

    fn newton(&self, u_start: C64, z_target: C64) -> Result<C64, QuadError> {
        let mut u = u_start;
        let scale = 1.0 + z_target.norm();
        for _ in 0..40 {
            let hj = expr::eval_jet(self.h, u).map_err(|p| QuadError::Pole { at: p.at })?;
            let (phi, dphi_dw) = self.phi_at(hj.value);
            let f = phi - self.phi_base - z_target;
            if f.norm() <= 1e-12 * scale {
                return Ok(u);
            }
            let fprime = dphi_dw * hj.d1;
            if fprime.norm() < 1e-8 {
                return Err(QuadError::BranchAmbiguity { at: u });
            }
            let mut step = f / fprime;
            // damping: halve the step until the residual decreases
            let mut improved = false;
            for _ in 0..8 {
                let cand = u - step;
                let hw = match expr::eval(self.h, cand) {
                    Ok(w) => w,
                    Err(_) => {
                        step *= 0.5;
                        continue;
                    }
                };
                let f_cand = self.phi_at(hw).0 - self.phi_base - z_target;
                if f_cand.norm() < f.norm() {
                    u = cand;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                return Err(QuadError::NewtonDivergence { at: z_target });
            }
        }
        Err(QuadError::NewtonDivergence { at: z_target })
    }
}

fn continued_sqrt(radicand: C64, anchor: C64) -> C64 {
    let p = radicand.sqrt();
    if (p - anchor).norm() <= (-p - anchor).norm() {
        p
    } else {
        -p
    }
}

fn continued_log(arg: C64, anchor: C64) -> C64 {
    let p = arg.ln();
    let tau = std::f64::consts::TAU;
    let k = ((anchor.im - p.im) / tau).round();
    p + C64::new(0.0, k * tau)
}

/// Solves `Φ(h(u¹)) = z` for `u¹` on the germ fixed by the seed position
/// and velocity; convenience wrapper over [`GeodesicInversion`].
pub fn closed_form_geodesic_u1(
    h: &ExprNode,
    p: &[Polynomial],
    a: &[C64],
    z: C64,
    seed_u1: C64,
    seed_udot1: C64,
) -> Result<C64, QuadError> {
    let mut inv = GeodesicInversion::new(h, p, a, seed_u1, seed_udot1)?;
    inv.solve(z)
}
