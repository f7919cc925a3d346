//! Piecewise paths in the complex plane: segments and circular arcs, with a
//! global parameter `t ∈ [0, 1]` proportional to arclength.

use crate::C64;

/// One leg of a path.
#[derive(Debug, Clone, PartialEq)]
pub enum Leg {
    Segment {
        from: C64,
        to: C64,
    },
    /// Circular arc `center + radius·e^{iθ}`, `θ` running from `angle_from`
    /// to `angle_to` (radians; direction given by the sign of the sweep).
    Arc {
        center: C64,
        radius: f64,
        angle_from: f64,
        angle_to: f64,
    },
}

impl Leg {
    pub fn start(&self) -> C64 {
        match self {
            Leg::Segment { from, .. } => *from,
            Leg::Arc {
                center,
                radius,
                angle_from,
                ..
            } => center + C64::from_polar(*radius, *angle_from),
        }
    }

    pub fn end(&self) -> C64 {
        match self {
            Leg::Segment { to, .. } => *to,
            Leg::Arc {
                center,
                radius,
                angle_to,
                ..
            } => center + C64::from_polar(*radius, *angle_to),
        }
    }

    pub fn arclength(&self) -> f64 {
        match self {
            Leg::Segment { from, to } => (to - from).norm(),
            Leg::Arc {
                radius,
                angle_from,
                angle_to,
                ..
            } => radius * (angle_to - angle_from).abs(),
        }
    }

    /// Point at local fraction `s ∈ [0, 1]` of the leg.
    fn point(&self, s: f64) -> C64 {
        match self {
            Leg::Segment { from, to } => from + (to - from) * s,
            Leg::Arc {
                center,
                radius,
                angle_from,
                angle_to,
            } => center + C64::from_polar(*radius, angle_from + s * (angle_to - angle_from)),
        }
    }

    /// Derivative of [`Leg::point`] with respect to the local fraction.
    fn velocity(&self, s: f64) -> C64 {
        match self {
            Leg::Segment { from, to } => to - from,
            Leg::Arc {
                radius,
                angle_from,
                angle_to,
                ..
            } => {
                let sweep = angle_to - angle_from;
                let theta = angle_from + s * sweep;
                C64::new(0.0, sweep) * C64::from_polar(*radius, theta)
            }
        }
    }
}

/// An ordered, contiguous chain of legs.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    legs: Vec<Leg>,
    /// Cumulative arclength up to the start of each leg, plus the total.
    cum: Vec<f64>,
    total: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PathError {
    #[error("path has no legs")]
    Empty,
    #[error("leg {leg} starts at {got} but the previous leg ends at {expected}")]
    Discontiguous { leg: usize, expected: C64, got: C64 },
    #[error("path has zero arclength")]
    ZeroLength,
}

impl PathSpec {
    pub fn new(legs: Vec<Leg>) -> Result<Self, PathError> {
        if legs.is_empty() {
            return Err(PathError::Empty);
        }
        for w in legs.windows(2) {
            let expected = w[0].end();
            let got = w[1].start();
            if (expected - got).norm() > 1e-12 * (1.0 + expected.norm()) {
                return Err(PathError::Discontiguous {
                    leg: 1,
                    expected,
                    got,
                });
            }
        }
        let mut cum = Vec::with_capacity(legs.len() + 1);
        let mut total = 0.0;
        cum.push(0.0);
        for leg in &legs {
            total += leg.arclength();
            cum.push(total);
        }
        if total <= 0.0 {
            return Err(PathError::ZeroLength);
        }
        Ok(PathSpec { legs, cum, total })
    }

    /// Straight segment from `a` to `b`.
    pub fn segment(a: C64, b: C64) -> Self {
        PathSpec::new(vec![Leg::Segment { from: a, to: b }]).expect("nondegenerate segment")
    }

    /// Polyline through the given points.
    pub fn polyline(points: &[C64]) -> Result<Self, PathError> {
        if points.len() < 2 {
            return Err(PathError::Empty);
        }
        PathSpec::new(
            points
                .windows(2)
                .map(|w| Leg::Segment { from: w[0], to: w[1] })
                .collect(),
        )
    }

    /// Full counterclockwise circle around `center` starting at angle
    /// `start_angle`.
    pub fn circle(center: C64, radius: f64, start_angle: f64) -> Self {
        PathSpec::new(vec![Leg::Arc {
            center,
            radius,
            angle_from: start_angle,
            angle_to: start_angle + std::f64::consts::TAU,
        }])
        .expect("circle is a valid path")
    }

    pub fn legs(&self) -> &[Leg] {
        &self.legs
    }

    pub fn arclength(&self) -> f64 {
        self.total
    }

    pub fn start(&self) -> C64 {
        self.legs[0].start()
    }

    pub fn end(&self) -> C64 {
        self.legs[self.legs.len() - 1].end()
    }

    pub fn is_closed(&self) -> bool {
        (self.end() - self.start()).norm() <= 1e-12 * (1.0 + self.start().norm())
    }

    /// Index of the leg containing global parameter `t`, and the local
    /// fraction within it.
    fn locate(&self, t: f64) -> (usize, f64) {
        let s = t.clamp(0.0, 1.0) * self.total;
        // the last leg owns its endpoint
        let mut idx = match self
            .cum
            .binary_search_by(|probe| probe.partial_cmp(&s).expect("finite"))
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        if idx >= self.legs.len() {
            idx = self.legs.len() - 1;
        }
        let len = self.legs[idx].arclength();
        let local = if len > 0.0 { (s - self.cum[idx]) / len } else { 0.0 };
        (idx, local.clamp(0.0, 1.0))
    }

    /// Point at global parameter `t ∈ [0, 1]`.
    pub fn point(&self, t: f64) -> C64 {
        let (idx, s) = self.locate(t);
        self.legs[idx].point(s)
    }

    /// `dz/dt` at global parameter `t`; its magnitude equals the total
    /// arclength everywhere since `t` is proportional to arclength.
    pub fn velocity(&self, t: f64) -> C64 {
        let (idx, _) = self.locate(t);
        self.leg_velocity(idx, t)
    }

    /// Leg index owning the open interval around `t`; boundaries resolve to
    /// the leg starting there, endpoints clamp.
    pub fn leg_index_at(&self, t: f64) -> usize {
        self.locate(t).0
    }

    /// Point at global parameter `t`, evaluated on a pinned leg. At a leg
    /// boundary both legs agree; integrators pin the leg so the chain
    /// factor never jumps within a step.
    pub fn leg_point(&self, idx: usize, t: f64) -> C64 {
        self.legs[idx].point(self.local_fraction(idx, t))
    }

    /// `dz/dt` at global parameter `t`, evaluated on a pinned leg.
    pub fn leg_velocity(&self, idx: usize, t: f64) -> C64 {
        let len = self.legs[idx].arclength();
        self.legs[idx].velocity(self.local_fraction(idx, t)) * (self.total / len)
    }

    fn local_fraction(&self, idx: usize, t: f64) -> f64 {
        let len = self.legs[idx].arclength();
        let s = (t.clamp(0.0, 1.0) * self.total - self.cum[idx]) / len;
        s.clamp(0.0, 1.0)
    }

    /// Global parameters at which a new leg starts (excluding 0 and 1);
    /// the integrator must not step across these.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.cum[1..self.cum.len() - 1]
            .iter()
            .map(|s| s / self.total)
            .collect()
    }

    /// Parameter with the given arclength still to go.
    pub fn param_at_remaining(&self, remaining: f64) -> f64 {
        (1.0 - remaining / self.total).clamp(0.0, 1.0)
    }

    /// The initial portion of the path up to global parameter `t_end`,
    /// reparametrized over `[0, 1]`. Returns `None` when the portion is
    /// degenerate.
    pub fn truncated(&self, t_end: f64) -> Option<Self> {
        if t_end.is_nan() || t_end <= 0.0 {
            return None;
        }
        if t_end >= 1.0 {
            return Some(self.clone());
        }
        let (idx, s) = self.locate(t_end);
        let mut legs: Vec<Leg> = self.legs[..idx].to_vec();
        if s > 0.0 {
            let partial = match self.legs[idx] {
                Leg::Segment { from, to } => Leg::Segment {
                    from,
                    to: from + (to - from) * s,
                },
                Leg::Arc {
                    center,
                    radius,
                    angle_from,
                    angle_to,
                } => Leg::Arc {
                    center,
                    radius,
                    angle_from,
                    angle_to: angle_from + s * (angle_to - angle_from),
                },
            };
            legs.push(partial);
        }
        PathSpec::new(legs).ok()
    }

    /// The same chain walked backwards.
    pub fn reversed(&self) -> Self {
        let legs = self
            .legs
            .iter()
            .rev()
            .map(|leg| match *leg {
                Leg::Segment { from, to } => Leg::Segment { from: to, to: from },
                Leg::Arc {
                    center,
                    radius,
                    angle_from,
                    angle_to,
                } => Leg::Arc {
                    center,
                    radius,
                    angle_from: angle_to,
                    angle_to: angle_from,
                },
            })
            .collect();
        PathSpec::new(legs).expect("reversal preserves validity")
    }
}
