//! Coercivity certification for the rational quadrature class and a
//! numeric incompleteness probe for arbitrary warped specs.
//!
//! The certified class consists of the metrics
//! `Λ = (h')² du1⊙du1 + Σ f_k(u_k)² / P_k(h(u1)) du_k⊙du_k` on plane
//! factors, with `h` and the `f_k` rational and each `P_k` a nonzero
//! polynomial of degree at most two. Along any geodesic of this class the
//! base coordinate satisfies `Φ(h(u1)) = z` with `Φ` an elementary
//! antiderivative (see [`crate::quad`]), whose inverse continues to all but
//! finitely many points of the sphere; the fiber quadratures behave the
//! same way. Certification for unrestricted meromorphic data is out of
//! reach of a terminating check, so anything outside the class is reported
//! as not certified, with the numeric probe as the fallback signal.

use crate::continuation::{
    integrate_along, Leg, PathSpec, SingularityClass, Terminal,
};
use crate::expr::{self, differentiate, ExprNode};
use crate::geodesic::{geodesic_rhs, trace_geodesic, GeodesicError, GeodesicState};
use crate::metric::{FactorDomain, MetricError, MetricSpec};
use crate::quad::Polynomial;
use crate::C64;

/// Data of one metric in the certified class.
#[derive(Debug, Clone)]
pub struct QuadratureClassSpec {
    pub domains: Vec<FactorDomain>,
    pub h: ExprNode,
    /// Fiber functions, one per fiber factor.
    pub f: Vec<ExprNode>,
    /// Fiber polynomials, one per fiber factor.
    pub p: Vec<Polynomial>,
}

impl QuadratureClassSpec {
    /// A spec on `1 + f.len()` plane factors.
    pub fn on_planes(h: ExprNode, f: Vec<ExprNode>, p: Vec<Polynomial>) -> Self {
        let n = f.len() + 1;
        QuadratureClassSpec {
            domains: vec![FactorDomain::Plane; n],
            h,
            f,
            p,
        }
    }

    pub fn dim(&self) -> usize {
        self.f.len() + 1
    }

    /// The warped-product form of the metric: `b1 = (h')²`,
    /// `a_k = 1/P_k(h)`, fiber entries `f_k²`.
    pub fn to_metric_spec(&self) -> Result<MetricSpec, MetricError> {
        let hprime = differentiate(&self.h);
        let b1 = ExprNode::Pow(Box::new(hprime), 2);
        let warp = self
            .p
            .iter()
            .map(|poly| {
                ExprNode::Div(
                    Box::new(ExprNode::constant(1.0)),
                    Box::new(compose_poly(poly, &self.h)),
                )
            })
            .collect();
        let fiber = self
            .f
            .iter()
            .map(|f| ExprNode::Pow(Box::new(f.clone()), 2))
            .collect();
        MetricSpec::new(self.domains.clone(), b1, warp, fiber)
    }
}

fn compose_poly(p: &Polynomial, h: &ExprNode) -> ExprNode {
    let mut acc = ExprNode::constant(p.coeff(0));
    let mut power: Option<ExprNode> = None;
    for d in 1..=p.degree().unwrap_or(0) {
        power = Some(match power {
            None => h.clone(),
            Some(prev) => ExprNode::Mul(Box::new(prev), Box::new(h.clone())),
        });
        let c = p.coeff(d);
        if c != C64::new(0.0, 0.0) {
            acc = ExprNode::Add(
                Box::new(acc),
                Box::new(ExprNode::Mul(
                    Box::new(ExprNode::constant(c)),
                    Box::new(power.clone().expect("initialized above")),
                )),
            );
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Coercive,
    NotCertified,
}

/// Outcome of the certification check: the verdict together with every
/// condition that was discharged (or the one that failed), and optional
/// numeric witness data attached by the probe.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub verdict: Verdict,
    pub reasons: Vec<String>,
    pub witnesses: Option<Vec<Witness>>,
}

/// Deterministic coercivity check for the quadrature class. Independent of
/// any internal base point: all conditions are structural or sampled on a
/// fixed grid.
pub fn certify_coercive(spec: &QuadratureClassSpec) -> Certificate {
    let mut reasons = Vec::new();
    let n = spec.dim();
    if spec.p.len() != spec.f.len() {
        return not_certified("one fiber polynomial is required per fiber function");
    }
    if n < 2 {
        return not_certified("at least two factors are required");
    }
    reasons.push(format!("factor count N = {n} is at least 2"));

    if spec.domains.contains(&FactorDomain::UnitDisc) {
        return not_certified(
            "unit-disc factors need a characteristic-function growth criterion outside this tool's scope",
        );
    }
    reasons.push("all factors are full planes".to_string());

    for (k, poly) in spec.p.iter().enumerate() {
        match poly.degree() {
            None => {
                return not_certified(&format!(
                    "fiber polynomial {} is identically zero",
                    k + 2
                ))
            }
            Some(d) if d > 2 => {
                return not_certified(&format!(
                    "fiber polynomial {} has degree {d} > 2",
                    k + 2
                ))
            }
            _ => {}
        }
    }
    reasons.push("every fiber polynomial is nonzero of degree at most two".to_string());

    if !spec.h.is_rational() {
        return not_certified("h is not rational; certification is restricted to rational data");
    }
    match expression_is_constant(&spec.h) {
        Some(true) => return not_certified("h is constant"),
        Some(false) => {}
        None => return not_certified("h could not be sampled on the test grid"),
    }
    reasons.push(
        "h is rational and nonconstant, so its continuation attains all extended-complex values \
         with at most two exceptions"
            .to_string(),
    );

    for (k, f) in spec.f.iter().enumerate() {
        if !f.is_rational() {
            return not_certified(&format!(
                "fiber function {} is not rational; certification is restricted to rational data",
                k + 2
            ));
        }
        match expression_is_constant(f) {
            Some(true) => {
                let v = expr::eval(f, C64::new(0.31, 0.17)).ok();
                match v {
                    Some(v) if v.norm() > 1e-14 => {}
                    _ => {
                        return not_certified(&format!(
                            "fiber function {} is the zero constant",
                            k + 2
                        ))
                    }
                }
            }
            Some(false) => {}
            None => {
                return not_certified(&format!(
                    "fiber function {} could not be sampled on the test grid",
                    k + 2
                ))
            }
        }
    }
    reasons.push(
        "every fiber function is rational and either nonconstant or a nonzero constant"
            .to_string(),
    );
    reasons.push(
        "base quadrature: the antiderivative of 1/sqrt(degree-\u{2264}2 polynomial) composed with \
         h inverts to a continuation omitting only finitely many sphere points"
            .to_string(),
    );
    reasons.push(
        "the two square-root germs of each radicand have isomorphic continuations, so checking \
         one branch suffices"
            .to_string(),
    );

    Certificate {
        verdict: Verdict::Coercive,
        reasons,
        witnesses: None,
    }
}

fn not_certified(reason: &str) -> Certificate {
    Certificate {
        verdict: Verdict::NotCertified,
        reasons: vec![reason.to_string()],
        witnesses: None,
    }
}

/// `Some(true)` for constant, `Some(false)` for nonconstant, `None` when
/// the fixed sampling grid never evaluates cleanly.
fn expression_is_constant(e: &ExprNode) -> Option<bool> {
    if e.is_constant() {
        return Some(true);
    }
    let grid = [
        C64::new(0.31, 0.17),
        C64::new(-0.83, 0.41),
        C64::new(1.27, -0.59),
        C64::new(-1.61, -1.13),
        C64::new(0.07, 0.93),
        C64::new(2.39, 0.71),
        C64::new(-0.29, -2.21),
        C64::new(0.53, 3.07),
    ];
    let mut sampled = false;
    for p in grid {
        if let Ok(j) = expr::eval_jet(e, p) {
            sampled = true;
            if j.d1.norm() > 1e-10 * (1.0 + j.value.norm()) {
                return Some(false);
            }
        }
    }
    if sampled {
        Some(true)
    } else {
        None
    }
}

/// Hard-obstruction kinds: continuation genuinely failed, as opposed to
/// branch-like or logarithmic stops which stay on the extended surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WitnessKind {
    DomainExit { factor: usize },
    UnrestartablePole { order: u32 },
    Undetermined,
}

/// One incompleteness witness found by the probe.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub seed: usize,
    pub ray: usize,
    /// Ray direction angle in radians.
    pub direction: f64,
    pub z: C64,
    pub kind: WitnessKind,
}

/// A stop that does not witness incompleteness.
#[derive(Debug, Clone)]
pub struct SoftStop {
    pub seed: usize,
    pub ray: usize,
    pub z: C64,
    pub class: SingularityClass,
    pub restarted: bool,
}

#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub witnesses: Vec<Witness>,
    pub soft_stops: Vec<SoftStop>,
    pub rays_run: usize,
    pub budget_exhausted: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct ProbeConfig {
    pub rays: usize,
    pub radius: f64,
    pub tol: f64,
    /// Total accepted+rejected step budget across all rays.
    pub max_total_steps: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            rays: 32,
            radius: 50.0,
            tol: 1e-10,
            max_total_steps: 8_000_000,
        }
    }
}

/// Traces geodesics along a fan of rays from each seed and records every
/// terminal obstruction. Branch-like and logarithmic stops are not
/// witnesses; domain exits, pole-like stops whose restart fails, and
/// undetermined stops are.
pub fn incompleteness_probe(
    m: &MetricSpec,
    seeds: &[GeodesicState],
    cfg: ProbeConfig,
) -> Result<ProbeReport, GeodesicError> {
    let mut report = ProbeReport {
        witnesses: Vec::new(),
        soft_stops: Vec::new(),
        rays_run: 0,
        budget_exhausted: false,
    };
    let mut steps_used = 0usize;
    for (si, seed) in seeds.iter().enumerate() {
        for ri in 0..cfg.rays {
            if steps_used >= cfg.max_total_steps {
                report.budget_exhausted = true;
                return Ok(report);
            }
            let direction = std::f64::consts::TAU * ri as f64 / cfg.rays as f64;
            let target = seed.z + C64::from_polar(cfg.radius, direction);
            let path = PathSpec::segment(seed.z, target);
            let trace = trace_geodesic(m, seed, &path, cfg.tol)?;
            steps_used += trace.accepted + trace.rejected;
            report.rays_run += 1;
            match trace.terminal {
                Terminal::Completed => {}
                Terminal::DomainExit { z, factor } => {
                    report.witnesses.push(Witness {
                        seed: si,
                        ray: ri,
                        direction,
                        z,
                        kind: WitnessKind::DomainExit { factor },
                    });
                }
                Terminal::SingularStop { z, class } => match class {
                    SingularityClass::BranchLike { .. } | SingularityClass::Logarithmic => {
                        report.soft_stops.push(SoftStop {
                            seed: si,
                            ray: ri,
                            z,
                            class,
                            restarted: false,
                        });
                    }
                    SingularityClass::Removable => {
                        let restarted = restart_past(m, &trace, z, cfg.tol);
                        report.soft_stops.push(SoftStop {
                            seed: si,
                            ray: ri,
                            z,
                            class,
                            restarted,
                        });
                    }
                    SingularityClass::PoleLike { order } => {
                        let restarted = restart_past(m, &trace, z, cfg.tol);
                        if restarted {
                            report.soft_stops.push(SoftStop {
                                seed: si,
                                ray: ri,
                                z,
                                class,
                                restarted,
                            });
                        } else {
                            report.witnesses.push(Witness {
                                seed: si,
                                ray: ri,
                                direction,
                                z,
                                kind: WitnessKind::UnrestartablePole { order },
                            });
                        }
                    }
                    SingularityClass::Undetermined => {
                        report.witnesses.push(Witness {
                            seed: si,
                            ray: ri,
                            direction,
                            z,
                            kind: WitnessKind::Undetermined,
                        });
                    }
                },
            }
        }
    }
    Ok(report)
}

/// Attempts to continue past an isolated stop by a half-circle detour:
/// back up to a sample at a safe standoff from the stop and integrate the
/// semicircle around it. Success means the germ lives on past the stop.
fn restart_past(
    m: &MetricSpec,
    trace: &crate::geodesic::GeodesicTrace,
    z_stop: C64,
    tol: f64,
) -> bool {
    let sys = geodesic_rhs(m);
    for standoff_scale in [1.0, 4.0, 16.0] {
        let base = trace.samples.iter().rev().find(|s| {
            let d = (s.z - z_stop).norm();
            d >= standoff_scale * 1e-4 * (1.0 + z_stop.norm())
        });
        let Some(base) = base else { continue };
        let radius = (base.z - z_stop).norm();
        let start_angle = (base.z - z_stop).arg();
        for sweep in [std::f64::consts::PI, -std::f64::consts::PI] {
            let detour = PathSpec::new(vec![Leg::Arc {
                center: z_stop,
                radius,
                angle_from: start_angle,
                angle_to: start_angle + sweep,
            }])
            .expect("semicircle is a valid path");
            let mut y: Vec<C64> = base.u.clone();
            y.extend_from_slice(&base.udot);
            let rec = integrate_along(&sys, &y, &detour, tol);
            if rec.terminal == Terminal::Completed {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn certified_fixture() -> QuadratureClassSpec {
        QuadratureClassSpec::on_planes(
            parse("u").unwrap(),
            vec![parse("1").unwrap()],
            vec![Polynomial::new(vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])],
        )
    }

    #[test]
    fn certifies_the_reference_fixture() {
        let cert = certify_coercive(&certified_fixture());
        assert_eq!(cert.verdict, Verdict::Coercive);
        assert!(cert.reasons.len() >= 5);
    }

    #[test]
    fn constant_h_is_rejected() {
        let mut spec = certified_fixture();
        spec.h = parse("3").unwrap();
        let cert = certify_coercive(&spec);
        assert_eq!(cert.verdict, Verdict::NotCertified);
        assert!(cert.reasons[0].contains("constant"));
    }

    #[test]
    fn degree_three_polynomial_is_rejected() {
        let mut spec = certified_fixture();
        spec.p = vec![Polynomial::new(vec![
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(1.0, 0.0),
        ])];
        let cert = certify_coercive(&spec);
        assert_eq!(cert.verdict, Verdict::NotCertified);
        assert!(cert.reasons[0].contains("degree 3"));
    }

    #[test]
    fn non_rational_data_is_rejected() {
        let mut spec = certified_fixture();
        spec.h = parse("exp(u)").unwrap();
        assert_eq!(certify_coercive(&spec).verdict, Verdict::NotCertified);
    }

    #[test]
    fn certification_is_deterministic() {
        let spec = certified_fixture();
        let a = certify_coercive(&spec);
        let b = certify_coercive(&spec);
        assert_eq!(a.verdict, b.verdict);
        assert_eq!(a.reasons, b.reasons);
    }

    #[test]
    fn metric_form_of_the_class() {
        let m = certified_fixture().to_metric_spec().unwrap();
        // b1 = (h')² = 1, a2 = 1/(u²+1), f2 = 1
        let u = [c(2.0, 0.0), c(0.3, 0.0)];
        let diag = crate::metric::metric_matrix(&m, &u).unwrap();
        match diag[0] {
            crate::metric::MetricEntry::Finite(v) => assert!((v - c(1.0, 0.0)).norm() < 1e-14),
            _ => panic!("pole in b1"),
        }
        match diag[1] {
            crate::metric::MetricEntry::Finite(v) => {
                assert!((v - c(0.2, 0.0)).norm() < 1e-14, "1/(4+1) = 0.2, got {v}")
            }
            _ => panic!("pole in fiber entry"),
        }
    }

    #[test]
    fn flat_plane_probe_finds_nothing() {
        let m = MetricSpec::flat(2);
        let seed = GeodesicState::new(
            c(0.0, 0.0),
            vec![c(0.0, 0.0), c(0.0, 0.0)],
            vec![c(0.7, 0.1), c(0.2, -0.3)],
        );
        let cfg = ProbeConfig {
            rays: 8,
            radius: 50.0,
            ..ProbeConfig::default()
        };
        let report = incompleteness_probe(&m, &[seed], cfg).unwrap();
        assert!(report.witnesses.is_empty());
        assert!(report.soft_stops.is_empty());
        assert_eq!(report.rays_run, 8);
    }

    #[test]
    fn disc_factor_probe_finds_exits_at_the_boundary() {
        let m = MetricSpec::flat(2)
            .with_domains(vec![FactorDomain::UnitDisc, FactorDomain::Plane])
            .unwrap();
        let speed = 0.5;
        let seed = GeodesicState::new(
            c(0.0, 0.0),
            vec![c(0.0, 0.0), c(0.0, 0.0)],
            vec![c(speed, 0.0), c(0.0, 0.0)],
        );
        let cfg = ProbeConfig {
            rays: 8,
            radius: 10.0,
            ..ProbeConfig::default()
        };
        let report = incompleteness_probe(&m, &[seed], cfg).unwrap();
        assert_eq!(report.witnesses.len(), 8);
        for w in &report.witnesses {
            assert!(matches!(w.kind, WitnessKind::DomainExit { factor: 0 }));
            let expected = 1.0 / speed;
            assert!(
                (w.z.norm() - expected).abs() < 1e-8,
                "exit modulus {} vs {expected}",
                w.z.norm()
            );
        }
    }
}
