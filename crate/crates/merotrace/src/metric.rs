//! Warped-product metric data and Christoffel symbols.
//!
//! The metric is diagonal: `g_00 = b1(u0)` on the base factor and
//! `g_kk = a_k(u0) f_k(u_k)` on each fiber factor, where `b1`, the warping
//! functions `a_k` and the fiber functions `f_k` are nonzero meromorphic
//! expressions. Coordinates are 0-based in code: factor 0 is the base.
//!
//! Christoffel symbols come in two independent routes: the closed formulas
//! of the warped class ([`christoffel_warped`]) and a generic computation
//! from metric-matrix partial derivatives ([`christoffel_generic`]) that
//! serves as the oracle for the first.

use std::collections::BTreeMap;
use std::fmt;

use crate::expr::{self, ExprNode, Pole};
use crate::{C64, DEGEN_EPS, POLE_EPS};

/// Domain of one factor of the product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorDomain {
    Plane,
    UnitDisc,
}

impl FactorDomain {
    /// Membership test: the plane accepts all finite values, the disc
    /// requires `|u| < 1`.
    pub fn contains(&self, u: C64) -> bool {
        match self {
            FactorDomain::Plane => u.re.is_finite() && u.im.is_finite(),
            FactorDomain::UnitDisc => u.norm() < 1.0,
        }
    }
}

/// A diagonal warped-product metric on `N >= 2` factors.
#[derive(Debug, Clone)]
pub struct MetricSpec {
    n: usize,
    domains: Vec<FactorDomain>,
    b1: ExprNode,
    /// Warping functions `a_k` for fibers `k = 1..n-1`, in the base variable.
    warp: Vec<ExprNode>,
    /// Fiber functions `f_k` for fibers `k = 1..n-1`, each in its own variable.
    fiber: Vec<ExprNode>,
    pole_eps: f64,
    degen_eps: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("coordinate {factor} lies outside its factor domain")]
    DomainViolation { factor: usize },
    #[error("point is not metrically ordinary: {reason}")]
    NotOrdinary { reason: Ordinariness },
    #[error(transparent)]
    Pole(#[from] Pole),
    #[error("invalid metric data: {0}")]
    Spec(String),
}

/// Reason codes for the ordinariness test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ordinariness {
    Ordinary,
    /// A diagonal entry has a pole at the point.
    PoleEntry { factor: usize },
    /// A diagonal entry vanishes at the point.
    Degenerate { factor: usize },
    OutsideDomain { factor: usize },
}

impl fmt::Display for Ordinariness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ordinariness::Ordinary => write!(f, "ordinary"),
            Ordinariness::PoleEntry { factor } => write!(f, "pole in metric entry {factor}"),
            Ordinariness::Degenerate { factor } => write!(f, "degenerate metric entry {factor}"),
            Ordinariness::OutsideDomain { factor } => write!(f, "coordinate {factor} outside domain"),
        }
    }
}

/// A diagonal metric entry: finite value or pole marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricEntry {
    Finite(C64),
    Pole,
}

impl MetricSpec {
    /// Builds a metric spec, validating factor count, expression counts and
    /// that no datum is the zero expression.
    pub fn new(
        domains: Vec<FactorDomain>,
        b1: ExprNode,
        warp: Vec<ExprNode>,
        fiber: Vec<ExprNode>,
    ) -> Result<Self, MetricError> {
        let n = domains.len();
        if n < 2 {
            return Err(MetricError::Spec(format!("need at least 2 factors, got {n}")));
        }
        if warp.len() != n - 1 || fiber.len() != n - 1 {
            return Err(MetricError::Spec(format!(
                "expected {} warping and fiber functions, got {} and {}",
                n - 1,
                warp.len(),
                fiber.len()
            )));
        }
        for (name, e) in std::iter::once(("b1", &b1))
            .chain(warp.iter().map(|e| ("a", e)))
            .chain(fiber.iter().map(|e| ("f", e)))
        {
            if is_zero_expression(e) {
                return Err(MetricError::Spec(format!("{name} is the zero expression")));
            }
        }
        Ok(MetricSpec {
            n,
            domains,
            b1,
            warp,
            fiber,
            pole_eps: POLE_EPS,
            degen_eps: DEGEN_EPS,
        })
    }

    /// The flat metric on `n` plane factors: all data identically one.
    pub fn flat(n: usize) -> Self {
        let one = || ExprNode::Const(C64::new(1.0, 0.0));
        MetricSpec::new(
            vec![FactorDomain::Plane; n],
            one(),
            (1..n).map(|_| one()).collect(),
            (1..n).map(|_| one()).collect(),
        )
        .expect("flat spec is valid")
    }

    pub fn with_tolerances(mut self, pole_eps: f64, degen_eps: f64) -> Self {
        self.pole_eps = pole_eps;
        self.degen_eps = degen_eps;
        self
    }

    pub fn with_domains(mut self, domains: Vec<FactorDomain>) -> Result<Self, MetricError> {
        if domains.len() != self.n {
            return Err(MetricError::Spec("domain count mismatch".into()));
        }
        self.domains = domains;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn domains(&self) -> &[FactorDomain] {
        &self.domains
    }

    pub fn b1(&self) -> &ExprNode {
        &self.b1
    }

    /// Warping function of fiber `k` (`1 <= k < n`).
    pub fn warp(&self, k: usize) -> &ExprNode {
        &self.warp[k - 1]
    }

    /// Fiber function of fiber `k` (`1 <= k < n`).
    pub fn fiber(&self, k: usize) -> &ExprNode {
        &self.fiber[k - 1]
    }

    pub fn pole_eps(&self) -> f64 {
        self.pole_eps
    }

    pub fn degen_eps(&self) -> f64 {
        self.degen_eps
    }

    fn check_point(&self, u: &[C64]) -> Result<(), MetricError> {
        if u.len() != self.n {
            return Err(MetricError::Spec(format!(
                "point has {} coordinates, metric has {}",
                u.len(),
                self.n
            )));
        }
        for (i, (&ui, d)) in u.iter().zip(&self.domains).enumerate() {
            if !d.contains(ui) {
                return Err(MetricError::DomainViolation { factor: i });
            }
        }
        Ok(())
    }
}

fn is_zero_expression(e: &ExprNode) -> bool {
    if let ExprNode::Const(c) = e {
        return c.norm() == 0.0;
    }
    // probe a few generic points; a nonzero meromorphic expression cannot
    // vanish at all of them unless it is identically zero at working scale
    let probes = [
        C64::new(0.137, 0.291),
        C64::new(-0.613, 0.472),
        C64::new(1.131, -0.829),
    ];
    probes.iter().all(|&p| match expr::eval(e, p) {
        Ok(v) => v.norm() < 1e-14,
        Err(_) => false,
    })
}

/// Sparse table of Christoffel symbols, keyed `(i, j, k)` for the symbol
/// with lower indices `i, j` and upper index `k`, all 0-based.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChristoffelTable {
    entries: BTreeMap<(usize, usize, usize), C64>,
}

impl ChristoffelTable {
    pub fn get(&self, i: usize, j: usize, k: usize) -> C64 {
        self.entries
            .get(&(i, j, k))
            .copied()
            .unwrap_or(C64::new(0.0, 0.0))
    }

    /// Stores a symbol together with its `(i, j)`-transpose.
    pub fn set_symmetric(&mut self, i: usize, j: usize, k: usize, v: C64) {
        if v == C64::new(0.0, 0.0) {
            return;
        }
        self.entries.insert((i, j, k), v);
        self.entries.insert((j, i, k), v);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize, usize), &C64)> {
        self.entries.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest relative deviation from another table over the union of
    /// stored entries.
    pub fn max_relative_deviation(&self, other: &ChristoffelTable) -> f64 {
        let mut keys: Vec<_> = self.entries.keys().chain(other.entries.keys()).collect();
        keys.sort();
        keys.dedup();
        let mut worst = 0.0f64;
        for &&(i, j, k) in &keys {
            let a = self.get(i, j, k);
            let b = other.get(i, j, k);
            let scale = 1.0f64.max(a.norm()).max(b.norm());
            worst = worst.max((a - b).norm() / scale);
        }
        worst
    }
}

/// Diagonal of the metric matrix at `u`; entries may carry pole markers.
pub fn metric_matrix(m: &MetricSpec, u: &[C64]) -> Result<Vec<MetricEntry>, MetricError> {
    m.check_point(u)?;
    let mut diag = Vec::with_capacity(m.n);
    diag.push(entry(expr::eval_with(&m.b1, u[0], m.pole_eps)));
    for k in 1..m.n {
        let a = expr::eval_with(&m.warp[k - 1], u[0], m.pole_eps);
        let f = expr::eval_with(&m.fiber[k - 1], u[k], m.pole_eps);
        diag.push(match (a, f) {
            (Ok(a), Ok(f)) => MetricEntry::Finite(a * f),
            _ => MetricEntry::Pole,
        });
    }
    Ok(diag)
}

fn entry(v: Result<C64, Pole>) -> MetricEntry {
    match v {
        Ok(v) => MetricEntry::Finite(v),
        Err(_) => MetricEntry::Pole,
    }
}

/// Classifies the point: ordinary, pole, degenerate, or outside a domain.
pub fn ordinariness(m: &MetricSpec, u: &[C64]) -> Ordinariness {
    match metric_matrix(m, u) {
        Err(MetricError::DomainViolation { factor }) => Ordinariness::OutsideDomain { factor },
        Err(_) => Ordinariness::PoleEntry { factor: 0 },
        Ok(diag) => {
            for (i, e) in diag.iter().enumerate() {
                match e {
                    MetricEntry::Pole => return Ordinariness::PoleEntry { factor: i },
                    MetricEntry::Finite(v) => {
                        if v.norm() < m.degen_eps {
                            return Ordinariness::Degenerate { factor: i };
                        }
                    }
                }
            }
            Ordinariness::Ordinary
        }
    }
}

/// True iff the metric is holomorphic and nondegenerate at `u`.
pub fn is_metrically_ordinary(m: &MetricSpec, u: &[C64]) -> bool {
    ordinariness(m, u) == Ordinariness::Ordinary
}

/// Christoffel symbols of the warped product by the closed formulas:
/// `2Γ^0_00 = b1'/b1`, `2Γ^0_ii = -a_i' f_i / b1` for fibers `i`,
/// `2Γ^k_kk = f_k'/f_k`, `2Γ^k_0k = a_k'/a_k`, all other symbols zero.
///
/// The fiber formula for the lower pair `(i, i)` applies to fibers only;
/// the base symbol is covered by the separate `b1` formula.
pub fn christoffel_warped(m: &MetricSpec, u: &[C64]) -> Result<ChristoffelTable, MetricError> {
    let reason = ordinariness(m, u);
    if reason != Ordinariness::Ordinary {
        return Err(MetricError::NotOrdinary { reason });
    }
    let eps = m.pole_eps;
    let b1 = expr::eval_jet_with(&m.b1, u[0], eps)?;
    let mut table = ChristoffelTable::default();
    let half = C64::new(0.5, 0.0);
    table.set_symmetric(0, 0, 0, half * div_checked(b1.d1, b1.value, u[0], eps)?);
    for k in 1..m.n {
        let a = expr::eval_jet_with(&m.warp[k - 1], u[0], eps)?;
        let f = expr::eval_jet_with(&m.fiber[k - 1], u[k], eps)?;
        table.set_symmetric(
            k,
            k,
            0,
            -half * div_checked(a.d1 * f.value, b1.value, u[0], eps)?,
        );
        table.set_symmetric(k, k, k, half * div_checked(f.d1, f.value, u[k], eps)?);
        table.set_symmetric(0, k, k, half * div_checked(a.d1, a.value, u[0], eps)?);
    }
    Ok(table)
}

/// Christoffel symbols from metric-matrix partial derivatives:
/// `2Γ^k_ij = g^kk (-∂_k g_ij + ∂_j g_ik + ∂_i g_jk)` on the diagonal
/// metric, with partials supplied analytically by jets. Independent oracle
/// for [`christoffel_warped`].
pub fn christoffel_generic(m: &MetricSpec, u: &[C64]) -> Result<ChristoffelTable, MetricError> {
    let reason = ordinariness(m, u);
    if reason != Ordinariness::Ordinary {
        return Err(MetricError::NotOrdinary { reason });
    }
    let eps = m.pole_eps;
    let n = m.n;
    let zero = C64::new(0.0, 0.0);

    // diagonal values, partials with respect to the base variable, and
    // partials with respect to each entry's own variable
    let mut g = vec![zero; n];
    let mut dg_base = vec![zero; n];
    let mut dg_self = vec![zero; n];
    let b1 = expr::eval_jet_with(&m.b1, u[0], eps)?;
    g[0] = b1.value;
    dg_base[0] = b1.d1;
    dg_self[0] = b1.d1;
    for k in 1..n {
        let a = expr::eval_jet_with(&m.warp[k - 1], u[0], eps)?;
        let f = expr::eval_jet_with(&m.fiber[k - 1], u[k], eps)?;
        g[k] = a.value * f.value;
        dg_base[k] = a.d1 * f.value;
        dg_self[k] = a.value * f.d1;
    }
    let partial = |i: usize, m_idx: usize| -> C64 {
        if m_idx == 0 {
            dg_base[i]
        } else if m_idx == i {
            dg_self[i]
        } else {
            zero
        }
    };

    let mut table = ChristoffelTable::default();
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let t1 = if i == j { partial(i, k) } else { zero };
                let t2 = if i == k { partial(i, j) } else { zero };
                let t3 = if j == k { partial(j, i) } else { zero };
                let numer = -t1 + t2 + t3;
                if numer == zero {
                    continue;
                }
                let v = div_checked(numer, g[k], u[k], eps)? * C64::new(0.5, 0.0);
                table.set_symmetric(i, j, k, v);
            }
        }
    }
    Ok(table)
}

/// The amplitude `Λ(v, v) = b1(u0) v0^2 + Σ a_k(u0) f_k(u_k) v_k^2`.
pub fn speed(m: &MetricSpec, u: &[C64], v: &[C64]) -> Result<C64, MetricError> {
    if v.len() != m.n {
        return Err(MetricError::Spec(format!(
            "velocity has {} components, metric has {}",
            v.len(),
            m.n
        )));
    }
    let diag = metric_matrix(m, u)?;
    let mut total = C64::new(0.0, 0.0);
    for (k, e) in diag.iter().enumerate() {
        match e {
            MetricEntry::Finite(g) => total += *g * v[k] * v[k],
            MetricEntry::Pole => {
                return Err(MetricError::Pole(Pole { at: u[k] }));
            }
        }
    }
    Ok(total)
}

fn div_checked(num: C64, den: C64, at: C64, pole_eps: f64) -> Result<C64, MetricError> {
    let d = den.norm();
    if d == 0.0 || d < pole_eps * num.norm() {
        Err(MetricError::Pole(Pole { at }))
    } else {
        Ok(num / den)
    }
}

/// True when the table is symmetric in the lower pair and matches the
/// warped sparsity pattern: for upper index 0 only `(0,0)` and `(i,i)`;
/// for a fiber upper index `k` only `(k,k)` and `(0,k)/(k,0)`.
pub fn satisfies_warped_pattern(table: &ChristoffelTable, n: usize) -> bool {
    for (&(i, j, k), &v) in table.iter() {
        if table.get(j, i, k) != v {
            return false;
        }
        let allowed = if k == 0 {
            i == j && i < n
        } else {
            (i == k && j == k) || (i == 0 && j == k) || (i == k && j == 0)
        };
        if !allowed && v != C64::new(0.0, 0.0) {
            return false;
        }
    }
    true
}
