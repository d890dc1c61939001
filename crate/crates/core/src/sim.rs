//! Leader, follower plants, observers and pinning control integrated with
//! fixed-step RK4.
//!
//! The stacked state is `[s; x_1; …; x_n; x̂_1; …; x̂_n]`. Controls are
//! recomputed from the current estimates at every stage.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, PinningSet};
use crate::matrix::{ensure_finite, Matrix, Vector};
use crate::synthesis::PlantModel;

/// Scalar input map applied to each control component.
#[derive(Debug, Clone, PartialEq)]
pub enum SectorKind {
    Identity,
    /// `slope·u − ripple·u·|sin u|`.
    SineRipple { slope: f64, ripple: f64 },
    /// Piecewise-linear through `(u_k, v_k)`, continued outside the table
    /// along the rays through the origin and the end points.
    Table { u: Vec<f64>, v: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorNonlinearity {
    pub kind: SectorKind,
    pub m_l: f64,
    pub m_h: f64,
}

impl SectorNonlinearity {
    pub fn new(kind: SectorKind, m_l: f64, m_h: f64) -> Result<Self> {
        if !(m_l >= 0.0) || !(m_h >= m_l) || !m_h.is_finite() {
            return Err(Error::Invariant(format!("sector bounds need 0 <= m_l <= m_h < inf, got [{m_l}, {m_h}]")));
        }
        if let SectorKind::Table { u, v } = &kind {
            if u.len() != v.len() || u.len() < 2 {
                return Err(Error::Dimension("sector table needs at least two matching points".into()));
            }
            if u.windows(2).any(|w| !(w[1] > w[0])) || u.iter().chain(v).any(|x| !x.is_finite()) {
                return Err(Error::Parameter("sector table abscissae must be finite and increasing".into()));
            }
        }
        Ok(Self { kind, m_l, m_h })
    }

    pub fn identity() -> Self {
        Self {
            kind: SectorKind::Identity,
            m_l: 1.0,
            m_h: 1.0,
        }
    }

    /// `1.2u − 0.3u|sin u|`, inside `[0.9, 1.2]`.
    pub fn sine_ripple() -> Self {
        Self {
            kind: SectorKind::SineRipple { slope: 1.2, ripple: 0.3 },
            m_l: 0.9,
            m_h: 1.2,
        }
    }

    pub fn eval_scalar(&self, u: f64) -> f64 {
        match &self.kind {
            SectorKind::Identity => u,
            SectorKind::SineRipple { slope, ripple } => slope * u - ripple * u * libm::fabs(libm::sin(u)),
            SectorKind::Table { u: us, v: vs } => {
                let last = us.len() - 1;
                if u <= us[0] {
                    return ray(us[0], vs[0], u);
                }
                if u >= us[last] {
                    return ray(us[last], vs[last], u);
                }
                let k = us.partition_point(|&x| x <= u).min(last) - 1;
                let w = (u - us[k]) / (us[k + 1] - us[k]);
                vs[k] + w * (vs[k + 1] - vs[k])
            }
        }
    }
}

fn ray(u0: f64, v0: f64, u: f64) -> f64 {
    if u0 == 0.0 {
        v0
    } else {
        v0 / u0 * u
    }
}

pub fn sector_eval(nl: &SectorNonlinearity, u: &Vector) -> Vector {
    u.map(|x| nl.eval_scalar(x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorReport {
    pub passed: bool,
    /// `min(u·sec(u) − m_l u², m_h u² − u·sec(u))` over the grid.
    pub worst_slack: f64,
    pub worst_at: f64,
    /// `ξ(u)² ≤ ((m_h − m_l)/2)² u²` with `ξ = sec(u) − (m_h + m_l)u/2`.
    pub decomposition_passed: bool,
    /// Largest `ξ² − ((m_h − m_l)/2)²u²`.
    pub decomposition_worst: f64,
    pub points: usize,
}

/// Sector inequality on the grid `lo, lo + step, …, ≤ hi`.
pub fn sector_bounds_check(nl: &SectorNonlinearity, lo: f64, hi: f64, step: f64) -> Result<SectorReport> {
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Parameter(format!("empty sector grid [{lo}, {hi}] step {step}")));
    }
    let count = libm::floor((hi - lo) / step + 1e-9) as usize + 1;
    let mid = (nl.m_h + nl.m_l) / 2.0;
    let half = (nl.m_h - nl.m_l) / 2.0;
    let mut report = SectorReport {
        passed: true,
        worst_slack: f64::INFINITY,
        worst_at: lo,
        decomposition_passed: true,
        decomposition_worst: f64::NEG_INFINITY,
        points: count,
    };
    for k in 0..count {
        let u = lo + step * k as f64;
        let v = nl.eval_scalar(u);
        let u2 = u * u;
        let tol = 1e-12 * (1.0 + u2);
        let slack = (u * v - nl.m_l * u2).min(nl.m_h * u2 - u * v);
        if slack < report.worst_slack {
            report.worst_slack = slack;
            report.worst_at = u;
        }
        if slack < -tol {
            report.passed = false;
        }
        let xi = v - mid * u;
        let excess = xi * xi - half * half * u2;
        report.decomposition_worst = report.decomposition_worst.max(excess);
        if excess > tol {
            report.decomposition_passed = false;
        }
    }
    Ok(report)
}

/// State nonlinearity `g(t, x)` entering through `H`.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentNonlinearity {
    Zero,
    /// `g_k = x_k sin(rate·x_k·t)` for even `k`, `x_k cos(rate·x_k·t)` for odd `k`.
    Oscillating { rate: f64 },
    Linear(Matrix),
}

impl AgentNonlinearity {
    pub fn eval(&self, t: f64, x: &Vector) -> Vector {
        match self {
            AgentNonlinearity::Zero => Vector::zeros(x.len()),
            AgentNonlinearity::Oscillating { rate } => Vector::from_fn(x.len(), |k, _| {
                let arg = rate * x[k] * t;
                if k % 2 == 0 {
                    x[k] * libm::sin(arg)
                } else {
                    x[k] * libm::cos(arg)
                }
            }),
            AgentNonlinearity::Linear(m) => m * x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    FullObserver,
    DistributedObserver,
}

/// Sign of the leader-tracking term in the control law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PinningSign {
    /// `u_i = φK Σ a_ij(x̂_i − x̂_j) + φd_iK(x̂_i − s)`.
    #[default]
    Attractive,
    /// `u_i = φK Σ a_ij(x̂_i − x̂_j) − φd_iK(x̂_i − s)`.
    AsPrinted,
}

#[allow(clippy::too_many_arguments)]
pub fn pinning_control(
    graph: &DirectedGraph,
    pinning: &PinningSet,
    k: &Matrix,
    phi: f64,
    sign: PinningSign,
    i: usize,
    xhat: &[Vector],
    s: &Vector,
) -> Result<Vector> {
    let m = s.len();
    if k.ncols() != m || xhat.len() != graph.n() || xhat.iter().any(|v| v.len() != m) {
        return Err(Error::Dimension(format!(
            "K is {}x{}, states have {m} components on {} nodes",
            k.nrows(),
            k.ncols(),
            graph.n()
        )));
    }
    let mut disagreement = Vector::zeros(m);
    for j in 0..graph.n() {
        let a = graph.weight(i, j);
        if a != 0.0 {
            disagreement += (&xhat[i] - &xhat[j]) * a;
        }
    }
    let lead = match sign {
        PinningSign::Attractive => phi * pinning.d(i),
        PinningSign::AsPrinted => -phi * pinning.d(i),
    };
    Ok(k * (disagreement * phi + (&xhat[i] - s) * lead))
}

pub fn leader_rhs(plant: &PlantModel, g: &AgentNonlinearity, t: f64, s: &Vector) -> Vector {
    &plant.a * s + &plant.h * g.eval(t, s)
}

pub fn plant_rhs(
    plant: &PlantModel,
    g: &AgentNonlinearity,
    sector: &SectorNonlinearity,
    t: f64,
    x: &Vector,
    u: &Vector,
) -> Vector {
    &plant.a * x + &plant.h * g.eval(t, x) + &plant.b * sector_eval(sector, u)
}

#[allow(clippy::too_many_arguments)]
pub fn observer_full_rhs(
    plant: &PlantModel,
    g: &AgentNonlinearity,
    sector: &SectorNonlinearity,
    e: &Matrix,
    t: f64,
    xhat: &Vector,
    y: &Vector,
    u: &Vector,
) -> Vector {
    plant_rhs(plant, g, sector, t, xhat, u) + e * (y - &plant.c * xhat)
}

/// Copy of the plant corrected by
/// `μd_iEC(x_i − x̂_i) + μ Σ_j a_ij EC[(x_i − x_j) − (x̂_i − x̂_j)]`.
#[allow(clippy::too_many_arguments)]
pub fn observer_distributed_rhs(
    plant: &PlantModel,
    g: &AgentNonlinearity,
    sector: &SectorNonlinearity,
    e: &Matrix,
    mu: f64,
    graph: &DirectedGraph,
    pinning: &PinningSet,
    t: f64,
    i: usize,
    xhat: &[Vector],
    x: &[Vector],
    u: &Vector,
) -> Vector {
    let ec = e * &plant.c;
    let mut innovation = (&x[i] - &xhat[i]) * pinning.d(i);
    for j in 0..graph.n() {
        let a = graph.weight(i, j);
        if a != 0.0 {
            innovation += ((&x[i] - &x[j]) - (&xhat[i] - &xhat[j])) * a;
        }
    }
    plant_rhs(plant, g, sector, t, &xhat[i], u) + ec * innovation * mu
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub plant: PlantModel,
    pub graph: DirectedGraph,
    pub pinning: PinningSet,
    pub protocol: Protocol,
    pub pinning_sign: PinningSign,
    pub e: Matrix,
    pub k: Matrix,
    pub phi: f64,
    pub mu: f64,
    pub sector: SectorNonlinearity,
    pub g: AgentNonlinearity,
    pub s0: Vector,
    pub x0: Vec<Vector>,
    pub xhat0: Vec<Vector>,
    pub horizon: f64,
    pub step: f64,
    /// Store every `record_every`-th step (the last step is always stored).
    pub record_every: usize,
    pub clamp: bool,
    pub positivity_tol: f64,
    /// States beyond this magnitude count as a blow-up.
    pub divergence_bound: f64,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn steps(&self) -> usize {
        libm::round(self.horizon / self.step) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = (self.plant.m(), self.n());
        if self.pinning.len() != n {
            return Err(Error::Dimension(format!("{} pinning flags for {n} nodes", self.pinning.len())));
        }
        if self.e.shape() != (m, self.plant.q()) {
            return Err(Error::Dimension(format!("E must be {m}x{}", self.plant.q())));
        }
        if self.k.shape() != (self.plant.p(), m) {
            return Err(Error::Dimension(format!("K must be {}x{m}", self.plant.p())));
        }
        ensure_finite(&self.e, "E")?;
        ensure_finite(&self.k, "K")?;
        if let AgentNonlinearity::Linear(g) = &self.g {
            if g.shape() != (m, m) {
                return Err(Error::Dimension(format!("linear g must be {m}x{m}")));
            }
        }
        if self.s0.len() != m || self.x0.len() != n || self.xhat0.len() != n {
            return Err(Error::Dimension("initial states do not match the network".into()));
        }
        for v in core::iter::once(&self.s0).chain(&self.x0).chain(&self.xhat0) {
            if v.len() != m {
                return Err(Error::Dimension(format!("initial state of length {} (expected {m})", v.len())));
            }
            if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::Invariant("initial states must be finite and non-negative".into()));
            }
        }
        if !(self.step > 0.0) || !(self.horizon >= self.step) || !self.horizon.is_finite() {
            return Err(Error::Parameter(format!("need h > 0 and T >= h, got h = {}, T = {}", self.step, self.horizon)));
        }
        if self.record_every == 0 {
            return Err(Error::Parameter("record_every must be at least 1".into()));
        }
        if !(self.phi >= 0.0) || !(self.mu >= 0.0) {
            return Err(Error::Parameter("phi and mu must be non-negative".into()));
        }
        Ok(())
    }

    fn unpack(&self, z: &Vector) -> (Vector, Vec<Vector>, Vec<Vector>) {
        let (m, n) = (self.plant.m(), self.n());
        let s = z.rows(0, m).into_owned();
        let x = (0..n).map(|i| z.rows(m + i * m, m).into_owned()).collect();
        let xh = (0..n).map(|i| z.rows(m + (n + i) * m, m).into_owned()).collect();
        (s, x, xh)
    }

    fn pack(&self, s: &Vector, x: &[Vector], xh: &[Vector]) -> Vector {
        let (m, n) = (self.plant.m(), self.n());
        let mut z = Vector::zeros(m * (2 * n + 1));
        z.rows_mut(0, m).copy_from(s);
        for i in 0..n {
            z.rows_mut(m + i * m, m).copy_from(&x[i]);
            z.rows_mut(m + (n + i) * m, m).copy_from(&xh[i]);
        }
        z
    }

    pub fn controls(&self, s: &Vector, xhat: &[Vector]) -> Result<Vec<Vector>> {
        (0..self.n())
            .map(|i| pinning_control(&self.graph, &self.pinning, &self.k, self.phi, self.pinning_sign, i, xhat, s))
            .collect()
    }

    fn observer_rhs(&self, t: f64, i: usize, x: &[Vector], xh: &[Vector], u: &Vector) -> Vector {
        let p = &self.plant;
        match self.protocol {
            Protocol::FullObserver => observer_full_rhs(p, &self.g, &self.sector, &self.e, t, &xh[i], &(&p.c * &x[i]), u),
            Protocol::DistributedObserver => observer_distributed_rhs(
                p,
                &self.g,
                &self.sector,
                &self.e,
                self.mu,
                &self.graph,
                &self.pinning,
                t,
                i,
                xh,
                x,
                u,
            ),
        }
    }

    /// Time derivative of the stacked state.
    pub fn rhs(&self, t: f64, z: &Vector) -> Result<Vector> {
        let (s, x, xh) = self.unpack(z);
        let u = self.controls(&s, &xh)?;
        let ds = leader_rhs(&self.plant, &self.g, t, &s);
        let dx: Vec<Vector> = (0..self.n())
            .map(|i| plant_rhs(&self.plant, &self.g, &self.sector, t, &x[i], &u[i]))
            .collect();
        let dxh: Vec<Vector> = (0..self.n()).map(|i| self.observer_rhs(t, i, &x, &xh, &u[i])).collect();
        Ok(self.pack(&ds, &dx, &dxh))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    Leader,
    State,
    Estimate,
}

/// A maximal run of steps during which one component stayed below
/// `-positivity_tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositivityViolation {
    pub series: Series,
    /// Follower index (0 for the leader).
    pub agent: usize,
    pub component: usize,
    pub start: f64,
    pub end: f64,
    pub worst_value: f64,
    pub worst_time: f64,
    /// At onset the `Hg` contribution to this component was negative.
    pub g_induced: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClampEvent {
    pub time: f64,
    pub components: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub leader: Vec<Vector>,
    /// `states[k][i]` is `x_i` at `times[k]`.
    pub states: Vec<Vec<Vector>>,
    pub estimates: Vec<Vec<Vector>>,
    pub controls: Vec<Vec<Vector>>,
    pub sector_controls: Vec<Vec<Vector>>,
    pub violations: Vec<PositivityViolation>,
    pub clamps: Vec<ClampEvent>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn record(&mut self, sc: &Scenario, t: f64, z: &Vector) -> Result<()> {
        let (s, x, xh) = sc.unpack(z);
        let u = sc.controls(&s, &xh)?;
        self.sector_controls.push(u.iter().map(|v| sector_eval(&sc.sector, v)).collect());
        self.times.push(t);
        self.leader.push(s);
        self.states.push(x);
        self.estimates.push(xh);
        self.controls.push(u);
        Ok(())
    }
}

struct ViolationTracker {
    open: Vec<Option<usize>>,
}

impl ViolationTracker {
    fn locate(sc: &Scenario, idx: usize) -> (Series, usize, usize) {
        let (m, n) = (sc.plant.m(), sc.n());
        if idx < m {
            (Series::Leader, 0, idx)
        } else if idx < m * (n + 1) {
            (Series::State, (idx - m) / m, (idx - m) % m)
        } else {
            (Series::Estimate, (idx - m * (n + 1)) / m, (idx - m * (n + 1)) % m)
        }
    }

    fn update(&mut self, sc: &Scenario, t: f64, z: &Vector, log: &mut Vec<PositivityViolation>) {
        let m = sc.plant.m();
        for idx in 0..z.len() {
            let v = z[idx];
            let below = v < -sc.positivity_tol;
            match (self.open[idx], below) {
                (None, true) => {
                    let (series, agent, component) = Self::locate(sc, idx);
                    let block = (idx / m) * m;
                    let own = z.rows(block, m).into_owned();
                    let hg = &sc.plant.h * sc.g.eval(t, &own);
                    log.push(PositivityViolation {
                        series,
                        agent,
                        component,
                        start: t,
                        end: t,
                        worst_value: v,
                        worst_time: t,
                        g_induced: hg[component] < 0.0,
                    });
                    self.open[idx] = Some(log.len() - 1);
                }
                (Some(k), true) => {
                    let ev = &mut log[k];
                    ev.end = t;
                    if v < ev.worst_value {
                        ev.worst_value = v;
                        ev.worst_time = t;
                    }
                }
                (Some(_), false) => self.open[idx] = None,
                (None, false) => {}
            }
        }
    }
}

/// Classical RK4 over `[0, T]` with step `h`.
pub fn simulate(sc: &Scenario) -> Result<Trajectory> {
    sc.validate()?;
    let steps = sc.steps();
    let h = sc.step;
    let mut z = sc.pack(&sc.s0, &sc.x0, &sc.xhat0);
    let cap = steps / sc.record_every + 2;
    let mut traj = Trajectory {
        times: Vec::with_capacity(cap),
        leader: Vec::with_capacity(cap),
        states: Vec::with_capacity(cap),
        estimates: Vec::with_capacity(cap),
        controls: Vec::with_capacity(cap),
        sector_controls: Vec::with_capacity(cap),
        violations: Vec::new(),
        clamps: Vec::new(),
    };
    let mut tracker = ViolationTracker { open: vec![None; z.len()] };
    traj.record(sc, 0.0, &z)?;
    let mut last_good = 0.0;
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = sc.rhs(t, &z)?;
        let k2 = sc.rhs(t + h / 2.0, &(&z + &k1 * (h / 2.0)))?;
        let k3 = sc.rhs(t + h / 2.0, &(&z + &k2 * (h / 2.0)))?;
        let k4 = sc.rhs(t + h, &(&z + &k3 * h))?;
        let next = &z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let t_next = (k + 1) as f64 * h;
        if next.iter().any(|v| !v.is_finite() || v.abs() > sc.divergence_bound) {
            return Err(Error::Integration {
                last_time: last_good,
                reason: format!("state left the finite range (bound {:e})", sc.divergence_bound),
            });
        }
        z = next;
        last_good = t_next;
        tracker.update(sc, t_next, &z, &mut traj.violations);
        if sc.clamp {
            let mut count = 0;
            for v in z.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                    count += 1;
                }
            }
            if count > 0 {
                traj.clamps.push(ClampEvent {
                    time: t_next,
                    components: count,
                });
            }
        }
        if (k + 1) % sc.record_every == 0 || k + 1 == steps {
            traj.record(sc, t_next, &z)?;
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    pub max_residual: f64,
    pub worst_time: f64,
    pub worst_agent: usize,
    pub samples: usize,
}

/// Compares `plant_rhs − observer_rhs` at every stored sample against the
/// closed-form estimation-error dynamics evaluated with observer gain `e`.
pub fn error_dynamics_residual_with_gain(traj: &Trajectory, sc: &Scenario, e: &Matrix) -> ResidualReport {
    let p = &sc.plant;
    let ec = e * &p.c;
    let mut report = ResidualReport {
        max_residual: 0.0,
        worst_time: 0.0,
        worst_agent: 0,
        samples: traj.len(),
    };
    for (k, &t) in traj.times.iter().enumerate() {
        let x = &traj.states[k];
        let xh = &traj.estimates[k];
        let errs: Vec<Vector> = x.iter().zip(xh).map(|(a, b)| a - b).collect();
        for i in 0..sc.n() {
            let u = &traj.controls[k][i];
            let lhs = plant_rhs(p, &sc.g, &sc.sector, t, &x[i], u) - sc.observer_rhs(t, i, x, xh, u);
            let g_tilde = sc.g.eval(t, &x[i]) - sc.g.eval(t, &xh[i]);
            let expected = match sc.protocol {
                Protocol::FullObserver => (&p.a - &ec) * &errs[i] + &p.h * g_tilde,
                Protocol::DistributedObserver => {
                    let mut coupling = Vector::zeros(p.m());
                    for j in 0..sc.n() {
                        let a = sc.graph.weight(i, j);
                        if a != 0.0 {
                            coupling += (&errs[j] - &errs[i]) * a;
                        }
                    }
                    &p.a * &errs[i] + &p.h * g_tilde - &ec * &errs[i] * (sc.mu * sc.pinning.d(i))
                        + &ec * coupling * sc.mu
                }
            };
            let r = (lhs - expected).amax();
            if r > report.max_residual {
                report.max_residual = r;
                report.worst_time = t;
                report.worst_agent = i;
            }
        }
    }
    report
}

pub fn error_dynamics_residual(traj: &Trajectory, sc: &Scenario) -> ResidualReport {
    error_dynamics_residual_with_gain(traj, sc, &sc.e)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// `max_i ‖x_i − x̂_i‖`.
    pub estimation: Vec<f64>,
    /// `max_i ‖x_i − s‖`.
    pub consensus: Vec<f64>,
    /// `max_{i,j} ‖x_i − x_j‖`.
    pub pairwise: Vec<f64>,
    pub violation_count: usize,
    /// Most negative value over all violation episodes (0 if none).
    pub worst_violation: f64,
}

pub fn metrics(traj: &Trajectory) -> Metrics {
    let mut out = Metrics {
        estimation: Vec::with_capacity(traj.len()),
        consensus: Vec::with_capacity(traj.len()),
        pairwise: Vec::with_capacity(traj.len()),
        violation_count: traj.violations.len(),
        worst_violation: traj.violations.iter().map(|v| v.worst_value).fold(0.0, f64::min),
    };
    for k in 0..traj.len() {
        let x = &traj.states[k];
        let xh = &traj.estimates[k];
        let s = &traj.leader[k];
        out.estimation
            .push(x.iter().zip(xh).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
        out.consensus.push(x.iter().map(|a| (a - s).norm()).fold(0.0, f64::max));
        let mut pw = 0.0f64;
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                pw = pw.max((&x[i] - &x[j]).norm());
            }
        }
        out.pairwise.push(pw);
    }
    out
}
