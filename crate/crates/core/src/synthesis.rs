//! Observer and feedback gain synthesis.
//!
//! The search alternates between an observer-gain step (projected
//! subgradient on the largest LMI eigenvalue, which is convex in `E`) and a
//! Lyapunov-matrix step over a one-parameter or diagonal family of `Π`.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result, SynthesisStep};
use crate::graph::Network;
use crate::matrix::{
    self, default_omega_max, ensure_finite, ensure_square, is_hurwitz, is_metzler, min_singular_sweep,
    solve_observer_riccati, spectral_norm, Matrix, SIGN_TOL, SWEEP_COARSE_POINTS, SWEEP_REFINE_TOL,
};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a: Matrix,
    pub h: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    /// Lipschitz constant of `g`.
    pub beta: f64,
    pub m_l: f64,
    pub m_h: f64,
}

impl PlantModel {
    pub fn new(a: Matrix, h: Matrix, b: Matrix, c: Matrix, beta: f64, m_l: f64, m_h: f64) -> Result<Self> {
        let m = ensure_square(&a, "A")?;
        if h.shape() != (m, m) {
            return Err(Error::Dimension(format!("H is {}x{}, expected {m}x{m}", h.nrows(), h.ncols())));
        }
        if b.nrows() != m || b.ncols() == 0 {
            return Err(Error::Dimension(format!("B is {}x{}, expected {m}xp", b.nrows(), b.ncols())));
        }
        if c.ncols() != m || c.nrows() == 0 {
            return Err(Error::Dimension(format!("C is {}x{}, expected qx{m}", c.nrows(), c.ncols())));
        }
        for (mat, what) in [(&a, "A"), (&h, "H"), (&b, "B"), (&c, "C")] {
            ensure_finite(mat, what)?;
        }
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::Parameter(format!("beta must be finite and non-negative, got {beta}")));
        }
        if !m_l.is_finite() || !m_h.is_finite() || m_l < 0.0 || m_l > m_h {
            return Err(Error::Invariant(format!("sector bounds need 0 <= m_l <= m_h < inf, got [{m_l}, {m_h}]")));
        }
        if !is_metzler(&a, 0.0)? {
            return Err(Error::Invariant("A is not Metzler".into()));
        }
        Ok(Self { a, h, b, c, beta, m_l, m_h })
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    pub fn q(&self) -> usize {
        self.c.nrows()
    }

    /// `β‖H‖`.
    pub fn kappa(&self) -> f64 {
        self.beta * spectral_norm(&self.h)
    }

    pub fn m_bar(&self) -> f64 {
        self.m_h + self.m_l
    }

    pub fn observability_matrix(&self) -> Matrix {
        let (m, q) = (self.m(), self.q());
        let mut obs = Matrix::zeros(q * m, m);
        let mut block = self.c.clone();
        for k in 0..m {
            obs.view_mut((k * q, 0), (q, m)).copy_from(&block);
            block = &block * &self.a;
        }
        obs
    }

    pub fn is_observable(&self) -> bool {
        matrix::rank(&self.observability_matrix(), 1e-10) == self.m()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Local full-order observers.
    Theorem1,
    /// Distributed pinning observers.
    Theorem2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PiFamily {
    ScaledIdentity,
    Diagonal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Tried in order before the fallback scan.
    pub initial_observer_gains: Vec<Matrix>,
    pub pi_init: f64,
    pub pi_min: f64,
    pub pi_max: f64,
    pub pi_family: PiFamily,
    pub pi_grid: usize,
    pub e_iterations: usize,
    pub e_step: f64,
    pub max_rounds: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            initial_observer_gains: Vec::new(),
            pi_init: 0.5,
            pi_min: 0.05,
            pi_max: 5.0,
            pi_family: PiFamily::ScaledIdentity,
            pi_grid: 64,
            e_iterations: 2000,
            e_step: 0.5,
            max_rounds: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    pub eta: f64,
    pub phi: f64,
    pub mu: f64,
    pub delta: f64,
    pub s_bar: f64,
    pub search: SearchConfig,
}

impl SynthesisConfig {
    pub fn new(eta: f64, phi: f64, mu: f64, delta: f64) -> Result<Self> {
        let cfg = Self {
            eta,
            phi,
            mu,
            delta,
            s_bar: 0.0,
            search: SearchConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (v, name) in [(self.eta, "eta"), (self.phi, "phi"), (self.mu, "mu"), (self.delta, "delta")] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.s_bar >= 0.0) || !self.s_bar.is_finite() {
            return Err(Error::Parameter(format!("s_bar must be non-negative, got {}", self.s_bar)));
        }
        let s = &self.search;
        if !(s.pi_min > 0.0) || !(s.pi_max >= s.pi_min) || !s.pi_max.is_finite() {
            return Err(Error::Parameter(format!("need 0 < pi_min <= pi_max, got [{}, {}]", s.pi_min, s.pi_max)));
        }
        if !(s.pi_init > 0.0) || !s.pi_init.is_finite() {
            return Err(Error::Parameter(format!("pi_init must be positive, got {}", s.pi_init)));
        }
        if !(s.e_step > 0.0) || s.e_iterations == 0 || s.max_rounds == 0 || s.pi_grid < 2 {
            return Err(Error::Parameter(
                "search needs e_step > 0, e_iterations >= 1, max_rounds >= 1, pi_grid >= 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub name: &'static str,
    pub passed: bool,
    /// Most adverse entry: the smallest off-diagonal for Metzler tests, the
    /// largest entry for non-positivity tests, `α` for the LMI test.
    pub worst: f64,
    /// Informational certificates do not gate success.
    pub normative: bool,
}

pub fn all_normative_pass(certs: &[Certificate]) -> bool {
    certs.iter().filter(|c| c.normative).all(|c| c.passed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub variant: Variant,
    pub e: Matrix,
    pub p: Matrix,
    pub sigma: Matrix,
    pub pi: Matrix,
    pub k: Matrix,
    pub alpha: f64,
    pub gamma: Vec<f64>,
    pub certificates: Vec<Certificate>,
    pub seed: u64,
    pub rounds: usize,
    pub iterations: usize,
}

impl GainSet {
    pub fn succeeded(&self) -> bool {
        all_normative_pass(&self.certificates)
    }
}

/// Accepted initial observer gain.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverInit {
    pub e: Matrix,
    /// `min_ω σ_min(A − EC − jωI) − β‖H‖`.
    pub margin: f64,
    /// Index into the candidate list, `None` for the fallback scan.
    pub candidate: Option<usize>,
}

fn screen_observer_gain(plant: &PlantModel, e: &Matrix) -> core::result::Result<f64, String> {
    if e.shape() != (plant.m(), plant.q()) {
        return Err(format!("shape {}x{} (expected {}x{})", e.nrows(), e.ncols(), plant.m(), plant.q()));
    }
    if ensure_finite(e, "E").is_err() {
        return Err("non-finite entries".into());
    }
    let ac = &plant.a - e * &plant.c;
    if !is_metzler(&ac, SIGN_TOL).map_err(|err| format!("{err}"))? {
        return Err("A - EC is not Metzler".into());
    }
    if !is_hurwitz(&ac).map_err(|err| format!("{err}"))? {
        return Err("A - EC is not stable".into());
    }
    let kappa = plant.kappa();
    let sweep = min_singular_sweep(&ac, default_omega_max(&ac, kappa), SWEEP_COARSE_POINTS, SWEEP_REFINE_TOL)
        .map_err(|err| format!("{err}"))?;
    let margin = sweep.min_sigma - kappa;
    if margin <= 0.0 {
        return Err(format!("frequency margin {:.4} does not exceed beta*|H| = {kappa:.4}", sweep.min_sigma));
    }
    Ok(margin)
}

/// First observer gain making `A − EC` Metzler, stable and robust against the
/// Lipschitz term. After the user candidates, gains `E = t·C⁺` shifting the
/// spectrum left by `t = 1, 2, 4, …, 4096` are tried.
pub fn observer_init(plant: &PlantModel, candidates: &[Matrix]) -> Result<ObserverInit> {
    if !plant.is_observable() {
        return Err(Error::infeasible(SynthesisStep::ObserverInit, "(A, C) is not observable"));
    }
    let mut failures = Vec::new();
    for (idx, e) in candidates.iter().enumerate() {
        match screen_observer_gain(plant, e) {
            Ok(margin) => {
                return Ok(ObserverInit {
                    e: e.clone(),
                    margin,
                    candidate: Some(idx),
                })
            }
            Err(why) => failures.push(format!("candidate {}: {why}", idx + 1)),
        }
    }
    let c_pinv = matrix::pseudo_inverse(&plant.c);
    let mut scan_failures = 0usize;
    for k in 0..13 {
        let t = (1u32 << k) as f64;
        let e = &c_pinv * t;
        match screen_observer_gain(plant, &e) {
            Ok(margin) => {
                return Ok(ObserverInit {
                    e,
                    margin,
                    candidate: None,
                })
            }
            Err(_) => scan_failures += 1,
        }
    }
    failures.push(format!("fallback scan: all {scan_failures} shifts rejected"));
    Err(Error::infeasible(SynthesisStep::ObserverInit, failures.join("; ")))
}

/// `(A−EC)ᵀP + P(A−EC) + (β‖H‖)²PP + I`.
pub fn compute_sigma(plant: &PlantModel, e: &Matrix, p: &Matrix) -> Result<Matrix> {
    let m = plant.m();
    if p.shape() != (m, m) || e.shape() != (m, plant.q()) {
        return Err(Error::Dimension("P or E does not match the plant".into()));
    }
    let asym = (p - p.transpose()).abs().max();
    if asym > 1e-9 * (1.0 + p.abs().max()) || !matrix::is_positive_definite(p, 0.0)? {
        return Err(Error::Parameter("P must be symmetric positive definite".into()));
    }
    let ac = &plant.a - e * &plant.c;
    let k2 = plant.kappa() * plant.kappa();
    Ok(ac.transpose() * p + p * &ac + p * p * k2 + Matrix::identity(m, m))
}

/// `φ(1 + pin)·a·m̄·η − λ/f − η²(m_h − m_l)²/(4f)`.
pub fn gamma_formula(
    cfg: &SynthesisConfig,
    plant: &PlantModel,
    connectivity: f64,
    lambda: f64,
    f: f64,
    pin: f64,
) -> Result<f64> {
    if !(f > 0.0) {
        return Err(Error::Structure(format!("left Perron component must be positive, got {f}")));
    }
    let spread = plant.m_h - plant.m_l;
    Ok(cfg.phi * (1.0 + pin) * connectivity * plant.m_bar() * cfg.eta
        - lambda / f
        - cfg.eta * cfg.eta * spread * spread / (4.0 * f))
}

/// `γ_i` for every follower. The pinning factor is `s_bar` times the
/// pinning indicator: any pinned node for `Variant::Theorem1`, `d_i` for `Variant::Theorem2`.
pub fn gamma_coefficients(cfg: &SynthesisConfig, plant: &PlantModel, net: &Network, variant: Variant) -> Result<Vec<f64>> {
    let sd = &net.spectral;
    let any_pinned = if net.pinning.count() > 0 { 1.0 } else { 0.0 };
    (0..net.n())
        .map(|i| {
            let indicator = match variant {
                Variant::Theorem1 => any_pinned,
                Variant::Theorem2 => net.pinning.d(i),
            };
            gamma_formula(cfg, plant, sd.connectivity, sd.gamma_lap_eigs[i], sd.f[i], cfg.s_bar * indicator)
        })
        .collect()
}

/// `[[TL, (W+H)Π], [*, Sym((A−W)Π)]]` with
/// `TL = (A+H)Π + Π(A+H)ᵀ − γBBᵀ + Π(Σ/f)Π`, symmetrized.
#[allow(clippy::too_many_arguments)]
pub fn lmi_block(
    a: &Matrix,
    h: &Matrix,
    b: &Matrix,
    w: &Matrix,
    pi: &Matrix,
    gamma: f64,
    f: f64,
    sigma: &Matrix,
) -> Result<Matrix> {
    let m = ensure_square(a, "A")?;
    for (mat, what) in [(h, "H"), (w, "EC"), (pi, "Pi"), (sigma, "Sigma")] {
        if mat.shape() != (m, m) {
            return Err(Error::Dimension(format!("{what} is {}x{}, expected {m}x{m}", mat.nrows(), mat.ncols())));
        }
    }
    if b.nrows() != m {
        return Err(Error::Dimension(format!("B has {} rows, expected {m}", b.nrows())));
    }
    let ah = a + h;
    let tl = &ah * pi + pi * ah.transpose() - b * b.transpose() * gamma + pi * (sigma / f) * pi;
    let tr = (w + h) * pi;
    let br_half = (a - w) * pi;
    let br = &br_half + br_half.transpose();
    let mut out = Matrix::zeros(2 * m, 2 * m);
    out.view_mut((0, 0), (m, m)).copy_from(&tl);
    out.view_mut((0, m), (m, m)).copy_from(&tr);
    out.view_mut((m, 0), (m, m)).copy_from(&tr.transpose());
    out.view_mut((m, m), (m, m)).copy_from(&br);
    Ok(matrix::symmetrize(&out))
}

/// Everything the LMI depends on besides `E` and `Π`.
#[derive(Debug, Clone)]
pub struct LmiProblem<'a> {
    pub plant: &'a PlantModel,
    pub net: &'a Network,
    pub cfg: &'a SynthesisConfig,
    pub variant: Variant,
    pub sigma: Matrix,
    pub gamma: Vec<f64>,
}

impl<'a> LmiProblem<'a> {
    pub fn new(
        plant: &'a PlantModel,
        net: &'a Network,
        cfg: &'a SynthesisConfig,
        variant: Variant,
        sigma: Matrix,
    ) -> Result<Self> {
        if sigma.shape() != (plant.m(), plant.m()) {
            return Err(Error::Dimension("Sigma does not match the plant".into()));
        }
        let gamma = gamma_coefficients(cfg, plant, net, variant)?;
        Ok(Self {
            plant,
            net,
            cfg,
            variant,
            sigma,
            gamma,
        })
    }

    /// Scale of `EC` in node `i`'s LMI.
    pub fn coupling(&self, i: usize) -> f64 {
        match self.variant {
            Variant::Theorem1 => 1.0,
            Variant::Theorem2 => self.cfg.mu * self.net.pinning.d(i),
        }
    }

    fn check_e(&self, e: &Matrix) -> Result<()> {
        if e.shape() != (self.plant.m(), self.plant.q()) {
            return Err(Error::Dimension(format!(
                "E is {}x{}, expected {}x{}",
                e.nrows(),
                e.ncols(),
                self.plant.m(),
                self.plant.q()
            )));
        }
        Ok(())
    }

    pub fn block(&self, i: usize, e: &Matrix, pi: &Matrix) -> Result<Matrix> {
        self.check_e(e)?;
        if i >= self.net.n() {
            return Err(Error::Dimension(format!("node {} outside {} nodes", i + 1, self.net.n())));
        }
        let w = e * &self.plant.c * self.coupling(i);
        lmi_block(
            &self.plant.a,
            &self.plant.h,
            &self.plant.b,
            &w,
            pi,
            self.gamma[i],
            self.net.spectral.f[i],
            &self.sigma,
        )
    }

    pub fn alpha(&self, e: &Matrix, pi: &Matrix) -> Result<f64> {
        let mut alpha = f64::NEG_INFINITY;
        for i in 0..self.net.n() {
            alpha = alpha.max(matrix::max_eig_symmetric(&self.block(i, e, pi)?)?);
        }
        Ok(alpha)
    }

    /// `α` and a subgradient with respect to `E`, taken from the top
    /// eigenvector `v = [v₁; v₂]` of the maximizing block:
    /// `c_i·2(v₁ − v₂)(Πv₂)ᵀCᵀ`.
    pub fn alpha_and_subgradient(&self, e: &Matrix, pi: &Matrix) -> Result<(f64, Matrix)> {
        let m = self.plant.m();
        let mut best: Option<(f64, usize, matrix::Vector)> = None;
        for i in 0..self.net.n() {
            let (val, vec) = matrix::top_eigenpair(&self.block(i, e, pi)?)?;
            if best.as_ref().map_or(true, |(b, _, _)| val > *b) {
                best = Some((val, i, vec));
            }
        }
        let (alpha, i, v) = best.ok_or_else(|| Error::Degenerate("network has no nodes".into()))?;
        let v1 = v.rows(0, m).into_owned();
        let v2 = v.rows(m, m).into_owned();
        let gw = (v1 - &v2) * (pi * v2).transpose() * (2.0 * self.coupling(i));
        Ok((alpha, gw * self.plant.c.transpose()))
    }

    /// Entrywise bounds `lo ≤ EC ≤ hi` equivalent to the observer sign
    /// conditions for this variant.
    pub fn observer_box(&self) -> (Matrix, Matrix) {
        let m = self.plant.m();
        let lo = Matrix::zeros(m, m);
        let scale = match self.variant {
            Variant::Theorem1 => 1.0,
            Variant::Theorem2 => {
                let worst = (0..self.net.n())
                    .map(|i| self.net.in_degree(i) + self.net.pinning.d(i))
                    .fold(0.0, f64::max);
                self.cfg.mu * worst
            }
        };
        let hi = Matrix::from_fn(m, m, |r, c| if r == c { f64::INFINITY } else { self.plant.a[(r, c)] / scale });
        (lo, hi)
    }
}

pub fn assemble_lmi(problem: &LmiProblem<'_>, i: usize, e: &Matrix, pi: &Matrix) -> Result<Matrix> {
    problem.block(i, e, pi)
}

pub fn lmi_alpha(problem: &LmiProblem<'_>, e: &Matrix, pi: &Matrix) -> Result<f64> {
    problem.alpha(e, pi)
}

fn metzler_cert(name: &'static str, m: &Matrix, slack: Option<&Matrix>, normative: bool) -> Certificate {
    let n = m.nrows();
    let mut worst = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let s = slack.map_or(0.0, |s| s[(i, j)]);
                worst = worst.min(m[(i, j)] + s);
            }
        }
    }
    if n < 2 {
        worst = 0.0;
    }
    Certificate {
        name,
        passed: worst >= -SIGN_TOL,
        worst,
        normative,
    }
}

fn nonpositive_cert(name: &'static str, m: &Matrix, slack: Option<&Matrix>, normative: bool) -> Certificate {
    let worst = match slack {
        Some(s) => (m - s).max(),
        None => m.max(),
    };
    Certificate {
        name,
        passed: worst <= SIGN_TOL,
        worst,
        normative,
    }
}

/// Positivity side conditions for gains `(E, Π)`.
///
/// `precision` is the half-width of the rounding interval of each printed
/// entry of `E` (0 for exact gains); every `E`-dependent sign test is relaxed
/// by the largest change that rounding can cause in the tested entry.
pub fn positivity_check(problem: &LmiProblem<'_>, e: &Matrix, pi: &Matrix, precision: f64) -> Result<Vec<Certificate>> {
    problem.check_e(e)?;
    let plant = problem.plant;
    let net = problem.net;
    let cfg = problem.cfg;
    let m = plant.m();
    let n = net.n();
    if pi.shape() != (m, m) {
        return Err(Error::Dimension("Pi does not match the plant".into()));
    }
    let v = pi
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Parameter("Pi is singular".into()))?;
    let bbt = &plant.b * plant.b.transpose();
    let feedback = match problem.variant {
        Variant::Theorem1 => &bbt * &v,
        Variant::Theorem2 => &v * &bbt * &v,
    };
    let ec = e * &plant.c;
    let col_weight = Matrix::from_fn(m, m, |_, b| (0..plant.q()).map(|k| plant.c[(k, b)].abs()).sum::<f64>());
    let slack = col_weight * precision.max(0.0);

    let mut certs = Vec::new();
    let coef = cfg.phi * plant.m_bar() / 2.0 * cfg.eta;
    let mut pinned_worst = f64::INFINITY;
    for i in 0..n {
        let weight = net.in_degree(i) - net.pinning.d(i);
        let cert = metzler_cert("", &(&plant.a - &feedback * (coef * weight)), None, true);
        pinned_worst = pinned_worst.min(cert.worst);
    }
    certs.push(Certificate {
        name: "pinned_feedback_metzler",
        passed: pinned_worst >= -SIGN_TOL,
        worst: pinned_worst,
        normative: true,
    });

    match problem.variant {
        Variant::Theorem1 => {
            certs.push(metzler_cert("observer_metzler", &(&plant.a - &ec), Some(&slack), true));
            certs.push(nonpositive_cert("feedback_nonpositive", &(-&feedback), None, true));
            certs.push(nonpositive_cert("observer_injection_nonpositive", &(-&ec), Some(&slack), true));
        }
        Variant::Theorem2 => {
            let lpd = &net.spectral.laplacian + net.pinning.matrix();
            let eye = Matrix::identity(n, n);
            let stacked = eye.kronecker(&plant.a) - lpd.kronecker(&ec) * cfg.mu;
            let stacked_slack = lpd.abs().kronecker(&slack) * cfg.mu;
            certs.push(metzler_cert("stacked_observer_metzler", &stacked, Some(&stacked_slack), true));
            certs.push(nonpositive_cert("feedback_nonpositive", &(-&feedback), None, true));
            certs.push(nonpositive_cert("observer_injection_nonpositive", &(-&ec), Some(&slack), true));
            let literal = -(lpd.kronecker(&ec) * cfg.mu);
            certs.push(nonpositive_cert("stacked_injection_nonpositive", &literal, Some(&stacked_slack), false));
        }
    }
    Ok(certs)
}

pub fn feedback_gain(pi: &Matrix, eta: f64, b: &Matrix) -> Matrix {
    -(b.transpose() * pi) * eta
}

/// Euclidean projection onto `{E : lo ≤ EC ≤ hi, E_k = E0_k for k ∉ mask}`
/// by Dykstra's alternating projections over the half-spaces.
fn project_observer_set(
    e: &Matrix,
    c: &Matrix,
    lo: &Matrix,
    hi: &Matrix,
    mask: Option<&Matrix>,
) -> Option<Matrix> {
    let (m, q) = e.shape();
    // Each half-space is sign·(row_a(E)·col_b(C)) ≤ bound.
    let mut planes: Vec<(usize, usize, f64, f64)> = Vec::new();
    for a in 0..m {
        for b in 0..m {
            if lo[(a, b)].is_finite() {
                planes.push((a, b, -1.0, -lo[(a, b)]));
            }
            if hi[(a, b)].is_finite() {
                planes.push((a, b, 1.0, hi[(a, b)]));
            }
        }
    }
    let free = |a: usize, k: usize| mask.map_or(true, |mk| mk[(a, k)] != 0.0);
    let violation = |x: &Matrix, &(a, b, sgn, bound): &(usize, usize, f64, f64)| {
        let w: f64 = (0..q).map(|k| x[(a, k)] * c[(k, b)]).sum();
        sgn * w - bound
    };
    let mut x = e.clone();
    let mut incr: Vec<Vec<f64>> = vec![vec![0.0; q]; planes.len()];
    for _ in 0..5000 {
        let mut moved = 0.0f64;
        for (pidx, plane) in planes.iter().enumerate() {
            let (a, b, sgn, _) = *plane;
            // y = x + previous increment, then project y.
            let mut y: Vec<f64> = (0..q).map(|k| x[(a, k)] + incr[pidx][k]).collect();
            let g: Vec<f64> = (0..q).map(|k| if free(a, k) { sgn * c[(k, b)] } else { 0.0 }).collect();
            let gg: f64 = g.iter().map(|v| v * v).sum();
            let mut yx = x.clone();
            for k in 0..q {
                yx[(a, k)] = y[k];
            }
            let viol = violation(&yx, plane);
            if viol > 0.0 {
                if gg == 0.0 {
                    return None;
                }
                for k in 0..q {
                    y[k] -= viol / gg * g[k];
                }
            }
            for k in 0..q {
                let before = x[(a, k)];
                incr[pidx][k] = before + incr[pidx][k] - y[k];
                moved = moved.max((y[k] - before).abs());
                x[(a, k)] = y[k];
            }
        }
        if moved < 1e-14 {
            break;
        }
    }
    let worst = planes.iter().map(|p| violation(&x, p)).fold(0.0, f64::max);
    (worst <= 1e-10).then_some(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EStepResult {
    pub e: Matrix,
    pub alpha: f64,
    /// Best `α` after each iteration.
    pub history: Vec<f64>,
}

/// Projected subgradient descent on `α(E)` with `Π` fixed. The step is
/// `e_step/√(k+1)` along the normalized subgradient; the best iterate is
/// returned. `mask` (same shape as `E`, nonzero = free) freezes entries.
pub fn minimize_alpha_over_e(
    problem: &LmiProblem<'_>,
    pi: &Matrix,
    e_start: &Matrix,
    mask: Option<&Matrix>,
) -> Result<EStepResult> {
    problem.check_e(e_start)?;
    let search = &problem.cfg.search;
    let (lo, hi) = problem.observer_box();
    let c = &problem.plant.c;
    let mut e = project_observer_set(e_start, c, &lo, &hi, mask).ok_or_else(|| {
        Error::infeasible(
            SynthesisStep::ObserverGainSearch,
            "no observer gain satisfies the sign conditions from this start",
        )
    })?;
    let mut best_e = e.clone();
    let mut best_alpha = f64::INFINITY;
    let mut history = Vec::with_capacity(search.e_iterations);
    for k in 0..search.e_iterations {
        let (alpha, mut g) = problem.alpha_and_subgradient(&e, pi)?;
        if alpha < best_alpha {
            best_alpha = alpha;
            best_e = e.clone();
        }
        history.push(best_alpha);
        if let Some(mk) = mask {
            g.component_mul_assign(&mk.map(|v| if v != 0.0 { 1.0 } else { 0.0 }));
        }
        let norm = g.norm();
        if norm == 0.0 {
            break;
        }
        let step = search.e_step / libm::sqrt((k + 1) as f64);
        let trial = &e - g * (step / norm);
        match project_observer_set(&trial, c, &lo, &hi, mask) {
            Some(next) => e = next,
            None => break,
        }
    }
    Ok(EStepResult {
        e: best_e,
        alpha: best_alpha,
        history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiStepResult {
    pub pi: Matrix,
    pub alpha: f64,
    pub evaluations: usize,
}

fn pi_objective(problem: &LmiProblem<'_>, e: &Matrix, pi: &Matrix, evals: &mut usize) -> Result<f64> {
    *evals += 1;
    let certs = positivity_check(problem, e, pi, 0.0)?;
    if !all_normative_pass(&certs) {
        return Ok(f64::INFINITY);
    }
    problem.alpha(e, pi)
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Golden-section search on `[lo, hi]` in log scale, never returning a point
/// worse than the best one it evaluated.
fn golden_log<F: FnMut(f64) -> Result<f64>>(lo: f64, hi: f64, iters: usize, mut f: F) -> Result<(f64, f64)> {
    let (mut a, mut b) = (libm::log(lo), libm::log(hi));
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = f(libm::exp(x1))?;
    let mut f2 = f(libm::exp(x2))?;
    let mut best = if f1 <= f2 { (libm::exp(x1), f1) } else { (libm::exp(x2), f2) };
    for _ in 0..iters {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = f(libm::exp(x1))?;
            if f1 < best.1 {
                best = (libm::exp(x1), f1);
            }
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = f(libm::exp(x2))?;
            if f2 < best.1 {
                best = (libm::exp(x2), f2);
            }
        }
    }
    Ok(best)
}

/// Minimizes `α` over `Π` in the configured family subject to the
/// positivity conditions: a log-spaced grid on `[π_min, π_max]` refined by
/// golden section, followed for the diagonal family by cyclic coordinate
/// searches.
pub fn minimize_alpha_over_pi(problem: &LmiProblem<'_>, e: &Matrix, family: PiFamily) -> Result<PiStepResult> {
    problem.check_e(e)?;
    let s = &problem.cfg.search;
    let m = problem.plant.m();
    let mut evals = 0usize;
    let none_feasible = || {
        Error::infeasible(
            SynthesisStep::LyapunovGainSearch,
            format!("no Pi in [{}, {}] satisfies the positivity conditions", s.pi_min, s.pi_max),
        )
    };
    let scaled = |p: f64| Matrix::identity(m, m) * p;

    if s.pi_min == s.pi_max {
        let pi = scaled(s.pi_min);
        let alpha = pi_objective(problem, e, &pi, &mut evals)?;
        if !alpha.is_finite() {
            return Err(none_feasible());
        }
        return Ok(PiStepResult { pi, alpha, evaluations: evals });
    }

    let ratio = libm::log(s.pi_max / s.pi_min);
    let grid: Vec<f64> = (0..s.pi_grid)
        .map(|k| s.pi_min * libm::exp(ratio * k as f64 / (s.pi_grid - 1) as f64))
        .collect();
    let mut values = Vec::with_capacity(grid.len());
    for &p in &grid {
        values.push(pi_objective(problem, e, &scaled(p), &mut evals)?);
    }
    let (k_best, &v_best) = values
        .iter()
        .enumerate()
        .fold((0, &f64::INFINITY), |acc, (k, v)| if *v < *acc.1 { (k, v) } else { acc });
    if !v_best.is_finite() {
        return Err(none_feasible());
    }
    let lo = grid[k_best.saturating_sub(1)];
    let hi = grid[(k_best + 1).min(grid.len() - 1)];
    let (mut p_best, mut a_best) = (grid[k_best], v_best);
    let (p, a) = golden_log(lo, hi, 40, |p| pi_objective(problem, e, &scaled(p), &mut evals))?;
    if a < a_best {
        p_best = p;
        a_best = a;
    }
    let mut diag = vec![p_best; m];

    if family == PiFamily::Diagonal {
        for _sweep in 0..3 {
            for axis in 0..m {
                let mut probe = diag.clone();
                let (p, a) = golden_log(s.pi_min, s.pi_max, 60, |p| {
                    probe[axis] = p;
                    pi_objective(problem, e, &Matrix::from_diagonal(&matrix::Vector::from_vec(probe.clone())), &mut evals)
                })?;
                if a < a_best {
                    a_best = a;
                    diag[axis] = p;
                }
            }
        }
    }
    Ok(PiStepResult {
        pi: Matrix::from_diagonal(&matrix::Vector::from_vec(diag)),
        alpha: a_best,
        evaluations: evals,
    })
}

/// `α`, `γ` and certificates of given gains.
#[derive(Debug, Clone, PartialEq)]
pub struct GainEvaluation {
    pub alpha: f64,
    pub gamma: Vec<f64>,
    pub certificates: Vec<Certificate>,
}

pub fn evaluate_gains(problem: &LmiProblem<'_>, e: &Matrix, pi: &Matrix, precision: f64) -> Result<GainEvaluation> {
    if !matrix::is_positive_definite(pi, 0.0)? {
        return Err(Error::Parameter("Pi must be positive definite".into()));
    }
    let alpha = problem.alpha(e, pi)?;
    let mut certificates = positivity_check(problem, e, pi, precision)?;
    certificates.push(Certificate {
        name: "lmi_alpha_nonpositive",
        passed: alpha <= 0.0,
        worst: alpha,
        normative: true,
    });
    Ok(GainEvaluation {
        alpha,
        gamma: problem.gamma.clone(),
        certificates,
    })
}

/// Observer initialization, Riccati solve, then alternating `E`/`Π`
/// searches until `α ≤ 0` with every normative certificate passing.
pub fn run_algorithm(plant: &PlantModel, net: &Network, cfg: &SynthesisConfig, variant: Variant) -> Result<GainSet> {
    cfg.validate()?;
    let init = observer_init(plant, &cfg.search.initial_observer_gains)?;
    let p = solve_observer_riccati(&plant.a, &init.e, &plant.c, plant.kappa(), cfg.delta)?;
    let sigma = compute_sigma(plant, &init.e, &p)?;
    let problem = LmiProblem::new(plant, net, cfg, variant, sigma.clone())?;
    let m = plant.m();

    let mut e = init.e.clone();
    let mut pi = Matrix::identity(m, m) * cfg.search.pi_init;
    let mut iterations = 0usize;
    let mut best: Option<GainSet> = None;

    let assemble = |e: &Matrix, pi: &Matrix, rounds: usize, iterations: usize| -> Result<GainSet> {
        let eval = evaluate_gains(&problem, e, pi, 0.0)?;
        Ok(GainSet {
            variant,
            e: e.clone(),
            p: p.clone(),
            sigma: sigma.clone(),
            pi: pi.clone(),
            k: feedback_gain(pi, cfg.eta, &plant.b),
            alpha: eval.alpha,
            gamma: eval.gamma,
            certificates: eval.certificates,
            seed: cfg.search.seed,
            rounds,
            iterations,
        })
    };
    let better = |cand: &GainSet, best: &Option<GainSet>| match best {
        None => true,
        Some(b) => {
            let key = |g: &GainSet| (!positivity_ok(&g.certificates), g.alpha);
            let (kc, kb) = (key(cand), key(b));
            kc.0 < kb.0 || (kc.0 == kb.0 && kc.1 < kb.1)
        }
    };

    for round in 1..=cfg.search.max_rounds {
        let step = match minimize_alpha_over_e(&problem, &pi, &e, None) {
            Ok(step) => step,
            Err(err) => return Err(attach_best(err, best)),
        };
        iterations += step.history.len();
        e = step.e;
        let cand = assemble(&e, &pi, round, iterations)?;
        if cand.succeeded() {
            return Ok(cand);
        }
        if better(&cand, &best) {
            best = Some(cand);
        }

        let pstep = match minimize_alpha_over_pi(&problem, &e, cfg.search.pi_family) {
            Ok(step) => step,
            Err(err) => return Err(attach_best(err, best)),
        };
        iterations += pstep.evaluations;
        pi = pstep.pi;
        let cand = assemble(&e, &pi, round, iterations)?;
        if cand.succeeded() {
            return Ok(cand);
        }
        if better(&cand, &best) {
            best = Some(cand);
        }
    }
    let reason = match &best {
        Some(b) => format!(
            "{} rounds without alpha <= 0 and passing positivity (best alpha {:.6})",
            cfg.search.max_rounds, b.alpha
        ),
        None => format!("{} rounds without a candidate", cfg.search.max_rounds),
    };
    Err(Error::Infeasible {
        step: SynthesisStep::Loop,
        reason,
        best: best.map(Box::new),
    })
}

fn positivity_ok(certs: &[Certificate]) -> bool {
    certs
        .iter()
        .filter(|c| c.normative && c.name != "lmi_alpha_nonpositive")
        .all(|c| c.passed)
}

fn attach_best(err: Error, best: Option<GainSet>) -> Error {
    match err {
        Error::Infeasible { step, reason, best: None } => Error::Infeasible {
            step,
            reason,
            best: best.map(Box::new),
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{DirectedGraph, PinningSet};
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    fn plant1() -> PlantModel {
        PlantModel::new(
            dmatrix![-10.18, 9.98; 10.3, -9.84],
            dmatrix![0.698, -0.26; 0.682, -0.34],
            dmatrix![0.7; 0.7],
            dmatrix![0.7, -0.3; 0.1, 0.6],
            1.0,
            0.9,
            1.2,
        )
        .unwrap()
    }

    fn cycle_net() -> Network {
        let g = DirectedGraph::from_edges(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        Network::new(g, PinningSet::new(3, &[0]).unwrap()).unwrap()
    }

    #[test]
    fn plant_validation() {
        let p = plant1();
        assert_eq!((p.m(), p.p(), p.q()), (2, 1, 2));
        assert!(p.is_observable());
        let bad = PlantModel::new(
            dmatrix![-1.0, -1.0; 0.0, -1.0],
            Matrix::zeros(2, 2),
            dmatrix![1.0; 1.0],
            dmatrix![1.0, 0.0],
            0.0,
            0.0,
            1.0,
        );
        assert!(matches!(bad, Err(Error::Invariant(_))));
        let swapped = PlantModel::new(
            Matrix::identity(1, 1) * -1.0,
            Matrix::zeros(1, 1),
            dmatrix![1.0],
            dmatrix![1.0],
            0.0,
            1.0,
            0.5,
        );
        assert!(matches!(swapped, Err(Error::Invariant(_))));
    }

    #[test]
    fn feedback_gain_examples() {
        let k = feedback_gain(&(Matrix::identity(2, 2) * 1.05), 0.6, &dmatrix![0.7; 0.7]);
        assert_abs_diff_eq!(k, dmatrix![-0.4410, -0.4410], epsilon = 1e-4);
        let k = feedback_gain(&(Matrix::identity(2, 2) * 0.85), 0.6, &dmatrix![0.82; 0.82]);
        assert_abs_diff_eq!(k, dmatrix![-0.4182, -0.4182], epsilon = 1e-4);
        let k = feedback_gain(&(Matrix::identity(2, 2) * 1.20), 0.6, &dmatrix![0.82; 0.82]);
        assert_abs_diff_eq!(k, dmatrix![-0.5904, -0.5904], epsilon = 1e-4);
    }

    #[test]
    fn gamma_hand_case() {
        let cfg = SynthesisConfig::new(0.6, 10.0, 15.0, 0.02).unwrap();
        let plant = plant1();
        let g = gamma_formula(&cfg, &plant, 1.5, 1.0, 1.0 / 3.0, 0.0).unwrap();
        assert_abs_diff_eq!(g, 15.8757, epsilon = 1e-9);
        let g = gamma_formula(&cfg, &plant, 0.0, 0.0, 0.25, 0.0).unwrap();
        assert_abs_diff_eq!(g, -0.36 * 0.09 / 1.0, epsilon = 1e-12);
        assert!(matches!(gamma_formula(&cfg, &plant, 1.0, 0.0, 0.0, 0.0), Err(Error::Structure(_))));
    }

    #[test]
    fn observer_init_examples() {
        let plant = plant1();
        let e0 = dmatrix![17.1333, 21.8667; 12.3644, -3.5511];
        let init = observer_init(&plant, &[Matrix::zeros(2, 2), e0.clone()]).unwrap();
        assert_eq!(init.candidate, Some(1));
        assert_eq!(init.e, e0);
        assert!(init.margin > 2.0);
        // The fallback scan succeeds when no candidate is given.
        let fallback = observer_init(&plant, &[]).unwrap();
        assert_eq!(fallback.candidate, None);
    }

    #[test]
    fn observer_init_rejects_unobservable() {
        let plant = PlantModel::new(
            dmatrix![-1.0, 0.0; 0.0, -2.0],
            Matrix::zeros(2, 2),
            dmatrix![1.0; 1.0],
            dmatrix![1.0, 0.0],
            0.0,
            1.0,
            1.0,
        )
        .unwrap();
        assert!(matches!(
            observer_init(&plant, &[]),
            Err(Error::Infeasible { step: SynthesisStep::ObserverInit, .. })
        ));
    }

    #[test]
    fn sigma_at_exact_riccati_solution() {
        let plant = plant1();
        let e0 = dmatrix![17.1333, 21.8667; 12.3644, -3.5511];
        let p = solve_observer_riccati(&plant.a, &e0, &plant.c, plant.kappa(), 0.02).unwrap();
        let sigma = compute_sigma(&plant, &e0, &p).unwrap();
        assert_abs_diff_eq!(sigma, Matrix::identity(2, 2) * -0.02, epsilon = 1e-8);
        assert!(matches!(
            compute_sigma(&plant, &e0, &Matrix::zeros(2, 2)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn theorem2_unpinned_block_reduces() {
        let plant = plant1();
        let net = cycle_net();
        let cfg = SynthesisConfig::new(0.6, 10.0, 15.0, 0.02).unwrap();
        let problem = LmiProblem::new(&plant, &net, &cfg, Variant::Theorem2, Matrix::identity(2, 2) * -0.02).unwrap();
        let e = dmatrix![1.0, 2.0; 3.0, 4.0];
        let pi = Matrix::identity(2, 2) * 0.7;
        let blk = problem.block(1, &e, &pi).unwrap();
        assert_abs_diff_eq!(blk.view((0, 2), (2, 2)).into_owned(), &plant.h * &pi, epsilon = 1e-12);
        let api = &plant.a * &pi;
        assert_abs_diff_eq!(blk.view((2, 2), (2, 2)).into_owned(), &api + api.transpose(), epsilon = 1e-12);
    }

    #[test]
    fn zero_gain_positivity() {
        let plant = plant1();
        let net = cycle_net();
        let cfg = SynthesisConfig::new(0.6, 10.0, 15.0, 0.02).unwrap();
        let problem = LmiProblem::new(&plant, &net, &cfg, Variant::Theorem1, Matrix::identity(2, 2) * -0.02).unwrap();
        let certs = positivity_check(&problem, &Matrix::zeros(2, 2), &Matrix::identity(2, 2), 0.0).unwrap();
        for name in ["observer_metzler", "observer_injection_nonpositive", "feedback_nonpositive"] {
            assert!(certs.iter().find(|c| c.name == name).unwrap().passed, "{name}");
        }
    }

    #[test]
    fn projection_lands_in_box() {
        let c = dmatrix![0.7, -0.3; 0.1, 0.6];
        let lo = Matrix::zeros(2, 2);
        let hi = dmatrix![f64::INFINITY, 9.98; 10.3, f64::INFINITY];
        let e = dmatrix![-5.0, 40.0; 30.0, -10.0];
        let x = project_observer_set(&e, &c, &lo, &hi, None).unwrap();
        let w = &x * &c;
        assert!(w.iter().all(|&v| v >= -1e-10));
        assert!(w[(0, 1)] <= 9.98 + 1e-10 && w[(1, 0)] <= 10.3 + 1e-10);
    }
}
