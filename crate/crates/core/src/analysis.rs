//! Blowup detection, η_x structure checks and fractional cusp expansions.
//!
//! Everything here works on the label side: η, η_x and f∘η are smooth in the
//! label up to the blowup time, so they are fitted by polynomials and lines in
//! t and only then pushed forward to θ.

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::{comp, LabelState, Model, Trajectory};
use crate::spectral::Spectral;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("ambiguous blowup: {0}")]
    Ambiguous(String),
    #[error("only {found} tail snapshots with min eta_x <= {threshold}, need {needed}")]
    InsufficientTail { found: usize, needed: usize, threshold: f64 },
    #[error("ill-conditioned cusp fit: condition number {cond:e} exceeds {cap:e}")]
    IllConditioned { cond: f64, cap: f64 },
    #[error("fit window spans {cells:.2} grid cells, need at least 8")]
    WindowTooSmall { cells: f64 },
    #[error("only {found} usable points on the {side} side, need {needed}")]
    TooFewPoints { side: String, found: usize, needed: usize },
    #[error("invalid analysis input: {0}")]
    Invalid(String),
}

/// Knobs shared by every analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Tail snapshots have min η_x at most this (default: the solver's dense threshold).
    pub tail_threshold: Option<f64>,
    /// Use at most this many of the latest tail snapshots.
    pub tail_len: usize,
    pub min_tail: usize,
    /// Relative RMS tolerance of the linear min η_x fit.
    pub fit_tol: f64,
    /// Implicit constant for the ε-scaling checks.
    pub scaling_const: f64,
    /// Label radius of the cusp window (default ε²).
    pub window: Option<f64>,
    pub fit_points: usize,
    /// Polynomial degree of the η and f∘η fits; only a_0..a_5 and B_0..B_4 are reported.
    pub fit_degree: usize,
    pub cond_cap: f64,
    /// Latest tail snapshots used to extrapolate Taylor data to T*.
    pub cusp_snapshots: usize,
    /// Tolerance for the vanishing B_1, B_2 of z, k, a (relative to the largest scaled coefficient).
    pub vanishing_tol: f64,
    /// Sample points per side for the reconstruction profile.
    pub recon_points: usize,
    /// Innermost reconstruction radius relative to the θ window.
    pub recon_inner: f64,
    /// Hölder fit range relative to the θ window.
    pub holder_range: (f64, f64),
    pub holder_points: usize,
    pub holder_min_points: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            tail_threshold: None,
            tail_len: 16,
            min_tail: 8,
            fit_tol: 2e-2,
            scaling_const: 10.0,
            window: None,
            fit_points: 41,
            fit_degree: 8,
            cond_cap: 1e8,
            cusp_snapshots: 8,
            vanishing_tol: 5e-2,
            recon_points: 40,
            recon_inner: 1e-2,
            holder_range: (0.1, 1.0),
            holder_points: 40,
            holder_min_points: 10,
        }
    }
}

impl AnalysisConfig {
    fn window(&self, eps: f64) -> f64 {
        self.window.unwrap_or(eps * eps)
    }
}

/// Named pass/fail check with its measured value and bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub bound: f64,
}

impl Check {
    /// Passes when `measured ≤ bound`.
    pub fn at_most(name: &str, measured: f64, bound: f64) -> Self {
        Self { name: name.into(), passed: measured <= bound, measured, bound }
    }

    /// Passes when `measured ≥ bound`.
    pub fn at_least(name: &str, measured: f64, bound: f64) -> Self {
        Self { name: name.into(), passed: measured >= bound, measured, bound }
    }
}

/// Least-squares line `y = intercept + slope·(t − t_ref)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub t_ref: f64,
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual divided by the spread of the data (or by max |y| when flat).
    pub rel_rms: f64,
    pub n: usize,
}

impl LineFit {
    pub fn fit(t: &[f64], y: &[f64]) -> Self {
        let n = t.len();
        let t_ref = t[n - 1];
        let tm = t.iter().map(|v| v - t_ref).sum::<f64>() / n as f64;
        let ym = y.iter().sum::<f64>() / n as f64;
        let (mut sxx, mut sxy) = (0.0, 0.0);
        for (ti, yi) in t.iter().zip(y) {
            let dt = ti - t_ref - tm;
            sxx += dt * dt;
            sxy += dt * (yi - ym);
        }
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let intercept = ym - slope * tm;
        let line = Self { t_ref, slope, intercept, rel_rms: 0.0, n };
        let rms = (t.iter().zip(y).map(|(ti, yi)| (yi - line.at(*ti)).powi(2)).sum::<f64>() / n as f64).sqrt();
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let scale = if hi - lo > 0.0 { hi - lo } else { hi.abs().max(lo.abs()) };
        Self { rel_rms: if scale > 0.0 { rms / scale } else { 0.0 }, ..line }
    }

    pub fn at(&self, t: f64) -> f64 {
        self.intercept + self.slope * (t - self.t_ref)
    }

    /// Where the line crosses zero.
    pub fn root(&self) -> f64 {
        self.t_ref - self.intercept / self.slope
    }
}

/// Least-squares polynomial coefficients (lowest first) and the condition number of the design matrix.
pub fn polyfit(s: &[f64], y: &[f64], degree: usize) -> (Vec<f64>, f64) {
    let m = s.len();
    let a = DMatrix::from_fn(m, degree + 1, |i, j| s[i].powi(j as i32));
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let (smax, smin) = sv.iter().fold((0.0f64, f64::INFINITY), |(h, l), &v| (h.max(v), l.min(v)));
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let b = DVector::from_column_slice(y);
    let x = svd.solve(&b, 1e-14 * smax).expect("svd computed with u and v");
    (x.iter().cloned().collect(), cond)
}

/// η_x data of one tail snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub t: f64,
    pub min_eta_x: f64,
    /// Refined argmin label x*(t).
    pub x_star: f64,
    /// η(x*(t), t).
    pub xi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport {
    pub model: Model,
    pub eps: f64,
    pub mu: f64,
    pub t_star: f64,
    pub x_star: f64,
    pub xi_star: f64,
    pub t_stop: f64,
    /// Linear fit of min η_x against t.
    pub fit: LineFit,
    pub x_fit: LineFit,
    pub xi_fit: LineFit,
    /// η_xx at the fixed label x*, extrapolated to T*.
    pub eta_xx_star: f64,
    /// Smallest A with |η_xx(x*, t)| ≤ A ε⁻² (T* − t) along the tail.
    pub eta_xx_const: f64,
    /// Second-lowest local minimum of η_x at t_stop minus the minimum.
    pub uniqueness_margin: f64,
    pub tail: Vec<TailPoint>,
    pub checks: Vec<Check>,
}

impl BlowupReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Refined minimum of η_x: parabola through the grid minimum, then Newton on η_xx.
pub fn refine_min(spec: &Spectral, e: &[f64], e_hat: &[Complex64]) -> (f64, f64) {
    let n = e.len();
    let (imin, _) = e.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let h = spec.dx();
    let x0 = crate::spectral::grid(n)[imin];
    let (em, e0, ep) = (e[(imin + n - 1) % n], e[imin], e[(imin + 1) % n]);
    let curv = em - 2.0 * e0 + ep;
    let mut x = if curv > 0.0 { x0 + 0.5 * h * (em - ep) / curv } else { x0 };
    for _ in 0..8 {
        let d1 = spec.eval(e_hat, x, 1);
        let d2 = spec.eval(e_hat, x, 2);
        if !(d2 > 0.0) {
            break;
        }
        let step = (d1 / d2).clamp(-h, h);
        x -= step;
        if step.abs() < 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    if (x - x0).abs() > h {
        x = x0;
    }
    (x, spec.eval(e_hat, x, 0))
}

/// Lowest grid local minimum of η_x other than the global one, minus the global minimum.
pub fn uniqueness_margin(e: &[f64]) -> f64 {
    let n = e.len();
    let (imin, vmin) = e.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let mut second = f64::INFINITY;
    for i in 0..n {
        if i == imin {
            continue;
        }
        let (l, r) = (e[(i + n - 1) % n], e[(i + 1) % n]);
        if e[i] < l && e[i] <= r {
            second = second.min(e[i]);
        }
    }
    if second.is_infinite() {
        second = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    }
    second - vmin
}

fn tail_indices(traj: &Trajectory, cfg: &AnalysisConfig, len: usize) -> Result<Vec<usize>, AnalysisError> {
    let threshold = cfg.tail_threshold.unwrap_or(traj.config.dense_threshold);
    let mut idx: Vec<usize> = Vec::new();
    for (i, s) in traj.snapshots.iter().enumerate() {
        if s.state.min_eta_x().0 <= threshold && idx.last().map_or(true, |&j| traj.snapshots[j].t() < s.t()) {
            idx.push(i);
        }
    }
    if idx.len() < cfg.min_tail {
        return Err(AnalysisError::InsufficientTail { found: idx.len(), needed: cfg.min_tail, threshold });
    }
    let start = idx.len().saturating_sub(len.max(cfg.min_tail));
    Ok(idx[start..].to_vec())
}

/// Locates T*, x* and ξ* by extrapolating the tail of the trajectory.
pub fn detect_blowup(traj: &Trajectory, cfg: &AnalysisConfig) -> Result<BlowupReport, AnalysisError> {
    let params = &traj.params;
    let eps = params.eps;
    let n = traj.last().state.n;
    let spec = Spectral::new(n);
    let idx = tail_indices(traj, cfg, cfg.tail_len)?;
    let mut tail = Vec::with_capacity(idx.len());
    for &i in &idx {
        let s = &traj.snapshots[i].state;
        let e = s.get(comp::E);
        let e_hat = spec.forward(e);
        let (x, m) = refine_min(&spec, e, &e_hat);
        let d_hat = spec.forward(s.get(comp::D));
        tail.push(TailPoint { t: s.t, min_eta_x: m, x_star: x, xi: x + spec.eval(&d_hat, x, 0) });
    }
    if let Some(w) = tail.windows(2).find(|w| !(w[1].min_eta_x < w[0].min_eta_x)) {
        return Err(AnalysisError::Ambiguous(format!("min eta_x is not decreasing along the tail at t = {}", w[1].t)));
    }
    let ts: Vec<f64> = tail.iter().map(|p| p.t).collect();
    let col = |f: fn(&TailPoint) -> f64| tail.iter().map(f).collect::<Vec<_>>();
    let fit = LineFit::fit(&ts, &col(|p| p.min_eta_x));
    if !(fit.slope < 0.0) {
        return Err(AnalysisError::Ambiguous(format!("min eta_x fit has non-negative slope {}", fit.slope)));
    }
    if !(fit.rel_rms <= cfg.fit_tol) {
        return Err(AnalysisError::Ambiguous(format!("min eta_x fit residual {:e} above tolerance {:e}", fit.rel_rms, cfg.fit_tol)));
    }
    let t_star = fit.root();
    let t_stop = traj.t_stop();
    if !(t_star > t_stop) {
        return Err(AnalysisError::Ambiguous(format!("extrapolated T* = {t_star} does not exceed t_stop = {t_stop}")));
    }
    let last = &traj.last().state;
    let margin = uniqueness_margin(last.get(comp::E));
    // Minima that agree to round-off are ties.
    let tie = 64.0 * f64::EPSILON * last.get(comp::E).iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if !(margin > tie) {
        return Err(AnalysisError::Ambiguous(format!("competing minima of eta_x (margin {margin:e})")));
    }
    let x_fit = LineFit::fit(&ts, &col(|p| p.x_star));
    let xi_fit = LineFit::fit(&ts, &col(|p| p.xi));
    let x_star = x_fit.at(t_star);
    let xi_star = xi_fit.at(t_star);

    // η_xx at the fixed label x*
    let mut exx = Vec::with_capacity(idx.len());
    let mut a_const: f64 = 0.0;
    for &i in &idx {
        let s = &traj.snapshots[i].state;
        let v = spec.eval(&spec.forward(s.get(comp::E)), x_star, 1);
        a_const = a_const.max(v.abs() / ((t_star - s.t) / (eps * eps)));
        exx.push(v);
    }
    let eta_xx_star = LineFit::fit(&ts, &exx).at(t_star);

    let mut checks = vec![
        Check::at_most("fit_residual", fit.rel_rms, cfg.fit_tol),
        Check::at_least("t_star_after_stop", t_star - t_stop, 0.0),
        Check::at_least("uniqueness_margin", margin, 0.0),
        Check::at_most("eta_xx_at_blowup", eta_xx_star.abs(), (t_star - t_stop) / (eps * eps)),
    ];
    if traj.model() == Model::Full {
        let c = cfg.scaling_const;
        checks.push(Check::at_most("t_star_scaling", t_star.abs(), c * eps.powf(1.0 + params.mu)));
        checks.push(Check::at_most("x_star_scaling", x_star.abs(), c * eps.powf(2.0 + params.mu)));
        checks.push(Check::at_most("eta_xx_decay", a_const, c));
    }
    Ok(BlowupReport {
        model: traj.model(),
        eps,
        mu: params.mu,
        t_star,
        x_star,
        xi_star,
        t_stop,
        fit,
        x_fit,
        xi_fit,
        eta_xx_star,
        eta_xx_const: a_const,
        uniqueness_margin: margin,
        tail,
        checks,
    })
}

/// Fitted constants of the η_x sandwich near x* and the lower bounds away from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureMargins {
    /// Largest c with (T*−t)/(2ε) + c (t−t0) ε⁻⁴ (x−x*)² ≤ η_x on the window, over the tail.
    pub c_lower: f64,
    /// Smallest C with η_x ≤ 3(T*−t)/(2ε) + C ε⁻³ (x−x*)², over the tail (may be ≤ 0).
    pub c_upper: f64,
    /// Range of ε η_x(x*(t), t) / (T* − t) along the tail.
    pub rate_range: (f64, f64),
    /// min η_x / ε^{μ/2} over |x − x*| ≥ ε^{3/2} at t_stop.
    pub outer_mu_ratio: f64,
    /// min η_x / ε^{μ/2} over ε² ≤ |x − x*| ≤ ε^{3/2} at t_stop.
    pub inner_mu_ratio: f64,
    /// min η_x / ε over ε² ≤ |x − x*| ≤ ε^{3/2} at t_stop.
    pub inner_eps_ratio: f64,
    pub per_snapshot: Vec<(f64, f64, f64)>,
    pub checks: Vec<Check>,
}

/// Measures the η_x sandwich constants around the blowup label.
pub fn eta_x_structure_check(traj: &Trajectory, report: &BlowupReport, cfg: &AnalysisConfig) -> Result<StructureMargins, AnalysisError> {
    let eps = traj.params.eps;
    let mu = traj.params.mu;
    let t0 = traj.initial.t;
    let r = cfg.window(eps);
    let idx = tail_indices(traj, cfg, cfg.tail_len)?;
    let labels = traj.last().state.labels();
    let dist = |x: f64| crate::spectral::wrap_angle(x - report.x_star).abs();
    let t_star = report.t_star;
    let mut c_lower = f64::INFINITY;
    let mut c_upper = f64::NEG_INFINITY;
    let mut rate = (f64::INFINITY, f64::NEG_INFINITY);
    let mut per = Vec::new();
    for (&i, tp) in idx.iter().zip(&report.tail) {
        let s = &traj.snapshots[i].state;
        let e = s.get(comp::E);
        let gap = t_star - s.t;
        let (mut cl, mut cu) = (f64::INFINITY, f64::NEG_INFINITY);
        for (x, &ex) in labels.iter().zip(e) {
            let d = dist(*x);
            if d > r || d < 1e-12 {
                continue;
            }
            cl = cl.min((ex - gap / (2.0 * eps)) / ((s.t - t0) * d * d / eps.powi(4)));
            cu = cu.max((ex - 1.5 * gap / eps) / (d * d / eps.powi(3)));
        }
        let k = tp.min_eta_x * eps / gap;
        rate = (rate.0.min(k), rate.1.max(k));
        c_lower = c_lower.min(cl);
        c_upper = c_upper.max(cu);
        per.push((s.t, cl, cu));
    }
    let e = traj.last().state.get(comp::E);
    let (outer, inner) = (eps.powf(1.5), eps * eps);
    let mut outer_min = f64::INFINITY;
    let mut inner_min = f64::INFINITY;
    for (x, &ex) in labels.iter().zip(e) {
        let d = dist(*x);
        if d >= outer {
            outer_min = outer_min.min(ex);
        } else if d >= inner {
            inner_min = inner_min.min(ex);
        }
    }
    let emu = eps.powf(mu / 2.0);
    let checks = vec![
        Check::at_least("sandwich_lower_constant", c_lower, f64::MIN_POSITIVE),
        Check::at_least("sandwich_center_lower", rate.0, 0.5),
        Check::at_most("sandwich_center_upper", rate.1, 1.5),
        Check::at_most("sandwich_upper_constant", c_upper, cfg.scaling_const),
        Check::at_least("outer_lower_bound", outer_min / emu, 1.0 / cfg.scaling_const),
        Check::at_least("inner_lower_bound", inner_min / eps, 1.0 / cfg.scaling_const),
    ];
    Ok(StructureMargins {
        c_lower,
        c_upper,
        rate_range: rate,
        outer_mu_ratio: outer_min / emu,
        inner_mu_ratio: inner_min / emu,
        inner_eps_ratio: inner_min / eps,
        per_snapshot: per,
        checks,
    })
}

/// Fields with a fractional expansion at the pre-shock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CuspField {
    W,
    Z,
    K,
    A,
    Varpi,
}

impl CuspField {
    pub const ALL: [CuspField; 5] = [CuspField::W, CuspField::Z, CuspField::K, CuspField::A, CuspField::Varpi];

    pub fn name(self) -> &'static str {
        match self {
            CuspField::W => "w",
            CuspField::Z => "z",
            CuspField::K => "k",
            CuspField::A => "a",
            CuspField::Varpi => "varpi",
        }
    }

    /// Only w carries Δ^{1/3} and Δ^{2/3} terms.
    pub fn is_cusp(self) -> bool {
        self == CuspField::W
    }
}

/// Fractional coefficients 𝖺_j (index j = power of Δ^{1/3}) from Taylor data B_0..B_4.
pub fn frac_coefficients(field: CuspField, a3: f64, a4: f64, b: &[f64; 5]) -> [f64; 5] {
    let mut f = [0.0; 5];
    f[0] = b[0];
    if field.is_cusp() {
        f[1] = a3.powf(-1.0 / 3.0) * b[1];
        f[2] = a3.powf(-2.0 / 3.0) * b[2] - a3.powf(-5.0 / 3.0) * a4 * b[1] / 3.0;
    } else {
        f[3] = b[3] / a3;
        if field != CuspField::Varpi {
            f[4] = a3.powf(-4.0 / 3.0) * b[4] - a3.powf(-7.0 / 3.0) * a4 * b[3];
        }
    }
    f
}

/// Evaluates Σ 𝖺_j Δ^{j/3} with the real cube root.
pub fn eval_frac(frac: &[f64; 5], delta: f64) -> f64 {
    let u = delta.cbrt();
    frac.iter().rev().fold(0.0, |acc, c| acc * u + c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldExpansion {
    pub field: CuspField,
    /// Taylor coefficients of f∘η about x* at T*.
    pub b: [f64; 5],
    pub frac: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuspExpansion {
    pub t_star: f64,
    pub x_star: f64,
    /// Constant term of the η fit at T*.
    pub xi_star: f64,
    /// Taylor coefficients a_0..a_5 of η about x* at T*.
    pub eta: Vec<f64>,
    pub a3: f64,
    pub a4: f64,
    pub fields: Vec<FieldExpansion>,
    /// Label radius of the fit.
    pub window_label: f64,
    /// θ-radius a3 r³ of the expansion.
    pub window_theta: f64,
    pub cond: f64,
    pub checks: Vec<Check>,
}

impl CuspExpansion {
    pub fn field(&self, f: CuspField) -> Option<&FieldExpansion> {
        self.fields.iter().find(|e| e.field == f)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Builds the expansion from Taylor data directly (used for synthetic inputs).
    pub fn from_taylor(t_star: f64, x_star: f64, eta: Vec<f64>, taylor: &[(CuspField, [f64; 5])], window_label: f64) -> Self {
        let (a3, a4) = (eta[3], eta[4]);
        let fields = taylor.iter().map(|&(field, b)| FieldExpansion { field, b, frac: frac_coefficients(field, a3, a4, &b) }).collect();
        Self {
            t_star,
            x_star,
            xi_star: eta[0],
            a3,
            a4,
            window_theta: a3 * window_label.powi(3),
            eta,
            fields,
            window_label,
            cond: 1.0,
            checks: Vec::new(),
        }
    }
}

/// Label fields at one time, ready for exact evaluation.
pub struct LabelFields {
    spec: Spectral,
    d: Vec<Complex64>,
    e: Vec<Complex64>,
    w: Vec<Complex64>,
    z: Vec<Complex64>,
    k: Vec<Complex64>,
    a: Vec<Complex64>,
    varpi: Vec<Complex64>,
}

/// ϖ∘η on the label grid; needs η_x > 0.
pub fn varpi_labels(s: &LabelState) -> Vec<f64> {
    let spec = Spectral::new(s.n);
    let ax = spec.derivative(s.get(comp::A), 1);
    let (w, z, k, e) = (s.get(comp::W), s.get(comp::Z), s.get(comp::K), s.get(comp::E));
    (0..s.n).map(|i| crate::solver::varpi(w[i], z[i], k[i], ax[i] / e[i])).collect()
}

impl LabelFields {
    pub fn new(s: &LabelState) -> Self {
        Self::with_varpi(s, &varpi_labels(s))
    }

    /// Uses the given ϖ∘η samples instead of recomputing them from `s`.
    pub fn with_varpi(s: &LabelState, varpi: &[f64]) -> Self {
        let spec = Spectral::new(s.n);
        let h = |c| spec.forward(s.get(c));
        let (d, e, w, z, k, a) = (h(comp::D), h(comp::E), h(comp::W), h(comp::Z), h(comp::K), h(comp::A));
        let varpi = spec.forward(varpi);
        Self { spec, d, e, w, z, k, a, varpi }
    }

    /// Label fields linearly extrapolated in t from the given snapshots.
    ///
    /// ϖ∘η is extrapolated as a whole, so the η_x ≈ 0 at the target time never enters a quotient.
    pub fn extrapolated(states: &[&LabelState], t: f64) -> Self {
        let state = extrapolate_state(states, t);
        let ts: Vec<f64> = states.iter().map(|s| s.t).collect();
        let grids: Vec<Vec<f64>> = states.iter().map(|s| varpi_labels(s)).collect();
        let mut col = vec![0.0; states.len()];
        let varpi: Vec<f64> = (0..state.n)
            .map(|i| {
                for (k, g) in grids.iter().enumerate() {
                    col[k] = g[i];
                }
                LineFit::fit(&ts, &col).at(t)
            })
            .collect();
        Self::with_varpi(&state, &varpi)
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spec
    }

    pub fn eta(&self, x: f64) -> f64 {
        x + self.spec.eval(&self.d, x, 0)
    }

    pub fn eta_x(&self, x: f64, order: u32) -> f64 {
        self.spec.eval(&self.e, x, order)
    }

    /// f∘η at label x.
    pub fn field(&self, f: CuspField, x: f64) -> f64 {
        let sp = &self.spec;
        match f {
            CuspField::W => sp.eval(&self.w, x, 0),
            CuspField::Z => sp.eval(&self.z, x, 0),
            CuspField::K => sp.eval(&self.k, x, 0),
            CuspField::A => sp.eval(&self.a, x, 0),
            CuspField::Varpi => sp.eval(&self.varpi, x, 0),
        }
    }

    /// Label x with η(x) = θ, searched in [lo, hi] where η is increasing.
    pub fn invert(&self, theta: f64, mut lo: f64, mut hi: f64) -> f64 {
        let f = |x: f64| self.eta(x) - theta;
        let (mut flo, fhi) = (f(lo), f(hi));
        if flo * fhi > 0.0 {
            return if flo.abs() < fhi.abs() { lo } else { hi };
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let fx = f(x);
            if fx == 0.0 {
                return x;
            }
            if (fx < 0.0) == (flo < 0.0) {
                lo = x;
                flo = fx;
            } else {
                hi = x;
            }
            // Newton step when it stays inside the bracket
            let d = self.eta_x(x, 0);
            let xn = x - fx / d;
            x = if d > 0.0 && xn > lo && xn < hi { xn } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-15 * (1.0 + x.abs()) || (fx / d).abs() < 1e-16 * (1.0 + x.abs()) {
                break;
            }
        }
        x
    }
}

fn cusp_fields(model: Model) -> &'static [CuspField] {
    match model {
        Model::Full => &CuspField::ALL,
        Model::Burgers => &CuspField::ALL[..1],
    }
}

/// Taylor data at one snapshot about `center` on `|x − center| ≤ r`.
fn taylor_at(lf: &LabelFields, model: Model, center: f64, r: f64, cfg: &AnalysisConfig) -> (Vec<f64>, Vec<[f64; 5]>, f64) {
    let m = cfg.fit_points.max(cfg.fit_degree + 2);
    let s: Vec<f64> = (0..m).map(|i| -1.0 + 2.0 * i as f64 / (m - 1) as f64).collect();
    let xs: Vec<f64> = s.iter().map(|si| center + r * si).collect();
    let eta: Vec<f64> = xs.iter().map(|&x| lf.eta(x)).collect();
    let (ce, cond) = polyfit(&s, &eta, cfg.fit_degree);
    let a: Vec<f64> = ce.iter().take(6).enumerate().map(|(j, c)| c / r.powi(j as i32)).collect();
    let mut out = Vec::new();
    for &f in cusp_fields(model) {
        let y: Vec<f64> = xs.iter().map(|&x| lf.field(f, x)).collect();
        let (cf, _) = polyfit(&s, &y, cfg.fit_degree);
        let mut b = [0.0; 5];
        for j in 0..5 {
            b[j] = cf[j] / r.powi(j as i32);
        }
        out.push(b);
    }
    (a, out, cond)
}

/// Fits Taylor data of η and f∘η about x*(t) along the tail and extrapolates it to T*.
pub fn fit_cusp(traj: &Trajectory, report: &BlowupReport, cfg: &AnalysisConfig) -> Result<CuspExpansion, AnalysisError> {
    let eps = traj.params.eps;
    let model = traj.model();
    if cfg.fit_degree < 5 || cfg.fit_points < cfg.fit_degree + 2 {
        return Err(AnalysisError::Invalid(format!("fit degree {} with {} points", cfg.fit_degree, cfg.fit_points)));
    }
    let idx = tail_indices(traj, cfg, cfg.cusp_snapshots.min(cfg.tail_len))?;
    let tail: Vec<&TailPoint> = report.tail.iter().filter(|p| idx.iter().any(|&i| traj.snapshots[i].t() == p.t)).collect();
    let mut r = cfg.window(eps);
    let fields = cusp_fields(model);
    let mut attempt = 0;
    let (ts, etas, taylors, cond) = loop {
        let mut ts = Vec::new();
        let mut etas = Vec::new();
        let mut taylors = Vec::new();
        let mut cond: f64 = 0.0;
        for (&i, tp) in idx.iter().zip(&tail) {
            let lf = LabelFields::new(&traj.snapshots[i].state);
            let (a, b, c) = taylor_at(&lf, model, tp.x_star, r, cfg);
            ts.push(tp.t);
            etas.push(a);
            taylors.push(b);
            cond = cond.max(c);
        }
        if cond <= cfg.cond_cap {
            break (ts, etas, taylors, cond);
        }
        if attempt == 1 {
            return Err(AnalysisError::IllConditioned { cond, cap: cfg.cond_cap });
        }
        attempt += 1;
        r *= 2.0;
    };
    let extrap = |vals: Vec<f64>| LineFit::fit(&ts, &vals).at(report.t_star);
    let eta: Vec<f64> = (0..6).map(|j| extrap(etas.iter().map(|a| a[j]).collect())).collect();
    let (a3, a4) = (eta[3], eta[4]);
    let x_star = LineFit::fit(&ts, &tail.iter().map(|p| p.x_star).collect::<Vec<_>>()).at(report.t_star);
    let mut out = Vec::new();
    for (fi, &f) in fields.iter().enumerate() {
        let mut b = [0.0; 5];
        for (j, bj) in b.iter_mut().enumerate() {
            *bj = extrap(taylors.iter().map(|t| t[fi][j]).collect());
        }
        out.push(FieldExpansion { field: f, b, frac: frac_coefficients(f, a3, a4, &b) });
    }
    let mut checks = vec![
        Check::at_least("a3_positive", a3, 0.0),
        Check::at_most("fit_condition", cond, cfg.cond_cap),
    ];
    if model == Model::Full {
        let c = cfg.scaling_const;
        let e3 = eps.powi(3);
        checks.push(Check::at_most("a3_upper", a3 * e3, c));
        checks.push(Check::at_least("a3_lower", a3 * e3, 1.0 / c));
        for fe in &out {
            if matches!(fe.field, CuspField::Z | CuspField::K | CuspField::A) {
                let scaled: Vec<f64> = (0..5).map(|j| fe.b[j] * r.powi(j as i32)).collect();
                let top = scaled[1..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let low = scaled[1].abs().max(scaled[2].abs());
                let name = format!("{}_b12_vanish", fe.field.name());
                checks.push(Check::at_most(&name, if top > 0.0 { low / top } else { 0.0 }, cfg.vanishing_tol));
            }
        }
    }
    Ok(CuspExpansion {
        t_star: report.t_star,
        x_star,
        xi_star: eta[0],
        a3,
        a4,
        eta,
        fields: out,
        window_label: r,
        window_theta: a3 * r.powi(3),
        cond,
        checks,
    })
}

/// Magnitude checks of the fractional coefficients against their ε-scalings.
pub fn coefficient_bounds(exp: &CuspExpansion, eps: f64, mu: f64, slack: f64) -> Vec<Check> {
    let mut out = Vec::new();
    let mut push = |name: &str, v: f64, scale: f64| out.push(Check::at_most(name, v.abs() / scale, slack));
    if let Some(w) = exp.field(CuspField::W) {
        push("w_a0", w.frac[0], 1.0);
        push("w_a1", w.frac[1], 1.0);
        push("w_a2", w.frac[2], 1.0);
    }
    if let Some(z) = exp.field(CuspField::Z) {
        push("z_a3", z.frac[3], eps.powf(mu - 1.0));
        push("z_a4", z.frac[4], eps.powf(mu - 1.0));
    }
    if let Some(k) = exp.field(CuspField::K) {
        push("k_a3", k.frac[3], eps.powf(mu));
    }
    if let Some(a) = exp.field(CuspField::A) {
        push("a_a0", a.frac[0], 1.0);
        push("a_a3", a.frac[3], 1.0);
        push("a_a4", a.frac[4], 1.0);
    }
    out
}

/// Label state linearly extrapolated to time `t` from the given snapshots.
pub fn extrapolate_state(states: &[&LabelState], t: f64) -> LabelState {
    let ts: Vec<f64> = states.iter().map(|s| s.t).collect();
    let n = states[0].n;
    let mut out = states[states.len() - 1].clone();
    let mut col = vec![0.0; states.len()];
    for &c in &comp::FIELDS {
        for i in 0..n {
            for (k, s) in states.iter().enumerate() {
                col[k] = s.get(c)[i];
            }
            out.get_mut(c)[i] = LineFit::fit(&ts, &col).at(t);
        }
    }
    out.t = t;
    out
}

/// Remainder scale of each field's expansion.
pub fn remainder_scale(field: CuspField, eps: f64, mu: f64, gamma2: f64, delta: f64) -> f64 {
    let d = delta.abs();
    match field {
        CuspField::W => d / eps,
        CuspField::Z => eps.powf(mu - 2.0) * d.powf(5.0 / 3.0),
        CuspField::K => eps.powf(gamma2.min(mu) - 1.0) * d.powf(5.0 / 3.0),
        CuspField::A => d.powf(5.0 / 3.0) / eps,
        CuspField::Varpi => d.powf(4.0 / 3.0) / eps,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub theta: f64,
    pub delta: f64,
    pub value: f64,
    pub reconstruction: f64,
    pub normalized_remainder: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldProfile {
    pub field: CuspField,
    pub max_normalized: f64,
    pub max_abs: f64,
    pub rows: Vec<ProfileRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorProfile {
    pub window_theta: f64,
    pub window_cells: f64,
    pub fields: Vec<FieldProfile>,
}

impl ErrorProfile {
    pub fn field(&self, f: CuspField) -> Option<&FieldProfile> {
        self.fields.iter().find(|p| p.field == f)
    }
}

/// Compares the fractional expansion with label data at T* on the θ window.
///
/// The label data are extrapolated linearly in t from the snapshots used by
/// the fit, which transports the final snapshot to T*.
pub fn reconstruct_and_compare(exp: &CuspExpansion, traj: &Trajectory, cfg: &AnalysisConfig) -> Result<ErrorProfile, AnalysisError> {
    let n = traj.last().state.n;
    let cells = 2.0 * exp.window_label / (2.0 * std::f64::consts::PI / n as f64);
    if cells < 8.0 {
        return Err(AnalysisError::WindowTooSmall { cells });
    }
    let idx = tail_indices(traj, cfg, cfg.cusp_snapshots.min(cfg.tail_len))?;
    let states: Vec<&LabelState> = idx.iter().map(|&i| &traj.snapshots[i].state).collect();
    let lf = LabelFields::extrapolated(&states, exp.t_star);
    compare_on(exp, &lf, traj.params.eps, traj.params.mu, traj.params.exponents.gamma[2], cfg)
}

/// Reconstruction error profile against given label fields.
pub fn compare_on(exp: &CuspExpansion, lf: &LabelFields, eps: f64, mu: f64, gamma2: f64, cfg: &AnalysisConfig) -> Result<ErrorProfile, AnalysisError> {
    let wt = exp.window_theta;
    if !(wt > 0.0) {
        return Err(AnalysisError::Invalid(format!("non-positive theta window {wt}")));
    }
    let m = cfg.recon_points.max(2);
    let mut deltas = Vec::with_capacity(2 * m);
    for sign in [-1.0, 1.0] {
        for i in 0..m {
            let frac = cfg.recon_inner * (1.0 / cfg.recon_inner).powf(i as f64 / (m - 1) as f64);
            deltas.push(sign * frac * wt);
        }
    }
    let r = exp.window_label;
    let labels: Vec<f64> = deltas.iter().map(|&d| lf.invert(exp.xi_star + d, exp.x_star - 4.0 * r, exp.x_star + 4.0 * r)).collect();
    let n = lf.spectral().n();
    let mut fields = Vec::new();
    for fe in &exp.fields {
        let mut rows = Vec::with_capacity(deltas.len());
        let (mut mx, mut ma): (f64, f64) = (0.0, 0.0);
        for (&d, &x) in deltas.iter().zip(&labels) {
            let value = lf.field(fe.field, x);
            let rec = eval_frac(&fe.frac, d);
            let rem = (value - rec).abs();
            let norm = rem / remainder_scale(fe.field, eps, mu, gamma2, d);
            mx = mx.max(norm);
            ma = ma.max(rem);
            rows.push(ProfileRow { theta: exp.xi_star + d, delta: d, value, reconstruction: rec, normalized_remainder: norm });
        }
        fields.push(FieldProfile { field: fe.field, max_normalized: mx, max_abs: ma, rows });
    }
    Ok(ErrorProfile { window_theta: wt, window_cells: 2.0 * r * n as f64 / (2.0 * std::f64::consts::PI), fields })
}

/// One-sided log-log slopes of |f(θ) − f(θ0)| against |θ − θ0|.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub left: f64,
    pub right: f64,
    pub mean: f64,
    pub n_left: usize,
    pub n_right: usize,
}

/// Hölder exponent from samples `(θ, f)` using distances in `[range.0, range.1]`.
pub fn holder_exponent(samples: &[(f64, f64)], theta0: f64, f0: f64, range: (f64, f64), min_points: usize) -> Result<HolderEstimate, AnalysisError> {
    let mut sides = [(Vec::new(), Vec::new()), (Vec::new(), Vec::new())];
    for &(th, f) in samples {
        let d = th - theta0;
        let df = (f - f0).abs();
        if d.abs() < range.0 || d.abs() > range.1 || df == 0.0 {
            continue;
        }
        let side = &mut sides[usize::from(d > 0.0)];
        side.0.push(d.abs().ln());
        side.1.push(df.ln());
    }
    let mut slopes = [0.0; 2];
    for (k, (lx, ly)) in sides.iter().enumerate() {
        if lx.len() < min_points {
            let side = if k == 0 { "left" } else { "right" };
            return Err(AnalysisError::TooFewPoints { side: side.into(), found: lx.len(), needed: min_points });
        }
        let mut pts: Vec<(f64, f64)> = lx.iter().cloned().zip(ly.iter().cloned()).collect();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        slopes[k] = LineFit::fit(&x, &y).slope;
    }
    Ok(HolderEstimate {
        left: slopes[0],
        right: slopes[1],
        mean: 0.5 * (slopes[0] + slopes[1]),
        n_left: sides[0].0.len(),
        n_right: sides[1].0.len(),
    })
}

/// Hölder exponent of w at the final snapshot around η(x*(t_stop)).
///
/// The fit range is `cfg.holder_range` times the θ window a3 r³, with a3
/// measured at the final snapshot.
pub fn holder_from_trajectory(traj: &Trajectory, cfg: &AnalysisConfig) -> Result<HolderEstimate, AnalysisError> {
    let s = &traj.last().state;
    let lf = LabelFields::new(s);
    let sp = lf.spectral();
    let (xc, _) = refine_min(sp, s.get(comp::E), &lf.e);
    let r = cfg.window(traj.params.eps);
    let a3 = lf.eta_x(xc, 2) / 6.0;
    let wt = a3 * r.powi(3);
    if !(wt > 0.0) {
        return Err(AnalysisError::Invalid(format!("eta_xxx = {} at the final snapshot", 6.0 * a3)));
    }
    let theta0 = lf.eta(xc);
    let f0 = lf.field(CuspField::W, xc);
    let (lo, hi) = (cfg.holder_range.0 * wt, cfg.holder_range.1 * wt);
    let m = cfg.holder_points.max(2);
    let mut samples = Vec::with_capacity(2 * m);
    for sign in [-1.0, 1.0] {
        for i in 0..m {
            let d = sign * lo * (hi / lo).powf(i as f64 / (m - 1) as f64);
            let x = lf.invert(theta0 + d, xc - 4.0 * r, xc + 4.0 * r);
            samples.push((theta0 + d, lf.field(CuspField::W, x)));
        }
    }
    holder_exponent(&samples, theta0, f0, (lo * (1.0 - 1e-9), hi * (1.0 + 1e-9)), cfg.holder_min_points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_recovers_line() {
        let t = [0.0, 0.1, 0.2, 0.3];
        let y: Vec<f64> = t.iter().map(|t| 2.0 - 4.0 * t).collect();
        let f = LineFit::fit(&t, &y);
        assert!((f.slope + 4.0).abs() < 1e-12);
        assert!((f.root() - 0.5).abs() < 1e-12);
        assert!(f.rel_rms < 1e-14);
    }

    #[test]
    fn polyfit_exact_on_polynomial() {
        let s: Vec<f64> = (0..41).map(|i| -1.0 + i as f64 / 20.0).collect();
        let y: Vec<f64> = s.iter().map(|x| 1.0 - 2.0 * x + 0.5 * x.powi(3) + 0.25 * x.powi(5)).collect();
        let (c, cond) = polyfit(&s, &y, 5);
        for (a, b) in c.iter().zip([1.0, -2.0, 0.0, 0.5, 0.0, 0.25]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(cond < 1e3);
    }

    #[test]
    fn frac_with_zero_a4() {
        let b = [0.3, -1.2, 0.7, 2.0, 5.0];
        let f = frac_coefficients(CuspField::W, 8.0, 0.0, &b);
        assert!((f[1] - b[1] / 2.0).abs() < 1e-15);
        assert!((f[2] - b[2] / 4.0).abs() < 1e-15);
        let g = frac_coefficients(CuspField::Z, 8.0, 0.0, &b);
        assert!((g[3] - b[3] / 8.0).abs() < 1e-15);
        assert!((g[4] - b[4] / 16.0).abs() < 1e-15);
    }

    /// Independent check of the coefficient formulas by formal series in u = Δ^{1/3}.
    #[test]
    fn frac_formulas_match_series_reversion() {
        let (a3, a4): (f64, f64) = (3.7, -1.9);
        // y = Σ y_k u^k solving a3 y³ + a4 y⁴ = u³ order by order
        let order = 6;
        let mut y = vec![0.0; order + 1];
        y[1] = a3.powf(-1.0 / 3.0);
        let mul = |p: &[f64], q: &[f64]| {
            let mut r = vec![0.0; order + 1];
            for i in 0..=order {
                for j in 0..=order - i {
                    r[i + j] += p[i] * q[j];
                }
            }
            r
        };
        for k in 2..=order {
            // coefficient of u^{k+2} in a3 y³ + a4 y⁴ with y_k unknown: 3 a3 y1² y_k + known
            let y2 = mul(&y, &y);
            let y3 = mul(&y2, &y);
            let y4 = mul(&y3, &y);
            let known = if k + 2 <= order { a3 * y3[k + 2] + a4 * y4[k + 2] } else { break };
            y[k] = -known / (3.0 * a3 * y[1] * y[1]);
        }
        let b = [0.4, 1.3, -0.6, 2.2, 0.9];
        let mut f = vec![0.0; order + 1];
        let mut pow = vec![0.0; order + 1];
        pow[0] = 1.0;
        for bj in b {
            for i in 0..=order {
                f[i] += bj * pow[i];
            }
            pow = mul(&pow, &y);
        }
        let w = frac_coefficients(CuspField::W, a3, a4, &b);
        assert!((w[0] - f[0]).abs() < 1e-12);
        assert!((w[1] - f[1]).abs() < 1e-12);
        assert!((w[2] - f[2]).abs() < 1e-12);
        let bz = [0.4, 0.0, 0.0, 2.2, 0.9];
        let mut fz = vec![0.0; order + 1];
        let mut pow = vec![0.0; order + 1];
        pow[0] = 1.0;
        for bj in bz {
            for i in 0..=order {
                fz[i] += bj * pow[i];
            }
            pow = mul(&pow, &y);
        }
        let z = frac_coefficients(CuspField::Z, a3, a4, &bz);
        assert!((z[3] - fz[3]).abs() < 1e-12);
        assert!((z[4] - fz[4]).abs() < 1e-12);
        assert!(fz[1].abs() < 1e-14 && fz[2].abs() < 1e-14);
    }

    #[test]
    fn holder_of_power_laws() {
        let samples: Vec<(f64, f64)> = (1..=200)
            .flat_map(|i| {
                let d = 1e-4 * (1e3f64).powf(i as f64 / 200.0);
                [(d, d.cbrt()), (-d, -d.cbrt())]
            })
            .collect();
        let h = holder_exponent(&samples, 0.0, 0.0, (1e-3, 1e-2), 10).unwrap();
        assert!((h.mean - 1.0 / 3.0).abs() < 1e-3);
        let lin: Vec<(f64, f64)> = samples.iter().map(|&(t, _)| (t, t)).collect();
        let h = holder_exponent(&lin, 0.0, 0.0, (1e-3, 1e-2), 10).unwrap();
        assert!((h.mean - 1.0).abs() < 1e-3);
        assert!(matches!(holder_exponent(&lin, 0.0, 0.0, (1e-3, 1.1e-3), 10), Err(AnalysisError::TooFewPoints { .. })));
    }

    #[test]
    fn uniqueness_margin_sees_second_well() {
        let n = 64;
        let x = crate::spectral::grid(n);
        let e: Vec<f64> = x.iter().map(|x| 1.0 - 0.5 * (-(x * x) * 4.0).exp() - 0.3 * (-((x - 2.0) * (x - 2.0)) * 4.0).exp()).collect();
        let m = uniqueness_margin(&e);
        assert!((m - 0.2).abs() < 0.02, "{m}");
        let flat: Vec<f64> = x.iter().map(|x| 1.0 - 0.5 * (-(x * x) * 4.0).exp()).collect();
        assert!(uniqueness_margin(&flat) > 0.4);
    }
}
