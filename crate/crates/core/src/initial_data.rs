//! Initial data at `t = −ε`: a canonical cutoff-cubic-well family, the
//! constraint validator, random perturbations and CSV/JSON import/export.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::euler_core::{EulerError, Exponents, Params, StateField};
use crate::spectral::{grid, grid_origin, Spectral, OVERSAMPLE};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("initial data failed validation: {}", .0.failures().join(", "))]
    Invalid(Box<ValidationReport>),
    #[error(transparent)]
    Euler(#[from] EulerError),
    #[error("invalid family parameters: {0}")]
    BadFamily(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed data file {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
}

/// Parameters of the canonical data family.
///
/// `w0′ = −A·(χ(s)(1 − q(s)) − mean)` with `s = x/ε^{3/2}`, where
/// `q(s) = κ∫_0^{|s|} t h(t) dt`, `h` a smooth step from 1 to 0 centred at
/// `bend_center`, and `χ` a cutoff centred at `cutoff_center`. The constant
/// `A` makes `min w0′ = −1/ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub w_bar: f64,
    pub kappa: f64,
    pub bend_center: f64,
    pub bend_width: f64,
    pub cutoff_center: f64,
    pub cutoff_width: f64,
    pub z_bar: f64,
    pub z_amp: f64,
    pub z_phase: f64,
    pub k_amp: f64,
    pub k_phase: f64,
    pub a_bar: f64,
    pub a_amp: f64,
    pub a_phase: f64,
    /// Wavenumber of the z, k, a modes; `None` means `round(1/ε)`.
    pub mode: Option<usize>,
}

impl Default for Family {
    fn default() -> Self {
        Self {
            w_bar: 1.0,
            kappa: 1.5,
            bend_center: 1.5,
            bend_width: 0.45,
            cutoff_center: 3.0,
            cutoff_width: 0.5,
            z_bar: 0.0,
            z_amp: 0.5,
            z_phase: 0.7,
            k_amp: 0.5,
            k_phase: 1.3,
            a_bar: 0.0,
            a_amp: 0.5,
            a_phase: 2.1,
            mode: None,
        }
    }
}

impl Family {
    /// Isentropic variant with z, k, a perturbations switched off.
    pub fn isentropic() -> Self {
        Self { z_amp: 0.0, k_amp: 0.0, a_amp: 0.0, ..Self::default() }
    }

    fn check(&self) -> Result<(), DataError> {
        if !(0.5..=2.0).contains(&self.w_bar) {
            return Err(DataError::BadFamily(format!("w_bar = {} outside [1/2, 2]", self.w_bar)));
        }
        for (name, v) in [
            ("kappa", self.kappa),
            ("bend_width", self.bend_width),
            ("cutoff_width", self.cutoff_width),
            ("z_amp", self.z_amp),
            ("k_amp", self.k_amp),
            ("a_amp", self.a_amp),
        ] {
            if !(v >= 0.0) {
                return Err(DataError::BadFamily(format!("{name} = {v} must be nonnegative")));
            }
        }
        if !(self.kappa > 0.0 && self.bend_width > 0.0 && self.cutoff_width > 0.0) {
            return Err(DataError::BadFamily("kappa and widths must be positive".into()));
        }
        Ok(())
    }

    /// `q(s) = κ ∫_0^{|s|} t·½erfc((t − m)/b) dt` in closed form.
    pub fn q(&self, s: f64) -> f64 {
        let (m, b) = (self.bend_center, self.bend_width);
        let p = |u: f64| u * libm::erfc(u) - (-u * u).exp() / PI.sqrt();
        let q = |u: f64| 0.5 * u * u * libm::erfc(u) - u * (-u * u).exp() / (2.0 * PI.sqrt()) + 0.25 * libm::erf(u);
        let u0 = -m / b;
        let u1 = (s.abs() - m) / b;
        self.kappa * 0.5 * b * (m * (p(u1) - p(u0)) + b * (q(u1) - q(u0)))
    }

    /// Unnormalized well shape `χ(s)(1 − q(s))`.
    pub fn well(&self, s: f64) -> f64 {
        let chi = 0.5 * libm::erfc((s.abs() - self.cutoff_center) / self.cutoff_width);
        chi * (1.0 - self.q(s))
    }
}

/// Everything needed to build canonical data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub params: Params,
    pub family: Family,
    pub rng_seed: u64,
}

impl DataSpec {
    pub fn new(params: Params) -> Self {
        Self { params, family: Family::default(), rng_seed: 0 }
    }
}

/// Builds the canonical data and validates it.
pub fn build_canonical(spec: &DataSpec) -> Result<StateField, DataError> {
    let data = build_unchecked(spec)?;
    let report = validate(&data, &spec.params);
    if report.valid {
        Ok(data)
    } else {
        Err(DataError::Invalid(Box::new(report)))
    }
}

/// Builds the canonical data without running the validator.
pub fn build_unchecked(spec: &DataSpec) -> Result<StateField, DataError> {
    spec.params.check()?;
    let fam = &spec.family;
    fam.check()?;
    let p = &spec.params;
    let n = p.n_grid;
    let eps = p.eps;
    let x = grid(n);
    let scale = eps.powf(1.5);
    let g: Vec<f64> = x.iter().map(|&x| fam.well(x / scale)).collect();
    let gbar = g.iter().sum::<f64>() / n as f64;
    let amp = 1.0 / (eps * (fam.well(0.0) - gbar));
    let wp: Vec<f64> = g.iter().map(|g| -amp * (g - gbar)).collect();
    let spec_ops = Spectral::new(n);
    let prim = spec_ops.antiderivative(&wp);
    let w: Vec<f64> = prim.iter().map(|v| fam.w_bar + v).collect();

    let m = fam.mode.unwrap_or_else(|| (1.0 / eps).round().max(1.0) as usize) as f64;
    let e = &p.exponents;
    let amp_exp = |ex: &[f64; 6]| (0..6).map(|j| ex[j] + j as f64 * (1.0 / m).ln() / eps.ln()).fold(f64::MIN, f64::max);
    let z_scale = eps.powf(amp_exp(&e.beta));
    let k_scale = eps.powf(amp_exp(&e.gamma));
    let a_scale = eps.powf(amp_exp(&e.alpha));
    let z = x.iter().map(|&x| fam.z_bar + fam.z_amp * z_scale * (m * x + fam.z_phase).sin()).collect();
    let k = x.iter().map(|&x| fam.k_amp * k_scale * (m * x + fam.k_phase).sin()).collect();
    let a = x.iter().map(|&x| fam.a_bar + fam.a_amp * a_scale * (m * x + fam.a_phase).sin()).collect();
    Ok(StateField::new(-eps, w, z, k, a)?)
}

/// Tuning of the validator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    /// Constant standing in for every `≲`.
    pub lesssim: f64,
    /// Admissible range for `w0`.
    pub w_range: (f64, f64),
    /// Relative tolerance on `min w0′ = −1/ε`.
    pub normalization_tol: f64,
    /// Tolerance on `|w0″(0)|` in units of `ε^{-2}`.
    pub second_at_zero_tol: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self { lesssim: 50.0, w_range: (0.25, 4.0), normalization_tol: 1e-8, second_at_zero_tol: 1e-6 }
    }
}

/// One evaluated constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub passed: bool,
    /// Measured quantity (normalized so that it is compared with `bound`).
    pub measured: f64,
    pub bound: f64,
    /// Location θ of the worst case.
    pub location: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<ConstraintCheck>,
    pub valid: bool,
}

impl ValidationReport {
    pub fn failures(&self) -> Vec<String> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Fine {
    x: Vec<f64>,
    derivs: Vec<Vec<f64>>,
}

fn oversampled_derivatives(spec: &Spectral, f: &[f64], max_order: u32) -> Fine {
    let n = spec.n();
    let hf = 2.0 * PI / (OVERSAMPLE * n) as f64;
    let x: Vec<f64> = (0..OVERSAMPLE * n).map(|j| grid_origin(n) + j as f64 * hf).map(crate::spectral::wrap_angle).collect();
    let hat = spec.forward(f);
    let derivs = (0..=max_order)
        .map(|o| {
            let d = spec.derivative_hat(&hat, o);
            spec.upsample_hat(&spec.forward(&d))
        })
        .collect();
    Fine { x, derivs }
}

fn argmax_by<F: Fn(usize) -> Option<f64>>(n: usize, f: F) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for i in 0..n {
        if let Some(v) = f(i) {
            if v > best.0 {
                best = (v, i);
            }
        }
    }
    best
}

/// Evaluates every constraint with the default configuration.
pub fn validate(data: &StateField, params: &Params) -> ValidationReport {
    validate_with(data, params, &ValidationConfig::default())
}

/// Evaluates every constraint on a 4× oversampled spectral interpolant.
pub fn validate_with(data: &StateField, params: &Params, cfg: &ValidationConfig) -> ValidationReport {
    let n = data.n();
    let spec = Spectral::new(n);
    let eps = params.eps;
    let mu = params.mu;
    let k_const = cfg.lesssim;
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, measured: f64, bound: f64, location: f64| {
        checks.push(ConstraintCheck { name: name.to_string(), passed: passed && measured.is_finite(), measured, bound, location });
    };

    let fw = oversampled_derivatives(&spec, &data.w, 5);
    let xs = &fw.x;
    let m = xs.len();
    let w = &fw.derivs[0];

    // w0 ∼ 1
    let (wmin, imin) = w.iter().enumerate().fold((f64::MAX, 0), |acc, (i, &v)| if v < acc.0 { (v, i) } else { acc });
    let (wmax, imax) = w.iter().enumerate().fold((f64::MIN, 0), |acc, (i, &v)| if v > acc.0 { (v, i) } else { acc });
    push("w0_order_one_lower", wmin >= cfg.w_range.0, wmin, cfg.w_range.0, xs[imin]);
    push("w0_order_one_upper", wmax <= cfg.w_range.1, wmax, cfg.w_range.1, xs[imax]);

    // normalization and uniqueness of the minimum of w0′
    let wp = &fw.derivs[1];
    let (neg_min, i_min) = argmax_by(m, |i| Some(-wp[i]));
    let min_wp = -neg_min;
    let rel = (eps * min_wp + 1.0).abs();
    push("w0_prime_min_value", rel <= cfg.normalization_tol, eps * min_wp, -1.0, xs[i_min]);
    let base_grid = grid(n);
    let base_wp = spec.derivative(&data.w, 1);
    let (_, ib) = argmax_by(n, |i| Some(-base_wp[i]));
    let nearest0 = n / 2 - 1;
    push("w0_prime_argmin_at_zero", ib == nearest0 && xs[i_min].abs() <= spec.dx() / 2.0, xs[i_min], 0.0, base_grid[ib]);
    // second-lowest local minimum of w0′ on the fine grid
    let mut second = f64::INFINITY;
    let mut second_loc = 0.0;
    for i in 0..m {
        let l = wp[(i + m - 1) % m];
        let r = wp[(i + 1) % m];
        if wp[i] <= l && wp[i] <= r && i != i_min && (i as i64 - i_min as i64).abs() > 1 && wp[i] < second {
            second = wp[i];
            second_loc = xs[i];
        }
    }
    let gap = if second.is_finite() { eps * (second - min_wp) } else { f64::INFINITY };
    push("w0_prime_unique_min", gap > 0.0, gap, 0.0, second_loc);
    // |w0′| < 1/ε away from the minimum
    let (abs_max, i_abs) = argmax_by(m, |i| if (xs[i] - xs[i_min]).abs() > 2.0 * spec.dx() { Some(eps * wp[i].abs()) } else { None });
    push("w0_prime_bounded", abs_max < 1.0, abs_max, 1.0, xs[i_abs]);

    // w0′ ≥ −1/ε + C ε^{μ/2−1} off the well
    let well = eps.powf(1.5);
    let (neg_c, i_c) = argmax_by(m, |i| if xs[i].abs() >= well { Some(-(wp[i] + 1.0 / eps) / eps.powf(mu / 2.0 - 1.0)) } else { None });
    push("w0_prime_off_well_margin", -neg_c > 0.0, -neg_c, 0.0, xs[i_c]);

    // w0‴ ∼ ε^{-4} inside the well
    let w3 = &fw.derivs[3];
    let inside: Vec<usize> = (0..m).filter(|&i| xs[i].abs() <= well).collect();
    let (lo3, ilo3) = inside.iter().map(|&i| (w3[i] * eps.powi(4), i)).fold((f64::MAX, 0), |a, b| if b.0 < a.0 { b } else { a });
    let (hi3, ihi3) = inside.iter().map(|&i| (w3[i] * eps.powi(4), i)).fold((f64::MIN, 0), |a, b| if b.0 > a.0 { b } else { a });
    push("w0_third_in_well_lower", lo3 >= 1.0 / k_const, lo3, 1.0 / k_const, xs[ilo3]);
    push("w0_third_in_well_upper", hi3 <= k_const, hi3, k_const, xs[ihi3]);

    // |∂⁴w0| ≲ ε^{μ−5} on |x| ≤ ε²
    let w4 = &fw.derivs[4];
    let (r4, i4) = argmax_by(m, |i| if xs[i].abs() <= eps * eps { Some(w4[i].abs() / eps.powf(mu - 5.0)) } else { None });
    push("w0_fourth_near_zero", r4 <= k_const, r4, k_const, xs[i4]);

    // ‖∂⁵w0‖ ≲ ε^{-7}
    let w5 = &fw.derivs[5];
    let (r5, i5) = argmax_by(m, |i| Some(w5[i].abs() * eps.powi(7)));
    push("w0_fifth_norm", r5 <= k_const, r5, k_const, xs[i5]);

    // consequences: w0″(0) = 0 and ‖w0″‖ ≲ ε^{-5/2}
    let w2 = &fw.derivs[2];
    let w2_at0 = spec.eval(&spec.forward(&spec.derivative(&data.w, 2)), 0.0, 0) * eps * eps;
    push("w0_second_at_zero", w2_at0.abs() <= cfg.second_at_zero_tol, w2_at0.abs(), cfg.second_at_zero_tol, 0.0);
    let (r2, i2) = argmax_by(m, |i| Some(w2[i].abs() * eps.powf(2.5)));
    push("w0_second_norm", r2 <= k_const, r2, k_const, xs[i2]);

    // derivative bounds on z0, k0, a0
    let e: &Exponents = &params.exponents;
    for (name, f, ex) in [("z0", &data.z, &e.beta), ("k0", &data.k, &e.gamma), ("a0", &data.a, &e.alpha)] {
        let ff = oversampled_derivatives(&spec, f, 5);
        for j in 0..6 {
            let d = &ff.derivs[j];
            let (r, i) = argmax_by(m, |i| Some(d[i].abs() / eps.powf(ex[j])));
            push(&format!("{name}_derivative_{j}"), r <= k_const, r, k_const, xs[i]);
        }
    }

    // max z0 < min w0
    let zmax = data.z.iter().cloned().fold(f64::MIN, f64::max);
    let zfine = oversampled_derivatives(&spec, &data.z, 0);
    let (zmax_f, iz) = argmax_by(m, |i| Some(zfine.derivs[0][i]));
    let zmax = zmax.max(zmax_f);
    push("max_z_below_min_w", zmax < wmin, wmin - zmax, 0.0, xs[iz]);

    let valid = checks.iter().all(|c| c.passed);
    ValidationReport { checks, valid }
}

/// Burgers test datum `u0 = −sin(θ − shift)` at `t0`, carried in w; other fields are zero.
/// The first gradient blowup is at `t0 + 1`, label `shift`.
pub fn burgers_sine(n: usize, t0: f64, shift: f64) -> StateField {
    let w = grid(n).iter().map(|x| -(x - shift).sin()).collect();
    StateField { t: t0, w, z: vec![0.0; n], k: vec![0.0; n], a: vec![0.0; n] }
}

/// Adds a band-limited random perturbation of ∞-norm `amplitude` to every field.
pub fn perturb(data: &StateField, amplitude: f64, seed: u64) -> StateField {
    assert!(amplitude >= 0.0, "amplitude must be nonnegative");
    if amplitude == 0.0 {
        return data.clone();
    }
    const MODES: usize = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = data.theta();
    let mut noise = || {
        let coef: Vec<(f64, f64, f64)> = (0..=MODES).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0)).collect();
        let raw: Vec<f64> = x
            .iter()
            .map(|&x| coef.iter().enumerate().map(|(k, (c, s, _))| c * (k as f64 * x).cos() + s * (k as f64 * x).sin()).sum())
            .collect();
        let sup = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        raw.into_iter().map(|v| amplitude * v / sup).collect::<Vec<f64>>()
    };
    let add = |f: &[f64], d: Vec<f64>| f.iter().zip(d).map(|(a, b)| a + b).collect::<Vec<f64>>();
    let w = add(&data.w, noise());
    let z = add(&data.z, noise());
    let k = add(&data.k, noise());
    let a = add(&data.a, noise());
    StateField { t: data.t, w, z, k, a }
}

/// Translates the data so the minimum of `w0′` sits at θ = 0 and rescales
/// (w, z, a) so that it equals `−1/ε`.
///
/// The rescaling uses the symmetry `(w, z, k, a)(θ, t) ↦ λ(w, z, ·, a)(θ, λt)`
/// of the system, with k left unchanged.
pub fn renormalize(data: &StateField, params: &Params) -> StateField {
    let n = data.n();
    let spec = Spectral::new(n);
    let wp = spec.derivative(&data.w, 1);
    let (_, i0) = argmax_by(n, |i| Some(-wp[i]));
    let x = grid(n);
    let hat = spec.forward(&data.w);
    let mut s = x[i0];
    for _ in 0..30 {
        let d2 = spec.eval(&hat, s, 2);
        let d3 = spec.eval(&hat, s, 3);
        if d3 <= 0.0 {
            break;
        }
        let step = d2 / d3;
        s -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    let minval = spec.eval(&hat, s, 1);
    let lambda = -1.0 / (params.eps * minval);
    let tr = |f: &[f64]| spec.shift(f, s);
    StateField {
        t: data.t,
        w: tr(&data.w).into_iter().map(|v| lambda * v).collect(),
        z: tr(&data.z).into_iter().map(|v| lambda * v).collect(),
        k: tr(&data.k),
        a: tr(&data.a).into_iter().map(|v| lambda * v).collect(),
    }
}

/// Self-describing header stored next to a data CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataHeader {
    pub eps: f64,
    pub mu: f64,
    pub gamma: f64,
    pub exponents: Exponents,
    pub n_grid: usize,
    pub t: f64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.to_path_buf(), source }
}

/// Writes `<stem>.csv` (θ, w, z, k, a) and `<stem>.json` (header).
pub fn export_data(data: &StateField, params: &Params, stem: &Path) -> Result<(), DataError> {
    let csv = stem.with_extension("csv");
    let json = stem.with_extension("json");
    let mut out = String::from("theta,w,z,k,a\n");
    for (i, th) in data.theta().iter().enumerate() {
        out.push_str(&format!("{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n", th, data.w[i], data.z[i], data.k[i], data.a[i]));
    }
    fs::write(&csv, out).map_err(io_err(&csv))?;
    let header = DataHeader { eps: params.eps, mu: params.mu, gamma: params.gamma, exponents: params.exponents, n_grid: data.n(), t: data.t };
    fs::write(&json, serde_json::to_string_pretty(&header).expect("header serializes")).map_err(io_err(&json))?;
    Ok(())
}

/// Reads data written by [`export_data`].
pub fn import_data(stem: &Path) -> Result<(StateField, Params), DataError> {
    let csv = stem.with_extension("csv");
    let json = stem.with_extension("json");
    let htext = fs::read_to_string(&json).map_err(io_err(&json))?;
    let header: DataHeader = serde_json::from_str(&htext).map_err(|e| DataError::Parse { path: json.clone(), msg: e.to_string() })?;
    let text = fs::read_to_string(&csv).map_err(io_err(&csv))?;
    let mut cols: [Vec<f64>; 4] = Default::default();
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| DataError::Parse { path: csv.clone(), msg: format!("line {}: {e}", ln + 1) })?;
        if vals.len() != 5 {
            return Err(DataError::Parse { path: csv.clone(), msg: format!("line {}: expected 5 columns", ln + 1) });
        }
        for c in 0..4 {
            cols[c].push(vals[c + 1]);
        }
    }
    if cols[0].len() != header.n_grid {
        return Err(DataError::Parse { path: csv, msg: format!("expected {} rows, found {}", header.n_grid, cols[0].len()) });
    }
    let [w, z, k, a] = cols;
    let params = Params { eps: header.eps, mu: header.mu, gamma: header.gamma, exponents: header.exponents, n_grid: header.n_grid };
    params.check()?;
    Ok((StateField::new(header.t, w, z, k, a)?, params))
}
