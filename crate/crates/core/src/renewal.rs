//! Waiting-time distributions and renewal-process sampling.
//!
//! A waiting time is a probability density `f` on `[0, ∞)` with survival
//! `g(t) = 1 − ∫₀ᵗ f`. Collision times of a collisional model form a renewal
//! process built from `f`; the density of `n` events at `t₁ < … < t_n` within
//! the horizon `t` is taken in the form
//!
//! `p_n(t_n, …, t₁) = f(t − t_n) · f(t_n − t_{n−1}) ⋯ f(t₂ − t₁) · g(t₁)`,
//!
//! i.e. the survival factor sits on the first interval. This is the law of a
//! renewal process run backwards from the horizon; [`Direction::Reverse`]
//! samples it exactly, [`Direction::Forward`] samples the conventional
//! mirrored process.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::lindblad_traj::Trajectory;
use crate::qmatrix::C64;

/// Allowed deviation of a tabulated density's trapezoid integral from one.
pub const TABULATED_NORM_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub enum WaitingTime {
    Exponential { rate: f64 },
    Erlang { shape: u32, rate: f64 },
    Tabulated(TabulatedDensity),
}

/// Density sampled on a uniform grid `t_i = i·dt` starting at zero, linearly
/// interpolated in between and zero past the last node.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedDensity {
    dt: f64,
    values: Vec<f64>,
    // running trapezoid integral at the nodes
    cumulative: Vec<f64>,
}

/// Sampling direction for renewal trajectories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Waits drawn from time zero onwards; survival factor on the last interval.
    Forward,
    /// Waits drawn from the horizon backwards; survival factor on the first interval.
    #[default]
    Reverse,
}

fn check_rate(rate: f64) -> Result<()> {
    if !(rate > 0.0 && rate.is_finite()) {
        return input(format!("waiting-time rate must be positive and finite, got {rate}"));
    }
    Ok(())
}

impl TabulatedDensity {
    /// Trapezoid integral of the samples; used for the normalization check.
    pub fn trapezoid_mass(dt: f64, values: &[f64]) -> f64 {
        let n = values.len();
        if n < 2 {
            return 0.0;
        }
        dt * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1]))
    }

    /// Build without the normalization check (shape checks still apply).
    pub fn new_unnormalized(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return input(format!("tabulated density spacing must be positive, got {dt}"));
        }
        if values.len() < 2 {
            return input("tabulated density needs at least two samples");
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return input(format!("tabulated density has invalid value {v}"));
        }
        let mut cumulative = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in values.windows(2) {
            acc += 0.5 * dt * (w[0] + w[1]);
            cumulative.push(acc);
        }
        Ok(Self { dt, values, cumulative })
    }

    pub fn new(dt: f64, values: Vec<f64>) -> Result<Self> {
        let mass = Self::trapezoid_mass(dt, &values);
        if (mass - 1.0).abs() > TABULATED_NORM_TOL {
            return input(format!("tabulated density integrates to {mass}, expected 1 within {TABULATED_NORM_TOL:e}"));
        }
        Self::new_unnormalized(dt, values)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Last grid time; the density vanishes beyond it.
    pub fn support_end(&self) -> f64 {
        self.dt * (self.values.len() - 1) as f64
    }

    pub fn mass(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }

    fn cell(&self, t: f64) -> Option<(usize, f64)> {
        if t < 0.0 || t > self.support_end() {
            return None;
        }
        let x = t / self.dt;
        let i = (x.floor() as usize).min(self.values.len() - 2);
        Some((i, t - i as f64 * self.dt))
    }

    fn pdf(&self, t: f64) -> f64 {
        match self.cell(t) {
            None => 0.0,
            Some((i, s)) => self.values[i] + (self.values[i + 1] - self.values[i]) * s / self.dt,
        }
    }

    /// Exact integral of the interpolant over `[0, t]`.
    fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self.cell(t) {
            None => self.mass(),
            Some((i, s)) => {
                let slope = (self.values[i + 1] - self.values[i]) / self.dt;
                self.cumulative[i] + s * self.values[i] + 0.5 * slope * s * s
            }
        }
    }

    /// Parse a two-column `t,f` CSV. A non-numeric first row is treated as a header.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let (dt, fs) = Self::read_csv_samples(reader)?;
        Self::new(dt, fs)
    }

    /// As [`Self::from_csv_reader`] without the normalization check.
    pub fn from_csv_reader_unnormalized<R: Read>(reader: R) -> Result<Self> {
        let (dt, fs) = Self::read_csv_samples(reader)?;
        Self::new_unnormalized(dt, fs)
    }

    fn read_csv_samples<R: Read>(reader: R) -> Result<(f64, Vec<f64>)> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut ts = Vec::new();
        let mut fs = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return input(format!("csv row {}: expected 2 columns, got {}", row + 1, rec.len()));
            }
            let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match parsed {
                (Ok(t), Ok(f)) => {
                    ts.push(t);
                    fs.push(f);
                }
                _ if row == 0 => continue,
                _ => return input(format!("csv row {}: non-numeric value", row + 1)),
            }
        }
        if ts.len() < 2 {
            return input("csv must contain at least two samples");
        }
        if ts[0] != 0.0 {
            return input(format!("csv grid must start at t = 0, got {}", ts[0]));
        }
        let dt = ts[1] - ts[0];
        for (i, w) in ts.windows(2).enumerate() {
            let step = w[1] - w[0];
            if !(step > 0.0) || (step - dt).abs() > 1e-9 * dt.max(1.0) {
                return input(format!("csv row {}: time grid must be strictly increasing and uniform", i + 2));
            }
        }
        Ok((dt, fs))
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn from_csv_path_unnormalized(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader_unnormalized(std::fs::File::open(path)?)
    }
}

impl WaitingTime {
    pub fn exponential(rate: f64) -> Result<Self> {
        check_rate(rate)?;
        Ok(Self::Exponential { rate })
    }

    pub fn erlang(shape: u32, rate: f64) -> Result<Self> {
        check_rate(rate)?;
        if shape == 0 {
            return input("Erlang shape must be at least 1");
        }
        Ok(Self::Erlang { shape, rate })
    }

    pub fn tabulated(dt: f64, values: Vec<f64>) -> Result<Self> {
        Ok(Self::Tabulated(TabulatedDensity::new(dt, values)?))
    }

    /// Density `f(t)`; zero for negative `t`.
    pub fn pdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match self {
            Self::Exponential { rate } => rate * (-rate * t).exp(),
            Self::Erlang { shape, rate } => {
                let k = *shape as i32;
                let x = rate * t;
                rate * x.powi(k - 1) * (-x).exp() / factorial(k as u32 - 1)
            }
            Self::Tabulated(tab) => tab.pdf(t),
        }
    }

    /// `f(0)`; for tabulated densities this is the first sample.
    pub fn f0(&self) -> f64 {
        match self {
            Self::Tabulated(tab) => tab.values[0],
            _ => self.pdf(0.0),
        }
    }

    /// `g(t) = 1 − ∫₀ᵗ f`.
    pub fn survival(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return input(format!("survival time must be non-negative, got {t}"));
        }
        Ok(self.survival_at(t))
    }

    pub(crate) fn survival_at(&self, t: f64) -> f64 {
        match self {
            Self::Exponential { rate } => (-rate * t).exp(),
            Self::Erlang { shape, rate } => {
                let x = rate * t;
                let mut term = 1.0;
                let mut sum = 1.0;
                for j in 1..*shape {
                    term *= x / j as f64;
                    sum += term;
                }
                sum * (-x).exp()
            }
            Self::Tabulated(tab) => (1.0 - tab.cdf(t)).clamp(0.0, 1.0),
        }
    }

    /// Laplace transform `f̂(u) = ∫₀^∞ e^{−ut} f(t) dt`.
    ///
    /// The closed forms are continued analytically to the whole plane except
    /// their pole at `u = −λ`; the tabulated transform is entire.
    pub fn laplace_pdf(&self, u: C64) -> Result<C64> {
        if !(u.re.is_finite() && u.im.is_finite()) {
            return input(format!("Laplace variable must be finite, got {u}"));
        }
        match self {
            Self::Exponential { rate } => {
                let den = u + rate;
                if den.norm() < 1e-300 {
                    return input(format!("Laplace transform diverges at u = {u}"));
                }
                Ok(C64::new(*rate, 0.0) / den)
            }
            Self::Erlang { shape, rate } => {
                let den = u + rate;
                if den.norm() < 1e-300 {
                    return input(format!("Laplace transform diverges at u = {u}"));
                }
                Ok((C64::new(*rate, 0.0) / den).powu(*shape))
            }
            Self::Tabulated(tab) => {
                let n = tab.values.len() - 1;
                let sum: C64 = tab
                    .values
                    .iter()
                    .enumerate()
                    .map(|(i, &f)| {
                        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                        (-u * (i as f64 * tab.dt)).exp() * (w * f)
                    })
                    .sum();
                Ok(sum * tab.dt)
            }
        }
    }

    /// Draw one waiting time. A defective tabulated density can return `+∞`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Exponential { rate } => Exp::new(*rate).expect("validated rate").sample(rng),
            Self::Erlang { shape, rate } => {
                let exp = Exp::new(*rate).expect("validated rate");
                (0..*shape).map(|_| exp.sample(rng)).sum()
            }
            Self::Tabulated(tab) => {
                let u: f64 = rng.random();
                let tail = 1.0 - tab.mass();
                if u < tail {
                    return f64::INFINITY;
                }
                // g is non-increasing; find g(τ) = u by bisection.
                let (mut lo, mut hi) = (0.0, tab.support_end());
                while hi - lo > 1e-13 * tab.support_end().max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    if 1.0 - tab.cdf(mid) > u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    fn sample_positive<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let w = self.sample(rng);
            if w > 0.0 {
                return w;
            }
        }
    }

    /// `P(N(t) ≥ n)`: probability that at least `n` renewals fall in `[0, t]`,
    /// i.e. that the sum of `n` waits is at most `t`.
    pub fn count_tail(&self, n: usize, t: f64) -> f64 {
        if n == 0 {
            return 1.0;
        }
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            Self::Exponential { rate } => erlang_cdf(n as u64, rate * t),
            Self::Erlang { shape, rate } => erlang_cdf(n as u64 * *shape as u64, rate * t),
            Self::Tabulated(_) => self.count_tail_quadrature(n, t, 4000),
        }
    }

    /// `P(S_n ≤ t)` from repeated trapezoid convolution of `f` on `steps` cells.
    fn count_tail_quadrature(&self, n: usize, t: f64, steps: usize) -> f64 {
        let h = t / steps as f64;
        let f: Vec<f64> = (0..=steps).map(|i| self.pdf(i as f64 * h)).collect();
        let mut dens = f.clone();
        for _ in 1..n {
            let mut next = vec![0.0; steps + 1];
            for i in 1..=steps {
                let mut acc = 0.0;
                for j in 0..=i {
                    let w = if j == 0 || j == i { 0.5 } else { 1.0 };
                    acc += w * f[i - j] * dens[j];
                }
                next[i] = acc * h;
            }
            dens = next;
        }
        let mass = TabulatedDensity::trapezoid_mass(h, &dens);
        mass.clamp(0.0, 1.0)
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Erlang(m, 1) distribution function at `x`, summed from the upper Poisson
/// tail `e^{−x} Σ_{j≥m} x^j/j!` so that tiny values keep relative accuracy.
fn erlang_cdf(m: u64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x > m as f64 + 40.0 * (m as f64).sqrt() + 40.0 {
        return 1.0;
    }
    let log_first = -x + m as f64 * x.ln() - ln_factorial(m);
    let mut term = log_first.exp();
    let mut sum = 0.0;
    let mut j = m;
    loop {
        sum += term;
        j += 1;
        term *= x / j as f64;
        if term < 1e-18 * sum || term == 0.0 {
            break;
        }
    }
    sum.min(1.0)
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Draw one renewal trajectory on `[0, horizon]`.
pub fn sample_renewal<R: Rng + ?Sized>(wt: &WaitingTime, horizon: f64, rng: &mut R, direction: Direction) -> Trajectory {
    let mut times = Vec::new();
    let mut elapsed = 0.0;
    loop {
        elapsed += wt.sample_positive(rng);
        if elapsed >= horizon {
            break;
        }
        times.push(match direction {
            Direction::Forward => elapsed,
            Direction::Reverse => horizon - elapsed,
        });
    }
    if direction == Direction::Reverse {
        times.reverse();
    }
    Trajectory::new(horizon.max(0.0), times).expect("sampled times are ordered inside the horizon")
}

/// Collisional trajectory density `f(t − t_n) ⋯ f(t₂ − t₁) g(t₁)`; `g(t)` for no events.
pub fn pn_density(wt: &WaitingTime, traj: &Trajectory) -> f64 {
    let times = traj.jump_times();
    let t = traj.horizon();
    match times {
        [] => wt.survival_at(t),
        [first, ..] => {
            let mut p = wt.survival_at(*first) * wt.pdf(t - times[times.len() - 1]);
            for w in times.windows(2) {
                p *= wt.pdf(w[1] - w[0]);
            }
            p
        }
    }
}
