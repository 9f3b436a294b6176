//! Traffic model: fundamental diagram, factorised noise, domain and initial
//! data, plus executable checks of the standing assumptions.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::math::{self, Poly};
use crate::{Error, Result};

/// Natural cubic spline through `(x_i, y_i)`, used for tabulated fundamental
/// diagrams.
#[derive(Clone, Debug, PartialEq)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    second: Vec<f64>,
}

impl CubicSpline {
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n < 3 || ys.len() != n {
            return Err(Error::config("spline needs at least 3 knots with matching values"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("spline knots must be strictly increasing"));
        }
        // Tridiagonal solve for the knot second derivatives, natural ends.
        let mut second = alloc::vec![0.0; n];
        let mut diag = alloc::vec![0.0; n];
        let mut rhs = alloc::vec![0.0; n];
        let mut upper = alloc::vec![0.0; n];
        diag[0] = 1.0;
        diag[n - 1] = 1.0;
        for i in 1..n - 1 {
            let h0 = xs[i] - xs[i - 1];
            let h1 = xs[i + 1] - xs[i];
            let lower = h0 / 6.0;
            diag[i] = (h0 + h1) / 3.0;
            upper[i] = h1 / 6.0;
            rhs[i] = (ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0;
            // forward elimination against the previous row
            let m = lower / diag[i - 1];
            diag[i] -= m * upper[i - 1];
            rhs[i] -= m * rhs[i - 1];
        }
        for i in (1..n - 1).rev() {
            second[i] = (rhs[i] - upper[i] * second[i + 1]) / diag[i];
        }
        Ok(CubicSpline {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            second,
        })
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h
                / 6.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FluxKind {
    /// `f = u_f ρ (1 − ρ/ρ_max)`.
    Greenshields,
    /// `f = u_f ρ exp(−ρ²/(2 k0²))`.
    Drake { k0: f64 },
    /// Smooth interpolant of a measured diagram; derivatives by central
    /// differences.
    TabulatedSmooth(CubicSpline),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FluxFunction {
    kind: FluxKind,
    u_f: f64,
    rho_max: f64,
}

const FD_STEP: f64 = 1e-5;

impl FluxFunction {
    pub fn greenshields(u_f: f64, rho_max: f64) -> Result<Self> {
        Self::checked(FluxKind::Greenshields, u_f, rho_max)
    }

    pub fn drake(u_f: f64, rho_max: f64, k0: f64) -> Result<Self> {
        if !(k0 > 0.0) {
            return Err(Error::config("Drake k0 must be positive"));
        }
        Self::checked(FluxKind::Drake { k0 }, u_f, rho_max)
    }

    /// Tabulated diagram; the table must span `[0, ρ_max]` and start at zero
    /// flow.
    pub fn tabulated(u_f: f64, rho_max: f64, rho: &[f64], flow: &[f64]) -> Result<Self> {
        let spline = CubicSpline::new(rho, flow)?;
        if rho[0].abs() > 1e-12 || (rho[rho.len() - 1] - rho_max).abs() > 1e-12 {
            return Err(Error::config("flux table must span [0, rho_max]"));
        }
        if flow[0].abs() > 1e-12 {
            return Err(Error::config("flux table must satisfy f(0) = 0"));
        }
        Self::checked(FluxKind::TabulatedSmooth(spline), u_f, rho_max)
    }

    fn checked(kind: FluxKind, u_f: f64, rho_max: f64) -> Result<Self> {
        if !(u_f > 0.0) || !(rho_max > 0.0) {
            return Err(Error::config("u_f and rho_max must be positive"));
        }
        Ok(FluxFunction { kind, u_f, rho_max })
    }

    pub fn kind(&self) -> &FluxKind {
        &self.kind
    }

    pub fn u_f(&self) -> f64 {
        self.u_f
    }

    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    fn check(&self, rho: f64) -> Result<()> {
        Error::check_range("density", rho, 0.0, self.rho_max)
    }

    /// Flow `f(ρ)`, range-checked.
    pub fn value(&self, rho: f64) -> Result<f64> {
        self.check(rho)?;
        Ok(self.f(rho))
    }

    /// Characteristic speed `f′(ρ)`, range-checked.
    pub fn prime(&self, rho: f64) -> Result<f64> {
        self.check(rho)?;
        Ok(self.df(rho))
    }

    pub fn f(&self, rho: f64) -> f64 {
        match &self.kind {
            FluxKind::Greenshields => self.u_f * rho * (1.0 - rho / self.rho_max),
            FluxKind::Drake { k0 } => self.u_f * rho * math::exp(-rho * rho / (2.0 * k0 * k0)),
            FluxKind::TabulatedSmooth(s) => s.eval(rho),
        }
    }

    pub fn df(&self, rho: f64) -> f64 {
        match &self.kind {
            FluxKind::Greenshields => self.u_f * (1.0 - 2.0 * rho / self.rho_max),
            FluxKind::Drake { k0 } => {
                let k2 = k0 * k0;
                self.u_f * math::exp(-rho * rho / (2.0 * k2)) * (1.0 - rho * rho / k2)
            }
            FluxKind::TabulatedSmooth(s) => {
                (s.eval(rho + FD_STEP) - s.eval(rho - FD_STEP)) / (2.0 * FD_STEP)
            }
        }
    }

    pub fn d2f(&self, rho: f64) -> f64 {
        match &self.kind {
            FluxKind::Greenshields => -2.0 * self.u_f / self.rho_max,
            FluxKind::Drake { k0 } => {
                let k2 = k0 * k0;
                self.u_f * math::exp(-rho * rho / (2.0 * k2)) * rho / k2 * (rho * rho / k2 - 3.0)
            }
            FluxKind::TabulatedSmooth(s) => {
                let h = 1e-4;
                (s.eval(rho + h) - 2.0 * s.eval(rho) + s.eval(rho - h)) / (h * h)
            }
        }
    }

    pub fn d3f(&self, rho: f64) -> f64 {
        match &self.kind {
            FluxKind::Greenshields => 0.0,
            FluxKind::Drake { k0 } => {
                let k2 = k0 * k0;
                let g = math::exp(-rho * rho / (2.0 * k2));
                self.u_f * g * (-math::powi(rho, 4) / (k2 * k2 * k2) + 6.0 * rho * rho / (k2 * k2) - 3.0 / k2)
            }
            FluxKind::TabulatedSmooth(_) => {
                let h = 1e-3;
                (self.d2f(rho + h) - self.d2f(rho - h)) / (2.0 * h)
            }
        }
    }

    /// Speed–density relation `v(ρ) = f(ρ)/ρ`.
    pub fn speed(&self, rho: f64) -> f64 {
        match &self.kind {
            FluxKind::Greenshields => self.u_f * (1.0 - rho / self.rho_max),
            FluxKind::Drake { k0 } => self.u_f * math::exp(-rho * rho / (2.0 * k0 * k0)),
            FluxKind::TabulatedSmooth(_) => {
                if rho < 1e-9 {
                    self.df(0.0)
                } else {
                    self.f(rho) / rho
                }
            }
        }
    }

    /// Density on the decreasing speed branch with `v(ρ) = u`.
    pub fn inverse_speed(&self, u: f64) -> Result<f64> {
        let hi_speed = self.speed(0.0);
        let lo_speed = self.speed(self.rho_max);
        Error::check_range("speed", u, lo_speed, hi_speed)?;
        let rho = math::bisect(|r| self.speed(r) - u, 0.0, self.rho_max, 1e-15 * self.rho_max);
        Ok(rho)
    }

    /// Largest characteristic speed magnitude on `[0, ρ_max]`, never below
    /// `u_f`.
    pub fn max_abs_prime(&self) -> f64 {
        let n = 2000;
        (0..=n)
            .map(|i| self.df(self.rho_max * i as f64 / n as f64).abs())
            .fold(self.u_f, f64::max)
    }

    /// Capacity density, the unique zero of `f′` on a unimodal concave
    /// diagram.
    pub fn capacity_density(&self) -> Result<f64> {
        let n = 4000;
        let mut changes = 0;
        let mut bracket = None;
        let mut prev = self.df(0.0);
        if prev <= 0.0 {
            return Err(Error::UnsupportedFlux(String::from("f'(0) must be positive")));
        }
        for i in 1..=n {
            let r = self.rho_max * i as f64 / n as f64;
            let d = self.df(r);
            if (d > 0.0) != (prev > 0.0) {
                changes += 1;
                bracket = Some((self.rho_max * (i - 1) as f64 / n as f64, r));
            }
            prev = d;
        }
        match (changes, bracket) {
            (1, Some((lo, hi))) => Ok(math::bisect(|r| self.df(r), lo, hi, 1e-15)),
            _ => Err(Error::UnsupportedFlux(format!(
                "flux is not unimodal ({changes} sign changes of f')"
            ))),
        }
    }
}

/// Spatial weight `e_k(x)` of a noise mode.
#[derive(Clone, Debug, PartialEq)]
pub enum SpatialBasis {
    Constant,
    /// `sin(k π x / L)`
    Sine { mode: f64 },
    /// `cos(k π x / L)`
    Cosine { mode: f64 },
    GaussianBump { center: f64, width: f64 },
}

impl SpatialBasis {
    pub fn eval(&self, x: f64, length: f64) -> f64 {
        match *self {
            SpatialBasis::Constant => 1.0,
            SpatialBasis::Sine { mode } => math::sin(mode * core::f64::consts::PI * x / length),
            SpatialBasis::Cosine { mode } => math::cos(mode * core::f64::consts::PI * x / length),
            SpatialBasis::GaussianBump { center, width } => {
                let z = (x - center) / width;
                math::exp(-0.5 * z * z)
            }
        }
    }
}

/// One noise mode, `σ(ρ) = α ρ (ρ_max − ρ) s̃(ρ)` with `s̃` a polynomial of
/// degree at most three.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseMode {
    alpha: f64,
    shape: Poly,
    basis: SpatialBasis,
    envelope: Poly,
    envelope_sq: Poly,
}

impl NoiseMode {
    pub fn new(alpha: f64, s_tilde: Vec<f64>, basis: SpatialBasis, rho_max: f64) -> Result<Self> {
        if !(alpha >= 0.0) {
            return Err(Error::config("noise amplitude alpha must be non-negative"));
        }
        if s_tilde.len() > 4 {
            return Err(Error::config("s_tilde must have degree at most 3"));
        }
        let shape = Poly::new(s_tilde);
        let envelope = Poly::new(alloc::vec![0.0, rho_max, -1.0]).mul(&shape);
        let envelope_sq = envelope.mul(&envelope);
        Ok(NoiseMode {
            alpha,
            shape,
            basis,
            envelope,
            envelope_sq,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn shape(&self) -> &Poly {
        &self.shape
    }

    pub fn basis(&self) -> &SpatialBasis {
        &self.basis
    }

    pub fn sigma(&self, rho: f64) -> f64 {
        self.alpha * self.envelope.eval(rho)
    }

    fn with_alpha(&self, alpha: f64) -> Self {
        NoiseMode {
            alpha,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NoiseStructure {
    Modes(Vec<NoiseMode>),
    /// `Σ² ≡ c`, a test mode that deliberately violates endpoint vanishing.
    ConstantDiffusion(f64),
}

impl NoiseStructure {
    pub fn none() -> Self {
        NoiseStructure::Modes(Vec::new())
    }

    pub fn mode_count(&self) -> usize {
        match self {
            NoiseStructure::Modes(m) => m.len(),
            NoiseStructure::ConstantDiffusion(_) => 1,
        }
    }

    /// True when every mode has zero amplitude (deterministic dynamics).
    pub fn is_silent(&self) -> bool {
        match self {
            NoiseStructure::Modes(m) => m.iter().all(|m| m.alpha == 0.0),
            NoiseStructure::ConstantDiffusion(c) => *c == 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialProfile {
    Constant(f64),
    /// `mean + amplitude · sin(2π k x / L)`
    Sine {
        mean: f64,
        amplitude: f64,
        wavenumber: f64,
    },
    /// Piecewise-linear table over `x`.
    Table { xs: Vec<f64>, values: Vec<f64> },
    /// Riemann data, `left` for `x < position`, `right` otherwise.
    Step {
        left: f64,
        right: f64,
        position: f64,
    },
}

impl InitialProfile {
    pub fn eval(&self, x: f64, length: f64) -> f64 {
        match self {
            InitialProfile::Constant(c) => *c,
            InitialProfile::Sine {
                mean,
                amplitude,
                wavenumber,
            } => mean + amplitude * math::sin(2.0 * core::f64::consts::PI * wavenumber * x / length),
            InitialProfile::Table { xs, values } => {
                let p = xs.partition_point(|&k| k <= x);
                if p == 0 {
                    values[0]
                } else if p >= xs.len() {
                    values[values.len() - 1]
                } else {
                    let w = (x - xs[p - 1]) / (xs[p] - xs[p - 1]);
                    values[p - 1] * (1.0 - w) + values[p] * w
                }
            }
            InitialProfile::Step {
                left,
                right,
                position,
            } => {
                if x < *position {
                    *left
                } else {
                    *right
                }
            }
        }
    }
}

/// Full SLWR model on `[0, L] × [0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrafficModel {
    pub flux: FluxFunction,
    pub noise: NoiseStructure,
    pub length: f64,
    pub horizon: f64,
    pub initial: InitialProfile,
    /// Zero for the raw SLWR, positive for viscous regularisation.
    pub viscosity: f64,
}

impl TrafficModel {
    pub fn new(
        flux: FluxFunction,
        noise: NoiseStructure,
        length: f64,
        horizon: f64,
        initial: InitialProfile,
        viscosity: f64,
    ) -> Result<Self> {
        if !(length > 0.0) || !(horizon > 0.0) {
            return Err(Error::config("domain length and horizon must be positive"));
        }
        if !(viscosity >= 0.0) {
            return Err(Error::config("viscosity must be non-negative"));
        }
        if let InitialProfile::Table { xs, values } = &initial {
            if xs.is_empty() || xs.len() != values.len() || xs.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::config("initial table needs increasing xs with matching values"));
            }
        }
        Ok(TrafficModel {
            flux,
            noise,
            length,
            horizon,
            initial,
            viscosity,
        })
    }

    pub fn rho_max(&self) -> f64 {
        self.flux.rho_max
    }

    pub fn initial_density(&self, x: f64) -> f64 {
        self.initial.eval(x, self.length)
    }

    pub fn flux_value(&self, rho: f64) -> Result<f64> {
        self.flux.value(rho)
    }

    pub fn flux_prime(&self, rho: f64) -> Result<f64> {
        self.flux.prime(rho)
    }

    fn check_state(&self, rho: f64, x: f64) -> Result<()> {
        Error::check_range("density", rho, 0.0, self.rho_max())?;
        Error::check_range("position", x, 0.0, self.length)
    }

    /// Aggregate noise intensity `Σ²(ρ, x) = Σ_k σ_k(ρ)² e_k(x)²`.
    pub fn sigma_squared(&self, rho: f64, x: f64) -> Result<f64> {
        self.check_state(rho, x)?;
        Ok(self.diffusion_jet(rho, x)[0])
    }

    /// Itô drift `−½ ∂_ρ Σ²(ρ, x)`.
    pub fn ito_drift(&self, rho: f64, x: f64) -> Result<f64> {
        self.check_state(rho, x)?;
        Ok(-0.5 * self.diffusion_jet(rho, x)[1])
    }

    /// `D(ρ, x) = ½ Σ_k [σ_k(ρ) e_k(x)]²`, evaluated mode by mode.
    pub fn half_diffusion(&self, rho: f64, x: f64) -> f64 {
        match &self.noise {
            NoiseStructure::Modes(modes) => {
                0.5 * modes
                    .iter()
                    .map(|m| {
                        let a = m.sigma(rho) * m.basis.eval(x, self.length);
                        a * a
                    })
                    .sum::<f64>()
            }
            NoiseStructure::ConstantDiffusion(c) => 0.5 * c,
        }
    }

    /// `Σ²` and its first three density derivatives, unchecked.
    pub fn diffusion_jet(&self, rho: f64, x: f64) -> [f64; 4] {
        match &self.noise {
            NoiseStructure::Modes(modes) => {
                let mut out = [0.0; 4];
                for m in modes {
                    let e = m.basis.eval(x, self.length);
                    let w = m.alpha * m.alpha * e * e;
                    let j = m.envelope_sq.jet3(rho);
                    for k in 0..4 {
                        out[k] += w * j[k];
                    }
                }
                out
            }
            NoiseStructure::ConstantDiffusion(c) => [*c, 0.0, 0.0, 0.0],
        }
    }

    /// Per-mode `Σ²` jets at unit amplitude: `Σ² = Σ_k α_k² · jet_k`.
    pub fn unit_mode_jets(&self, rho: f64, x: f64) -> Vec<[f64; 4]> {
        match &self.noise {
            NoiseStructure::Modes(modes) => modes
                .iter()
                .map(|m| {
                    let e = m.basis.eval(x, self.length);
                    let j = m.envelope_sq.jet3(rho);
                    [j[0] * e * e, j[1] * e * e, j[2] * e * e, j[3] * e * e]
                })
                .collect(),
            NoiseStructure::ConstantDiffusion(_) => alloc::vec![[1.0, 0.0, 0.0, 0.0]],
        }
    }

    pub fn noise_amplitudes(&self) -> Vec<f64> {
        match &self.noise {
            NoiseStructure::Modes(m) => m.iter().map(|m| m.alpha).collect(),
            NoiseStructure::ConstantDiffusion(c) => alloc::vec![math::sqrt(*c)],
        }
    }

    /// Copy of the model with mode amplitudes replaced.
    pub fn with_noise_amplitudes(&self, alphas: &[f64]) -> Result<Self> {
        let noise = match &self.noise {
            NoiseStructure::Modes(modes) => {
                if alphas.len() != modes.len() {
                    return Err(Error::config("amplitude count does not match mode count"));
                }
                NoiseStructure::Modes(
                    modes
                        .iter()
                        .zip(alphas)
                        .map(|(m, &a)| m.with_alpha(a))
                        .collect(),
                )
            }
            NoiseStructure::ConstantDiffusion(_) => {
                NoiseStructure::ConstantDiffusion(alphas[0] * alphas[0])
            }
        };
        Ok(TrafficModel {
            noise,
            ..self.clone()
        })
    }

    /// Runs every standing-assumption check on `probes` sample points per
    /// axis.
    pub fn validate_assumptions(&self, probes: usize) -> ValidationReport {
        let probes = probes.max(3);
        let rho_max = self.rho_max();
        let interior = |i: usize| rho_max * (i as f64 + 0.5) / probes as f64;
        let closed = |i: usize| rho_max * i as f64 / (probes - 1) as f64;
        let xs: Vec<f64> = (0..probes)
            .map(|i| self.length * (i as f64 + 0.5) / probes as f64)
            .collect();
        let drake = matches!(self.flux.kind, FluxKind::Drake { .. });
        let mut checks = Vec::new();

        // Flux endpoints.
        let f0 = self.flux.f(0.0);
        let fm = self.flux.f(rho_max);
        let endpoint_violation = if f0.abs() > 1e-12 {
            Some(Violation { rho: 0.0, x: 0.0, value: f0 })
        } else if fm.abs() > 1e-12 {
            Some(Violation { rho: rho_max, x: 0.0, value: fm })
        } else {
            None
        };
        checks.push(Check::new(
            Assumption::FluxEndpoints,
            drake,
            endpoint_violation,
            format!("f(0) = {f0:e}, f(rho_max) = {fm:e}"),
        ));

        // Concavity.
        let concavity = (0..probes)
            .map(closed)
            .map(|r| (r, self.flux.d2f(r)))
            .find(|&(_, d2)| d2 > 1e-12)
            .map(|(rho, value)| Violation { rho, x: 0.0, value });
        checks.push(Check::new(
            Assumption::FluxConcavity,
            drake,
            concavity,
            String::from("f'' <= 0 on probes"),
        ));

        // Noise endpoint vanishing.
        let mut endpoint = None;
        for &x in &xs {
            for rho in [0.0, rho_max] {
                let s2 = self.diffusion_jet(rho, x)[0];
                if s2.abs() > 1e-24 && endpoint.is_none() {
                    endpoint = Some(Violation { rho, x, value: s2 });
                }
            }
        }
        checks.push(Check::new(
            Assumption::NoiseEndpoints,
            false,
            endpoint,
            String::from("sigma_k(0) = sigma_k(rho_max) = 0"),
        ));

        // Non-degeneracy on the interior, including zero crossings of σ_k
        // that fall between probes.
        let mut degenerate = None;
        'outer: for i in 0..probes {
            let rho = interior(i);
            for &x in &xs {
                let s2 = self.diffusion_jet(rho, x)[0];
                if !(s2 > 0.0) {
                    degenerate = Some(Violation { rho, x, value: s2 });
                    break 'outer;
                }
            }
        }
        if degenerate.is_none() {
            if let NoiseStructure::Modes(modes) = &self.noise {
                'modes: for m in modes {
                    for i in 1..probes {
                        let (a, b) = (interior(i - 1), interior(i));
                        let (sa, sb) = (m.shape.eval(a), m.shape.eval(b));
                        if (sa > 0.0) != (sb > 0.0) || sa == 0.0 {
                            let root = math::bisect(|r| m.shape.eval(r), a, b, 1e-14);
                            for &x in &xs {
                                let s2 = self.diffusion_jet(root, x)[0];
                                let scale = self.diffusion_jet(a, x)[0].abs().max(1e-300);
                                if s2 <= 1e-12 * scale {
                                    degenerate = Some(Violation { rho: root, x, value: s2 });
                                    break 'modes;
                                }
                            }
                        }
                    }
                }
            }
        }
        // Deterministic dynamics need no diffusion; the check is then advisory.
        checks.push(Check::new(
            Assumption::NonDegeneracy,
            self.noise.is_silent(),
            degenerate,
            String::from("Sigma^2 > 0 on (0, rho_max) x (0, L)"),
        ));

        // Initial data strictly inside the density interval.
        let initial = xs
            .iter()
            .map(|&x| (x, self.initial_density(x)))
            .find(|&(_, r)| !(r > 0.0 && r < rho_max))
            .map(|(x, value)| Violation { rho: value, x, value });
        checks.push(Check::new(
            Assumption::InitialData,
            false,
            initial,
            String::from("0 < rho_0(x) < rho_max"),
        ));

        ValidationReport { checks }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assumption {
    FluxEndpoints,
    FluxConcavity,
    NoiseEndpoints,
    NonDegeneracy,
    InitialData,
}

impl Assumption {
    pub fn name(self) -> &'static str {
        match self {
            Assumption::FluxEndpoints => "flux endpoints",
            Assumption::FluxConcavity => "flux concavity",
            Assumption::NoiseEndpoints => "noise endpoint vanishing",
            Assumption::NonDegeneracy => "noise non-degeneracy",
            Assumption::InitialData => "initial data interior",
        }
    }
}

/// Probe point at which a check failed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    pub rho: f64,
    pub x: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub assumption: Assumption,
    pub passed: bool,
    /// Advisory checks are reported but never block a run.
    pub advisory: bool,
    pub violation: Option<Violation>,
    pub detail: String,
}

impl Check {
    fn new(assumption: Assumption, advisory: bool, violation: Option<Violation>, detail: String) -> Self {
        Check {
            assumption,
            passed: violation.is_none(),
            advisory,
            violation,
            detail,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    /// True when no fatal check failed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || c.advisory)
    }

    pub fn fatal_failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed && !c.advisory)
    }

    pub fn get(&self, assumption: Assumption) -> Option<&Check> {
        self.checks.iter().find(|c| c.assumption == assumption)
    }
}
