//! Density recovery from a score by quadrature, summary functionals and the
//! stochastic fundamental-diagram pushforward.

use alloc::vec::Vec;

use crate::fpe::DensityGrid;
use crate::math;
use crate::model::FluxFunction;
use crate::pfode::ScoreSource;
use crate::quadrature::{barycentric_eval, GaussLegendre};
use crate::{Error, Result};

/// Sub-rule order used between adjacent global nodes.
const SUB_ORDER: usize = 8;

#[derive(Clone, Debug, PartialEq)]
enum Profile {
    /// Barycentric interpolation of `log p` through the global nodes.
    Nodes { bw: Vec<f64> },
    /// Piecewise-constant cell densities (already normalised).
    Cells { edges: Vec<f64>, values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveredDensity {
    pub x: f64,
    pub t: f64,
    pub rho_max: f64,
    pub quad_nodes: Vec<f64>,
    pub quad_weights: Vec<f64>,
    /// Normalised `log p` at the nodes.
    pub log_p: Vec<f64>,
    /// `C(x, t)` added to the cumulative score integral.
    pub log_norm: f64,
    profile: Profile,
    /// Segment edges covering `[0, ρ_max]` and the cumulative mass at each.
    seg_edges: Vec<f64>,
    seg_cdf: Vec<f64>,
}

/// Mean, standard deviation and 95% credible interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SummaryStats {
    pub mean: f64,
    pub std: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Integrates the score from `rho_star` to every Gauss–Legendre node on
/// `[0, ρ_max]` and fixes the constant by unit node-quadrature mass.
pub fn recover_density(
    score: &dyn ScoreSource,
    rho_max: f64,
    x: f64,
    t: f64,
    rho_star: f64,
    n_q: usize,
) -> Result<RecoveredDensity> {
    if !(rho_max > 0.0) || n_q < 2 {
        return Err(Error::config("recover_density needs rho_max > 0 and at least two nodes"));
    }
    if !(rho_star > 0.0 && rho_star < rho_max) {
        return Err(Error::Domain {
            quantity: "rho_star",
            value: rho_star,
            lo: 0.0,
            hi: rho_max,
        });
    }
    let gl = GaussLegendre::new(n_q);
    let (nodes, weights) = gl.mapped(0.0, rho_max);
    let sub = GaussLegendre::new(SUB_ORDER);
    let eval = |r: f64| -> Result<f64> {
        let s = score.score(r, t)?;
        if s.is_finite() {
            Ok(s)
        } else {
            Err(Error::NonFiniteScore { rho: r })
        }
    };
    let integral = |a: f64, b: f64| -> Result<f64> {
        let (xs, ws) = sub.mapped(a, b);
        let mut acc = 0.0;
        for (r, w) in xs.iter().zip(&ws) {
            acc += w * eval(*r)?;
        }
        Ok(acc)
    };

    let n = nodes.len();
    let p = nodes.partition_point(|&r| r <= rho_star);
    let mut ell = alloc::vec![0.0; n];
    if p < n {
        ell[p] = integral(rho_star, nodes[p])?;
        for k in p + 1..n {
            ell[k] = ell[k - 1] + integral(nodes[k - 1], nodes[k])?;
        }
    }
    if p > 0 {
        ell[p - 1] = -integral(nodes[p - 1], rho_star)?;
        for k in (0..p - 1).rev() {
            ell[k] = ell[k + 1] - integral(nodes[k], nodes[k + 1])?;
        }
    }
    let shift = ell.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = ell.iter().zip(&weights).map(|(l, w)| w * math::exp(l - shift)).sum();
    let log_norm = -(shift + math::ln(z));
    let log_p: Vec<f64> = ell.iter().map(|l| l + log_norm).collect();

    let mut d = RecoveredDensity {
        x,
        t,
        rho_max,
        quad_nodes: nodes,
        quad_weights: weights,
        log_p,
        log_norm,
        profile: Profile::Nodes {
            bw: gl.barycentric_weights(),
        },
        seg_edges: Vec::new(),
        seg_cdf: Vec::new(),
    };
    let mut edges = Vec::with_capacity(n + 2);
    edges.push(0.0);
    edges.extend_from_slice(&d.quad_nodes);
    edges.push(rho_max);
    d.set_segments(edges);
    Ok(d)
}

impl RecoveredDensity {
    /// Adapter for a stored FPE solution at snapshot `k`: piecewise-constant
    /// cell densities, node values sampled from the cells.
    pub fn from_grid(grid: &DensityGrid, k: usize, n_q: usize) -> Result<Self> {
        if k >= grid.p.len() {
            return Err(Error::IndexOutOfRange {
                what: "snapshot",
                index: k,
                len: grid.p.len(),
            });
        }
        let mesh = &grid.mesh;
        let mass = mesh.mass(&grid.p[k]);
        if !(mass > 0.0) {
            return Err(Error::InsufficientData("grid snapshot has no mass".into()));
        }
        let values: Vec<f64> = grid.p[k].iter().map(|v| v.max(0.0) / mass).collect();
        let edges = mesh.edges();
        let gl = GaussLegendre::new(n_q.max(2));
        let (nodes, weights) = gl.mapped(0.0, mesh.rho_max);
        let log_p = nodes
            .iter()
            .map(|&r| {
                let i = ((r / mesh.h) as usize).min(mesh.n_cells - 1);
                math::ln(values[i])
            })
            .collect();
        let mut d = RecoveredDensity {
            x: grid.x,
            t: grid.times[k],
            rho_max: mesh.rho_max,
            quad_nodes: nodes,
            quad_weights: weights,
            log_p,
            log_norm: -math::ln(mass),
            profile: Profile::Cells {
                edges: edges.clone(),
                values,
            },
            seg_edges: Vec::new(),
            seg_cdf: Vec::new(),
        };
        d.set_segments(edges);
        Ok(d)
    }

    fn set_segments(&mut self, edges: Vec<f64>) {
        let mut cdf = Vec::with_capacity(edges.len());
        cdf.push(0.0);
        for w in edges.windows(2) {
            let m = self.partial_mass(w[0], w[1]);
            cdf.push(cdf.last().unwrap() + m);
        }
        self.seg_edges = edges;
        self.seg_cdf = cdf;
    }

    /// Unnormalised density within `[0, ρ_max]`, zero outside.
    pub fn density_at(&self, rho: f64) -> f64 {
        if !(0.0..=self.rho_max).contains(&rho) {
            return 0.0;
        }
        match &self.profile {
            Profile::Nodes { bw } => math::exp(barycentric_eval(&self.quad_nodes, bw, &self.log_p, rho)),
            Profile::Cells { edges, values } => {
                let i = edges.partition_point(|&e| e <= rho).clamp(1, values.len());
                values[i - 1]
            }
        }
    }

    /// `∫_a^b p` for `a, b` inside one segment.
    fn partial_mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match &self.profile {
            Profile::Nodes { .. } => GaussLegendre::new(SUB_ORDER).integrate(a, b, |r| self.density_at(r)),
            Profile::Cells { .. } => self.density_at(0.5 * (a + b)) * (b - a),
        }
    }

    /// Node-quadrature mass `Σ w_k exp(log p_k)`.
    pub fn node_mass(&self) -> f64 {
        self.quad_weights
            .iter()
            .zip(&self.log_p)
            .map(|(w, l)| w * math::exp(*l))
            .sum()
    }

    fn total(&self) -> f64 {
        *self.seg_cdf.last().unwrap()
    }

    /// Normalised cumulative distribution.
    pub fn cdf(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return 0.0;
        }
        if rho >= self.rho_max {
            return 1.0;
        }
        let j = self.seg_edges.partition_point(|&e| e <= rho) - 1;
        ((self.seg_cdf[j] + self.partial_mass(self.seg_edges[j], rho)) / self.total()).clamp(0.0, 1.0)
    }

    /// Inverse CDF by bisection inside the bracketing segment.
    pub fn quantile(&self, q: f64) -> f64 {
        let target = q.clamp(0.0, 1.0) * self.total();
        let j = self
            .seg_cdf
            .partition_point(|&c| c < target)
            .clamp(1, self.seg_edges.len() - 1)
            - 1;
        let (a, b) = (self.seg_edges[j], self.seg_edges[j + 1]);
        let base = self.seg_cdf[j];
        math::bisect(|r| base + self.partial_mass(a, r) - target, a, b, 1e-14 * self.rho_max)
    }

    fn moment<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        match &self.profile {
            Profile::Nodes { .. } => self
                .quad_nodes
                .iter()
                .zip(&self.quad_weights)
                .zip(&self.log_p)
                .map(|((r, w), l)| w * math::exp(*l) * g(*r))
                .sum(),
            Profile::Cells { edges, values } => values
                .iter()
                .enumerate()
                .map(|(i, v)| v * g(0.5 * (edges[i] + edges[i + 1])) * (edges[i + 1] - edges[i]))
                .sum(),
        }
    }
}

pub fn summary_stats(d: &RecoveredDensity) -> SummaryStats {
    let mass = d.moment(|_| 1.0);
    let mean = d.moment(|r| r) / mass;
    let var = d.moment(|r| (r - mean) * (r - mean)) / mass;
    SummaryStats {
        mean,
        std: math::sqrt(var.max(0.0)),
        ci_lo: d.quantile(0.025),
        ci_hi: d.quantile(0.975),
    }
}

/// `P(ρ̂ ≥ ρ_c)`.
pub fn congestion_risk(d: &RecoveredDensity, rho_c: f64) -> Result<f64> {
    Error::check_range("rho_c", rho_c, 0.0, d.rho_max)?;
    Ok(1.0 - d.cdf(rho_c))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowDensity {
    pub q_nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub p_q: Vec<f64>,
    /// Rising and (when it exists) falling density preimage of each node.
    pub preimages: Vec<(f64, Option<f64>)>,
    pub capacity: f64,
    /// Density-space measure removed around the capacity point.
    pub excised_measure: f64,
    /// Probability mass captured before renormalisation.
    pub captured_mass: f64,
}

impl FlowDensity {
    pub fn mass(&self) -> f64 {
        self.weights.iter().zip(&self.p_q).map(|(w, p)| w * p).sum()
    }

    /// Quadrature mass on nodes with `q ∈ [a, b]`.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        self.q_nodes
            .iter()
            .zip(&self.weights)
            .zip(&self.p_q)
            .filter(|((q, _), _)| **q >= a && **q <= b)
            .map(|((_, w), p)| w * p)
            .sum()
    }
}

/// `p(q) = Σ_j p(ρ_j)/|f′(ρ_j)|` over the rising and falling preimages of `q`.
/// Flow nodes are images of composite Gauss–Legendre nodes on the rising
/// branch, so node weights are `w_k f′(ρ_k)`.
pub fn flow_pushforward(d: &RecoveredDensity, flux: &FluxFunction, n_q_flow: usize) -> Result<FlowDensity> {
    let rc = flux.capacity_density()?;
    let rho_max = flux.rho_max();
    let delta = 5e-7 * rho_max;
    let order = SUB_ORDER;
    let intervals = (n_q_flow / order).max(1);
    let gl = GaussLegendre::new(order);
    let width = (rc - delta) / intervals as f64;
    let f_end = flux.f(rho_max);

    let mut q_nodes = Vec::with_capacity(intervals * order);
    let mut weights = Vec::with_capacity(intervals * order);
    let mut p_q = Vec::with_capacity(intervals * order);
    let mut preimages = Vec::with_capacity(intervals * order);
    for j in 0..intervals {
        let (rs, ws) = gl.mapped(j as f64 * width, (j + 1) as f64 * width);
        for (&r, &w) in rs.iter().zip(&ws) {
            let q = flux.f(r);
            let slope = flux.df(r);
            let mut dens = d.density_at(r) / slope;
            let falling = if q >= f_end {
                let r2 = math::bisect(|s| flux.f(s) - q, rc, rho_max, 1e-15 * rho_max);
                dens += d.density_at(r2) / math::abs(flux.df(r2));
                Some(r2)
            } else {
                None
            };
            q_nodes.push(q);
            weights.push(w * slope);
            p_q.push(dens);
            preimages.push((r, falling));
        }
    }
    let q_top = flux.f(rc - delta);
    let r_top = math::bisect(|s| flux.f(s) - q_top, rc, rho_max, 1e-15 * rho_max);
    let excised_measure = r_top - (rc - delta);
    let captured: f64 = weights.iter().zip(&p_q).map(|(w, p)| w * p).sum::<f64>() / d.total();
    if !(captured > 0.0) {
        return Err(Error::InsufficientData("no density mass maps to sub-capacity flows".into()));
    }
    log::debug!(
        "flow pushforward excised {excised_measure:e} of density measure around capacity; captured mass {captured}"
    );
    let scale = 1.0 / (captured * d.total());
    p_q.iter_mut().for_each(|p| *p *= scale);
    Ok(FlowDensity {
        q_nodes,
        weights,
        p_q,
        preimages,
        capacity: rc,
        excised_measure,
        captured_mass: captured,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpe::{mollified_delta, DensityMesh};
    use crate::pfode::FnScore;
    use alloc::vec;

    fn fn_score<F: Fn(f64, f64) -> f64>(f: F) -> FnScore<F> {
        FnScore {
            f,
            rho_max: 1.0,
            t_range: (0.0, 1.0),
        }
    }

    fn uniform() -> RecoveredDensity {
        recover_density(&fn_score(|_, _| 0.0), 1.0, 0.5, 0.5, 0.5, 100).unwrap()
    }

    #[test]
    fn zero_score_gives_uniform() {
        let d = uniform();
        for l in &d.log_p {
            assert!((math::exp(*l) - 1.0).abs() < 1e-12);
        }
        assert!((d.node_mass() - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn gaussian_score_matches_truncated_gaussian() {
        let d = recover_density(&fn_score(|r, _| -(r - 0.5) / 0.01), 1.0, 0.0, 0.0, 0.5, 100).unwrap();
        let z = 0.1 * math::sqrt(2.0 * core::f64::consts::PI) * math::erf(5.0 / core::f64::consts::SQRT_2);
        for (r, l) in d.quad_nodes.iter().zip(&d.log_p) {
            let exact = math::exp(-0.5 * (r - 0.5) * (r - 0.5) / 0.01) / z;
            assert!((math::exp(*l) / exact - 1.0).abs() <= 1e-6, "{r}");
        }
    }

    #[test]
    fn reference_point_does_not_matter() {
        let s = fn_score(|r: f64, _| math::sin(7.0 * r) - 3.0 * (r - 0.4));
        let a = recover_density(&s, 1.0, 0.0, 0.0, 0.3, 100).unwrap();
        let b = recover_density(&s, 1.0, 0.0, 0.0, 0.7, 100).unwrap();
        for (x, y) in a.log_p.iter().zip(&b.log_p) {
            assert!((math::exp(*x) - math::exp(*y)).abs() <= 1e-10);
        }
    }

    #[test]
    fn non_finite_score_is_reported() {
        let err = recover_density(&fn_score(|r, _| if r > 0.9 { f64::NAN } else { 0.0 }), 1.0, 0.0, 0.0, 0.5, 50)
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteScore { .. }));
    }

    #[test]
    fn uniform_stats_and_risk() {
        let d = uniform();
        let s = summary_stats(&d);
        assert!((s.mean - 0.5).abs() <= 1e-3);
        assert!((s.std - 1.0 / math::sqrt(12.0)).abs() <= 1e-3);
        assert!((s.ci_lo - 0.025).abs() <= 1e-3 && (s.ci_hi - 0.975).abs() <= 1e-3);
        assert!((congestion_risk(&d, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(congestion_risk(&d, 1.0).unwrap().abs() < 1e-15);
        assert!((congestion_risk(&d, 0.7).unwrap() - 0.3).abs() <= 1e-6);
        assert!(congestion_risk(&d, 1.2).is_err());
    }

    #[test]
    fn symmetric_mean_and_narrow_interval() {
        let d = recover_density(&fn_score(|r, _| -(r - 0.5) / 0.02), 1.0, 0.0, 0.0, 0.5, 100).unwrap();
        assert!((summary_stats(&d).mean - 0.5).abs() <= 1e-10);
        let d = recover_density(&fn_score(|r, _| -(r - 0.5) / 1e-4), 1.0, 0.0, 0.0, 0.5, 100).unwrap();
        let s = summary_stats(&d);
        let half = 1.959_963_984_540_054 * 0.01;
        assert!((s.ci_lo - (0.5 - half)).abs() <= 5e-4, "{}", s.ci_lo);
        assert!((s.ci_hi - (0.5 + half)).abs() <= 5e-4, "{}", s.ci_hi);
    }

    #[test]
    fn uniform_pushforward_closed_form() {
        let flux = FluxFunction::greenshields(1.0, 1.0).unwrap();
        let f = flow_pushforward(&uniform(), &flux, 400).unwrap();
        assert!((f.mass() - 1.0).abs() <= 1e-4);
        assert!(f.excised_measure <= 1e-4);
        assert!((f.captured_mass - 1.0).abs() <= 1e-4);
        for (q, p) in f.q_nodes.iter().zip(&f.p_q) {
            let exact = 2.0 / math::sqrt(1.0 - 4.0 * q);
            assert!((p / exact - 1.0).abs() <= 1e-4, "q = {q}");
            assert!(*p >= 0.0);
        }
    }

    fn grid_with(p: Vec<f64>, mesh: DensityMesh) -> DensityGrid {
        DensityGrid {
            mesh,
            x: 0.5,
            times: vec![0.0],
            p: vec![p],
            renormalised_mass: 0.0,
        }
    }

    #[test]
    fn rising_support_maps_below_its_image() {
        let mesh = DensityMesh::new(100, 1.0).unwrap();
        let p: Vec<f64> = (0..100).map(|i| if mesh.center(i) < 0.3 { 1.0 } else { 0.0 }).collect();
        let d = RecoveredDensity::from_grid(&grid_with(p, mesh), 0, 100).unwrap();
        let flux = FluxFunction::greenshields(1.0, 1.0).unwrap();
        let f = flow_pushforward(&d, &flux, 400).unwrap();
        assert_eq!(f.mass_between(flux.f(0.3) + 1e-9, 1.0), 0.0);
        assert!((f.mass() - 1.0).abs() <= 1e-4);
        // density mass on [0, 0.3] equals the flow mass on [0, f(0.3)]
        assert!((f.mass_between(0.0, flux.f(0.3)) - 1.0).abs() <= 1e-4);
    }

    #[test]
    fn narrow_density_concentrates_at_its_flow() {
        let mesh = DensityMesh::new(2000, 1.0).unwrap();
        let p = mollified_delta(&mesh, 0.2, 0.002).unwrap();
        let d = RecoveredDensity::from_grid(&grid_with(p, mesh), 0, 100).unwrap();
        let flux = FluxFunction::greenshields(1.0, 1.0).unwrap();
        let f = flow_pushforward(&d, &flux, 800).unwrap();
        assert!((f.mass_between(0.16 - 0.01, 0.16 + 0.01) - 1.0).abs() <= 1e-3);
    }

    #[test]
    fn grid_adapter_matches_grid_sums() {
        let mesh = DensityMesh::new(400, 1.0).unwrap();
        let p = mollified_delta(&mesh, 0.35, 0.05).unwrap();
        let g = grid_with(p, mesh);
        let d = RecoveredDensity::from_grid(&g, 0, 100).unwrap();
        let s = summary_stats(&d);
        assert!((s.mean - g.mean(0)).abs() <= 1e-3);
        assert!((s.std - math::sqrt(g.variance(0))).abs() <= 1e-3);
        assert!(s.ci_lo < s.mean && s.mean < s.ci_hi);
    }

    #[test]
    fn non_unimodal_flux_is_rejected() {
        let rho = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        let flow = [0.0, 0.15, 0.1, 0.15, 0.1, 0.0];
        let flux = FluxFunction::tabulated(1.0, 1.0, &rho, &flow).unwrap();
        assert!(matches!(flow_pushforward(&uniform(), &flux, 80), Err(Error::UnsupportedFlux(_))));
    }
}
