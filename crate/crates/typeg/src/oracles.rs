//! Test-support oracles: quadrature CDF tables, Kolmogorov-Smirnov
//! statistics, and empirical moment summaries. These deliberately avoid
//! the samplers and closed-form normalising constants they are used to
//! check; everything here reduces to adaptive quadrature over densities.

use crate::quad::{adaptive_simpson, integrate_half_line, interp_monotone};

/// Sample mean and its standard error.
pub fn empirical_mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample variance.
pub fn empirical_var(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// k-th moment of an unnormalised density on (0, ∞) by quadrature.
pub fn quadrature_moment<F: Fn(f64) -> f64>(density: &F, k: f64) -> f64 {
    let mass = integrate_half_line(&|v| if v <= 0.0 { 0.0 } else { density(v) }, 0.0, 0.5, 1e-11);
    let raw = integrate_half_line(
        &|v| if v <= 0.0 { 0.0 } else { v.powf(k) * density(v) },
        0.0,
        0.5,
        1e-11,
    );
    raw / mass
}

/// Tabulated CDF of an unnormalised density on (0, ∞), on a grid that
/// covers the sorted sample range with margin.
pub struct CdfTable {
    grid: Vec<f64>,
    cdf: Vec<f64>,
}

impl CdfTable {
    pub fn eval(&self, x: f64) -> f64 {
        interp_monotone(&self.grid, &self.cdf, x)
    }
}

/// Build a CDF table by composite Simpson over a fine graded grid. The
/// head mass below the sample minimum is integrated adaptively so the
/// table is an absolute CDF, not just a renormalisation over the range.
pub fn quadrature_cdf_table<F: Fn(f64) -> f64>(density: &F, sorted_samples: &[f64]) -> CdfTable {
    let lo = sorted_samples.first().copied().unwrap();
    let hi = sorted_samples.last().copied().unwrap();
    let lo_pad = (lo * 0.5).max(1e-12);
    let hi_pad = hi * 1.2 + 1.0;
    let n_grid = 8192;
    let grid: Vec<f64> = (0..=n_grid)
        .map(|i| lo_pad + (hi_pad - lo_pad) * i as f64 / n_grid as f64)
        .collect();

    let total = integrate_half_line(&|v| if v <= 0.0 { 0.0 } else { density(v) }, 0.0, 0.5, 1e-11);
    let head = adaptive_simpson(&|v| if v <= 0.0 { 0.0 } else { density(v) }, 0.0, lo_pad, 1e-12, 50);

    let mut cdf = Vec::with_capacity(grid.len());
    let mut acc = head;
    cdf.push(acc / total);
    for w in grid.windows(2) {
        acc += adaptive_simpson(density, w[0], w[1], 1e-13, 12);
        cdf.push(acc / total);
    }
    CdfTable { grid, cdf }
}

/// Two-sided KS statistic of a sorted sample against a CDF table.
pub fn ks_statistic(sorted_samples: &[f64], cdf: &CdfTable) -> f64 {
    let n = sorted_samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted_samples.iter().enumerate() {
        let f = cdf.eval(x);
        let hi = (i + 1) as f64 / n - f;
        let lo = f - i as f64 / n;
        d = d.max(hi.abs()).max(lo.abs());
    }
    d
}

/// KS statistic against an analytic CDF.
pub fn ks_statistic_fn<F: Fn(f64) -> f64>(sorted_samples: &[f64], cdf: F) -> f64 {
    let n = sorted_samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted_samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max(((i + 1) as f64 / n - f).abs()).max((f - i as f64 / n).abs());
    }
    d
}

/// Central finite-difference gradient of a scalar function.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    at: &[f64],
    eps: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; at.len()];
    let mut x = at.to_vec();
    for i in 0..at.len() {
        let h = eps * (1.0 + at[i].abs());
        x[i] = at[i] + h;
        let up = f(&x);
        x[i] = at[i] - h;
        let down = f(&x);
        x[i] = at[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Dense marginal Gaussian log-likelihood of the observations under the
/// Gaussian variant: y ~ N(Bβ, A K⁻¹ diag(h…h) K⁻ᵀ Aᵀ + Σ_e). Forms
/// dense inverses; test oracle for desk-scale meshes only.
pub fn dense_gaussian_loglik(
    params: &crate::model::ModelParams,
    fem: &crate::fem::FemMatrices,
    obs: &crate::inference::ObsDesign,
) -> f64 {
    use nalgebra::DMatrix;
    let op = crate::model::build_operator(params, fem).expect("operator");
    let kinv = op.k.to_dense().try_inverse().expect("invertible K");
    let n = fem.n();
    let np = n * params.p;
    let mut vblk = DMatrix::zeros(np, np);
    for b in 0..params.p {
        for i in 0..n {
            vblk[(b * n + i, b * n + i)] = fem.h[i];
        }
    }
    let cov_w = &kinv * vblk * kinv.transpose();

    let m_tot = obs.m_total();
    let mut a_full = DMatrix::zeros(m_tot, np);
    let mut resid = DMatrix::zeros(m_tot, 1);
    let mut noise = DMatrix::zeros(m_tot, m_tot);
    let mut row0 = 0;
    for k in 0..params.p {
        let ad = obs.a[k].to_dense();
        for i in 0..obs.y[k].len() {
            for j in 0..np {
                a_full[(row0 + i, j)] = ad[(i, j)];
            }
            let trend: f64 =
                (0..obs.b[k].ncols()).map(|j| obs.b[k][(i, j)] * params.beta[j]).sum();
            resid[(row0 + i, 0)] = obs.y[k][i] - trend;
            noise[(row0 + i, row0 + i)] = params.sigma_e[k] * params.sigma_e[k];
        }
        row0 += obs.y[k].len();
    }
    let sigma_y = &a_full * cov_w * a_full.transpose() + noise;
    let chol = sigma_y.cholesky().expect("positive definite observation covariance");
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let alpha = chol.solve(&resid);
    let quad = (resid.transpose() * alpha)[(0, 0)];
    -0.5 * (m_tot as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
}

/// Standard error of a correlated stream via batch means.
pub fn batch_means_se(xs: &[f64], n_batches: usize) -> f64 {
    let batch = xs.len() / n_batches;
    let means: Vec<f64> = (0..n_batches)
        .map(|b| xs[b * batch..(b + 1) * batch].iter().sum::<f64>() / batch as f64)
        .collect();
    let (_, se) = empirical_mean_se(&means);
    se
}

/// Geweke joint-distribution z-scores for the Gibbs transition: compares
/// marginal-conditional draws of (w, v) against a successive-conditional
/// chain that regenerates y every step. Test functions: w at `node`,
/// its square, v at `node`, and log v at `node`.
pub fn geweke_zscores(
    params: &crate::model::ModelParams,
    fem: &crate::fem::FemMatrices,
    obs_template: &crate::inference::ObsDesign,
    n_mc: usize,
    n_sc: usize,
    node: usize,
    seed: u64,
) -> Vec<f64> {
    use crate::inference::{analyze_precision_pattern, gibbs_step, GibbsState, Workspace};
    use crate::noise::{sample_noise_vector, sample_variance_prior};
    use crate::simulate::FieldSimulator;
    use rand_distr::StandardNormal;

    let mut rng = crate::rng_from_seed(seed);
    let sim = FieldSimulator::new(params, fem).expect("simulator");
    let g = |w: &[f64], v: &[f64]| [w[node], w[node] * w[node], v[node], v[node].ln()];

    // Marginal-conditional: iid draws from the prior of (w, v).
    let mut mc: Vec<[f64; 4]> = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let s = sim.draw(&mut rng).expect("prior draw");
        mc.push(g(&s.w, &s.v.v));
    }

    // Successive-conditional chain.
    let symbolic = analyze_precision_pattern(params, fem, obs_template).expect("pattern");
    let mut obs = obs_template.clone();
    let mut sc: Vec<[f64; 4]> = Vec::with_capacity(n_sc);
    let vs0 = sample_variance_prior(params, &fem.h, &mut rng).expect("prior v");
    let noise0 = sample_noise_vector(&vs0, params, &fem.h, &mut rng);
    let mut state = GibbsState {
        w: sim.solve_k(&noise0),
        vs: vs0,
        xi_hat: vec![0.0; fem.n() * params.p],
        factor: None,
    };
    for _ in 0..n_sc {
        // y | w.
        for k in 0..params.p {
            let aw = obs.a[k].matvec(&state.w);
            for (i, yk) in obs.y[k].iter_mut().enumerate() {
                let trend: f64 =
                    (0..obs.b[k].ncols()).map(|j| obs.b[k][(i, j)] * params.beta[j]).sum();
                let eps: f64 = rng.sample(StandardNormal);
                *yk = trend + aw[i] + params.sigma_e[k] * eps;
            }
        }
        // (w, v) | y.
        let ws = Workspace::new(params, fem, &obs, &symbolic).expect("workspace");
        gibbs_step(&ws, &mut state, &mut rng).expect("sweep");
        sc.push(g(&state.w, &state.vs.v));
    }

    (0..4)
        .map(|j| {
            let mc_j: Vec<f64> = mc.iter().map(|r| r[j]).collect();
            let sc_j: Vec<f64> = sc.iter().map(|r| r[j]).collect();
            let (m1, se1) = empirical_mean_se(&mc_j);
            let m2 = sc_j.iter().sum::<f64>() / sc_j.len() as f64;
            let se2 = batch_means_se(&sc_j, 50);
            (m1 - m2) / (se1 * se1 + se2 * se2).sqrt()
        })
        .collect()
}
