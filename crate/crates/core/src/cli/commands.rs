use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::report::{Warning, FLAG_NOT_STABILIZED, NO_TANGENT_GENERATOR, PARTIAL_CONVERGENCE, PERIODIC_SURROGATE};
use super::{points::read_points, Command};
use crate::error::{Error, Result};
use crate::expr::{format_rational, rational, rational_to_f64, PolyExpr, Rational};
use crate::fibers::{continuity_scan, default_degree_bound, minimal_presentation_at};
use crate::flag::{bracket_closure, growth_vectors, regularity_check, Regularity};
use crate::grid::{assemble_laplacian, leafwise_family, GridSpec};
use crate::groupoid::{build_chart, GroupoidChart, Kernel};
use crate::spec::DistributionSpec;
use crate::spectral::{compare_spectra, loglog_slope, lowest_eigenpairs, subelliptic_ratio};
use crate::vfield::{Axis, LogDensity, VectorField};

pub(super) struct Output {
    pub parameters: Value,
    pub results: Value,
    pub warnings: Vec<Warning>,
}

pub(super) fn dispatch(spec: &DistributionSpec, cmd: &Command) -> Result<Output> {
    match cmd {
        Command::Analyze { points, degree_bound } => analyze(spec, &read_points(points)?, *degree_bound),
        Command::Flag { max_depth, probes } => flag(spec, *max_depth, &read_points(probes)?),
        Command::Spectrum { grid, num_eigs, tol } => spectrum(spec, grid, *num_eigs, *tol),
        Command::Leafwise {
            leaf_axes,
            grid,
            num_eigs,
            tol,
            leaf_spec,
        } => {
            let leaves = leaf_spec.as_ref().map(DistributionSpec::load).transpose()?;
            leafwise(spec, leaves.as_ref(), leaf_axes, grid, *num_eigs, *tol)
        }
        Command::Subelliptic { epsilon, grids, trials } => subelliptic(spec, *epsilon, grids, *trials),
        Command::GroupoidCheck {
            grid,
            leaf_axes,
            alpha,
            random_densities,
            refinements,
        } => groupoid_check(spec, grid, leaf_axes, alpha, *random_densities, *refinements),
    }
}

fn point_json(p: &[Rational]) -> Value {
    p.iter().map(format_rational).collect()
}

fn surrogate_warning(spec: &DistributionSpec, out: &mut Vec<Warning>) {
    if spec.is_periodic_surrogate() {
        out.push(Warning::new(
            PERIODIC_SURROGATE,
            "coefficients vary along periodic axes; the chart is treated as a periodic surrogate",
        ));
    }
}

fn analyze(spec: &DistributionSpec, points: &[Vec<Rational>], degree_bound: Option<u32>) -> Result<Output> {
    let d = degree_bound.unwrap_or_else(|| default_degree_bound(&spec.generators));
    let reports = continuity_scan(&spec.generators, points, d)?;
    let fibers = reports
        .iter()
        .map(|r| {
            let minimal = minimal_presentation_at(&spec.generators, &r.point, d)?;
            Ok(json!({
                "point": point_json(&r.point),
                "dim_ev": r.dim_ev,
                "dim_mod": r.dim_mod,
                "is_continuity_point": r.is_continuity_point,
                "minimal_presentation": minimal.iter().map(|&i| spec.names[i].clone()).collect::<Vec<_>>(),
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Output {
        parameters: json!({"points": points.len(), "degree_bound": d}),
        results: json!({"fibers": fibers}),
        warnings: vec![],
    })
}

fn flag(spec: &DistributionSpec, max_depth: usize, probes: &[Vec<Rational>]) -> Result<Output> {
    let f = bracket_closure(&spec.generators, max_depth, probes)?;
    let target = spec.chart.dim();
    let growth: Vec<Value> = growth_vectors(&f, probes, target)?
        .into_iter()
        .map(|g| json!({"point": point_json(&g.point), "dims": g.dims, "step": g.step}))
        .collect();
    let mut warnings = vec![];
    let regularity = match regularity_check(&f, probes) {
        Ok(Regularity::Regular(rank)) => json!({"regular": true, "rank": rank}),
        Ok(Regularity::Irregular { rank, witnesses }) => json!({
            "regular": false,
            "rank": rank,
            "witnesses": witnesses.iter().map(|w| point_json(w)).collect::<Vec<_>>(),
        }),
        Err(Error::FlagNotStabilized) => {
            warnings.push(Warning::new(
                FLAG_NOT_STABILIZED,
                format!("no stabilization within depth {max_depth}"),
            ));
            Value::Null
        }
        Err(e) => return Err(e),
    };
    let vars = spec.chart.var_names();
    let layers: Vec<Value> = f
        .layers()
        .iter()
        .map(|layer| {
            layer
                .iter()
                .map(|v| v.components().iter().map(|c| c.to_string_with(vars)).collect::<Vec<_>>())
                .collect()
        })
        .collect();
    Ok(Output {
        parameters: json!({"max_depth": max_depth, "probes": probes.len()}),
        results: json!({
            "depth": f.depth(),
            "stabilized": f.stabilized(),
            "layer_sizes": f.layers().iter().map(Vec::len).collect::<Vec<_>>(),
            "layers": layers,
            "growth_vectors": growth,
            "regularity": regularity,
        }),
        warnings,
    })
}

/// Turns solver non-convergence into a partial result plus a warning.
fn partial<T: serde::Serialize>(r: Result<T>, warnings: &mut Vec<Warning>) -> Result<Value> {
    match r {
        Ok(v) => Ok(serde_json::to_value(v)?),
        Err(Error::NoConvergence { report }) => {
            warnings.push(Warning::new(
                PARTIAL_CONVERGENCE,
                format!("eigensolver stopped after {} iterations", report.iterations),
            ));
            Ok(json!({"partial": serde_json::to_value(&*report)?}))
        }
        Err(e) => Err(e),
    }
}

fn spectrum(spec: &DistributionSpec, grid: &[usize], m: usize, tol: f64) -> Result<Output> {
    let g = GridSpec::new(spec.chart.clone(), grid.to_vec())?;
    let op = assemble_laplacian(spec, &g)?;
    let mut warnings = vec![];
    surrogate_warning(spec, &mut warnings);
    let results = partial(
        lowest_eigenpairs(&op, m, tol, spec.seed).map(|mut r| {
            r.grid = Some(g.descriptor());
            r
        }),
        &mut warnings,
    )?;
    Ok(Output {
        parameters: json!({"grid": grid, "num_eigs": m, "tol": tol, "seed": spec.seed}),
        results,
        warnings,
    })
}

fn leafwise(
    spec: &DistributionSpec,
    leaf_spec: Option<&DistributionSpec>,
    leaf_axes: &[usize],
    grid: &[usize],
    m: usize,
    tol: f64,
) -> Result<Output> {
    let g = GridSpec::new(spec.chart.clone(), grid.to_vec())?;
    let global = assemble_laplacian(spec, &g)?;
    let leaves = leafwise_family(leaf_spec.unwrap_or(spec), &g, leaf_axes)?;
    let mut warnings = vec![];
    surrogate_warning(spec, &mut warnings);
    let results = partial(compare_spectra(&global, &leaves, m, tol, spec.seed), &mut warnings)?;
    Ok(Output {
        parameters: json!({
            "grid": grid,
            "leaf_axes": leaf_axes,
            "num_eigs": m,
            "tol": tol,
            "seed": spec.seed,
            "leaf_spec_digest": leaf_spec.map(|s| s.digest()),
        }),
        results,
        warnings,
    })
}

fn subelliptic(spec: &DistributionSpec, epsilon: f64, grids: &[usize], trials: usize) -> Result<Output> {
    let specs = grids
        .iter()
        .map(|&n| GridSpec::new(spec.chart.clone(), vec![n; spec.chart.dim()]))
        .collect::<Result<Vec<_>>>()?;
    let report = subelliptic_ratio(spec, &specs, epsilon, trials, spec.seed)?;
    let mut warnings = vec![];
    surrogate_warning(spec, &mut warnings);
    Ok(Output {
        parameters: json!({"epsilon": epsilon, "grids": grids, "trials": trials, "seed": spec.seed}),
        results: serde_json::to_value(&report)?,
        warnings,
    })
}

fn random_quadratic(nvars: usize, rng: &mut ChaCha8Rng) -> Result<PolyExpr> {
    let mut terms = Vec::new();
    for i in 0..nvars {
        for j in i..nvars {
            let mut e = vec![0; nvars];
            e[i] += 1;
            e[j] += 1;
            terms.push((e, rational(rng.random_range(-5..=5), 10)));
        }
        let mut e = vec![0; nvars];
        e[i] = 1;
        terms.push((e, rational(rng.random_range(-5..=5), 10)));
    }
    PolyExpr::from_terms(nvars, terms)
}

/// Angle coordinate in `[0, 2π)` along each axis, used to build smooth test data.
fn angle(axis: &Axis, t: f64) -> f64 {
    use std::f64::consts::TAU;
    match axis {
        Axis::Periodic { period, .. } => TAU * t / period,
        Axis::Interval { lo, hi } => {
            let lo = rational_to_f64(lo);
            TAU * (t - lo) / (rational_to_f64(hi) - lo)
        }
    }
}

/// Vanishes to fourth order at interval endpoints; identically 1 on circles.
fn cutoff(axis: &Axis, t: f64) -> f64 {
    match axis {
        Axis::Periodic { .. } => 1.0,
        Axis::Interval { lo, hi } => {
            let (lo, hi) = (rational_to_f64(lo), rational_to_f64(hi));
            let s = 4.0 * (t - lo) * (hi - t) / ((hi - lo) * (hi - lo));
            s.powi(4)
        }
    }
}

fn smooth_kernel(g: &GroupoidChart) -> (Kernel<f64>, Vec<f64>) {
    let axes = g.grid().chart().axes().to_vec();
    let leaf = g.leaf_axes().to_vec();
    let trans: Vec<usize> = (0..axes.len()).filter(|a| !leaf.contains(a)).collect();
    let k = g.sample_kernel(|p, q| {
        let mut w = 1.0;
        let mut phase = 0.0;
        for &a in &leaf {
            w *= cutoff(&axes[a], p[a]) * cutoff(&axes[a], q[a]);
            phase += angle(&axes[a], p[a]) - 2.0 * angle(&axes[a], q[a]);
        }
        let t: f64 = trans.iter().map(|&b| angle(&axes[b], p[b])).sum();
        w * (1.0 + 0.5 * phase.sin()) * (2.0 + t.cos())
    });
    let u = g.sample(|p| {
        let s: f64 = leaf.iter().map(|&a| angle(&axes[a], p[a]).cos()).sum();
        let t: f64 = trans.iter().map(|&b| angle(&axes[b], p[b]).sin()).sum();
        (1.5 + 0.5 * s.sin()) * (1.5 + 0.5 * t.sin())
    });
    (k, u)
}

fn groupoid_check(
    spec: &DistributionSpec,
    grid: &[usize],
    leaf_axes: &[usize],
    alpha_src: &str,
    random_densities: bool,
    refinements: usize,
) -> Result<Output> {
    let chart = spec.chart.clone();
    let (alpha, mu) = if random_densities {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let a = random_quadratic(chart.dim(), &mut rng)?;
        let m = random_quadratic(chart.dim(), &mut rng)?;
        (LogDensity::new(chart.clone(), a)?, LogDensity::new(chart.clone(), m)?)
    } else {
        (LogDensity::parse(&chart, alpha_src)?, spec.log_density.clone())
    };
    let g = GridSpec::new(chart.clone(), grid.to_vec())?;
    let gc = build_chart(&g, leaf_axes, &alpha, &mu)?;
    let (nu, nt) = (gc.nu(), gc.nt());

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
    let real = |rng: &mut ChaCha8Rng| Kernel::from_fn(nu, nt, |_, _, _| rng.random_range(-1.0..1.0));
    let k1 = real(&mut rng);
    let k2 = real(&mut rng);
    let f = real(&mut rng);
    let u: Vec<f64> = (0..nu * nt).map(|_| rng.random_range(-1.0..1.0)).collect();

    let quasi = gc.quasi_invariance(&f)?;
    let lhs = gc.represent(&gc.convolve(&k1, &k2)?, &u)?;
    let rhs = gc.represent(&k1, &gc.represent(&k2, &u)?)?;
    let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    let hom_abs = gc.norm(&diff) / gc.norm(&u);
    let hom_rel = gc.norm(&diff) / gc.norm(&rhs);
    let assoc = {
        let f1 = gc.convolve(&gc.convolve(&k1, &k2)?, &f)?;
        let f2 = gc.convolve(&k1, &gc.convolve(&k2, &f)?)?;
        f1.distance(&f2) / f1.norm()
    };

    let mut crng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(2));
    let mut cplx = |n: usize| -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(crng.random_range(-1.0..1.0), crng.random_range(-1.0..1.0)))
            .collect()
    };
    let kc = Kernel::from_values(nu, nt, cplx(nu * nu * nt))?;
    let (uc, vc) = (cplx(nu * nt), cplx(nu * nt));
    let ru = gc.represent(&kc, &uc)?;
    let left = gc.inner(&ru, &vc);
    let right = gc.inner(&uc, &gc.represent(&gc.involution(&kc)?, &vc)?);
    let star = (left - right).norm() / (gc.norm(&ru) * gc.norm(&vc));

    let mut warnings = vec![];
    let n = chart.dim();
    let tangent: Vec<(String, VectorField)> = spec
        .names
        .iter()
        .zip(&spec.generators)
        .filter(|(_, x)| (0..n).all(|a| gc.leaf_axes().contains(&a) || x.components()[a].is_zero()))
        .map(|(s, x)| (s.clone(), x.clone()))
        .collect();
    if tangent.is_empty() {
        warnings.push(Warning::new(NO_TANGENT_GENERATOR, "no generator is tangent to the leaf axes"));
    }
    let mut multiplier = Vec::new();
    for (name, x) in &tangent {
        let mut hs = Vec::new();
        let mut residuals = Vec::new();
        let mut res = grid.to_vec();
        for _ in 0..refinements.max(1) {
            let gr = GridSpec::new(chart.clone(), res.clone())?;
            let chart_r = build_chart(&gr, leaf_axes, &alpha, &mu)?;
            let (k, u) = smooth_kernel(&chart_r);
            let (_, r) = chart_r.multiplier_correction(x, &k, &u)?;
            hs.push(gc.leaf_axes().iter().map(|&a| gr.spacing(a)).fold(0.0, f64::max));
            residuals.push(r);
            for &a in gc.leaf_axes() {
                res[a] *= 2;
            }
        }
        let order = if residuals.len() > 1 && residuals.iter().all(|r| *r > 0.0) {
            Some(loglog_slope(&hs, &residuals))
        } else {
            None
        };
        multiplier.push(json!({"generator": name, "spacings": hs, "residuals": residuals, "order": order}));
    }

    let vars = chart.var_names();
    Ok(Output {
        parameters: json!({
            "grid": grid,
            "leaf_axes": gc.leaf_axes(),
            "log_alpha": alpha.phi().to_string_with(vars),
            "log_mu": mu.phi().to_string_with(vars),
            "refinements": refinements,
            "seed": spec.seed,
        }),
        results: json!({
            "shape": [nu, nu, nt],
            "cocycle_residual": gc.cocycle_residual(),
            "quasi_invariance_residual": quasi.residual,
            "quasi_invariance_literal_form_residual": quasi.literal_form_residual,
            "associativity_residual": assoc,
            "homomorphism_residual": hom_abs,
            "homomorphism_relative_residual": hom_rel,
            "kernel_norms": [k1.norm(), k2.norm()],
            "star_residual": star,
            "multiplier": multiplier,
        }),
        warnings,
    })
}
