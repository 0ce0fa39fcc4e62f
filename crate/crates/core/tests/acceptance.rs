//! End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use horlap::cli::{run_command, Command, RunReport};
use horlap::grid::{assemble_laplacian, discretize_field, mass_vector, GridSpec};
use horlap::spec::DistributionSpec;

struct Outcome {
    pass: bool,
    detail: String,
    report: Vec<u8>,
}

fn spec_json(axes: &str, vars: &[&str], gens: &[&[&str]], extra: &str) -> String {
    let g: Vec<String> = gens
        .iter()
        .enumerate()
        .map(|(i, c)| format!(r#"{{"name":"X{}","components":{}}}"#, i + 1, serde_json::to_string(c).unwrap()))
        .collect();
    format!(
        r#"{{"schema_version":"1","chart":{{"vars":{},"axes":[{axes}]}},"generators":[{}]{extra}}}"#,
        serde_json::to_string(vars).unwrap(),
        g.join(",")
    )
}

fn load(json: &str) -> DistributionSpec {
    DistributionSpec::from_json_str(json).expect("acceptance spec")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(spec: &DistributionSpec, cmd: Command) -> RunReport {
    run_command(spec, &cmd).expect("command failed")
}

fn bytes(reports: &[&RunReport]) -> Vec<u8> {
    reports.iter().flat_map(|r| r.without_timings().to_json()).collect()
}

const BOX_CIRCLE: &str = r#"{"type":"interval","lo":"-4","hi":"4"},{"type":"periodic","period":"2*pi"}"#;
const TORUS: &str = r#"{"type":"periodic","period":"2*pi"},{"type":"periodic","period":"2*pi"}"#;

fn grushin() -> DistributionSpec {
    load(&spec_json(BOX_CIRCLE, &["x", "y"], &[&["1", "0"], &["0", "x"]], r#","seed":42"#))
}

fn criterion_1(dir: &Path) -> Outcome {
    let spec = grushin();
    let mut rows = Vec::new();
    for i in 0..20 {
        rows.push(format!("0,{}/7", i as i64 - 10));
    }
    for i in 0..20i64 {
        let x = if i % 2 == 0 { format!("{}/6", i + 1) } else { format!("-{}/6", i + 1) };
        rows.push(format!("{x},{}/4", i - 7));
    }
    let points = write(dir, "c1_points.csv", &rows.join("\n"));
    let r = run(&spec, Command::Analyze { points, degree_bound: None });
    let fibers = r.results["fibers"].as_array().unwrap();
    let mut bad = 0;
    for (i, f) in fibers.iter().enumerate() {
        let want_ev = if i < 20 { 1 } else { 2 };
        if f["dim_ev"] != want_ev || f["dim_mod"] != 2 {
            bad += 1;
        }
    }
    Outcome {
        pass: fibers.len() == 40 && bad == 0,
        detail: format!("{} points, {bad} mismatches", fibers.len()),
        report: bytes(&[&r]),
    }
}

type Field = fn(&[f64]) -> Vec<f64>;

/// Growth vector from hand-derived bracket layers, truncated at full rank.
fn oracle_growth(layers: &[Vec<Field>], p: &[f64]) -> Vec<usize> {
    let n = p.len();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut dims = Vec::new();
    for layer in layers {
        cols.extend(layer.iter().map(|f| f(p)));
        let m = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        let r = m.rank(1e-9);
        dims.push(r);
        if r == n {
            break;
        }
    }
    dims
}

fn reported_growth(g: &Value) -> Vec<usize> {
    let dims: Vec<usize> = g["dims"].as_array().unwrap().iter().map(|d| d.as_u64().unwrap() as usize).collect();
    match g["step"].as_u64() {
        Some(s) => dims[..s as usize].to_vec(),
        None => dims,
    }
}

fn parse_point(v: &Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|s| {
            let s = s.as_str().unwrap();
            match s.split_once('/') {
                Some((a, b)) => a.parse::<f64>().unwrap() / b.parse::<f64>().unwrap(),
                None => s.parse().unwrap(),
            }
        })
        .collect()
}

fn criterion_2(dir: &Path) -> Outcome {
    let cube = r#"{"type":"interval","lo":"-3","hi":"3"},{"type":"interval","lo":"-3","hi":"3"},{"type":"interval","lo":"-3","hi":"3"}"#;
    let heis = load(&spec_json(cube, &["x", "y", "z"], &[&["1", "0", "-1/2*y"], &["0", "1", "1/2*x"]], ""));
    let mart = load(&spec_json(cube, &["x", "y", "z"], &[&["1", "0", "0"], &["0", "1", "1/2*x^2"]], ""));
    let mut grid = Vec::new();
    for a in -2..=2 {
        for b in -2..=2 {
            for c in -2..=2 {
                grid.push(format!("{a},{b},{c}"));
            }
        }
    }
    let cube_probes = write(dir, "c2_cube.csv", &grid.join("\n"));
    let mart_probes = write(dir, "c2_martinet.csv", "0,0,0\n0,1,-2\n0,-1/2,1\n1,0,0\n-2,1,1\n1/3,-1,2\n");
    let grushin_probes = write(dir, "c2_grushin.csv", "0,0\n");

    let cases: Vec<(RunReport, Vec<Vec<Field>>)> = vec![
        (
            run(&grushin(), Command::Flag { max_depth: 8, probes: grushin_probes }),
            vec![vec![|_| vec![1.0, 0.0], |p| vec![0.0, p[0]]], vec![|_| vec![0.0, 1.0]]],
        ),
        (
            run(&heis, Command::Flag { max_depth: 8, probes: cube_probes }),
            vec![
                vec![|p| vec![1.0, 0.0, -p[1] / 2.0], |p| vec![0.0, 1.0, p[0] / 2.0]],
                vec![|_| vec![0.0, 0.0, 1.0]],
            ],
        ),
        (
            run(&mart, Command::Flag { max_depth: 8, probes: mart_probes }),
            vec![
                vec![|_| vec![1.0, 0.0, 0.0], |p| vec![0.0, 1.0, p[0] * p[0] / 2.0]],
                vec![|p| vec![0.0, 0.0, p[0]]],
                vec![|_| vec![0.0, 0.0, 1.0]],
            ],
        ),
    ];
    let mut bad = 0;
    let mut checked = 0;
    let mut seen = Vec::new();
    for (r, layers) in &cases {
        for g in r.results["growth_vectors"].as_array().unwrap() {
            let p = parse_point(&g["point"]);
            let got = reported_growth(g);
            checked += 1;
            if got != oracle_growth(layers, &p) {
                bad += 1;
            }
            seen.push(got);
        }
    }
    // Spot values: Grushin origin, Heisenberg, Martinet on and off the singular plane.
    let expected = [
        (0, vec![1, 2]),
        (1, vec![2, 3]),
        (1 + 125, vec![2, 2, 3]),
        (1 + 125 + 3, vec![2, 3]),
    ];
    let spot = expected.iter().all(|(i, v)| &seen[*i] == v);
    Outcome {
        pass: bad == 0 && spot && checked == 1 + 125 + 6,
        detail: format!("{checked} probes, {bad} oracle mismatches, spot values {}", if spot { "ok" } else { "wrong" }),
        report: bytes(&cases.iter().map(|(r, _)| r).collect::<Vec<_>>()),
    }
}

fn random_poly(rng: &mut ChaCha8Rng, vars: &[&str], max_deg: u32) -> String {
    let mut terms = vec![format!("{}/4", rng.random_range(-4..=4))];
    for _ in 0..3 {
        let c = rng.random_range(-4..=4);
        let mut t = format!("{c}/4");
        for v in vars {
            let d = rng.random_range(0..=max_deg);
            if d > 0 {
                t.push_str(&format!("*{v}^{d}"));
            }
        }
        terms.push(t);
    }
    terms.join(" + ").replace("+ -", "- ")
}

fn criterion_3(_: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let box_axes = r#"{"type":"interval","lo":"-1","hi":"1"},{"type":"interval","lo":"-1","hi":"1"}"#;
    let mut worst_form: f64 = 0.0;
    let mut worst_psd: f64 = 0.0;
    let mut symmetric = true;
    let mut pass = true;
    let mut per_spec = Vec::new();
    for s in 0..10 {
        let k = 2 + s % 2;
        let comps: Vec<Vec<String>> = (0..k)
            .map(|_| (0..2).map(|_| random_poly(&mut rng, &["x", "y"], 1)).collect())
            .collect();
        let comp_refs: Vec<Vec<&str>> = comps.iter().map(|c| c.iter().map(String::as_str).collect()).collect();
        let gens: Vec<&[&str]> = comp_refs.iter().map(Vec::as_slice).collect();
        let phi = random_poly(&mut rng, &["x", "y"], 1);
        let (axes, extra) = if s % 2 == 0 {
            (box_axes, format!(r#","log_density":"{phi}""#))
        } else {
            (TORUS, format!(r#","log_density":"{phi}","allow_nonperiodic":true"#))
        };
        let spec = load(&spec_json(axes, &["x", "y"], &gens, &extra));
        let g = GridSpec::new(spec.chart.clone(), vec![32, 32]).unwrap();
        let op = assemble_laplacian(&spec, &g).unwrap();
        let a = op.matrix();
        let sym = a.is_exactly_symmetric();
        symmetric &= sym;
        let norm_a = a.norm_inf();
        let diffs: Vec<_> = spec.generators.iter().map(|x| discretize_field(x, &g).unwrap()).collect();
        let mass = mass_vector(&spec.log_density, &g).unwrap();
        let (mut fw, mut pw) = (0.0f64, 0.0f64);
        for _ in 0..100 {
            let u: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let au = a.matvec(&u);
            let q: f64 = u.iter().zip(&au).map(|(x, y)| x * y).sum();
            let uu: f64 = u.iter().map(|x| x * x).sum();
            let form: f64 = diffs
                .iter()
                .map(|d| d.matvec(&u).iter().zip(&mass).map(|(v, m)| v * v * m).sum::<f64>())
                .sum();
            let excess = (q - form).abs() / (1e-12 * q + 1e-14);
            let neg = -q / (1e-12 * norm_a * uu);
            fw = fw.max(excess);
            pw = pw.max(neg);
            if excess > 1.0 || neg > 1.0 {
                pass = false;
            }
        }
        worst_form = worst_form.max(fw);
        worst_psd = worst_psd.max(pw);
        per_spec.push(json!({"digest": spec.digest(), "symmetric": sym, "form_excess": fw, "psd_excess": pw}));
    }
    let report = serde_json::to_vec_pretty(&per_spec).unwrap();
    Outcome {
        pass: pass && symmetric,
        detail: format!(
            "10 specs x 100 vectors, symmetric {symmetric}, worst form error {worst_form:.2e} of budget, worst negativity {worst_psd:.2e} of budget"
        ),
        report,
    }
}

/// Groups ascending values whose relative gap is below `rel`; returns cluster means.
fn clusters(vals: &[f64], rel: f64) -> Vec<f64> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for &v in vals {
        match out.last_mut() {
            Some(c) if (v - c[0]).abs() <= rel * v.abs().max(1e-300) => c.push(v),
            _ => out.push(vec![v]),
        }
    }
    out.iter().map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}

/// Centered-difference Gram of `d/dx` on `n` interior nodes of `[-4, 4]`, plus `m² x²`.
fn fourier_mode_spectrum(n: usize, m: f64) -> Vec<f64> {
    let h = 8.0 / (n + 1) as f64;
    let mut d = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        if i + 1 < n {
            d[(i, i + 1)] = 0.5 / h;
        }
        if i > 0 {
            d[(i, i - 1)] = -0.5 / h;
        }
    }
    let mut a = d.transpose() * &d;
    for i in 0..n {
        let x = -4.0 + (i + 1) as f64 * h;
        a[(i, i)] += m * m * x * x;
    }
    let mut v: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

fn criterion_4(_: &Path) -> Outcome {
    let spec = grushin();
    let r = run(&spec, Command::Spectrum { grid: vec![256, 64], num_eigs: 32, tol: 1e-8 });
    let eig: Vec<f64> = serde_json::from_value(r.results["eigenvalues"].clone()).unwrap_or_default();
    let top = eig.iter().copied().fold(0.0, f64::max);
    let nonzero: Vec<f64> = eig.iter().copied().filter(|v| *v > 1e-8 * top).collect();
    let global = clusters(&nonzero, 1e-3);

    let mut oracle: Vec<f64> = (0..=3).flat_map(|m| fourier_mode_spectrum(256, m as f64)).collect();
    oracle.sort_by(f64::total_cmp);
    let oracle = clusters(&oracle, 1e-3);
    let matched = global.len() >= 5 && oracle.len() >= 5;
    let spectral_err = if matched {
        (0..5).map(|i| (global[i] - oracle[i]).abs() / oracle[i]).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };

    // Oracle refinement toward (2k+1)|n| for k = 0, 1 and |n| = 1..3.
    let mut errs = Vec::new();
    for n in [256, 512, 1024] {
        let mut e: f64 = 0.0;
        for m in 1..=3 {
            let c = clusters(&fourier_mode_spectrum(n, m as f64), 1e-6);
            for k in 0..2 {
                let exact = ((2 * k + 1) * m) as f64;
                e = e.max((c[k] - exact).abs() / exact);
            }
        }
        errs.push(e);
    }
    let refining = errs.windows(2).all(|w| w[1] <= w[0]) && errs[errs.len() - 1] <= 0.01;
    Outcome {
        pass: r.results["converged"] == true && spectral_err <= 0.02 && refining,
        detail: format!(
            "five lowest nonzero {:?}, max rel err {spectral_err:.2e}; oracle vs (2k+1)|n| errors {:?}",
            global.iter().take(5).map(|v| format!("{v:.6}")).collect::<Vec<_>>(),
            errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>()
        ),
        report: bytes(&[&r]),
    }
}

fn criterion_5(dir: &Path) -> Outcome {
    let unit = r#"{"type":"periodic","period":"1"},{"type":"periodic","period":"1"}"#;
    let spec = load(&spec_json(unit, &["x", "y"], &[&["1", "0"]], r#","seed":3"#));
    let neg = write(dir, "c5_neg.json", &spec_json(unit, &["x", "y"], &[&["2", "0"]], r#","seed":3"#));
    let cmd = |leaf_spec| Command::Leafwise {
        leaf_axes: vec![0],
        grid: vec![64, 16],
        num_eigs: 200,
        tol: 1e-8,
        leaf_spec,
    };
    let r = run(&spec, cmd(None));
    let c = run(&spec, cmd(Some(neg)));
    let d = r.results["hausdorff_defect"].as_f64().unwrap_or(f64::INFINITY);
    let dn = c.results["hausdorff_defect"].as_f64().unwrap_or(0.0);
    Outcome {
        pass: d <= 1e-8 && dn >= 1.0,
        detail: format!("defect {d:.2e}, negative control defect {dn:.3}"),
        report: bytes(&[&r, &c]),
    }
}

fn criterion_6(_: &Path) -> Outcome {
    let flat = load(&spec_json(TORUS, &["x", "y"], &[&["1", "0"], &["0", "1"]], r#","seed":7"#));
    let gr = load(&spec_json(TORUS, &["x", "y"], &[&["1", "0"], &["0", "x"]], r#","seed":7,"allow_nonperiodic":true"#));
    let sub = |s: &DistributionSpec, e: f64| run(s, Command::Subelliptic { epsilon: e, grids: vec![32, 64, 128], trials: 8 });
    let f2 = sub(&flat, 2.0);
    let g05 = sub(&gr, 0.5);
    let g15 = sub(&gr, 1.5);
    let var = |r: &RunReport| r.results["relative_variation"].as_f64().unwrap();
    let slope = g15.results["loglog_slope"].as_f64().unwrap();
    Outcome {
        pass: var(&f2) <= 0.10 && var(&g05) <= 0.25 && slope >= 0.5,
        detail: format!(
            "flat eps=2 variation {:.3}, surrogate eps=1/2 variation {:.3}, eps=3/2 slope {slope:.3}",
            var(&f2),
            var(&g05)
        ),
        report: bytes(&[&f2, &g05, &g15]),
    }
}

fn criterion_7(_: &Path) -> Outcome {
    let axes = r#"{"type":"interval","lo":"-1","hi":"1"},{"type":"periodic","period":"2*pi"}"#;
    let spec = load(&spec_json(axes, &["x", "y"], &[&["1 + 1/2*x", "0"]], r#","seed":11"#));
    let r = run(
        &spec,
        Command::GroupoidCheck {
            grid: vec![16, 8],
            leaf_axes: vec![0],
            alpha: "0".into(),
            random_densities: true,
            refinements: 3,
        },
    );
    let res = &r.results;
    let f = |k: &str| res[k].as_f64().unwrap_or(f64::INFINITY);
    let norms: Vec<f64> = serde_json::from_value(res["kernel_norms"].clone()).unwrap();
    let order = res["multiplier"][0]["order"].as_f64().unwrap_or(0.0);
    let shape_ok = res["shape"] == json!([16, 16, 8]);
    let ok = shape_ok
        && f("cocycle_residual") <= 1e-13
        && f("quasi_invariance_residual") <= 1e-12
        && f("homomorphism_residual") <= 1e-12 * norms[0] * norms[1]
        && f("star_residual") <= 1e-12
        && order >= 1.9;
    Outcome {
        pass: ok,
        detail: format!(
            "cocycle {:.1e}, quasi-invariance {:.1e}, homomorphism {:.1e} (bound {:.1e}), star {:.1e}, multiplier order {order:.3}",
            f("cocycle_residual"),
            f("quasi_invariance_residual"),
            f("homomorphism_residual"),
            1e-12 * norms[0] * norms[1],
            f("star_residual"),
        ),
        report: bytes(&[&r]),
    }
}

type Criterion = fn(&Path) -> Outcome;

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let criteria: [(u32, &str, f64, Criterion); 7] = [
        (1, "grushin fibers", 5.0, criterion_1),
        (2, "bracket flags", 5.0, criterion_2),
        (3, "self-adjointness and form identity", f64::INFINITY, criterion_3),
        (4, "grushin spectrum", 120.0, criterion_4),
        (5, "leafwise spectrum inclusion", 30.0, criterion_5),
        (6, "subelliptic probe", 120.0, criterion_6),
        (7, "groupoid algebra", 30.0, criterion_7),
    ];
    let mut failed = Vec::new();
    let mut reports = Vec::new();
    for (id, name, budget, f) in criteria {
        let t = Instant::now();
        let o = f(dir.path());
        let secs = t.elapsed().as_secs_f64();
        let ok = o.pass && secs < budget;
        println!(
            "[{}] criterion {id} {name}: {} ({secs:.2} s{})",
            if ok { "PASS" } else { "FAIL" },
            o.detail,
            if budget.is_finite() { format!(" of {budget:.0} s") } else { String::new() }
        );
        if !ok {
            failed.push(id);
        }
        reports.push(o.report);
    }

    let t = Instant::now();
    let drift: Vec<u32> = criteria
        .iter()
        .zip(&reports)
        .filter(|((_, _, _, f), first)| f(dir.path()).report != **first)
        .map(|((id, ..), _)| *id)
        .collect();
    println!(
        "[{}] criterion 8 determinism: reruns of 1-7 {} ({:.2} s)",
        if drift.is_empty() { "PASS" } else { "FAIL" },
        if drift.is_empty() { "byte-identical".to_string() } else { format!("differ for {drift:?}") },
        t.elapsed().as_secs_f64()
    );
    if !drift.is_empty() {
        failed.push(8);
    }
    if !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
