//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so every line is printed even when earlier criteria fail.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{ensure, Result};
use pleijel::constants::{first_bessel_zero, pleijel_constant};
use pleijel::hardy::{hardy_weight, random_test_fields, semibound_constant, verify_hardy};
use pleijel::nodal::{central_cell_bound, count_nodal_domains, localize_domains, nodal_bound_report, nodal_upper_bound, DEFAULT_ZERO_TOL};
use pleijel::partition::{build_lattice_partition, AnnularLayout};
use pleijel::spectral::{counting_lower_bound, exact_counting_ho, ho_reference};
use pleijel::weyl::{bracket_sums, bracketing_partition, exponent_fit, weyl_integral};
use pleijel::{DimensionalConstants, EigenPair, Grid, PotentialSpec};
use pleijel_cli::config::{EigenSource, ExperimentConfig};
use pleijel_cli::pipeline::{localization_partition, run_pipeline, solve_spectrum};
use pleijel_cli::verify::ims_worst;

type Outcome = Result<String>;

fn within(elapsed: Duration, limit_s: f64) -> Result<()> {
    ensure!(elapsed.as_secs_f64() < limit_s, "took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64());
    Ok(())
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let j0 = first_bessel_zero(0.0)?;
    ensure!((j0 - 2.404825557695773).abs() <= 1e-12, "j0 = {j0}");
    let g2 = DimensionalConstants::new(2)?.pleijel;
    // the formula is authoritative; the seven-digit decimal 0.6916604 is off by 1.2e-7
    ensure!((g2 - 4.0 / (j0 * j0)).abs() <= 1e-9, "γ2 = {g2}");
    ensure!((g2 - 0.6916604).abs() <= 2e-7, "γ2 = {g2} far from its decimal value");
    let g3 = DimensionalConstants::new(3)?.pleijel;
    ensure!((g3 - 9.0 / (2.0 * PI * PI)).abs() <= 1e-9, "γ3 = {g3}");
    let gammas: Vec<f64> = (2..=10).map(pleijel_constant).collect::<pleijel::Result<_>>()?;
    ensure!(gammas.iter().all(|&g| g < 1.0), "some γ_d >= 1");
    ensure!(gammas.windows(2).all(|w| w[1] < w[0]), "γ_d not decreasing: {gammas:?}");
    within(start.elapsed(), 1.0)?;
    Ok(format!("j0 = {j0:.15}, γ2 = {g2:.10}, γ3 = {g3:.10}, γ10 = {:.3e}", gammas[8]))
}

fn criterion_2() -> Outcome {
    let dir = tempfile::tempdir()?;
    let mut cfg = ExperimentConfig::harmonic_oscillator(dir.path());
    cfg.eigen_source = EigenSource::ExactLadder;
    cfg.lambda_max = Some(60.0);
    cfg.compute_bounds = false;
    let start = Instant::now();
    let summary = run_pipeline(&cfg, false)?;
    let elapsed = start.elapsed();
    let first = std::fs::read(&summary.csv)?;
    run_pipeline(&cfg, false)?;
    let second = std::fs::read(&summary.csv)?;
    ensure!(first == second, "CSV differs between runs");
    ensure!(summary.rows == 435, "{} rows", summary.rows);
    let gamma = DimensionalConstants::new(2)?.pleijel;
    let max = summary.max_ratio.ok_or_else(|| anyhow::anyhow!("no ratio"))?;
    ensure!(max <= gamma - 0.1, "max μ/N = {max}");
    within(elapsed, 1.0)?;
    Ok(format!("435 levels, max μ/N over n >= 20 = {max:.4} at n = {}, {:.3} s", summary.max_ratio_n.unwrap(), elapsed.as_secs_f64()))
}

fn criterion_3() -> Outcome {
    let mut cfg = ExperimentConfig::harmonic_oscillator("unused");
    cfg.n_eigenpairs = 10;
    let start = Instant::now();
    let pairs = solve_spectrum(&cfg)?;
    let elapsed = start.elapsed();
    let expected = [2.0, 4.0, 4.0, 6.0, 6.0, 6.0, 8.0, 8.0, 8.0, 8.0];
    ensure!(pairs.len() == 10, "{} pairs", pairs.len());
    let mut worst_rel: f64 = 0.0;
    let mut worst_res: f64 = 0.0;
    for (p, e) in pairs.iter().zip(expected) {
        worst_rel = worst_rel.max((p.lambda - e).abs() / e);
        worst_res = worst_res.max(p.residual);
    }
    ensure!(worst_rel <= 5e-3, "relative error {worst_rel}");
    ensure!(worst_res <= 1e-6, "residual {worst_res}");
    within(elapsed, 60.0)?;
    Ok(format!("max relative error {worst_rel:.2e}, max residual {worst_res:.2e}, {:.1} s", elapsed.as_secs_f64()))
}

fn oscillator_functions(n: usize) -> Result<Vec<(u32, u32, EigenPair)>> {
    let grid = Grid::new(2, 8.0, n)?;
    let mut out = Vec::new();
    for k1 in 0..6 {
        for k2 in 0..6 {
            out.push((k1, k2, ho_reference(k1, k2, grid)?));
        }
    }
    Ok(out)
}

fn criterion_4(coarse: &[(u32, u32, EigenPair)]) -> Outcome {
    let start = Instant::now();
    let fine = oscillator_functions(511)?;
    for (k1, k2, pair) in coarse.iter().chain(&fine) {
        let mu = count_nodal_domains(&pair.field, DEFAULT_ZERO_TOL)?.mu;
        let want = ((k1 + 1) * (k2 + 1)) as usize;
        ensure!(mu == want, "(k1, k2) = ({k1}, {k2}) at n = {}: {mu} != {want}", pair.field.grid.n);
    }
    within(start.elapsed(), 120.0)?;
    Ok(format!("36 functions at n = 255 and n = 511, {:.1} s", start.elapsed().as_secs_f64()))
}

fn criterion_5(coarse: &[(u32, u32, EigenPair)]) -> Outcome {
    let cfg = ExperimentConfig::harmonic_oscillator("unused");
    let mut domains = 0;
    let mut smallest = f64::INFINITY;
    for (k1, k2, pair) in coarse {
        let dec = count_nodal_domains(&pair.field, DEFAULT_ZERO_TOL)?;
        let cover = localization_partition(&cfg, pair.lambda)?;
        let audit = localize_domains(&dec, &cover, &pair.field)?;
        ensure!(audit.violations.is_empty(), "({k1}, {k2}): domains {:?} not localised", audit.violations);
        domains += dec.mu;
        smallest = smallest.min(audit.localized_cells.iter().map(|c| c.len()).min().unwrap_or(0) as f64);
    }
    Ok(format!("{domains} domains, each localised in at least {smallest} cell(s) (M = 4)"))
}

fn criterion_6(coarse: &[(u32, u32, EigenPair)]) -> Outcome {
    let spec = PotentialSpec::harmonic_oscillator();
    let mut worst: f64 = 0.0;
    for (k1, k2, pair) in coarse {
        let mu = count_nodal_domains(&pair.field, DEFAULT_ZERO_TOL)?.mu as f64;
        let bound = nodal_upper_bound(&spec, pair.lambda, &bracketing_partition(&spec, pair.lambda, 2, 0.25)?, 2, None)?;
        ensure!(mu <= bound, "({k1}, {k2}): μ = {mu} > {bound}");
        worst = worst.max(mu / bound);
    }
    let mut lows = Vec::new();
    for lambda in [10.0, 20.0, 40.0, 60.0] {
        let p = build_lattice_partition(lambda, 1.0 / 6.0, 0.25, lambda.sqrt() + 1.0, 2)?;
        let lower = counting_lower_bound(&spec, lambda, &p.cells)?;
        let exact = exact_counting_ho(lambda);
        ensure!(lower <= exact, "λ = {lambda}: {lower} > {exact}");
        lows.push(format!("{lower}<={exact}"));
    }
    Ok(format!("max μ/bound = {worst:.3e}; lower counts {}", lows.join(", ")))
}

fn criterion_7() -> Outcome {
    let spec = PotentialSpec::harmonic_oscillator();
    let mut worst: f64 = 0.0;
    for lambda in [10.0, 40.0, 160.0] {
        let exact = PI * lambda * lambda / 2.0;
        worst = worst.max((weyl_integral(&spec, lambda, 2)? - exact).abs() / exact);
    }
    ensure!(worst <= 1e-4, "relative error {worst}");
    let fit = exponent_fit(&spec, &[20.0, 40.0, 80.0, 160.0], 2)?;
    ensure!((fit.fitted_slope_weyl - 2.0).abs() <= 0.05, "W slope {}", fit.fitted_slope_weyl);
    Ok(format!("max relative error {worst:.2e}, W slope {:.4}", fit.fitted_slope_weyl))
}

fn criterion_8() -> Outcome {
    let ho = PotentialSpec::harmonic_oscillator();
    let fit = exponent_fit(&ho, &[20.0, 40.0, 80.0, 160.0], 2)?;
    let mut tested = 0;
    for r in &fit.reports {
        ensure!(r.lower_sum <= r.weyl && r.weyl <= r.upper_sum, "λ = {}: {} <= {} <= {}", r.lambda, r.lower_sum, r.weyl, r.upper_sum);
        tested += 1;
    }
    let ratios: Vec<f64> = fit.reports.iter().map(|r| r.defect / r.weyl).collect();
    ensure!(ratios.windows(2).all(|w| w[1] < w[0]), "A/W not decreasing: {ratios:?}");
    ensure!(fit.fitted_slope_defect <= 4.0 / 3.0 + 0.3, "A slope {}", fit.fitted_slope_defect);
    // other partitions of the same levels, and the Coulomb problem
    for (lambda, delta) in [(20.0, 0.1), (40.0, 0.4), (80.0, 0.5)] {
        let r = bracket_sums(&ho, lambda, &bracketing_partition(&ho, lambda, 2, delta)?, 2)?;
        ensure!(r.lower_sum <= r.weyl && r.weyl <= r.upper_sum, "HO λ = {lambda}, δ = {delta}");
        tested += 1;
    }
    let coulomb = PotentialSpec::coulomb(2.0, 1.0, 2)?;
    for lambda in [-0.04, -0.02, -0.01, -0.005] {
        let r = bracket_sums(&coulomb, lambda, &bracketing_partition(&coulomb, lambda, 2, 0.05)?, 2)?;
        ensure!(r.lower_sum <= r.weyl && r.weyl <= r.upper_sum, "Coulomb λ = {lambda}");
        tested += 1;
    }
    Ok(format!(
        "{tested} brackets hold; A/W = {}; A slope {:.3} (prediction {:.3})",
        ratios.iter().map(|r| format!("{r:.0}")).collect::<Vec<_>>().join(" > "),
        fit.fitted_slope_defect,
        fit.predicted_slope_defect
    ))
}

/// Eigenvalues of `-R'' - R'/r + m²R/r² - 2R/r = λR` on `(0, r_max)` with
/// `R(r_max) = 0`, found by Sturm node counting and bisection.
mod radial {
    /// Zeros of the regular solution on `(0, r_max)`.
    fn nodes(lambda: f64, m: u32, r_max: f64) -> usize {
        let mf = m as f64;
        // Frobenius series R = r^m Σ a_k r^k
        let r0: f64 = 1e-4;
        let (mut a_prev2, mut a_prev) = (0.0, 1.0);
        let (mut val, mut der) = (r0.powi(m as i32), mf * r0.powf(mf - 1.0));
        for k in 1..6 {
            let kf = k as f64;
            let a = (-2.0 * a_prev - lambda * a_prev2) / ((mf + kf).powi(2) - mf * mf);
            val += a * r0.powf(mf + kf);
            der += a * (mf + kf) * r0.powf(mf + kf - 1.0);
            a_prev2 = a_prev;
            a_prev = a;
        }
        let rhs = |r: f64, y: [f64; 2]| -> [f64; 2] { [y[1], -y[1] / r + (mf * mf / (r * r) - 2.0 / r - lambda) * y[0]] };
        let mut y = [val, der];
        let mut r = r0;
        let mut count = 0;
        let steps = 200_000;
        let h = (r_max - r0) / steps as f64;
        for _ in 0..steps {
            let k1 = rhs(r, y);
            let k2 = rhs(r + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
            let k3 = rhs(r + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
            let k4 = rhs(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            let next = [y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]), y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])];
            if next[0] * y[0] < 0.0 {
                count += 1;
            }
            // rescale to avoid overflow in the forbidden region
            let scale = next[0].abs().max(next[1].abs());
            y = if scale > 1e100 { [next[0] / scale, next[1] / scale] } else { next };
            r += h;
        }
        count
    }

    /// `k`-th (from 0) eigenvalue of angular momentum `m`.
    pub fn level(m: u32, k: usize, r_max: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0, -1e-6);
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if nodes(mid, m, r_max) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

struct CoulombRun {
    pairs: Vec<EigenPair>,
    elapsed: Duration,
}

fn coulomb_run() -> Result<CoulombRun> {
    let cfg = ExperimentConfig::coulomb("unused");
    let start = Instant::now();
    let pairs = solve_spectrum(&cfg)?;
    Ok(CoulombRun { pairs, elapsed: start.elapsed() })
}

fn criterion_9(run: &CoulombRun) -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::coulomb("unused");
    let spec = &cfg.potential;
    let negative: Vec<&EigenPair> = run.pairs.iter().filter(|p| p.lambda < 0.0).collect();
    ensure!(negative.len() >= 3, "{} negative eigenvalues", negative.len());
    // m = 0 levels once, m = 1 levels twice (cos and sin)
    let mut oracle = vec![radial::level(0, 0, 40.0), radial::level(0, 1, 40.0), radial::level(1, 0, 40.0), radial::level(1, 0, 40.0)];
    oracle.sort_by(f64::total_cmp);
    let mut worst: f64 = 0.0;
    for (p, o) in negative.iter().zip(&oracle) {
        worst = worst.max((p.lambda - o).abs() / o.abs());
    }
    ensure!(worst <= 0.02, "oracle mismatch {worst}");
    let cover = localization_partition(&cfg, -0.5)?;
    let mu0 = central_cell_bound(spec, &cover)?;
    ensure!(mu0.is_finite(), "central bound {mu0}");
    for p in &negative {
        let dec = count_nodal_domains(&p.field, DEFAULT_ZERO_TOL)?;
        let audit = localize_domains(&dec, &cover, &p.field)?;
        ensure!(audit.violations.is_empty(), "λ = {}: {:?} not localised", p.lambda, audit.violations);
        let bound = nodal_bound_report(spec, p.lambda, &cover, 2, None)?;
        ensure!(bound.mu0 == mu0, "central bound varies with λ");
    }
    within(run.elapsed + start.elapsed(), 300.0)?;
    Ok(format!(
        "levels {} vs oracle {}; max deviation {:.2}%; μ0 = {mu0:.4}; {:.1} s",
        negative.iter().map(|p| format!("{:.4}", p.lambda)).collect::<Vec<_>>().join(" "),
        oracle.iter().map(|o| format!("{o:.4}")).collect::<Vec<_>>().join(" "),
        100.0 * worst,
        (run.elapsed + start.elapsed()).as_secs_f64()
    ))
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    for r in [1.0, 2.0] {
        for q in [1.0 / 3.0, 0.5, 2.0 / 3.0] {
            let layout = AnnularLayout::with_layers(r, q, 100)?;
            layout.check_properties().map_err(|e| anyhow::anyhow!("(r, q) = ({r}, {q}): {e}"))?;
            let (lo, hi) = layout.ratio_bounds();
            let (obs_lo, obs_hi) = layout.observed_ratio_range().unwrap();
            ensure!(obs_lo >= lo && obs_hi <= hi, "(r, q) = ({r}, {q}): ratios [{obs_lo}, {obs_hi}] outside [{lo}, {hi}]");
            let m_lo = 1.0 / (1.0 + r.powf(q - 1.0));
            ensure!((layout.m_lo - m_lo).abs() < 1e-15, "M_lo = {}", layout.m_lo);
            for l in &layout.layers {
                ensure!(l.d >= m_lo * l.r.powf(q) * (1.0 - 1e-12), "(r, q) = ({r}, {q}): d = {} below {}", l.d, m_lo * l.r.powf(q));
            }
        }
    }
    within(start.elapsed(), 1.0)?;
    Ok("6 layouts × 100 layers satisfy the sequence properties and ratio bounds".into())
}

fn criterion_11(run: &CoulombRun) -> Outcome {
    let c3 = semibound_constant(&PotentialSpec::coulomb(2.0, 1.0, 3)?, 3)?;
    ensure!((c3 - 4.0).abs() <= 1e-6, "semibound constant {c3}");
    let poles = vec![vec![0.0, 0.0, 0.0]];
    let w = hardy_weight(&poles, 3, None)?;
    let report = verify_hardy(&w, &random_test_fields(Grid::new(3, 3.0, 47)?, &poles, None, 50, 7))?;
    for (m, e) in report.margins.iter().zip(&report.energies) {
        ensure!(*m >= -1e-3 * e, "margin {m} against energy {e}");
    }
    let lowest = run.pairs.iter().map(|p| p.lambda).fold(f64::INFINITY, f64::min);
    ensure!(lowest >= -4.0 - 0.05, "λ_min = {lowest}");
    Ok(format!("C = {c3:.9}; min relative margin {:.3e}; λ_min = {lowest:.5}", report.min_relative_margin))
}

fn criterion_12() -> Outcome {
    let mut errors = Vec::new();
    for n in [255, 511] {
        let mut cfg = ExperimentConfig::harmonic_oscillator("unused");
        cfg.grid.n = n;
        let ground = ho_reference(0, 0, Grid::new(2, 8.0, n)?)?;
        let (worst, cells) = ims_worst(&cfg, &ground, 0.0)?;
        errors.push((n, worst, cells));
    }
    ensure!(errors[0].1 < 1e-2, "n = 255: {}", errors[0].1);
    ensure!(errors[1].1 < errors[0].1, "no decrease: {errors:?}");
    Ok(format!("{} interior cells; max relative error {:.2e} (n = 255) → {:.2e} (n = 511)", errors[0].2, errors[0].1, errors[1].1))
}

fn report(index: usize, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f));
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(Ok(detail)) => {
            println!("criterion {index}: PASS — {detail} [{secs:.2} s]");
            true
        }
        Ok(Err(e)) => {
            println!("criterion {index}: FAIL — {e:#} [{secs:.2} s]");
            false
        }
        Err(_) => {
            println!("criterion {index}: FAIL — panicked [{secs:.2} s]");
            false
        }
    }
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters from the harness are not supported
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut ok = true;
    ok &= report(1, criterion_1);
    ok &= report(2, criterion_2);
    ok &= report(3, criterion_3);
    let coarse = oscillator_functions(255);
    match &coarse {
        Ok(coarse) => {
            ok &= report(4, || criterion_4(coarse));
            ok &= report(5, || criterion_5(coarse));
            ok &= report(6, || criterion_6(coarse));
        }
        Err(e) => {
            for i in 4..=6 {
                println!("criterion {i}: FAIL — reference functions: {e:#}");
            }
            ok = false;
        }
    }
    ok &= report(7, criterion_7);
    ok &= report(8, criterion_8);
    let coulomb = coulomb_run();
    match &coulomb {
        Ok(run) => ok &= report(9, || criterion_9(run)),
        Err(e) => {
            println!("criterion 9: FAIL — eigensolver: {e:#}");
            ok = false;
        }
    }
    ok &= report(10, criterion_10);
    match &coulomb {
        Ok(run) => ok &= report(11, || criterion_11(run)),
        Err(e) => {
            println!("criterion 11: FAIL — eigensolver: {e:#}");
            ok = false;
        }
    }
    ok &= report(12, criterion_12);
    if ok {
        println!("acceptance: all 12 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: some criteria failed");
        ExitCode::FAILURE
    }
}
