//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits nonzero if any failed.

use std::time::Instant;

use pwer_core::allocation::{allocate, RandomArrival, Stratified};
use pwer_core::control::{error_rates, solve_equal, SolverOptions};
use pwer_core::design::{build_model, CellSummary, DesignModel, PooledVariance, VarianceRegime};
use pwer_core::mvdist::{mvn_cdf, mvt_cdf, CorrelationMatrix, IntegrationBudget};
use pwer_core::sim::{
    empty_stratum_study, lfc_check, run_scenario, summarize, summarize_values, BiomarkerMode, CellVariances, Metric,
    RepRecord, ScenarioSpec, VarianceSpec,
};
use pwer_core::strata::{
    enumerate_strata, CellValues, CountTable, PrevalenceVector, StrataIndex, Treatment, TreatmentStructure,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const ALPHA: f64 = 0.025;
const SEED: u64 = 20_240_611;

struct Outcome {
    pass: bool,
    detail: String,
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn scenario(m: usize, n: u64, replicates: usize) -> ScenarioSpec {
    ScenarioSpec {
        replicates,
        seed: SEED,
        ..ScenarioSpec::new(m, n)
    }
}

fn records(m: usize, n: u64, replicates: usize) -> (Vec<RepRecord>, usize) {
    let out = run_scenario(&scenario(m, n, replicates)).expect("valid scenario");
    let failed = out.failures.len();
    (out.records, failed)
}

fn mean_sd_criterion(records: &[RepRecord], failed: usize, mean: f64, mean_tol: f64, sd: f64) -> Outcome {
    let s = summarize(records, Metric::TruePwer).unwrap();
    let pass = within(s.mean, mean, mean_tol) && within(s.sd, sd, 0.25 * sd);
    Outcome {
        pass,
        detail: format!(
            "mean {:.5} (target {mean} +/- {mean_tol}), sd {:.5} (target {sd} +/- 25%), min {:.5}, max {:.5}, {} records, {failed} excluded",
            s.mean, s.sd, s.min, s.max, s.n
        ),
    }
}

fn max_swer_criterion(records: &[RepRecord]) -> Outcome {
    let s = summarize(records, Metric::MaxSwer).unwrap();
    Outcome {
        pass: within(s.mean, 0.04597, 0.003) && s.mean < 0.05 + 0.005,
        detail: format!("mean max SWER {:.5} (target 0.04597 +/- 0.003, below 0.055)", s.mean),
    }
}

fn heterogeneous() -> Outcome {
    let spec = ScenarioSpec {
        variance: VarianceSpec::UnknownHeterogeneous(CellVariances::Uniform { low: 0.5, high: 2.0 }),
        data_replicates: 2_000,
        ..scenario(2, 500, 2_000)
    };
    let out = run_scenario(&spec).unwrap();
    let s = summarize(&out.records, Metric::TruePwer).unwrap();
    Outcome {
        pass: within(s.mean, 0.02512, 0.002),
        detail: format!(
            "mean {:.5} (target 0.02512 +/- 0.002), sd {:.5}, {} designs x 2000 data replicates, {} excluded",
            s.mean,
            s.sd,
            s.n,
            out.failures.len()
        ),
    }
}

fn minimal_prevalence() -> Outcome {
    let spec = ScenarioSpec {
        biomarkers: BiomarkerMode::UniformRandom { low: 0.0, high: 0.1 },
        ..scenario(6, 500, 60)
    };
    let study = empty_stratum_study(&spec, None).unwrap();
    let pwer = |adj| study.summarize(adj, |r| r.true_pwer).unwrap().mean;
    let max = |adj| study.summarize(adj, |r| r.max_swer).unwrap().mean;
    let (p0, p1, m0, m1) = (pwer(false), pwer(true), max(false), max(true));
    Outcome {
        pass: within(p1, 0.01403, 0.003) && within(m1, 0.0723, 0.01) && p1 < p0 && m1 < m0,
        detail: format!(
            "adjusted mean PWER {p1:.5} (target 0.01403 +/- 0.003, unadjusted {p0:.5}), adjusted mean max SWER {m1:.5} (target 0.0723 +/- 0.01, unadjusted {m0:.5}), {} qualifying replicates",
            study.records.len()
        ),
    }
}

fn random_correlation(rng: &mut ChaCha8Rng, d: usize) -> CorrelationMatrix {
    // Normalized Gram matrix of random vectors.
    let k = d + 2;
    let v: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..k).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut rows = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            rows[i][j] = if i == j {
                1.0
            } else {
                dot(&v[i], &v[j]) / (dot(&v[i], &v[i]) * dot(&v[j], &v[j])).sqrt()
            };
        }
    }
    CorrelationMatrix::from_rows(&rows).unwrap()
}

fn cholesky(sigma: &CorrelationMatrix) -> Vec<Vec<f64>> {
    let d = sigma.dim();
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][i] = (sigma.get(i, i) - s).max(0.0).sqrt();
            } else {
                l[i][j] = (sigma.get(i, j) - s) / l[j][j];
            }
        }
    }
    l
}

fn kernel_oracles() -> Outcome {
    let half = CorrelationMatrix::equicorrelated(2, 0.5).unwrap();
    let budget = IntegrationBudget::default();
    let orthant = mvn_cdf(&[0.0, 0.0], &half, &budget).unwrap().value;
    let ok_orthant = within(orthant, 1.0 / 3.0, 1e-6);

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_t = 0.0f64;
    for d in 2..=5 {
        let sigma = random_correlation(&mut rng, d);
        let b: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..2.5)).collect();
        let n = mvn_cdf(&b, &sigma, &budget).unwrap().value;
        let t = mvt_cdf(&b, &sigma, 1e6, &budget).unwrap().value;
        worst_t = worst_t.max((n - t).abs());
    }
    let ok_t = worst_t <= 1e-4;

    let draws = 200_000;
    let mut misses = 0;
    let mut worst_ratio = 0.0f64;
    for instance in 0..100 {
        let d = 2 + instance % 7;
        let sigma = random_correlation(&mut rng, d);
        let df = if instance % 2 == 0 { None } else { Some(rng.random_range(3..30) as f64) };
        let b: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..2.5)).collect();
        let est = match df {
            None => mvn_cdf(&b, &sigma, &budget).unwrap(),
            Some(nu) => mvt_cdf(&b, &sigma, nu, &budget).unwrap(),
        };
        let l = cholesky(&sigma);
        let chi = df.map(|nu| rand_distr::ChiSquared::new(nu).unwrap());
        let mut hits = 0u64;
        let mut z = vec![0.0; d];
        for _ in 0..draws {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            let scale = match (&chi, df) {
                (Some(c), Some(nu)) => (c.sample(&mut rng) / nu).sqrt(),
                _ => 1.0,
            };
            let inside = (0..d).all(|i| {
                let x: f64 = (0..=i).map(|k| l[i][k] * z[k]).sum();
                x / scale <= b[i]
            });
            hits += u64::from(inside);
        }
        let p = hits as f64 / draws as f64;
        let se = (p * (1.0 - p) / draws as f64).sqrt().max(1.0 / draws as f64);
        let allowed = 3.0 * (se + est.error);
        let ratio = (p - est.value).abs() / allowed;
        worst_ratio = worst_ratio.max(ratio);
        if ratio > 1.0 {
            misses += 1;
        }
    }
    Outcome {
        pass: ok_orthant && ok_t && misses == 0,
        detail: format!(
            "orthant {orthant:.9} (1/3 within 1e-6), max |t(1e6) - normal| {worst_t:.2e}, 100 instances: {misses} outside 3x combined error (worst ratio {worst_ratio:.2})"
        ),
    }
}

fn random_counts(rng: &mut ChaCha8Rng, m: usize, structure: TreatmentStructure, lo: u64, hi: u64) -> CountTable {
    let per = (0..enumerate_strata(m).unwrap().len()).map(|_| rng.random_range(lo..hi)).collect();
    let table = CountTable::from_strata(m, structure, per).unwrap();
    if rng.random_bool(0.5) {
        allocate(&table, &Stratified, rng)
    } else {
        allocate(&table, &RandomArrival, rng)
    }
}

fn random_regime(rng: &mut ChaCha8Rng, counts: &CountTable, kind: usize) -> VarianceRegime {
    let (m, s) = (counts.m(), counts.structure());
    match kind % 4 {
        0 => VarianceRegime::KnownHomogeneous {
            sigma2: rng.random_range(0.5..3.0),
        },
        1 => {
            let cells = counts.cells().filter(|c| c.2 > 1).count();
            VarianceRegime::UnknownHomogeneous(PooledVariance {
                sigma2: 1.0,
                s: cells,
                df: counts.total() as f64 - cells as f64,
            })
        }
        2 => VarianceRegime::KnownHeterogeneous {
            variances: CellValues::from_fn(m, s, 1.0, |_, _| rng.random_range(0.3..3.0)),
        },
        _ => VarianceRegime::UnknownHeterogeneous {
            cells: CellValues::from_fn(m, s, CellSummary::EMPTY, |j, t| CellSummary {
                n: counts.n_cell(j, t),
                mean: 0.0,
                var: rng.random_range(0.3..3.0),
            }),
        },
    }
}

fn random_design(rng: &mut ChaCha8Rng, kind: usize) -> Option<(DesignModel, PrevalenceVector)> {
    let m = rng.random_range(2..=4);
    let structure = if rng.random_bool(0.5) {
        TreatmentStructure::AllDifferent
    } else {
        TreatmentStructure::SingleTreatment
    };
    let counts = random_counts(rng, m, structure, 2, 40);
    let regime = random_regime(rng, &counts, kind);
    let model = build_model(&counts, &regime, structure).ok()?;
    let prev = pwer_core::prevalence::mle(&counts).ok()?;
    Some((model, prev))
}

fn solver_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 7);
    let opts = SolverOptions::default();
    let mut done = 0;
    let mut worst = 0.0f64;
    let mut bad = 0;
    let mut kind = 0;
    while done < 50 {
        let Some((model, prev)) = random_design(&mut rng, kind) else { continue };
        kind += 1;
        let solved = solve_equal(&prev, &model, ALPHA, &opts).unwrap();
        let r = error_rates(&solved.boundary, &prev, &model, &opts.budget).unwrap();
        let excess = (r.pwer - ALPHA).abs() - r.numerical_error;
        worst = worst.max(excess);
        if excess > 2e-6 {
            bad += 1;
        }
        done += 1;
    }
    Outcome {
        pass: bad == 0,
        detail: format!("50 designs over four regimes: {bad} off by more than 2e-6 + integration error (worst excess {worst:.2e})"),
    }
}

fn correlation_by_simulation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 8);
    let reps = 100_000;
    let mut worst = 0.0f64;
    let mut designs = 0;
    while designs < 20 {
        let m = rng.random_range(2..=4);
        let structure = if designs % 2 == 0 {
            TreatmentStructure::AllDifferent
        } else {
            TreatmentStructure::SingleTreatment
        };
        let counts = random_counts(&mut rng, m, structure, 1, 30);
        let variances = CellValues::from_fn(m, structure, 1.0, |_, _| rng.random_range(0.3..3.0));
        let Ok(model) = build_model(&counts, &VarianceRegime::KnownHeterogeneous { variances: variances.clone() }, structure)
        else {
            continue;
        };
        designs += 1;
        let cells: Vec<(StrataIndex, Treatment, u64)> = counts.cells().filter(|c| c.2 > 0).collect();
        let arm_total = |i: usize, t: Treatment| counts.population_count(i, t) as f64;
        let mut sums = vec![0.0; m];
        let mut cross = vec![0.0; m * m];
        let mut d = vec![0.0; m];
        for _ in 0..reps {
            d.iter_mut().for_each(|x| *x = 0.0);
            for &(j, t, n) in &cells {
                let z: f64 = StandardNormal.sample(&mut rng);
                let mean = (variances.get(j, t) / n as f64).sqrt() * z;
                for i in j.members() {
                    if t == structure.arm_of(i) {
                        d[i] += n as f64 / arm_total(i, t) * mean;
                    } else if t == Treatment::Control {
                        d[i] -= n as f64 / arm_total(i, t) * mean;
                    }
                }
            }
            for i in 0..m {
                sums[i] += d[i];
                for k in 0..m {
                    cross[i * m + k] += d[i] * d[k];
                }
            }
        }
        let n = reps as f64;
        for i in 0..m {
            for k in 0..i {
                let cov = |a: usize, b: usize| cross[a * m + b] / n - sums[a] * sums[b] / (n * n);
                let r = cov(i, k) / (cov(i, i) * cov(k, k)).sqrt();
                worst = worst.max((r - model.sigma().get(i, k)).abs());
            }
        }
    }
    Outcome {
        pass: worst <= 0.01,
        detail: format!("20 designs, 1e5 null datasets each: max |empirical - closed form| = {worst:.4} (limit 0.01)"),
    }
}

fn convergence(sweep: &[(u64, Vec<RepRecord>)]) -> Outcome {
    let sds: Vec<f64> = sweep
        .iter()
        .map(|(_, r)| summarize(r, Metric::TruePwer).unwrap().sd)
        .collect();
    let decreasing = sds.windows(2).all(|w| w[1] < w[0]);
    let at_200: Vec<f64> = sweep
        .iter()
        .find(|(n, _)| *n == 200)
        .map(|(_, r)| r.iter().map(|x| x.true_pwer).collect())
        .unwrap();
    let s200 = summarize_values(&at_200).unwrap();
    let worst = at_200.iter().map(|p| (p - ALPHA).abs() / ALPHA).fold(0.0, f64::max);
    let sd_text: Vec<String> = sweep
        .iter()
        .zip(&sds)
        .map(|((n, _), sd)| format!("N={n}: {sd:.5}"))
        .collect();
    Outcome {
        pass: decreasing && worst < 0.1,
        detail: format!(
            "sd {} ({}); N=200 range [{:.5}, {:.5}], largest relative deviation {:.1}% (limit 10%)",
            sd_text.join(", "),
            if decreasing { "strictly decreasing" } else { "not monotone" },
            s200.min,
            s200.max,
            100.0 * worst
        ),
    }
}

fn least_favorable() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 10);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut designs = 0;
    let mut attempt = 0u64;
    while designs < 20 {
        attempt += 1;
        let m = rng.random_range(2..=3);
        let structure = if designs % 2 == 0 {
            TreatmentStructure::AllDifferent
        } else {
            TreatmentStructure::SingleTreatment
        };
        let effects = CellValues::from_fn(m, structure, 0.0, |_, t| {
            if t == Treatment::Control || rng.random_bool(0.3) {
                0.0
            } else {
                -rng.random_range(0.0..0.4)
            }
        });
        let variance = match designs % 3 {
            0 => VarianceSpec::KnownHomogeneous { sigma2: 1.0 },
            1 => VarianceSpec::UnknownHomogeneous { sigma2: 1.0 },
            _ => VarianceSpec::UnknownHeterogeneous(CellVariances::Uniform { low: 0.5, high: 2.0 }),
        };
        let spec = ScenarioSpec {
            structure,
            variance,
            effects: Some(effects),
            data_replicates: 20_000,
            seed: SEED + attempt,
            ..scenario(m, 150, 1)
        };
        let report = lfc_check(&spec).unwrap();
        let Some(c) = report.comparisons.first() else { continue };
        designs += 1;
        violations += usize::from(c.violation);
        worst = worst.max(c.difference / c.se.max(1e-12));
    }
    Outcome {
        pass: violations == 0,
        detail: format!("20 designs: {violations} with PWER(theta) - PWER(0) > 3 SE (largest difference {worst:.2} SE)"),
    }
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
        results.push((id, name, o));
    };

    let mut sweep: Vec<(u64, Vec<RepRecord>)> = Vec::new();
    let mut excluded = Vec::new();
    for n in [25u64, 50, 100, 200, 500] {
        let (r, f) = records(3, n, 2_000);
        sweep.push((n, r));
        excluded.push(f);
    }
    let at = |n: u64| sweep.iter().position(|(k, _)| *k == n).unwrap();

    report(1, "m=3, N=500 true PWER", &mut || {
        let i = at(500);
        mean_sd_criterion(&sweep[i].1, excluded[i], 0.02501, 0.0003, 0.00042)
    });
    report(2, "m=3, N=25 true PWER", &mut || {
        let i = at(25);
        mean_sd_criterion(&sweep[i].1, excluded[i], 0.02516, 0.0006, 0.00186)
    });
    report(3, "max SWER diagnostics", &mut || max_swer_criterion(&sweep[at(500)].1));
    report(4, "heterogeneous variances", &mut heterogeneous);
    report(5, "minimal prevalence, m=6", &mut minimal_prevalence);
    report(6, "numerical kernel oracles", &mut kernel_oracles);
    report(7, "solver round trip", &mut solver_round_trip);
    report(8, "correlation vs simulation", &mut correlation_by_simulation);
    report(9, "convergence in N", &mut || convergence(&sweep));
    report(10, "least favorable configuration", &mut least_favorable);

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed in {:.1}s",
        results.len() - failed.len(),
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
